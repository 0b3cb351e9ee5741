use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, TrainError};
use crate::features::{Example, FeatureTable, Featurizer};
use crate::metrics::roc_auc;
use crate::nn::{Adam, Tape};
use crate::scalar::Scalar;
use crate::transfer::model::{BatchLabels, GradReversal, TrainConfig, TransferModel, Variant};

/// One line of the per-epoch log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_roc_auc: f64,
    pub lr: f64,
}

/// Model restored to its best validation epoch, plus the log.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: TransferModel<T>,
    pub history: Vec<EpochRow>,
    /// 1-based epoch whose parameters `model` holds.
    pub best_epoch: usize,
    pub best_val_roc_auc: f64,
}

/// Endless shuffled pass over `0..n`, reshuffled on every wrap.
#[derive(Clone, Debug)]
pub struct Sampler {
    order: Vec<usize>,
    pos: usize,
}

impl Sampler {
    pub fn new<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    /// Next `min(k, n)` indices.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Vec<usize> {
        let k = k.min(self.order.len());
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn labels_of<E: Example>(examples: &[E]) -> Result<Vec<u8>> {
    examples.iter().map(|e| e.label().ok_or_else(|| TrainError::MissingLabel(e.id().to_string()).into())).collect()
}

fn check_disjoint<E: Example>(a: &[E], b: &[E]) -> Result<()> {
    let ids: HashSet<&str> = a.iter().map(|e| e.id()).collect();
    if b.iter().any(|e| ids.contains(e.id())) {
        return Err(TrainError::OverlappingSplits.into());
    }
    Ok(())
}

/// Trains `config.variant` and returns the parameters of the earliest epoch
/// with the best validation ROC-AUC.
///
/// Each epoch runs `ceil(max(n_s, n_t) / batch_size)` steps; two-domain
/// variants draw one batch per domain per step. `NoT` ignores `source`;
/// `DT` pools source and target into one labelled set. `Dann` never reads
/// the labels of `target_train`.
pub fn train<T: Scalar, E: Example + Sync>(
    config: &TrainConfig,
    source: &[E],
    target_train: &[E],
    target_val: &[E],
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let variant = config.variant;
    if target_train.is_empty() {
        return Err(TrainError::EmptySplit("target training set").into());
    }
    if target_val.is_empty() {
        return Err(TrainError::EmptySplit("target validation set").into());
    }
    let source: &[E] = if variant.uses_source() { source } else { &[] };
    if variant.two_domain() && source.is_empty() {
        return Err(TrainError::EmptySplit("source set").into());
    }
    check_disjoint(target_train, target_val)?;

    let y_s = labels_of(source)?;
    let y_t = if variant == Variant::Dann { Vec::new() } else { labels_of(target_train)? };
    let y_val = labels_of(target_val)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = TransferModel::<T>::new(*config, &mut rng)?;
    let featurizer = &config.featurizer;
    let (src_table, tgt_table) = (FeatureTable::build(featurizer, source), FeatureTable::build(featurizer, target_train));
    let val_table = FeatureTable::build(featurizer, target_val);
    let (ns, nt) = (source.len(), target_train.len());

    let mut adam = Adam::new(&model.params, T::of(config.lr_start));
    let bs = config.batch_size;
    let steps = ns.max(nt).div_ceil(bs);
    let mut pooled = Sampler::new(ns + nt, &mut rng);
    let mut src_sampler = Sampler::new(ns, &mut rng);
    let mut tgt_sampler = Sampler::new(nt, &mut rng);

    let mut history = Vec::with_capacity(config.epochs);
    let mut best = (0, f64::NEG_INFINITY, model.params.clone());
    let (mut lab_s, mut lab_t) = (Vec::with_capacity(bs), Vec::with_capacity(bs));
    for epoch in 0..config.epochs {
        let lr = config.learning_rate(epoch);
        adam.lr = T::of(lr);
        let mut loss_sum = 0.0;
        for _ in 0..steps {
            let (idx_s, idx_t) = if variant.two_domain() {
                (src_sampler.next_batch(bs, &mut rng), tgt_sampler.next_batch(bs, &mut rng))
            } else {
                let idx = pooled.next_batch(bs, &mut rng);
                (idx.iter().filter(|&&i| i < ns).copied().collect(), idx.iter().filter(|&&i| i >= ns).map(|&i| i - ns).collect())
            };
            lab_s.clear();
            lab_s.extend(idx_s.iter().map(|&i| y_s[i]));
            lab_t.clear();
            if variant != Variant::Dann {
                lab_t.extend(idx_t.iter().map(|&i| y_t[i]));
            }
            let inputs = FeatureTable::gather::<T>(&[(&src_table, &idx_s), (&tgt_table, &idx_t)]);
            let labels = if variant.two_domain() {
                BatchLabels {
                    n_source: idx_s.len(),
                    source: &lab_s,
                    target: (variant != Variant::Dann).then_some(lab_t.as_slice()),
                }
            } else {
                lab_s.extend_from_slice(&lab_t);
                BatchLabels { n_source: 0, source: &[], target: Some(&lab_s) }
            };

            let tape = Tape::new();
            let b = model.params.bind(&tape);
            let frozen_copy;
            let frozen = if variant.uses_feature_disc() {
                frozen_copy = model.params.bind(&tape);
                &frozen_copy
            } else {
                &b
            };
            let terms = model.loss_terms(&tape, &b, frozen, &inputs, labels, GradReversal::Enabled)?;
            let grads = tape.backward(terms.objective)?;
            model.params.accumulate(&b, &grads);
            adam.step(&mut model.params);
            model.params.zero_grad();
            loss_sum += terms.value.as_f64();
        }
        let scores = model.predict_table(&val_table)?;
        let auc = roc_auc(&scores, &y_val).map_err(TrainError::from)?;
        history.push(EpochRow { epoch: epoch + 1, train_loss: loss_sum / steps as f64, val_roc_auc: auc, lr });
        if auc > best.1 {
            best = (epoch + 1, auc, model.params.clone());
        }
    }
    model.params = best.2;
    Ok(TrainOutcome { model, history, best_epoch: best.0, best_val_roc_auc: best.1 })
}

/// DANN baseline: labelled source, unlabelled target.
pub fn train_dann<T: Scalar, E: Example + Sync>(
    config: &TrainConfig,
    source: &[E],
    target_train: &[E],
    target_val: &[E],
) -> Result<TrainOutcome<T>> {
    train(&TrainConfig { variant: Variant::Dann, ..*config }, source, target_train, target_val)
}

/// Fully connected baselines without adversarial terms: `NoT` trains on the
/// target only, `DT` on the pooled source and target.
pub fn baseline_fcn<T: Scalar, E: Example + Sync>(
    featurizer: Featurizer,
    mode: Variant,
    config: &TrainConfig,
    source: &[E],
    target_train: &[E],
    target_val: &[E],
) -> Result<TrainOutcome<T>> {
    if !matches!(mode, Variant::NoT | Variant::DT) {
        return Err(TrainError::Config(format!("baseline mode must be not or dt, got {mode}")).into());
    }
    train(&TrainConfig { variant: mode, featurizer, ..*config }, source, target_train, target_val)
}
