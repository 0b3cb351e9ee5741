//! Compound prioritization: a linear score `φ = wᵀr` over compound
//! representations, trained end to end on a pairwise logistic loss.

use std::io::{Read, Write};
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Result, TrainError};
use crate::features::{Embedder, Example, FeatureTable, Featurizer, Inputs};
use crate::metrics::{concordance_index, ndcg_at, recall_at, RankedDataset, TopK};
use crate::molgraph::{ATOM_WIDTH, BOND_WIDTH};
use crate::nn::checkpoint::{load_into, read_checkpoint, write_checkpoint};
use crate::nn::{Adam, Binding, Dense, ParamSet, Tape, Var};
use crate::scalar::Scalar;

/// `wᵀr`.
pub fn score<T: Scalar>(r: &[T], w: &[T]) -> T {
    r.iter().zip(w).map(|(&a, &b)| a * b).sum()
}

/// Mean over `pairs` of `ln(1 + exp(−(φᵢ − φⱼ)))`, where each `(i, j)` has
/// `i` truly more active than `j`. `scores` is `n × 1`.
pub fn rank_loss<'t, T: Scalar>(scores: Var<'t, T>, pairs: &[(usize, usize)]) -> Result<Var<'t, T>> {
    if pairs.is_empty() {
        return Err(TrainError::NoPairs.into());
    }
    let (hi, lo): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    let margin = scores.select_rows(Rc::new(hi))?.sub(scores.select_rows(Rc::new(lo))?)?;
    Ok(margin.neg().softplus().mean())
}

/// Truth-ordered pairs within `activities`; equal activities form no pair.
pub fn ordered_pairs(activities: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, &a) in activities.iter().enumerate() {
        for (j, &b) in activities.iter().enumerate() {
            if a > b {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankConfig {
    pub featurizer: Featurizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Weight of the squared L2 norm of every trainable parameter.
    pub l2: f64,
    pub seed: u64,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self { featurizer: Featurizer::default(), epochs: 50, batch_size: 128, lr: 1e-3, l2: 1e-6, seed: 0 }
    }
}

impl RankConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.into()).into());
        if self.epochs == 0 || self.batch_size < 2 {
            return bad("epochs must be positive and batch_size at least 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be finite and >= 0");
        }
        if let Some(c) = self.featurizer.encoder_config() {
            if c.d == 0 || c.attn_hidden == 0 {
                return bad("encoder width must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RankHeader {
    kind: String,
    config: RankConfig,
    atom_width: usize,
    bond_width: usize,
}

const RANK_KIND: &str = "ranking";

#[derive(Clone, Debug)]
pub struct RankModel<T> {
    pub config: RankConfig,
    pub params: ParamSet<T>,
    pub embedder: Embedder,
    /// `w` as a bias-free `d → 1` layer.
    pub scorer: Dense,
}

impl<T: Scalar> RankModel<T> {
    pub fn new<R: rand::Rng + ?Sized>(config: RankConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let embedder = Embedder::new(&mut params, config.featurizer, rng);
        let scorer = Dense::new(&mut params, "scorer", embedder.width(), 1, false, rng);
        Ok(Self { config, params, embedder, scorer })
    }

    /// `n × 1` scores.
    pub fn scores<'t>(&self, tape: &'t Tape<T>, b: &Binding<'t, T>, inputs: &Inputs<T>) -> Result<Var<'t, T>> {
        let r = self.embedder.embed(tape, b, inputs)?;
        Ok(self.scorer.forward(b, r)?)
    }

    /// `L_rank + l2·‖Θ‖²` over the batch.
    pub fn objective<'t>(
        &self,
        tape: &'t Tape<T>,
        b: &Binding<'t, T>,
        inputs: &Inputs<T>,
        pairs: &[(usize, usize)],
    ) -> Result<Var<'t, T>> {
        let loss = rank_loss(self.scores(tape, b, inputs)?, pairs)?;
        if self.config.l2 == 0.0 {
            return Ok(loss);
        }
        let mut penalty: Option<Var<'t, T>> = None;
        for &v in b.vars() {
            let s = v.sum_squares();
            penalty = Some(match penalty {
                Some(p) => p.add(s)?,
                None => s,
            });
        }
        match penalty {
            Some(p) => Ok(loss.add(p.scale(T::of(self.config.l2)))?),
            None => Ok(loss),
        }
    }

    pub fn score_table(&self, table: &FeatureTable<'_>) -> Result<Vec<T>> {
        const CHUNK: usize = 256;
        let all: Vec<usize> = (0..table.len()).collect();
        let mut out = Vec::with_capacity(table.len());
        for idx in all.chunks(CHUNK) {
            let tape = Tape::new();
            let b = self.params.bind(&tape);
            let s = self.scores(&tape, &b, &FeatureTable::gather::<T>(&[(table, idx)]))?;
            out.extend_from_slice(s.value().data());
        }
        Ok(out)
    }

    pub fn score_examples<E: Example + Sync>(&self, examples: &[E]) -> Result<Vec<T>> {
        self.score_table(&FeatureTable::build(&self.config.featurizer, examples))
    }

    pub fn save(&self, w: impl Write) -> Result<()> {
        let header = RankHeader { kind: RANK_KIND.into(), config: self.config, atom_width: ATOM_WIDTH, bond_width: BOND_WIDTH };
        write_checkpoint(w, &header, &self.params)?;
        Ok(())
    }

    pub fn load(r: impl Read) -> Result<Self> {
        let raw = read_checkpoint::<RankHeader>(r)?;
        let h = raw.model;
        if h.kind != RANK_KIND {
            return Err(CheckpointError::Format(format!("expected a {RANK_KIND} checkpoint, found {:?}", h.kind)).into());
        }
        if (h.atom_width, h.bond_width) != (ATOM_WIDTH, BOND_WIDTH) {
            return Err(TrainError::FeatureWidth { expected: h.atom_width, found: ATOM_WIDTH }.into());
        }
        let mut model = Self::new(h.config, &mut ChaCha8Rng::seed_from_u64(0))?;
        load_into(&mut model.params, &raw.arrays)?;
        Ok(model)
    }
}

fn activities_of<E: Example>(examples: &[E]) -> Result<Vec<f64>> {
    examples.iter().map(|e| e.activity().ok_or_else(|| TrainError::MissingActivity(e.id().to_string()).into())).collect()
}

/// Ground truth of `examples` for the ranking metrics.
pub fn ranked_dataset<E: Example>(examples: &[E]) -> Result<RankedDataset> {
    Ok(RankedDataset::new(activities_of(examples)?).map_err(TrainError::from)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankEpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_ci: f64,
}

#[derive(Clone, Debug)]
pub struct RankOutcome<T> {
    pub model: RankModel<T>,
    pub history: Vec<RankEpochRow>,
}

/// Trains encoder and `w` jointly for `config.epochs` epochs. Each epoch
/// shuffles the data into batches of `batch_size`; a batch contributes every
/// truth-ordered pair inside it. Returns the final-epoch model.
pub fn train_gnncp<T: Scalar, E: Example + Sync>(config: &RankConfig, train: &[E]) -> Result<RankOutcome<T>> {
    config.validate()?;
    if train.len() < 2 {
        return Err(TrainError::EmptySplit("ranking training set").into());
    }
    let truth = ranked_dataset(train)?;
    let acts = truth.activities();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = RankModel::<T>::new(*config, &mut rng)?;
    let table = FeatureTable::build(&config.featurizer, train);
    let mut adam = Adam::new(&model.params, T::of(config.lr));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for idx in order.chunks(config.batch_size) {
            let batch_acts: Vec<f64> = idx.iter().map(|&i| acts[i]).collect();
            let pairs = ordered_pairs(&batch_acts);
            if pairs.is_empty() {
                continue;
            }
            let inputs = FeatureTable::gather::<T>(&[(&table, idx)]);
            let tape = Tape::new();
            let b = model.params.bind(&tape);
            let obj = model.objective(&tape, &b, &inputs, &pairs)?;
            let grads = tape.backward(obj)?;
            model.params.accumulate(&b, &grads);
            adam.step(&mut model.params);
            model.params.zero_grad();
            loss_sum += obj.item().as_f64();
            batches += 1;
        }
        let scores = model.score_table(&table)?;
        let ci = concordance_index(&truth, &scores).map_err(TrainError::from)?;
        history.push(RankEpochRow { epoch: epoch + 1, train_loss: loss_sum / batches.max(1) as f64, train_ci: ci });
    }
    Ok(RankOutcome { model, history })
}

/// Ranking metrics at the reported cutoffs. A cutoff larger than the
/// evaluated set is `None`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankingReport {
    pub ci: f64,
    pub recall: Vec<(String, Option<f64>)>,
    pub ndcg: Vec<(String, Option<f64>)>,
}

pub const CUTOFFS: [TopK; 5] = [TopK::Count(3), TopK::Count(5), TopK::Count(10), TopK::Percent(5.0), TopK::Percent(10.0)];

impl RankingReport {
    pub fn evaluate<T: Scalar>(truth: &RankedDataset, scores: &[T]) -> Result<Self> {
        let ci = concordance_index(truth, scores).map_err(TrainError::from)?;
        let mut recall = Vec::new();
        let mut ndcg = Vec::new();
        for k in CUTOFFS {
            recall.push((k.label(), recall_at(truth, scores, k).ok()));
            ndcg.push((k.label(), ndcg_at(truth, scores, k).ok()));
        }
        Ok(Self { ci, recall, ndcg })
    }

    /// `(name, value)` for every metric in a fixed order.
    pub fn flatten(&self) -> Vec<(String, Option<f64>)> {
        let mut out = vec![("ci".to_string(), Some(self.ci))];
        out.extend(self.recall.iter().map(|(k, v)| (format!("recall@{k}"), *v)));
        out.extend(self.ndcg.iter().map(|(k, v)| (format!("ndcg@{k}"), *v)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn zero_margins_give_ln2() {
        let tape = Tape::<f64>::new();
        let s = tape.constant(Tensor::column_vector(vec![0.3, 0.3, 0.3]));
        let l = rank_loss(s, &[(0, 1), (1, 2), (0, 2)]).unwrap().item();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn wide_margin() {
        let tape = Tape::<f64>::new();
        let s = tape.constant(Tensor::column_vector(vec![10.0, 0.0]));
        let l = rank_loss(s, &[(0, 1)]).unwrap().item();
        assert!((l - (-10f64).exp().ln_1p()).abs() < 1e-18);
        assert!((l - 4.54e-5).abs() < 1e-7);
    }

    #[test]
    fn loss_decreases_with_margin() {
        let tape = Tape::<f64>::new();
        let mut prev = f64::INFINITY;
        for m in [-3.0, -1.0, 0.0, 0.5, 2.0, 7.0] {
            let l = rank_loss(tape.constant(Tensor::column_vector(vec![m, 0.0])), &[(0, 1)]).unwrap().item();
            assert!(l < prev && l >= 0.0);
            prev = l;
        }
    }

    #[test]
    fn empty_pairs_rejected() {
        let tape = Tape::<f64>::new();
        assert!(rank_loss(tape.constant(Tensor::column_vector(vec![1.0])), &[]).is_err());
    }

    #[test]
    fn score_is_dot() {
        assert_eq!(score(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(score(&[1.0, 2.0, 3.0], &[0.0, 1.0, 0.0]), 2.0);
        assert_eq!(score(&[1.0, -2.0], &[0.5, 0.25]), 0.0);
    }

    #[test]
    fn pairs_follow_activity() {
        assert_eq!(ordered_pairs(&[1.0, 3.0, 2.0]), vec![(1, 0), (1, 2), (2, 0)]);
        assert!(ordered_pairs(&[1.0, 1.0]).is_empty());
    }
}
