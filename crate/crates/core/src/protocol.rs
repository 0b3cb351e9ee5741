//! Cross-validation protocols and their reports.
//!
//! Classification: the target assay is split into stratified folds;
//! rotation `i` trains on fold `i`, validates on fold `i + 1` and tests on
//! the rest, with the whole source assay available to transfer variants.
//! Ranking: plain k-fold, training on `k − 1` folds.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmpnn::{EncoderConfig, Pooling};
use crate::error::{Error, Result};
use crate::features::{Example, Featurizer};
use crate::metrics::ClassificationReport;
use crate::ranking::{ranked_dataset, train_gnncp, RankConfig, RankingReport};
use crate::transfer::{train, TrainConfig, TrainOutcome, Variant};

/// splitmix64 over `parts`, for per-job seeds.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// Shuffles each class separately and deals its members round-robin, so
/// every fold gets `⌊n_c/k⌋` or `⌈n_c/k⌉` of class `c`. Fold contents are
/// sorted.
pub fn stratified_folds<E: Example>(examples: &[E], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 3 {
        return Err(Error::Protocol(format!("need at least 3 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for class in [1u8, 0] {
        let mut members = Vec::new();
        for (i, e) in examples.iter().enumerate() {
            match e.label() {
                Some(l) if l == class => members.push(i),
                Some(_) => {}
                None => return Err(Error::Protocol(format!("record {:?} has no label", e.id()))),
            }
        }
        if members.len() < k {
            return Err(Error::Protocol(format!("class {class} has {} compounds, fewer than {k} folds", members.len())));
        }
        members.shuffle(&mut rng);
        // Continue dealing where the previous class stopped.
        let offset = folds.iter().map(Vec::len).sum::<usize>();
        for (j, i) in members.into_iter().enumerate() {
            folds[(offset + j) % k].push(i);
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Random split of `0..n` into `k` folds of sizes differing by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < 2 * k {
        return Err(Error::Protocol(format!("cannot split {n} items into {k} folds of at least 2")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (j, i) in idx.into_iter().enumerate() {
        folds[j % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rotation {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Rotation `i`: train on fold `i`, validate on fold `i + 1 (mod k)`, test
/// on the remaining folds.
pub fn rotations(folds: &[Vec<usize>]) -> Vec<Rotation> {
    let k = folds.len();
    (0..k)
        .map(|i| {
            let v = (i + 1) % k;
            let mut test: Vec<usize> = (0..k).filter(|&j| j != i && j != v).flat_map(|j| folds[j].iter().copied()).collect();
            test.sort_unstable();
            Rotation { train: folds[i].clone(), val: folds[v].clone(), test }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Dmpnn,
    Morgan,
    MorganCount,
}

impl InputKind {
    pub fn name(self) -> &'static str {
        match self {
            InputKind::Dmpnn => "dmpnn",
            InputKind::Morgan => "morgan",
            InputKind::MorganCount => "morgan_count",
        }
    }
}

/// Encoder settings searched for graph inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderGrid {
    pub d: Vec<usize>,
    pub tau: Vec<usize>,
    pub pooling: Vec<Pooling>,
    pub attn_hidden: Vec<usize>,
}

impl Default for EncoderGrid {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self { d: vec![e.d], tau: vec![e.tau], pooling: vec![Pooling::Attention], attn_hidden: vec![e.attn_hidden] }
    }
}

impl EncoderGrid {
    fn featurizers(&self, input: InputKind) -> Vec<Featurizer> {
        match input {
            InputKind::Morgan => vec![Featurizer::morgan()],
            InputKind::MorganCount => vec![Featurizer::morgan_count()],
            InputKind::Dmpnn => {
                let mut out = Vec::new();
                for &d in &self.d {
                    for &tau in &self.tau {
                        for &pooling in &self.pooling {
                            let hidden: &[usize] = if pooling == Pooling::Attention { &self.attn_hidden } else { &self.attn_hidden[..1] };
                            for &attn_hidden in hidden {
                                out.push(Featurizer::Dmpnn(EncoderConfig { d, tau, pooling, attn_hidden }));
                            }
                        }
                    }
                }
                out
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d.is_empty() || self.tau.is_empty() || self.pooling.is_empty() || self.attn_hidden.is_empty() {
            return Err(Error::Protocol("encoder grid axes must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSpec {
    pub variants: Vec<Variant>,
    pub inputs: Vec<InputKind>,
    pub encoder: EncoderGrid,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub head_hidden: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            variants: vec![Variant::TAc, Variant::TAcF, Variant::TAcC, Variant::TAcFC],
            inputs: vec![InputKind::Dmpnn],
            encoder: EncoderGrid::default(),
            alpha: vec![t.alpha],
            lambda: vec![t.lambda],
            head_hidden: vec![t.head_hidden],
            batch_size: vec![t.batch_size],
            epochs: t.epochs,
            lr_start: t.lr_start,
            lr_end: t.lr_end,
            folds: 10,
            seed: 0,
        }
    }
}

impl CvSpec {
    /// Distinct training configurations: `α` is only varied for variants
    /// with a source classification term, `λ` only for variants with a
    /// discriminator. The seed field is filled per job.
    pub fn cells(&self) -> Result<Vec<TrainConfig>> {
        self.encoder.validate()?;
        if self.variants.is_empty() || self.inputs.is_empty() || self.head_hidden.is_empty() || self.batch_size.is_empty() {
            return Err(Error::Protocol("grid axes must be nonempty".into()));
        }
        if self.alpha.is_empty() || self.lambda.is_empty() {
            return Err(Error::Protocol("alpha and lambda grids must be nonempty".into()));
        }
        let mut out = Vec::new();
        for &variant in &self.variants {
            let uses_alpha = variant.two_domain() && variant != Variant::Dann;
            let uses_lambda = variant.uses_feature_disc() || variant.uses_compound_disc();
            let alphas: &[f64] = if uses_alpha { &self.alpha } else { &[0.0] };
            let lambdas: &[f64] = if uses_lambda { &self.lambda } else { &[0.0] };
            for &input in &self.inputs {
                for featurizer in self.encoder.featurizers(input) {
                    for &alpha in alphas {
                        for &lambda in lambdas {
                            for &head_hidden in &self.head_hidden {
                                for &batch_size in &self.batch_size {
                                    let c = TrainConfig {
                                        variant,
                                        alpha,
                                        lambda,
                                        featurizer,
                                        head_hidden,
                                        epochs: self.epochs,
                                        batch_size,
                                        lr_start: self.lr_start,
                                        lr_end: self.lr_end,
                                        seed: 0,
                                    };
                                    c.validate()?;
                                    out.push(c);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Stable identifier of a grid cell, independent of its position in the grid.
pub fn cell_id<C: Serialize>(cell: &C) -> u64 {
    let json = serde_json::to_string(cell).expect("cell serializes");
    json.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvRun {
    pub cell: usize,
    pub rotation: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub val_roc_auc: f64,
    pub test: ClassificationReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvRow {
    pub config: TrainConfig,
    pub model: String,
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvReport {
    pub spec: CvSpec,
    pub source: String,
    pub target: String,
    pub rows: Vec<CvRow>,
    pub runs: Vec<CvRun>,
}

/// Mean and sample standard deviation (`n − 1`; zero for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn model_name(c: &TrainConfig) -> String {
    let input = match c.featurizer {
        Featurizer::Dmpnn(e) => e.pooling.model_name(),
        Featurizer::Morgan { .. } => "morgan",
        Featurizer::MorganCount { .. } => "morgan_count",
    };
    format!("{}-{input}", c.variant)
}

/// Trains every cell on every rotation of the target assay and evaluates
/// each model, restored to its best validation epoch, on the test folds.
pub fn run_cv<E: Example + Sync + Clone + Send>(
    spec: &CvSpec,
    source_name: &str,
    source: &[E],
    target_name: &str,
    target: &[E],
) -> Result<CvReport> {
    let cells = spec.cells()?;
    let folds = stratified_folds(target, spec.folds, spec.seed)?;
    let rots = rotations(&folds);
    let labels: Vec<u8> = target.iter().map(|e| e.label().expect("checked by the split")).collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..rots.len()).map(move |r| (c, r))).collect();
    let pick = |idx: &[usize]| -> Vec<E> { idx.iter().map(|&i| target[i].clone()).collect() };
    let runs: Vec<Result<CvRun>> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let seed = derive_seed(spec.seed, &[cell_id(&cells[c]), r as u64]);
            let config = TrainConfig { seed, ..cells[c] };
            let rot = &rots[r];
            let (tr, va, te) = (pick(&rot.train), pick(&rot.val), pick(&rot.test));
            let out = train::<f64, E>(&config, source, &tr, &va)?;
            let scores = out.model.predict(&te)?;
            let y: Vec<u8> = rot.test.iter().map(|&i| labels[i]).collect();
            let test = ClassificationReport::evaluate(&scores, &y).map_err(crate::error::TrainError::from)?;
            Ok(CvRun { cell: c, rotation: r, seed, best_epoch: out.best_epoch, val_roc_auc: out.best_val_roc_auc, test })
        })
        .collect();
    let runs: Vec<CvRun> = runs.into_iter().collect::<Result<_>>()?;
    let rows = cells
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let mine: Vec<&CvRun> = runs.iter().filter(|r| r.cell == c).collect();
            let mut mean = [0.0; 6];
            let mut std = [0.0; 6];
            for m in 0..6 {
                let xs: Vec<f64> = mine.iter().map(|r| r.test.values()[m]).collect();
                (mean[m], std[m]) = mean_std(&xs);
            }
            CvRow { config: *cfg, model: model_name(cfg), mean, std }
        })
        .collect();
    Ok(CvReport { spec: spec.clone(), source: source_name.into(), target: target_name.into(), rows, runs })
}

impl CvReport {
    /// Cell with the highest mean validation ROC-AUC; ties go to the first.
    pub fn best_cell(&self) -> usize {
        let val = |c: usize| {
            let v: Vec<f64> = self.runs.iter().filter(|r| r.cell == c).map(|r| r.val_roc_auc).collect();
            mean_std(&v).0
        };
        (0..self.rows.len()).fold(0, |best, c| if val(c) > val(best) { c } else { best })
    }
}

/// Retrains `cell` on one rotation exactly as `run_cv` does.
pub fn fit_rotation<E: Example + Sync + Clone>(
    spec: &CvSpec,
    cell: &TrainConfig,
    rotation: usize,
    source: &[E],
    target: &[E],
) -> Result<TrainOutcome<f64>> {
    let folds = stratified_folds(target, spec.folds, spec.seed)?;
    let rot = rotations(&folds).into_iter().nth(rotation).ok_or_else(|| Error::Protocol(format!("no rotation {rotation}")))?;
    let pick = |idx: &[usize]| -> Vec<E> { idx.iter().map(|&i| target[i].clone()).collect() };
    let seed = derive_seed(spec.seed, &[cell_id(cell), rotation as u64]);
    train::<f64, E>(&TrainConfig { seed, ..*cell }, source, &pick(&rot.train), &pick(&rot.val))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl CvReport {
    /// One row per cell: configuration, then mean and std of each metric.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,target,model,variant,input,d,tau,pooling,attn_hidden,alpha,lambda,head_hidden,batch_size");
        for name in ClassificationReport::NAMES {
            write!(s, ",{name}_mean,{name}_std").unwrap();
        }
        s.push('\n');
        for row in &self.rows {
            let c = &row.config;
            let enc = c.featurizer.encoder_config();
            let uses_alpha = c.variant.two_domain() && c.variant != Variant::Dann;
            let uses_lambda = c.variant.uses_feature_disc() || c.variant.uses_compound_disc();
            write!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.source,
                self.target,
                row.model,
                c.variant,
                c.featurizer.name(),
                opt(enc.map(|e| e.d as f64)),
                opt(enc.map(|e| e.tau as f64)),
                enc.map(|e| format!("{:?}", e.pooling).to_lowercase()).unwrap_or_default(),
                opt(enc.filter(|e| e.pooling == Pooling::Attention).map(|e| e.attn_hidden as f64)),
                opt(uses_alpha.then_some(c.alpha)),
                opt(uses_lambda.then_some(c.lambda)),
                c.head_hidden,
                c.batch_size,
            )
            .unwrap();
            for m in 0..6 {
                write!(s, ",{},{}", row.mean[m], row.std[m]).unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Per-rotation test metrics, for plotting.
    pub fn runs_csv(&self) -> String {
        let mut s = String::from("model,cell,rotation,seed,best_epoch,val_roc_auc");
        for name in ClassificationReport::NAMES {
            write!(s, ",{name}").unwrap();
        }
        s.push('\n');
        for r in &self.runs {
            write!(s, "{},{},{},{},{},{}", self.rows[r.cell].model, r.cell, r.rotation, r.seed, r.best_epoch, r.val_roc_auc).unwrap();
            for v in r.test.values() {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSpec {
    pub inputs: Vec<InputKind>,
    pub encoder: EncoderGrid,
    pub lr: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub epochs: usize,
    pub l2: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for RankSpec {
    fn default() -> Self {
        let r = RankConfig::default();
        Self {
            inputs: vec![InputKind::Dmpnn],
            encoder: EncoderGrid::default(),
            lr: vec![r.lr],
            batch_size: vec![r.batch_size],
            epochs: r.epochs,
            l2: r.l2,
            folds: 5,
            seed: 0,
        }
    }
}

impl RankSpec {
    pub fn cells(&self, input: InputKind) -> Result<Vec<RankConfig>> {
        self.encoder.validate()?;
        if self.lr.is_empty() || self.batch_size.is_empty() {
            return Err(Error::Protocol("lr and batch_size grids must be nonempty".into()));
        }
        let mut out = Vec::new();
        for featurizer in self.encoder.featurizers(input) {
            for &lr in &self.lr {
                for &batch_size in &self.batch_size {
                    let c = RankConfig { featurizer, epochs: self.epochs, batch_size, lr, l2: self.l2, seed: 0 };
                    c.validate()?;
                    out.push(c);
                }
            }
        }
        Ok(out)
    }
}

/// Per-metric values; `None` where a cutoff exceeded every test fold.
pub type MetricRow = Vec<(String, Option<f64>)>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankAssayRow {
    pub assay: String,
    pub input: InputKind,
    pub cells: usize,
    /// Best value over grid cells on each test fold, averaged over folds.
    pub optimal: MetricRow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub spec: RankSpec,
    pub assays: Vec<RankAssayRow>,
    /// Per input, the assay rows averaged.
    pub overall: Vec<(InputKind, MetricRow)>,
}

fn mean_present(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// k-fold ranking evaluation of every input kind over every assay.
pub fn run_rank_cv<E: Example + Sync + Clone + Send>(spec: &RankSpec, assays: &[(String, Vec<E>)]) -> Result<RankReport> {
    let mut rows = Vec::new();
    for (a, (name, records)) in assays.iter().enumerate() {
        ranked_dataset(records)?;
        let folds = kfold(records.len(), spec.folds, derive_seed(spec.seed, &[a as u64]))?;
        for &input in &spec.inputs {
            let cells = spec.cells(input)?;
            let jobs: Vec<(usize, usize)> = (0..folds.len()).flat_map(|f| (0..cells.len()).map(move |c| (f, c))).collect();
            let reports: Vec<Result<RankingReport>> = jobs
                .par_iter()
                .map(|&(f, c)| {
                    let train: Vec<E> =
                        (0..folds.len()).filter(|&g| g != f).flat_map(|g| folds[g].iter().map(|&i| records[i].clone())).collect();
                    let test: Vec<E> = folds[f].iter().map(|&i| records[i].clone()).collect();
                    let seed = derive_seed(spec.seed, &[a as u64, cell_id(&cells[c]), f as u64]);
                    let out = train_gnncp::<f64, E>(&RankConfig { seed, ..cells[c] }, &train)?;
                    let scores = out.model.score_examples(&test)?;
                    RankingReport::evaluate(&ranked_dataset(&test)?, &scores)
                })
                .collect();
            let reports: Vec<RankingReport> = reports.into_iter().collect::<Result<_>>()?;
            let names: Vec<String> = reports[0].flatten().into_iter().map(|(k, _)| k).collect();
            let per_fold: Vec<MetricRow> = (0..folds.len())
                .map(|f| {
                    let mine: Vec<MetricRow> = reports[f * cells.len()..(f + 1) * cells.len()].iter().map(|r| r.flatten()).collect();
                    names
                        .iter()
                        .enumerate()
                        .map(|(m, k)| (k.clone(), mine.iter().filter_map(|r| r[m].1).reduce(f64::max)))
                        .collect()
                })
                .collect();
            let optimal = names.iter().enumerate().map(|(m, k)| (k.clone(), mean_present(per_fold.iter().map(|r| r[m].1)))).collect();
            rows.push(RankAssayRow { assay: name.clone(), input, cells: cells.len(), optimal });
        }
    }
    let overall = spec
        .inputs
        .iter()
        .map(|&input| {
            let mine: Vec<&RankAssayRow> = rows.iter().filter(|r| r.input == input).collect();
            let names: Vec<String> = mine.first().map(|r| r.optimal.iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
            let vals = names.iter().enumerate().map(|(m, k)| (k.clone(), mean_present(mine.iter().map(|r| r.optimal[m].1)))).collect();
            (input, vals)
        })
        .collect();
    Ok(RankReport { spec: spec.clone(), assays: rows, overall })
}

impl RankReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("assay,input");
        if let Some(r) = self.assays.first() {
            for (k, _) in &r.optimal {
                write!(s, ",{k}").unwrap();
            }
        }
        s.push('\n');
        let mut line = |assay: &str, input: InputKind, vals: &MetricRow| {
            write!(s, "{assay},{}", input.name()).unwrap();
            for (_, v) in vals {
                write!(s, ",{}", opt(*v)).unwrap();
            }
            s.push('\n');
        };
        for r in &self.assays {
            line(&r.assay, r.input, &r.optimal);
        }
        for (input, vals) in &self.overall {
            line("all", *input, vals);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
