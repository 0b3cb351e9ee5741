//! Analytic-versus-numeric gradient checks on small random instances.
//!
//! Total objectives follow the adversarial contract: encoder and
//! classifier gradients are checked against differences of the reported
//! value `L_c − λ(L_l + L_g)`, discriminator gradients against differences
//! of `λ(L_l + L_g)`, which the discriminators descend.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dmpnn::{EncoderConfig, GraphBatch, Pooling};
use crate::error::{Error, Result};
use crate::features::{Featurizer, Inputs};
use crate::molgraph::{random_graph, MolecularGraph};
use crate::nn::fd::{compare, numeric_gradient, FD_STEP};
use crate::nn::{ParamSet, Tape};
use crate::ranking::{ordered_pairs, RankConfig, RankModel};
use crate::transfer::{
    classification_loss, compound_disc_loss, entropy, feature_disc_loss, scale, BatchLabels, GradReversal, TrainConfig,
    TransferModel, Variant,
};

pub const TOLERANCE: f64 = 1e-4;
/// Instances with a ReLU input (or clamped-log input) closer than this to
/// its kink are redrawn: central differences straddling a kink do not
/// estimate the derivative.
pub const KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub d: usize,
    pub tau: usize,
    pub max_atoms: usize,
    pub per_domain: usize,
    pub head_hidden: usize,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { seed: 0, d: 6, tau: 2, max_atoms: 5, per_domain: 3, head_hidden: 5, alpha: 0.7, lambda: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckEntry {
    pub loss: String,
    pub params: String,
    pub max_rel_error: f64,
    pub coordinates: usize,
    pub worst: String,
}

impl GradcheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

/// A small two-domain batch with a model built for it.
pub struct Instance {
    pub model: TransferModel<f64>,
    pub graphs: Vec<MolecularGraph>,
    pub n_source: usize,
    pub y_s: Vec<u8>,
    pub y_t: Vec<u8>,
}

impl Instance {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, cfg: &GradcheckConfig, variant: Variant, pooling: Pooling) -> Result<Self> {
        let enc = EncoderConfig { d: cfg.d, tau: cfg.tau, pooling, attn_hidden: cfg.head_hidden };
        let tc = TrainConfig {
            variant,
            alpha: cfg.alpha,
            lambda: cfg.lambda,
            featurizer: Featurizer::Dmpnn(enc),
            head_hidden: cfg.head_hidden,
            ..TrainConfig::default()
        };
        let mut model = TransferModel::new(tc, rng)?;
        // Zero-initialized biases put a hidden unit exactly on its kink
        // whenever its input row is zero.
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            if model.params.param(id).name.ends_with(".bias") {
                model.params.value_mut(id).data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
            }
        }
        let n = cfg.per_domain;
        let graphs = (0..2 * n).map(|_| random_graph(rng, cfg.max_atoms)).collect();
        let mut labels = |k: usize| -> Vec<u8> { (0..k).map(|i| if i == 0 { 1 } else { rng.gen_range(0..=1) }).collect() };
        let y_s = labels(n);
        let y_t = labels(n);
        Ok(Self { model, graphs, n_source: n, y_s, y_t })
    }

    pub fn inputs(&self) -> Inputs<f64> {
        let refs: Vec<&MolecularGraph> = self.graphs.iter().collect();
        Inputs::Graphs(GraphBatch::new(&refs))
    }

    fn labels(&self) -> BatchLabels<'_> {
        let target = (self.model.config.variant != Variant::Dann).then_some(self.y_t.as_slice());
        BatchLabels { n_source: self.n_source, source: &self.y_s, target }
    }

    /// Smallest kink distance seen by the full forward pass.
    fn margin(&self) -> Result<f64> {
        let tape = Tape::new();
        let b = self.model.params.bind(&tape);
        let inputs = self.inputs();
        self.model.loss_terms(&tape, &b, &b, &inputs, self.labels(), GradReversal::Enabled)?;
        if self.model.config.variant.uses_feature_disc() || self.model.config.variant.uses_compound_disc() {
            self.model.discriminator_objective(&tape, &b, &inputs, self.n_source, GradReversal::Enabled)?;
        }
        Ok(tape.kink_margin().unwrap_or(f64::INFINITY))
    }

    /// Reported objective value at `params`.
    pub fn value(&self, params: &ParamSet<f64>) -> f64 {
        let tape = Tape::new();
        let b = params.bind(&tape);
        let m = self.with_params(params);
        m.loss_terms(&tape, &b, &b, &self.inputs(), self.labels(), GradReversal::Enabled).expect("valid instance").value
    }

    /// `λ(L_l + L_g)` at `params`.
    pub fn disc_value(&self, params: &ParamSet<f64>) -> f64 {
        let tape = Tape::new();
        let b = params.bind(&tape);
        let m = self.with_params(params);
        m.discriminator_objective(&tape, &b, &self.inputs(), self.n_source, GradReversal::Bypassed)
            .expect("valid instance")
            .item()
    }

    fn with_params(&self, params: &ParamSet<f64>) -> TransferModel<f64> {
        TransferModel { params: params.clone(), ..self.model.clone() }
    }

    /// Parameters with the gradient of one training step's objective
    /// accumulated.
    pub fn analytic(&self, grl: GradReversal) -> Result<ParamSet<f64>> {
        let mut params = self.model.params.clone();
        let tape = Tape::new();
        let b = params.bind(&tape);
        let frozen = params.bind(&tape);
        let terms = self.model.loss_terms(&tape, &b, &frozen, &self.inputs(), self.labels(), grl)?;
        let grads = tape.backward(terms.objective)?;
        params.accumulate(&b, &grads);
        Ok(params)
    }
}

fn draw_smooth<R: Rng + ?Sized>(rng: &mut R, cfg: &GradcheckConfig, variant: Variant, pooling: Pooling) -> Result<Instance> {
    for _ in 0..MAX_DRAWS {
        let inst = Instance::draw(rng, cfg, variant, pooling)?;
        if inst.margin()? >= KINK_MARGIN {
            return Ok(inst);
        }
    }
    Err(Error::Protocol(format!("no instance clear of activation kinks in {MAX_DRAWS} draws")))
}

fn entry(loss: &str, group: &str, params: &ParamSet<f64>, numeric: &[crate::Tensor<f64>], prefixes: &[&str]) -> GradcheckEntry {
    let c = compare(params, numeric, |name| prefixes.iter().any(|p| name.starts_with(p)));
    GradcheckEntry { loss: loss.into(), params: group.into(), max_rel_error: c.max_rel_error, coordinates: c.coordinates, worst: c.worst }
}

const ENCODER_AND_CLASSIFIER: [&str; 2] = ["encoder.", "classifier."];
const DISCRIMINATORS: [&str; 2] = ["feature_disc.", "compound_disc."];

/// Total objective of `variant` under the contract, with the reversal
/// layer set by `grl` (`Bypassed` must fail for adversarial variants).
pub fn check_total_with<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &GradcheckConfig,
    variant: Variant,
    pooling: Pooling,
    grl: GradReversal,
) -> Result<Vec<GradcheckEntry>> {
    let inst = draw_smooth(rng, cfg, variant, pooling)?;
    let analytic = inst.analytic(grl)?;
    let name = format!("total[{}]", variant.name());
    let value_fd = numeric_gradient(&inst.model.params, |p| inst.value(p), FD_STEP);
    let mut out = vec![entry(&name, "encoder+classifier", &analytic, &value_fd, &ENCODER_AND_CLASSIFIER)];
    if variant.uses_feature_disc() || variant.uses_compound_disc() {
        let disc_fd = numeric_gradient(&inst.model.params, |p| inst.disc_value(p), FD_STEP);
        out.push(entry(&name, "discriminators", &analytic, &disc_fd, &DISCRIMINATORS));
    }
    Ok(out)
}

pub fn check_total<R: Rng + ?Sized>(rng: &mut R, cfg: &GradcheckConfig, variant: Variant, pooling: Pooling) -> Result<Vec<GradcheckEntry>> {
    check_total_with(rng, cfg, variant, pooling, GradReversal::Enabled)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SingleLoss {
    Classification,
    FeatureDisc,
    CompoundDisc,
}

/// One loss term as a plain function of every parameter (no reversal,
/// no frozen copy), on a TAc-fc model.
pub fn check_single<R: Rng + ?Sized>(rng: &mut R, cfg: &GradcheckConfig, which: SingleLoss, pooling: Pooling) -> Result<GradcheckEntry> {
    let inst = draw_smooth(rng, cfg, Variant::TAcFC, pooling)?;
    let ns = inst.n_source;
    let eval = |params: &ParamSet<f64>, backward: bool| -> Result<(f64, Option<ParamSet<f64>>)> {
        let m = inst.with_params(params);
        let tape = Tape::new();
        let b = params.bind(&tape);
        let inputs = inst.inputs();
        let n = inputs.len();
        let r = m.embed(&tape, &b, &inputs)?;
        let p = m.feature_probs(&b, r)?;
        let z = scale(r, entropy(p)?)?;
        let loss = match which {
            SingleLoss::Classification => {
                let yhat = m.class_probs(&b, z)?;
                classification_loss(yhat.rows(0..ns)?, &inst.y_s, yhat.rows(ns..n)?, &inst.y_t, cfg.alpha)?
            }
            SingleLoss::FeatureDisc => feature_disc_loss(p.rows(0..ns)?, p.rows(ns..n)?)?,
            SingleLoss::CompoundDisc => {
                let q = m.compound_probs(&b, z)?;
                compound_disc_loss(q.rows(0..ns)?, q.rows(ns..n)?)?
            }
        };
        if !backward {
            return Ok((loss.item(), None));
        }
        let grads = tape.backward(loss)?;
        let mut with_grad = params.clone();
        with_grad.accumulate(&b, &grads);
        Ok((loss.item(), Some(with_grad)))
    };
    let analytic = eval(&inst.model.params, true)?.1.expect("gradients requested");
    let numeric = numeric_gradient(&inst.model.params, |p| eval(p, false).expect("valid instance").0, FD_STEP);
    let name = match which {
        SingleLoss::Classification => "L_c",
        SingleLoss::FeatureDisc => "L_l",
        SingleLoss::CompoundDisc => "L_g",
    };
    Ok(entry(name, "all", &analytic, &numeric, &[""]))
}

/// Outcome of comparing the reversed and non-reversed discriminator paths.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrlReport {
    pub compared: usize,
    pub mismatches: usize,
    pub nonzero: usize,
}

impl GrlReport {
    pub fn holds(&self) -> bool {
        self.mismatches == 0 && self.nonzero > 0
    }
}

/// Encoder gradients of `λ(L_l + L_g)` through the reversal layer versus
/// without it: every element must be the exact negation.
pub fn grl_contract<R: Rng + ?Sized>(rng: &mut R, cfg: &GradcheckConfig, variant: Variant, pooling: Pooling) -> Result<GrlReport> {
    let inst = Instance::draw(rng, cfg, variant, pooling)?;
    let grads = |grl: GradReversal| -> Result<ParamSet<f64>> {
        let mut params = inst.model.params.clone();
        let tape = Tape::new();
        let b = params.bind(&tape);
        let l = inst.model.discriminator_objective(&tape, &b, &inst.inputs(), inst.n_source, grl)?;
        let g = tape.backward(l)?;
        params.accumulate(&b, &g);
        Ok(params)
    };
    let (rev, plain) = (grads(GradReversal::Enabled)?, grads(GradReversal::Bypassed)?);
    let mut report = GrlReport { compared: 0, mismatches: 0, nonzero: 0 };
    for (a, b) in rev.iter().zip(plain.iter()) {
        if !a.name.starts_with("encoder.") {
            continue;
        }
        for (&x, &y) in a.grad.data().iter().zip(b.grad.data()) {
            report.compared += 1;
            if y != 0.0 {
                report.nonzero += 1;
            }
            if x.to_bits() != (-y).to_bits() && !(x == 0.0 && y == 0.0) {
                report.mismatches += 1;
            }
        }
    }
    Ok(report)
}

/// Encoder embeddings against a fixed random probe, for both poolings.
pub fn check_encoder<R: Rng + ?Sized>(rng: &mut R, cfg: &GradcheckConfig, pooling: Pooling) -> Result<GradcheckEntry> {
    let inst = draw_smooth(rng, cfg, Variant::TAc, pooling)?;
    let probe: Vec<f64> = (0..inst.graphs.len() * cfg.d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let probe = crate::Tensor::from_vec(inst.graphs.len(), cfg.d, probe);
    let eval = |params: &ParamSet<f64>| -> (f64, ParamSet<f64>) {
        let tape = Tape::new();
        let b = params.bind(&tape);
        let r = inst.model.embed(&tape, &b, &inst.inputs()).expect("valid instance");
        let l = r.mul(tape.constant(probe.clone())).expect("shapes agree").sum();
        let g = tape.backward(l).expect("scalar");
        let mut p = params.clone();
        p.accumulate(&b, &g);
        (l.item(), p)
    };
    let analytic = eval(&inst.model.params).1;
    let numeric = numeric_gradient(&inst.model.params, |p| eval(p).0, FD_STEP);
    Ok(entry(&format!("encode[{}]", pooling.model_name()), "encoder", &analytic, &numeric, &["encoder."]))
}

/// `L_rank + l2·‖Θ‖²` on distinct random activities, `l2 = 0.1` so the
/// penalty term contributes visibly.
pub fn check_rank<R: Rng + ?Sized>(rng: &mut R, cfg: &GradcheckConfig, pooling: Pooling) -> Result<GradcheckEntry> {
    let enc = EncoderConfig { d: cfg.d, tau: cfg.tau, pooling, attn_hidden: cfg.head_hidden };
    let rc = RankConfig { featurizer: Featurizer::Dmpnn(enc), l2: 0.1, ..RankConfig::default() };
    for _ in 0..MAX_DRAWS {
        let mut model = RankModel::<f64>::new(rc, rng)?;
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            if model.params.param(id).name.ends_with(".bias") {
                model.params.value_mut(id).data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
            }
        }
        let n = 2 * cfg.per_domain;
        let graphs: Vec<MolecularGraph> = (0..n).map(|_| random_graph(rng, cfg.max_atoms)).collect();
        let refs: Vec<&MolecularGraph> = graphs.iter().collect();
        let inputs = Inputs::Graphs(GraphBatch::new(&refs));
        let acts: Vec<f64> = (0..n).map(|i| i as f64 + rng.gen_range(0.0..0.5)).collect();
        let pairs = ordered_pairs(&acts);
        let eval = |params: &ParamSet<f64>, backward: bool| -> Result<(f64, f64, Option<ParamSet<f64>>)> {
            let m = RankModel { params: params.clone(), ..model.clone() };
            let tape = Tape::new();
            let b = params.bind(&tape);
            let l = m.objective(&tape, &b, &inputs, &pairs)?;
            let margin = tape.kink_margin().unwrap_or(f64::INFINITY);
            if !backward {
                return Ok((l.item(), margin, None));
            }
            let g = tape.backward(l)?;
            let mut p = params.clone();
            p.accumulate(&b, &g);
            Ok((l.item(), margin, Some(p)))
        };
        let (_, margin, analytic) = eval(&model.params, true)?;
        if margin < KINK_MARGIN {
            continue;
        }
        let numeric = numeric_gradient(&model.params, |p| eval(p, false).expect("valid instance").0, FD_STEP);
        model.params = analytic.expect("gradients requested");
        return Ok(entry(&format!("L_rank[{}]", pooling.model_name()), "all", &model.params, &numeric, &[""]));
    }
    Err(Error::Protocol(format!("no instance clear of activation kinks in {MAX_DRAWS} draws")))
}

/// Every check: encoder, the three loss terms, the total objective of the
/// four TAc variants and DANN, and the ranking loss, for both poolings.
pub fn run_suite(cfg: &GradcheckConfig) -> Result<Vec<GradcheckEntry>> {
    let mut out = run_transfer_suite(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    for pooling in [Pooling::Mean, Pooling::Attention] {
        out.push(check_rank(&mut rng, cfg, pooling)?);
    }
    Ok(out)
}

/// Every transfer-side check: encoder, the three loss terms, the total
/// objective of the four TAc variants and DANN, for both poolings.
pub fn run_transfer_suite(cfg: &GradcheckConfig) -> Result<Vec<GradcheckEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for pooling in [Pooling::Mean, Pooling::Attention] {
        out.push(check_encoder(&mut rng, cfg, pooling)?);
        for which in [SingleLoss::Classification, SingleLoss::FeatureDisc, SingleLoss::CompoundDisc] {
            let mut e = check_single(&mut rng, cfg, which, pooling)?;
            e.loss = format!("{}[{}]", e.loss, pooling.model_name());
            out.push(e);
        }
        for variant in [Variant::TAc, Variant::TAcF, Variant::TAcC, Variant::TAcFC, Variant::Dann] {
            for mut e in check_total(&mut rng, cfg, variant, pooling)? {
                e.loss = format!("{}[{}]", e.loss, pooling.model_name());
                out.push(e);
            }
        }
    }
    Ok(out)
}
