use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Result, TrainError};
use crate::features::{Embedder, Example, FeatureTable, Featurizer, Inputs};
use crate::molgraph::{ATOM_WIDTH, BOND_WIDTH};
use crate::nn::checkpoint::{load_into, read_checkpoint, write_checkpoint};
use crate::nn::{Binding, Mlp2, ParamSet, Tape, Var};
use crate::scalar::Scalar;
use crate::transfer::losses::{binary_cross_entropy, classification_loss, compound_disc_loss, entropy, feature_disc_loss, scale};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "tac")]
    TAc,
    #[serde(rename = "tac-f")]
    TAcF,
    #[serde(rename = "tac-c")]
    TAcC,
    #[serde(rename = "tac-fc")]
    TAcFC,
    #[serde(rename = "dann")]
    Dann,
    #[serde(rename = "not")]
    NoT,
    #[serde(rename = "dt")]
    DT,
}

impl Variant {
    pub const ALL: [Variant; 7] =
        [Variant::TAc, Variant::TAcF, Variant::TAcC, Variant::TAcFC, Variant::Dann, Variant::NoT, Variant::DT];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TAc => "tac",
            Variant::TAcF => "tac-f",
            Variant::TAcC => "tac-c",
            Variant::TAcFC => "tac-fc",
            Variant::Dann => "dann",
            Variant::NoT => "not",
            Variant::DT => "dt",
        }
    }

    pub fn uses_feature_disc(self) -> bool {
        matches!(self, Variant::TAcF | Variant::TAcFC)
    }

    pub fn uses_compound_disc(self) -> bool {
        matches!(self, Variant::TAcC | Variant::TAcFC | Variant::Dann)
    }

    /// Whether each step draws separate source and target batches.
    pub fn two_domain(self) -> bool {
        !matches!(self, Variant::NoT | Variant::DT)
    }

    pub fn uses_source(self) -> bool {
        self != Variant::NoT
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
            format!("unknown variant {s:?}; expected one of {}", names.join(", "))
        })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Weight of the source classification loss.
    pub alpha: f64,
    /// Weight of the discriminator losses.
    pub lambda: f64,
    pub featurizer: Featurizer,
    /// Hidden width of S, L and G.
    pub head_hidden: usize,
    pub epochs: usize,
    /// Compounds per domain per step.
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::TAcFC,
            alpha: 0.5,
            lambda: 0.01,
            featurizer: Featurizer::default(),
            head_hidden: 100,
            epochs: 40,
            batch_size: 10,
            lr_start: 1e-3,
            lr_end: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m).into());
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.head_hidden == 0 {
            return bad("epochs, batch_size and head_hidden must be positive".into());
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if let Some(c) = self.featurizer.encoder_config() {
            if c.d == 0 || c.attn_hidden == 0 {
                return bad("encoder width must be positive".into());
            }
        }
        Ok(())
    }

    /// `λ` as used in the objective; zero for variants without discriminators.
    pub fn effective_lambda(&self) -> f64 {
        if self.variant.uses_feature_disc() || self.variant.uses_compound_disc() {
            self.lambda
        } else {
            0.0
        }
    }

    /// Learning rate for 0-based `epoch`, decaying geometrically from
    /// `lr_start` to `lr_end` at the last epoch.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr_start;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.lr_start * (self.lr_end / self.lr_start).powf(t)
    }
}

/// Whether discriminator paths pass through the gradient reversal layer.
/// `Bypassed` exists for checking the reversal itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradReversal {
    Enabled,
    Bypassed,
}

impl GradReversal {
    fn apply<'t, T: Scalar>(self, x: Var<'t, T>) -> Var<'t, T> {
        match self {
            GradReversal::Enabled => x.grad_reverse(),
            GradReversal::Bypassed => x,
        }
    }
}

/// Loss values of one forward pass. `objective` is what gets
/// differentiated; `value` is the reported objective
/// `L_c − λ(L_l + L_g)` (or `CE − λ L_g` for DANN).
pub struct LossTerms<'t, T> {
    pub objective: Var<'t, T>,
    pub value: T,
    pub classification: T,
    pub feature_disc: Option<T>,
    pub compound_disc: Option<T>,
}

/// Labels of one step. Source rows come first in the batch.
#[derive(Clone, Copy, Debug)]
pub struct BatchLabels<'a> {
    pub n_source: usize,
    pub source: &'a [u8],
    /// `None` when target labels must not be used (DANN).
    pub target: Option<&'a [u8]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelHeader {
    kind: String,
    config: TrainConfig,
    atom_width: usize,
    bond_width: usize,
}

const MODEL_KIND: &str = "transfer";

/// Encoder (or fingerprint input) plus the classifier and discriminator heads.
#[derive(Clone, Debug)]
pub struct TransferModel<T> {
    pub config: TrainConfig,
    pub params: ParamSet<T>,
    pub embedder: Embedder,
    /// `S`: `d → h → 1`.
    pub classifier: Mlp2,
    /// `L`: `d → h → d`.
    pub feature_disc: Option<Mlp2>,
    /// `G`: `d → h → 1`.
    pub compound_disc: Option<Mlp2>,
}

impl<T: Scalar> TransferModel<T> {
    pub fn new<R: rand::Rng + ?Sized>(config: TrainConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let embedder = Embedder::new(&mut params, config.featurizer, rng);
        let (d, h) = (embedder.width(), config.head_hidden);
        let classifier = Mlp2::new(&mut params, "classifier", d, h, 1, rng);
        let feature_disc = config.variant.uses_feature_disc().then(|| Mlp2::new(&mut params, "feature_disc", d, h, d, rng));
        let compound_disc =
            config.variant.uses_compound_disc().then(|| Mlp2::new(&mut params, "compound_disc", d, h, 1, rng));
        Ok(Self { config, params, embedder, classifier, feature_disc, compound_disc })
    }

    pub fn embed<'t>(&self, tape: &'t Tape<T>, b: &Binding<'t, T>, inputs: &Inputs<T>) -> Result<Var<'t, T>> {
        self.embedder.embed(tape, b, inputs)
    }

    /// `ŷ = sigmoid(S(x))`.
    pub fn class_probs<'t>(&self, b: &Binding<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        Ok(self.classifier.forward(b, x)?.sigmoid())
    }

    /// `p = sigmoid(L(r))`, per feature.
    pub fn feature_probs<'t>(&self, b: &Binding<'t, T>, r: Var<'t, T>) -> Result<Var<'t, T>> {
        let l = self.feature_disc.as_ref().ok_or_else(|| TrainError::Config("model has no feature discriminator".into()))?;
        Ok(l.forward(b, r)?.sigmoid())
    }

    /// `q = sigmoid(G(x))`, per compound.
    pub fn compound_probs<'t>(&self, b: &Binding<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let g = self.compound_disc.as_ref().ok_or_else(|| TrainError::Config("model has no compound discriminator".into()))?;
        Ok(g.forward(b, x)?.sigmoid())
    }

    /// Classifier input: `(1 + H(L(r))) ⊙ r` when the variant has a feature
    /// discriminator, `r` otherwise. `L` is read from `disc`.
    pub fn classifier_input<'t>(&self, disc: &Binding<'t, T>, r: Var<'t, T>) -> Result<Var<'t, T>> {
        if !self.config.variant.uses_feature_disc() {
            return Ok(r);
        }
        let p = self.feature_probs(disc, r)?;
        scale(r, entropy(p)?)
    }

    /// Forward pass of one step.
    ///
    /// `frozen` is a second binding of the same parameters; the classifier
    /// path reads the feature discriminator from it, so `L` is trained by
    /// the discriminator losses only.
    pub fn loss_terms<'t>(
        &self,
        tape: &'t Tape<T>,
        b: &Binding<'t, T>,
        frozen: &Binding<'t, T>,
        inputs: &Inputs<T>,
        labels: BatchLabels<'_>,
        grl: GradReversal,
    ) -> Result<LossTerms<'t, T>> {
        let n = inputs.len();
        let ns = labels.n_source;
        let r = self.embed(tape, b, inputs)?;
        let variant = self.config.variant;
        let lambda = T::of(self.config.effective_lambda());

        if !variant.two_domain() {
            let y = labels.target.ok_or_else(|| TrainError::Config("pooled training needs labels".into()))?;
            let l = binary_cross_entropy(self.class_probs(b, r)?, y)?;
            let v = l.item();
            return Ok(LossTerms { objective: l, value: v, classification: v, feature_disc: None, compound_disc: None });
        }

        if variant == Variant::Dann {
            let yhat_s = self.class_probs(b, r.rows(0..ns)?)?;
            let ce = binary_cross_entropy(yhat_s, labels.source)?;
            let q = self.compound_probs(b, grl.apply(r))?;
            let lg = compound_disc_loss(q.rows(0..ns)?, q.rows(ns..n)?)?;
            return Ok(LossTerms {
                objective: ce.add(lg.scale(lambda))?,
                value: ce.item() - lambda * lg.item(),
                classification: ce.item(),
                feature_disc: None,
                compound_disc: Some(lg.item()),
            });
        }

        let y_t = labels.target.ok_or_else(|| TrainError::Config("target labels required".into()))?;
        let z = self.classifier_input(frozen, r)?;
        let yhat = self.class_probs(b, z)?;
        let lc = classification_loss(yhat.rows(0..ns)?, labels.source, yhat.rows(ns..n)?, y_t, T::of(self.config.alpha))?;

        let r_rev = grl.apply(r);
        let mut disc: Option<Var<'t, T>> = None;
        let (mut ll_v, mut lg_v) = (None, None);
        let mut g_input = r_rev;
        if variant.uses_feature_disc() {
            let p = self.feature_probs(b, r_rev)?;
            let ll = feature_disc_loss(p.rows(0..ns)?, p.rows(ns..n)?)?;
            ll_v = Some(ll.item());
            disc = Some(ll);
            g_input = scale(r_rev, entropy(p)?)?;
        }
        if variant.uses_compound_disc() {
            let q = self.compound_probs(b, g_input)?;
            let lg = compound_disc_loss(q.rows(0..ns)?, q.rows(ns..n)?)?;
            lg_v = Some(lg.item());
            disc = Some(match disc {
                Some(ll) => ll.add(lg)?,
                None => lg,
            });
        }
        let (objective, value) = match disc {
            Some(d) => (lc.add(d.scale(lambda))?, lc.item() - lambda * d.item()),
            None => (lc, lc.item()),
        };
        Ok(LossTerms { objective, value, classification: lc.item(), feature_disc: ll_v, compound_disc: lg_v })
    }

    /// `λ(L_l + L_g)` alone, the part of the objective that reaches the
    /// encoder through the reversal layer.
    pub fn discriminator_objective<'t>(
        &self,
        tape: &'t Tape<T>,
        b: &Binding<'t, T>,
        inputs: &Inputs<T>,
        n_source: usize,
        grl: GradReversal,
    ) -> Result<Var<'t, T>> {
        let n = inputs.len();
        let ns = n_source;
        let lambda = T::of(self.config.effective_lambda());
        let r_rev = grl.apply(self.embed(tape, b, inputs)?);
        let mut total: Option<Var<'t, T>> = None;
        let mut g_input = r_rev;
        if self.config.variant.uses_feature_disc() {
            let p = self.feature_probs(b, r_rev)?;
            total = Some(feature_disc_loss(p.rows(0..ns)?, p.rows(ns..n)?)?);
            g_input = scale(r_rev, entropy(p)?)?;
        }
        if self.config.variant.uses_compound_disc() {
            let q = self.compound_probs(b, g_input)?;
            let lg = compound_disc_loss(q.rows(0..ns)?, q.rows(ns..n)?)?;
            total = Some(match total {
                Some(t) => t.add(lg)?,
                None => lg,
            });
        }
        let total = total.ok_or_else(|| TrainError::Config(format!("{} has no discriminator", self.config.variant)))?;
        Ok(total.scale(lambda))
    }

    /// Active-class probabilities for every row of `table`.
    pub fn predict_table(&self, table: &FeatureTable<'_>) -> Result<Vec<T>> {
        const CHUNK: usize = 256;
        let mut out = Vec::with_capacity(table.len());
        let all: Vec<usize> = (0..table.len()).collect();
        for idx in all.chunks(CHUNK) {
            let inputs = FeatureTable::gather::<T>(&[(table, idx)]);
            let tape = Tape::new();
            let b = self.params.bind(&tape);
            let r = self.embed(&tape, &b, &inputs)?;
            let z = self.classifier_input(&b, r)?;
            out.extend_from_slice(self.class_probs(&b, z)?.value().data());
        }
        Ok(out)
    }

    pub fn predict<E: Example + Sync>(&self, examples: &[E]) -> Result<Vec<T>> {
        self.predict_table(&FeatureTable::build(&self.config.featurizer, examples))
    }

    pub fn save(&self, w: impl Write) -> Result<()> {
        let header = ModelHeader {
            kind: MODEL_KIND.into(),
            config: self.config,
            atom_width: ATOM_WIDTH,
            bond_width: BOND_WIDTH,
        };
        write_checkpoint(w, &header, &self.params)?;
        Ok(())
    }

    pub fn load(r: impl Read) -> Result<Self> {
        let raw = read_checkpoint::<ModelHeader>(r)?;
        let header = raw.model;
        if header.kind != MODEL_KIND {
            return Err(CheckpointError::Format(format!("expected a {MODEL_KIND} checkpoint, found {:?}", header.kind)).into());
        }
        if header.atom_width != ATOM_WIDTH {
            return Err(TrainError::FeatureWidth { expected: header.atom_width, found: ATOM_WIDTH }.into());
        }
        if header.bond_width != BOND_WIDTH {
            return Err(TrainError::FeatureWidth { expected: header.bond_width, found: BOND_WIDTH }.into());
        }
        let mut model = Self::new(header.config, &mut ChaCha8Rng::seed_from_u64(0))?;
        load_into(&mut model.params, &raw.arrays)?;
        Ok(model)
    }
}
