//! Compound inputs shared by the classifiers and the ranker: either a
//! learned encoder over graphs or a fixed Morgan fingerprint.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmpnn::{Encoder, EncoderConfig, GraphBatch};
use crate::error::Result;
use crate::fingerprint::{morgan_binary, morgan_count, DEFAULT_DIM, RANKING_RADIUS};
use crate::molgraph::{CompoundRecord, MolecularGraph};
use crate::nn::{Binding, ParamSet, Tape, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Read access to one compound. Trainers only touch labels through
/// [`Example::label`], which lets tests observe what a trainer reads.
pub trait Example {
    fn id(&self) -> &str;
    fn graph(&self) -> &MolecularGraph;
    fn label(&self) -> Option<u8>;
    fn activity(&self) -> Option<f64>;
}

impl Example for CompoundRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn graph(&self) -> &MolecularGraph {
        &self.graph
    }
    fn label(&self) -> Option<u8> {
        self.label
    }
    fn activity(&self) -> Option<f64> {
        self.activity
    }
}

impl<E: Example + ?Sized> Example for &E {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn graph(&self) -> &MolecularGraph {
        (**self).graph()
    }
    fn label(&self) -> Option<u8> {
        (**self).label()
    }
    fn activity(&self) -> Option<f64> {
        (**self).activity()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Featurizer {
    Dmpnn(EncoderConfig),
    Morgan { radius: usize, dim: usize },
    MorganCount { radius: usize, dim: usize },
}

impl Default for Featurizer {
    fn default() -> Self {
        Featurizer::Dmpnn(EncoderConfig::default())
    }
}

impl Featurizer {
    pub fn morgan() -> Self {
        Featurizer::Morgan { radius: RANKING_RADIUS, dim: DEFAULT_DIM }
    }

    pub fn morgan_count() -> Self {
        Featurizer::MorganCount { radius: RANKING_RADIUS, dim: DEFAULT_DIM }
    }

    /// Width of the compound representation fed to the heads.
    pub fn width(&self) -> usize {
        match *self {
            Featurizer::Dmpnn(c) => c.d,
            Featurizer::Morgan { dim, .. } | Featurizer::MorganCount { dim, .. } => dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Featurizer::Dmpnn(c) => c.pooling.model_name(),
            Featurizer::Morgan { .. } => "morgan",
            Featurizer::MorganCount { .. } => "morgan_count",
        }
    }

    pub fn encoder_config(&self) -> Option<EncoderConfig> {
        match *self {
            Featurizer::Dmpnn(c) => Some(c),
            _ => None,
        }
    }
}

/// Precomputed per-compound inputs.
pub enum FeatureTable<'a> {
    Graphs(Vec<&'a MolecularGraph>),
    Vectors(Vec<Vec<f64>>),
}

impl<'a> FeatureTable<'a> {
    pub fn build<E: Example + Sync>(featurizer: &Featurizer, examples: &'a [E]) -> Self {
        match *featurizer {
            Featurizer::Dmpnn(_) => FeatureTable::Graphs(examples.iter().map(|e| e.graph()).collect()),
            Featurizer::Morgan { radius, dim } => FeatureTable::Vectors(
                examples.par_iter().map(|e| morgan_binary(e.graph(), radius, dim).to_f64()).collect(),
            ),
            Featurizer::MorganCount { radius, dim } => FeatureTable::Vectors(
                examples.par_iter().map(|e| morgan_count(e.graph(), radius, dim).to_f64()).collect(),
            ),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FeatureTable::Graphs(g) => g.len(),
            FeatureTable::Vectors(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `idx` of every table, concatenated in order.
    pub fn gather<T: Scalar>(parts: &[(&FeatureTable<'a>, &[usize])]) -> Inputs<T> {
        let graphs = parts.iter().all(|(t, _)| matches!(t, FeatureTable::Graphs(_)));
        if graphs {
            let refs: Vec<&MolecularGraph> = parts
                .iter()
                .flat_map(|(t, idx)| match t {
                    FeatureTable::Graphs(g) => idx.iter().map(|&i| g[i]).collect::<Vec<_>>(),
                    FeatureTable::Vectors(_) => unreachable!(),
                })
                .collect();
            return Inputs::Graphs(GraphBatch::new(&refs));
        }
        let mut rows = 0;
        let mut cols = 0;
        let mut data = Vec::new();
        for (t, idx) in parts {
            let FeatureTable::Vectors(v) = t else { panic!("cannot mix graph and vector tables") };
            for &i in idx.iter() {
                cols = v[i].len();
                data.extend(v[i].iter().map(|&x| T::of(x)));
                rows += 1;
            }
        }
        Inputs::Dense(Tensor::from_vec(rows, cols, data))
    }

    /// Every row, in order.
    pub fn all<T: Scalar>(&self) -> Inputs<T> {
        let idx: Vec<usize> = (0..self.len()).collect();
        Self::gather(&[(self, &idx)])
    }
}

/// One batch of inputs, ready for the tape.
pub enum Inputs<T> {
    Graphs(GraphBatch<T>),
    Dense(Tensor<T>),
}

impl<T: Scalar> Inputs<T> {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Graphs(g) => g.n_graphs(),
            Inputs::Dense(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Produces compound representations `r` from [`Inputs`].
#[derive(Clone, Debug)]
pub struct Embedder {
    pub featurizer: Featurizer,
    pub encoder: Option<Encoder>,
}

impl Embedder {
    pub fn new<T: Scalar, R: rand::Rng + ?Sized>(
        params: &mut ParamSet<T>,
        featurizer: Featurizer,
        rng: &mut R,
    ) -> Self {
        let encoder = featurizer.encoder_config().map(|c| Encoder::new(params, "encoder", c, rng));
        Self { featurizer, encoder }
    }

    pub fn width(&self) -> usize {
        self.featurizer.width()
    }

    pub fn embed<'t, T: Scalar>(&self, tape: &'t Tape<T>, b: &Binding<'t, T>, inputs: &Inputs<T>) -> Result<Var<'t, T>> {
        match (inputs, &self.encoder) {
            (Inputs::Graphs(batch), Some(enc)) => enc.encode(b, batch),
            (Inputs::Dense(x), None) => {
                if x.cols() != self.width() && !x.is_empty() {
                    return Err(crate::error::TrainError::FeatureWidth { expected: self.width(), found: x.cols() }.into());
                }
                Ok(tape.constant(x.clone()))
            }
            _ => Err(crate::error::TrainError::Config("inputs do not match the featurizer".into()).into()),
        }
    }
}
