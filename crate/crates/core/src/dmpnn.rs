//! Directed message-passing encoder (`dmpn`) and its attention-readout
//! variant (`dmpna`).
//!
//! Hidden states live on directed edges. A batch of graphs is handled as one
//! disjoint union so every step is a handful of dense ops on the tape.

use std::ops::Range;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};
use crate::molgraph::{MolecularGraph, ATOM_WIDTH, BOND_WIDTH};
use crate::nn::{glorot, Binding, Mlp2, ParamId, ParamSet, Tape, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Attention,
}

impl Pooling {
    /// Short model name used in reports.
    pub fn model_name(self) -> &'static str {
        match self {
            Pooling::Mean => "dmpn",
            Pooling::Attention => "dmpna",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Embedding width.
    pub d: usize,
    /// Message-passing iterations.
    pub tau: usize,
    pub pooling: Pooling,
    /// Hidden width of the attention scorer.
    pub attn_hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { d: 50, tau: 3, pooling: Pooling::Mean, attn_hidden: 100 }
    }
}

/// Parameter handles of one encoder inside a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub atom_width: usize,
    pub bond_width: usize,
    /// `d × (|a| + |e|)`
    pub w0: ParamId,
    /// `d × d`
    pub w: ParamId,
    /// `d × (|a| + d)`
    pub we: ParamId,
    pub attn: Option<Mlp2>,
}

impl Encoder {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        prefix: &str,
        config: EncoderConfig,
        rng: &mut R,
    ) -> Self {
        let (a, e, d) = (ATOM_WIDTH, BOND_WIDTH, config.d);
        let w0 = params.add(format!("{prefix}.w0"), glorot(rng, d, a + e));
        let w = params.add(format!("{prefix}.w"), glorot(rng, d, d));
        let we = params.add(format!("{prefix}.we"), glorot(rng, d, a + d));
        let attn = match config.pooling {
            Pooling::Mean => None,
            Pooling::Attention => Some(Mlp2::new(params, &format!("{prefix}.attn"), d, config.attn_hidden, 1, rng)),
        };
        Self { config, atom_width: a, bond_width: e, w0, w, we, attn }
    }

    pub fn d(&self) -> usize {
        self.config.d
    }

    fn check<T: Scalar>(&self, batch: &GraphBatch<T>) -> Result<()> {
        let expected = self.atom_width + self.bond_width;
        if batch.edge_input.cols() != expected {
            return Err(TrainError::FeatureWidth { expected, found: batch.edge_input.cols() }.into());
        }
        Ok(())
    }

    /// Edge states after `tau` iterations, `E × d`.
    pub fn edge_states<'t, T: Scalar>(&self, b: &Binding<'t, T>, batch: &GraphBatch<T>) -> Result<Var<'t, T>> {
        self.check(batch)?;
        let h0 = init_edge_hidden(self, b, batch)?;
        let mut h = h0;
        for _ in 0..self.config.tau {
            h = message_pass(self, b, batch, h0, h)?;
        }
        Ok(h)
    }

    /// Per-atom embeddings `s_u`, `N × d`.
    pub fn atom_states<'t, T: Scalar>(&self, b: &Binding<'t, T>, batch: &GraphBatch<T>) -> Result<Var<'t, T>> {
        let h = self.edge_states(b, batch)?;
        atom_readout(self, b, batch, h)
    }

    /// Compound embeddings, one row per graph.
    pub fn encode<'t, T: Scalar>(&self, b: &Binding<'t, T>, batch: &GraphBatch<T>) -> Result<Var<'t, T>> {
        let s = self.atom_states(b, batch)?;
        match &self.attn {
            None => pool_mean(s, batch),
            Some(attn) => Ok(pool_attention(attn, b, s, batch)?.0),
        }
    }

    /// Gradient-free embeddings of `graphs`, computed in chunks.
    pub fn embed<T: Scalar>(&self, params: &ParamSet<T>, graphs: &[&MolecularGraph]) -> Result<Tensor<T>> {
        const CHUNK: usize = 256;
        let mut data = Vec::with_capacity(graphs.len() * self.d());
        for chunk in graphs.chunks(CHUNK) {
            let tape = Tape::new();
            let b = params.bind(&tape);
            let r = self.encode(&b, &GraphBatch::new(chunk))?;
            data.extend_from_slice(r.value().data());
        }
        Ok(Tensor::from_vec(graphs.len(), self.d(), data))
    }
}

/// Disjoint union of graphs with the index lists message passing needs.
#[derive(Clone, Debug)]
pub struct GraphBatch<T> {
    /// `[a_u ∥ e_uv]` per directed edge `(u, v)`.
    pub edge_input: Tensor<T>,
    /// `a_u` per atom.
    pub atom_input: Tensor<T>,
    /// For edge `(u, v)`: the edges `(k, u)` with `k ≠ v`.
    pub msg_index: Rc<Vec<Vec<usize>>>,
    /// For atom `u`: every edge `(k, u)`.
    pub atom_in_index: Rc<Vec<Vec<usize>>>,
    /// Atoms of each graph.
    pub graph_atoms: Rc<Vec<Vec<usize>>>,
    pub segments: Rc<Vec<Range<usize>>>,
    /// `1 / n_atoms` per graph, `G × 1`.
    pub inv_sizes: Tensor<T>,
}

impl<T: Scalar> GraphBatch<T> {
    pub fn new(graphs: &[&MolecularGraph]) -> Self {
        let n_atoms: usize = graphs.iter().map(|g| g.n_atoms()).sum();
        let n_edges: usize = graphs.iter().map(|g| g.directed_edges().len()).sum();
        let mut edge_data = Vec::with_capacity(n_edges * (ATOM_WIDTH + BOND_WIDTH));
        let mut atom_data = Vec::with_capacity(n_atoms * ATOM_WIDTH);
        let mut msg_index = Vec::with_capacity(n_edges);
        let mut atom_in_index = Vec::with_capacity(n_atoms);
        let mut graph_atoms = Vec::with_capacity(graphs.len());
        let mut segments = Vec::with_capacity(graphs.len());
        let (mut atom_off, mut edge_off) = (0, 0);
        for g in graphs {
            let feats = g.atom_features();
            for (e, &(u, v)) in g.directed_edges().iter().enumerate() {
                edge_data.extend(feats[u].encoded.iter().map(|&x| T::of(x)));
                edge_data.extend(g.edge_bond(e).encoded.iter().map(|&x| T::of(x)));
                msg_index.push(
                    g.neighbor_index(u).iter().filter(|&&(k, _)| k != v).map(|&(_, ke)| edge_off + ke).collect(),
                );
            }
            for (u, f) in feats.iter().enumerate() {
                atom_data.extend(f.encoded.iter().map(|&x| T::of(x)));
                atom_in_index.push(g.neighbor_index(u).iter().map(|&(_, ke)| edge_off + ke).collect());
            }
            let range = atom_off..atom_off + g.n_atoms();
            graph_atoms.push(range.clone().collect());
            segments.push(range);
            atom_off += g.n_atoms();
            edge_off += g.directed_edges().len();
        }
        Self {
            edge_input: Tensor::from_vec(n_edges, ATOM_WIDTH + BOND_WIDTH, edge_data),
            atom_input: Tensor::from_vec(n_atoms, ATOM_WIDTH, atom_data),
            msg_index: Rc::new(msg_index),
            atom_in_index: Rc::new(atom_in_index),
            graph_atoms: Rc::new(graph_atoms),
            inv_sizes: Tensor::column_vector(graphs.iter().map(|g| T::one() / T::of(g.n_atoms() as f64)).collect()),
            segments: Rc::new(segments),
        }
    }

    pub fn n_graphs(&self) -> usize {
        self.segments.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.atom_input.rows()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_input.rows()
    }
}

fn tape_of<'t, T: Scalar>(b: &Binding<'t, T>, enc: &Encoder) -> &'t Tape<T> {
    b.get(enc.w0).tape()
}

/// `h⁰_uv = ReLU(W₀ [a_u ∥ e_uv])`.
pub fn init_edge_hidden<'t, T: Scalar>(enc: &Encoder, b: &Binding<'t, T>, batch: &GraphBatch<T>) -> Result<Var<'t, T>> {
    let x = tape_of(b, enc).constant(batch.edge_input.clone());
    Ok(x.matmul_nt(b.get(enc.w0))?.relu())
}

/// `h_uv ← ReLU(h⁰_uv + W Σ_{k ∈ N(u)∖v} h_ku)`.
pub fn message_pass<'t, T: Scalar>(
    enc: &Encoder,
    b: &Binding<'t, T>,
    batch: &GraphBatch<T>,
    h0: Var<'t, T>,
    h: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let m = h.aggregate(batch.msg_index.clone())?;
    Ok(h0.add(m.matmul_nt(b.get(enc.w))?)?.relu())
}

/// `s_u = ReLU(W_e [a_u ∥ Σ_{k ∈ N(u)} h_ku])`.
pub fn atom_readout<'t, T: Scalar>(
    enc: &Encoder,
    b: &Binding<'t, T>,
    batch: &GraphBatch<T>,
    h: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let hu = h.aggregate(batch.atom_in_index.clone())?;
    let a = tape_of(b, enc).constant(batch.atom_input.clone());
    Ok(a.concat_cols(hu)?.matmul_nt(b.get(enc.we))?.relu())
}

/// Mean of the atom embeddings of each graph.
pub fn pool_mean<'t, T: Scalar>(s: Var<'t, T>, batch: &GraphBatch<T>) -> Result<Var<'t, T>> {
    let sums = s.aggregate(batch.graph_atoms.clone())?;
    let inv = s.tape().constant(batch.inv_sizes.clone());
    Ok(sums.scale_rows(inv)?)
}

/// `r = Σ_u (1 + w_u) s_u` with `w = softmax_u f_a(s_u)` per graph. Returns
/// `r` and the `N × 1` weights.
pub fn pool_attention<'t, T: Scalar>(
    attn: &Mlp2,
    b: &Binding<'t, T>,
    s: Var<'t, T>,
    batch: &GraphBatch<T>,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let w = attn.forward(b, s)?.segment_softmax(batch.segments.clone())?;
    let r = s.add(s.scale_rows(w)?)?.aggregate(batch.graph_atoms.clone())?;
    Ok((r, w))
}
