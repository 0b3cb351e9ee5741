//! Reference encoder on plain vectors: recursive directed-edge enumeration.
//!
//! Deliberately shares nothing with the tape implementation except the
//! graph's feature encodings and the parameter values.

#![allow(dead_code)]

use tac_core::dmpnn::Encoder;
use tac_core::molgraph::MolecularGraph;
use tac_core::nn::ParamSet;

pub struct Dense {
    pub w0: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub we: Vec<Vec<f64>>,
    pub tau: usize,
}

fn rows(params: &ParamSet<f64>, id: tac_core::nn::ParamId) -> Vec<Vec<f64>> {
    let t = params.value(id);
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

impl Dense {
    pub fn from_encoder(params: &ParamSet<f64>, enc: &Encoder) -> Self {
        Self { w0: rows(params, enc.w0), w: rows(params, enc.w), we: rows(params, enc.we), tau: enc.config.tau }
    }
}

fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn relu(x: Vec<f64>) -> Vec<f64> {
    x.into_iter().map(|v| v.max(0.0)).collect()
}

fn neighbours(g: &MolecularGraph, u: usize) -> Vec<usize> {
    g.bonds().iter().filter_map(|b| if b.u == u { Some(b.v) } else if b.v == u { Some(b.u) } else { None }).collect()
}

fn bond_features(g: &MolecularGraph, u: usize, v: usize) -> Vec<f64> {
    g.bonds().iter().find(|b| (b.u, b.v) == (u, v) || (b.u, b.v) == (v, u)).unwrap().features.encoded.clone()
}

pub fn initial(g: &MolecularGraph, p: &Dense, u: usize, v: usize) -> Vec<f64> {
    let mut x = g.atom_features()[u].encoded.clone();
    x.extend(bond_features(g, u, v));
    relu(matvec(&p.w0, &x))
}

/// `h_uv` after `t` iterations, by recursion over incoming edges.
pub fn edge_state(g: &MolecularGraph, p: &Dense, u: usize, v: usize, t: usize) -> Vec<f64> {
    let h0 = initial(g, p, u, v);
    if t == 0 {
        return h0;
    }
    let mut m = vec![0.0; h0.len()];
    for k in neighbours(g, u) {
        if k == v {
            continue;
        }
        for (mi, x) in m.iter_mut().zip(edge_state(g, p, k, u, t - 1)) {
            *mi += x;
        }
    }
    relu(h0.iter().zip(matvec(&p.w, &m)).map(|(a, b)| a + b).collect())
}

pub fn atom_state(g: &MolecularGraph, p: &Dense, u: usize) -> Vec<f64> {
    let d = p.w.len();
    let mut hu = vec![0.0; d];
    for k in neighbours(g, u) {
        for (x, y) in hu.iter_mut().zip(edge_state(g, p, k, u, p.tau)) {
            *x += y;
        }
    }
    let mut x = g.atom_features()[u].encoded.clone();
    x.extend(hu);
    relu(matvec(&p.we, &x))
}

pub fn mean_embedding(g: &MolecularGraph, p: &Dense) -> Vec<f64> {
    let n = g.n_atoms();
    let mut r = vec![0.0; p.w.len()];
    for u in 0..n {
        for (x, y) in r.iter_mut().zip(atom_state(g, p, u)) {
            *x += y / n as f64;
        }
    }
    r
}
