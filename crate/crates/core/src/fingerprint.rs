//! Circular (Morgan-style) count fingerprints and Tanimoto similarity.
//!
//! Identifiers are computed with a fixed 64-bit hash so vectors are stable
//! across runs and platforms. They are not bit-compatible with other
//! toolkits.

use crate::error::FingerprintError;
use crate::molgraph::MolecularGraph;

/// Fingerprint settings used when comparing assays.
pub const PAIRING_RADIUS: usize = 3;
/// Fingerprint settings used for the ranking baselines.
pub const RANKING_RADIUS: usize = 2;
pub const DEFAULT_DIM: usize = 2048;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FingerprintVector {
    pub counts: Vec<u32>,
    pub radius: usize,
}

impl FingerprintVector {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn hash_words(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    // splitmix64 finalizer
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Identifiers per round: `rounds[r][u]` for `r = 0..=radius`.
pub fn atom_identifiers(g: &MolecularGraph, radius: usize) -> Vec<Vec<u64>> {
    let mut rounds = Vec::with_capacity(radius + 1);
    let initial: Vec<u64> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(u, a)| hash_words(&[0, a.element as u64, g.degree(u) as u64, a.charge as i64 as u64, a.aromatic as u64]))
        .collect();
    rounds.push(initial);
    for r in 1..=radius {
        let prev = &rounds[r - 1];
        let next = (0..g.n_atoms())
            .map(|u| {
                let mut env: Vec<(u64, u64)> = g
                    .neighbor_index(u)
                    .iter()
                    .map(|&(k, e)| (g.edge_bond(e).order.code() as u64, prev[k]))
                    .collect();
                env.sort_unstable();
                let mut words = Vec::with_capacity(2 + 2 * env.len());
                words.push(r as u64);
                words.push(prev[u]);
                for (b, id) in env {
                    words.push(b);
                    words.push(id);
                }
                hash_words(&words)
            })
            .collect();
        rounds.push(next);
    }
    rounds
}

/// Every identifier of every round `0..=radius` increments bucket `id mod dim`.
/// Panics when `dim == 0`.
pub fn morgan_count(g: &MolecularGraph, radius: usize, dim: usize) -> FingerprintVector {
    assert!(dim >= 1, "fingerprint dimension must be positive");
    let mut counts = vec![0u32; dim];
    for round in atom_identifiers(g, radius) {
        for id in round {
            counts[(id % dim as u64) as usize] += 1;
        }
    }
    FingerprintVector { counts, radius }
}

pub fn morgan_binary(g: &MolecularGraph, radius: usize, dim: usize) -> FingerprintVector {
    let mut fp = morgan_count(g, radius, dim);
    fp.counts.iter_mut().for_each(|c| *c = (*c).min(1));
    fp
}

/// Σ min / Σ max; two all-zero vectors have similarity 1.
pub fn tanimoto(a: &FingerprintVector, b: &FingerprintVector) -> Result<f64, FingerprintError> {
    if a.dim() != b.dim() {
        return Err(FingerprintError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (mut lo, mut hi) = (0u64, 0u64);
    for (&x, &y) in a.counts.iter().zip(&b.counts) {
        lo += x.min(y) as u64;
        hi += x.max(y) as u64;
    }
    Ok(if hi == 0 { 1.0 } else { lo as f64 / hi as f64 })
}

/// Mean Tanimoto over all `|a|·|b|` cross pairs of precomputed fingerprints.
pub fn mean_cross_similarity_fp(a: &[FingerprintVector], b: &[FingerprintVector]) -> Result<f64, FingerprintError> {
    if a.is_empty() || b.is_empty() {
        return Err(FingerprintError::EmptySet);
    }
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += tanimoto(x, y)?;
        }
    }
    Ok(total / (a.len() * b.len()) as f64)
}

pub fn mean_cross_similarity(
    a: &[&MolecularGraph],
    b: &[&MolecularGraph],
    radius: usize,
    dim: usize,
) -> Result<f64, FingerprintError> {
    let fa: Vec<_> = a.iter().map(|g| morgan_count(g, radius, dim)).collect();
    let fb: Vec<_> = b.iter().map(|g| morgan_count(g, radius, dim)).collect();
    mean_cross_similarity_fp(&fa, &fb)
}

/// Relabeling-invariant structural hash (refinement to `n_atoms` rounds).
pub fn graph_hash(g: &MolecularGraph) -> u64 {
    let rounds = atom_identifiers(g, g.n_atoms().max(1));
    let mut last = rounds.last().cloned().unwrap_or_default();
    last.sort_unstable();
    let mut words = vec![g.n_atoms() as u64, g.n_bonds() as u64];
    words.extend(last);
    hash_words(&words)
}
