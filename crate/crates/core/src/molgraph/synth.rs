//! Synthetic paired assays with a planted active motif.
//!
//! Compounds are built from random "scaffold" fragments drawn from a
//! per-domain vocabulary. Actives additionally carry the motif attached by
//! a single bond; inactives are rejected whenever the motif occurs in them.
//! `overlap` is the fraction of the target vocabulary shared with the source.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::DatasetError;
use crate::fingerprint::graph_hash;
use crate::molgraph::dataset::CompoundRecord;
use crate::molgraph::graph::{Atom, BondOrder, MolecularGraph};
use crate::molgraph::subgraph::contains_subgraph;

/// Fragments per domain vocabulary.
pub const VOCAB_SIZE: usize = 8;
const MAX_REJECTIONS: usize = 10_000;

#[derive(Clone, Debug)]
pub struct SynthAssays {
    pub source: Vec<CompoundRecord>,
    pub target: Vec<CompoundRecord>,
    pub source_vocabulary: Vec<u64>,
    pub target_vocabulary: Vec<u64>,
}

pub fn synth_generate(
    seed: u64,
    n_active: usize,
    n_inactive: usize,
    motif: &MolecularGraph,
    overlap: f64,
) -> Result<SynthAssays, DatasetError> {
    if motif.n_atoms() < 2 {
        return Err(DatasetError::InvalidCount("motif needs at least two atoms".into()));
    }
    if !(0.0..=1.0).contains(&overlap) {
        return Err(DatasetError::InvalidCount(format!("overlap {overlap} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pool: Vec<MolecularGraph> = Vec::with_capacity(2 * VOCAB_SIZE);
    let mut hashes = Vec::new();
    let mut tries = 0;
    while pool.len() < 2 * VOCAB_SIZE {
        tries += 1;
        if tries > MAX_REJECTIONS {
            return Err(DatasetError::InvalidCount("could not build a motif-free fragment vocabulary".into()));
        }
        let f = random_fragment(&mut rng);
        let h = graph_hash(&f);
        if contains_subgraph(&f, motif) || hashes.contains(&h) {
            continue;
        }
        hashes.push(h);
        pool.push(f);
    }
    let shared = (overlap * VOCAB_SIZE as f64).round() as usize;
    let source_vocab: Vec<usize> = (0..VOCAB_SIZE).collect();
    let target_vocab: Vec<usize> = (0..shared).chain(VOCAB_SIZE..2 * VOCAB_SIZE - shared).collect();

    let source = assay(&mut rng, "src", &pool, &source_vocab, motif, n_active, n_inactive)?;
    let target = assay(&mut rng, "tgt", &pool, &target_vocab, motif, n_active, n_inactive)?;
    Ok(SynthAssays {
        source,
        target,
        source_vocabulary: source_vocab.iter().map(|&i| hashes[i]).collect(),
        target_vocabulary: target_vocab.iter().map(|&i| hashes[i]).collect(),
    })
}

fn assay(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    pool: &[MolecularGraph],
    vocab: &[usize],
    motif: &MolecularGraph,
    n_active: usize,
    n_inactive: usize,
) -> Result<Vec<CompoundRecord>, DatasetError> {
    let mut labels: Vec<u8> = std::iter::repeat_n(1, n_active).chain(std::iter::repeat_n(0, n_inactive)).collect();
    labels.shuffle(rng);
    let mut out = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        let mut tries = 0;
        let graph = loop {
            tries += 1;
            if tries > MAX_REJECTIONS {
                return Err(DatasetError::InvalidCount("could not draw a motif-free inactive".into()));
            }
            let scaffold = scaffold(rng, pool, vocab);
            if label == 1 {
                let at = rng.gen_range(0..scaffold.n_atoms());
                let m = rng.gen_range(0..motif.n_atoms());
                break scaffold.join(motif, &[(at, m, BondOrder::Single)]).expect("single link keeps graph valid");
            }
            if !contains_subgraph(&scaffold, motif) {
                break scaffold;
            }
        };
        out.push(CompoundRecord::from_graph(format!("{prefix}-{i:04}"), graph).with_label(label));
    }
    Ok(out)
}

fn scaffold(rng: &mut ChaCha8Rng, pool: &[MolecularGraph], vocab: &[usize]) -> MolecularGraph {
    let k = rng.gen_range(1..=3);
    let mut g = pool[*vocab.choose(rng).expect("nonempty vocabulary")].clone();
    for _ in 1..k {
        let f = &pool[*vocab.choose(rng).expect("nonempty vocabulary")];
        let a = rng.gen_range(0..g.n_atoms());
        let b = rng.gen_range(0..f.n_atoms());
        g = g.join(f, &[(a, b, BondOrder::Single)]).expect("single link keeps graph valid");
    }
    g
}

fn random_fragment(rng: &mut ChaCha8Rng) -> MolecularGraph {
    if rng.gen_bool(0.3) {
        // aromatic ring, optionally with one heteroatom
        let n = if rng.gen_bool(0.5) { 5 } else { 6 };
        let mut atoms = vec![Atom::aromatic(6); n];
        if rng.gen_bool(0.5) {
            atoms[0] = Atom::aromatic(*[7u8, 8, 16].choose(rng).unwrap());
        }
        let bonds: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, BondOrder::Aromatic)).collect();
        return MolecularGraph::new(atoms, &bonds).expect("ring is valid");
    }
    let n = rng.gen_range(3..=7);
    let elements: [(u8, f64); 6] = [(6, 0.62), (7, 0.14), (8, 0.14), (16, 0.04), (9, 0.03), (17, 0.03)];
    let mut atoms = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        let mut z = 6;
        for &(e, p) in &elements {
            acc += p;
            if x < acc {
                z = e;
                break;
            }
        }
        atoms.push(Atom::new(z));
    }
    let mut bonds = Vec::new();
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let order = if rng.gen_bool(0.2) { BondOrder::Double } else { BondOrder::Single };
        bonds.push((parent, i, order));
    }
    if n >= 5 && rng.gen_bool(0.3) {
        let (u, v) = (0, n - 1);
        if !bonds.iter().any(|&(a, b, _)| (a, b) == (u, v) || (a, b) == (v, u)) {
            bonds.push((u, v, BondOrder::Single));
        }
    }
    MolecularGraph::new(atoms, &bonds).expect("random tree is valid")
}

/// Ranking data with a realizable activity: `k + 0.01·atoms + 0.001·heteroatoms`
/// for a compound carrying `k ∈ 0..=max_copies` attached motif copies on a
/// motif-free scaffold. Compounds whose activity repeats an earlier one are
/// redrawn, so activities are distinct.
pub fn synth_ranking(
    seed: u64,
    n: usize,
    motif: &MolecularGraph,
    max_copies: usize,
) -> Result<Vec<CompoundRecord>, DatasetError> {
    if motif.n_atoms() < 2 {
        return Err(DatasetError::InvalidCount("motif needs at least two atoms".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::with_capacity(VOCAB_SIZE);
    let mut tries = 0;
    while pool.len() < VOCAB_SIZE {
        tries += 1;
        if tries > MAX_REJECTIONS {
            return Err(DatasetError::InvalidCount("could not build a motif-free fragment vocabulary".into()));
        }
        let f = random_fragment(&mut rng);
        if !contains_subgraph(&f, motif) {
            pool.push(f);
        }
    }
    let vocab: Vec<usize> = (0..VOCAB_SIZE).collect();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    tries = 0;
    while out.len() < n {
        tries += 1;
        if tries > MAX_REJECTIONS {
            return Err(DatasetError::InvalidCount(format!("could not draw {n} compounds with distinct activities")));
        }
        let mut g = scaffold(&mut rng, &pool, &vocab);
        if contains_subgraph(&g, motif) {
            continue;
        }
        let scaffold_atoms = g.n_atoms();
        let k = rng.gen_range(0..=max_copies);
        for _ in 0..k {
            let at = rng.gen_range(0..scaffold_atoms);
            let m = rng.gen_range(0..motif.n_atoms());
            g = g.join(motif, &[(at, m, BondOrder::Single)]).expect("single link keeps graph valid");
        }
        let hetero = g.atoms().iter().filter(|a| a.element != 6 && a.element != 1).count();
        if !seen.insert((k, g.n_atoms(), hetero)) {
            continue;
        }
        let activity = k as f64 + 0.01 * g.n_atoms() as f64 + 0.001 * hetero as f64;
        out.push(CompoundRecord::from_graph(format!("rank-{:04}", out.len()), g).with_activity(activity));
    }
    Ok(out)
}

/// Small random connected graph with `1..=max_atoms` atoms, used by the
/// gradient and oracle checks.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, max_atoms: usize) -> MolecularGraph {
    let n = rng.gen_range(1..=max_atoms.max(1));
    let atoms: Vec<Atom> = (0..n)
        .map(|_| {
            let mut a = Atom::new(*[6u8, 6, 7, 8, 16, 17].choose(rng).unwrap());
            a.charge = *[0i8, 0, 0, 1, -1].choose(rng).unwrap();
            a
        })
        .collect();
    let orders = [BondOrder::Single, BondOrder::Single, BondOrder::Double, BondOrder::Triple, BondOrder::Aromatic];
    let mut bonds = Vec::new();
    for i in 1..n {
        bonds.push((rng.gen_range(0..i), i, *orders.choose(rng).unwrap()));
    }
    for u in 0..n {
        for v in u + 1..n {
            let present = bonds.iter().any(|&(a, b, _)| (a, b) == (u, v) || (a, b) == (v, u));
            if !present && rng.gen_bool(0.25) {
                bonds.push((u, v, *orders.choose(rng).unwrap()));
            }
        }
    }
    MolecularGraph::new(atoms, &bonds).expect("random graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::dataset::write_dataset;
    use crate::molgraph::smiles::parse_smiles;

    fn motif() -> MolecularGraph {
        parse_smiles("S(=O)(=O)N").unwrap()
    }

    fn bytes(recs: &[CompoundRecord]) -> Vec<u8> {
        let mut b = Vec::new();
        write_dataset(&mut b, recs).unwrap();
        b
    }

    #[test]
    fn deterministic_under_seed() {
        let a = synth_generate(7, 10, 10, &motif(), 0.5).unwrap();
        let b = synth_generate(7, 10, 10, &motif(), 0.5).unwrap();
        assert_eq!(bytes(&a.source), bytes(&b.source));
        assert_eq!(bytes(&a.target), bytes(&b.target));
        let c = synth_generate(8, 10, 10, &motif(), 0.5).unwrap();
        assert_ne!(bytes(&a.source), bytes(&c.source));
    }

    #[test]
    fn overlap_controls_vocabulary() {
        let full = synth_generate(1, 5, 5, &motif(), 1.0).unwrap();
        assert_eq!(full.source_vocabulary, full.target_vocabulary);
        let none = synth_generate(1, 5, 5, &motif(), 0.0).unwrap();
        assert!(none.target_vocabulary.iter().all(|h| !none.source_vocabulary.contains(h)));
    }

    #[test]
    fn counts_and_motif_placement() {
        let m = motif();
        let s = synth_generate(3, 50, 50, &m, 1.0).unwrap();
        for recs in [&s.source, &s.target] {
            assert_eq!(recs.len(), 100);
            assert_eq!(recs.iter().filter(|r| r.label == Some(1)).count(), 50);
            for r in recs.iter() {
                assert_eq!(contains_subgraph(&r.graph, &m), r.label == Some(1), "{}", r.id);
            }
        }
    }

    #[test]
    fn ranking_activities_distinct() {
        let recs = synth_ranking(2, 120, &motif(), 3).unwrap();
        let mut acts: Vec<f64> = recs.iter().map(|r| r.activity.unwrap()).collect();
        acts.sort_by(f64::total_cmp);
        assert!(acts.windows(2).all(|w| w[0] != w[1]));
        assert!(recs.iter().any(|r| r.activity.unwrap() >= 3.0));
    }

    #[test]
    fn tiny_motif_rejected() {
        assert!(synth_generate(1, 1, 1, &parse_smiles("C").unwrap(), 0.5).is_err());
    }
}
