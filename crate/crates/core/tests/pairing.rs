use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tac_core::fingerprint::{morgan_count, tanimoto, DEFAULT_DIM, PAIRING_RADIUS};
use tac_core::molgraph::{parse_smiles, CompoundRecord};
use tac_core::pairing::{
    balance_assay, canonical_key, pair_assays, profile, resolve_pair, Assay, PairProfile, PairingConfig,
};

fn ring(element: &str, n: usize) -> String {
    format!("{element}1{}1", element.repeat(n - 1))
}

fn rec(id: &str, smiles: &str, label: u8) -> CompoundRecord {
    let mut r = CompoundRecord::from_smiles(id, smiles).unwrap().with_label(label);
    r.family = Some("kinase".into());
    r
}

/// Three assays whose cross-similarities are ratios of ring sizes.
fn golden() -> Vec<Assay> {
    let a = vec![rec("a1", &ring("C", 6), 1), rec("a1-dup", &ring("C", 6), 1), rec("a0", &ring("C", 5), 0)];
    let b = vec![rec("b1", &ring("C", 12), 1), rec("b0", &ring("N", 3), 0)];
    let c = vec![
        rec("c1", &ring("C", 3), 1),
        rec("c2", &ring("C", 7), 1),
        rec("c3", &ring("C", 10), 0),
        rec("c4", &ring("C", 8), 0),
    ];
    vec![Assay::new("A", a), Assay::new("B", b), Assay::new("C", c)]
}

#[test]
fn ring_fingerprints_are_multiples() {
    // Ring atoms are all alike, so the count vector of an n-ring is n·v.
    let base = morgan_count(&parse_smiles(&ring("C", 3)).unwrap(), PAIRING_RADIUS, DEFAULT_DIM);
    assert_eq!(base.counts.iter().filter(|&&c| c > 0).count(), PAIRING_RADIUS + 1);
    for n in [5, 6, 7, 8, 10, 12] {
        let fp = morgan_count(&parse_smiles(&ring("C", n)).unwrap(), PAIRING_RADIUS, DEFAULT_DIM);
        for (x, y) in fp.counts.iter().zip(&base.counts) {
            assert_eq!(*x * 3, *y * n as u32);
        }
    }
    let n3 = morgan_count(&parse_smiles(&ring("N", 3)).unwrap(), PAIRING_RADIUS, DEFAULT_DIM);
    assert_eq!(tanimoto(&n3, &base).unwrap(), 0.0);
}

#[test]
fn golden_three_assays() {
    let cfg = PairingConfig { min_actives: 1, ..PairingConfig::default() };
    let out = pair_assays(&golden(), &[], &cfg).unwrap();
    let m = &out.manifest;
    assert_eq!(m.pairs.len(), 3);
    let expect = [
        ("A", "B", PairProfile { sim_pp: 6.0 / 12.0, sim_nn: 0.0, sim_pn: 0.0, sim_np: 5.0 / 12.0 }, true, true),
        ("A", "C", PairProfile { sim_pp: 19.0 / 28.0, sim_nn: 9.0 / 16.0, sim_pn: 27.0 / 40.0, sim_np: 23.0 / 35.0 }, true, false),
        ("B", "C", PairProfile { sim_pp: 5.0 / 12.0, sim_nn: 0.0, sim_pn: 3.0 / 4.0, sim_np: 0.0 }, false, false),
    ];
    for (e, (a, b, p, p0, sel)) in m.pairs.iter().zip(expect) {
        assert_eq!((e.a.as_str(), e.b.as_str()), (a, b));
        let got = e.profile.unwrap();
        for (x, y) in [(got.sim_pp, p.sim_pp), (got.sim_nn, p.sim_nn), (got.sim_pn, p.sim_pn), (got.sim_np, p.sim_np)] {
            assert!((x - y).abs() <= 1e-15, "{a}-{b}: {x} vs {y}");
        }
        assert_eq!((e.in_p0, e.selected), (p0, sel), "{a}-{b}");
    }
    // A–C sits in P₀ with margin 1/40, just under the threshold.
    assert!((m.pairs[1].margin.unwrap() - 0.025).abs() < 1e-15);
    let mean = (7.0 / 12.0 + 1.0 / 40.0) / 2.0;
    assert!((m.mean_margin_p0.unwrap() - mean).abs() < 1e-15);
    // The duplicated active of A collapsed to one record.
    assert_eq!(out.assays[0].as_ref().unwrap().0.records.len(), 2);
}

#[test]
fn family_tags_gate_pairs() {
    let mut assays = golden();
    for r in &mut assays[1].records {
        r.family = Some("gpcr".into());
    }
    assays[1] = Assay::new("B", assays[1].records.clone());
    let out = pair_assays(&assays, &[], &PairingConfig { min_actives: 1, ..Default::default() }).unwrap();
    let names: Vec<_> = out.manifest.pairs.iter().map(|e| format!("{}{}", e.a, e.b)).collect();
    assert_eq!(names, ["AC"]);
}

#[test]
fn min_actives_skips_profile() {
    let out = pair_assays(&golden(), &[], &PairingConfig::default()).unwrap();
    assert!(out.manifest.pairs.iter().all(|e| e.profile.is_none() && !e.in_p0));
    assert!(out.assays.iter().all(Option::is_none));
}

fn random_assay(rng: &mut ChaCha8Rng, id: &str, vocab: &[String], n: usize) -> Assay {
    let records = (0..n)
        .map(|i| rec(&format!("{id}{i}"), &vocab[rng.gen_range(0..vocab.len())], rng.gen_bool(0.3) as u8))
        .collect();
    Assay::new(id, records)
}

#[test]
fn resolve_and_balance_invariants() {
    let vocab: Vec<String> = (3..15).flat_map(|n| ["C", "N", "O"].map(|e| ring(e, n))).collect();
    let pool: Vec<CompoundRecord> = (3..40).map(|n| rec(&format!("pool{n}"), &ring("S", n), 0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for trial in 0..200 {
        let a = random_assay(&mut rng, "a", &vocab, 25);
        let b = random_assay(&mut rng, "b", &vocab, 25);
        let (ra, rb) = resolve_pair(&a, &b, &mut rng).unwrap();
        let ka: HashSet<String> = ra.records.iter().map(canonical_key).collect();
        let kb: HashSet<String> = rb.records.iter().map(canonical_key).collect();
        assert!(ka.is_disjoint(&kb), "trial {trial}");
        assert_eq!(ka.len(), ra.records.len());
        for (assay, other) in [(&ra, &kb), (&rb, &ka)] {
            let bal = balance_assay(assay, &pool, other, &mut rng).unwrap();
            assert_eq!(bal.count(1), bal.count(0));
            assert_eq!(bal.count(1), assay.count(1));
            let kbal: HashSet<String> = bal.records.iter().map(canonical_key).collect();
            assert_eq!(kbal.len(), bal.records.len());
            assert!(kbal.is_disjoint(other));
        }
    }
}

#[test]
fn profile_of_identical_singletons_is_one() {
    let a = Assay::new("x", vec![rec("1", "CCO", 1), rec("2", "c1ccccc1", 0)]);
    let p = profile(&a, &a, PAIRING_RADIUS, DEFAULT_DIM).unwrap();
    assert_eq!((p.sim_pp, p.sim_nn), (1.0, 1.0));
    assert!(p.sim_pn < 1.0 && p.sim_pn == p.sim_np);
}

#[test]
fn pipeline_is_deterministic() {
    let vocab: Vec<String> = (3..15).flat_map(|n| ["C", "N"].map(|e| ring(e, n))).collect();
    let pool: Vec<CompoundRecord> = (3..40).map(|n| rec(&format!("pool{n}"), &ring("S", n), 0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let assays: Vec<Assay> = ["p", "q", "r", "s"].iter().map(|id| random_assay(&mut rng, id, &vocab, 20)).collect();
    let cfg = PairingConfig { min_actives: 1, seed: 9, ..Default::default() };
    let x = pair_assays(&assays, &pool, &cfg).unwrap();
    let y = pair_assays(&assays, &pool, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&x.manifest).unwrap(), serde_json::to_string(&y.manifest).unwrap());
    assert_eq!(x.assays, y.assays);
    assert_eq!(x.manifest.pairs.len(), 6);
}

#[test]
fn unbalanceable_pair_is_skipped_not_fatal() {
    let mut assays = golden();
    let short = vec![rec("d1", &ring("C", 4), 1), rec("d2", &ring("C", 9), 1), rec("d0", &ring("C", 11), 0)];
    assays.push(Assay::new("D", short));
    let out = pair_assays(&assays, &[], &PairingConfig { min_actives: 1, ..Default::default() }).unwrap();
    assert_eq!(out.manifest.pairs.len(), 6);
    for (e, a) in out.manifest.pairs.iter().zip(&out.assays) {
        let involves_d = e.b == "D";
        assert_eq!(e.skipped.is_some(), involves_d, "{}-{}", e.a, e.b);
        assert_eq!(a.is_none(), involves_d);
    }
    // The golden pairs keep their selection.
    assert!(out.manifest.pairs[0].selected);
}
