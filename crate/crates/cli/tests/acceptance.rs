//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p tac-cli --test acceptance`.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tac_core::dmpnn::{pool_attention, Encoder, EncoderConfig, GraphBatch, Pooling};
use tac_core::features::Featurizer;
use tac_core::gradcheck::{check_total_with, grl_contract, run_suite, GradcheckConfig, Instance};
use tac_core::metrics::{ndcg_at, nci, pr_auc, recall_at, roc_auc, RankedDataset, TopK};
use tac_core::molgraph::{parse_smiles, random_graph, synth_generate, synth_ranking, CompoundRecord, MolecularGraph};
use tac_core::nn::{ParamSet, Tape};
use tac_core::pairing::{balance_assay, canonical_key, pair_assays, resolve_pair, Assay, PairProfile, PairingConfig};
use tac_core::ranking::{ordered_pairs, rank_loss, ranked_dataset, train_gnncp, RankConfig};
use tac_core::transfer::{entropy, train, GradReversal, TrainConfig, Variant};
use tac_core::Tensor;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()))
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const GRAD_TOL: f64 = 1e-4;

fn c1_gradients() -> Outcome {
    let t0 = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut checks = 0;
    for seed in 0..3 {
        let cfg = GradcheckConfig { seed, d: 6, tau: 2, max_atoms: 5, ..GradcheckConfig::default() };
        for e in run_suite(&cfg).map_err(e2s)? {
            checks += 1;
            if e.max_rel_error > worst.0 {
                worst = (e.max_rel_error, format!("{} / {}", e.loss, e.params));
            }
        }
    }
    ensure(worst.0 < GRAD_TOL, || format!("max rel error {:.3e} at {}", worst.0, worst.1))?;
    within(t0.elapsed(), 60.0)?;
    Ok(format!("{checks} checks, max rel error {:.2e} < {GRAD_TOL:e} ({})", worst.0, worst.1))
}

fn c2_grl() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = GradcheckConfig::default();
    let mut compared = 0;
    for _ in 0..3 {
        for variant in [Variant::TAcF, Variant::TAcC, Variant::TAcFC, Variant::Dann] {
            for pooling in [Pooling::Mean, Pooling::Attention] {
                let r = grl_contract(&mut rng, &cfg, variant, pooling).map_err(e2s)?;
                ensure(r.holds(), || format!("{variant} {pooling:?}: {r:?}"))?;
                compared += r.compared;
            }
        }
    }
    // Without the reversal the encoder gradient no longer matches the objective.
    let bypassed = check_total_with(&mut rng, &cfg, Variant::TAcFC, Pooling::Mean, GradReversal::Bypassed).map_err(e2s)?;
    let enc = bypassed.iter().find(|e| e.params == "encoder+classifier").ok_or("no encoder entry")?;
    ensure(!enc.passed(), || format!("bypassed reversal went unnoticed: {enc:?}"))?;
    within(t0.elapsed(), 5.0)?;
    Ok(format!("{compared} encoder gradient entries bitwise negated; bypass detected ({:.1e})", enc.max_rel_error))
}

fn encoder(cfg: EncoderConfig, seed: u64) -> (ParamSet<f64>, Encoder) {
    let mut params = ParamSet::new();
    let enc = Encoder::new(&mut params, "enc", cfg, &mut ChaCha8Rng::seed_from_u64(seed));
    (params, enc)
}

fn c3_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let family: Vec<MolecularGraph> = (0..50).map(|_| random_graph(&mut rng, 4)).collect();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for tau in 0..=2 {
        let (params, enc) = encoder(EncoderConfig { d: 8, tau, pooling: Pooling::Mean, attn_hidden: 4 }, 60 + tau as u64);
        let dense = oracle::Dense::from_encoder(&params, &enc);
        for g in &family {
            let tape = Tape::new();
            let b = params.bind(&tape);
            let batch = GraphBatch::new(&[g]);
            let h = enc.edge_states(&b, &batch).map_err(e2s)?.value();
            for (e, &(u, v)) in g.directed_edges().iter().enumerate() {
                for (x, y) in h.row(e).iter().zip(oracle::edge_state(g, &dense, u, v, tau)) {
                    worst = worst.max((x - y).abs());
                    compared += 1;
                }
            }
            let r = enc.encode(&b, &batch).map_err(e2s)?.value();
            for (x, y) in r.row(0).iter().zip(oracle::mean_embedding(g, &dense)) {
                worst = worst.max((x - y).abs());
                compared += 1;
            }
        }
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:.3e}"))?;
    within(t0.elapsed(), 10.0)?;
    Ok(format!("50 graphs x tau 0..=2, {compared} values, max deviation {worst:.1e} < 1e-12"))
}

fn c4_permutation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for pooling in [Pooling::Mean, Pooling::Attention] {
        let (params, enc) = encoder(EncoderConfig { d: 8, tau: 3, pooling, attn_hidden: 6 }, 14);
        for _ in 0..100 {
            let g = random_graph(&mut rng, 10);
            let mut perm: Vec<usize> = (0..g.n_atoms()).collect();
            perm.shuffle(&mut rng);
            let a = enc.embed(&params, &[&g]).map_err(e2s)?;
            let b = enc.embed(&params, &[&g.relabel(&perm)]).map_err(e2s)?;
            worst = worst.max(a.zip_map(&b, |x, y| x - y).max_abs());
        }
    }
    ensure(worst < 1e-10, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("200 draws, max deviation {worst:.1e} < 1e-10"))
}

fn c5_attention() -> Outcome {
    let (params, enc) = encoder(EncoderConfig { d: 8, tau: 2, pooling: Pooling::Attention, attn_hidden: 6 }, 5);
    let attn = enc.attn.as_ref().ok_or("no attention head")?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sum_err = 0.0f64;
    for _ in 0..100 {
        let g = random_graph(&mut rng, 9);
        let tape = Tape::new();
        let b = params.bind(&tape);
        let batch = GraphBatch::new(&[&g]);
        let s = enc.atom_states(&b, &batch).map_err(e2s)?;
        let (_, w) = pool_attention(attn, &b, s, &batch).map_err(e2s)?;
        sum_err = sum_err.max((w.value().sum() - 1.0).abs());
    }
    ensure(sum_err <= 1e-12, || format!("weights sum off by {sum_err:.3e}"))?;

    for smiles in ["C", "N", "O", "S", "Cl"] {
        let g = parse_smiles(smiles).map_err(e2s)?;
        let tape = Tape::new();
        let b = params.bind(&tape);
        let batch = GraphBatch::new(&[&g]);
        let s = enc.atom_states(&b, &batch).map_err(e2s)?;
        let (r, _) = pool_attention(attn, &b, s, &batch).map_err(e2s)?;
        let (r, s) = (r.value(), s.value());
        ensure((0..8).all(|c| r.get(0, c) == 2.0 * s.get(0, c)), || format!("{smiles}: r != 2s"))?;
    }

    let mut ident_err = 0.0f64;
    for n in 3..=8 {
        let g = parse_smiles(&format!("C1{}1", "C".repeat(n - 1))).map_err(e2s)?;
        let tape = Tape::new();
        let b = params.bind(&tape);
        let batch = GraphBatch::new(&[&g]);
        let s = enc.atom_states(&b, &batch).map_err(e2s)?;
        let (r, _) = pool_attention(attn, &b, s, &batch).map_err(e2s)?;
        let (r, s) = (r.value(), s.value());
        for c in 0..8 {
            ident_err = ident_err.max((r.get(0, c) - (n as f64 + 1.0) * s.get(0, c)).abs());
        }
        // Same identity with arbitrary equal rows fed straight to the pooling.
        let row: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rows = tape.constant(Tensor::from_rows(&vec![row.clone(); n]));
        let (r, _) = pool_attention(attn, &b, rows, &batch).map_err(e2s)?;
        for (c, x) in row.iter().enumerate() {
            ident_err = ident_err.max((r.value().get(0, c) - (n as f64 + 1.0) * x).abs());
        }
    }
    ensure(ident_err < 1e-10, || format!("(n+1)s identity off by {ident_err:.3e}"))?;
    Ok(format!("sum err {sum_err:.1e} <= 1e-12, single atom exact, identical atoms {ident_err:.1e} < 1e-10"))
}

fn brute_roc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                twice_wins += if si > sj { 2 } else if si == sj { 1 } else { 0 };
            }
        }
    }
    twice_wins as f64 / 2.0 / pairs as f64
}

fn brute_nci(activity: &[f64], scores: &[f64]) -> f64 {
    let (mut bad, mut pairs) = (0u64, 0u64);
    for i in 0..activity.len() {
        for j in 0..activity.len() {
            if activity[i] > activity[j] {
                pairs += 1;
                if scores[i] <= scores[j] {
                    bad += 1;
                }
            }
        }
    }
    bad as f64 / pairs as f64
}

fn c6_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..1000 {
        let n = rng.gen_range(2..=12);
        // Coarse scores so ties are common.
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.5) as u8).collect();
        labels[0] = 1;
        labels[n - 1] = 0;
        let got = roc_auc(&scores, &labels).map_err(e2s)?;
        let want = brute_roc(&scores, &labels);
        ensure(got == want, || format!("roc trial {trial}: {got} vs {want}"))?;

        let mut activity: Vec<f64> = (0..n).map(|i| i as f64).collect();
        activity.shuffle(&mut rng);
        let truth = RankedDataset::new(activity.clone()).map_err(e2s)?;
        let got = nci(&truth, &scores).map_err(e2s)?;
        let want = brute_nci(&activity, &scores);
        ensure(got == want, || format!("nci trial {trial}: {got} vs {want}"))?;
    }

    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let pr = pr_auc(&[0.9, 0.8, 0.3], &[1, 0, 1]).map_err(e2s)?;
    ensure(close(pr, 0.5 * (1.0 + 2.0 / 3.0)), || format!("pr_auc {pr}"))?;
    ensure(close(pr_auc(&[0.9, 0.7, 0.2, 0.1], &[1, 1, 0, 0]).map_err(e2s)?, 1.0), || "perfect pr_auc".into())?;
    for n in 2..=6 {
        let scores: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        let mut labels = vec![0u8; n];
        labels[n - 1] = 1;
        let got = pr_auc(&scores, &labels).map_err(e2s)?;
        ensure(close(got, 1.0 / n as f64), || format!("last positive of {n}: {got}"))?;
    }

    // Truth order (a, b, c), score order (b, a, c); gains 2, 1, 0.
    let truth = RankedDataset::new(vec![3.0, 2.0, 1.0]).map_err(e2s)?;
    let scores = [0.5, 0.9, 0.1];
    let l3 = 3f64.log2();
    let want = (1.0 + 2.0 / l3) / (2.0 + 1.0 / l3);
    let got = ndcg_at(&truth, &scores, TopK::Count(2)).map_err(e2s)?;
    ensure(close(got, want), || format!("ndcg@2 {got} vs {want}"))?;
    ensure(recall_at(&truth, &scores, TopK::Count(2)).map_err(e2s)? == 1.0, || "recall@2".into())?;
    for k in 1..=3 {
        ensure(ndcg_at(&truth, &[3.0, 2.0, 1.0], TopK::Count(k)).map_err(e2s)? == 1.0, || format!("perfect ndcg@{k}"))?;
    }
    Ok(format!("1000 brute-force trials exact; pr_auc, ndcg@2 = {got:.6} within 1e-9"))
}

fn c7_entropy() -> Outcome {
    let cfg = GradcheckConfig { d: 8, ..GradcheckConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bound = 1.0 + std::f64::consts::LN_2;
    let (mut lo, mut hi, mut sampled) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for _ in 0..30 {
        let inst = Instance::draw(&mut rng, &cfg, Variant::TAcFC, Pooling::Attention).map_err(e2s)?;
        let tape = Tape::new();
        let b = inst.model.params.bind(&tape);
        let r = inst.model.embed(&tape, &b, &inst.inputs()).map_err(e2s)?;
        let z = inst.model.classifier_input(&b, r).map_err(e2s)?;
        for (&zi, &ri) in z.value().data().iter().zip(r.value().data()) {
            if ri != 0.0 {
                let q = zi / ri;
                lo = lo.min(q);
                hi = hi.max(q);
                sampled += 1;
            }
        }
    }
    ensure(lo >= 1.0 - 1e-12 && hi <= bound + 1e-12, || format!("ratios span [{lo}, {hi}]"))?;
    let tape = Tape::<f64>::new();
    let h = entropy(tape.constant(Tensor::from_vec(1, 1, vec![0.5]))).map_err(e2s)?.item();
    ensure((h - std::f64::consts::LN_2).abs() <= 1e-12, || format!("H(0.5) = {h}"))?;
    Ok(format!("{sampled} ratios in [{lo:.4}, {hi:.4}] within [1, 1+ln2] +/-1e-12; H(0.5) = ln 2"))
}

/// First ten actives and inactives train, next ten validate, the rest test.
fn split_target(t: &[CompoundRecord]) -> [Vec<CompoundRecord>; 3] {
    let mut out: [Vec<CompoundRecord>; 3] = Default::default();
    for label in [1u8, 0] {
        for (i, r) in t.iter().filter(|r| r.label == Some(label)).enumerate() {
            out[(i / 10).min(2)].push(r.clone());
        }
    }
    out
}

fn transfer_auc(overlap: f64, variant: Variant, alpha: f64) -> Result<Vec<f64>, String> {
    let motif = parse_smiles("O=C(N)c1ccccc1").map_err(e2s)?;
    (0..5)
        .map(|seed| {
            let data = synth_generate(seed, 50, 50, &motif, overlap).map_err(e2s)?;
            let [tr, va, te] = split_target(&data.target);
            let cfg = TrainConfig {
                variant,
                alpha,
                lambda: 0.0,
                seed,
                featurizer: Featurizer::Dmpnn(EncoderConfig { d: 50, tau: 3, pooling: Pooling::Attention, attn_hidden: 100 }),
                ..TrainConfig::default()
            };
            let out = train::<f64, _>(&cfg, &data.source, &tr, &va).map_err(e2s)?;
            let p = out.model.predict(&te).map_err(e2s)?;
            let y: Vec<u8> = te.iter().map(|r| r.label.unwrap()).collect();
            roc_auc(&p, &y).map_err(e2s)
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn c8_transfer() -> Outcome {
    let t0 = Instant::now();
    let tac = mean(&transfer_auc(1.0, Variant::TAc, 0.5)?);
    let not1 = mean(&transfer_auc(1.0, Variant::NoT, 0.0)?);
    let tac0 = mean(&transfer_auc(0.0, Variant::TAc, 0.1)?);
    let not0 = mean(&transfer_auc(0.0, Variant::NoT, 0.0)?);
    let detail = format!("overlap 1: TAc {tac:.4} vs NoT {not1:.4}; overlap 0: TAc(0.1) {tac0:.4} vs NoT {not0:.4}");
    ensure(tac >= 0.95 && tac >= not1, || detail.clone())?;
    ensure(not0 - tac0 < 0.05, || detail.clone())?;
    within(t0.elapsed(), 300.0)?;
    Ok(format!("{detail} ({:.0}s)", t0.elapsed().as_secs_f64()))
}

fn c9_ranking() -> Outcome {
    let tape = Tape::<f64>::new();
    let scores = tape.constant(Tensor::from_vec(6, 1, vec![0.37; 6]));
    let pairs = ordered_pairs(&[5.0, 1.0, 3.0, 2.0, 6.0, 4.0]);
    let l = rank_loss(scores, &pairs).map_err(e2s)?.item();
    ensure((l - std::f64::consts::LN_2).abs() <= 1e-12, || format!("rank_loss at zero margin {l}"))?;

    let motif = parse_smiles("O=C(N)c1ccccc1").map_err(e2s)?;
    let mut cis = Vec::new();
    for seed in 0..3 {
        let data = synth_ranking(seed, 150, &motif, 3).map_err(e2s)?;
        let (tr, te) = data.split_at(120);
        let cfg = RankConfig {
            featurizer: Featurizer::Dmpnn(EncoderConfig { d: 25, tau: 3, pooling: Pooling::Attention, attn_hidden: 10 }),
            epochs: 50,
            batch_size: 32,
            lr: 5e-3,
            l2: 1e-6,
            seed,
        };
        let out = train_gnncp::<f64, _>(&cfg, tr).map_err(e2s)?;
        let s = out.model.score_examples(te).map_err(e2s)?;
        cis.push(tac_core::metrics::concordance_index(&ranked_dataset(te).map_err(e2s)?, &s).map_err(e2s)?);
    }
    ensure(cis.iter().all(|&c| c >= 0.95), || format!("test CI {cis:.4?}"))?;
    Ok(format!("test CI {cis:.4?} >= 0.95 after 50 epochs; zero-margin loss = ln 2"))
}

fn ring(element: &str, n: usize) -> String {
    format!("{element}1{}1", element.repeat(n - 1))
}

fn rec(id: &str, smiles: &str, label: u8) -> CompoundRecord {
    let mut r = CompoundRecord::from_smiles(id, smiles).unwrap().with_label(label);
    r.family = Some("kinase".into());
    r
}

fn c10_pairing() -> Outcome {
    // An n-membered carbon ring has count vector n·v, so Tanimoto(Cn, Cm) = min/max.
    let a = vec![rec("a1", &ring("C", 6), 1), rec("a1-dup", &ring("C", 6), 1), rec("a0", &ring("C", 5), 0)];
    let b = vec![rec("b1", &ring("C", 12), 1), rec("b0", &ring("N", 3), 0)];
    let c = vec![rec("c1", &ring("C", 3), 1), rec("c2", &ring("C", 7), 1), rec("c3", &ring("C", 10), 0), rec("c4", &ring("C", 8), 0)];
    let assays = vec![Assay::new("A", a), Assay::new("B", b), Assay::new("C", c)];
    let out = pair_assays(&assays, &[], &PairingConfig { min_actives: 1, ..PairingConfig::default() }).map_err(e2s)?;
    // Cn against Cm: min(n,m)/max(n,m); averages over the balanced sets.
    let ab = PairProfile { sim_pp: 6.0 / 12.0, sim_nn: 0.0, sim_pn: 0.0, sim_np: 5.0 / 12.0 };
    let ac_pp = (3.0 / 6.0 + 6.0 / 7.0) / 2.0;
    let ac_nn = (5.0 / 10.0 + 5.0 / 8.0) / 2.0;
    let ac_pn = (6.0 / 10.0 + 6.0 / 8.0) / 2.0;
    let ac_np = (3.0 / 5.0 + 5.0 / 7.0) / 2.0;
    let ac = PairProfile { sim_pp: ac_pp, sim_nn: ac_nn, sim_pn: ac_pn, sim_np: ac_np };
    let bc = PairProfile { sim_pp: (3.0 / 12.0 + 7.0 / 12.0) / 2.0, sim_nn: 0.0, sim_pn: (10.0 / 12.0 + 8.0 / 12.0) / 2.0, sim_np: 0.0 };
    let expect = [("A", "B", ab, true, true), ("A", "C", ac, true, false), ("B", "C", bc, false, false)];
    ensure(out.manifest.pairs.len() == 3, || format!("{} pairs", out.manifest.pairs.len()))?;
    for (e, (x, y, p, p0, sel)) in out.manifest.pairs.iter().zip(expect) {
        ensure((e.a.as_str(), e.b.as_str()) == (x, y), || format!("pair {}-{}", e.a, e.b))?;
        let got = e.profile.ok_or("missing profile")?;
        for (g, w) in [(got.sim_pp, p.sim_pp), (got.sim_nn, p.sim_nn), (got.sim_pn, p.sim_pn), (got.sim_np, p.sim_np)] {
            ensure((g - w).abs() <= 1e-15, || format!("{x}-{y}: {g} vs {w}"))?;
        }
        ensure(e.in_p0 == p0 && e.selected == sel, || format!("{x}-{y}: P0 {} P {}", e.in_p0, e.selected))?;
    }
    ensure(out.manifest.pairs[1].margin.is_some_and(|m| m < 0.026), || "A-C margin".into())?;

    let vocab: Vec<String> = (3..15).flat_map(|n| ["C", "N", "O"].map(|e| ring(e, n))).collect();
    let pool: Vec<CompoundRecord> = (3..40).map(|n| rec(&format!("pool{n}"), &ring("S", n), 0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let draw = |rng: &mut ChaCha8Rng, id: &str| {
        let records =
            (0..25).map(|i| rec(&format!("{id}{i}"), &vocab[rng.gen_range(0..vocab.len())], rng.gen_bool(0.3) as u8)).collect();
        Assay::new(id, records)
    };
    for trial in 0..100 {
        let (a, b) = (draw(&mut rng, "a"), draw(&mut rng, "b"));
        let (ra, rb) = resolve_pair(&a, &b, &mut rng).map_err(e2s)?;
        let ka: HashSet<String> = ra.records.iter().map(canonical_key).collect();
        let kb: HashSet<String> = rb.records.iter().map(canonical_key).collect();
        ensure(ka.is_disjoint(&kb) && ka.len() == ra.records.len(), || format!("resolve trial {trial}"))?;
        for (assay, other) in [(&ra, &kb), (&rb, &ka)] {
            let bal = balance_assay(assay, &pool, other, &mut rng).map_err(e2s)?;
            let kbal: HashSet<String> = bal.records.iter().map(canonical_key).collect();
            ensure(
                bal.count(1) == bal.count(0) && bal.count(1) == assay.count(1) && kbal.is_disjoint(other),
                || format!("balance trial {trial}"),
            )?;
        }
    }
    Ok("3-assay golden profiles within 1e-15, P0 {AB, AC}, P {AB}; 100 resolve/balance trials".into())
}

fn tac(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tac")).current_dir(dir).args(args).output().map_err(e2s)?;
    ensure(out.status.success(), || format!("tac {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn collect(dir: &Path, base: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect(&p, base, out)?;
        } else {
            out.insert(p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p)?);
        }
    }
    Ok(())
}

const TRAIN_CONFIG: &str = r#"
out = "train"
[data]
source = "syn/source.jsonl"
target = "syn/target.jsonl"
[cv]
variants = ["tac-fc", "not"]
inputs = ["dmpnn", "morgan"]
alpha = [0.5]
lambda = [0.1]
head_hidden = [6]
epochs = 3
folds = 4
seed = 3
[cv.encoder]
d = [6]
tau = [2]
pooling = ["mean", "attention"]
attn_hidden = [4]
"#;

fn session(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    std::fs::write(dir.join("exp.toml"), TRAIN_CONFIG).map_err(e2s)?;
    tac(dir, &["synth", "--seed", "4", "--actives", "12", "--inactives", "12", "--out", "syn"])?;
    tac(dir, &["synth", "--seed", "5", "--actives", "10", "--inactives", "10", "--overlap", "0.5", "--out", "syn2"])?;
    tac(dir, &["synth", "--kind", "ranking", "--seed", "6", "--n", "30", "--out", "rk"])?;
    tac(dir, &["train", "--config", "exp.toml"])?;
    tac(dir, &["eval", "--checkpoint", "train/checkpoints/source__target.ckpt", "--data", "syn/target.jsonl", "--out", "eval"])?;
    std::fs::create_dir_all(dir.join("assays")).map_err(e2s)?;
    for (from, to) in [("syn/source", "p"), ("syn/target", "q"), ("syn2/target", "r")] {
        std::fs::copy(dir.join(format!("{from}.jsonl")), dir.join(format!("assays/{to}.jsonl"))).map_err(e2s)?;
    }
    tac(dir, &["pair", "--assays", "assays/p.jsonl", "assays/q.jsonl", "assays/r.jsonl", "--pool", "syn2/source.jsonl", "--min-actives", "1", "--seed", "2", "--out", "pairs"])?;
    tac(dir, &["rank", "--assays", "rk/ranking.jsonl", "--d", "6", "--attn-hidden", "4", "--epochs", "3", "--lr", "0.005,0.001", "--batch-size", "16", "--out", "rank"])?;
    tac(dir, &["gradcheck", "--seed", "1", "--json", "gradcheck.json"])?;
    let mut files = BTreeMap::new();
    collect(dir, dir, &mut files).map_err(e2s)?;
    Ok(files)
}

fn c11_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(e2s)?, tempfile::tempdir().map_err(e2s)?);
    let fa = session(a.path())?;
    let fb = session(b.path())?;
    ensure(fa.keys().eq(fb.keys()), || "runs wrote different file sets".into())?;
    for (path, bytes) in &fa {
        ensure(fb[path] == *bytes, || format!("{} differs", path.display()))?;
    }
    let ckpts = fa.keys().filter(|p| p.extension().is_some_and(|e| e == "ckpt")).count();
    ensure(ckpts > 0, || "no checkpoints written".into())?;
    Ok(format!("synth/train/eval/pair/rank/gradcheck rerun: {} files ({ckpts} checkpoints) byte-identical", fa.len()))
}

fn main() {
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let criteria: [Criterion; 11] = [
        (1, "gradient correctness", c1_gradients),
        (2, "reversal contract", c2_grl),
        (3, "encoder oracle", c3_oracle),
        (4, "permutation invariance", c4_permutation),
        (5, "attention identities", c5_attention),
        (6, "metric oracles", c6_metrics),
        (7, "entropy scaling", c7_entropy),
        (8, "synthetic transfer", c8_transfer),
        (9, "ranking", c9_ranking),
        (10, "pairing golden", c10_pairing),
        (11, "determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
