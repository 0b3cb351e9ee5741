//! Bioassay curation and selection of transferable assay pairs.
//!
//! Per candidate pair: conflicting cross-assay compounds are dropped, shared
//! same-label compounds are split between the two assays, each assay is
//! balanced to equal active and inactive counts, and the four mean
//! cross-similarities of the balanced assays decide membership in `P₀`
//! and `P`.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, PairingError, Result};
use crate::fingerprint::{graph_hash, mean_cross_similarity_fp, morgan_count, FingerprintVector, DEFAULT_DIM, PAIRING_RADIUS};
use crate::molgraph::{load_dataset, CompoundRecord};

pub const DEFAULT_MARGIN: f64 = 0.026;
pub const DEFAULT_MIN_ACTIVES: usize = 50;

/// Identity used to detect the same compound across records: the SMILES
/// string when present, otherwise a structural hash of the graph.
pub fn canonical_key(r: &CompoundRecord) -> String {
    match &r.smiles {
        Some(s) => format!("smiles:{s}"),
        None => format!("graph:{:016x}", graph_hash(&r.graph)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assay {
    pub id: String,
    pub family: Option<String>,
    pub records: Vec<CompoundRecord>,
}

impl Assay {
    /// The family is taken from the first record that carries one.
    pub fn new(id: impl Into<String>, records: Vec<CompoundRecord>) -> Self {
        let family = records.iter().find_map(|r| r.family.clone());
        Self { id: id.into(), family, records }
    }

    /// Loads a JSONL assay; its id is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Self::new(id, load_dataset(path)?))
    }

    fn label(r: &CompoundRecord) -> Result<u8> {
        r.label.ok_or_else(|| PairingError::MissingLabel(r.id.clone()).into())
    }

    pub fn count(&self, label: u8) -> usize {
        self.records.iter().filter(|r| r.label == Some(label)).count()
    }

    pub fn with_label(&self, label: u8) -> Vec<&CompoundRecord> {
        self.records.iter().filter(|r| r.label == Some(label)).collect()
    }

    fn keyed(&self) -> Result<HashMap<String, u8>> {
        self.records.iter().map(|r| Ok((canonical_key(r), Self::label(r)?))).collect()
    }
}

/// Collapses same-label duplicates to their first record and removes
/// compounds that occur with both labels.
pub fn dedup_assay(a: &Assay) -> Result<Assay> {
    let mut labels: HashMap<String, (u8, bool)> = HashMap::new();
    for r in &a.records {
        let l = Assay::label(r)?;
        let e = labels.entry(canonical_key(r)).or_insert((l, false));
        if e.0 != l {
            e.1 = true;
        }
    }
    let mut kept = HashSet::new();
    let records = a
        .records
        .iter()
        .filter(|r| {
            let k = canonical_key(r);
            !labels[&k].1 && kept.insert(k)
        })
        .cloned()
        .collect();
    Ok(Assay { records, ..a.clone() })
}

/// Removes compounds whose labels disagree across `a` and `b`, and splits
/// shared same-label compounds: a uniformly random `⌊n/2⌋` stay in `a`,
/// the rest in `b`. Both assays are deduplicated first.
pub fn resolve_pair<R: Rng + ?Sized>(a: &Assay, b: &Assay, rng: &mut R) -> Result<(Assay, Assay)> {
    let (a, b) = (dedup_assay(a)?, dedup_assay(b)?);
    let (ka, kb) = (a.keyed()?, b.keyed()?);
    let mut conflicting = HashSet::new();
    let mut shared = Vec::new();
    for (k, la) in &ka {
        match kb.get(k) {
            Some(lb) if lb != la => {
                conflicting.insert(k.clone());
            }
            Some(_) => shared.push(k.clone()),
            None => {}
        }
    }
    shared.sort();
    shared.shuffle(rng);
    let half = shared.len() / 2;
    let stay_a: HashSet<&String> = shared[..half].iter().collect();
    let stay_b: HashSet<&String> = shared[half..].iter().collect();
    let keep = |assay: &Assay, drop: &HashSet<&String>| -> Assay {
        let records = assay
            .records
            .iter()
            .filter(|r| {
                let k = canonical_key(r);
                !conflicting.contains(&k) && !drop.contains(&k)
            })
            .cloned()
            .collect();
        Assay { records, ..assay.clone() }
    };
    let (out_a, out_b) = (keep(&a, &stay_b), keep(&b, &stay_a));
    Ok((out_a, out_b))
}

/// Keeps every active and samples inactives without replacement up to the
/// active count. When the assay's own inactives fall short, the rest come
/// from `pool` (relabelled inactive), skipping compounds already in the
/// assay and any key in `exclude`.
pub fn balance_assay<R: Rng + ?Sized>(
    a: &Assay,
    pool: &[CompoundRecord],
    exclude: &HashSet<String>,
    rng: &mut R,
) -> Result<Assay> {
    let n_active = a.count(1);
    let mut inactive_idx: Vec<usize> = (0..a.records.len()).filter(|&i| a.records[i].label == Some(0)).collect();
    let mut chosen: HashSet<usize> = HashSet::new();
    let mut extra = Vec::new();
    if inactive_idx.len() >= n_active {
        inactive_idx.shuffle(rng);
        chosen.extend(inactive_idx.into_iter().take(n_active));
    } else {
        chosen.extend(inactive_idx.iter().copied());
        let need = n_active - inactive_idx.len();
        let present: HashSet<String> = a.records.iter().map(canonical_key).collect();
        let ids: HashSet<&str> = a.records.iter().map(|r| r.id.as_str()).collect();
        let mut eligible: Vec<usize> = (0..pool.len())
            .filter(|&i| {
                let k = canonical_key(&pool[i]);
                pool[i].label != Some(1) && !present.contains(&k) && !exclude.contains(&k) && !ids.contains(pool[i].id.as_str())
            })
            .collect();
        // Pool duplicates count once.
        let mut seen = HashSet::new();
        eligible.retain(|&i| seen.insert(canonical_key(&pool[i])));
        if eligible.len() < need {
            return Err(PairingError::InsufficientInactives { assay: a.id.clone(), need, available: eligible.len() }.into());
        }
        eligible.shuffle(rng);
        let mut picked: Vec<usize> = eligible.into_iter().take(need).collect();
        picked.sort_unstable();
        extra = picked
            .into_iter()
            .map(|i| {
                let mut r = pool[i].clone();
                r.label = Some(0);
                r.family = a.family.clone().or(r.family);
                r
            })
            .collect();
    }
    let mut records: Vec<CompoundRecord> = a
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| r.label == Some(1) || chosen.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    records.extend(extra);
    Ok(Assay { records, ..a.clone() })
}

/// Mean cross-assay similarities by label: `pp` is actives of `a` against
/// actives of `b`, `pn` actives of `a` against inactives of `b`, and so on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairProfile {
    pub sim_pp: f64,
    pub sim_nn: f64,
    pub sim_pn: f64,
    pub sim_np: f64,
}

impl PairProfile {
    /// `(pp − pn) + (pp − np)`.
    pub fn margin(&self) -> f64 {
        (self.sim_pp - self.sim_pn) + (self.sim_pp - self.sim_np)
    }

    pub fn in_p0(&self) -> bool {
        self.sim_pp > self.sim_pn && self.sim_pp > self.sim_np
    }
}

fn fingerprints(records: &[&CompoundRecord], radius: usize, dim: usize) -> Vec<FingerprintVector> {
    records.par_iter().map(|r| morgan_count(&r.graph, radius, dim)).collect()
}

/// Profile on Morgan-count fingerprints of the given radius and width.
pub fn profile(a: &Assay, b: &Assay, radius: usize, dim: usize) -> Result<PairProfile> {
    let fa = (fingerprints(&a.with_label(1), radius, dim), fingerprints(&a.with_label(0), radius, dim));
    let fb = (fingerprints(&b.with_label(1), radius, dim), fingerprints(&b.with_label(0), radius, dim));
    let sim = |x: &[FingerprintVector], y: &[FingerprintVector]| mean_cross_similarity_fp(x, y).map_err(PairingError::from);
    Ok(PairProfile { sim_pp: sim(&fa.0, &fb.0)?, sim_nn: sim(&fa.1, &fb.1)?, sim_pn: sim(&fa.0, &fb.1)?, sim_np: sim(&fa.1, &fb.0)? })
}

/// `P₀` and `P` membership for each profile, plus the mean margin over
/// `P₀` and over all profiles (`None` when the set is empty).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Selection {
    pub in_p0: Vec<bool>,
    pub in_p: Vec<bool>,
    pub mean_margin_p0: Option<f64>,
    pub mean_margin_all: Option<f64>,
}

pub fn select_pairs(profiles: &[PairProfile], margin: f64) -> Selection {
    let in_p0: Vec<bool> = profiles.iter().map(PairProfile::in_p0).collect();
    let in_p = profiles.iter().zip(&in_p0).map(|(p, &z)| z && p.margin() >= margin).collect();
    let mean = |it: Vec<f64>| (!it.is_empty()).then(|| it.iter().sum::<f64>() / it.len() as f64);
    let mean_margin_p0 = mean(profiles.iter().zip(&in_p0).filter(|(_, &z)| z).map(|(p, _)| p.margin()).collect());
    let mean_margin_all = mean(profiles.iter().map(PairProfile::margin).collect());
    Selection { in_p0, in_p, mean_margin_p0, mean_margin_all }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingConfig {
    pub seed: u64,
    pub margin: f64,
    /// Pairs with fewer actives left in either assay are not profiled.
    pub min_actives: usize,
    pub radius: usize,
    pub dim: usize,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self { seed: 0, margin: DEFAULT_MARGIN, min_actives: DEFAULT_MIN_ACTIVES, radius: PAIRING_RADIUS, dim: DEFAULT_DIM }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub a: String,
    pub b: String,
    pub family: Option<String>,
    pub actives_a: usize,
    pub actives_b: usize,
    /// `None` when the pair has too few actives to be profiled.
    pub profile: Option<PairProfile>,
    pub margin: Option<f64>,
    pub in_p0: bool,
    pub selected: bool,
    /// Why the pair could not be balanced, if it could not.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub config: PairingConfig,
    pub mean_margin_p0: Option<f64>,
    pub mean_margin_all: Option<f64>,
    pub pairs: Vec<PairEntry>,
}

/// Manifest plus the resolved and balanced assays of every profiled pair,
/// in manifest order.
pub struct PairingOutput {
    pub manifest: PairManifest,
    pub assays: Vec<Option<(Assay, Assay)>>,
}

fn compatible(a: &Assay, b: &Assay) -> bool {
    match (&a.family, &b.family) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

/// Runs the pipeline over every unordered pair `i < j` of compatible
/// assays. Pair `k` draws from its own ChaCha8 stream `k` of `config.seed`,
/// so results do not depend on scheduling.
pub fn pair_assays(assays: &[Assay], pool: &[CompoundRecord], config: &PairingConfig) -> Result<PairingOutput> {
    let mut candidates = Vec::new();
    for i in 0..assays.len() {
        for j in i + 1..assays.len() {
            if compatible(&assays[i], &assays[j]) {
                candidates.push((i, j));
            }
        }
    }
    type PairResult = Result<(PairEntry, Option<(Assay, Assay)>)>;
    let results: Vec<PairResult> = candidates
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            let (a, b) = resolve_pair(&assays[i], &assays[j], &mut rng)?;
            let mut entry = PairEntry {
                a: a.id.clone(),
                b: b.id.clone(),
                family: a.family.clone().or(b.family.clone()),
                actives_a: a.count(1),
                actives_b: b.count(1),
                profile: None,
                margin: None,
                in_p0: false,
                selected: false,
                skipped: None,
            };
            let balanced = (|| {
                let keys_b: HashSet<String> = b.records.iter().map(canonical_key).collect();
                let a = balance_assay(&a, pool, &keys_b, &mut rng)?;
                let keys_a: HashSet<String> = a.records.iter().map(canonical_key).collect();
                let b = balance_assay(&b, pool, &keys_a, &mut rng)?;
                Ok::<_, Error>((a, b))
            })();
            let (a, b) = match balanced {
                Ok(ab) => ab,
                Err(e @ Error::Pairing(PairingError::InsufficientInactives { .. })) => {
                    entry.skipped = Some(e.to_string());
                    return Ok((entry, None));
                }
                Err(e) => return Err(e),
            };
            let (na, nb) = (a.count(1), b.count(1));
            if na < config.min_actives.max(1) || nb < config.min_actives.max(1) {
                return Ok((entry, None));
            }
            let p = profile(&a, &b, config.radius, config.dim)?;
            entry.profile = Some(p);
            entry.margin = Some(p.margin());
            Ok((entry, Some((a, b))))
        })
        .collect();
    let mut pairs = Vec::with_capacity(results.len());
    let mut out_assays = Vec::with_capacity(results.len());
    for r in results {
        let (e, a) = r?;
        pairs.push(e);
        out_assays.push(a);
    }
    let profiled: Vec<usize> = (0..pairs.len()).filter(|&k| pairs[k].profile.is_some()).collect();
    let profiles: Vec<PairProfile> = profiled.iter().map(|&k| pairs[k].profile.expect("profiled")).collect();
    let sel = select_pairs(&profiles, config.margin);
    for (n, &k) in profiled.iter().enumerate() {
        pairs[k].in_p0 = sel.in_p0[n];
        pairs[k].selected = sel.in_p[n];
    }
    let manifest =
        PairManifest { config: *config, mean_margin_p0: sel.mean_margin_p0, mean_margin_all: sel.mean_margin_all, pairs };
    Ok(PairingOutput { manifest, assays: out_assays })
}

/// Loads every assay file in `paths`, in the given order.
pub fn load_assays<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<Assay>> {
    let mut out = Vec::with_capacity(paths.len());
    let mut ids = HashSet::new();
    for p in paths {
        let a = Assay::load(p)?;
        if !ids.insert(a.id.clone()) {
            return Err(PairingError::DuplicateAssay(a.id).into());
        }
        out.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, smiles: &str, label: u8) -> CompoundRecord {
        CompoundRecord::from_smiles(id, smiles).unwrap().with_label(label)
    }

    #[test]
    fn dedup_rules() {
        let a = Assay::new("a", vec![rec("1", "CCO", 1), rec("2", "CCO", 1), rec("3", "CCN", 1), rec("4", "CCN", 0), rec("5", "CC", 0)]);
        let d = dedup_assay(&a).unwrap();
        let ids: Vec<&str> = d.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["1", "5"]);
        assert_eq!(dedup_assay(&d).unwrap(), d);
    }

    #[test]
    fn resolve_splits_and_drops() {
        let shared = ["C", "CC", "CCC", "CCCC"];
        let mut ra: Vec<_> = shared.iter().enumerate().map(|(i, s)| rec(&format!("a{i}"), s, 1)).collect();
        let mut rb: Vec<_> = shared.iter().enumerate().map(|(i, s)| rec(&format!("b{i}"), s, 1)).collect();
        ra.push(rec("ax", "CO", 1));
        rb.push(rec("bx", "CO", 0));
        ra.push(rec("only", "CN", 0));
        let (a, b) = resolve_pair(&Assay::new("a", ra), &Assay::new("b", rb), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let ka: HashSet<String> = a.records.iter().map(canonical_key).collect();
        let kb: HashSet<String> = b.records.iter().map(canonical_key).collect();
        assert!(ka.is_disjoint(&kb));
        assert_eq!((a.records.len(), b.records.len()), (3, 2));
        assert!(!ka.contains("smiles:CO") && ka.contains("smiles:CN"));
    }

    #[test]
    fn odd_split_floors_to_first() {
        let shared = ["C", "CC", "CCC"];
        let ra: Vec<_> = shared.iter().enumerate().map(|(i, s)| rec(&format!("a{i}"), s, 0)).collect();
        let rb: Vec<_> = shared.iter().enumerate().map(|(i, s)| rec(&format!("b{i}"), s, 0)).collect();
        let (a, b) = resolve_pair(&Assay::new("a", ra), &Assay::new("b", rb), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!((a.records.len(), b.records.len()), (1, 2));
    }

    #[test]
    fn balance_draws_from_pool() {
        let mut rs: Vec<_> = (0..5).map(|i| rec(&format!("p{i}"), &"C".repeat(i + 1), 1)).collect();
        rs.push(rec("n0", "O", 0));
        let pool: Vec<_> = (0..6).map(|i| rec(&format!("q{i}"), &"N".repeat(i + 1), 0)).collect();
        let out = balance_assay(&Assay::new("a", rs.clone()), &pool, &HashSet::new(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!((out.count(1), out.count(0)), (5, 5));
        assert_eq!(out.records.iter().filter(|r| r.id.starts_with('q')).count(), 4);
        let err = balance_assay(&Assay::new("a", rs), &pool[..2], &HashSet::new(), &mut ChaCha8Rng::seed_from_u64(1));
        assert!(err.is_err());
    }

    #[test]
    fn balance_subsamples_own_inactives() {
        let mut rs: Vec<_> = (0..3).map(|i| rec(&format!("p{i}"), &"C".repeat(i + 1), 1)).collect();
        rs.extend((0..9).map(|i| rec(&format!("n{i}"), &"O".repeat(i + 1), 0)));
        let out = balance_assay(&Assay::new("a", rs), &[], &HashSet::new(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!((out.count(1), out.count(0)), (3, 3));
    }

    #[test]
    fn wide_margin_profile_is_selected() {
        let p = PairProfile { sim_pp: 0.164, sim_nn: 0.2, sim_pn: 0.125, sim_np: 0.136 };
        assert!(p.in_p0());
        assert!((p.margin() - 0.067).abs() < 1e-12);
        let tied = PairProfile { sim_pn: 0.164, ..p };
        let low = PairProfile { sim_pp: 0.14, sim_pn: 0.13, sim_np: 0.13, sim_nn: 0.1 };
        let s = select_pairs(&[p, tied, low], DEFAULT_MARGIN);
        assert_eq!(s.in_p0, [true, false, true]);
        assert_eq!(s.in_p, [true, false, false]);
        assert!((low.margin() - 0.02).abs() < 1e-12);
    }
}
