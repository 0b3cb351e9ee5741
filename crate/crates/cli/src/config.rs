//! Experiment configuration files. Every section is optional and every
//! grid value can be overridden on the command line.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tac_core::pairing::PairingConfig;
use tac_core::protocol::{CvSpec, RankSpec};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub out: Option<PathBuf>,
    pub data: DataSection,
    pub cv: CvSpec,
    pub rank: RankSection,
    pub pairing: PairingSection,
}

/// Classification inputs: an explicit source/target pair, or the selected
/// pairs of a manifest written by `tac pair`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct RankSection {
    pub assays: Vec<PathBuf>,
    #[serde(flatten)]
    pub spec: RankSpec,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct PairingSection {
    pub assays: Vec<PathBuf>,
    pub pool: Option<PathBuf>,
    #[serde(flatten)]
    pub config: PairingConfig,
}

impl Config {
    /// Relative paths in the file are resolved against its directory.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut c: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        c.out.iter_mut().for_each(fix);
        c.data.source.iter_mut().for_each(fix);
        c.data.target.iter_mut().for_each(fix);
        c.data.manifest.iter_mut().for_each(fix);
        c.rank.assays.iter_mut().for_each(fix);
        c.pairing.assays.iter_mut().for_each(fix);
        c.pairing.pool.iter_mut().for_each(fix);
        Ok(c)
    }
}

/// Parses an enum value by its serialized name, e.g. `tac-fc` or `attention`.
pub fn parse_named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_string())).map_err(|e| format!("{s:?}: {e}"))
}

/// Replaces `target` with the flag's values when the flag was given.
pub fn set<T>(target: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *target = v;
    }
}
