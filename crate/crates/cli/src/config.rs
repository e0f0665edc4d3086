//! Settings file and flag merging.
//!
//! The file is TOML with optional top-level keys:
//!
//! ```toml
//! delta = 0.1
//! loss_bound = 1.0
//! k_grid = [1, 2, 4, 8]
//! lipschitz = 1.0
//! metric = "haversine"    # or "euclidean"
//! radius = 6371.0088      # haversine only
//! seeds = "0..20"         # or a list, e.g. [0, 3, 7]
//! n_val = [250, 500]
//! n_train = 1000
//! out = "results.csv"
//! full = false
//! ```
//!
//! Command-line flags take precedence over file values.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub delta: Option<f64>,
    pub loss_bound: Option<f64>,
    pub k_grid: Option<Vec<usize>>,
    pub lipschitz: Option<f64>,
    pub metric: Option<String>,
    pub radius: Option<f64>,
    pub seeds: Option<SeedsValue>,
    pub n_val: Option<Vec<usize>>,
    pub n_train: Option<usize>,
    pub out: Option<PathBuf>,
    pub full: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SeedsValue {
    List(Vec<u64>),
    Spec(String),
}

impl SeedsValue {
    pub fn resolve(&self) -> Result<Vec<u64>, String> {
        match self {
            SeedsValue::List(v) => Ok(v.clone()),
            SeedsValue::Spec(s) => parse_seeds(s),
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, String> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// `a..b` (half-open) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range {s:?}"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range {s:?}"))?;
        if a >= b {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok((a..b).collect());
    }
    parse_list(s)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad list entry {:?} in {s:?}", p.trim())))
        .collect()
}
