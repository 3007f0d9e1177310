//! `key = value` run configuration. Every key has a default; unknown keys
//! are rejected; the fully resolved table is written next to the outputs
//! and can be fed back with `--config` for an identical rerun.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use hybridseg::{Error, Result};

/// (key, default, meaning). An empty default means "unset".
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed of every randomised step"),
    ("format", "xyz", "format of written point clouds (xyz or ply)"),
    ("labels", "", "ground-truth label file (one integer per point)"),
    ("semantic", "", "external per-point feature matrix (.fmat) for segmentation"),
    ("fit_type", "auto", "primitive type of cmd fit (plane, sphere, cylinder, cone, auto)"),
    // localfeat
    ("feature_k", "128", "k-NN neighbourhood size (mean k-NN radius) of features"),
    ("feature_radius", "", "fixed neighbourhood radius; overrides feature_k"),
    ("orientation_k", "16", "k of the graph carrying normal orientation"),
    // segmentation pipeline
    ("normal_k", "32", "k-NN size of the pipeline's normal estimate"),
    ("hypothesis_seeds", "512", "points receiving their own RANSAC hypothesis"),
    ("hypothesis_k", "0", "neighbourhood of each hypothesis seed (0 = max(64, N/50))"),
    ("ransac_tol", "0.01", "RANSAC inlier distance"),
    ("ransac_iters", "64", "RANSAC iterations per type"),
    ("complexity_margin", "0.05", "inlier share a more complex type must add"),
    ("sigma_plane", "", "σ of plane hypotheses (default: data driven)"),
    ("sigma_sphere", "", "σ of sphere hypotheses"),
    ("sigma_cylinder", "", "σ of cylinder hypotheses"),
    ("sigma_cone", "", "σ of cone hypotheses"),
    ("sigma_scale", "1", "multiplier on data-driven σ"),
    ("smoothness", "false", "add the normal-smoothness descriptor"),
    ("smoothness_k", "50", "k of the smoothness graph"),
    ("sigma_edge", "0.5", "normal-difference kernel width of the smoothness graph"),
    ("d_c", "", "consistency descriptor dimension (default: eigengap)"),
    ("d_s", "", "smoothness descriptor dimension (default: eigengap)"),
    ("spectral_mode", "per-column", "per-column or block entropy weighting"),
    ("bandwidth", "", "mean-shift bandwidth (default: factor × median distance)"),
    ("bandwidth_factor", "0.3", "bandwidth as a share of the median pairwise distance"),
    ("min_size", "20", "segments smaller than this merge into a neighbour"),
    ("mean_shift_iters", "300", "mean-shift iteration cap"),
    ("mean_shift_tol", "1e-6", "mean-shift convergence tolerance"),
    ("mean_shift_sample", "2048", "mean-shift trajectories started"),
    ("coverage_eps", "0.01", "P-coverage distance threshold"),
    // implicit
    ("query_count", "10000", "queries per scene"),
    ("query_uniform", "0.5", "share of uniform bounding-box queries"),
    ("query_sigma", "0.01", "offset σ of near-surface queries"),
    ("crop_ratio", "0", "fraction of points cropped away before sampling"),
    ("occupancy_fraction", "", "write udf < fraction·diameter occupancy proxy"),
    ("csv", "false", "also write samples.csv"),
    // masking
    ("patches", "128", "patch count K"),
    ("patch_size", "32", "points per patch k"),
    ("mask_ratio", "0.6", "masking ratio m_r"),
    // linear AE
    ("ae_n", "20", "ambient dimension"),
    ("ae_m", "4", "code dimension"),
    ("ae_samples", "200", "sample count"),
    ("ae_noise", "0.5", "noise scale"),
    ("ae_trials", "100", "number of seeded trials"),
    ("ae_probes", "50", "finite-difference probes"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect();
        Self { values }
    }
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("config line {}", no + 1);
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    location: loc,
                    message: format!("expected key = value, got '{line}'"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if !known(k) {
                return Err(Error::Parse {
                    location: loc,
                    message: format!("unknown key '{k}'"),
                });
            }
            if out.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Parse {
                    location: loc,
                    message: format!("duplicate key '{k}'"),
                });
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::default();
        for (k, v) in Self::parse(&text)? {
            cfg.values.insert(k, v);
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !known(key) {
            return Err(Error::InvalidInput(format!("unknown config key '{key}'")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("expected key=value, got '{pair}'")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("config key '{key}' is not registered"))
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| Error::InvalidInput(format!("bad value '{raw}' for config key '{key}'")))
    }

    /// `None` for an empty value.
    pub fn get_opt<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn to_map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// The resolved table in the file syntax, one key per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_rejection() {
        let mut cfg = RunConfig::default();
        cfg.set("seed", "7").unwrap();
        let parsed = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(&parsed, cfg.to_map());
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(RunConfig::parse("seed 1").is_err());
        assert!(cfg.set("nope", "1").is_err());
        let p = RunConfig::parse("# comment\n\nseed = 3 # trailing\n").unwrap();
        assert_eq!(p["seed"], "3");
        assert_eq!(cfg.get::<u64>("seed").unwrap(), 7);
        assert_eq!(cfg.get_opt::<f64>("bandwidth").unwrap(), None);
        cfg.set("ransac_tol", "abc").unwrap();
        assert!(cfg.get::<f64>("ransac_tol").is_err());
    }
}
