//! Sweep configuration: a flat `key = value` TOML file with strict keys.
//!
//! ```toml
//! sites = [10, 12]
//! w_values = [0.5, 1.0]          # or w_min / w_max / w_points / w_spacing
//! realizations = 20
//! output = "runs/demo"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{binomial, default_two_m, MAX_SITES};
use crate::error::{Error, Result};
use crate::model::DEFAULT_DELTA;

/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "XXZLOC_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyWindow {
    /// Every sector eigenstate.
    All,
    /// The middle half of the spectrum by eigenstate index.
    Middle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `D` is the sector dimension.
    Sector,
    /// `D = 2^L`.
    Full,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_true() -> bool {
    true
}
fn default_bins() -> u32 {
    20
}
fn default_zeta_bin() -> f64 {
    0.25
}
fn default_uv_scale() -> f64 {
    0.1
}
fn default_memory() -> f64 {
    8.0
}
fn default_output() -> PathBuf {
    PathBuf::from("xxzloc-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Chain lengths to sweep.
    pub sites: Vec<usize>,
    /// Explicit disorder strengths. Mutually exclusive with the range keys.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_spacing: Option<Spacing>,
    pub realizations: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub base_seed: u64,
    /// Twice the magnetization; defaults to `L mod 2` for each `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_m: Option<i32>,
    /// Probe site `l` of `S^z_l`.
    #[serde(default)]
    pub site: usize,
    /// Probe every site instead of only `site` and pool the results.
    #[serde(default)]
    pub site_average: bool,
    #[serde(default = "default_true")]
    pub periodic: bool,
    /// Cutoff `mu` of the regularized susceptibility.
    #[serde(default)]
    pub mu: f64,
    #[serde(default = "default_bins")]
    pub bins_per_decade: u32,
    #[serde(default = "default_zeta_bin")]
    pub zeta_bin_width: f64,
    /// Maximum admissible eigenpair residual relative to `||H||_F`; zero
    /// skips the check (the dense solver always runs to convergence).
    #[serde(default)]
    pub eigen_tolerance: f64,
    /// `omega_uv = uv_scale / W`.
    #[serde(default = "default_uv_scale")]
    pub uv_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_window")]
    pub energy_window: EnergyWindow,
    #[serde(default = "default_norm")]
    pub normalization: Normalization,
    /// Per-realization memory cap in GiB.
    #[serde(default = "default_memory")]
    pub memory_limit_gib: f64,
    #[serde(default)]
    pub allow_large: bool,
}

fn default_window() -> EnergyWindow {
    EnergyWindow::All
}
fn default_norm() -> Normalization {
    Normalization::Sector
}

/// Fields that determine the content of a record. Changing any of these
/// invalidates previously written records; sweep extents do not.
#[derive(Serialize)]
struct PhysicsKey<'a> {
    delta: f64,
    base_seed: u64,
    two_m: Option<i32>,
    site: usize,
    site_average: bool,
    periodic: bool,
    mu: f64,
    bins_per_decade: u32,
    eigen_tolerance: f64,
    energy_window: &'a EnergyWindow,
    normalization: &'a Normalization,
}

impl RunConfig {
    /// Minimal configuration with defaults for everything else.
    pub fn new(sites: Vec<usize>, w_values: Vec<f64>, realizations: usize) -> Self {
        Self {
            sites,
            w_values: Some(w_values),
            w_min: None,
            w_max: None,
            w_points: None,
            w_spacing: None,
            realizations,
            delta: DEFAULT_DELTA,
            base_seed: 0,
            two_m: None,
            site: 0,
            site_average: false,
            periodic: true,
            mu: 0.0,
            bins_per_decade: default_bins(),
            zeta_bin_width: default_zeta_bin(),
            eigen_tolerance: 0.0,
            uv_scale: default_uv_scale(),
            workers: None,
            output: default_output(),
            energy_window: EnergyWindow::All,
            normalization: Normalization::Sector,
            memory_limit_gib: default_memory(),
            allow_large: false,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(mut msgs) => {
                msgs.insert(0, format!("in {}", path.display()));
                Error::Config(msgs)
            }
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The disorder grid, ascending as listed.
    pub fn w_grid(&self) -> Result<Vec<f64>> {
        if let Some(v) = &self.w_values {
            return Ok(v.clone());
        }
        let (lo, hi, n) = match (self.w_min, self.w_max, self.w_points) {
            (Some(a), Some(b), Some(n)) => (a, b, n),
            _ => {
                return Err(Error::Config(vec![
                    "give either w_values or all of w_min, w_max, w_points".into(),
                ]))
            }
        };
        if n == 1 {
            return Ok(vec![lo]);
        }
        let spacing = self.w_spacing.unwrap_or(Spacing::Log);
        Ok((0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                match spacing {
                    Spacing::Log => lo * (hi / lo).powf(t),
                    Spacing::Linear => lo + (hi - lo) * t,
                }
            })
            .collect())
    }

    pub fn two_m_for(&self, sites: usize) -> i32 {
        self.two_m.unwrap_or_else(|| default_two_m(sites))
    }

    /// Collect every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.sites.is_empty() {
            problems.push("sites must list at least one chain length".to_string());
        }
        if self.realizations == 0 {
            problems.push("realizations must be >= 1".into());
        }
        let has_range = self.w_min.is_some() || self.w_max.is_some() || self.w_points.is_some();
        if self.w_values.is_some() && has_range {
            problems.push("w_values cannot be combined with w_min/w_max/w_points".into());
        }
        match self.w_grid() {
            Ok(grid) => {
                if grid.is_empty() {
                    problems.push("the W grid is empty".into());
                }
                if grid.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    problems.push("every W must be finite and > 0".into());
                }
            }
            Err(Error::Config(msgs)) => problems.extend(msgs),
            Err(e) => problems.push(e.to_string()),
        }
        if let (Some(a), Some(b)) = (self.w_min, self.w_max) {
            if !(b >= a) {
                problems.push("w_max must be >= w_min".into());
            }
        }
        if !self.delta.is_finite() {
            problems.push("delta must be finite".into());
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            problems.push("mu must be finite and >= 0".into());
        }
        if self.bins_per_decade == 0 {
            problems.push("bins_per_decade must be >= 1".into());
        }
        if !(self.zeta_bin_width > 0.0) {
            problems.push("zeta_bin_width must be > 0".into());
        }
        if !(self.eigen_tolerance >= 0.0) {
            problems.push("eigen_tolerance must be >= 0".into());
        }
        if !(self.uv_scale > 0.0) {
            problems.push("uv_scale must be > 0".into());
        }
        if self.workers == Some(0) {
            problems.push("workers must be >= 1".into());
        }
        if !(self.memory_limit_gib > 0.0) {
            problems.push("memory_limit_gib must be > 0".into());
        }
        for &l in &self.sites {
            if l < 3 || l > MAX_SITES {
                problems.push(format!("chain length {l} outside 3..={MAX_SITES}"));
                continue;
            }
            if !self.site_average && self.site >= l {
                problems.push(format!("probe site {} out of range for L = {l}", self.site));
            }
            let two_m = self.two_m_for(l);
            if two_m.unsigned_abs() as usize > l || (two_m - l as i32) % 2 != 0 {
                problems.push(format!("two_m = {two_m} invalid for L = {l}"));
                continue;
            }
            let dim = binomial(l as u64, ((l as i32 + two_m) / 2) as u64) as usize;
            if dim < 3 {
                problems.push(format!("sector of L = {l}, two_m = {two_m} has < 3 states"));
            }
            let bytes = memory_estimate(dim);
            let cap = self.memory_limit_gib * (1u64 << 30) as f64;
            if bytes > cap && !self.allow_large {
                problems.push(format!(
                    "L = {l} needs about {:.1} GiB per realization, above the {} GiB limit \
                     (set allow_large = true to override)",
                    bytes / (1u64 << 30) as f64,
                    self.memory_limit_gib
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Short hex digest of the record-determining fields.
    pub fn digest(&self) -> String {
        let key = PhysicsKey {
            delta: self.delta,
            base_seed: self.base_seed,
            two_m: self.two_m,
            site: self.site,
            site_average: self.site_average,
            periodic: self.periodic,
            mu: self.mu,
            bins_per_decade: self.bins_per_decade,
            eigen_tolerance: self.eigen_tolerance,
            energy_window: &self.energy_window,
            normalization: &self.normalization,
        };
        let text = serde_json::to_string(&key).expect("key serializes");
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Worker count: environment override, then config, then all cores.
    pub fn resolved_workers(&self) -> Result<usize> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            return match v.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(Error::Config(vec![format!("{WORKERS_ENV} = {v:?} is not a positive integer")])),
            };
        }
        Ok(self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }))
    }
}

/// Bytes held at once by one realization: Hamiltonian or eigenvectors plus
/// the rotated observable and a scratch copy.
pub fn memory_estimate(dim: usize) -> f64 {
    3.0 * (dim as f64) * (dim as f64) * 8.0
}
