//! Run configuration, read from JSON; missing fields take the defaults below.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use slmimo::design::{BaseKind, DesignOptions};
use slmimo::sim::{DetectorKind, Stopping};
use slmimo::sl::{catalog, SlMatrix};
use slmimo::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub n_t: usize,
    pub n_r: usize,
    pub e_s: f64,
    /// The first system is the reference for comparisons.
    pub systems: Vec<SystemSpec>,
    pub snr_db: Vec<f64>,
    pub detector: DetectorKind,
    pub stopping: Stopping,
    pub seed: u64,
    pub chunk: u64,
    pub noiseless: bool,
    /// Also write the analytic report next to simulated curves.
    pub with_bound: bool,
    pub compare_source: CompareSource,
    pub targets: Vec<f64>,
    pub converge: ConvergeSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            n_t: 4,
            n_r: 4,
            e_s: 1.0,
            systems: vec![SystemSpec {
                name: "designed".into(),
                matrix: MatrixSpec::Named("regular_4x6".into()),
                codebooks: CodebookSpec::designed(BaseKind::Qam, 4),
            }],
            snr_db: (0..=10).map(|i| 4.0 * i as f64).collect(),
            detector: DetectorKind::Mp { iterations: 5, damping: 0.0 },
            stopping: Stopping::default(),
            seed: 1,
            chunk: 4096,
            noiseless: false,
            with_bound: true,
            compare_source: CompareSource::Analytic,
            targets: vec![1e-2, 1e-3, 1e-4],
            converge: ConvergeSpec::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.systems.is_empty() {
            return Err("config lists no systems".into());
        }
        for (i, s) in self.systems.iter().enumerate() {
            let ok = !s.name.is_empty() && s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(format!("system name {:?} must be non-empty ASCII letters, digits, '_' or '-'", s.name));
            }
            if self.systems[..i].iter().any(|o| o.name == s.name) {
                return Err(format!("duplicate system name {:?}", s.name));
            }
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err("SNR grid must be non-empty and finite".into());
        }
        if self.targets.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err("target AWEPs must lie in (0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    pub matrix: MatrixSpec,
    pub codebooks: CodebookSpec,
}

/// A catalog name or explicit 0/1 rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Rows(Vec<Vec<u8>>),
}

impl MatrixSpec {
    pub fn resolve(&self) -> Result<SlMatrix> {
        match self {
            Self::Named(n) => catalog::by_name(n).ok_or_else(|| Error::InvalidInput(format!("unknown SL matrix {n:?}"))),
            Self::Rows(r) => SlMatrix::new(r.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CodebookSpec {
    Designed {
        base: BaseKind,
        m: usize,
        #[serde(default)]
        permute: bool,
        #[serde(default)]
        real: bool,
        #[serde(default = "default_grid")]
        grid_res: usize,
        #[serde(default = "default_design_snr")]
        design_snr_db: f64,
        #[serde(default)]
        weighted_distance_all_steps: bool,
        #[serde(default = "default_budget")]
        budget: u64,
    },
    /// Equal-power layers with rotations only.
    Baseline {
        base: BaseKind,
        m: usize,
        #[serde(default)]
        real: bool,
    },
    /// Codebooks previously written by `design`.
    File { path: PathBuf },
}

fn default_grid() -> usize {
    41
}

fn default_design_snr() -> f64 {
    30.0
}

fn default_budget() -> u64 {
    1_000_000
}

impl CodebookSpec {
    pub fn designed(base: BaseKind, m: usize) -> Self {
        Self::Designed {
            base,
            m,
            permute: false,
            real: false,
            grid_res: default_grid(),
            design_snr_db: default_design_snr(),
            weighted_distance_all_steps: false,
            budget: default_budget(),
        }
    }

    pub fn design_options(&self, n_t: usize, n_r: usize, e_s: f64) -> Option<DesignOptions> {
        let Self::Designed { base, m, permute, real, grid_res, design_snr_db, weighted_distance_all_steps, budget } = self
        else {
            return None;
        };
        let mut o = DesignOptions::new(n_t, n_r, *base, *m);
        o.permute = *permute;
        o.real = *real;
        o.e_s = e_s;
        o.grid_res = *grid_res;
        o.design_snr_db = *design_snr_db;
        o.weighted_distance_all_steps = *weighted_distance_all_steps;
        o.budget = u128::from(*budget);
        Some(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareSource {
    Analytic,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSpec {
    pub snr_db: f64,
    pub iterations: Vec<usize>,
}

impl Default for ConvergeSpec {
    fn default() -> Self {
        Self { snr_db: 20.0, iterations: vec![1, 2, 3, 4, 5, 10] }
    }
}
