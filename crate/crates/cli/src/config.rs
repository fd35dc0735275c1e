//! Experiment configuration files.

use std::path::{Path, PathBuf};

use rwis::collision::{DirectionLaw, DisplacementLaw};
use rwis::model::line_col;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Built-in model name or path to a model file.
    pub model: String,
    pub kernel: KernelConfig,
    pub sigma: SigmaConfig,
    pub llt: LltConfig,
    pub return_tail: ReturnTailConfig,
    pub duet: DuetSection,
    pub renewal: RenewalSection,
    pub mixture: MixtureSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            out: None,
            model: "simple2d".into(),
            kernel: KernelConfig::default(),
            sigma: SigmaConfig::default(),
            llt: LltConfig::default(),
            return_tail: ReturnTailConfig::default(),
            duet: DuetSection::default(),
            renewal: RenewalSection::default(),
            mixture: MixtureSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// One of `uniform`, `sticky`, `swap`, `identity`, `tabulated`.
    pub energy: String,
    pub kappa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    pub direction: DirectionLaw,
    pub displacement: DisplacementLaw,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            energy: "uniform".into(),
            kappa: 4.0,
            table: None,
            direction: DirectionLaw::Stationary,
            displacement: DisplacementLaw::UniformPair,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaConfig {
    /// Monte Carlo trials for the empirical covariance; 0 skips it.
    pub trials: usize,
    pub lambda_t: f64,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        Self {
            trials: 0,
            lambda_t: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LltConfig {
    pub times: Vec<f64>,
    /// `stationary` or an internal-state index.
    pub start: String,
}

impl Default for LltConfig {
    fn default() -> Self {
        Self {
            times: vec![100.0, 400.0, 1600.0],
            start: "stationary".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReturnTailConfig {
    pub times: Vec<f64>,
    pub trials: usize,
    /// Censoring time; the largest grid time when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

impl Default for ReturnTailConfig {
    fn default() -> Self {
        Self {
            times: vec![1e2, 1e3, 1e4],
            trials: 10_000,
            t_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DuetSection {
    /// Physical horizon.
    pub t: f64,
    pub trials: usize,
    pub lambda0: f64,
    /// Start of particle 2; particle 1 starts at the origin.
    pub separation: [i64; 2],
    pub max_events: u64,
}

impl Default for DuetSection {
    fn default() -> Self {
        Self {
            t: 1e4,
            trials: 1000,
            lambda0: 0.6,
            separation: [0, 0],
            max_events: 100_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenewalSection {
    /// `slow_log`, `exponential` or `pareto`.
    pub tail: String,
    pub beta: f64,
    /// `constant`, `uniform`, `sticky` or `swap`.
    pub chain: String,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
    pub lambda0: f64,
    pub times: Vec<f64>,
    pub trials: usize,
    pub order_n: Vec<usize>,
    pub z: Vec<f64>,
    /// Horizon for the renewal-function estimate; skipped when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub renewal_t: Option<f64>,
}

impl Default for RenewalSection {
    fn default() -> Self {
        Self {
            tail: "slow_log".into(),
            beta: 0.5,
            chain: "uniform".into(),
            kappa: 4.0,
            a: 0.1,
            b: 1.0,
            lambda0: 0.1,
            times: vec![1e3, 1e6, 1e9],
            trials: 10_000,
            order_n: vec![10_000],
            z: vec![1e-3, 1e-6],
            renewal_t: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureSection {
    /// Per-trial CSV written by `simulate-duet`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// `mixture` or `product`.
    pub reference: String,
    /// Fixed split of the product null; the median of `ρ_s` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product_lambda: Option<f64>,
    pub samples: usize,
    pub permutations: usize,
    pub cap: usize,
    /// `closed_form` or `longrun`.
    pub stationary: String,
    pub longrun_steps: usize,
}

impl Default for MixtureSection {
    fn default() -> Self {
        Self {
            input: None,
            reference: "mixture".into(),
            product_lambda: None,
            samples: 10_000,
            permutations: 199,
            cap: 2000,
            stationary: "closed_form".into(),
            longrun_steps: 1_000_000,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            CliError::Core(rwis::Error::Config {
                line,
                column,
                message: e.message().to_string(),
            })
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        Ok(toml::to_string(self)?)
    }
}
