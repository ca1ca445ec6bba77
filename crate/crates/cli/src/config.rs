//! Experiment configuration files.
//!
//! A config is one TOML file. Every section is optional and falls back to
//! the defaults below, except that a seed must come from the file or from
//! `--seed`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use jcas_core::tradeoff::{linear_grid, log_grid, ChannelSpec, DEFAULT_C0};
use jcas_core::{BeamPolicy, GaussMarkovModel, Matrix, NoiseGain};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    /// Output directory; not part of the config hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker cap; not part of the config hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub riccati: RiccatiConfig,
    #[serde(default)]
    pub curve: CurveConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bayes: Option<BayesConfig>,
}

/// Either a named preset or explicit matrices, given as lists of rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChannelConfig {
    Noiseless {
        #[serde(default = "default_c0")]
        c0: f64,
    },
    Gaussian {
        snr_db: f64,
    },
}

fn default_c0() -> f64 {
    DEFAULT_C0
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig::Noiseless { c0: DEFAULT_C0 }
    }
}

impl ChannelConfig {
    pub fn spec(&self) -> ChannelSpec {
        match *self {
            ChannelConfig::Noiseless { c0 } => ChannelSpec::Noiseless { c0 },
            ChannelConfig::Gaussian { snr_db } => ChannelSpec::Gaussian { snr_db },
        }
    }
}

/// A list of values, or `count` points from `from` to `to` (log spaced
/// with `log = true`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range {
        from: f64,
        to: f64,
        count: usize,
        #[serde(default)]
        log: bool,
    },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Range { from, to, count, log: false } => linear_grid(*from, *to, *count),
            GridSpec::Range { from, to, count, log: true } => log_grid(*from, *to, *count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiccatiConfig {
    pub budgets: Vec<f64>,
    pub lambdas: GridSpec,
    /// `inf` stands for an erased measurement.
    pub gammas: GridSpec,
    pub bisect_tol: f64,
}

impl Default for RiccatiConfig {
    fn default() -> Self {
        Self {
            budgets: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            lambdas: GridSpec::List(vec![0.25, 0.5, 0.75, 1.0]),
            gammas: GridSpec::List(vec![1.0, 2.0, 5.0, 10.0, f64::INFINITY]),
            bisect_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    pub lambda: GridSpec,
    pub gamma: GridSpec,
    /// Append `γ₀ = ∞` to the multi-beam grid.
    pub include_erased: bool,
    /// Points of the shared distortion grid used for dominance reports.
    pub dominance_points: usize,
    /// Add a `rate_bits` column.
    pub bits: bool,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            lambda: GridSpec::Range { from: 0.0, to: 1.0, count: 101, log: false },
            gamma: GridSpec::Range { from: 1.0, to: 1e4, count: 100, log: true },
            include_erased: true,
            dominance_points: 200,
            bits: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub lambdas: Vec<f64>,
    pub horizon: usize,
    pub trials: usize,
    /// Initial covariance; defaults to `Q`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<Vec<f64>>>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { lambdas: vec![0.3, 0.5, 0.7, 0.9], horizon: 50, trials: 10_000, p0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicyConfig {
    Switching {
        lambda: f64,
    },
    /// `gamma = inf` erases every measurement.
    Multibeam {
        gamma: f64,
    },
}

impl PolicyConfig {
    pub fn policy(&self) -> Result<BeamPolicy, CliError> {
        let p = match *self {
            PolicyConfig::Switching { lambda } => BeamPolicy::Switching { lambda },
            PolicyConfig::Multibeam { gamma } => {
                BeamPolicy::Multibeam { gamma: NoiseGain::new(gamma).map_err(config_err)? }
            }
        };
        p.validate().map_err(config_err)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub policy: PolicyConfig,
    pub horizon: usize,
    /// With more than one trial a block distortion summary is written too.
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<Vec<f64>>>,
    /// Tracking-loss threshold on the running block distortion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_threshold: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            policy: PolicyConfig::Switching { lambda: 0.5 },
            horizon: 200,
            trials: 1,
            s0: None,
            p0: None,
            loss_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayesConfig {
    /// Model file, relative to the config file.
    pub model: PathBuf,
    /// Length of the sampled posterior trace.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Block length of the tradeoff search (1 to 3).
    #[serde(default = "default_bayes_horizon")]
    pub horizon: usize,
    #[serde(default = "default_resolution")]
    pub grid_resolution: f64,
    /// Budgets to sweep; defaults to 11 points from 0 to the largest
    /// distortion entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<GridSpec>,
}

fn default_steps() -> usize {
    5
}

fn default_bayes_horizon() -> usize {
    2
}

fn default_resolution() -> f64 {
    0.05
}

pub(crate) fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Matrix, CliError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(CliError::Config(format!("matrix `{name}` is empty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("matrix `{name}` has rows of different lengths")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// The unstable scalar system of the figures.
pub fn unstable_model() -> GaussMarkovModel {
    GaussMarkovModel::scalar(-1.15, 1.0, 0.2, 1.5)
}

/// The stable scalar system of the figures.
pub fn stable_model() -> GaussMarkovModel {
    GaussMarkovModel::scalar(-0.95, 1.0, 0.2, 1.5)
}

impl ModelConfig {
    pub fn build(&self) -> Result<GaussMarkovModel, CliError> {
        let explicit = [&self.a, &self.c, &self.q, &self.r];
        let given = explicit.iter().filter(|m| m.is_some()).count();
        match (&self.preset, given) {
            (Some(_), n) if n > 0 => Err(CliError::Config("model: give either `preset` or matrices, not both".into())),
            (Some(p), _) => match p.as_str() {
                "unstable" => Ok(unstable_model()),
                "stable" => Ok(stable_model()),
                other => {
                    Err(CliError::Config(format!("model: unknown preset `{other}` (expected unstable or stable)")))
                }
            },
            (None, 0) => Ok(unstable_model()),
            (None, 4) => {
                let m = |name, v: &Option<Vec<Vec<f64>>>| matrix(name, v.as_ref().expect("checked"));
                GaussMarkovModel::new(m("a", &self.a)?, m("c", &self.c)?, m("q", &self.q)?, m("r", &self.r)?)
                    .map_err(config_err)
            }
            (None, _) => Err(CliError::Config("model: matrices a, c, q and r must all be given".into())),
        }
    }
}

impl ExperimentConfig {
    /// Reads and parses a config file. Parse errors carry TOML line
    /// references.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(b) = cfg.bayes.as_mut() {
            if b.model.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                b.model = base.join(&b.model);
            }
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config("no seed given: set `seed` in the config or pass --seed".into()))
    }

    /// SHA-256 of the canonical TOML rendering, ignoring the output
    /// directory and thread count.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig { out: None, threads: None, ..self.clone() };
        let text = toml::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn model(&self) -> Result<GaussMarkovModel, CliError> {
        self.model.build()
    }

    pub fn channel(&self) -> Result<ChannelSpec, CliError> {
        let spec = self.channel.spec();
        spec.validate().map_err(config_err)?;
        Ok(spec)
    }

    pub fn matrix_or(&self, name: &str, rows: &Option<Vec<Vec<f64>>>, default: &Matrix) -> Result<Matrix, CliError> {
        match rows {
            Some(r) => matrix(name, r),
            None => Ok(default.clone()),
        }
    }
}

pub fn check_grid(name: &str, values: &[f64], lo: f64, hi: f64) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config(format!("{name}: grid is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= lo && **v <= hi)) {
        return Err(CliError::Config(format!("{name}: value {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

pub fn gamma_values(name: &str, values: &[f64]) -> Result<Vec<NoiseGain>, CliError> {
    check_grid(name, values, 1.0, f64::INFINITY)?;
    values.iter().map(|&g| NoiseGain::new(g).map_err(config_err)).collect()
}
