//! Run configuration: a single closed-schema JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{ClaimsPlan, Method, Settings, VerdictThresholds};
use crate::models::{build_model, HypothesisReport, Model, ModelConfig, ModelError};
use crate::orthant::{OrthantError, OrthantVector, ReflectionMatrix};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid run parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Orthant(#[from] OrthantError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "Io",
            Self::Parse(_) => "ConfigParse",
            Self::DimensionMismatch(_) => "DimensionMismatch",
            Self::InvalidParameter(_) => "InvalidParameter",
            Self::Orthant(e) => e.kind(),
            Self::Model(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    /// Row-major interaction proportions.
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub matrix: MatrixConfig,
    pub model: ModelConfig,
    pub initial_capital: Vec<f64>,
    #[serde(default = "defaults::horizon")]
    pub horizon: usize,
    #[serde(default = "defaults::n_paths")]
    pub n_paths: u64,
    /// Draws for `p`; defaults to `n_paths`.
    #[serde(default)]
    pub p_samples: Option<u64>,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::step_cap")]
    pub step_cap: usize,
    #[serde(default = "defaults::strict_tol")]
    pub strict_tol: f64,
    #[serde(default = "defaults::kmax")]
    pub kmax: usize,
    #[serde(default = "defaults::identity_horizon")]
    pub identity_horizon: usize,
    /// Horizons of the `d = 1` limit-law QQ table; empty skips it.
    #[serde(default)]
    pub limdist_horizons: Vec<usize>,
    #[serde(default)]
    pub verdict_thresholds: VerdictThresholds,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub output: OutputConfig,
}

mod defaults {
    pub fn horizon() -> usize {
        1000
    }
    pub fn n_paths() -> u64 {
        100_000
    }
    pub fn seed() -> u64 {
        20_240_601
    }
    pub fn step_cap() -> usize {
        100_000
    }
    pub fn strict_tol() -> f64 {
        crate::skorokhod::DEFAULT_STRICT_TOL
    }
    pub fn kmax() -> usize {
        20
    }
    pub fn identity_horizon() -> usize {
        10
    }
}

/// A validated configuration with its derived objects.
pub struct Prepared {
    pub config: RunConfig,
    pub matrix: ReflectionMatrix,
    pub model: Model,
    pub hypotheses: HypothesisReport,
    pub a: OrthantVector,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn settings(&self) -> Settings {
        Settings {
            strict_tol: self.strict_tol,
            workers: self.workers,
        }
    }

    /// Builds `R`, the model and the hypothesis report, checking that all
    /// dimensions agree.
    pub fn prepare(self) -> Result<Prepared, ConfigError> {
        if !(self.strict_tol >= 0.0 && self.strict_tol.is_finite()) {
            return Err(ConfigError::InvalidParameter(format!("strict_tol = {}", self.strict_tol)));
        }
        let th = self.verdict_thresholds;
        if !(th.consistent > 0.0 && th.consistent <= th.inconsistent) {
            return Err(ConfigError::InvalidParameter(
                "verdict_thresholds need 0 < consistent <= inconsistent".into(),
            ));
        }
        let d = self.matrix.p.len();
        if self.model.d != d || self.initial_capital.len() != d {
            return Err(ConfigError::DimensionMismatch(format!(
                "matrix d = {d}, model d = {}, |initial_capital| = {}",
                self.model.d,
                self.initial_capital.len()
            )));
        }
        let matrix = ReflectionMatrix::from_rows(&self.matrix.p)?;
        let a = OrthantVector::new(self.initial_capital.clone())?;
        if a.iter().any(|x| *x < 0.0) {
            return Err(ConfigError::InvalidParameter("initial_capital must be >= 0".into()));
        }
        let (model, hypotheses) = build_model(&self.model, &matrix)?;
        Ok(Prepared {
            config: self,
            matrix,
            model,
            hypotheses,
            a,
        })
    }
}

impl Prepared {
    pub fn plan(&self, method: Method, sweep: Vec<OrthantVector>) -> ClaimsPlan {
        let c = &self.config;
        ClaimsPlan {
            a: self.a.clone(),
            method,
            horizon: c.horizon,
            n_paths: c.n_paths,
            p_samples: c.p_samples.unwrap_or(c.n_paths),
            seed: c.seed,
            step_cap: c.step_cap,
            kmax: c.kmax,
            identity_horizon: c.identity_horizon,
            sweep,
            limdist_horizons: c.limdist_horizons.clone(),
            settings: c.settings(),
            thresholds: c.verdict_thresholds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CL2: &str = r#"{
        "matrix": {"P": [[0, 0.5], [0.5, 0]]},
        "model": {"d": 2, "mode": {"kind": "cl_network", "rates": [1, 1]},
                  "premium_rates": [1.5, 1.5],
                  "claims": [{"kind": "exponential", "mean": 1}, {"kind": "exponential", "mean": 1}]},
        "initial_capital": [1, 1]
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_json(CL2).unwrap();
        assert_eq!(c.seed, 20_240_601);
        assert_eq!(c.output.formats, vec![Format::Json, Format::Csv]);
        let p = c.prepare().unwrap();
        assert_eq!(p.matrix.dim(), 2);
        assert_eq!(p.plan(Method::All, vec![]).p_samples, 100_000);
    }

    #[test]
    fn rejects_unknown_keys_and_mismatches() {
        let extra = CL2.replacen("\"initial_capital\"", "\"bogus\": 1, \"initial_capital\"", 1);
        assert_eq!(RunConfig::from_json(&extra).unwrap_err().kind(), "ConfigParse");
        let short = CL2.replace("[1, 1]\n", "[1]\n");
        let err = RunConfig::from_json(&short).unwrap().prepare().err().unwrap();
        assert_eq!(err.kind(), "DimensionMismatch");
    }

    #[test]
    fn spectral_radius_one_is_reported() {
        let bad = CL2.replace("[[0, 0.5], [0.5, 0]]", "[[0, 1], [1, 0]]");
        let err = RunConfig::from_json(&bad).unwrap().prepare().err().unwrap();
        assert_eq!(err.kind(), "SpectralRadiusNotLessThanOne");
    }
}
