//! JSON run configuration.
//!
//! ```json
//! {
//!   "grid":   {"dim": 1, "lengths": [1.0], "nodes": [64], "bc": "neumann"},
//!   "params": {"k": 1e-5, "N": 100, "mu_T": 0.1, "mu_I": 0.5, "mu_V": 5,
//!              "D_T": 0.01, "D_I": 0.01, "D_V": 0.01,
//!              "lambda": {"family": "constant", "value": 10}},
//!   "init":   {"T": {"kind": "constant", "value": 600},
//!              "I": {"kind": "constant", "value": 10},
//!              "V": {"kind": "constant", "value": 100}},
//!   "stepper": {"scheme": "imex_be", "dt": 0.002, "t_end": 50, "snapshot_every": 500},
//!   "output": {"dir": "out", "formats": ["csv", "json"]}
//! }
//! ```
//!
//! `init`, `stepper` and `output` are optional. The default stepper is
//! `imex_be` with `dt = 0.01 min(1/μ_T, 1/μ_I, 1/μ_V)`,
//! `t_end = 10 max(1/μ_T, 1/μ_I, 1/μ_V)` and a snapshot every 100 steps.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{GrowthOptions, Seeding};
use crate::mesh::{Boundary, Field, Grid};
use crate::model::{Bump, LambdaFamily, Parameters, Scalar, State};
use crate::steady::NewtonOptions;
use crate::timestep::{MonitorFlags, Scheme, StepperConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("`{key}`: {message}")]
    OutOfRange { key: String, message: String },
    #[error("{0}")]
    Missing(String),
    #[error("cannot read config: {0}")]
    Io(String),
}

impl ConfigError {
    fn range(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::OutOfRange {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub params: ParamsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    #[serde(default)]
    pub stepper: StepperSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady: Option<SteadySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub lengths: Vec<f64>,
    pub nodes: Vec<usize>,
    pub bc: Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub k: f64,
    #[serde(rename = "N")]
    pub burst_size: f64,
    #[serde(rename = "mu_T")]
    pub mu_t: f64,
    #[serde(rename = "mu_I")]
    pub mu_i: f64,
    #[serde(rename = "mu_V")]
    pub mu_v: f64,
    #[serde(rename = "D_T")]
    pub d_t: f64,
    #[serde(rename = "D_I")]
    pub d_i: f64,
    #[serde(rename = "D_V")]
    pub d_v: f64,
    pub lambda: LambdaFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `base + amplitude * exp(-|x - center|² / (2 width²))`.
    Bump {
        #[serde(default)]
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    Tabulated {
        values: Vec<f64>,
    },
}

impl FieldSpec {
    pub fn build(&self, grid: Arc<Grid>, key: &str) -> Result<Field, ConfigError> {
        let err = |m: String| ConfigError::range(key, m);
        match self {
            FieldSpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(err(format!("value must be finite, got {value}")));
                }
                Ok(Field::constant(grid, *value))
            }
            FieldSpec::Bump {
                base,
                amplitude,
                center,
                width,
            } => {
                if center.len() != grid.dim() {
                    return Err(err(format!("center needs {} coordinates", grid.dim())));
                }
                if !(*width > 0.0) {
                    return Err(err(format!("width must be positive, got {width}")));
                }
                let bump = Bump {
                    center: center.clone(),
                    width: *width,
                    amplitude: 1.0,
                };
                let lam = LambdaFamily::Bumps {
                    baseline: 0.0,
                    bumps: vec![bump],
                }
                .build(grid)
                .map_err(|e| err(e.to_string()))?;
                Ok(lam.map(|v| base + amplitude * v))
            }
            FieldSpec::Tabulated { values } => {
                Field::new(grid, values.clone()).map_err(|e| err(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(rename = "T")]
    pub target: FieldSpec,
    #[serde(rename = "I")]
    pub infected: FieldSpec,
    #[serde(rename = "V")]
    pub virions: FieldSpec,
}

fn default_snapshot_every() -> usize {
    100
}

fn default_band() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSpec {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub monitors: MonitorFlags,
    /// Relative tolerance band of the bound monitors.
    #[serde(default = "default_band")]
    pub tol_band: f64,
}

fn default_scheme() -> Scheme {
    Scheme::ImexBe
}

impl Default for StepperSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::ImexBe,
            dt: None,
            t_end: None,
            snapshot_every: default_snapshot_every(),
            monitors: MonitorFlags::default(),
            tol_band: default_band(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> String {
    "out".to_string()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

impl OutputSpec {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }

    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }
}

fn default_starts() -> usize {
    20
}

fn default_newton_tol() -> f64 {
    1e-8
}

fn default_newton_iter() -> usize {
    100
}

/// Multi-start Newton search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySpec {
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_newton_tol")]
    pub tol: f64,
    #[serde(default = "default_newton_iter")]
    pub max_iter: usize,
}

impl Default for SteadySpec {
    fn default() -> Self {
        Self {
            starts: default_starts(),
            tol: default_newton_tol(),
            max_iter: default_newton_iter(),
        }
    }
}

impl SteadySpec {
    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedingSpec {
    Eigenvector,
    Random,
}

fn default_window() -> f64 {
    5.0
}

fn default_seeding() -> SeedingSpec {
    SeedingSpec::Eigenvector
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_window")]
    pub t_window: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_seeding")]
    pub seeding: SeedingSpec,
}

impl Default for GrowthSpec {
    fn default() -> Self {
        Self {
            epsilon: None,
            t_window: default_window(),
            dt: None,
            seeding: default_seeding(),
        }
    }
}

impl GrowthSpec {
    pub fn options(&self, seed: u64) -> GrowthOptions {
        GrowthOptions {
            epsilon: self.epsilon,
            t_window: self.t_window,
            dt: self.dt,
            seeding: match self.seeding {
                SeedingSpec::Eigenvector => Seeding::Eigenvector,
                SeedingSpec::Random => Seeding::Random { seed },
            },
            ..GrowthOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentSpec {
    Classify,
    Decay,
    Growth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Scalar,
    pub values: Vec<f64>,
    pub experiment: ExperimentSpec,
}

/// Parses and validates a JSON document.
pub fn parse_config(document: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = serde_json::from_str(document).map_err(|e| {
        use serde_json::error::Category;
        let (line, column) = (e.line(), e.column());
        let message = e.to_string();
        match e.classify() {
            Category::Syntax | Category::Eof => ConfigError::Syntax {
                line,
                column,
                message,
            },
            _ => ConfigError::Schema {
                line,
                column,
                message,
            },
        }
    })?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid()?;
        let p = &self.params;
        for (key, v) in [
            ("k", p.k),
            ("N", p.burst_size),
            ("mu_T", p.mu_t),
            ("mu_I", p.mu_i),
            ("mu_V", p.mu_v),
            ("D_T", p.d_t),
            ("D_I", p.d_i),
            ("D_V", p.d_v),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::range(
                    format!("params.{key}"),
                    format!("{key} must be positive, got {v}"),
                ));
            }
        }
        let params = self.parameters()?;
        if !(params.lambda.max() > 0.0) {
            return Err(ConfigError::range(
                "params.lambda",
                "lambda identically zero",
            ));
        }
        let s = &self.stepper;
        for (key, v) in [("dt", s.dt), ("t_end", s.t_end)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::range(
                        format!("stepper.{key}"),
                        format!("{key} must be positive, got {v}"),
                    ));
                }
            }
        }
        let stepper = self.stepper_config(&params);
        if !(stepper.dt < stepper.t_end) {
            return Err(ConfigError::range(
                "stepper.dt",
                format!("dt {} must be below t_end {}", stepper.dt, stepper.t_end),
            ));
        }
        if s.snapshot_every == 0 {
            return Err(ConfigError::range(
                "stepper.snapshot_every",
                "must be at least 1",
            ));
        }
        if !(s.tol_band >= 0.0) {
            return Err(ConfigError::range(
                "stepper.tol_band",
                "must be nonnegative",
            ));
        }
        if let Some(init) = &self.init {
            self.initial_state(init, &params)?;
        }
        if let Some(g) = &self.growth {
            if !(g.t_window > 0.0) {
                return Err(ConfigError::range("growth.t_window", "must be positive"));
            }
            if let Some(e) = g.epsilon {
                if !(e > 0.0) {
                    return Err(ConfigError::range("growth.epsilon", "must be positive"));
                }
            }
        }
        if let Some(sw) = &self.sweep {
            if let Some(v) = sw.values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(ConfigError::range(
                    "sweep.values",
                    format!("values must be positive, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>, ConfigError> {
        let g = &self.grid;
        Grid::new(g.dim, &g.lengths, &g.nodes, g.bc)
            .map(Arc::new)
            .map_err(|e| ConfigError::range("grid", e.to_string()))
    }

    pub fn parameters(&self) -> Result<Parameters, ConfigError> {
        let grid = self.grid()?;
        let p = &self.params;
        let lambda = p
            .lambda
            .build(grid)
            .map_err(|e| ConfigError::range("params.lambda", e.to_string()))?;
        Ok(Parameters {
            lambda,
            k: p.k,
            burst_size: p.burst_size,
            mu_t: p.mu_t,
            mu_i: p.mu_i,
            mu_v: p.mu_v,
            d_t: p.d_t,
            d_i: p.d_i,
            d_v: p.d_v,
        })
    }

    fn initial_state(&self, init: &InitSpec, params: &Parameters) -> Result<State, ConfigError> {
        let g = params.grid().clone();
        Ok(State {
            time: 0.0,
            target: init.target.build(g.clone(), "init.T")?,
            infected: init.infected.build(g.clone(), "init.I")?,
            virions: init.virions.build(g, "init.V")?,
        })
    }

    pub fn initial(&self, params: &Parameters) -> Result<State, ConfigError> {
        let init = self
            .init
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("this subcommand needs an `init` block".into()))?;
        self.initial_state(init, params)
    }

    /// Stepper with defaults resolved against `params`.
    pub fn stepper_config(&self, params: &Parameters) -> StepperConfig {
        let s = &self.stepper;
        let slowest = (1.0 / params.mu_t)
            .max(1.0 / params.mu_i)
            .max(1.0 / params.mu_v);
        StepperConfig {
            scheme: s.scheme,
            dt: s.dt.unwrap_or_else(|| params.default_dt()),
            t_end: s.t_end.unwrap_or(10.0 * slowest),
            snapshot_every: s.snapshot_every,
            monitors: s.monitors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "grid": {"dim": 1, "lengths": [1.0], "nodes": [16], "bc": "neumann"},
        "params": {"k": 1e-5, "N": 100, "mu_T": 0.1, "mu_I": 0.5, "mu_V": 5,
                   "D_T": 0.01, "D_I": 0.01, "D_V": 0.01,
                   "lambda": {"family": "constant", "value": 10}}
    }"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.stepper.scheme, Scheme::ImexBe);
        let p = c.parameters().unwrap();
        let s = c.stepper_config(&p);
        assert!((s.dt - 0.002).abs() < 1e-15);
        assert!((s.t_end - 100.0).abs() < 1e-12);
        assert_eq!(s.snapshot_every, 100);
        assert_eq!(c.output.dir, "out");
        assert!(c.output.csv() && c.output.json());
    }

    #[test]
    fn negative_rate_names_key() {
        let doc = MINIMAL.replace("\"mu_T\": 0.1", "\"mu_T\": -0.1");
        let err = parse_config(&doc).unwrap_err();
        assert!(err.to_string().contains("mu_T"), "{err}");
    }

    #[test]
    fn unknown_family_names_tag() {
        let doc = MINIMAL.replace("\"family\": \"constant\"", "\"family\": \"sawtooth\"");
        let err = parse_config(&doc).unwrap_err();
        assert!(matches!(err, ConfigError::Schema { .. }));
        assert!(err.to_string().contains("sawtooth"), "{err}");
    }

    #[test]
    fn unknown_key_and_syntax() {
        let doc = MINIMAL.replace("\"bc\": \"neumann\"", "\"bc\": \"neumann\", \"bogus\": 1");
        let err = parse_config(&doc).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");

        let err = parse_config("{\"grid\": [1,").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }), "{err}");
    }

    #[test]
    fn roundtrip() {
        let c = parse_config(MINIMAL).unwrap();
        let again = parse_config(&c.to_json()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn lambda_zero_rejected() {
        let doc = MINIMAL.replace("\"value\": 10", "\"value\": 0");
        let err = parse_config(&doc).unwrap_err();
        assert!(err.to_string().contains("identically zero"));
    }
}
