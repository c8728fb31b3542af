//! Parameters, state and reaction kinetics of the three-component model
//!
//! ```text
//! dT/dt - D_T ΔT = λ(x) - μ_T T - k T V
//! dI/dt - D_I ΔI = k T V - μ_I I
//! dV/dt - D_V ΔV = N μ_I I - μ_V V
//! ```
//!
//! `T` are uninfected target cells, `I` infected cells and `V` free virions.
//! Units live in the docs only: `λ` in cells/(volume·time), `k` in
//! volume/(virion·time), `N` virions per infected cell, rates in 1/time and
//! diffusivities in length²/time.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{assemble_laplacian, Field, Grid, MeshError, SparseOperator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("state fields and supply rate live on different grids")]
    GridMismatch,
    #[error("invalid lambda family: {0}")]
    Lambda(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    /// T-cell supply rate λ(x).
    pub lambda: Field,
    /// Infection rate per virion.
    pub k: f64,
    /// Burst size N.
    pub burst_size: f64,
    pub mu_t: f64,
    pub mu_i: f64,
    pub mu_v: f64,
    pub d_t: f64,
    pub d_i: f64,
    pub d_v: f64,
}

/// Scalar model constants, addressable by name for sweeps and configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scalar {
    #[serde(rename = "k")]
    K,
    #[serde(rename = "N")]
    BurstSize,
    #[serde(rename = "mu_T")]
    MuT,
    #[serde(rename = "mu_I")]
    MuI,
    #[serde(rename = "mu_V")]
    MuV,
    #[serde(rename = "D_T")]
    DT,
    #[serde(rename = "D_I")]
    DI,
    #[serde(rename = "D_V")]
    DV,
}

impl Scalar {
    pub const ALL: [Scalar; 8] = [
        Scalar::K,
        Scalar::BurstSize,
        Scalar::MuT,
        Scalar::MuI,
        Scalar::MuV,
        Scalar::DT,
        Scalar::DI,
        Scalar::DV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scalar::K => "k",
            Scalar::BurstSize => "N",
            Scalar::MuT => "mu_T",
            Scalar::MuI => "mu_I",
            Scalar::MuV => "mu_V",
            Scalar::DT => "D_T",
            Scalar::DI => "D_I",
            Scalar::DV => "D_V",
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Parameters {
    pub fn grid(&self) -> &Arc<Grid> {
        self.lambda.grid()
    }

    pub fn get(&self, which: Scalar) -> f64 {
        match which {
            Scalar::K => self.k,
            Scalar::BurstSize => self.burst_size,
            Scalar::MuT => self.mu_t,
            Scalar::MuI => self.mu_i,
            Scalar::MuV => self.mu_v,
            Scalar::DT => self.d_t,
            Scalar::DI => self.d_i,
            Scalar::DV => self.d_v,
        }
    }

    pub fn set(&mut self, which: Scalar, value: f64) {
        let slot = match which {
            Scalar::K => &mut self.k,
            Scalar::BurstSize => &mut self.burst_size,
            Scalar::MuT => &mut self.mu_t,
            Scalar::MuI => &mut self.mu_i,
            Scalar::MuV => &mut self.mu_v,
            Scalar::DT => &mut self.d_t,
            Scalar::DI => &mut self.d_i,
            Scalar::DV => &mut self.d_v,
        };
        *slot = value;
    }

    pub fn with(mut self, which: Scalar, value: f64) -> Self {
        self.set(which, value);
        self
    }

    pub fn max_diffusion(&self) -> f64 {
        self.d_t.max(self.d_i).max(self.d_v)
    }

    /// `N k ‖λ‖∞ / (μ_T μ_V)`, the readily computable clearance criterion.
    pub fn corollary_bound(&self) -> f64 {
        self.burst_size * self.k * self.lambda.sup_norm() / (self.mu_t * self.mu_v)
    }

    /// Default time step of the IMEX scheme, 1% of the fastest removal time.
    pub fn default_dt(&self) -> f64 {
        0.01 * (1.0 / self.mu_t).min(1.0 / self.mu_i).min(1.0 / self.mu_v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub time: f64,
    pub target: Field,
    pub infected: Field,
    pub virions: Field,
}

impl State {
    pub fn new(
        time: f64,
        target: Field,
        infected: Field,
        virions: Field,
    ) -> Result<Self, ModelError> {
        if !(target.same_grid(&infected) && target.same_grid(&virions)) {
            return Err(ModelError::GridMismatch);
        }
        Ok(Self {
            time,
            target,
            infected,
            virions,
        })
    }

    /// Spatially uniform state.
    pub fn uniform(grid: Arc<Grid>, target: f64, infected: f64, virions: f64) -> Self {
        Self {
            time: 0.0,
            target: Field::constant(grid.clone(), target),
            infected: Field::constant(grid.clone(), infected),
            virions: Field::constant(grid, virions),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.target.grid()
    }

    pub fn fields(&self) -> [&Field; 3] {
        [&self.target, &self.infected, &self.virions]
    }

    /// Smallest nodal value over all three components.
    pub fn min_value(&self) -> f64 {
        self.fields()
            .iter()
            .map(|f| f.min())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute nodal difference over all components.
    pub fn sup_distance(&self, other: &State) -> f64 {
        self.fields()
            .iter()
            .zip(other.fields())
            .flat_map(|(a, b)| {
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Nodewise right-hand sides of the kinetics.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub target: Vec<f64>,
    pub infected: Vec<f64>,
    pub virions: Vec<f64>,
}

pub fn reaction(state: &State, params: &Parameters) -> Result<Reaction, ModelError> {
    if !state.target.same_grid(&params.lambda) {
        return Err(ModelError::GridMismatch);
    }
    let n = state.target.len();
    let mut out = Reaction {
        target: Vec::with_capacity(n),
        infected: Vec::with_capacity(n),
        virions: Vec::with_capacity(n),
    };
    let (t, i, v, lam) = (
        state.target.values(),
        state.infected.values(),
        state.virions.values(),
        params.lambda.values(),
    );
    for j in 0..n {
        let infection = params.k * t[j] * v[j];
        out.target.push(lam[j] - params.mu_t * t[j] - infection);
        out.infected.push(infection - params.mu_i * i[j]);
        out.virions
            .push(params.burst_size * params.mu_i * i[j] - params.mu_v * v[j]);
    }
    Ok(out)
}

/// One violated standing assumption.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveScalar {
        name: Scalar,
        value: f64,
    },
    NegativeLambda {
        node: usize,
        value: f64,
    },
    LambdaIdenticallyZero,
    InitialNotPositive {
        component: &'static str,
        node: usize,
        value: f64,
    },
    GridMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveScalar { name, value } => {
                write!(f, "{name} must be positive, got {value}")
            }
            Violation::NegativeLambda { node, value } => {
                write!(f, "lambda negative at node {node}: {value}")
            }
            Violation::LambdaIdenticallyZero => f.write_str("lambda identically zero"),
            Violation::InitialNotPositive {
                component,
                node,
                value,
            } => write!(
                f,
                "initial {component} not strictly positive at node {node}: {value}"
            ),
            Violation::GridMismatch => f.write_str("initial state and lambda on different grids"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    /// True if the only problems are non-strict positivity of the initial data.
    pub fn only_initial_positivity(&self) -> bool {
        self.violations.iter().all(|v| match v {
            Violation::InitialNotPositive { value, .. } => *value >= 0.0,
            _ => false,
        })
    }
}

pub fn validate(params: &Parameters, init: &State) -> ValidationReport {
    let mut violations = Vec::new();
    for name in Scalar::ALL {
        let value = params.get(name);
        if !(value > 0.0 && value.is_finite()) {
            violations.push(Violation::NonPositiveScalar { name, value });
        }
    }
    for (node, &value) in params.lambda.values().iter().enumerate() {
        if value < 0.0 {
            violations.push(Violation::NegativeLambda { node, value });
        }
    }
    if !(params.lambda.max() > 0.0) {
        violations.push(Violation::LambdaIdenticallyZero);
    }
    if !init.target.same_grid(&params.lambda) {
        violations.push(Violation::GridMismatch);
    }
    for (component, field) in [
        ("T", &init.target),
        ("I", &init.infected),
        ("V", &init.virions),
    ] {
        let (node, value) = field.argmin();
        if !(value > 0.0) {
            violations.push(Violation::InitialNotPositive {
                component,
                node,
                value,
            });
        }
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    fn eval(&self, x: [f64; 2]) -> f64 {
        let r2: f64 = self
            .center
            .iter()
            .zip(x)
            .map(|(c, xi)| (xi - c).powi(2))
            .sum();
        self.amplitude * (-r2 / (2.0 * self.width * self.width)).exp()
    }

    fn check(&self, dim: usize) -> Result<(), ModelError> {
        if self.amplitude < 0.0 {
            return Err(ModelError::Lambda(format!(
                "negative amplitude {}",
                self.amplitude
            )));
        }
        if !(self.width > 0.0) {
            return Err(ModelError::Lambda(format!(
                "width must be positive, got {}",
                self.width
            )));
        }
        if self.center.len() != dim {
            return Err(ModelError::Lambda(format!(
                "bump center has {} coordinates, grid is {dim}D",
                self.center.len()
            )));
        }
        Ok(())
    }
}

/// Families of supply-rate profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaFamily {
    Constant {
        value: f64,
    },
    /// `amplitude * exp(-|x - center|² / (2 width²))`.
    Gaussian {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    Bumps {
        #[serde(default)]
        baseline: f64,
        bumps: Vec<Bump>,
    },
    /// `levels[0]` below `position` along `axis`, `levels[1]` at or above it.
    Step {
        #[serde(default)]
        axis: usize,
        position: f64,
        levels: [f64; 2],
    },
    Tabulated {
        values: Vec<f64>,
    },
}

impl LambdaFamily {
    pub fn build(&self, grid: Arc<Grid>) -> Result<Field, ModelError> {
        let nonneg = |what: &str, v: f64| {
            if v < 0.0 || !v.is_finite() {
                Err(ModelError::Lambda(format!(
                    "{what} must be nonnegative, got {v}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            LambdaFamily::Constant { value } => {
                nonneg("constant value", *value)?;
                Ok(Field::constant(grid, *value))
            }
            LambdaFamily::Gaussian {
                center,
                width,
                amplitude,
            } => {
                let bump = Bump {
                    center: center.clone(),
                    width: *width,
                    amplitude: *amplitude,
                };
                bump.check(grid.dim())?;
                Ok(Field::from_fn(grid, |x| bump.eval(x)))
            }
            LambdaFamily::Bumps { baseline, bumps } => {
                nonneg("baseline", *baseline)?;
                for b in bumps {
                    b.check(grid.dim())?;
                }
                Ok(Field::from_fn(grid, |x| {
                    baseline + bumps.iter().map(|b| b.eval(x)).sum::<f64>()
                }))
            }
            LambdaFamily::Step {
                axis,
                position,
                levels,
            } => {
                if *axis >= grid.dim() {
                    return Err(ModelError::Lambda(format!("step axis {axis} out of range")));
                }
                nonneg("step level", levels[0])?;
                nonneg("step level", levels[1])?;
                let axis = *axis;
                Ok(Field::from_fn(grid, |x| {
                    if x[axis] < *position {
                        levels[0]
                    } else {
                        levels[1]
                    }
                }))
            }
            LambdaFamily::Tabulated { values } => {
                if let Some(&v) = values.iter().find(|v| **v < 0.0) {
                    return Err(ModelError::Lambda(format!(
                        "tabulated value {v} is negative"
                    )));
                }
                if values.len() != grid.len() {
                    return Err(ModelError::Lambda(format!(
                        "tabulated length {} does not match {} nodes",
                        values.len(),
                        grid.len()
                    )));
                }
                Ok(Field::new(grid, values.clone())?)
            }
        }
    }
}

/// The three diffusion operators `D_T Δ`, `D_I Δ`, `D_V Δ` on one grid.
#[derive(Debug, Clone)]
pub struct Laplacians {
    pub target: SparseOperator,
    pub infected: SparseOperator,
    pub virions: SparseOperator,
}

impl Laplacians {
    pub fn new(grid: &Grid, params: &Parameters) -> Self {
        let unit = assemble_laplacian(grid, 1.0);
        Self {
            target: unit.scaled(params.d_t),
            infected: unit.scaled(params.d_i),
            virions: unit.scaled(params.d_v),
        }
    }

    pub fn all(&self) -> [&SparseOperator; 3] {
        [&self.target, &self.infected, &self.virions]
    }
}
