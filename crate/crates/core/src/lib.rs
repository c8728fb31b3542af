//! Reaction-diffusion model of in-host viral dynamics with spatially
//! heterogeneous target-cell supply.
//!
//! The unknowns are uninfected target cells `T`, infected cells `I` and free
//! virions `V` on a 1D or 2D box:
//!
//! ```text
//! T_t = D_T ΔT + λ(x) - μ_T T - k T V
//! I_t = D_I ΔI + k T V - μ_I I
//! V_t = D_V ΔV + N μ_I I - μ_V V
//! ```
//!
//! Modules, bottom up: [`mesh`] (grids, sparse operators, linear solves),
//! [`model`] (parameters, states, kinetics), [`steady`] (clearance state and
//! Newton search), [`spectral`] (principal eigenvalue and classification),
//! [`timestep`] (integrators and bound monitors), [`nondim`], [`analysis`]
//! (decay fits, growth rates, sweeps) and [`cli`].

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod mesh;
pub mod model;
pub mod nondim;
pub mod spectral;
pub mod steady;
pub mod timestep;

pub use mesh::{Boundary, Field, Grid, SparseOperator};
pub use model::{LambdaFamily, Parameters, Scalar, State};
pub use spectral::{Classification, StabilityReport};
pub use timestep::{Scheme, StepperConfig, Trajectory};
