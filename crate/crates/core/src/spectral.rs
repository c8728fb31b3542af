//! Linearization about the clearance state and its principal eigenvalue.
//!
//! The (I, V) subsystem linearized at `(T∞, 0, 0)` reads
//!
//! ```text
//! L φ = diag(D_I, D_V) Δφ + M(x) φ,   M(x) = [ -μ_I      k T∞(x) ]
//!                                            [ N μ_I    -μ_V     ]
//! ```
//!
//! `M` is cooperative (nonnegative off-diagonals) but not symmetric, so `L`
//! is treated as a general matrix. Its spectral bound `η0` is found by power
//! iteration on `L + σI`, which is entrywise nonnegative for
//! `σ = max |diag| + 1`; the Perron root of that matrix is `η0 + σ`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{self, dot, norm2, sup_norm, Field, Grid, SparseOperator};
use crate::model::{ModelError, Parameters};
use crate::steady::{self, SteadyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("power iteration did not converge in {} iterations (eta0 ~ {:.6e}, residual {:.3e})", .0.iterations, .0.eta0, .0.residual)]
    NotConverged(Box<SpectralResult>),
    #[error("operator must be square with an even number of rows, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("steady state: {0}")]
    Steady(#[from] SteadyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub eta0: f64,
    /// Principal eigenvector, `[φ_I; φ_V]`, sup norm 1.
    pub eigenvector: Vec<f64>,
    /// `‖L v − η0 v‖₂ / ‖v‖₂`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SpectralResult {
    pub fn infected_part(&self) -> &[f64] {
        &self.eigenvector[..self.eigenvector.len() / 2]
    }

    pub fn virion_part(&self) -> &[f64] {
        &self.eigenvector[self.eigenvector.len() / 2..]
    }
}

/// Assembles `L` as a `2n x 2n` operator, I block first.
pub fn assemble_linearized(
    params: &Parameters,
    t_inf: &Field,
    grid: &Grid,
) -> Result<SparseOperator, SpectralError> {
    let n = grid.len();
    if t_inf.len() != n || params.lambda.len() != n {
        return Err(ModelError::GridMismatch.into());
    }
    let lap = mesh::assemble_laplacian(grid, 1.0);
    let ii = lap.scaled(params.d_i).shifted(-params.mu_i);
    let vv = lap.scaled(params.d_v).shifted(-params.mu_v);
    let iv = SparseOperator::diagonal_matrix(
        &t_inf
            .values()
            .iter()
            .map(|t| params.k * t)
            .collect::<Vec<_>>(),
    );
    let vi = SparseOperator::diagonal_matrix(&vec![params.burst_size * params.mu_i; n]);
    Ok(SparseOperator::block(&[
        vec![Some(&ii), Some(&iv)],
        vec![Some(&vi), Some(&vv)],
    ]))
}

#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Overrides the default shift `max |diag| + 1`.
    pub shift: Option<f64>,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50_000,
            shift: None,
        }
    }
}

pub fn default_shift(op: &SparseOperator) -> f64 {
    sup_norm(&op.diagonal()) + 1.0
}

/// Principal eigenvalue of a cooperative operator by shifted power iteration.
///
/// Converged when the eigenvalue changes by less than `tol` between sweeps
/// and the residual is below `100 tol`. An unconverged run returns its best
/// estimate inside [`SpectralError::NotConverged`].
pub fn principal_eigenvalue(
    op: &SparseOperator,
    opts: PowerOptions,
) -> Result<SpectralResult, SpectralError> {
    let (rows, cols) = (op.rows(), op.cols());
    if rows != cols || rows == 0 || rows % 2 != 0 {
        return Err(SpectralError::Shape { rows, cols });
    }
    let sigma = opts.shift.unwrap_or_else(|| default_shift(op));
    let n = rows;
    let mut v = vec![1.0; n];
    let mut av = vec![0.0; n];
    let mut eta = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        op.apply_into(&v, &mut av).expect("square operator");
        let vv = dot(&v, &v);
        let eta_new = dot(&v, &av) / vv;
        let r: Vec<f64> = av.iter().zip(&v).map(|(a, x)| a - eta_new * x).collect();
        residual = norm2(&r) / vv.sqrt();
        let change = (eta_new - eta).abs();
        eta = eta_new;
        if change < opts.tol && residual < 100.0 * opts.tol {
            converged = true;
            break;
        }
        // v <- (L + σ) v, renormalized to sup norm 1
        let mut scale = 0.0f64;
        for (x, a) in v.iter_mut().zip(&av) {
            *x = a + sigma * *x;
            scale = scale.max(x.abs());
        }
        if scale == 0.0 || !scale.is_finite() {
            break;
        }
        v.iter_mut().for_each(|x| *x /= scale);
    }
    let scale = sup_norm(&v);
    v.iter_mut().for_each(|x| *x /= scale);
    let result = SpectralResult {
        eta0: eta,
        eigenvector: v,
        residual,
        iterations,
        converged,
    };
    if converged {
        Ok(result)
    } else {
        Err(SpectralError::NotConverged(Box::new(result)))
    }
}

/// `R0(x) = N k T∞(x) / μ_V`.
pub fn compute_r0_field(t_inf: &Field, params: &Parameters) -> Field {
    let c = params.burst_size * params.k / params.mu_v;
    t_inf.map(|t| c * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    GloballyStableByCorollary,
    #[serde(rename = "globally_stable_by_R0")]
    GloballyStableByR0,
    LocallyStable,
    Unstable,
    Marginal,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::GloballyStableByCorollary => "globally_stable_by_corollary",
            Classification::GloballyStableByR0 => "globally_stable_by_R0",
            Classification::LocallyStable => "locally_stable",
            Classification::Unstable => "unstable",
            Classification::Marginal => "marginal",
        }
    }

    pub fn is_globally_stable(self) -> bool {
        matches!(
            self,
            Classification::GloballyStableByCorollary | Classification::GloballyStableByR0
        )
    }

    /// Ordinal from most to least stable, used to check monotone sweeps.
    pub fn rank(self) -> u8 {
        match self {
            Classification::GloballyStableByCorollary => 0,
            Classification::GloballyStableByR0 => 1,
            Classification::LocallyStable => 2,
            Classification::Marginal => 3,
            Classification::Unstable => 4,
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const MARGIN: f64 = 1e-6;

/// Decision table: corollary bound, then `‖R0‖∞`, then the sign of `η0`.
pub fn classify(eta0: f64, r0_sup: f64, corollary_bound: f64) -> Classification {
    if corollary_bound < 1.0 {
        Classification::GloballyStableByCorollary
    } else if r0_sup < 1.0 {
        Classification::GloballyStableByR0
    } else if eta0 < -MARGIN {
        Classification::LocallyStable
    } else if eta0 > MARGIN {
        Classification::Unstable
    } else {
        Classification::Marginal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eta0: f64,
    #[serde(rename = "R0_sup")]
    pub r0_sup: f64,
    pub corollary_bound: f64,
    pub classification: Classification,
    pub eigen_residual: f64,
    pub eigen_iterations: usize,
}

/// Computes `T∞`, `R0`, `η0` and classifies the clearance state.
pub fn classify_stability(
    params: &Parameters,
    grid: &Grid,
) -> Result<StabilityReport, SpectralError> {
    classify_stability_with(params, grid, PowerOptions::default())
}

pub fn classify_stability_with(
    params: &Parameters,
    grid: &Grid,
    opts: PowerOptions,
) -> Result<StabilityReport, SpectralError> {
    let t_inf = steady::solve_t_infinity(params, grid)?;
    let r0_sup = compute_r0_field(&t_inf, params).sup_norm();
    let op = assemble_linearized(params, &t_inf, grid)?;
    let spec = principal_eigenvalue(&op, opts)?;
    let corollary_bound = params.corollary_bound();
    Ok(StabilityReport {
        eta0: spec.eta0,
        r0_sup,
        corollary_bound,
        classification: classify(spec.eta0, r0_sup, corollary_bound),
        eigen_residual: spec.residual,
        eigen_iterations: spec.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Boundary;
    use std::sync::Arc;

    /// μ_I = μ_V = 1, N μ_I = 1 and T∞ ≡ λ/μ_T on a Neumann grid.
    fn homogeneous(k_t_inf: f64) -> (Parameters, Arc<Grid>) {
        let g = Arc::new(Grid::line(1.0, 16, Boundary::Neumann).unwrap());
        let p = Parameters {
            lambda: Field::constant(g.clone(), 40.0),
            k: k_t_inf / 400.0,
            burst_size: 1.0,
            mu_t: 0.1,
            mu_i: 1.0,
            mu_v: 1.0,
            d_t: 0.01,
            d_i: 0.02,
            d_v: 0.005,
        };
        (p, g)
    }

    #[test]
    fn two_by_two_eigenvalues() {
        let (p, g) = homogeneous(4.0);
        let t_inf = steady::solve_t_infinity(&p, &g).unwrap();
        let op = assemble_linearized(&p, &t_inf, &g).unwrap();
        let res = principal_eigenvalue(&op, PowerOptions::default()).unwrap();
        assert!((res.eta0 - 1.0).abs() < 1e-8, "{}", res.eta0);
        assert!(res.eigenvector.iter().all(|&x| x >= -1e-10));
        assert!((sup_norm(&res.eigenvector) - 1.0).abs() < 1e-15);

        let (p, g) = homogeneous(1.0);
        let t_inf = steady::solve_t_infinity(&p, &g).unwrap();
        let op = assemble_linearized(&p, &t_inf, &g).unwrap();
        let res = principal_eigenvalue(&op, PowerOptions::default()).unwrap();
        assert!(res.eta0.abs() < 1e-8, "{}", res.eta0);
    }

    #[test]
    fn zero_t_inf_gives_triangular_spectrum() {
        let g = Arc::new(Grid::line(1.0, 8, Boundary::Neumann).unwrap());
        let (mut p, _) = homogeneous(1.0);
        p.lambda = Field::constant(g.clone(), 1.0);
        p.mu_i = 0.7;
        p.mu_v = 2.0;
        let op = assemble_linearized(&p, &Field::zeros(g.clone()), &g).unwrap();
        let res = principal_eigenvalue(&op, PowerOptions::default()).unwrap();
        assert!((res.eta0 + 0.7).abs() < 1e-8, "{}", res.eta0);
    }

    #[test]
    fn coupling_entries_reproduce_m() {
        let (p, g) = homogeneous(2.0);
        let t_inf = Field::from_fn(g.clone(), |x| 100.0 + 50.0 * x[0]);
        let op = assemble_linearized(&p, &t_inf, &g).unwrap();
        let lap = mesh::assemble_laplacian(&g, 1.0);
        let diffusion = SparseOperator::block(&[
            vec![Some(&lap.scaled(p.d_i)), None],
            vec![None, Some(&lap.scaled(p.d_v))],
        ]);
        let m = op.linear_combination(1.0, &diffusion, -1.0);
        let n = g.len();
        for j in 0..n {
            assert!((m.get(j, j) + p.mu_i).abs() < 1e-12);
            assert!((m.get(j, n + j) - p.k * t_inf.values()[j]).abs() < 1e-12);
            assert!((m.get(n + j, j) - p.burst_size * p.mu_i).abs() < 1e-12);
            assert!((m.get(n + j, n + j) + p.mu_v).abs() < 1e-12);
        }
        assert!(op.triplets().iter().all(|&(r, c, v)| r == c || v >= 0.0));
    }

    #[test]
    fn r0_field_arithmetic() {
        let g = Arc::new(Grid::line(1.0, 4, Boundary::Neumann).unwrap());
        let (mut p, _) = homogeneous(1.0);
        p.lambda = Field::constant(g.clone(), 10.0);
        p.burst_size = 1000.0;
        p.k = 1e-5;
        p.mu_v = 10.0;
        let r0 = compute_r0_field(&Field::constant(g.clone(), 100.0), &p);
        assert!(r0.values().iter().all(|v| (v - 0.1).abs() < 1e-15));
        assert!(compute_r0_field(&Field::zeros(g), &p)
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn decision_table() {
        assert_eq!(
            classify(-0.3, 0.8, 0.9),
            Classification::GloballyStableByCorollary
        );
        assert_eq!(classify(1.0, 4.0, 4.0), Classification::Unstable);
        assert_eq!(classify(-0.1, 1.2, 1.5), Classification::LocallyStable);
        assert_eq!(classify(-0.1, 0.9, 1.5), Classification::GloballyStableByR0);
        assert_eq!(classify(1e-9, 1.0, 1.0), Classification::Marginal);
    }

    #[test]
    fn shift_does_not_change_eta0() {
        let g = Arc::new(Grid::line(1.0, 20, Boundary::Dirichlet).unwrap());
        let (mut p, _) = homogeneous(3.0);
        p.lambda = Field::from_fn(g.clone(), |x| 40.0 * (1.0 + x[0]));
        let t_inf = steady::solve_t_infinity(&p, &g).unwrap();
        let op = assemble_linearized(&p, &t_inf, &g).unwrap();
        let sigma = default_shift(&op);
        let a = principal_eigenvalue(
            &op,
            PowerOptions {
                shift: Some(sigma),
                ..Default::default()
            },
        )
        .unwrap();
        let b = principal_eigenvalue(
            &op,
            PowerOptions {
                shift: Some(2.0 * sigma),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((a.eta0 - b.eta0).abs() < 1e-9);
    }

    #[test]
    fn unconverged_run_reports_best_estimate() {
        let (p, g) = homogeneous(4.0);
        let t_inf = Field::from_fn(g.clone(), |x| 400.0 * (1.0 + x[0]));
        let op = assemble_linearized(&p, &t_inf, &g).unwrap();
        let err = principal_eigenvalue(
            &op,
            PowerOptions {
                max_iter: 2,
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            SpectralError::NotConverged(best) => {
                assert_eq!(best.iterations, 2);
                assert!(!best.converged && best.eta0.is_finite());
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_odd_operator() {
        assert!(matches!(
            principal_eigenvalue(&SparseOperator::identity(3), PowerOptions::default()),
            Err(SpectralError::Shape { .. })
        ));
    }
}
