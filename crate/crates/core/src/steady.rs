//! Uninfected steady state and Newton search for equilibria of the full
//! elliptic system.
//!
//! The clearance state is `(T∞, 0, 0)` where `T∞` solves
//! `(μ_T - D_T Δ) T∞ = λ` with the grid's boundary condition.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{self, norm2, Field, Grid, SolveError, SolveOptions, SparseOperator};
use crate::model::{Laplacians, ModelError, Parameters, State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error("singular Newton Jacobian at iteration {0}")]
    SingularJacobian(usize),
    #[error("Newton diverged: residual grew for 5 consecutive steps (last {residual:.3e})")]
    Diverged { residual: f64 },
    #[error("Newton did not converge in {iterations} iterations (residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },
}

/// Largest Newton system solved densely; above it BiCGSTAB is used.
const NEWTON_DENSE_LIMIT: usize = 1200;

/// Solves `(μ_T I - D_T Δ) T∞ = λ`.
pub fn solve_t_infinity(params: &Parameters, grid: &Grid) -> Result<Field, SteadyError> {
    if params.lambda.len() != grid.len() {
        return Err(ModelError::GridMismatch.into());
    }
    let op = resolvent(params, grid);
    let rhs = params.lambda.values();
    let opts = |tol| SolveOptions {
        tol,
        max_iter: None,
    };
    // ask for headroom first, settle for the contract tolerance
    let x = mesh::solve_linear_with_guess(&op, rhs, None, opts(1e-12))
        .or_else(|_| mesh::solve_linear_with_guess(&op, rhs, None, opts(1e-10)))?;
    Ok(params.lambda.with_values(x).map_err(ModelError::from)?)
}

/// `μ_T I - D_T Δ`.
pub fn resolvent(params: &Parameters, grid: &Grid) -> SparseOperator {
    mesh::assemble_laplacian(grid, params.d_t).linear_combination(
        -1.0,
        &SparseOperator::identity(grid.len()),
        params.mu_t,
    )
}

/// The clearance equilibrium `(T∞, 0, 0)`.
pub fn clearance_state(params: &Parameters) -> Result<State, SteadyError> {
    let t_inf = solve_t_infinity(params, params.grid())?;
    let g = params.grid().clone();
    Ok(State {
        time: 0.0,
        target: t_inf,
        infected: Field::zeros(g.clone()),
        virions: Field::zeros(g),
    })
}

fn residual_vector(
    state: &State,
    params: &Parameters,
    ops: &Laplacians,
) -> Result<Vec<f64>, SteadyError> {
    let r = crate::model::reaction(state, params)?;
    let n = state.target.len();
    let mut out = Vec::with_capacity(3 * n);
    for (op, field, react) in [
        (&ops.target, &state.target, &r.target),
        (&ops.infected, &state.infected, &r.infected),
        (&ops.virions, &state.virions, &r.virions),
    ] {
        let diff = op.apply(field.values()).map_err(ModelError::from)?;
        out.extend(diff.iter().zip(react).map(|(d, f)| d + f));
    }
    Ok(out)
}

/// Euclidean norm of the stacked residual `D Δu + f(u)` of all three
/// equations.
pub fn steady_residual(
    state: &State,
    params: &Parameters,
    ops: &Laplacians,
) -> Result<f64, SteadyError> {
    Ok(norm2(&residual_vector(state, params, ops)?))
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub state: State,
    pub iterations: usize,
    pub residual: f64,
    /// Whether every nodal value of the limit is `>= -1e-12`.
    pub nonnegative: bool,
}

/// Analytic Jacobian of the stacked residual, blocks ordered (T, I, V).
fn jacobian(state: &State, params: &Parameters, ops: &Laplacians) -> SparseOperator {
    let (t, v) = (state.target.values(), state.virions.values());
    let k = params.k;
    let diag = |f: &dyn Fn(usize) -> f64| {
        SparseOperator::diagonal_matrix(&(0..t.len()).map(f).collect::<Vec<_>>())
    };
    let tt = ops
        .target
        .linear_combination(1.0, &diag(&|j| -params.mu_t - k * v[j]), 1.0);
    let tv = diag(&|j| -k * t[j]);
    let it = diag(&|j| k * v[j]);
    let ii = ops.infected.shifted(-params.mu_i);
    let iv = diag(&|j| k * t[j]);
    let vi = diag(&|_| params.burst_size * params.mu_i);
    let vv = ops.virions.shifted(-params.mu_v);
    SparseOperator::block(&[
        vec![Some(&tt), None, Some(&tv)],
        vec![Some(&it), Some(&ii), Some(&iv)],
        vec![None, Some(&vi), Some(&vv)],
    ])
}

fn state_from_stacked(template: &State, x: &[f64]) -> Result<State, SteadyError> {
    let n = template.target.len();
    let g = template.grid().clone();
    let field = |s: &[f64]| Field::new(g.clone(), s.to_vec()).map_err(ModelError::from);
    Ok(State {
        time: template.time,
        target: field(&x[..n])?,
        infected: field(&x[n..2 * n])?,
        virions: field(&x[2 * n..])?,
    })
}

fn stacked(state: &State) -> Vec<f64> {
    state
        .fields()
        .iter()
        .flat_map(|f| f.values().iter().copied())
        .collect()
}

/// Damped Newton iteration on the steady system.
///
/// Steps are halved until the residual decreases (up to 30 halvings); if
/// none decreases, the smallest step is taken and counts towards the
/// divergence guard. Nonnegativity of the limit is reported, not enforced.
pub fn newton_steady(
    initial: &State,
    params: &Parameters,
    opts: NewtonOptions,
) -> Result<NewtonOutcome, SteadyError> {
    let grid = initial.grid().clone();
    if !initial.target.same_grid(&params.lambda) {
        return Err(ModelError::GridMismatch.into());
    }
    let ops = Laplacians::new(&grid, params);
    let mut state = initial.clone();
    let mut f = residual_vector(&state, params, &ops)?;
    let mut res = norm2(&f);
    let mut growth = 0;
    for iter in 0..=opts.max_iter {
        if res <= opts.tol {
            let nonnegative = state.min_value() >= -1e-12;
            return Ok(NewtonOutcome {
                state,
                iterations: iter,
                residual: res,
                nonnegative,
            });
        }
        if iter == opts.max_iter {
            break;
        }
        let jac = jacobian(&state, params, &ops);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = match mesh::solve_general(&jac, &rhs, 1e-12, NEWTON_DENSE_LIMIT) {
            Ok(d) => d,
            Err(SolveError::Singular) => return Err(SteadyError::SingularJacobian(iter)),
            Err(e) => return Err(e.into()),
        };
        let x = stacked(&state);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=30 {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            if trial.iter().all(|v| v.is_finite()) {
                let cand = state_from_stacked(&state, &trial)?;
                let fc = residual_vector(&cand, params, &ops)?;
                let rc = norm2(&fc);
                let better = rc < res;
                if better || step < 1e-9 {
                    accepted = Some((cand, fc, rc));
                    if better {
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, rc)) = accepted else {
            return Err(SteadyError::Diverged { residual: res });
        };
        if rc >= res {
            growth += 1;
            if growth >= 5 {
                return Err(SteadyError::Diverged { residual: rc });
            }
        } else {
            growth = 0;
        }
        state = cand;
        f = fc;
        res = rc;
    }
    Err(SteadyError::MaxIterations {
        iterations: opts.max_iter,
        residual: res,
    })
}

/// Random strictly positive start: each component is its scale times a
/// nodewise factor drawn uniformly from `(0.05, 2)`.
pub fn random_positive_state(grid: Arc<Grid>, scales: [f64; 3], rng: &mut impl Rng) -> State {
    let mut field = |s: f64| {
        let v = (0..grid.len())
            .map(|_| s * rng.gen_range(0.05..2.0))
            .collect();
        Field::new(grid.clone(), v).expect("finite by construction")
    };
    let target = field(scales[0]);
    let infected = field(scales[1]);
    let virions = field(scales[2]);
    State {
        time: 0.0,
        target,
        infected,
        virions,
    }
}

#[derive(Debug, Clone)]
pub struct MultiStartReport {
    pub outcomes: Vec<Result<NewtonOutcome, SteadyError>>,
}

impl MultiStartReport {
    pub fn nonnegative_limits(&self) -> impl Iterator<Item = &NewtonOutcome> {
        self.outcomes
            .iter()
            .filter_map(|o| o.as_ref().ok())
            .filter(|o| o.nonnegative)
    }

    /// Largest sup-distance from a nonnegative limit to `reference`.
    pub fn max_distance_to(&self, reference: &State) -> f64 {
        self.nonnegative_limits()
            .map(|o| o.state.sup_distance(reference))
            .fold(0.0, f64::max)
    }
}

/// Runs Newton from `starts` random positive states concurrently. Start `i`
/// draws from a generator seeded with `seed + i`, so results do not depend
/// on scheduling.
pub fn multi_start(
    params: &Parameters,
    scales: [f64; 3],
    starts: usize,
    seed: u64,
    opts: NewtonOptions,
) -> MultiStartReport {
    let grid = params.grid().clone();
    let outcomes = (0..starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let init = random_positive_state(grid.clone(), scales, &mut rng);
            newton_steady(&init, params, opts)
        })
        .collect();
    MultiStartReport { outcomes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Boundary;

    fn params(grid: Arc<Grid>, lambda: Field) -> Parameters {
        assert!(Arc::ptr_eq(&grid, lambda.grid()));
        Parameters {
            lambda,
            k: 1e-5,
            burst_size: 100.0,
            mu_t: 0.1,
            mu_i: 0.5,
            mu_v: 5.0,
            d_t: 0.01,
            d_i: 0.01,
            d_v: 0.01,
        }
    }

    #[test]
    fn neumann_constant_supply_is_exact() {
        let g = Arc::new(Grid::rect([1.0, 1.0], [12, 9], Boundary::Neumann).unwrap());
        let p = params(g.clone(), Field::constant(g.clone(), 10.0));
        let t = solve_t_infinity(&p, &g).unwrap();
        assert!(t.values().iter().all(|v| (v - 100.0).abs() < 1e-10));
    }

    #[test]
    fn dirichlet_stays_below_bound() {
        let g = Arc::new(Grid::line(1.0, 50, Boundary::Dirichlet).unwrap());
        let p = params(g.clone(), Field::constant(g.clone(), 10.0));
        let t = solve_t_infinity(&p, &g).unwrap();
        assert!(t.min() > 0.0 && t.max() < 100.0);
        // boundary-adjacent nodes are the smallest
        let (j, _) = t.argmin();
        assert!(j == 0 || j == 49, "{j}");
    }

    #[test]
    fn clearance_residual_and_perturbation_order() {
        let g = Arc::new(Grid::line(1.0, 64, Boundary::Neumann).unwrap());
        let lam = Field::from_fn(g.clone(), |x| {
            5.0 + 5.0 * (-(x[0] - 0.3).powi(2) / 0.02).exp()
        });
        let p = params(g.clone(), lam);
        let ops = Laplacians::new(&g, &p);
        let clear = clearance_state(&p).unwrap();
        assert!(steady_residual(&clear, &p, &ops).unwrap() <= 1e-9);

        let phi = Field::from_fn(g.clone(), |x| (3.0 * x[0]).sin());
        let res = |eps: f64| {
            let mut s = clear.clone();
            s.target = s
                .target
                .with_values(
                    s.target
                        .values()
                        .iter()
                        .zip(phi.values())
                        .map(|(t, f)| t + eps * f)
                        .collect(),
                )
                .unwrap();
            steady_residual(&s, &p, &ops).unwrap()
        };
        let ratio = res(1e-3) / res(1e-4);
        assert!((ratio - 10.0).abs() < 0.1, "{ratio}");

        let off = State::uniform(g, 1.0, 1.0, 1.0);
        assert!(steady_residual(&off, &p, &ops).unwrap() > 0.0);
    }

    #[test]
    fn newton_from_root_returns_immediately() {
        let g = Arc::new(Grid::line(1.0, 20, Boundary::Neumann).unwrap());
        let p = params(g.clone(), Field::constant(g.clone(), 10.0));
        let clear = clearance_state(&p).unwrap();
        let out = newton_steady(&clear, &p, NewtonOptions::default()).unwrap();
        assert!(out.iterations <= 1);
        assert!(out.nonnegative);
        assert!(out.state.sup_distance(&clear) < 1e-12);
    }
}
