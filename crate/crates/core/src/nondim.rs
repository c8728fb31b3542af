//! Non-dimensionalization of the model.
//!
//! With `t_c = 1/μ_T`, `x_c = sqrt(D_T/μ_T)`, `T_c = μ_V/(kN)`,
//! `I_c = μ_V μ_T/(kN μ_I)` and `V_c = μ_T/k` the system becomes
//!
//! ```text
//! dT/dt -     ΔT = q(x) - T - T V
//! dI/dt - β1 ΔI = α1 (T V - I)
//! dV/dt - β2 ΔV = α2 (I - V)
//! ```
//!
//! with `α1 = μ_I/μ_T`, `α2 = μ_V/μ_T`, `β1 = D_I/D_T`, `β2 = D_V/D_T` and
//! `q = kN λ / (μ_T μ_V)`.
//!
//! The dimensionless system is integrated by the ordinary solver. The
//! kinetics there carry a single `k` in both the T and I equations, so the
//! solver works with `Ĩ = I/α1` and the synthetic constants
//! `k = 1, N = α2, μ_T = 1, μ_I = α1, μ_V = α2`; see [`Dimensionless`].

use std::sync::Arc;

use serde::Serialize;

use crate::mesh::{Field, Grid, MeshError};
use crate::model::{Parameters, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingConstants {
    pub t_c: f64,
    pub x_c: f64,
    pub t_cells: f64,
    pub i_cells: f64,
    pub v_cells: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimensionless {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Scaled supply `q`, on the grid with lengths divided by `x_c`.
    pub q: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToDimensionless,
    ToDimensional,
}

pub fn nondimensionalize(
    params: &Parameters,
) -> Result<(ScalingConstants, Dimensionless), MeshError> {
    let p = params;
    let kn = p.k * p.burst_size;
    let sc = ScalingConstants {
        t_c: 1.0 / p.mu_t,
        x_c: (p.d_t / p.mu_t).sqrt(),
        t_cells: p.mu_v / kn,
        i_cells: p.mu_v * p.mu_t / (kn * p.mu_i),
        v_cells: p.mu_t / p.k,
    };
    let grid = Arc::new(p.grid().rescaled(sc.x_c)?);
    let factor = kn / (p.mu_t * p.mu_v);
    let q = Field::new(grid, p.lambda.values().iter().map(|l| factor * l).collect())?;
    Ok((
        sc,
        Dimensionless {
            alpha1: p.mu_i / p.mu_t,
            alpha2: p.mu_v / p.mu_t,
            beta1: p.d_i / p.d_t,
            beta2: p.d_v / p.d_t,
            q,
        },
    ))
}

/// Divides (forward) or multiplies (inverse) by the concentration scales and
/// `t_c`; the grid lengths are rescaled by `x_c`, nodal layout unchanged.
pub fn rescale_state(
    state: &State,
    sc: &ScalingConstants,
    direction: Direction,
) -> Result<State, MeshError> {
    let forward = direction == Direction::ToDimensionless;
    let f = |v: f64, c: f64| if forward { v / c } else { v * c };
    let grid_factor = if forward { sc.x_c } else { 1.0 / sc.x_c };
    let grid = Arc::new(state.grid().rescaled(grid_factor)?);
    let field = |src: &Field, c: f64| {
        Field::new(
            grid.clone(),
            src.values().iter().map(|&v| f(v, c)).collect(),
        )
    };
    Ok(State {
        time: f(state.time, sc.t_c),
        target: field(&state.target, sc.t_cells)?,
        infected: field(&state.infected, sc.i_cells)?,
        virions: field(&state.virions, sc.v_cells)?,
    })
}

impl Dimensionless {
    pub fn grid(&self) -> &Arc<Grid> {
        self.q.grid()
    }

    /// `sup q`, equal to `N k ‖λ‖∞ / (μ_T μ_V)`.
    pub fn q_sup(&self) -> f64 {
        self.q.sup_norm()
    }

    /// Constants under which the ordinary kinetics reproduce the
    /// dimensionless system for the variables `(T, I/α1, V)`.
    pub fn synthetic_parameters(&self) -> Parameters {
        Parameters {
            lambda: self.q.clone(),
            k: 1.0,
            burst_size: self.alpha2,
            mu_t: 1.0,
            mu_i: self.alpha1,
            mu_v: self.alpha2,
            d_t: 1.0,
            d_i: self.beta1,
            d_v: self.beta2,
        }
    }

    /// Dimensionless state to the solver's variables (divides I by `α1`).
    pub fn to_solver(&self, state: &State) -> State {
        let mut s = state.clone();
        s.infected = s.infected.map(|v| v / self.alpha1);
        s
    }

    pub fn from_solver(&self, state: &State) -> State {
        let mut s = state.clone();
        s.infected = s.infected.map(|v| v * self.alpha1);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Boundary;
    use crate::model::reaction;

    fn params() -> Parameters {
        let g = Arc::new(Grid::line(2.0, 12, Boundary::Neumann).unwrap());
        Parameters {
            lambda: Field::from_fn(g, |x| 5.0 + x[0]),
            k: 1e-5,
            burst_size: 100.0,
            mu_t: 0.1,
            mu_i: 0.5,
            mu_v: 10.0,
            d_t: 0.01,
            d_i: 0.02,
            d_v: 0.04,
        }
    }

    #[test]
    fn unit_normalization() {
        let mut p = params();
        p.mu_t = 1.0;
        p.d_t = 1.0;
        let (sc, d) = nondimensionalize(&p).unwrap();
        assert_eq!((sc.t_c, sc.x_c), (1.0, 1.0));
        assert_eq!((d.alpha1, d.alpha2), (p.mu_i, p.mu_v));
    }

    #[test]
    fn scaling_constants() {
        let p = params();
        let (sc, d) = nondimensionalize(&p).unwrap();
        assert!((sc.t_cells - 1e4).abs() < 1e4 * 1e-14);
        assert!((sc.i_cells - 10.0 * 0.1 / (1e-3 * 0.5)).abs() < 1e-14 * sc.i_cells);
        assert!((sc.v_cells - 0.1 / 1e-5).abs() < 1e-14 * sc.v_cells);
        assert!((sc.x_c - 0.1f64.sqrt()).abs() < 1e-15);
        assert!((d.q_sup() - p.corollary_bound()).abs() < 1e-14 * p.corollary_bound());
        assert!((d.beta1 - 2.0).abs() < 1e-15 && (d.beta2 - 4.0).abs() < 1e-15);
    }

    #[test]
    fn roundtrip_and_clearance() {
        let p = params();
        let (sc, _) = nondimensionalize(&p).unwrap();
        let g = p.grid().clone();
        let s = State::new(
            3.0,
            Field::from_fn(g.clone(), |x| 100.0 + x[0]),
            Field::zeros(g.clone()),
            Field::zeros(g),
        )
        .unwrap();
        let there = rescale_state(&s, &sc, Direction::ToDimensionless).unwrap();
        assert!(there.infected.values().iter().all(|&v| v == 0.0));
        let back = rescale_state(&there, &sc, Direction::ToDimensional).unwrap();
        for (a, b) in s.target.values().iter().zip(back.target.values()) {
            assert!((a - b).abs() <= 1e-14 * a.abs());
        }
        assert!((back.time - 3.0).abs() < 1e-14);
        assert!((back.grid().lengths()[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn synthetic_kinetics_match_dimensionless_terms() {
        let p = params();
        let (_, d) = nondimensionalize(&p).unwrap();
        let g = d.grid().clone();
        let s = State::new(
            0.0,
            Field::from_fn(g.clone(), |x| 0.3 + x[0]),
            Field::from_fn(g.clone(), |x| 0.2 + 0.1 * x[0]),
            Field::from_fn(g.clone(), |x| 0.7 - 0.05 * x[0]),
        )
        .unwrap();
        let r = reaction(&d.to_solver(&s), &d.synthetic_parameters()).unwrap();
        for j in 0..g.len() {
            let (t, i, v, q) = (
                s.target.values()[j],
                s.infected.values()[j],
                s.virions.values()[j],
                d.q.values()[j],
            );
            assert!((r.target[j] - (q - t - t * v)).abs() < 1e-12);
            // solver I is I/α1, so its rate is the dimensionless rate over α1
            assert!((r.infected[j] * d.alpha1 - d.alpha1 * (t * v - i)).abs() < 1e-12);
            assert!((r.virions[j] - d.alpha2 * (i - v)).abs() < 1e-12);
        }
    }
}
