//! Time stepping for the reaction-diffusion system and runtime monitors.
//!
//! Two schemes:
//!
//! - `Explicit`: forward Euler on diffusion and reaction, subject to the
//!   diffusive CFL bound `dt <= h_min² / (2 dim max D)`.
//! - `ImexBe`: `(I - dt D Δ) u_next = u + dt f(u)` per component; diffusion
//!   implicit, kinetics explicit.
//!
//! Positivity is monitored and never enforced.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{self, Field, Grid, MeshError, SolveError, SolveOptions, SparseOperator};
use crate::model::{reaction, Laplacians, ModelError, Parameters, State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("time step {dt} exceeds the diffusive CFL bound {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("non-finite value after step")]
    NonFinite,
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("implicit solve failed: {0}")]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Explicit,
    ImexBe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorFlags {
    pub positivity: bool,
    pub sup_bound_t: bool,
    pub gronwall_iv: bool,
}

impl Default for MonitorFlags {
    fn default() -> Self {
        Self {
            positivity: true,
            sup_bound_t: true,
            gronwall_iv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: usize,
    pub monitors: MonitorFlags,
}

impl StepperConfig {
    pub fn imex(dt: f64, t_end: f64, snapshot_every: usize) -> Self {
        Self {
            scheme: Scheme::ImexBe,
            dt,
            t_end,
            snapshot_every,
            monitors: MonitorFlags::default(),
        }
    }

    pub fn explicit(dt: f64, t_end: f64, snapshot_every: usize) -> Self {
        Self {
            scheme: Scheme::Explicit,
            ..Self::imex(dt, t_end, snapshot_every)
        }
    }

    /// Number of steps; the last one is shortened to land on `t_end`.
    pub fn step_count(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// `h_min² / (2 dim max D)`.
pub fn cfl_limit(grid: &Grid, params: &Parameters) -> f64 {
    grid.min_spacing().powi(2) / (2.0 * grid.dim() as f64 * params.max_diffusion())
}

fn finite_field(template: &Field, values: Vec<f64>) -> Result<Field, StepError> {
    template.with_values(values).map_err(|e| match e {
        MeshError::NonFinite(_) => StepError::NonFinite,
        e => StepError::Model(e.into()),
    })
}

/// One forward Euler step.
pub fn step_explicit(
    state: &State,
    params: &Parameters,
    ops: &Laplacians,
    dt: f64,
) -> Result<State, StepError> {
    if !(dt > 0.0) {
        return Err(StepError::BadStep(dt));
    }
    let limit = cfl_limit(state.grid(), params);
    if dt > limit * (1.0 + 1e-12) {
        return Err(StepError::Cfl { dt, limit });
    }
    let f = reaction(state, params)?;
    let mut next = Vec::with_capacity(3);
    for (op, field, react) in [
        (&ops.target, &state.target, &f.target),
        (&ops.infected, &state.infected, &f.infected),
        (&ops.virions, &state.virions, &f.virions),
    ] {
        let diff = op.apply(field.values()).map_err(ModelError::from)?;
        let vals = field
            .values()
            .iter()
            .zip(&diff)
            .zip(react)
            .map(|((u, d), r)| u + dt * (d + r))
            .collect();
        next.push(finite_field(field, vals)?);
    }
    let virions = next.pop().unwrap();
    let infected = next.pop().unwrap();
    let target = next.pop().unwrap();
    Ok(State {
        time: state.time + dt,
        target,
        infected,
        virions,
    })
}

/// IMEX backward-Euler stepper with cached system matrices `I - dt D Δ`.
#[derive(Debug, Clone)]
pub struct ImexStepper {
    ops: Laplacians,
    cached: Option<(f64, [SparseOperator; 3])>,
    pub tol: f64,
}

impl ImexStepper {
    pub fn new(ops: Laplacians) -> Self {
        Self {
            ops,
            cached: None,
            tol: 1e-10,
        }
    }

    pub fn laplacians(&self) -> &Laplacians {
        &self.ops
    }

    fn systems(&mut self, dt: f64) -> &[SparseOperator; 3] {
        let stale = !matches!(&self.cached, Some((cached_dt, _)) if *cached_dt == dt);
        if stale {
            let n = self.ops.target.rows();
            let id = SparseOperator::identity(n);
            let build = |op: &SparseOperator| id.linear_combination(1.0, op, -dt);
            let systems = [
                build(&self.ops.target),
                build(&self.ops.infected),
                build(&self.ops.virions),
            ];
            self.cached = Some((dt, systems));
        }
        &self.cached.as_ref().unwrap().1
    }

    pub fn step(
        &mut self,
        state: &State,
        params: &Parameters,
        dt: f64,
    ) -> Result<State, StepError> {
        if !(dt > 0.0) {
            return Err(StepError::BadStep(dt));
        }
        let f = reaction(state, params)?;
        let tol = self.tol;
        let systems = self.systems(dt);
        let mut next = Vec::with_capacity(3);
        for (sys, field, react) in [
            (&systems[0], &state.target, &f.target),
            (&systems[1], &state.infected, &f.infected),
            (&systems[2], &state.virions, &f.virions),
        ] {
            let rhs: Vec<f64> = field
                .values()
                .iter()
                .zip(react)
                .map(|(u, r)| u + dt * r)
                .collect();
            let x = mesh::solve_linear_with_guess(
                sys,
                &rhs,
                Some(field.values()),
                SolveOptions {
                    tol,
                    max_iter: None,
                },
            )?;
            next.push(finite_field(field, x)?);
        }
        let virions = next.pop().unwrap();
        let infected = next.pop().unwrap();
        let target = next.pop().unwrap();
        Ok(State {
            time: state.time + dt,
            target,
            infected,
            virions,
        })
    }
}

/// One IMEX step without caching.
pub fn step_imex(
    state: &State,
    params: &Parameters,
    ops: &Laplacians,
    dt: f64,
) -> Result<State, StepError> {
    ImexStepper::new(ops.clone()).step(state, params, dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub state: State,
}

impl Snapshot {
    pub fn time(&self) -> f64 {
        self.state.time
    }
}

/// Per-step extremes, logged after each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub min_t: f64,
    pub min_i: f64,
    pub min_v: f64,
    pub sup_t: f64,
    pub sup_i: f64,
    pub sup_v: f64,
}

impl StepRecord {
    fn of(step: usize, s: &State) -> Self {
        Self {
            step,
            time: s.time,
            min_t: s.target.min(),
            min_i: s.infected.min(),
            min_v: s.virions.min(),
            sup_t: s.target.sup_norm(),
            sup_i: s.infected.sup_norm(),
            sup_v: s.virions.sup_norm(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.min_t.min(self.min_i).min(self.min_v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub snapshots: Vec<Snapshot>,
    pub monitor_log: Vec<StepRecord>,
}

impl Trajectory {
    pub fn initial(&self) -> &State {
        &self.snapshots[0].state
    }

    pub fn last(&self) -> &State {
        &self.snapshots.last().expect("non-empty trajectory").state
    }

    /// Smallest nodal value over every step, node and component,
    /// including the initial state.
    pub fn min_value(&self) -> f64 {
        let logged = self
            .monitor_log
            .iter()
            .map(StepRecord::min_value)
            .fold(f64::INFINITY, f64::min);
        logged.min(self.initial().min_value())
    }

    /// `(t, ‖I‖∞ + ‖V‖∞)` for the initial state and every step.
    pub fn iv_series(&self) -> Vec<(f64, f64)> {
        let s0 = self.initial();
        std::iter::once((s0.time, s0.infected.sup_norm() + s0.virions.sup_norm()))
            .chain(self.monitor_log.iter().map(|r| (r.time, r.sup_i + r.sup_v)))
            .collect()
    }
}

#[derive(Debug, Error)]
#[error("simulation aborted at step {step}: {source}")]
pub struct SimulationError {
    pub step: usize,
    pub source: StepError,
    /// Everything computed before the failing step.
    pub partial: Box<Trajectory>,
}

/// Integrates from `init` to `config.t_end`.
///
/// Snapshots are taken at step 0, every `snapshot_every` steps, and at the
/// final step.
pub fn simulate(
    init: &State,
    params: &Parameters,
    config: &StepperConfig,
) -> Result<Trajectory, SimulationError> {
    simulate_until(init, params, config, |_| false)
}

/// As [`simulate`], stopping early after any step for which `stop` returns
/// true (that state is kept as a snapshot).
pub fn simulate_until(
    init: &State,
    params: &Parameters,
    config: &StepperConfig,
    mut stop: impl FnMut(&State) -> bool,
) -> Result<Trajectory, SimulationError> {
    let grid: Arc<Grid> = init.grid().clone();
    let ops = Laplacians::new(&grid, params);
    let n_steps = config.step_count();
    let every = config.snapshot_every.max(1);
    let mut traj = Trajectory {
        dt: config.dt,
        snapshots: vec![Snapshot {
            step: 0,
            state: init.clone(),
        }],
        monitor_log: Vec::with_capacity(n_steps),
    };
    let fail = |step, source, traj: Trajectory| SimulationError {
        step,
        source,
        partial: Box::new(traj),
    };
    if !(config.dt > 0.0 && config.t_end > 0.0) {
        return Err(fail(0, StepError::BadStep(config.dt), traj));
    }
    let mut imex = ImexStepper::new(ops.clone());
    let mut state = init.clone();
    let t0 = init.time;
    for step in 1..=n_steps {
        let target_time = t0 + (step as f64 * config.dt).min(config.t_end);
        let dt = if step == n_steps {
            t0 + config.t_end - state.time
        } else {
            config.dt
        };
        let next = match config.scheme {
            Scheme::Explicit => step_explicit(&state, params, &ops, dt),
            Scheme::ImexBe => imex.step(&state, params, dt),
        };
        state = match next {
            Ok(mut s) => {
                s.time = target_time;
                s
            }
            Err(e) => return Err(fail(step, e, traj)),
        };
        traj.monitor_log.push(StepRecord::of(step, &state));
        let halt = stop(&state);
        if step % every == 0 || step == n_steps || halt {
            traj.snapshots.push(Snapshot {
                step,
                state: state.clone(),
            });
        }
        if halt {
            break;
        }
    }
    Ok(traj)
}

/// Which a-priori bound a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// A nodal value below `-1e-12`.
    Positivity,
    /// `‖T(t)‖∞ <= ‖T0‖∞ e^{-μ_T t} + ‖λ‖∞/μ_T (1 - e^{-μ_T t})`.
    SupDecayT,
    /// `‖T(t)‖∞ <= T_M = ‖T0‖∞ + ‖λ‖∞/μ_T`.
    UniformT,
    /// `‖I(t)‖∞ + ‖V(t)‖∞ <= (‖I0‖∞ + ‖V0‖∞) e^{C t}`, `C = max(k T_M, N μ_I)`.
    GronwallIv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub kind: BoundKind,
    pub snapshot: usize,
    pub step: usize,
    pub time: f64,
    pub node: usize,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub violations: Vec<BoundViolation>,
    pub min_value: f64,
    pub t_m: f64,
    /// Largest `value - bound` over all checks (negative when all pass).
    pub max_excess: f64,
    pub snapshots_checked: usize,
}

impl MonitorReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: BoundKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

pub const POSITIVITY_FLOOR: f64 = -1e-12;

/// Checks every snapshot against the a-priori bounds enabled in `flags`.
/// Each bound gets a tolerance band of `band_rel * bound`.
pub fn monitor_bounds(
    traj: &Trajectory,
    params: &Parameters,
    flags: MonitorFlags,
    band_rel: f64,
) -> MonitorReport {
    let s0 = traj.initial();
    let t0_sup = s0.target.sup_norm();
    let lam = params.lambda.sup_norm();
    let mu = params.mu_t;
    let t_m = t0_sup + lam / mu;
    let gronwall_rate = (params.k * t_m).max(params.burst_size * params.mu_i);
    let phi0 = s0.infected.sup_norm() + s0.virions.sup_norm();
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    let mut min_value = f64::INFINITY;
    for (idx, snap) in traj.snapshots.iter().enumerate() {
        let s = &snap.state;
        let t = s.time - s0.time;
        let mut push = |kind, node, value: f64, bound: f64, band: f64| {
            max_excess = max_excess.max(value - bound);
            if value > bound + band {
                violations.push(BoundViolation {
                    kind,
                    snapshot: idx,
                    step: snap.step,
                    time: s.time,
                    node,
                    value,
                    bound,
                });
            }
        };
        for f in s.fields() {
            let (node, v) = f.argmin();
            min_value = min_value.min(v);
            if flags.positivity {
                push(BoundKind::Positivity, node, -v, -POSITIVITY_FLOOR, 0.0);
            }
        }
        if flags.sup_bound_t {
            let (node, sup) = argmax_abs(s.target.values());
            let decay = (-mu * t).exp();
            let b = t0_sup * decay + lam / mu * (1.0 - decay);
            push(BoundKind::SupDecayT, node, sup, b, band_rel * b);
            push(BoundKind::UniformT, node, sup, t_m, band_rel * t_m);
        }
        if flags.gronwall_iv {
            let phi = s.infected.sup_norm() + s.virions.sup_norm();
            let b = phi0 * (gronwall_rate * t).exp();
            if b.is_finite() {
                let (node, _) = argmax_abs(s.infected.values());
                push(BoundKind::GronwallIv, node, phi, b, band_rel * b);
            }
        }
    }
    MonitorReport {
        violations,
        min_value,
        t_m,
        max_excess,
        snapshots_checked: traj.snapshots.len(),
    }
}

fn argmax_abs(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .map(|v| v.abs())
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        )
}
