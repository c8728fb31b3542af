//! Decay-rate fitting, asymptotic bound checks, linear growth measurement
//! and parameter sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mesh::{Field, Grid};
use crate::model::{Parameters, Scalar, State};
use crate::spectral::{self, PowerOptions, SpectralError, StabilityReport};
use crate::steady::{self, SteadyError};
use crate::timestep::{self, SimulationError, StepperConfig};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {needed} samples in the fit window, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("nonpositive value {value} at t = {time} in the fit window")]
    NonPositive { time: f64, value: f64 },
    #[error("left the linear regime at t = {time} after {samples} samples; reduce epsilon")]
    RegimeExit { time: f64, samples: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Steady(#[from] SteadyError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

pub const MIN_FIT_POINTS: usize = 10;
pub const DEFAULT_TRANSIENT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Slope of `ln(value)` against time.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `ln(value) = intercept + rate * t` after discarding
/// the first `transient_fraction` of samples.
pub fn fit_decay_rate(
    series: &[(f64, f64)],
    transient_fraction: f64,
) -> Result<DecayFit, AnalysisError> {
    let skip = (series.len() as f64 * transient_fraction.clamp(0.0, 1.0)).floor() as usize;
    let window = &series[skip.min(series.len())..];
    if window.len() < MIN_FIT_POINTS {
        return Err(AnalysisError::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: window.len(),
        });
    }
    if let Some(&(time, value)) = window.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(AnalysisError::NonPositive { time, value });
    }
    let n = window.len() as f64;
    let (t_mean, y_mean) = window
        .iter()
        .fold((0.0, 0.0), |(a, b), &(t, v)| (a + t / n, b + v.ln() / n));
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, v) in window {
        let (dt, dy) = (t - t_mean, v.ln() - y_mean);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let rate = sty / stt;
    let ss_res: f64 = window
        .iter()
        .map(|&(t, v)| (v.ln() - y_mean - rate * (t - t_mean)).powi(2))
        .sum();
    // a flat series is fitted exactly
    let r_squared = if syy <= f64::EPSILON * y_mean.abs().max(1.0) * n {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    Ok(DecayFit {
        rate,
        intercept: y_mean - rate * t_mean,
        r_squared,
        points: window.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TBoundViolation {
    pub snapshot: usize,
    pub time: f64,
    pub value: f64,
    pub bound: f64,
}

/// Report on `‖T(t) − T∞‖∞ <= ‖T0 − T∞‖∞ e^{−μ_T t}`.
///
/// The two-sided check is the stated bound. The one-sided check bounds only
/// `max(T − T∞)`, the part that the comparison argument controls when the
/// infection term `−kTV` pushes `T` below `T∞`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TConvergenceReport {
    pub initial_gap: f64,
    pub band: f64,
    pub violations: Vec<TBoundViolation>,
    pub upper_violations: Vec<TBoundViolation>,
    /// Largest `(value − bound) / initial_gap`, or absolute excess when the
    /// initial gap is zero.
    pub max_relative_excess: f64,
    pub snapshots_checked: usize,
}

impl TConvergenceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn upper_passed(&self) -> bool {
        self.upper_violations.is_empty()
    }
}

pub fn verify_t_convergence(
    traj: &timestep::Trajectory,
    t_inf: &Field,
    mu_t: f64,
) -> TConvergenceReport {
    let gap = |s: &State| -> (f64, f64) {
        s.target
            .values()
            .iter()
            .zip(t_inf.values())
            .fold((0.0f64, f64::NEG_INFINITY), |(abs, up), (t, ti)| {
                (abs.max((t - ti).abs()), up.max(t - ti))
            })
    };
    let s0 = traj.initial();
    let initial_gap = gap(s0).0;
    let band = (1e-6 * initial_gap).max(10.0 * traj.dt * initial_gap * mu_t);
    let mut violations = Vec::new();
    let mut upper_violations = Vec::new();
    let mut max_relative_excess = f64::NEG_INFINITY;
    for (idx, snap) in traj.snapshots.iter().enumerate() {
        let t = snap.state.time - s0.time;
        let bound = initial_gap * (-mu_t * t).exp();
        let (abs_gap, upper_gap) = gap(&snap.state);
        let excess = abs_gap - bound;
        max_relative_excess = max_relative_excess.max(if initial_gap > 0.0 {
            excess / initial_gap
        } else {
            excess
        });
        if abs_gap > bound + band {
            violations.push(TBoundViolation {
                snapshot: idx,
                time: snap.state.time,
                value: abs_gap,
                bound,
            });
        }
        if upper_gap > bound + band {
            upper_violations.push(TBoundViolation {
                snapshot: idx,
                time: snap.state.time,
                value: upper_gap,
                bound,
            });
        }
    }
    TConvergenceReport {
        initial_gap,
        band,
        violations,
        upper_violations,
        max_relative_excess,
        snapshots_checked: traj.snapshots.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IvDecay {
    pub rate: f64,
    pub r_squared: f64,
    pub decayed: bool,
    /// `(‖I‖∞ + ‖V‖∞)(t_end) / (‖I‖∞ + ‖V‖∞)(0)`.
    pub final_ratio: f64,
}

/// Fits the decay of `‖I(t)‖∞ + ‖V(t)‖∞` over every logged step.
pub fn verify_iv_decay(traj: &timestep::Trajectory) -> Result<IvDecay, AnalysisError> {
    let series = traj.iv_series();
    iv_decay_from_series(&series)
}

pub fn iv_decay_from_series(series: &[(f64, f64)]) -> Result<IvDecay, AnalysisError> {
    let fit = fit_decay_rate(series, DEFAULT_TRANSIENT)?;
    let first = series.first().map_or(0.0, |s| s.1);
    let last = series.last().map_or(0.0, |s| s.1);
    let final_ratio = last / first;
    let decayed = final_ratio <= 1e-8 || (fit.rate < 0.0 && fit.r_squared > 0.99);
    Ok(IvDecay {
        rate: fit.rate,
        r_squared: fit.r_squared,
        decayed,
        final_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Seeding {
    /// Start from the computed principal eigenvector.
    Eigenvector,
    /// Start from nodewise uniform noise in `(0, 1)`.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthOptions {
    /// Perturbation size; defaults to `1e-6 ‖T∞‖∞`.
    pub epsilon: Option<f64>,
    pub t_window: f64,
    /// Defaults to the model's default step.
    pub dt: Option<f64>,
    pub seeding: Seeding,
    pub transient_fraction: f64,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            t_window: 5.0,
            dt: None,
            seeding: Seeding::Eigenvector,
            transient_fraction: DEFAULT_TRANSIENT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthMeasurement {
    pub rate: f64,
    pub r_squared: f64,
    pub eta0: f64,
    pub epsilon: f64,
    pub samples: usize,
}

/// Linear-regime ceiling on `‖I‖∞`, relative to `‖T∞‖∞`.
pub const LINEAR_REGIME: f64 = 1e-3;

/// Seeds `(T∞, ε φ_I, ε φ_V)`, simulates over `t_window` and fits the
/// exponential rate of `‖I‖∞ + ‖V‖∞`.
pub fn measure_growth_rate(
    params: &Parameters,
    grid: &Grid,
    opts: GrowthOptions,
) -> Result<GrowthMeasurement, AnalysisError> {
    let t_inf = steady::solve_t_infinity(params, grid)?;
    let op = spectral::assemble_linearized(params, &t_inf, grid)?;
    let spec = spectral::principal_eigenvalue(&op, PowerOptions::default())?;
    let t_sup = t_inf.sup_norm();
    let epsilon = opts.epsilon.unwrap_or(1e-6 * t_sup);
    let (phi_i, phi_v) = match opts.seeding {
        Seeding::Eigenvector => (spec.infected_part().to_vec(), spec.virion_part().to_vec()),
        Seeding::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = grid.len();
            let a = (0..n).map(|_| rng.gen::<f64>()).collect();
            let b = (0..n).map(|_| rng.gen::<f64>()).collect();
            (a, b)
        }
    };
    let g = t_inf.grid().clone();
    let field = |v: Vec<f64>| Field::new(g.clone(), v.into_iter().map(|x| epsilon * x).collect());
    let init = State {
        time: 0.0,
        target: t_inf.clone(),
        infected: field(phi_i).map_err(|e| SteadyError::Model(e.into()))?,
        virions: field(phi_v).map_err(|e| SteadyError::Model(e.into()))?,
    };
    let dt = opts.dt.unwrap_or_else(|| params.default_dt());
    let ceiling = LINEAR_REGIME * t_sup;
    let config = StepperConfig::imex(dt, opts.t_window, 1);
    let traj =
        timestep::simulate_until(&init, params, &config, |s| s.infected.sup_norm() >= ceiling)?;
    let series = traj.iv_series();
    let exit = traj.monitor_log.iter().position(|r| r.sup_i >= ceiling);
    if let Some(i) = exit {
        let samples = i + 1;
        let min_samples = (MIN_FIT_POINTS as f64 / (1.0 - opts.transient_fraction)).ceil() as usize;
        if samples < min_samples || traj.monitor_log[i].time < 0.5 * opts.t_window {
            return Err(AnalysisError::RegimeExit {
                time: traj.monitor_log[i].time,
                samples,
            });
        }
    }
    // series[0] is the initial state, exit index is into the step log
    let used = exit.map_or(series.len(), |i| i + 1);
    let fit = fit_decay_rate(&series[..used], opts.transient_fraction)?;
    Ok(GrowthMeasurement {
        rate: fit.rate,
        r_squared: fit.r_squared,
        eta0: spec.eta0,
        epsilon,
        samples: fit.points,
    })
}

#[derive(Debug, Clone)]
pub enum Experiment {
    Classify,
    /// Simulate from `initial` and fit the I+V decay rate.
    Decay {
        initial: State,
        stepper: StepperConfig,
    },
    Growth(GrowthOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Outcome {
    Classify(StabilityReport),
    Decay(IvDecay),
    Growth(GrowthMeasurement),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: Scalar,
    pub value: f64,
    pub outcome: Result<Outcome, String>,
}

/// Runs `experiment` once per value of `axis`, rows in input order. Rows
/// are independent and run concurrently; a failing row records its error.
pub fn sweep(
    template: &Parameters,
    axis: Scalar,
    values: &[f64],
    experiment: &Experiment,
) -> Vec<SweepRow> {
    values
        .par_iter()
        .map(|&value| {
            let params = template.clone().with(axis, value);
            SweepRow {
                axis,
                value,
                outcome: run_experiment(&params, experiment).map_err(|e| e.to_string()),
            }
        })
        .collect()
}

pub fn run_experiment(
    params: &Parameters,
    experiment: &Experiment,
) -> Result<Outcome, AnalysisError> {
    let grid = params.grid().clone();
    match experiment {
        Experiment::Classify => Ok(Outcome::Classify(spectral::classify_stability(
            params, &grid,
        )?)),
        Experiment::Decay { initial, stepper } => {
            let traj = timestep::simulate(initial, params, stepper)?;
            Ok(Outcome::Decay(verify_iv_decay(&traj)?))
        }
        Experiment::Growth(opts) => Ok(Outcome::Growth(measure_growth_rate(params, &grid, *opts)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Boundary;
    use crate::timestep::{Snapshot, Trajectory};
    use std::sync::Arc;

    #[test]
    fn exact_exponential() {
        let s: Vec<_> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, 5.0 * (-2.0 * t).exp())
            })
            .collect();
        let fit = fit_decay_rate(&s, 0.2).unwrap();
        assert!((fit.rate + 2.0).abs() < 1e-6);
        assert!(fit.r_squared > 0.999999);
        assert_eq!(fit.points, 40);
    }

    #[test]
    fn constant_series() {
        let s: Vec<_> = (0..20).map(|i| (i as f64, 3.0)).collect();
        let fit = fit_decay_rate(&s, 0.2).unwrap();
        assert!(fit.rate.abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        let s: Vec<_> = (0..5).map(|i| (i as f64, 1.0)).collect();
        assert!(matches!(
            fit_decay_rate(&s, 0.0),
            Err(AnalysisError::TooFewPoints { .. })
        ));
        let s: Vec<_> = (0..20)
            .map(|i| (i as f64, if i == 15 { 0.0 } else { 1.0 }))
            .collect();
        assert!(matches!(
            fit_decay_rate(&s, 0.2),
            Err(AnalysisError::NonPositive { .. })
        ));
    }

    fn grid() -> Arc<Grid> {
        Arc::new(Grid::line(1.0, 6, Boundary::Neumann).unwrap())
    }

    fn traj_with_targets(targets: &[f64], dt: f64) -> Trajectory {
        let g = grid();
        let snapshots = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut s = State::uniform(g.clone(), t, 0.0, 0.0);
                s.time = i as f64;
                Snapshot { step: i, state: s }
            })
            .collect();
        Trajectory {
            dt,
            snapshots,
            monitor_log: vec![],
        }
    }

    #[test]
    fn t_bound_detector() {
        let t_inf = Field::constant(grid(), 100.0);
        let mu = 0.5;
        let ok: Vec<f64> = (0..5)
            .map(|i| 100.0 + 10.0 * (-mu * i as f64).exp())
            .collect();
        let rep = verify_t_convergence(&traj_with_targets(&ok, 1e-3), &t_inf, mu);
        assert!(rep.passed() && rep.upper_passed());

        let mut bad = ok.clone();
        bad[3] = 109.0;
        let rep = verify_t_convergence(&traj_with_targets(&bad, 1e-3), &t_inf, mu);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].snapshot, 3);

        // dipping below T∞ breaks only the two-sided form
        let mut dip = ok;
        dip[2] = 95.0;
        let rep = verify_t_convergence(&traj_with_targets(&dip, 1e-3), &t_inf, mu);
        assert!(!rep.passed() && rep.upper_passed());
    }

    #[test]
    fn t_bound_tight_at_start() {
        let t_inf = Field::constant(grid(), 100.0);
        let rep = verify_t_convergence(&traj_with_targets(&[130.0], 0.0), &t_inf, 0.1);
        assert!(rep.passed());
        assert_eq!(rep.max_relative_excess, 0.0);
    }

    #[test]
    fn iv_decay_rejects_clearance() {
        let g = grid();
        let p = Parameters {
            lambda: Field::constant(g.clone(), 10.0),
            k: 1e-5,
            burst_size: 100.0,
            mu_t: 0.1,
            mu_i: 0.5,
            mu_v: 5.0,
            d_t: 0.01,
            d_i: 0.01,
            d_v: 0.01,
        };
        let s = State::uniform(g, 100.0, 0.0, 0.0);
        let traj = timestep::simulate(&s, &p, &StepperConfig::imex(0.1, 3.0, 1)).unwrap();
        assert!(matches!(
            verify_iv_decay(&traj),
            Err(AnalysisError::NonPositive { .. })
        ));
    }

    #[test]
    fn empty_sweep() {
        let g = grid();
        let p = Parameters {
            lambda: Field::constant(g, 10.0),
            k: 1e-5,
            burst_size: 100.0,
            mu_t: 0.1,
            mu_i: 0.5,
            mu_v: 5.0,
            d_t: 0.01,
            d_i: 0.01,
            d_v: 0.01,
        };
        assert!(sweep(&p, Scalar::K, &[], &Experiment::Classify).is_empty());
        let rows = sweep(&p, Scalar::K, &[2e-5], &Experiment::Classify);
        let alone =
            run_experiment(&p.clone().with(Scalar::K, 2e-5), &Experiment::Classify).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].outcome.as_ref().unwrap(), &alone);
    }
}
