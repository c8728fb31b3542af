//! Runs a stable and an unstable scenario and checks the target-cell
//! convergence bound and the decay of infection in each.
//!
//! cargo run --release --example decay_verification

use std::sync::Arc;

use viral_rd::analysis::{verify_iv_decay, verify_t_convergence};
use viral_rd::mesh::{Boundary, Field, Grid};
use viral_rd::model::{Parameters, State};
use viral_rd::spectral::classify_stability;
use viral_rd::steady::solve_t_infinity;
use viral_rd::timestep::{simulate, StepperConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Arc::new(Grid::line(1.0, 64, Boundary::Dirichlet)?);
    for k in [2e-4, 2e-3] {
        let params = Parameters {
            lambda: Field::from_fn(grid.clone(), |x| 20.0 * (std::f64::consts::PI * x[0]).sin()),
            k,
            burst_size: 10.0,
            mu_t: 0.1,
            mu_i: 1.0,
            mu_v: 1.0,
            d_t: 0.01,
            d_i: 0.01,
            d_v: 0.01,
        };
        let report = classify_stability(&params, &grid)?;
        let init = State::new(
            0.0,
            Field::from_fn(grid.clone(), |x| {
                250.0 * (std::f64::consts::PI * x[0]).sin()
            }),
            Field::constant(grid.clone(), 1.0),
            Field::constant(grid.clone(), 1.0),
        )?;
        let traj = simulate(&init, &params, &StepperConfig::imex(0.01, 100.0, 100))?;
        let t_inf = solve_t_infinity(&params, &grid)?;
        let t_check = verify_t_convergence(&traj, &t_inf, params.mu_t);
        println!(
            "k = {k:e}: {} (eta0 {:+.4}); T bound: {} two-sided, {} upper violations of {}",
            report.classification.as_str(),
            report.eta0,
            t_check.violations.len(),
            t_check.upper_violations.len(),
            t_check.snapshots_checked
        );
        match verify_iv_decay(&traj) {
            Ok(d) => println!(
                "  I + V: rate {:+.4}, r2 {:.4}, final/initial {:.2e}, decayed {}",
                d.rate, d.r_squared, d.final_ratio, d.decayed
            ),
            Err(e) => println!("  I + V: {e}"),
        }
    }
    Ok(())
}
