//! Integrates a localized infection on a 2D Neumann box and prints the
//! evolution of the infected and virion peaks.
//!
//! cargo run --release --example simulate

use std::sync::Arc;

use viral_rd::mesh::{Boundary, Field, Grid};
use viral_rd::model::{LambdaFamily, Parameters, State};
use viral_rd::timestep::{monitor_bounds, simulate, MonitorFlags, StepperConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Arc::new(Grid::rect([1.0, 1.0], [32, 32], Boundary::Neumann)?);
    let lambda = LambdaFamily::Gaussian {
        center: vec![0.3, 0.6],
        width: 0.15,
        amplitude: 20.0,
    }
    .build(grid.clone())?;
    let params = Parameters {
        lambda: lambda.map(|v| v + 2.0),
        k: 0.01,
        burst_size: 5.0,
        mu_t: 0.1,
        mu_i: 0.5,
        mu_v: 1.0,
        d_t: 0.005,
        d_i: 0.001,
        d_v: 0.02,
    };
    let init = State::new(
        0.0,
        Field::constant(grid.clone(), 50.0),
        Field::from_fn(grid.clone(), |x| {
            0.1 * (-((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)) / 0.01).exp()
        }),
        Field::zeros(grid),
    )?;
    let config = StepperConfig::imex(params.default_dt(), 60.0, 1000);
    let traj = simulate(&init, &params, &config)?;

    println!("{:>8} {:>12} {:>12} {:>12}", "t", "max T", "max I", "max V");
    for snap in &traj.snapshots {
        let s = &snap.state;
        println!(
            "{:>8.2} {:>12.4} {:>12.4e} {:>12.4e}",
            s.time,
            s.target.max(),
            s.infected.max(),
            s.virions.max()
        );
    }
    let report = monitor_bounds(&traj, &params, MonitorFlags::default(), 1e-6);
    println!(
        "min value {:.3e}, bound violations {}",
        traj.min_value(),
        report.violations.len()
    );
    Ok(())
}
