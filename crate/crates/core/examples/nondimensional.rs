//! Solves the same problem in physical and in dimensionless variables and
//! compares the end states.
//!
//! cargo run --release --example nondimensional

use std::sync::Arc;

use viral_rd::mesh::{Boundary, Field, Grid};
use viral_rd::model::{Parameters, State};
use viral_rd::nondim::{nondimensionalize, rescale_state, Direction};
use viral_rd::timestep::{simulate, StepperConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Arc::new(Grid::line(5.0, 64, Boundary::Neumann)?);
    let params = Parameters {
        lambda: Field::from_fn(grid.clone(), |x| 10.0 + 5.0 * (x[0]).sin().powi(2)),
        k: 2e-5,
        burst_size: 100.0,
        mu_t: 0.1,
        mu_i: 0.5,
        mu_v: 5.0,
        d_t: 0.02,
        d_i: 0.01,
        d_v: 0.05,
    };
    let (sc, d) = nondimensionalize(&params)?;
    println!(
        "t_c {} x_c {:.4} T_c {} I_c {} V_c {}",
        sc.t_c, sc.x_c, sc.t_cells, sc.i_cells, sc.v_cells
    );
    println!(
        "alpha1 {} alpha2 {} beta1 {} beta2 {} sup q {:.4}",
        d.alpha1,
        d.alpha2,
        d.beta1,
        d.beta2,
        d.q_sup()
    );

    let init = State::new(
        0.0,
        Field::constant(grid.clone(), 500.0),
        Field::from_fn(grid.clone(), |x| 5.0 * (-(x[0] - 2.5).powi(2)).exp()),
        Field::constant(grid, 10.0),
    )?;
    let stepper = StepperConfig::imex(0.002, 20.0, usize::MAX);
    let physical = simulate(&init, &params, &stepper)?;

    let star_init = d.to_solver(&rescale_state(&init, &sc, Direction::ToDimensionless)?);
    let star_stepper = StepperConfig {
        dt: stepper.dt / sc.t_c,
        t_end: stepper.t_end / sc.t_c,
        ..stepper
    };
    let star = simulate(&star_init, &d.synthetic_parameters(), &star_stepper)?;
    let back = rescale_state(&d.from_solver(star.last()), &sc, Direction::ToDimensional)?;
    println!(
        "t = {}: max T {:.6}, max I {:.6e}; physical vs rescaled dimensionless run differ by {:.3e}",
        physical.last().time,
        physical.last().target.max(),
        physical.last().infected.max(),
        back.sup_distance(physical.last())
    );
    Ok(())
}
