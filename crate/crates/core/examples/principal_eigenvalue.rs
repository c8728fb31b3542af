//! Principal eigenvalue of the linearization at the clearance state, and
//! its response to the diffusion rate of virions.
//!
//! cargo run --release --example principal_eigenvalue

use std::sync::Arc;

use viral_rd::mesh::{Boundary, Grid};
use viral_rd::model::{LambdaFamily, Parameters};
use viral_rd::spectral::{assemble_linearized, principal_eigenvalue, PowerOptions};
use viral_rd::steady::solve_t_infinity;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Arc::new(Grid::line(1.0, 100, Boundary::Neumann)?);
    let lambda = LambdaFamily::Step {
        axis: 0,
        position: 0.3,
        levels: [20.0, 1.0],
    }
    .build(grid.clone())?;
    let mut params = Parameters {
        lambda,
        k: 1e-3,
        burst_size: 10.0,
        mu_t: 0.1,
        mu_i: 1.0,
        mu_v: 1.0,
        d_t: 0.001,
        d_i: 0.001,
        d_v: 0.001,
    };
    let t_inf = solve_t_infinity(&params, &grid)?;
    println!(
        "{:>8} {:>12} {:>10} {:>10}",
        "D_V", "eta0", "iters", "residual"
    );
    for d_v in [1e-4, 1e-3, 1e-2, 1e-1] {
        params.d_v = d_v;
        let op = assemble_linearized(&params, &t_inf, &grid)?;
        let r = principal_eigenvalue(&op, PowerOptions::default())?;
        println!(
            "{d_v:>8.0e} {:>12.6} {:>10} {:>10.2e}",
            r.eta0, r.iterations, r.residual
        );
    }
    Ok(())
}
