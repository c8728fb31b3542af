//! Clearance state for a patchy supply on a Dirichlet interval, and a
//! multi-start Newton search for other nonnegative equilibria.
//!
//! cargo run --release --example steady_state

use std::sync::Arc;

use viral_rd::mesh::{Boundary, Grid};
use viral_rd::model::{Bump, LambdaFamily, Parameters};
use viral_rd::spectral::compute_r0_field;
use viral_rd::steady::{clearance_state, multi_start, NewtonOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Arc::new(Grid::line(2.0, 80, Boundary::Dirichlet)?);
    let bumps = vec![
        Bump {
            center: vec![0.5],
            width: 0.1,
            amplitude: 8.0,
        },
        Bump {
            center: vec![1.4],
            width: 0.2,
            amplitude: 4.0,
        },
    ];
    let params = Parameters {
        lambda: LambdaFamily::Bumps {
            baseline: 0.5,
            bumps,
        }
        .build(grid.clone())?,
        k: 2e-4,
        burst_size: 20.0,
        mu_t: 0.1,
        mu_i: 0.5,
        mu_v: 2.0,
        d_t: 0.01,
        d_i: 0.01,
        d_v: 0.05,
    };
    let clear = clearance_state(&params)?;
    let t_inf = &clear.target;
    let r0 = compute_r0_field(t_inf, &params);
    println!(
        "T_inf in [{:.4}, {:.4}], cap {:.4}; sup R0 {:.4}",
        t_inf.min(),
        t_inf.max(),
        params.lambda.sup_norm() / params.mu_t,
        r0.sup_norm()
    );

    let report = multi_start(
        &params,
        [t_inf.max(), 10.0, 100.0],
        16,
        42,
        NewtonOptions::default(),
    );
    for (i, outcome) in report.outcomes.iter().enumerate() {
        match outcome {
            Ok(o) => println!(
                "start {i:>2}: {} iterations, residual {:.2e}, nonnegative {}, |u - clearance| {:.3e}",
                o.iterations,
                o.residual,
                o.nonnegative,
                o.state.sup_distance(&clear)
            ),
            Err(e) => println!("start {i:>2}: {e}"),
        }
    }
    println!(
        "{} nonnegative limits, farthest from clearance {:.3e}",
        report.nonnegative_limits().count(),
        report.max_distance_to(&clear)
    );
    Ok(())
}
