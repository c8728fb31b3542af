//! Seeds the clearance state with a small multiple of the principal
//! eigenvector and compares the measured growth rate with the eigenvalue.
//!
//! cargo run --release --example growth_rate

use std::sync::Arc;

use viral_rd::analysis::{measure_growth_rate, GrowthOptions};
use viral_rd::mesh::{Boundary, Field, Grid};
use viral_rd::model::Parameters;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Arc::new(Grid::line(1.0, 48, Boundary::Neumann)?);
    for k_t_inf in [0.25, 0.81, 1.21, 2.25, 4.0] {
        // μ_I = μ_V = N = 1 and T∞ = 400, so η0 = sqrt(k T∞) - 1
        let params = Parameters {
            lambda: Field::constant(grid.clone(), 40.0),
            k: k_t_inf / 400.0,
            burst_size: 1.0,
            mu_t: 0.1,
            mu_i: 1.0,
            mu_v: 1.0,
            d_t: 0.01,
            d_i: 0.01,
            d_v: 0.01,
        };
        match measure_growth_rate(&params, &grid, GrowthOptions::default()) {
            Ok(m) => println!(
                "k T_inf {k_t_inf:>5}: eta0 {:+.4}, measured {:+.4}, r2 {:.6}",
                m.eta0, m.rate, m.r_squared
            ),
            Err(e) => println!("k T_inf {k_t_inf:>5}: {e}"),
        }
    }
    Ok(())
}
