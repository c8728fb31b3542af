//! Sweeps the infection rate across the stability threshold and prints the
//! classification of the clearance state at each value.
//!
//! cargo run --release --example classify_sweep

use std::sync::Arc;

use viral_rd::analysis::{sweep, Experiment, Outcome};
use viral_rd::mesh::{Boundary, Grid};
use viral_rd::model::{LambdaFamily, Parameters, Scalar};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Arc::new(Grid::rect([1.0, 1.0], [16, 16], Boundary::Dirichlet)?);
    let params = Parameters {
        lambda: LambdaFamily::Gaussian {
            center: vec![0.5, 0.5],
            width: 0.2,
            amplitude: 10.0,
        }
        .build(grid.clone())?,
        k: 1e-4,
        burst_size: 50.0,
        mu_t: 0.1,
        mu_i: 0.5,
        mu_v: 3.0,
        d_t: 0.01,
        d_i: 0.01,
        d_v: 0.01,
    };
    let ks: Vec<f64> = (0..12).map(|i| 1e-4 * 1.5f64.powi(i)).collect();
    println!(
        "{:>10} {:>10} {:>10} {:>10}  class",
        "k", "bound", "R0_sup", "eta0"
    );
    for row in sweep(&params, Scalar::K, &ks, &Experiment::Classify) {
        match row.outcome {
            Ok(Outcome::Classify(r)) => println!(
                "{:>10.3e} {:>10.4} {:>10.4} {:>+10.4}  {}",
                row.value,
                r.corollary_bound,
                r.r0_sup,
                r.eta0,
                r.classification.as_str()
            ),
            Ok(other) => println!("{:>10.3e} unexpected {other:?}", row.value),
            Err(e) => println!("{:>10.3e} failed: {e}", row.value),
        }
    }
    Ok(())
}
