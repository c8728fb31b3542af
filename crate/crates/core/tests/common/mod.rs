//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use viral_rd::mesh::{Boundary, Field, Grid, SparseOperator};
use viral_rd::model::{LambdaFamily, Parameters, State};

pub fn dense(op: &SparseOperator) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(op.rows(), op.cols());
    for (i, j, v) in op.triplets() {
        m[(i, j)] += v;
    }
    m
}

pub fn dense_solve(op: &SparseOperator, rhs: &[f64]) -> Vec<f64> {
    let x = dense(op)
        .lu()
        .solve(&DVector::from_column_slice(rhs))
        .expect("nonsingular");
    x.iter().copied().collect()
}

/// Largest real part over the full dense spectrum.
pub fn max_real_eigenvalue(op: &SparseOperator) -> f64 {
    dense(op)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Adaptive Dormand-Prince 5(4) integration of `y' = f(t, y)` to `t1`.
pub fn dopri5(
    f: impl Fn(f64, &[f64]) -> Vec<f64>,
    y0: &[f64],
    t0: f64,
    t1: f64,
    rtol: f64,
    atol: f64,
) -> Vec<f64> {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = (t1 - t0) * 1e-4;
    while t < t1 {
        h = h.min(t1 - t);
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let ys: Vec<f64> = (0..n)
                .map(|i| y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>())
                .collect();
            k.push(f(t + C[s] * h, &ys));
        }
        let y5: Vec<f64> = (0..n)
            .map(|i| y[i] + h * (0..7).map(|s| B5[s] * k[s][i]).sum::<f64>())
            .collect();
        let err = (0..n)
            .map(|i| {
                let e = h * (0..7).map(|s| (B5[s] - B4[s]) * k[s][i]).sum::<f64>();
                let sc = atol + rtol * y[i].abs().max(y5[i].abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        let err = err.sqrt();
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    y
}

/// Spatially uniform kinetics as an ODE in `(T, I, V)`.
pub fn kinetics(p: &Parameters, lambda: f64) -> impl Fn(f64, &[f64]) -> Vec<f64> + '_ {
    move |_, y| {
        let (t, i, v) = (y[0], y[1], y[2]);
        vec![
            lambda - p.mu_t * t - p.k * t * v,
            p.k * t * v - p.mu_i * i,
            p.burst_size * p.mu_i * i - p.mu_v * v,
        ]
    }
}

pub fn grid_1d(nodes: usize, bc: Boundary) -> Arc<Grid> {
    Arc::new(Grid::line(1.0, nodes, bc).unwrap())
}

/// Parameters shared by several scenarios; `λ` constant.
pub fn baseline(grid: Arc<Grid>, lambda: f64) -> Parameters {
    Parameters {
        lambda: Field::constant(grid, lambda),
        k: 1e-5,
        burst_size: 100.0,
        mu_t: 0.1,
        mu_i: 0.5,
        mu_v: 5.0,
        d_t: 0.01,
        d_i: 0.01,
        d_v: 0.01,
    }
}

/// Homogeneous kinetics with `μ_I = μ_V = N = 1` where `k T∞ = k_t_inf`;
/// the principal eigenvalue is `sqrt(k T∞) - 1`.
pub fn homogeneous(grid: Arc<Grid>, k_t_inf: f64) -> Parameters {
    let lambda = 40.0;
    let mu_t = 0.1;
    Parameters {
        lambda: Field::constant(grid, lambda),
        k: k_t_inf * mu_t / lambda,
        burst_size: 1.0,
        mu_t,
        mu_i: 1.0,
        mu_v: 1.0,
        d_t: 0.01,
        d_i: 0.01,
        d_v: 0.01,
    }
}

pub fn gaussian(grid: Arc<Grid>, center: Vec<f64>, width: f64, amplitude: f64) -> Field {
    LambdaFamily::Gaussian {
        center,
        width,
        amplitude,
    }
    .build(grid)
    .unwrap()
}

pub fn uniform(grid: Arc<Grid>, t: f64, i: f64, v: f64) -> State {
    State::uniform(grid, t, i, v)
}
