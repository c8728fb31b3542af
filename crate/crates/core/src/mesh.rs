//! Uniform Cartesian grids, nodal fields, sparse operators and linear solves.
//!
//! Two node layouts are used:
//!
//! - `Dirichlet`: only interior unknowns are stored, boundary values are
//!   identically zero. With `n` unknowns on an axis of length `L` the spacing
//!   is `L / (n + 1)` and node `i` sits at `(i + 1) h`.
//! - `Neumann`: cell-centered nodes, spacing `L / n`, node `i` at
//!   `(i + 1/2) h`. Mirror ghosts across the cell faces give a symmetric
//!   Laplacian with exact zero row sums.
//!
//! Nodes are ordered lexicographically with the first axis fastest.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod dense;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("expected {expected} entries for `{what}`, got {got}")]
    AxisCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("axis {axis}: at least 3 nodes required, got {nodes}")]
    TooFewNodes { axis: usize, nodes: usize },
    #[error("axis {axis}: length must be positive and finite, got {length}")]
    Length { axis: usize, length: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("operator is {rows}x{cols}, right-hand side has length {rhs}")]
    Shape {
        rows: usize,
        cols: usize,
        rhs: usize,
    },
    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular system")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Homogeneous Dirichlet, `w = 0` on the boundary.
    Dirichlet,
    /// Homogeneous Neumann, zero normal derivative.
    Neumann,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Dirichlet => f.write_str("dirichlet"),
            Boundary::Neumann => f.write_str("neumann"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    lengths: Vec<f64>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
    bc: Boundary,
}

impl Grid {
    pub fn new(
        dim: usize,
        lengths: &[f64],
        nodes_per_axis: &[usize],
        bc: Boundary,
    ) -> Result<Self, MeshError> {
        if !(1..=2).contains(&dim) {
            return Err(MeshError::Dimension(dim));
        }
        if lengths.len() != dim {
            return Err(MeshError::AxisCount {
                what: "lengths",
                expected: dim,
                got: lengths.len(),
            });
        }
        if nodes_per_axis.len() != dim {
            return Err(MeshError::AxisCount {
                what: "nodes",
                expected: dim,
                got: nodes_per_axis.len(),
            });
        }
        let mut spacing = Vec::with_capacity(dim);
        for axis in 0..dim {
            let (length, n) = (lengths[axis], nodes_per_axis[axis]);
            if !(length.is_finite() && length > 0.0) {
                return Err(MeshError::Length { axis, length });
            }
            if n < 3 {
                return Err(MeshError::TooFewNodes { axis, nodes: n });
            }
            spacing.push(length / Self::cells(bc, n));
        }
        Ok(Self {
            dim,
            lengths: lengths.to_vec(),
            nodes: nodes_per_axis.to_vec(),
            spacing,
            bc,
        })
    }

    /// Convenience constructor for a 1D grid on `[0, length]`.
    pub fn line(length: f64, nodes: usize, bc: Boundary) -> Result<Self, MeshError> {
        Self::new(1, &[length], &[nodes], bc)
    }

    /// Convenience constructor for a 2D grid on `[0, lx] x [0, ly]`.
    pub fn rect(lengths: [f64; 2], nodes: [usize; 2], bc: Boundary) -> Result<Self, MeshError> {
        Self::new(2, &lengths, &nodes, bc)
    }

    /// Number of spacings that tile one axis for a given layout.
    fn cells(bc: Boundary, n: usize) -> f64 {
        match bc {
            Boundary::Dirichlet => (n + 1) as f64,
            Boundary::Neumann => n as f64,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn bc(&self) -> Boundary {
        self.bc
    }

    /// Total number of stored nodes (unknowns).
    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Product of the spacings, the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Axis indices of a linear node index.
    pub fn unravel(&self, index: usize) -> [usize; 2] {
        let nx = self.nodes[0];
        [index % nx, index / nx]
    }

    pub fn ravel(&self, ix: usize, iy: usize) -> usize {
        ix + self.nodes[0] * iy
    }

    fn axis_coordinate(&self, axis: usize, i: usize) -> f64 {
        let h = self.spacing[axis];
        match self.bc {
            Boundary::Dirichlet => (i + 1) as f64 * h,
            Boundary::Neumann => (i as f64 + 0.5) * h,
        }
    }

    /// Physical coordinates of a node; the second entry is 0 in 1D.
    pub fn coordinates(&self, index: usize) -> [f64; 2] {
        let [ix, iy] = self.unravel(index);
        let x = self.axis_coordinate(0, ix);
        let y = if self.dim == 2 {
            self.axis_coordinate(1, iy)
        } else {
            0.0
        };
        [x, y]
    }

    /// Same node layout on a domain whose lengths are divided by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self, MeshError> {
        let lengths: Vec<f64> = self.lengths.iter().map(|l| l / factor).collect();
        Self::new(self.dim, &lengths, &self.nodes, self.bc)
    }
}

/// Nodal values over a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != grid.len() {
            return Err(MeshError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![value; n],
        }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every node's coordinates.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coordinates(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Replaces the values, keeping the grid.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, MeshError> {
        Self::new(self.grid.clone(), values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    /// Discrete L2 norm with quadrature weight equal to the cell volume.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * dot(&self.values, &self.values)).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index and value of the smallest entry.
    pub fn argmin(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
            )
    }
}

pub fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Square or rectangular sparse matrix in compressed-row form.
///
/// Built from coordinate triplets; duplicates are summed and exact zeros are
/// dropped, so each `(row, col)` appears at most once.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut entry_rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                entry_rows.push(r);
                last = Some((r, c));
            }
        }
        // drop cancelled entries and rebuild row pointers
        let mut keep_cols = Vec::with_capacity(vals.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in entry_rows.into_iter().zip(col_idx).zip(vals) {
            if v != 0.0 {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx: keep_cols,
            vals: keep_vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal_matrix(&vec![1.0; n])
    }

    pub fn diagonal_matrix(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_triplets(
            n,
            n,
            diag.iter().enumerate().map(|(i, &d)| (i, i, d)).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Coordinate-list view of the stored entries, row-major.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.col_idx[k], self.vals[k]));
            }
        }
        out
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.vals[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, MeshError> {
        let mut y = vec![0.0; self.rows];
        self.apply_into(x, &mut y)?;
        Ok(y)
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<(), MeshError> {
        if x.len() != self.cols {
            return Err(MeshError::LengthMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        if y.len() != self.rows {
            return Err(MeshError::LengthMismatch {
                expected: self.rows,
                got: y.len(),
            });
        }
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
        Ok(())
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &SparseOperator, b: f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut t: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (r, c, a * v))
            .collect();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, b * v)));
        Self::from_triplets(self.rows, self.cols, t)
    }

    pub fn scaled(&self, a: f64) -> Self {
        if a == 0.0 {
            return Self::from_triplets(self.rows, self.cols, Vec::new());
        }
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        self.linear_combination(1.0, &Self::identity(self.rows), shift)
    }

    /// Places `blocks[i][j]` (each `n x n`, or `None` for zero) into a
    /// `(m n) x (m n)` operator.
    pub fn block(blocks: &[Vec<Option<&SparseOperator>>]) -> Self {
        let m = blocks.len();
        let n = blocks
            .iter()
            .flatten()
            .flatten()
            .map(|b| b.rows)
            .next()
            .expect("at least one non-empty block");
        let mut t = Vec::new();
        for (bi, row) in blocks.iter().enumerate() {
            assert_eq!(row.len(), m);
            for (bj, blk) in row.iter().enumerate() {
                if let Some(b) = blk {
                    assert_eq!((b.rows, b.cols), (n, n));
                    t.extend(
                        b.triplets()
                            .into_iter()
                            .map(|(r, c, v)| (bi * n + r, bj * n + c, v)),
                    );
                }
            }
        }
        Self::from_triplets(m * n, m * n, t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// Largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Second-order central-difference Laplacian scaled by `diffusion`.
///
/// Dirichlet grids eliminate the zero boundary values; Neumann grids use
/// mirror ghosts across the cell faces, so constants lie in the kernel.
pub fn assemble_laplacian(grid: &Grid, diffusion: f64) -> SparseOperator {
    let n = grid.len();
    let nx = grid.nodes_per_axis()[0];
    let ny = if grid.dim() == 2 {
        grid.nodes_per_axis()[1]
    } else {
        1
    };
    let mut t = Vec::with_capacity(n * (1 + 2 * grid.dim()));
    for idx in 0..n {
        let [ix, iy] = grid.unravel(idx);
        let mut diag = 0.0;
        for axis in 0..grid.dim() {
            let w = diffusion / grid.spacing()[axis].powi(2);
            let (i, len) = if axis == 0 { (ix, nx) } else { (iy, ny) };
            for neighbor in [i.checked_sub(1), Some(i + 1).filter(|&j| j < len)] {
                match neighbor {
                    Some(j) => {
                        let col = if axis == 0 {
                            grid.ravel(j, iy)
                        } else {
                            grid.ravel(ix, j)
                        };
                        t.push((idx, col, w));
                        diag -= w;
                    }
                    None => {
                        if grid.bc() == Boundary::Dirichlet {
                            diag -= w;
                        }
                    }
                }
            }
        }
        t.push((idx, idx, diag));
    }
    SparseOperator::from_triplets(n, n, t)
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    /// Defaults to `10 * unknowns` when `None`.
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

/// Largest system handed to the dense fallback.
pub const DENSE_FALLBACK_LIMIT: usize = 400;

/// Solves `op x = rhs` for an SPD operator to relative residual `tol`.
pub fn solve_linear(op: &SparseOperator, rhs: &[f64], tol: f64) -> Result<Vec<f64>, SolveError> {
    solve_linear_with_guess(
        op,
        rhs,
        None,
        SolveOptions {
            tol,
            max_iter: None,
        },
    )
}

/// Jacobi-preconditioned conjugate gradients from an optional initial
/// guess, with a dense LU fallback for small systems.
pub fn solve_linear_with_guess(
    op: &SparseOperator,
    rhs: &[f64],
    guess: Option<&[f64]>,
    opts: SolveOptions,
) -> Result<Vec<f64>, SolveError> {
    check_shape(op, rhs)?;
    let n = rhs.len();
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    match pcg(op, rhs, guess, opts.tol, max_iter) {
        Ok(x) => Ok(x),
        Err(err) if n <= DENSE_FALLBACK_LIMIT => {
            let x = dense::lu_solve(&op.to_dense(), rhs).ok_or(SolveError::Singular)?;
            let res = relative_residual(op, &x, rhs);
            if res <= opts.tol {
                Ok(x)
            } else {
                Err(match err {
                    SolveError::NotConverged { iterations, .. } => SolveError::NotConverged {
                        iterations,
                        residual: res,
                    },
                    e => e,
                })
            }
        }
        Err(err) => Err(err),
    }
}

fn check_shape(op: &SparseOperator, rhs: &[f64]) -> Result<(), SolveError> {
    if op.rows() != op.cols() || rhs.len() != op.rows() {
        return Err(SolveError::Shape {
            rows: op.rows(),
            cols: op.cols(),
            rhs: rhs.len(),
        });
    }
    Ok(())
}

pub fn relative_residual(op: &SparseOperator, x: &[f64], rhs: &[f64]) -> f64 {
    let ax = op.apply(x).expect("shape checked");
    let r: Vec<f64> = ax.iter().zip(rhs).map(|(a, b)| a - b).collect();
    let bn = norm2(rhs);
    if bn == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / bn
    }
}

/// Residual replacements tolerated before CG reports stagnation.
const MAX_RESTARTS: usize = 3;

fn pcg(
    op: &SparseOperator,
    b: &[f64],
    guess: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, SolveError> {
    let n = b.len();
    let diag = op.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(SolveError::NotConverged {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let b_norm = norm2(b);
    let mut x = match guess {
        Some(g) if g.len() == n => g.to_vec(),
        _ => vec![0.0; n],
    };
    let mut ap = vec![0.0; n];
    op.apply_into(&x, &mut ap).expect("shape checked");
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut res = norm2(&r) / b_norm;
    if res <= tol {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut restarts = 0;
    let mut iterations = 0;
    for it in 0..max_iter {
        op.apply_into(&p, &mut ap).expect("shape checked");
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolveError::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm2(&r) / b_norm;
        let mut restart = false;
        if res <= tol {
            // the recursive residual drifts from the true one near round-off
            op.apply_into(&x, &mut ap).expect("shape checked");
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            res = norm2(&r) / b_norm;
            if res <= tol {
                return Ok(x);
            }
            restarts += 1;
            if restarts > MAX_RESTARTS {
                break;
            }
            restart = true;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = if restart { 0.0 } else { rz_new / rz };
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations = it + 1;
    }
    Err(SolveError::NotConverged {
        iterations,
        residual: res,
    })
}

/// General (non-symmetric) solve: dense LU up to `dense_limit` unknowns,
/// Jacobi-preconditioned BiCGSTAB above.
pub fn solve_general(
    op: &SparseOperator,
    rhs: &[f64],
    tol: f64,
    dense_limit: usize,
) -> Result<Vec<f64>, SolveError> {
    check_shape(op, rhs)?;
    let n = rhs.len();
    if norm2(rhs) == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if n <= dense_limit {
        return dense::lu_solve(&op.to_dense(), rhs).ok_or(SolveError::Singular);
    }
    bicgstab(op, rhs, tol, 20 * n)
}

fn bicgstab(
    op: &SparseOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, SolveError> {
    let n = b.len();
    let diag = op.diagonal();
    if diag.contains(&0.0) {
        return Err(SolveError::Singular);
    }
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&diag).map(|(a, d)| a / d).collect() };
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut res = 1.0;
    for it in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(SolveError::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let y = precond(&p);
        v = op.apply(&y).expect("shape checked");
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) / b_norm <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(x);
        }
        let z = precond(&s);
        let t = op.apply(&z).expect("shape checked");
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm2(&r) / b_norm;
        if res <= tol {
            return Ok(x);
        }
    }
    Err(SolveError::NotConverged {
        iterations: max_iter,
        residual: res,
    })
}
