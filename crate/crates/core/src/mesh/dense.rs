//! Small dense kernels used as fallbacks for tiny systems.

/// Gaussian elimination with partial pivoting. Returns `None` if a pivot
/// vanishes relative to the matrix scale.
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() <= scale * 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        x.swap(col, pivot);
        let (upper, lower) = m.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (offset, r) in lower.iter_mut().enumerate() {
            let f = r[col] / pivot_row[col];
            if f == 0.0 {
                continue;
            }
            for (a, b) in r[col..].iter_mut().zip(&pivot_row[col..]) {
                *a -= f * b;
            }
            x[col + 1 + offset] -= f * x[col];
        }
    }
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (x[row] - s) / m[row][row];
    }
    Some(x)
}
