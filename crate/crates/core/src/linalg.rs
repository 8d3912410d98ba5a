//! Small dense linear algebra: Gaussian elimination with partial pivoting.
//!
//! Networks here have at most a few dozen servers, so an O(n^3) dense solve is
//! all that is needed.

use crate::error::{Error, Result};

/// Pivots smaller than this in absolute value are treated as singular.
pub const PIVOT_TOL: f64 = 1e-14;

/// Row-major square or rectangular matrix of `f64`.
pub type Matrix = Vec<Vec<f64>>;

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn transpose(a: &[Vec<f64>]) -> Matrix {
    if a.is_empty() {
        return Vec::new();
    }
    let (rows, cols) = (a.len(), a[0].len());
    (0..cols).map(|j| (0..rows).map(|i| a[i][j]).collect()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Matrix {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

/// Solves `a * X = B` for several right-hand sides at once.
///
/// `rhs` holds one right-hand-side vector per entry; the result has the same
/// layout. Fails with [`Error::SingularSystem`] as soon as the best available
/// pivot falls below [`PIVOT_TOL`].
pub fn solve_many(a: &[Vec<f64>], rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    if a.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: format!("{n}x{n} matrix"),
            got: "ragged or non-square matrix".into(),
        });
    }
    if let Some(bad) = rhs.iter().find(|b| b.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: format!("rhs of length {n}"),
            got: format!("length {}", bad.len()),
        });
    }
    let m = rhs.len();
    // Augmented system [A | B] with B stored column-per-rhs.
    let mut lu: Matrix = a.to_vec();
    let mut b: Matrix = (0..n).map(|i| rhs.iter().map(|r| r[i]).collect()).collect();

    for col in 0..n {
        let (piv_row, piv_abs) = (col..n)
            .map(|r| (r, lu[r][col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs < PIVOT_TOL {
            return Err(Error::SingularSystem { pivot: piv_abs });
        }
        lu.swap(col, piv_row);
        b.swap(col, piv_row);
        let pivot = lu[col][col];
        for r in col + 1..n {
            let factor = lu[r][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                lu[r][c] -= factor * lu[col][c];
            }
            for k in 0..m {
                b[r][k] -= factor * b[col][k];
            }
        }
    }

    let mut x = vec![vec![0.0; n]; m];
    for k in 0..m {
        for i in (0..n).rev() {
            let tail: f64 = (i + 1..n).map(|c| lu[i][c] * x[k][c]).sum();
            x[k][i] = (b[i][k] - tail) / lu[i][i];
        }
    }
    Ok(x)
}

pub fn solve(a: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    Ok(solve_many(a, &[rhs.to_vec()])?.remove(0))
}

/// Inverse via `n` simultaneous solves against the identity columns.
pub fn inverse(a: &[Vec<f64>]) -> Result<Matrix> {
    let n = a.len();
    let cols = solve_many(a, &identity(n))?;
    Ok(transpose(&cols))
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_requires_pivoting() {
        // Zero in the leading position forces a row swap.
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let x = solve(&a, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15);
        assert!((x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_round_trips() {
        let a = vec![
            vec![4.0, -2.0, 1.0],
            vec![-2.0, 4.0, -2.0],
            vec![1.0, -2.0, 4.0],
        ];
        let inv = inverse(&a).unwrap();
        assert!(max_abs_diff(&matmul(&a, &inv), &identity(3)) < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(matches!(solve(&a, &[1.0, 1.0]), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn ragged_input_rejected() {
        let a = vec![vec![1.0, 2.0], vec![2.0]];
        assert!(matches!(solve(&a, &[1.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }
}
