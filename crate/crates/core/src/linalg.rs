//! Dense solves of the discounted systems `(I - βK) x = b` that show up in
//! every policy-evaluation style computation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `I - beta * kernel`.
pub fn discounted_system(kernel: &Matrix, beta: f64) -> Matrix {
    let n = kernel.nrows();
    Matrix::identity(n, n) - kernel * beta
}

/// Solves `(I - beta K) x = rhs`.
pub fn solve_discounted(kernel: &Matrix, beta: f64, rhs: &Vector) -> Result<Vector> {
    discounted_system(kernel, beta)
        .lu()
        .solve(rhs)
        .ok_or(Error::Singular("I - beta K"))
}

/// Solves the row-vector system `x (I - beta K) = row`.
pub fn solve_discounted_left(kernel: &Matrix, beta: f64, row: &Vector) -> Result<Vector> {
    discounted_system(kernel, beta)
        .transpose()
        .lu()
        .solve(row)
        .ok_or(Error::Singular("(I - beta K)^T"))
}

/// `(I - beta K)^{-1}`.
pub fn inverse_discounted(kernel: &Matrix, beta: f64) -> Result<Matrix> {
    discounted_system(kernel, beta)
        .try_inverse()
        .ok_or(Error::Singular("I - beta K"))
}

/// Induced max norm (maximum absolute row sum).
pub fn max_row_sum_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
