//! Identities of the cyclic-shift matrix that drives the synchronous
//! dynamics `x(k+1) = A x(k) + (I - A) beta(k)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row `r` of `A` holds a single 1 at column `(r + n - 1) % n`: node `r`
/// receives from its predecessor.
pub fn shift_matrix(n: usize) -> DMatrix<i64> {
    DMatrix::from_fn(n, n, |r, c| i64::from(c == (r + n - 1) % n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CirculantReport {
    pub n: usize,
    /// `sum_{r<n} A^r` is the all-ones matrix, in exact integer arithmetic.
    pub sum_is_all_ones: bool,
    /// `A^n = I`, exactly.
    pub power_is_identity: bool,
    /// Largest deviation of `A q_i` from `w_i^{n-1} q_i`.
    pub eigen_error: f64,
    /// Largest deviation of `sum_r w_i^{r(n-1)}` from `n [i = 1]`.
    pub eigen_sum_error: f64,
    /// Largest entrywise deviation of `Q diag(sum_r Lambda^r) Q^H` from all-ones.
    pub reconstruction_error: f64,
}

impl CirculantReport {
    /// Tolerance for the floating spectral checks.
    pub fn spectral_tolerance(&self) -> f64 {
        1e-12 * (self.n * self.n) as f64
    }

    pub fn passed(&self) -> bool {
        let tol = self.spectral_tolerance();
        self.sum_is_all_ones
            && self.power_is_identity
            && self.eigen_error <= tol
            && self.eigen_sum_error <= tol
            && self.reconstruction_error <= tol
    }
}

pub fn circulant_oracle(n: usize) -> Result<CirculantReport> {
    if !(3..=64).contains(&n) {
        return Err(Error::domain(format!("circulant oracle covers 3 <= n <= 64, got {n}")));
    }
    let a = shift_matrix(n);
    let mut power = DMatrix::<i64>::identity(n, n);
    let mut sum = DMatrix::<i64>::zeros(n, n);
    for _ in 0..n {
        sum += &power;
        power = &a * &power;
    }
    let sum_is_all_ones = sum.iter().all(|&v| v == 1);
    let power_is_identity = power == DMatrix::<i64>::identity(n, n);

    let nf = n as f64;
    let w: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / nf))
        .collect();
    let q = DMatrix::<Complex64>::from_fn(n, n, |row, col| w[col].powu(row as u32) / nf.sqrt());
    let ac = a.map(|v| Complex64::new(v as f64, 0.0));

    let mut eigen_error = 0.0f64;
    let mut eigen_sum_error = 0.0f64;
    let mut sums = Vec::with_capacity(n);
    for (i, wi) in w.iter().enumerate() {
        let lambda = wi.powu(n as u32 - 1);
        let qi: DVector<Complex64> = q.column(i).into_owned();
        let residual = &ac * &qi - qi.map(|z| z * lambda);
        eigen_error = eigen_error.max(residual.iter().map(|z| z.norm()).fold(0.0, f64::max));
        let s: Complex64 = (0..n as u32).map(|r| lambda.powu(r)).sum();
        let expect = if i == 0 { nf } else { 0.0 };
        eigen_sum_error = eigen_sum_error.max((s - expect).norm());
        sums.push(s);
    }
    let diag = DMatrix::<Complex64>::from_diagonal(&DVector::from_vec(sums));
    let rebuilt = &q * diag * q.adjoint();
    let reconstruction_error = rebuilt
        .iter()
        .map(|z| (z - Complex64::new(1.0, 0.0)).norm())
        .fold(0.0, f64::max);

    Ok(CirculantReport {
        n,
        sum_is_all_ones,
        power_is_identity,
        eigen_error,
        eigen_sum_error,
        reconstruction_error,
    })
}
