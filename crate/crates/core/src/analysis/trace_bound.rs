//! Monte Carlo check of `tr cov(sum_i C^i r^i) <= sum_i ||C^i||_F^2 max diag cov(r^i)`
//! for random vectors with independent components.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::metrics::CompensatedSum;
use crate::noise::{NoiseSource, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBoundReport {
    /// Sample mean of `||z||^2`; `z` has zero mean by construction.
    pub mc_trace: f64,
    pub stderr: f64,
    /// `sum_i sum_{jl} (C^i_jl)^2 var(r^i_l)`.
    pub exact_trace: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `matrices[i]` is `C^i` and `variances[i]` the diagonal of `cov(r^i)`.
/// Components of `r^i` are independent Gaussians drawn from the auxiliary
/// streams of `seed`, using ChaCha stream `instance`.
pub fn trace_bound_check(
    matrices: &[DMatrix<f64>],
    variances: &[DVector<f64>],
    samples: usize,
    seed: u64,
    instance: u32,
) -> Result<TraceBoundReport> {
    if matrices.is_empty() || matrices.len() != variances.len() {
        return Err(Error::Dimension(format!(
            "{} matrices against {} covariance diagonals",
            matrices.len(),
            variances.len()
        )));
    }
    let rows = matrices[0].nrows();
    for (i, (c, v)) in matrices.iter().zip(variances).enumerate() {
        if c.nrows() != rows || c.ncols() != v.len() {
            return Err(Error::Dimension(format!(
                "term {i}: C is {}x{}, r has {} components, expected {rows} rows",
                c.nrows(),
                c.ncols(),
                v.len()
            )));
        }
        if v.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::domain(format!("term {i}: variances must be finite and >= 0")));
        }
    }
    if samples < 2 {
        return Err(Error::InsufficientSamples(format!("need at least 2 samples, got {samples}")));
    }

    let mut bound = CompensatedSum::default();
    let mut exact = CompensatedSum::default();
    for (c, v) in matrices.iter().zip(variances) {
        let sigma_max = v.iter().copied().fold(0.0, f64::max);
        bound.add(c.norm_squared() * sigma_max);
        for l in 0..c.ncols() {
            exact.add(c.column(l).norm_squared() * v[l]);
        }
    }

    let src = NoiseSource::new(seed);
    let mut rngs: Vec<_> = (0..matrices.len() as u32)
        .map(|i| src.stream(Purpose::Aux, i, 0, instance))
        .collect();
    let stds: Vec<DVector<f64>> = variances.iter().map(|v| v.map(f64::sqrt)).collect();
    let mut sum = CompensatedSum::default();
    let mut sum_sq = CompensatedSum::default();
    let mut z = DVector::<f64>::zeros(rows);
    for _ in 0..samples {
        z.fill(0.0);
        for ((c, sd), rng) in matrices.iter().zip(&stds).zip(&mut rngs) {
            let r = sd.map(|s| s * rng.sample::<f64, _>(StandardNormal));
            z.gemv(1.0, c, &r, 1.0);
        }
        let q = z.norm_squared();
        sum.add(q);
        sum_sq.add(q * q);
    }
    let nf = samples as f64;
    let mc_trace = sum.value() / nf;
    let var = ((sum_sq.value() - nf * mc_trace * mc_trace) / (nf - 1.0)).max(0.0);
    let stderr = (var / nf).sqrt();
    let bound = bound.value();
    Ok(TraceBoundReport {
        mc_trace,
        stderr,
        exact_trace: exact.value(),
        bound,
        holds: mc_trace <= bound + 3.0 * stderr,
    })
}

/// Random instance with `m` terms of `n x n` matrices (entries in [-1, 1])
/// and diagonal variances in (0, 2), drawn from auxiliary stream `instance`.
pub fn random_instance(
    src: &NoiseSource,
    instance: u32,
    m: usize,
    n: usize,
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let mut rng = src.stream(Purpose::Aux, u32::MAX, 0, instance);
    let matrices = (0..m)
        .map(|_| DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0)))
        .collect();
    let variances = (0..m)
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0)))
        .collect();
    (matrices, variances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_is_the_equality_case() {
        let n = 4;
        let rep = trace_bound_check(
            &[DMatrix::identity(n, n)],
            &[DVector::from_element(n, 2.5)],
            200_000,
            1,
            0,
        )
        .unwrap();
        assert_relative_eq!(rep.exact_trace, 10.0, max_relative = 1e-15);
        assert_relative_eq!(rep.bound, 10.0, max_relative = 1e-15);
        assert!((rep.mc_trace - 10.0).abs() < 5.0 * rep.stderr);
        assert!(rep.holds);
    }

    #[test]
    fn zero_matrix_gives_zero_trace() {
        let rep = trace_bound_check(
            &[DMatrix::zeros(3, 3)],
            &[DVector::from_element(3, 1.0)],
            100,
            1,
            0,
        )
        .unwrap();
        assert_eq!((rep.mc_trace, rep.bound, rep.stderr), (0.0, 0.0, 0.0));
        assert!(rep.holds);
    }

    #[test]
    fn random_pairs_hold_and_match_exact_trace() {
        let src = NoiseSource::new(99);
        for inst in 0..5 {
            let (c, v) = random_instance(&src, inst, 2, 4);
            let rep = trace_bound_check(&c, &v, 100_000, 99, inst).unwrap();
            assert!(rep.holds, "{rep:?}");
            assert!(rep.exact_trace <= rep.bound);
            assert!((rep.mc_trace - rep.exact_trace).abs() < 5.0 * rep.stderr, "{rep:?}");
        }
    }

    #[test]
    fn shapes_are_checked() {
        let err = trace_bound_check(&[DMatrix::zeros(3, 2)], &[DVector::zeros(3)], 10, 0, 0);
        assert!(matches!(err, Err(Error::Dimension(_))));
        let err = trace_bound_check(&[DMatrix::zeros(3, 3)], &[], 10, 0, 0);
        assert!(matches!(err, Err(Error::Dimension(_))));
    }
}
