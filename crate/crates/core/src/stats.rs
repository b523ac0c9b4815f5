//! Counting estimators and small fits used by the verification runs.

use alloc::vec::Vec;

use crate::extremes::MaxSample;
use crate::math::sqrt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("no samples")]
    EmptySamples,
    #[error("lattice point has {found} coordinates, samples have {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("fit needs at least {0} points with positive standard errors")]
    TooFewPoints(usize),
}

/// Joint evaluation point: `x_k` bounds the normalised continuous maximum
/// and `y_k` the normalised grid maximum of component `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcdfValue {
    pub value: f64,
    /// Binomial standard error `sqrt(p (1 - p) / n)` at the estimate.
    pub stderr: f64,
    pub count: usize,
}

pub fn binomial_stderr(p: f64, n: usize) -> f64 {
    sqrt((p * (1.0 - p)).max(0.0) / n as f64)
}

/// Fraction of replications with every `x_hat_k <= x_k` and `y_hat_k <= y_k`.
pub fn empirical_cdf<R: AsRef<[MaxSample]>>(
    samples: &[R],
    lattice: &[LatticePoint],
) -> Result<Vec<EcdfValue>, StatsError> {
    let n = samples.len();
    if n == 0 {
        return Err(StatsError::EmptySamples);
    }
    let p = samples[0].as_ref().len();
    lattice
        .iter()
        .map(|pt| {
            for v in [&pt.x, &pt.y] {
                if v.len() != p {
                    return Err(StatsError::DimensionMismatch { expected: p, found: v.len() });
                }
            }
            let count = samples
                .iter()
                .filter(|rep| {
                    rep.as_ref()
                        .iter()
                        .zip(pt.x.iter().zip(&pt.y))
                        .all(|(s, (x, y))| s.x_hat <= *x && s.y_hat <= *y)
                })
                .count();
            let value = count as f64 / n as f64;
            Ok(EcdfValue { value, stderr: binomial_stderr(value, n), count })
        })
        .collect()
}

/// Sample mean and unbiased variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var)
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, _) = mean_var(a);
    let (mb, _) = mean_var(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / sqrt(saa * sbb)
}

/// Weighted least-squares fit of `value = intercept - slope / lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_stderr: f64,
    /// Largest `|residual| / stderr` over the fitted points.
    pub max_residual_ratio: f64,
}

pub fn fit_inverse_window(lambdas: &[f64], values: &[f64], stderrs: &[f64]) -> Result<WindowFit, StatsError> {
    let n = lambdas.len();
    if n < 2 || values.len() != n || stderrs.len() != n || stderrs.iter().any(|s| !(*s > 0.0)) {
        return Err(StatsError::TooFewPoints(2));
    }
    // regress on u = 1 / lambda: value = a + b u with b = -slope
    let (mut sw, mut su, mut sv, mut suu, mut suv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let w = 1.0 / (stderrs[i] * stderrs[i]);
        let u = 1.0 / lambdas[i];
        sw += w;
        su += w * u;
        sv += w * values[i];
        suu += w * u * u;
        suv += w * u * values[i];
    }
    let det = sw * suu - su * su;
    if det.abs() < 1e-300 {
        return Err(StatsError::TooFewPoints(2));
    }
    let b = (sw * suv - su * sv) / det;
    let a = (sv - b * su) / sw;
    let max_residual_ratio = (0..n)
        .map(|i| ((values[i] - a - b / lambdas[i]) / stderrs[i]).abs())
        .fold(0.0, f64::max);
    Ok(WindowFit { intercept: a, slope: -b, intercept_stderr: sqrt(suu / det), max_residual_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rep(x: f64, y: f64) -> [MaxSample; 1] {
        [MaxSample { m_cont: 0.0, m_grid: 0.0, x_hat: x, y_hat: y }]
    }

    fn pt(x: f64, y: f64) -> LatticePoint {
        LatticePoint { x: alloc::vec![x], y: alloc::vec![y] }
    }

    #[test]
    fn counting_examples() {
        let s = [rep(-1.0, -1.0), rep(0.5, 0.0), rep(1.0, 2.0), rep(-0.5, 0.3)];
        let v = empirical_cdf(&s, &[pt(5.0, 5.0), pt(-3.0, -3.0), pt(0.0, 0.5)]).unwrap();
        assert_eq!(v[0].value, 1.0);
        assert_eq!(v[0].stderr, 0.0);
        assert_eq!(v[1].value, 0.0);
        assert_eq!(v[2].value, 0.5);
        assert_abs_diff_eq!(v[2].stderr, 0.25, epsilon = 1e-15);
        let empty: [[MaxSample; 1]; 0] = [];
        assert_eq!(empirical_cdf(&empty, &[pt(0.0, 0.0)]), Err(StatsError::EmptySamples));
        assert!(empirical_cdf(&s, &[LatticePoint { x: alloc::vec![0.0, 0.0], y: alloc::vec![0.0] }]).is_err());
    }

    #[test]
    fn boundary_is_inclusive() {
        let s = [rep(0.0, 0.0)];
        assert_eq!(empirical_cdf(&s, &[pt(0.0, 0.0)]).unwrap()[0].value, 1.0);
    }

    #[test]
    fn window_fit_recovers_exact_line() {
        let lambdas = [16.0, 32.0, 64.0];
        let values: alloc::vec::Vec<f64> = lambdas.iter().map(|l| 0.9 + 1.5 / l).collect();
        let fit = fit_inverse_window(&lambdas, &values, &[0.01, 0.01, 0.01]).unwrap();
        assert_abs_diff_eq!(fit.intercept, 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.slope, -1.5, epsilon = 1e-10);
        assert!(fit.max_residual_ratio < 1e-9);
    }

    #[test]
    fn moments() {
        let (m, v) = mean_var(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_abs_diff_eq!(v, 5.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]), 0.9986, epsilon = 1e-3);
    }
}
