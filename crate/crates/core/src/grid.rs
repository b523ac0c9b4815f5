//! Grid rules `delta(T)` and their sparse / Pickands / dense classification
//! through `D = lim delta(T) (2 ln T)^{1/alpha}`.

use alloc::sync::Arc;
use core::fmt;

use crate::math::{exp, powf};

/// Probe horizons (`ln T`) used to classify explicit rules.
pub const PROBE_LOG_HORIZONS: [f64; 3] = [8.0, 16.0, 32.0];

/// An extrapolated `D` below this fraction of the last probe value counts as
/// zero.
pub const DENSE_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("alpha = {0} is outside (0, 2]")]
    AlphaOutOfRange(f64),
    #[error("Pickands grid needs d > 0, got {0}")]
    NonPositiveD(f64),
    #[error("grid rule returned an invalid spacing {delta} at ln T = {log_t}")]
    InvalidDelta { log_t: f64, delta: f64 },
    #[error("cannot classify grid: probe values {probe:?} are not monotone")]
    UndecidableRegime { probe: [f64; 3] },
}

#[derive(Clone)]
pub enum GridRule {
    /// `delta(T) = (2 ln T)^{-1/(2 alpha)}`: `D = infinity` while `delta -> 0`.
    SparseDefault,
    /// `delta(T) = d (2 ln T)^{-1/alpha}`.
    Pickands { d: f64 },
    /// `delta(T) = (2 ln T)^{-2/alpha}`.
    DenseDefault,
    /// Arbitrary spacing as a function of `T`.
    Explicit(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for GridRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridRule::SparseDefault => f.write_str("SparseDefault"),
            GridRule::Pickands { d } => write!(f, "Pickands {{ d: {d} }}"),
            GridRule::DenseDefault => f.write_str("DenseDefault"),
            GridRule::Explicit(_) => f.write_str("Explicit(..)"),
        }
    }
}

impl GridRule {
    pub fn explicit(rule: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        GridRule::Explicit(Arc::new(rule))
    }

    /// Grid spacing at horizon `ln T` for a component with exponent `alpha`.
    pub fn delta(&self, log_t: f64, alpha: f64) -> f64 {
        let two_log = 2.0 * log_t;
        match self {
            GridRule::SparseDefault => powf(two_log, -0.5 / alpha),
            GridRule::Pickands { d } => d * powf(two_log, -1.0 / alpha),
            GridRule::DenseDefault => powf(two_log, -2.0 / alpha),
            GridRule::Explicit(rule) => rule(exp(log_t)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Sparse,
    Pickands { d: f64 },
    Dense,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Sparse => "sparse",
            Regime::Pickands { .. } => "pickands",
            Regime::Dense => "dense",
        }
    }

    pub fn same_kind(&self, other: &Regime) -> bool {
        core::mem::discriminant(self) == core::mem::discriminant(other)
    }
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub rule: GridRule,
    pub alpha: f64,
    pub regime: Regime,
}

impl GridSpec {
    pub fn delta(&self, log_t: f64) -> f64 {
        self.rule.delta(log_t, self.alpha)
    }
}

/// Classifies `rule` for exponent `alpha`.
///
/// Built-in rules are classified analytically. Explicit rules are probed at
/// `ln T` in [`PROBE_LOG_HORIZONS`]: the values `v = delta(T) (2 ln T)^{1/alpha}`
/// must be monotone, and their successive differences `d1, d2` are read as a
/// geometric series with ratio `q = d2 / d1`. With `q >= 1` the probe diverges
/// (sparse when increasing, dense when decreasing); otherwise the limit is
/// extrapolated as `v3 + d2 q / (1 - q)` (Aitken's delta-squared, exact for
/// `D + c / ln T` corrections and for pure power laws, which extrapolate to
/// zero). An extrapolated limit below [`DENSE_FRACTION`] of `v3` is dense,
/// anything else a Pickands grid. Slowly varying factors such as
/// `1 / ln ln T` cannot be told apart from a finite `D` by three probes.
pub fn classify_grid(rule: GridRule, alpha: f64) -> Result<GridSpec, GridError> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(GridError::AlphaOutOfRange(alpha));
    }
    let regime = match &rule {
        GridRule::SparseDefault => Regime::Sparse,
        GridRule::DenseDefault => Regime::Dense,
        GridRule::Pickands { d } => {
            if !(*d > 0.0 && d.is_finite()) {
                return Err(GridError::NonPositiveD(*d));
            }
            Regime::Pickands { d: *d }
        }
        GridRule::Explicit(_) => probe_regime(&rule, alpha)?,
    };
    Ok(GridSpec { rule, alpha, regime })
}

fn probe_regime(rule: &GridRule, alpha: f64) -> Result<Regime, GridError> {
    let mut probe = [0.0; 3];
    for (v, &log_t) in probe.iter_mut().zip(PROBE_LOG_HORIZONS.iter()) {
        let delta = rule.delta(log_t, alpha);
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(GridError::InvalidDelta { log_t, delta });
        }
        *v = delta * powf(2.0 * log_t, 1.0 / alpha);
    }
    let [v1, v2, v3] = probe;
    let (d1, d2) = (v2 - v1, v3 - v2);
    if d1 * d2 < 0.0 {
        return Err(GridError::UndecidableRegime { probe });
    }
    if (v3 - v1).abs() <= 1e-12 * v1 {
        return Ok(Regime::Pickands { d: v3 });
    }
    let increasing = v3 > v1;
    let q = if d1 == 0.0 { 0.0 } else { d2 / d1 };
    if q >= 1.0 {
        return Ok(if increasing { Regime::Sparse } else { Regime::Dense });
    }
    let limit = v3 + d2 * q / (1.0 - q);
    if !limit.is_finite() || limit <= DENSE_FRACTION * v3 {
        Ok(Regime::Dense)
    } else {
        Ok(Regime::Pickands { d: limit })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_spacing_is_sparse() {
        let spec = classify_grid(GridRule::explicit(|_| 0.25), 1.0).unwrap();
        assert_eq!(spec.regime, Regime::Sparse);
    }

    #[test]
    fn explicit_pickands_rule_recovers_d() {
        let rule = GridRule::explicit(|t: f64| 0.5 / (2.0 * t.ln()));
        match classify_grid(rule, 1.0).unwrap().regime {
            Regime::Pickands { d } => assert_abs_diff_eq!(d, 0.5, epsilon = 1e-12),
            other => panic!("{other:?}"),
        }
        // 1/ln T correction on top of D
        let rule = GridRule::explicit(|t: f64| (0.5 + 1.0 / t.ln()) / (2.0 * t.ln()));
        match classify_grid(rule, 1.0).unwrap().regime {
            Regime::Pickands { d } => assert_abs_diff_eq!(d, 0.5, epsilon = 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quadratic_spacing_is_dense() {
        let rule = GridRule::explicit(|t: f64| (2.0 * t.ln()).powf(-2.0));
        assert_eq!(classify_grid(rule, 1.0).unwrap().regime, Regime::Dense);
    }

    #[test]
    fn builtin_rules() {
        assert_eq!(classify_grid(GridRule::SparseDefault, 1.0).unwrap().regime, Regime::Sparse);
        assert_eq!(classify_grid(GridRule::DenseDefault, 0.5).unwrap().regime, Regime::Dense);
        assert_eq!(
            classify_grid(GridRule::Pickands { d: 0.5 }, 1.0).unwrap().regime,
            Regime::Pickands { d: 0.5 }
        );
        assert!(matches!(classify_grid(GridRule::Pickands { d: 0.0 }, 1.0), Err(GridError::NonPositiveD(_))));
        assert!(matches!(classify_grid(GridRule::DenseDefault, 2.5), Err(GridError::AlphaOutOfRange(_))));
    }

    #[test]
    fn builtin_rules_agree_with_the_probe() {
        for alpha in [0.5, 1.0, 1.5, 2.0] {
            for rule in [GridRule::SparseDefault, GridRule::DenseDefault, GridRule::Pickands { d: 0.7 }] {
                let analytic = classify_grid(rule.clone(), alpha).unwrap().regime;
                let r2 = rule.clone();
                let probed = classify_grid(GridRule::explicit(move |t: f64| r2.delta(t.ln(), alpha)), alpha)
                    .unwrap()
                    .regime;
                match (analytic, probed) {
                    (Regime::Pickands { d: a }, Regime::Pickands { d: b }) => assert_abs_diff_eq!(a, b, epsilon = 1e-9),
                    (a, b) => assert_eq!(a, b, "alpha={alpha}"),
                }
            }
        }
    }

    #[test]
    fn non_monotone_probe_is_reported() {
        let rule = GridRule::explicit(|t: f64| {
            let l = t.ln();
            if (l - 16.0).abs() < 1e-6 { 10.0 } else { 0.1 }
        });
        assert!(matches!(classify_grid(rule, 1.0), Err(GridError::UndecidableRegime { .. })));
        let bad = GridRule::explicit(|_| -1.0);
        assert!(matches!(classify_grid(bad, 1.0), Err(GridError::InvalidDelta { .. })));
    }

    #[test]
    fn default_spacings() {
        let log_t = 8.0;
        assert_abs_diff_eq!(GridRule::SparseDefault.delta(log_t, 1.0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(GridRule::Pickands { d: 1.0 }.delta(log_t, 1.0), 1.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(GridRule::DenseDefault.delta(log_t, 1.0), 1.0 / 256.0, epsilon = 1e-15);
    }
}
