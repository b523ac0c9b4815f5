//! Limiting joint distribution functions of the normalised continuous and
//! grid maxima.
//!
//! Each limit is `E[exp(-E(x, y, Z))]` for an exponent `E` that sums over
//! components terms weighted by `exp(-r_kk + sqrt(2 r_kk) Z_k)`:
//!
//! * sparse grids: `f = sum_k (e^{-x_k} + e^{-y_k}) w_k`
//! * Pickands grids: `g = sum_k (e^{-x_k} + e^{-y_k} - H^{ln H_a + x_k, ln H_d + y_k}) w_k`
//! * dense grids: `h = sum_k e^{-min(x_k, y_k)} w_k`
//!
//! The expectation over `Z = L xi` runs over the range of the latent factor,
//! so singular latent covariances need no special casing.

use alloc::vec::Vec;

use crate::math::{exp, ln, sqrt};
use crate::model::{LatentFactor, VectorCorrelationModel};
use crate::quadrature::{gaussian_expectation, Integrator, QuadratureError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LimitError {
    #[error("expected vectors of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("component {component}: joint constant {joint} exceeds e^-x + e^-y = {bound}; the H table is inconsistent")]
    NegativeExponent { component: usize, joint: f64, bound: f64 },
    #[error("the Pickands regime needs H_alpha, H_(d,alpha) and an H^(x,y) table for every component")]
    MissingConstants,
    #[error("the Pickands regime needs d > 0, got {0}")]
    InvalidD(f64),
    #[error("invalid H table: {0}")]
    InvalidTable(&'static str),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Something that evaluates `H^{x,y}_{d,alpha}`.
pub trait JointConstant {
    fn value(&self, x: f64, y: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64> JointConstant for F {
    fn value(&self, x: f64, y: f64) -> f64 {
        self(x, y)
    }
}

/// `H^{x,y}_{d,alpha}` on a rectangular lattice, bilinear inside and
/// extended outside by the bound `min(e^{-x} H_alpha, e^{-y} H_(d,alpha))`.
#[derive(Debug, Clone, PartialEq)]
pub struct HTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major, `values[i * ys.len() + j]` at `(xs[i], ys[j])`.
    values: Vec<f64>,
    stderr: Vec<f64>,
    h_alpha: f64,
    h_d_alpha: f64,
}

impl HTable {
    pub fn new(
        xs: Vec<f64>,
        ys: Vec<f64>,
        values: Vec<f64>,
        stderr: Vec<f64>,
        h_alpha: f64,
        h_d_alpha: f64,
    ) -> Result<Self, LimitError> {
        if xs.len() < 2 || ys.len() < 2 {
            return Err(LimitError::InvalidTable("need at least two lattice points per axis"));
        }
        if values.len() != xs.len() * ys.len() || stderr.len() != values.len() {
            return Err(LimitError::InvalidTable("value count does not match the lattice"));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) || ys.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(LimitError::InvalidTable("lattice axes must be strictly increasing"));
        }
        if !(h_alpha > 0.0 && h_d_alpha > 0.0) {
            return Err(LimitError::InvalidTable("constants must be positive"));
        }
        Ok(Self { xs, ys, values, stderr, h_alpha, h_d_alpha })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn h_alpha(&self) -> f64 {
        self.h_alpha
    }

    pub fn h_d_alpha(&self) -> f64 {
        self.h_d_alpha
    }

    pub fn cell(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ys.len() + j]
    }

    pub fn cell_stderr(&self, i: usize, j: usize) -> f64 {
        self.stderr[i * self.ys.len() + j]
    }

    /// Inclusion-exclusion bound `min(e^{-x} H_alpha, e^{-y} H_(d,alpha))`.
    pub fn bound(&self, x: f64, y: f64) -> f64 {
        (exp(-x) * self.h_alpha).min(exp(-y) * self.h_d_alpha)
    }

    fn locate(axis: &[f64], v: f64) -> Option<(usize, f64)> {
        let (lo, hi) = (axis[0], axis[axis.len() - 1]);
        if !(v >= lo && v <= hi) {
            return None;
        }
        let i = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1) - 1;
        Some((i, (v - axis[i]) / (axis[i + 1] - axis[i])))
    }
}

impl JointConstant for HTable {
    fn value(&self, x: f64, y: f64) -> f64 {
        match (Self::locate(&self.xs, x), Self::locate(&self.ys, y)) {
            (Some((i, tx)), Some((j, ty))) => {
                let v00 = self.cell(i, j);
                let v01 = self.cell(i, j + 1);
                let v10 = self.cell(i + 1, j);
                let v11 = self.cell(i + 1, j + 1);
                (1.0 - tx) * ((1.0 - ty) * v00 + ty * v01) + tx * ((1.0 - ty) * v10 + ty * v11)
            }
            _ => self.bound(x, y),
        }
    }
}

/// `H_alpha`, `H_(d,alpha)` and `H^{x,y}_{d,alpha}` for one component.
#[derive(Debug, Clone, PartialEq)]
pub struct PickandsConstants<J = HTable> {
    pub h_alpha: f64,
    pub h_d_alpha: f64,
    pub joint: J,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitRegime {
    Sparse,
    Pickands { d: f64 },
    Dense,
    /// Marginal law of the continuous maxima alone; `y` is ignored.
    CorollaryMarginal,
}

#[inline]
fn latent_weight(r: f64, z: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else {
        exp(-r + sqrt(2.0 * r) * z)
    }
}

fn check_len(p: usize, v: &[f64]) -> Result<(), LimitError> {
    if v.len() == p {
        Ok(())
    } else {
        Err(LimitError::DimensionMismatch { expected: p, found: v.len() })
    }
}

fn diag_weights(model: &VectorCorrelationModel) -> Vec<f64> {
    model.components().iter().map(|c| c.r_diag()).collect()
}

fn f_with(x: &[f64], y: &[f64], z: &[f64], r: &[f64]) -> f64 {
    (0..r.len()).map(|k| (exp(-x[k]) + exp(-y[k])) * latent_weight(r[k], z[k])).sum()
}

fn h_with(x: &[f64], y: &[f64], z: &[f64], r: &[f64]) -> f64 {
    (0..r.len()).map(|k| exp(-x[k].min(y[k])) * latent_weight(r[k], z[k])).sum()
}

fn g_with<J: JointConstant>(
    x: &[f64],
    y: &[f64],
    z: &[f64],
    r: &[f64],
    constants: &[PickandsConstants<J>],
) -> Result<f64, LimitError> {
    let mut total = 0.0;
    for k in 0..r.len() {
        let c = &constants[k];
        let bound = exp(-x[k]) + exp(-y[k]);
        let joint = c.joint.value(ln(c.h_alpha) + x[k], ln(c.h_d_alpha) + y[k]);
        let mut term = bound - joint;
        if term < 0.0 {
            if term < -1e-12 * bound.max(1e-300) {
                return Err(LimitError::NegativeExponent { component: k, joint, bound });
            }
            term = 0.0;
        }
        total += term * latent_weight(r[k], z[k]);
    }
    Ok(total)
}

/// Sparse-grid exponent `f(x, y, z)`.
pub fn f_exponent(x: &[f64], y: &[f64], z: &[f64], model: &VectorCorrelationModel) -> Result<f64, LimitError> {
    let p = model.p();
    check_len(p, x)?;
    check_len(p, y)?;
    check_len(p, z)?;
    Ok(f_with(x, y, z, &diag_weights(model)))
}

/// Dense-grid exponent `h(x, y, z)`.
pub fn h_exponent(x: &[f64], y: &[f64], z: &[f64], model: &VectorCorrelationModel) -> Result<f64, LimitError> {
    let p = model.p();
    check_len(p, x)?;
    check_len(p, y)?;
    check_len(p, z)?;
    Ok(h_with(x, y, z, &diag_weights(model)))
}

/// Pickands-grid exponent `g(x, y, z)`. The joint constant of component `k`
/// is evaluated at `(ln H_alpha + x_k, ln H_(d,alpha) + y_k)`.
pub fn g_exponent<J: JointConstant>(
    x: &[f64],
    y: &[f64],
    z: &[f64],
    model: &VectorCorrelationModel,
    constants: &[PickandsConstants<J>],
) -> Result<f64, LimitError> {
    let p = model.p();
    check_len(p, x)?;
    check_len(p, y)?;
    check_len(p, z)?;
    if constants.len() != p {
        return Err(LimitError::MissingConstants);
    }
    g_with(x, y, z, &diag_weights(model), constants)
}

/// Everything `limit_cdf` needs for one regime.
#[derive(Debug, Clone)]
pub struct LimitSpec {
    regime: LimitRegime,
    weights: Vec<f64>,
    factor: LatentFactor,
    pickands: Vec<PickandsConstants>,
}

impl LimitSpec {
    pub fn new(
        model: &VectorCorrelationModel,
        regime: LimitRegime,
        pickands: Option<Vec<PickandsConstants>>,
    ) -> Result<Self, LimitError> {
        let pickands = match regime {
            LimitRegime::Pickands { d } => {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(LimitError::InvalidD(d));
                }
                match pickands {
                    Some(c) if c.len() == model.p() => c,
                    _ => return Err(LimitError::MissingConstants),
                }
            }
            _ => Vec::new(),
        };
        Ok(Self { regime, weights: diag_weights(model), factor: model.latent_factor().clone(), pickands })
    }

    pub fn regime(&self) -> LimitRegime {
        self.regime
    }

    pub fn p(&self) -> usize {
        self.weights.len()
    }

    pub fn pickands(&self) -> &[PickandsConstants] {
        &self.pickands
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitValue {
    pub value: f64,
    pub error: f64,
}

/// `E[exp(-exponent(x, y, Z))]` for the regime of `spec`.
pub fn limit_cdf(spec: &LimitSpec, x: &[f64], y: &[f64], integrator: Integrator) -> Result<LimitValue, LimitError> {
    let p = spec.p();
    check_len(p, x)?;
    if spec.regime != LimitRegime::CorollaryMarginal {
        check_len(p, y)?;
    }
    let mut z = alloc::vec![0.0; p];
    let mut failure = None;
    let e = gaussian_expectation(spec.factor.rank(), integrator, |xi| {
        spec.factor.apply(xi, &mut z);
        let exponent = match spec.regime {
            LimitRegime::Sparse => f_with(x, y, &z, &spec.weights),
            LimitRegime::Dense => h_with(x, y, &z, &spec.weights),
            LimitRegime::CorollaryMarginal => h_with(x, x, &z, &spec.weights),
            LimitRegime::Pickands { .. } => match g_with(x, y, &z, &spec.weights, &spec.pickands) {
                Ok(v) => v,
                Err(err) => {
                    failure.get_or_insert(err);
                    0.0
                }
            },
        };
        exp(-exponent)
    })?;
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(LimitValue { value: e.value.clamp(0.0, 1.0), error: e.error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ComponentParams;
    use approx::assert_abs_diff_eq;

    fn one(r: f64) -> VectorCorrelationModel {
        VectorCorrelationModel::build(alloc::vec![ComponentParams::new(1.0, 1.0, r).unwrap()], &[r], false).unwrap()
    }

    #[test]
    fn f_examples() {
        assert_abs_diff_eq!(f_exponent(&[0.0], &[0.0], &[3.7], &one(0.0)).unwrap(), 2.0);
        assert_abs_diff_eq!(f_exponent(&[0.0], &[0.0], &[0.0], &one(0.5)).unwrap(), 1.213061319425267, epsilon = 1e-14);
        assert_eq!(f_exponent(&[f64::INFINITY], &[f64::INFINITY], &[0.0], &one(0.5)).unwrap(), 0.0);
        assert!(matches!(
            f_exponent(&[0.0, 1.0], &[0.0], &[0.0], &one(0.5)),
            Err(LimitError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn h_examples() {
        assert_abs_diff_eq!(h_exponent(&[1.0], &[0.0], &[0.0], &one(0.0)).unwrap(), 1.0);
        assert_abs_diff_eq!(h_exponent(&[0.0], &[0.0], &[1.0], &one(0.5)).unwrap(), 1.648721270700128, epsilon = 1e-14);
        let m = one(0.5);
        for x in [-1.0, 0.0, 2.5] {
            let f = f_exponent(&[x], &[x], &[0.3], &m).unwrap();
            assert_abs_diff_eq!(h_exponent(&[x], &[x], &[0.3], &m).unwrap(), f / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn g_examples() {
        let m = one(0.5);
        let zero = [PickandsConstants { h_alpha: 1.0, h_d_alpha: 0.5, joint: |_: f64, _: f64| 0.0 }];
        let f = f_exponent(&[0.3], &[-0.2], &[0.7], &m).unwrap();
        assert_abs_diff_eq!(g_exponent(&[0.3], &[-0.2], &[0.7], &m, &zero).unwrap(), f, epsilon = 1e-15);

        // H at its upper bound: the k-th term collapses to max(e^-x, e^-y) w
        let (ha, hd) = (1.3, 0.6);
        let upper = [PickandsConstants {
            h_alpha: ha,
            h_d_alpha: hd,
            joint: move |u: f64, v: f64| (ha * (-u).exp()).min(hd * (-v).exp()),
        }];
        let (x, y, z): (f64, f64, f64) = (0.3, -0.2, 0.7);
        let w = (-0.5 + z).exp();
        let expected = (-x).exp().max((-y).exp()) * w;
        assert_abs_diff_eq!(g_exponent(&[x], &[y], &[z], &m, &upper).unwrap(), expected, epsilon = 1e-14);

        let bad = [PickandsConstants { h_alpha: 1.0, h_d_alpha: 1.0, joint: |_: f64, _: f64| 10.0 }];
        assert!(matches!(g_exponent(&[0.0], &[0.0], &[0.0], &m, &bad), Err(LimitError::NegativeExponent { .. })));
    }

    #[test]
    fn degenerate_latent_limits() {
        let spec = LimitSpec::new(&one(0.0), LimitRegime::Sparse, None).unwrap();
        let v = limit_cdf(&spec, &[0.0], &[0.0], Integrator::default()).unwrap();
        assert_abs_diff_eq!(v.value, (-2.0f64).exp(), epsilon = 1e-15);
        let spec = LimitSpec::new(&one(0.0), LimitRegime::Dense, None).unwrap();
        let v = limit_cdf(&spec, &[0.0], &[1.0], Integrator::default()).unwrap();
        assert_abs_diff_eq!(v.value, (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn sparse_strong_dependence_golden() {
        // scipy.integrate.quad, epsrel 1e-13, of E[exp(-2 e^{-0.5 + Z})]
        let spec = LimitSpec::new(&one(0.5), LimitRegime::Sparse, None).unwrap();
        let v = limit_cdf(&spec, &[0.0], &[0.0], Integrator::default()).unwrap();
        assert_abs_diff_eq!(v.value, 0.332484900847269, epsilon = 1e-10);
        assert!(v.error < 1e-8);
    }

    #[test]
    fn pickands_spec_needs_constants() {
        assert!(matches!(
            LimitSpec::new(&one(0.5), LimitRegime::Pickands { d: 1.0 }, None),
            Err(LimitError::MissingConstants)
        ));
        assert!(matches!(
            LimitSpec::new(&one(0.5), LimitRegime::Pickands { d: 0.0 }, None),
            Err(LimitError::InvalidD(_))
        ));
    }

    #[test]
    fn table_interpolation_and_extension() {
        let xs = alloc::vec![0.0, 1.0];
        let ys = alloc::vec![0.0, 2.0];
        let t = HTable::new(xs, ys, alloc::vec![0.4, 0.2, 0.3, 0.1], alloc::vec![0.0; 4], 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(t.value(0.5, 1.0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(t.value(1.0, 2.0), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(t.value(3.0, 1.0), (-3.0f64).exp().min(0.5 * (-1.0f64).exp()), epsilon = 1e-15);
        assert!(HTable::new(alloc::vec![0.0], alloc::vec![0.0, 1.0], alloc::vec![0.0; 2], alloc::vec![0.0; 2], 1.0, 1.0).is_err());
    }
}
