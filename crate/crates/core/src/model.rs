//! Correlation structure of the vector process and its finite-horizon
//! realisation.

use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::math::{exp, ln, powf, sqrt};

/// Horizons must satisfy `ln T > 2`; below that `rho(T) = r / ln T` is not
/// small and the finite-`T` model stops being a sensible surrogate.
pub const MIN_LOG_HORIZON: f64 = 2.0;

/// Eigenvalues of the latent covariance above this count towards its rank,
/// and anything below `-EIGEN_TOLERANCE` makes it indefinite.
pub const EIGEN_TOLERANCE: f64 = 1e-10;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("model needs at least one component")]
    Empty,
    #[error("dimension mismatch: expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("component {component}: alpha = {alpha} is outside (0, 2]")]
    AlphaOutOfRange { component: usize, alpha: f64 },
    #[error("component {component}: scale C = {c} must be positive and finite")]
    InvalidScale { component: usize, c: f64 },
    #[error("component {component}: long-range coefficient r_kk = {value} is negative")]
    NegativeDiagonal { component: usize, value: f64 },
    #[error("cross coefficients r[{k}][{l}] and r[{l}][{k}] differ")]
    NonSymmetricCross { k: usize, l: usize },
    #[error("r[{k}][{l}] is non-zero but one of the diagonal coefficients is zero")]
    CrossWithoutLatent { k: usize, l: usize },
    #[error("latent covariance is not positive semidefinite (minimum eigenvalue {min_eigenvalue:.3e})")]
    NonPSDLatent { min_eigenvalue: f64 },
    #[error("latent covariance is singular (minimum eigenvalue {min_eigenvalue:.3e}); set allow_singular_latent to accept it")]
    SingularLatent { min_eigenvalue: f64 },
    #[error("horizon too small: ln T = {log_horizon} but the model needs ln T > {required}")]
    HorizonTooSmall { log_horizon: f64, required: f64 },
    #[error("component index {index} out of range for a {p}-component model")]
    ComponentOutOfRange { index: usize, p: usize },
}

/// Simulation horizon `T`, stored through `ln T` so that ladders such as
/// `T = e^8` are exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    log_t: f64,
}

impl Horizon {
    pub fn from_log(log_t: f64) -> Self {
        Self { log_t }
    }

    pub fn new(t: f64) -> Self {
        Self { log_t: ln(t) }
    }

    pub fn log(&self) -> f64 {
        self.log_t
    }

    pub fn value(&self) -> f64 {
        exp(self.log_t)
    }

    /// `a_T = sqrt(2 ln T)`.
    pub fn a_t(&self) -> f64 {
        sqrt(2.0 * self.log_t)
    }
}

/// Local behaviour `1 - C |t|^alpha` and long-range coefficient `r_kk` of one
/// component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentParams {
    alpha: f64,
    c: f64,
    r_diag: f64,
}

impl ComponentParams {
    pub fn new(alpha: f64, c: f64, r_diag: f64) -> Result<Self, ModelError> {
        Self::validated(0, alpha, c, r_diag)
    }

    fn validated(component: usize, alpha: f64, c: f64, r_diag: f64) -> Result<Self, ModelError> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(ModelError::AlphaOutOfRange { component, alpha });
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(ModelError::InvalidScale { component, c });
        }
        if !(r_diag >= 0.0 && r_diag.is_finite()) {
            return Err(ModelError::NegativeDiagonal { component, value: r_diag });
        }
        Ok(Self { alpha, c, r_diag })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn r_diag(&self) -> f64 {
        self.r_diag
    }

    /// Short-range kernel `exp(-C |t|^alpha)`.
    pub fn kernel(&self, t: f64) -> f64 {
        let t = t.abs();
        if t == 0.0 {
            1.0
        } else {
            exp(-self.c * powf(t, self.alpha))
        }
    }
}

/// Factorisation `Sigma_Z = L L^T` with `L` of shape `p x rank`.
///
/// Rows of components with `r_kk = 0` are zero; their latent coordinate never
/// enters the process.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactor {
    p: usize,
    rank: usize,
    loadings: Vec<f64>,
}

impl LatentFactor {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn loading(&self, k: usize, j: usize) -> f64 {
        self.loadings[k * self.rank + j]
    }

    /// `z = L xi` for `xi` of length `rank`.
    pub fn apply(&self, xi: &[f64], z: &mut [f64]) {
        debug_assert_eq!(xi.len(), self.rank);
        debug_assert_eq!(z.len(), self.p);
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &self.loadings[k * self.rank..(k + 1) * self.rank];
            *zk = row.iter().zip(xi).map(|(l, x)| l * x).sum();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorCorrelationModel {
    components: Vec<ComponentParams>,
    r_cross: Vec<f64>,
    sigma_z: Vec<f64>,
    factor: LatentFactor,
    min_eigenvalue: f64,
    singular: bool,
}

impl VectorCorrelationModel {
    /// Validates the parameters and derives the latent covariance
    /// `Sigma_Z[k][l] = r_kl / sqrt(r_kk r_ll)`.
    ///
    /// `r_cross` is the full `p x p` matrix in row-major order; its diagonal
    /// must agree with the components' `r_kk`. A singular `Sigma_Z` is
    /// rejected unless `allow_singular` is set, in which case sampling and
    /// integration run over its range.
    pub fn build(
        components: Vec<ComponentParams>,
        r_cross: &[f64],
        allow_singular: bool,
    ) -> Result<Self, ModelError> {
        let p = components.len();
        if p == 0 {
            return Err(ModelError::Empty);
        }
        if r_cross.len() != p * p {
            return Err(ModelError::DimensionMismatch { expected: p * p, found: r_cross.len() });
        }
        for (k, comp) in components.iter().enumerate() {
            ComponentParams::validated(k, comp.alpha, comp.c, comp.r_diag)?;
            let diag = r_cross[k * p + k];
            if diag < 0.0 {
                return Err(ModelError::NegativeDiagonal { component: k, value: diag });
            }
            if (diag - comp.r_diag).abs() > SYMMETRY_TOLERANCE * comp.r_diag.max(1.0) {
                return Err(ModelError::NonSymmetricCross { k, l: k });
            }
        }

        let mut sigma_z = alloc::vec![0.0; p * p];
        for k in 0..p {
            for l in 0..p {
                let (a, b) = (r_cross[k * p + l], r_cross[l * p + k]);
                if (a - b).abs() > SYMMETRY_TOLERANCE * a.abs().max(1.0) {
                    return Err(ModelError::NonSymmetricCross { k: k.min(l), l: k.max(l) });
                }
                sigma_z[k * p + l] = if k == l {
                    1.0
                } else {
                    let prod = components[k].r_diag * components[l].r_diag;
                    if prod == 0.0 {
                        if a != 0.0 {
                            return Err(ModelError::CrossWithoutLatent { k: k.min(l), l: k.max(l) });
                        }
                        0.0
                    } else {
                        a / sqrt(prod)
                    }
                };
            }
        }

        let full = DMatrix::from_row_slice(p, p, &sigma_z);
        let min_eigenvalue = SymmetricEigen::new(full)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eigenvalue < -EIGEN_TOLERANCE {
            return Err(ModelError::NonPSDLatent { min_eigenvalue });
        }
        let singular = min_eigenvalue <= EIGEN_TOLERANCE;
        if singular && !allow_singular {
            return Err(ModelError::SingularLatent { min_eigenvalue });
        }

        let factor = latent_factor(&components, &sigma_z);
        Ok(Self {
            components,
            r_cross: r_cross.to_vec(),
            sigma_z,
            factor,
            min_eigenvalue,
            singular,
        })
    }

    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ComponentParams] {
        &self.components
    }

    pub fn component(&self, k: usize) -> Result<&ComponentParams, ModelError> {
        self.components
            .get(k)
            .ok_or(ModelError::ComponentOutOfRange { index: k, p: self.p() })
    }

    pub fn r(&self, k: usize, l: usize) -> f64 {
        self.r_cross[k * self.p() + l]
    }

    pub fn sigma_z(&self, k: usize, l: usize) -> f64 {
        self.sigma_z[k * self.p() + l]
    }

    pub fn latent_factor(&self) -> &LatentFactor {
        &self.factor
    }

    pub fn min_latent_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Smallest admissible `ln T`: above [`MIN_LOG_HORIZON`] and above every
    /// `r_kk` so that `rho_kk(T) < 1`.
    pub fn required_log_horizon(&self) -> f64 {
        self.components.iter().map(|c| c.r_diag).fold(MIN_LOG_HORIZON, f64::max)
    }

    pub fn check_horizon(&self, horizon: Horizon) -> Result<(), ModelError> {
        let required = self.required_log_horizon();
        if horizon.log() > required {
            Ok(())
        } else {
            Err(ModelError::HorizonTooSmall { log_horizon: horizon.log(), required })
        }
    }

    /// `rho_kl(T) = r_kl / ln T`.
    pub fn rho(&self, k: usize, l: usize, horizon: Horizon) -> Result<f64, ModelError> {
        self.check_horizon(horizon)?;
        self.component(k)?;
        self.component(l)?;
        Ok(self.r(k, l) / horizon.log())
    }

    /// Weights `(sqrt(1 - rho_kk), sqrt(rho_kk))` of the stationary part and
    /// the latent part of component `k`.
    pub fn mixing_weights(&self, k: usize, horizon: Horizon) -> Result<(f64, f64), ModelError> {
        let rho = self.rho(k, k, horizon)?;
        Ok((sqrt(1.0 - rho), sqrt(rho)))
    }

    /// Correlation of `X_k(s)` and `X_l(s + t)` at horizon `T`.
    pub fn correlation_at(
        &self,
        k: usize,
        l: usize,
        t: f64,
        horizon: Horizon,
    ) -> Result<f64, ModelError> {
        let rho = self.rho(k, l, horizon)?;
        if k == l {
            Ok((1.0 - rho) * self.components[k].kernel(t) + rho)
        } else {
            Ok(rho)
        }
    }
}

fn latent_factor(components: &[ComponentParams], sigma_z: &[f64]) -> LatentFactor {
    let p = components.len();
    let active: Vec<usize> = (0..p).filter(|&k| components[k].r_diag > 0.0).collect();
    let m = active.len();
    if m == 0 {
        return LatentFactor { p, rank: 0, loadings: Vec::new() };
    }
    let sub = DMatrix::from_fn(m, m, |i, j| sigma_z[active[i] * p + active[j]]);
    let eig = SymmetricEigen::new(sub);
    let kept: Vec<usize> = (0..m).filter(|&j| eig.eigenvalues[j] > EIGEN_TOLERANCE).collect();
    let rank = kept.len();
    let mut loadings = alloc::vec![0.0; p * rank];
    for (i, &k) in active.iter().enumerate() {
        for (col, &j) in kept.iter().enumerate() {
            loadings[k * rank + col] = eig.eigenvectors[(i, j)] * sqrt(eig.eigenvalues[j]);
        }
    }
    LatentFactor { p, rank, loadings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn comp(alpha: f64, c: f64, r: f64) -> ComponentParams {
        ComponentParams::new(alpha, c, r).unwrap()
    }

    #[test]
    fn weak_dependence_single_component() {
        let m = VectorCorrelationModel::build(alloc::vec![comp(1.0, 1.0, 0.0)], &[0.0], false).unwrap();
        assert_eq!(m.sigma_z(0, 0), 1.0);
        assert_eq!(m.latent_factor().rank(), 0);
        assert!(!m.is_singular());
    }

    #[test]
    fn identical_latents_need_the_singular_flag() {
        let comps = alloc::vec![comp(1.0, 1.0, 0.5), comp(1.0, 1.0, 0.5)];
        let r = [0.5, 0.5, 0.5, 0.5];
        let err = VectorCorrelationModel::build(comps.clone(), &r, false).unwrap_err();
        assert!(matches!(err, ModelError::SingularLatent { .. }));
        let m = VectorCorrelationModel::build(comps, &r, true).unwrap();
        assert_abs_diff_eq!(m.sigma_z(0, 1), 1.0);
        assert_eq!(m.latent_factor().rank(), 1);
        let f = m.latent_factor();
        assert_abs_diff_eq!(f.loading(0, 0), f.loading(1, 0), epsilon = 1e-12);
        assert_abs_diff_eq!(f.loading(0, 0).abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn off_diagonal_above_one_is_rejected() {
        let comps = alloc::vec![comp(1.0, 1.0, 1.0), comp(1.0, 1.0, 1.0)];
        let err = VectorCorrelationModel::build(comps, &[1.0, 2.0, 2.0, 1.0], true).unwrap_err();
        match err {
            ModelError::NonPSDLatent { min_eigenvalue } => assert_abs_diff_eq!(min_eigenvalue, -1.0, epsilon = 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(matches!(ComponentParams::new(2.5, 1.0, 0.0), Err(ModelError::AlphaOutOfRange { .. })));
        assert!(matches!(ComponentParams::new(0.0, 1.0, 0.0), Err(ModelError::AlphaOutOfRange { .. })));
        assert!(matches!(ComponentParams::new(1.0, 0.0, 0.0), Err(ModelError::InvalidScale { .. })));
        assert!(matches!(ComponentParams::new(1.0, 1.0, -0.1), Err(ModelError::NegativeDiagonal { .. })));
        let comps = alloc::vec![comp(1.0, 1.0, 0.5), comp(1.0, 1.0, 0.5)];
        assert!(matches!(
            VectorCorrelationModel::build(comps.clone(), &[0.5, 0.1, 0.2, 0.5], false),
            Err(ModelError::NonSymmetricCross { k: 0, l: 1 })
        ));
        assert!(matches!(
            VectorCorrelationModel::build(comps, &[0.5, 0.1, 0.1], false),
            Err(ModelError::DimensionMismatch { expected: 4, found: 3 })
        ));
        let mixed = alloc::vec![comp(1.0, 1.0, 0.5), comp(1.0, 1.0, 0.0)];
        assert!(matches!(
            VectorCorrelationModel::build(mixed, &[0.5, 0.1, 0.1, 0.0], false),
            Err(ModelError::CrossWithoutLatent { k: 0, l: 1 })
        ));
    }

    #[test]
    fn correlation_examples() {
        let comps = alloc::vec![comp(1.0, 1.0, 0.5), comp(1.0, 1.0, 0.5)];
        let m = VectorCorrelationModel::build(comps, &[0.5, 0.4, 0.4, 0.5], false).unwrap();
        let t8 = Horizon::from_log(8.0);
        assert_eq!(m.correlation_at(0, 0, 0.0, t8).unwrap(), 1.0);
        assert_abs_diff_eq!(m.correlation_at(0, 0, 1e6, t8).unwrap(), 0.0625, epsilon = 1e-15);
        assert_abs_diff_eq!(m.correlation_at(0, 1, 3.0, t8).unwrap(), 0.05, epsilon = 1e-15);
        let comps = alloc::vec![comp(1.0, 1.0, 1.0), comp(1.0, 1.0, 1.0)];
        let m2 = VectorCorrelationModel::build(comps, &[1.0, 0.8, 0.8, 1.0], false).unwrap();
        assert_abs_diff_eq!(m2.correlation_at(0, 1, 0.0, t8).unwrap(), 0.1, epsilon = 1e-15);
        assert!(matches!(
            m.correlation_at(0, 0, 1.0, Horizon::from_log(1.5)),
            Err(ModelError::HorizonTooSmall { .. })
        ));
        assert!(matches!(
            m.correlation_at(0, 0, 1.0, Horizon::new(core::f64::consts::E)),
            Err(ModelError::HorizonTooSmall { .. })
        ));
    }

    #[test]
    fn strong_dependence_scaling_along_horizon_ladder() {
        let comps = alloc::vec![comp(1.0, 1.0, 0.5), comp(1.5, 2.0, 0.3)];
        let m = VectorCorrelationModel::build(comps, &[0.5, 0.25, 0.25, 0.3], false).unwrap();
        for log_t in [8.0, 16.0, 32.0] {
            let h = Horizon::from_log(log_t);
            let t = h.value();
            assert_abs_diff_eq!(m.correlation_at(0, 1, t, h).unwrap() * log_t, 0.25, epsilon = 1e-12);
            // the k = k correlation at lag T sits on rho_kk(T) up to exp(-T)
            assert_abs_diff_eq!(m.correlation_at(0, 0, t, h).unwrap() * log_t, 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn local_expansion_of_the_diagonal() {
        let comps = alloc::vec![comp(1.5, 2.0, 0.5)];
        let m = VectorCorrelationModel::build(comps, &[0.5], false).unwrap();
        let h = Horizon::from_log(8.0);
        let rho = 0.5 / 8.0;
        for t in [1e-3, 1e-4, 1e-5] {
            let ratio = (1.0 - m.correlation_at(0, 0, t, h).unwrap()) / (2.0 * powf(t, 1.5));
            assert!((ratio / (1.0 - rho) - 1.0).abs() < 0.01, "t={t} ratio={ratio}");
        }
    }

    #[test]
    fn latent_factor_reproduces_sigma() {
        let comps = alloc::vec![comp(1.0, 1.0, 0.5), comp(1.0, 1.0, 2.0), comp(0.5, 1.0, 1.0)];
        let r = [0.5, 0.4, 0.2, 0.4, 2.0, -0.3, 0.2, -0.3, 1.0];
        let m = VectorCorrelationModel::build(comps, &r, false).unwrap();
        let f = m.latent_factor();
        assert_eq!(f.rank(), 3);
        for k in 0..3 {
            for l in 0..3 {
                let s: f64 = (0..3).map(|j| f.loading(k, j) * f.loading(l, j)).sum();
                assert_abs_diff_eq!(s, m.sigma_z(k, l), epsilon = 1e-12);
            }
        }
        assert!(m.min_latent_eigenvalue() >= -1e-10);
    }
}
