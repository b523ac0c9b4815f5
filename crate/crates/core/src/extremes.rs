//! Grid read-outs, joint maxima and normalising constants.

use crate::grid::Regime;
use crate::math::{ln, powf, sqrt, INV_SQRT_2PI};
use crate::mesh::{MeshError, MeshSpec, SnappedGrid};
use crate::model::{ComponentParams, Horizon, MIN_LOG_HORIZON};

/// A bridge interval whose endpoints both sit more than
/// `sqrt(BRIDGE_CUTOFF * v)` below the mesh maximum (with `v` the increment
/// variance over one step) exceeds it with probability below `exp(-2 * 20)`;
/// such intervals are skipped.
pub const BRIDGE_CUTOFF: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtremesError {
    #[error("horizon too small: ln T = {0} must exceed 2")]
    HorizonTooSmall(f64),
    #[error("the Pickands regime needs the grid constant H_(d,alpha)")]
    MissingConstant,
    #[error("constant {name} = {value} must be positive and finite")]
    InvalidConstant { name: &'static str, value: f64 },
    #[error("constants were built for the {built} regime, not {requested}")]
    RegimeMismatch { built: &'static str, requested: &'static str },
}

/// `a_T` and the centerings of one component at one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationConstants {
    pub a_t: f64,
    /// Centering of the continuous maximum.
    pub b_t: f64,
    /// Sparse-grid centering for the grid spacing the constants were built with.
    pub b_t_delta: f64,
    /// Pickands-grid centering, present when `H_(d,alpha)` was supplied.
    pub b_dt: Option<f64>,
    pub regime: Regime,
}

impl NormalizationConstants {
    /// Centering of the grid maximum for the regime: `b_T^delta`, `b_(d,T)`
    /// or `b_T`.
    pub fn grid_centering(&self) -> f64 {
        match self.regime {
            Regime::Sparse => self.b_t_delta,
            Regime::Pickands { .. } => self.b_dt.expect("validated at construction"),
            Regime::Dense => self.b_t,
        }
    }
}

/// Normalising constants for component `comp` with grid spacing `delta`.
///
/// `b_(d,T) = a_T + a_T^{-1} ln((2 pi)^{-1/2} C^{1/alpha} H_(d,alpha) a_T^{-1+2/alpha})`,
/// i.e. the continuous-maximum centering with `H_alpha` replaced by the grid
/// constant.
pub fn normalizers(
    horizon: Horizon,
    comp: &ComponentParams,
    delta: f64,
    regime: Regime,
    h_alpha: f64,
    h_d_alpha: Option<f64>,
) -> Result<NormalizationConstants, ExtremesError> {
    if !(horizon.log() > MIN_LOG_HORIZON) {
        return Err(ExtremesError::HorizonTooSmall(horizon.log()));
    }
    check_positive("H_alpha", h_alpha)?;
    check_positive("delta", delta)?;
    let a = horizon.a_t();
    let alpha = comp.alpha();
    let pickands_scale = powf(comp.c(), 1.0 / alpha) * powf(a, -1.0 + 2.0 / alpha);
    let centering = |level: f64| a + ln(INV_SQRT_2PI * level) / a;

    let b_t = centering(pickands_scale * h_alpha);
    let b_t_delta = centering(1.0 / (delta * a));
    let b_dt = match h_d_alpha {
        Some(h) => {
            check_positive("H_(d,alpha)", h)?;
            Some(centering(pickands_scale * h))
        }
        None => None,
    };
    if matches!(regime, Regime::Pickands { .. }) && b_dt.is_none() {
        return Err(ExtremesError::MissingConstant);
    }
    Ok(NormalizationConstants { a_t: a, b_t, b_t_delta, b_dt, regime })
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ExtremesError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ExtremesError::InvalidConstant { name, value })
    }
}

/// Mesh indices `{0, m, 2m, ...}` not beyond the last mesh point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridIndices {
    pub stride: usize,
    pub n: usize,
}

impl GridIndices {
    pub fn iter(&self) -> impl Iterator<Item = usize> {
        (0..self.n).step_by(self.stride)
    }

    pub fn len(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            (self.n - 1) / self.stride + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Snaps `delta` onto the mesh and returns the grid it selects.
pub fn grid_points(delta: f64, mesh: &MeshSpec) -> Result<GridIndices, MeshError> {
    let snapped = SnappedGrid::snap(delta, mesh)?;
    Ok(GridIndices { stride: snapped.stride, n: mesh.n })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawMaxima {
    /// Maximum over every mesh point (or its bridge refinement).
    pub m_cont: f64,
    /// Maximum over the grid points.
    pub m_grid: f64,
}

/// Maximum over the whole path and over the grid in a single pass.
pub fn joint_maxima(path: &[f64], grid: GridIndices) -> RawMaxima {
    debug_assert_eq!(path.len(), grid.n);
    debug_assert!(grid.stride >= 1 && !path.is_empty());
    let mut m_cont = f64::NEG_INFINITY;
    let mut m_grid = f64::NEG_INFINITY;
    for block in path.chunks(grid.stride) {
        m_grid = m_grid.max(block[0]);
        for &v in block {
            m_cont = m_cont.max(v);
        }
    }
    RawMaxima { m_cont, m_grid }
}

/// Continuous-time maximum of a path known at mesh points, assuming
/// Brownian-bridge behaviour between neighbouring points with increment
/// variance `step_variance` per mesh step.
///
/// The bridge from `a` to `b` exceeds `m >= max(a, b)` with probability
/// `exp(-2 (m - a)(m - b) / v)`, so given `E ~ Exp(1)` its maximum is
/// `(a + b) / 2 + sqrt(((a - b) / 2)^2 + v E / 2)`. `exp_draw` is called once
/// per examined interval, in index order.
pub fn bridge_refined_max(
    path: &[f64],
    step_variance: f64,
    mesh_max: f64,
    mut exp_draw: impl FnMut() -> f64,
) -> f64 {
    let cutoff = mesh_max - sqrt(BRIDGE_CUTOFF * step_variance);
    let mut best = mesh_max;
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.max(b) <= cutoff {
            continue;
        }
        let half_gap = 0.5 * (a - b);
        let top = 0.5 * (a + b) + sqrt(half_gap * half_gap + 0.5 * step_variance * exp_draw());
        best = best.max(top);
    }
    best
}

/// One component of one replication, raw and normalised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxSample {
    pub m_cont: f64,
    pub m_grid: f64,
    /// `a_T (m_cont - b_T)`
    pub x_hat: f64,
    /// `a_T (m_grid - b'_T)` with the regime's grid centering.
    pub y_hat: f64,
}

pub fn normalize_maxima(
    raw: RawMaxima,
    constants: &NormalizationConstants,
    regime: Regime,
) -> Result<MaxSample, ExtremesError> {
    if !constants.regime.same_kind(&regime) {
        return Err(ExtremesError::RegimeMismatch {
            built: constants.regime.name(),
            requested: regime.name(),
        });
    }
    let a = constants.a_t;
    Ok(MaxSample {
        m_cont: raw.m_cont,
        m_grid: raw.m_grid,
        x_hat: a * (raw.m_cont - constants.b_t),
        y_hat: a * (raw.m_grid - constants.grid_centering()),
    })
}
