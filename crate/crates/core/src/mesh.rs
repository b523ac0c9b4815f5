//! Uniform simulation mesh and grid snapping.

use crate::math::{ceil, powf, round};
use crate::model::{ComponentParams, Horizon};

/// Default ratio between the mesh step and the dense-grid threshold
/// `(2 ln T)^{-1/alpha} C^{-1/alpha}`.
pub const DEFAULT_MESH_FACTOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("mesh needs a positive step and at least two points (h = {h}, n = {n})")]
    Degenerate { h: f64, n: usize },
    #[error("grid spacing {delta} is below half the mesh step {h}")]
    DeltaBelowMesh { delta: f64, h: f64 },
    #[error("mesh for horizon {horizon} with step <= {h_max} needs {points} points, above the limit {limit}")]
    TooLarge { horizon: f64, h_max: f64, points: f64, limit: usize },
}

/// Points `{0, h, ..., (n - 1) h}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub h: f64,
    pub n: usize,
}

impl MeshSpec {
    pub fn new(h: f64, n: usize) -> Result<Self, MeshError> {
        if !(h > 0.0 && h.is_finite()) || n < 2 {
            return Err(MeshError::Degenerate { h, n });
        }
        Ok(Self { h, n })
    }

    /// Finest mesh with step at most `h_max` whose last point is exactly
    /// `horizon` (up to rounding of `h (n - 1)`).
    pub fn covering(horizon: f64, h_max: f64, limit: usize) -> Result<Self, MeshError> {
        if !(horizon > 0.0 && h_max > 0.0) {
            return Err(MeshError::Degenerate { h: h_max, n: 0 });
        }
        let intervals = ceil(horizon / h_max);
        if intervals + 1.0 > limit as f64 {
            return Err(MeshError::TooLarge { horizon, h_max, points: intervals + 1.0, limit });
        }
        let intervals = (intervals as usize).max(1);
        Self::new(horizon / intervals as f64, intervals + 1)
    }

    pub fn horizon(&self) -> f64 {
        self.h * (self.n - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.h * i as f64
    }
}

/// Largest admissible step for "continuous" maxima:
/// `factor * min_k (2 ln T)^{-1/alpha_k} C_k^{-1/alpha_k}`.
pub fn continuous_mesh_step(components: &[ComponentParams], horizon: Horizon, factor: f64) -> f64 {
    components
        .iter()
        .map(|c| factor * powf(2.0 * horizon.log(), -1.0 / c.alpha()) * powf(c.c(), -1.0 / c.alpha()))
        .fold(f64::INFINITY, f64::min)
}

/// A grid spacing rounded to an integer multiple of the mesh step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnappedGrid {
    /// Grid spacing in mesh steps.
    pub stride: usize,
    /// Snapped spacing `stride * h`.
    pub delta: f64,
    /// The spacing that was asked for.
    pub requested: f64,
}

impl SnappedGrid {
    pub fn snap(delta: f64, mesh: &MeshSpec) -> Result<Self, MeshError> {
        let steps = round(delta / mesh.h);
        if !(steps >= 1.0) {
            return Err(MeshError::DeltaBelowMesh { delta, h: mesh.h });
        }
        let stride = steps as usize;
        Ok(Self { stride, delta: stride as f64 * mesh.h, requested: delta })
    }

    /// Signed snapping error `delta - requested`.
    pub fn snap_error(&self) -> f64 {
        self.delta - self.requested
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn covering_mesh_hits_the_horizon() {
        let t = Horizon::from_log(8.0).value();
        let m = MeshSpec::covering(t, 0.05 / 16.0, usize::MAX).unwrap();
        assert!(m.h <= 0.05 / 16.0);
        assert_abs_diff_eq!(m.horizon(), t, epsilon = t * 1e-14);
        assert!(MeshSpec::covering(t, 1e-3, 1000).is_err());
    }

    #[test]
    fn mesh_step_rule() {
        let comps = [ComponentParams::new(1.0, 1.0, 0.0).unwrap(), ComponentParams::new(2.0, 4.0, 0.0).unwrap()];
        let h = continuous_mesh_step(&comps, Horizon::from_log(8.0), 0.05);
        // min(0.05 / 16, 0.05 / 4 / 2)
        assert_abs_diff_eq!(h, 0.05 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn snapping() {
        let mesh = MeshSpec::new(0.1, 101).unwrap();
        let g = SnappedGrid::snap(0.26, &mesh).unwrap();
        assert_eq!(g.stride, 3);
        assert_abs_diff_eq!(g.snap_error(), 0.04, epsilon = 1e-12);
        assert!(matches!(SnappedGrid::snap(0.04, &mesh), Err(MeshError::DeltaBelowMesh { .. })));
        assert!(MeshSpec::new(0.1, 1).is_err());
    }
}
