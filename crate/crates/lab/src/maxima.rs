//! Continuous and grid maxima of one sampled path.

use maxdisc_core::extremes::{bridge_refined_max, joint_maxima, GridIndices, RawMaxima};
use rand::Rng;
use rand_distr::Exp1;

/// How the continuous maximum is read off a mesh path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousMax {
    /// Mesh maximum refined by the exact Brownian-bridge law between mesh
    /// points where the process is locally Brownian (`alpha = 1`); plain
    /// mesh maximum elsewhere.
    #[default]
    Bridge,
    /// Maximum over mesh points only.
    Mesh,
}

impl ContinuousMax {
    /// Whether a component with exponent `alpha` gets bridge refinement.
    pub fn refines(self, alpha: f64) -> bool {
        self == ContinuousMax::Bridge && alpha == 1.0
    }
}

/// Joint maxima of `path` on the mesh and on `grid`. With `bridge_variance`
/// set, the continuous maximum is bridge-refined with that increment
/// variance per mesh step, drawing from `rng`.
pub fn path_maxima(path: &[f64], grid: GridIndices, bridge_variance: Option<f64>, rng: &mut impl Rng) -> RawMaxima {
    let raw = joint_maxima(path, grid);
    match bridge_variance {
        Some(v) => RawMaxima {
            m_cont: bridge_refined_max(path, v, raw.m_cont, || rng.sample::<f64, _>(Exp1)),
            m_grid: raw.m_grid,
        },
        None => raw,
    }
}
