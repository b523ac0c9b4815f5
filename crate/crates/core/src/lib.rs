//! Numerical core for studying joint maxima of stationary Gaussian vector
//! processes observed continuously and on a uniform grid.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches random
//! number generation, FFTs, threads or files lives in the companion `maxdisc`
//! crate; this one holds the model algebra, grid regimes, normalising
//! constants, maxima extraction, the limiting distribution functions and the
//! small amount of statistics needed to compare the two.
//!
//! The simulation model is a triangular array: for a horizon `T` each
//! component is
//!
//! ```text
//! X_k(t) = sqrt(1 - rho_kk(T)) * eta_k(t) + sqrt(rho_kk(T)) * Z_k,   rho_kl(T) = r_kl / ln T
//! ```
//!
//! with `eta_k` independent standard stationary processes with correlation
//! `exp(-C_k |t|^alpha_k)` and `Z` a latent Gaussian vector with
//! `Cov(Z_k, Z_l) = r_kl / sqrt(r_kk r_ll)`. Correlations therefore depend on
//! `T`, which is what realises `r_kl(T) ln T -> r_kl` at every finite horizon.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod extremes;
pub mod grid;
pub mod limits;
pub mod math;
pub mod mesh;
pub mod model;
pub mod quadrature;
pub mod seed;
pub mod stats;

pub use extremes::{
    grid_points, joint_maxima, normalize_maxima, normalizers, ExtremesError, GridIndices,
    MaxSample, NormalizationConstants, RawMaxima,
};
pub use grid::{classify_grid, GridError, GridRule, GridSpec, Regime};
pub use limits::{
    f_exponent, g_exponent, h_exponent, limit_cdf, HTable, JointConstant, LimitError, LimitRegime,
    LimitSpec, LimitValue, PickandsConstants,
};
pub use mesh::{MeshError, MeshSpec, SnappedGrid};
pub use model::{ComponentParams, Horizon, LatentFactor, ModelError, VectorCorrelationModel};
pub use quadrature::Integrator;
