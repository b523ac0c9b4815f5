//! Monte Carlo estimates of `H_alpha`, `H_(d,alpha)` and
//! `H^{x,y}_(d,alpha)`.
//!
//! All three are expectations of functionals of the maxima of
//! `Y(s) = sqrt(2) B_{alpha/2}(s) - s^alpha` over a window `[0, lambda]`,
//! divided by `lambda`: `exp(M_c)`, `exp(M_g)` and `exp(min(M_c - x, M_g - y))`
//! with `M_c` the continuous maximum and `M_g` the maximum over `dZ`.
//!
//! The default estimator changes measure with the mixture
//! `(1/n) sum_i exp(Y(s_i))` over the `n` mesh points (each `exp(Y(s_i))` has
//! mean one). Under it the location `tau` is uniform on the mesh and the path
//! is `sqrt(2) B(s) + tau^alpha - |s - tau|^alpha`, and every functional `V`
//! is weighted by `n / (lambda sum_i exp(Y(s_i)))`. The weighted terms are
//! bounded, where `exp(M)` itself has a very heavy tail. A plain estimator is
//! kept for comparison. Both read all functionals from the same paths, so
//! inequalities between them hold replication by replication.

use maxdisc_core::extremes::GridIndices;
use maxdisc_core::limits::{HTable, LimitError};
use maxdisc_core::math::log_sum_exp;
use maxdisc_core::seed::{derive_seed, Stream};
use maxdisc_core::stats::{fit_inverse_window, mean_var, StatsError};
use rand::Rng;
use rayon::prelude::*;

use crate::maxima::{path_maxima, ContinuousMax};
use crate::sampler::{rng_for, FbmSampler, SamplerError, Workspace};

/// Coarsest mesh accepted for the fBm paths.
pub const MAX_MESH: f64 = 0.01;
/// Shortest window accepted.
pub const MIN_WINDOW: f64 = 8.0;
/// Default window ladder for the `1 / lambda` extrapolation.
pub const DEFAULT_LAMBDAS: [f64; 3] = [16.0, 32.0, 64.0];
pub const DEFAULT_REPS: usize = 20_000;

/// `H_1 = 1` and `H_2 = 1 / sqrt(pi)`; no closed form is used otherwise.
pub fn known_h_alpha(alpha: f64) -> Option<f64> {
    if alpha == 1.0 {
        Some(1.0)
    } else if alpha == 2.0 {
        Some(1.0 / std::f64::consts::PI.sqrt())
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PickandsError {
    #[error("alpha = {0} is outside (0, 2]")]
    AlphaOutOfRange(f64),
    #[error("grid step d = {0} must be positive and finite")]
    InvalidD(f64),
    #[error("window lambda = {lambda} is shorter than {min}")]
    WindowTooShort { lambda: f64, min: f64 },
    #[error("mesh {mesh} is coarser than the maximum {max}")]
    MeshTooCoarse { mesh: f64, max: f64 },
    #[error("grid step d = {d} is not a multiple of the mesh {mesh}")]
    DNotOnMesh { d: f64, mesh: f64 },
    #[error("need at least one replication")]
    NoReplications,
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Fit(#[from] StatsError),
    #[error(transparent)]
    Table(#[from] LimitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Change of measure to a uniformly placed peak.
    #[default]
    Tilted,
    /// Direct average of the functional.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PickandsOptions {
    /// fBm mesh; defaults to the largest step `<= min(0.01, d/8)` dividing
    /// every requested `d`.
    pub mesh: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub continuous_max: ContinuousMax,
}

impl Default for PickandsOptions {
    fn default() -> Self {
        Self { mesh: None, reps: DEFAULT_REPS, seed: 0, estimator: Estimator::Tilted, continuous_max: ContinuousMax::Bridge }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PickandsEstimate {
    pub value: f64,
    pub stderr: f64,
    pub lambda: f64,
    pub mesh: f64,
    pub reps: usize,
}

/// Per-replication maxima over one window, on shared paths.
#[derive(Debug, Clone)]
pub struct WindowEnsemble {
    pub alpha: f64,
    pub lambda: f64,
    pub mesh: f64,
    /// Grid steps read out, in the order requested.
    pub ds: Vec<f64>,
    m_cont: Vec<f64>,
    /// `m_grid[rep * ds.len() + j]`
    m_grid: Vec<f64>,
    /// Log of the per-replication normaliser; a functional `V` contributes
    /// `V exp(-log_norm)`.
    log_norm: Vec<f64>,
}

fn validate(alpha: f64, lambda: f64, ds: &[f64]) -> Result<(), PickandsError> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(PickandsError::AlphaOutOfRange(alpha));
    }
    if !(lambda >= MIN_WINDOW) {
        return Err(PickandsError::WindowTooShort { lambda, min: MIN_WINDOW });
    }
    if let Some(&d) = ds.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(PickandsError::InvalidD(d));
    }
    Ok(())
}

fn steps(d: f64, mesh: f64) -> Option<usize> {
    let s = (d / mesh).round();
    (s >= 1.0 && (s * mesh - d).abs() <= 1e-9 * d).then_some(s as usize)
}

/// Mesh used for grid steps `ds` (see [`PickandsOptions::mesh`]).
pub fn choose_mesh(ds: &[f64], requested: Option<f64>) -> Result<f64, PickandsError> {
    let mesh = match requested {
        Some(m) => {
            if !(m > 0.0) || m > MAX_MESH * (1.0 + 1e-12) {
                return Err(PickandsError::MeshTooCoarse { mesh: m, max: MAX_MESH });
            }
            m
        }
        None => match ds.iter().copied().reduce(f64::min) {
            Some(dmin) => {
                let target = MAX_MESH.min(dmin / 8.0);
                dmin / (dmin / target).ceil()
            }
            None => MAX_MESH,
        },
    };
    for &d in ds {
        if steps(d, mesh).is_none() {
            return Err(PickandsError::DNotOnMesh { d, mesh });
        }
    }
    Ok(mesh)
}

/// Simulates `opts.reps` windows of length `lambda` and records the
/// continuous maximum and the maximum over each grid in `ds`.
pub fn simulate_window(alpha: f64, ds: &[f64], lambda: f64, opts: &PickandsOptions) -> Result<WindowEnsemble, PickandsError> {
    validate(alpha, lambda, ds)?;
    if opts.reps == 0 {
        return Err(PickandsError::NoReplications);
    }
    let mesh = choose_mesh(ds, opts.mesh)?;
    let n = (lambda / mesh + 1e-9).floor() as usize + 1;
    let strides: Vec<usize> = ds.iter().map(|&d| steps(d, mesh).expect("checked")).collect();
    let fbm = FbmSampler::new(alpha / 2.0, mesh, n)?;
    let drift: Vec<f64> = (0..n).map(|i| (i as f64 * mesh).powf(alpha)).collect();
    let bridge = opts.continuous_max.refines(alpha).then_some(2.0 * mesh);
    let log_window = lambda.ln();
    let log_ratio = (n as f64 / lambda).ln();

    let rows: Vec<(f64, Vec<f64>, f64)> = (0..opts.reps as u64)
        .into_par_iter()
        .map_init(
            || (Workspace::default(), vec![0.0; n]),
            |(ws, y), rep| {
                let mut rng = rng_for(derive_seed(opts.seed, rep, Stream::Path(0)));
                fbm.sample_into(&mut rng, ws, y);
                let sqrt2 = std::f64::consts::SQRT_2;
                let log_norm = match opts.estimator {
                    Estimator::Plain => {
                        for (v, s) in y.iter_mut().zip(&drift) {
                            *v = sqrt2 * *v - s;
                        }
                        log_window
                    }
                    Estimator::Tilted => {
                        let mut aux = rng_for(derive_seed(opts.seed, rep, Stream::Aux(0)));
                        let tau = aux.random_range(0..n);
                        let shift = drift[tau];
                        for (i, v) in y.iter_mut().enumerate() {
                            *v = sqrt2 * *v + shift - drift[i.abs_diff(tau)];
                        }
                        log_sum_exp(y) - log_ratio
                    }
                };
                let mut brng = rng_for(derive_seed(opts.seed, rep, Stream::Bridge(0)));
                let full = GridIndices { stride: 1, n };
                let m_cont = path_maxima(y, full, bridge, &mut brng).m_cont;
                let grids = strides
                    .iter()
                    .map(|&s| y.iter().step_by(s).copied().fold(f64::NEG_INFINITY, f64::max))
                    .collect();
                (m_cont, grids, log_norm)
            },
        )
        .collect();

    let mut m_cont = Vec::with_capacity(rows.len());
    let mut m_grid = Vec::with_capacity(rows.len() * ds.len());
    let mut log_norm = Vec::with_capacity(rows.len());
    for (c, g, l) in rows {
        m_cont.push(c);
        m_grid.extend(g);
        log_norm.push(l);
    }
    Ok(WindowEnsemble { alpha, lambda, mesh, ds: ds.to_vec(), m_cont, m_grid, log_norm })
}

impl WindowEnsemble {
    pub fn reps(&self) -> usize {
        self.m_cont.len()
    }

    pub fn m_cont(&self, rep: usize) -> f64 {
        self.m_cont[rep]
    }

    pub fn m_grid(&self, rep: usize, j: usize) -> f64 {
        self.m_grid[rep * self.ds.len() + j]
    }

    /// Per-replication term of `H_alpha`.
    pub fn h_alpha_term(&self, rep: usize) -> f64 {
        (self.m_cont[rep] - self.log_norm[rep]).exp()
    }

    /// Per-replication term of `H_(d_j, alpha)`.
    pub fn h_d_term(&self, rep: usize, j: usize) -> f64 {
        (self.m_grid(rep, j) - self.log_norm[rep]).exp()
    }

    /// Per-replication term of `H^{x,y}_(d_j, alpha)`.
    pub fn h_xy_term(&self, rep: usize, j: usize, x: f64, y: f64) -> f64 {
        ((self.m_cont[rep] - x).min(self.m_grid(rep, j) - y) - self.log_norm[rep]).exp()
    }

    fn estimate(&self, term: impl Fn(usize) -> f64) -> PickandsEstimate {
        let terms: Vec<f64> = (0..self.reps()).map(term).collect();
        let (mean, var) = mean_var(&terms);
        let stderr = if terms.len() >= 2 { (var / terms.len() as f64).sqrt() } else { f64::NAN };
        PickandsEstimate { value: mean, stderr, lambda: self.lambda, mesh: self.mesh, reps: self.reps() }
    }

    pub fn h_alpha(&self) -> PickandsEstimate {
        self.estimate(|r| self.h_alpha_term(r))
    }

    pub fn h_d_alpha(&self, j: usize) -> PickandsEstimate {
        self.estimate(|r| self.h_d_term(r, j))
    }

    pub fn h_xy(&self, j: usize, x: f64, y: f64) -> PickandsEstimate {
        self.estimate(|r| self.h_xy_term(r, j, x, y))
    }
}

/// `E[exp(max_{[0, lambda]} Y)] / lambda`.
pub fn estimate_h_alpha(alpha: f64, lambda: f64, opts: &PickandsOptions) -> Result<PickandsEstimate, PickandsError> {
    Ok(simulate_window(alpha, &[], lambda, opts)?.h_alpha())
}

/// `E[exp(max_{kd in [0, lambda]} Y(kd))] / lambda`.
pub fn estimate_h_d_alpha(alpha: f64, d: f64, lambda: f64, opts: &PickandsOptions) -> Result<PickandsEstimate, PickandsError> {
    Ok(simulate_window(alpha, &[d], lambda, opts)?.h_d_alpha(0))
}

/// `H^{x,y}_(d,alpha)(lambda) / lambda`, through the path-wise identity
/// `int e^s 1{M_c > s + x, M_g > s + y} ds = exp(min(M_c - x, M_g - y))`.
pub fn estimate_h_xy(
    alpha: f64,
    d: f64,
    x: f64,
    y: f64,
    lambda: f64,
    opts: &PickandsOptions,
) -> Result<PickandsEstimate, PickandsError> {
    Ok(simulate_window(alpha, &[d], lambda, opts)?.h_xy(0, x, y))
}

/// Lattice `lo, lo + pitch, ..., hi`.
pub fn lattice_axis(lo: f64, hi: f64, pitch: f64) -> Vec<f64> {
    let count = ((hi - lo) / pitch + 1e-9).floor() as usize + 1;
    (0..count).map(|i| lo + i as f64 * pitch).collect()
}

/// Default table lattice: `[-3, 5]` at pitch `0.25`.
pub fn default_table_axis() -> Vec<f64> {
    lattice_axis(-3.0, 5.0, 0.25)
}

/// `H^{x,y}_(d_j,alpha)` on `xs x ys` from one ensemble. The table's outside
/// bound uses the same ensemble's `H_alpha` and `H_(d,alpha)`.
pub fn table_from_ensemble(ens: &WindowEnsemble, j: usize, xs: &[f64], ys: &[f64]) -> Result<HTable, PickandsError> {
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    let mut stderr = Vec::with_capacity(values.capacity());
    for &x in xs {
        for &y in ys {
            let e = ens.h_xy(j, x, y);
            values.push(e.value);
            stderr.push(e.stderr);
        }
    }
    Ok(HTable::new(xs.to_vec(), ys.to_vec(), values, stderr, ens.h_alpha().value, ens.h_d_alpha(j).value)?)
}

/// `H^{x,y}_(d,alpha)(lambda) / lambda` on a lattice, all cells read from one
/// shared ensemble.
pub fn build_h_table(
    alpha: f64,
    d: f64,
    xs: &[f64],
    ys: &[f64],
    lambda: f64,
    opts: &PickandsOptions,
) -> Result<HTable, PickandsError> {
    let ens = simulate_window(alpha, &[d], lambda, opts)?;
    table_from_ensemble(&ens, 0, xs, ys)
}

/// Intercept of `value = H - c / lambda` over a window ladder.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Extrapolation {
    pub value: f64,
    pub stderr: f64,
    /// Fitted `c`.
    pub slope: f64,
    /// Largest fit residual in units of the point's standard error.
    pub max_residual_ratio: f64,
    /// Whether every residual is below two standard errors.
    pub residual_ok: bool,
    pub points: Vec<PickandsEstimate>,
}

pub fn extrapolate(points: &[PickandsEstimate]) -> Result<Extrapolation, PickandsError> {
    let lambdas: Vec<f64> = points.iter().map(|p| p.lambda).collect();
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    let stderrs: Vec<f64> = points.iter().map(|p| p.stderr).collect();
    let fit = fit_inverse_window(&lambdas, &values, &stderrs)?;
    Ok(Extrapolation {
        value: fit.intercept,
        stderr: fit.intercept_stderr,
        slope: fit.slope,
        max_residual_ratio: fit.max_residual_ratio,
        residual_ok: fit.max_residual_ratio < 2.0,
        points: points.to_vec(),
    })
}

/// Seed of the ensemble at ladder position `i`.
pub fn ladder_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, i as u64, Stream::Aux(1))
}

/// Constants for one component of a Pickands-grid experiment.
#[derive(Debug, Clone)]
pub struct ConstantsBuild {
    pub d: f64,
    pub h_alpha: Extrapolation,
    pub h_d_alpha: Extrapolation,
    /// Joint table at the largest window of the ladder.
    pub table: HTable,
}

/// `H_alpha`, `H_(d,alpha)` extrapolated over `lambdas` and the joint table
/// at the largest window. Each window uses its own seed.
pub fn build_constants(
    alpha: f64,
    d: f64,
    lambdas: &[f64],
    xs: &[f64],
    ys: &[f64],
    opts: &PickandsOptions,
) -> Result<ConstantsBuild, PickandsError> {
    if lambdas.is_empty() {
        return Err(PickandsError::NoReplications);
    }
    let mut ha = Vec::new();
    let mut hd = Vec::new();
    let mut table = None;
    let top = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (i, &lambda) in lambdas.iter().enumerate() {
        let o = PickandsOptions { seed: ladder_seed(opts.seed, i), ..*opts };
        let ens = simulate_window(alpha, &[d], lambda, &o)?;
        ha.push(ens.h_alpha());
        hd.push(ens.h_d_alpha(0));
        if lambda == top && table.is_none() {
            table = Some(table_from_ensemble(&ens, 0, xs, ys)?);
        }
    }
    let extrap = |pts: &[PickandsEstimate]| -> Result<Extrapolation, PickandsError> {
        if pts.len() >= 2 {
            extrapolate(pts)
        } else {
            let p = pts[0];
            Ok(Extrapolation { value: p.value, stderr: p.stderr, slope: 0.0, max_residual_ratio: 0.0, residual_ok: true, points: pts.to_vec() })
        }
    };
    Ok(ConstantsBuild {
        d,
        h_alpha: extrap(&ha)?,
        h_d_alpha: extrap(&hd)?,
        table: table.ok_or(PickandsError::NoReplications)?,
    })
}
