//! Replication batches, empirical joint distribution functions and their
//! comparison with the limit laws.

use maxdisc_core::extremes::{normalize_maxima, normalizers, ExtremesError, GridIndices, MaxSample, NormalizationConstants, RawMaxima};
use maxdisc_core::grid::Regime;
use maxdisc_core::limits::{limit_cdf, LimitError, LimitRegime, LimitSpec, PickandsConstants};
use maxdisc_core::mesh::{continuous_mesh_step, MeshError, MeshSpec, SnappedGrid};
use maxdisc_core::model::{Horizon, ModelError, VectorCorrelationModel};
use maxdisc_core::seed::{derive_seed, Stream};
use maxdisc_core::stats::{binomial_stderr, correlation, empirical_cdf, mean_var, LatticePoint, StatsError};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CenteringFault, ConfigError, ExperimentConfig, GridConfig};
use crate::maxima::path_maxima;
use crate::pickands::{build_constants, known_h_alpha, lattice_axis, ConstantsBuild, Extrapolation, PickandsError, PickandsOptions};
use crate::sampler::{rng_for, SamplerError, VectorSampler, Workspace};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "MAXDISC_WORKERS";

/// Shortest `ln T` ladder a sweep accepts.
pub const MIN_LADDER: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Extremes(#[from] ExtremesError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Pickands(#[from] PickandsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("grid is {found} but the {expected} law was requested")]
    RegimeMismatch { expected: &'static str, found: &'static str },
    #[error("components fall into different grid regimes")]
    MixedRegimes,
    #[error("convergence sweep needs at least {MIN_LADDER} horizons, got {0}")]
    LadderTooShort(usize),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl VerifyError {
    /// Whether the failure is a problem with the inputs rather than the run.
    pub fn is_validation(&self) -> bool {
        match self {
            VerifyError::Config(_)
            | VerifyError::Model(_)
            | VerifyError::RegimeMismatch { .. }
            | VerifyError::MixedRegimes
            | VerifyError::LadderTooShort(_) => true,
            VerifyError::Mesh(e) => matches!(e, MeshError::DeltaBelowMesh { .. } | MeshError::TooLarge { .. }),
            VerifyError::Extremes(e) => matches!(e, ExtremesError::HorizonTooSmall(_) | ExtremesError::InvalidConstant { .. }),
            VerifyError::Limit(e) => matches!(e, LimitError::DimensionMismatch { .. } | LimitError::InvalidD(_)),
            _ => false,
        }
    }
}

/// Which limit law a run is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Sparse,
    Pickands,
    Dense,
    /// Law of the continuous maxima alone; `y` is ignored.
    Corollary,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Sparse => "sparse",
            Target::Pickands => "pickands",
            Target::Dense => "dense",
            Target::Corollary => "corollary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sparse" => Target::Sparse,
            "pickands" => Target::Pickands,
            "dense" => Target::Dense,
            "corollary" => Target::Corollary,
            _ => return None,
        })
    }

    /// Grid used when the config has none.
    pub fn default_grid(self) -> GridConfig {
        match self {
            Target::Sparse => GridConfig::Sparse,
            Target::Pickands => GridConfig::Pickands { d: 1.0 },
            Target::Dense | Target::Corollary => GridConfig::Dense,
        }
    }
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, VerifyError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| VerifyError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Grid, constants and bookkeeping of one component.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentSetup {
    pub alpha: f64,
    pub c: f64,
    pub r_diag: f64,
    pub delta_requested: f64,
    pub delta: f64,
    pub snap_error: f64,
    pub stride: usize,
    pub grid_points: usize,
    /// Grid step in local units, `delta (2 ln T)^{1/alpha} C^{1/alpha}`.
    pub d_effective: f64,
    pub a_t: f64,
    pub b_t: f64,
    pub grid_centering: f64,
    pub h_alpha: f64,
    pub h_d_alpha: Option<f64>,
    pub bridge: bool,
    #[serde(skip)]
    pub constants: NormalizationConstants,
    #[serde(skip)]
    pub grid: GridIndices,
    #[serde(skip)]
    pub bridge_variance: Option<f64>,
}

/// Estimated constants of one component, for the report.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsDiagnostics {
    pub component: usize,
    pub d: f64,
    pub h_alpha: Option<Extrapolation>,
    pub h_d_alpha: Option<Extrapolation>,
}

/// Everything needed to simulate and evaluate one configuration at one
/// horizon.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub target: Target,
    pub horizon: Horizon,
    pub regime: Regime,
    pub mesh: MeshSpec,
    pub components: Vec<ComponentSetup>,
    pub constants_diagnostics: Vec<ConstantsDiagnostics>,
    pub model: VectorCorrelationModel,
    sampler: VectorSampler,
    limit: LimitSpec,
}

fn pickands_seed(config: &ExperimentConfig, k: usize) -> u64 {
    config.constants.seed.unwrap_or_else(|| derive_seed(config.seed, u64::MAX, Stream::Aux(16 + k as u64)))
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig, log_horizon: f64, target: Target) -> Result<Self, VerifyError> {
        config.validate()?;
        let model = config.model()?;
        let horizon = Horizon::from_log(log_horizon);
        model.check_horizon(horizon)?;

        let grids = config.grids(&target.default_grid())?;
        let regime = grids[0].regime;
        if grids.iter().any(|g| !g.regime.same_kind(&regime)) {
            return Err(VerifyError::MixedRegimes);
        }
        let expected = match target {
            Target::Sparse => Some(Regime::Sparse),
            Target::Pickands => Some(Regime::Pickands { d: 1.0 }),
            Target::Dense => Some(Regime::Dense),
            Target::Corollary => None,
        };
        if let Some(e) = expected {
            if !e.same_kind(&regime) {
                return Err(VerifyError::RegimeMismatch { expected: target.name(), found: regime.name() });
            }
        }

        let h_max = continuous_mesh_step(model.components(), horizon, config.mesh_factor);
        let mesh = MeshSpec::covering(horizon.value(), h_max, config.max_mesh_points)?;
        let two_log = 2.0 * log_horizon;
        let table_axis = {
            let [lo, hi, pitch] = config.constants.table_range;
            lattice_axis(lo, hi, pitch)
        };

        let mut components = Vec::with_capacity(model.p());
        let mut pickands = Vec::new();
        let mut constants_diagnostics = Vec::new();
        for (k, spec) in grids.iter().enumerate() {
            let comp = *model.component(k)?;
            let (alpha, c) = (comp.alpha(), comp.c());
            let requested = spec.delta(log_horizon);
            let snapped = SnappedGrid::snap(requested, &mesh)?;
            let d_effective = snapped.delta * two_log.powf(1.0 / alpha) * c.powf(1.0 / alpha);
            let opts = PickandsOptions {
                mesh: config.constants.mesh,
                reps: config.constants.reps,
                seed: pickands_seed(config, k),
                estimator: config.constants.estimator,
                continuous_max: config.continuous_max,
            };

            let supplied = config.constants.h_alpha.as_ref().and_then(|v| v.get(k).copied());
            let mut diag = ConstantsDiagnostics { component: k, d: d_effective, h_alpha: None, h_d_alpha: None };
            let mut build: Option<ConstantsBuild> = None;
            if matches!(regime, Regime::Pickands { .. }) {
                let b = build_constants(alpha, d_effective, &config.constants.lambdas, &table_axis, &table_axis, &opts)?;
                diag.h_alpha = Some(b.h_alpha.clone());
                diag.h_d_alpha = Some(b.h_d_alpha.clone());
                build = Some(b);
            }
            let h_alpha = match (supplied, known_h_alpha(alpha), &build) {
                (Some(h), _, _) | (None, Some(h), _) => h,
                (None, None, Some(b)) => b.h_alpha.value,
                (None, None, None) => {
                    let b = build_constants(alpha, 1.0, &config.constants.lambdas, &[0.0, 1.0], &[0.0, 1.0], &opts)?;
                    diag.h_alpha = Some(b.h_alpha.clone());
                    b.h_alpha.value
                }
            };
            let h_d_alpha = match &build {
                Some(b) => Some(
                    config.constants.h_d_alpha.as_ref().and_then(|v| v.get(k).copied()).unwrap_or(b.h_d_alpha.value),
                ),
                None => None,
            };
            if diag.h_alpha.is_some() {
                constants_diagnostics.push(diag);
            }
            if let Some(b) = build {
                pickands.push(PickandsConstants { h_alpha, h_d_alpha: h_d_alpha.expect("built"), joint: b.table });
            }

            let mut constants = normalizers(horizon, &comp, snapped.delta, regime, h_alpha, h_d_alpha)?;
            if config.centering_fault == CenteringFault::BtIsAt {
                constants.b_t = constants.a_t;
            }
            let bridge_variance = config.continuous_max.refines(alpha).then_some(2.0 * c * mesh.h);
            let grid = GridIndices { stride: snapped.stride, n: mesh.n };
            components.push(ComponentSetup {
                alpha,
                c,
                r_diag: comp.r_diag(),
                delta_requested: requested,
                delta: snapped.delta,
                snap_error: snapped.snap_error(),
                stride: snapped.stride,
                grid_points: grid.len(),
                d_effective,
                a_t: constants.a_t,
                b_t: constants.b_t,
                grid_centering: constants.grid_centering(),
                h_alpha,
                h_d_alpha,
                bridge: bridge_variance.is_some(),
                constants,
                grid,
                bridge_variance,
            });
        }

        let limit_regime = match (target, regime) {
            (Target::Corollary, _) => LimitRegime::CorollaryMarginal,
            (_, Regime::Sparse) => LimitRegime::Sparse,
            (_, Regime::Dense) => LimitRegime::Dense,
            (_, Regime::Pickands { d }) => LimitRegime::Pickands { d },
        };
        let limit = LimitSpec::new(&model, limit_regime, (!pickands.is_empty()).then_some(pickands))?;
        let sampler = VectorSampler::new(&model, horizon, mesh, config.sampler)?;
        Ok(Self {
            config: config.clone(),
            target,
            horizon,
            regime,
            mesh,
            components,
            constants_diagnostics,
            model,
            sampler,
            limit,
        })
    }

    pub fn limit(&self) -> &LimitSpec {
        &self.limit
    }

    pub fn sampler(&self) -> &VectorSampler {
        &self.sampler
    }

    /// Normalised maxima of replication `rep`; `buf` must hold a mesh path.
    pub fn replicate(&self, rep: u64, ws: &mut Workspace, buf: &mut [f64]) -> Vec<MaxSample> {
        let seed = self.config.seed;
        let z = self.sampler.latent(seed, rep);
        self.components
            .iter()
            .enumerate()
            .map(|(k, setup)| {
                self.sampler.eta_into(seed, rep, k, ws, buf);
                let mut rng = rng_for(derive_seed(seed, rep, Stream::Bridge(k)));
                let eta = path_maxima(buf, setup.grid, setup.bridge_variance, &mut rng);
                let (a, b) = self.sampler.weights(k);
                let shift = b * z[k];
                let raw = RawMaxima { m_cont: a * eta.m_cont + shift, m_grid: a * eta.m_grid + shift };
                normalize_maxima(raw, &setup.constants, self.regime).expect("regime checked at construction")
            })
            .collect()
    }

    /// All replications in index order, on the current rayon pool.
    pub fn simulate(&self) -> Vec<Vec<MaxSample>> {
        let n = self.mesh.n;
        (0..self.config.replications as u64)
            .into_par_iter()
            .map_init(|| (Workspace::default(), vec![0.0; n]), |(ws, buf), rep| self.replicate(rep, ws, buf))
            .collect()
    }

    pub fn lattice(&self) -> Result<Vec<LatticePoint>, VerifyError> {
        let mut points = self.config.lattice.points(self.model.p())?;
        if self.target == Target::Corollary {
            // only x matters; keep one point per distinct x
            for p in points.iter_mut() {
                p.y.iter_mut().for_each(|v| *v = f64::INFINITY);
            }
            points.dedup_by(|a, b| a.x == b.x);
            let mut seen: Vec<Vec<f64>> = Vec::new();
            points.retain(|p| {
                if seen.contains(&p.x) {
                    false
                } else {
                    seen.push(p.x.clone());
                    true
                }
            });
        }
        Ok(points)
    }

    /// Compares `samples` with the limit law on the configured lattice.
    pub fn evaluate(&self, samples: &[Vec<MaxSample>]) -> Result<ExperimentReport, VerifyError> {
        let lattice = self.lattice()?;
        let empirical = empirical_cdf(samples, &lattice)?;
        let n = samples.len();
        let integrator = self.config.integrator.integrator();
        let mut points = Vec::with_capacity(lattice.len());
        for (pt, emp) in lattice.iter().zip(&empirical) {
            let theory = limit_cdf(&self.limit, &pt.x, &pt.y, integrator)?;
            let theo_se = (binomial_stderr(theory.value, n).powi(2) + theory.error.powi(2)).sqrt();
            let diff = emp.value - theory.value;
            let z = if theo_se > 0.0 { diff / theo_se } else if diff == 0.0 { 0.0 } else { diff.signum() * f64::MAX };
            let tolerance = self.config.sigmas * theo_se + self.config.allowance;
            points.push(PointResult {
                x: pt.x.clone(),
                y: pt.y.clone(),
                empirical: emp.value,
                stderr: emp.stderr,
                theoretical: theory.value,
                theoretical_error: theory.error,
                z,
                within_tolerance: diff.abs() <= tolerance,
            });
        }

        let (sup_index, sup_distance) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p.empirical - p.theoretical).abs()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let worst_z = points.iter().map(|p| p.z).fold(0.0, |a: f64, z| if z.abs() > a.abs() { z } else { a });
        let sup_stderr = points.get(sup_index).map_or(0.0, |p| binomial_stderr(p.theoretical, n));
        let verdict = if points.iter().all(|p| p.within_tolerance) { Verdict::Pass } else { Verdict::Fail };

        let components = (0..self.model.p())
            .map(|k| component_statistics(samples, k, &self.components[k]))
            .collect();
        Ok(ExperimentReport {
            target: self.target.name(),
            regime: self.regime.name(),
            log_horizon: self.horizon.log(),
            replications: n,
            seed: self.config.seed,
            config_hash: self.config.hash(),
            mesh_h: self.mesh.h,
            mesh_n: self.mesh.n,
            allowance: self.config.allowance,
            sigmas: self.config.sigmas,
            sup_distance,
            sup_index,
            sup_stderr,
            worst_z,
            verdict,
            points,
            components,
            constants: self.constants_diagnostics.clone(),
        })
    }
}

fn component_statistics(samples: &[Vec<MaxSample>], k: usize, setup: &ComponentSetup) -> ComponentReport {
    let xs: Vec<f64> = samples.iter().map(|s| s[k].x_hat).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s[k].y_hat).collect();
    let n = samples.len() as f64;
    let (mean_x, var_x) = mean_var(&xs);
    let (mean_y, var_y) = mean_var(&ys);
    ComponentReport {
        setup: setup.clone(),
        mean_x_hat: mean_x,
        var_x_hat: var_x,
        mean_y_hat: mean_y,
        var_y_hat: var_y,
        corr_xy: correlation(&xs, &ys),
        mean_abs_gap: xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).sum::<f64>() / n,
        fraction_equal: xs.iter().zip(&ys).filter(|(x, y)| x == y).count() as f64 / n,
        grid_above_continuous: samples.iter().filter(|s| s[k].m_grid > s[k].m_cont).count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.passed() { "PASS" } else { "FAIL" })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub empirical: f64,
    pub stderr: f64,
    pub theoretical: f64,
    pub theoretical_error: f64,
    /// `(empirical - theoretical)` over the binomial standard error at the
    /// theoretical value combined with the integration error.
    pub z: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    #[serde(flatten)]
    pub setup: ComponentSetup,
    pub mean_x_hat: f64,
    pub var_x_hat: f64,
    pub mean_y_hat: f64,
    pub var_y_hat: f64,
    pub corr_xy: f64,
    pub mean_abs_gap: f64,
    pub fraction_equal: f64,
    /// Replications with the grid maximum above the continuous one; always
    /// zero.
    pub grid_above_continuous: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub target: &'static str,
    pub regime: &'static str,
    pub log_horizon: f64,
    pub replications: usize,
    pub seed: u64,
    pub config_hash: String,
    pub mesh_h: f64,
    pub mesh_n: usize,
    pub allowance: f64,
    pub sigmas: f64,
    pub sup_distance: f64,
    pub sup_index: usize,
    /// Binomial standard error at the point of the sup-distance.
    pub sup_stderr: f64,
    pub worst_z: f64,
    pub verdict: Verdict,
    pub points: Vec<PointResult>,
    pub components: Vec<ComponentReport>,
    pub constants: Vec<ConstantsDiagnostics>,
}

/// Report plus the per-replication records it was computed from.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub samples: Vec<Vec<MaxSample>>,
}

/// Simulates and evaluates `config` at `ln T = log_horizon` on `workers`
/// threads. The result does not depend on `workers`.
pub fn run_at(config: &ExperimentConfig, log_horizon: f64, target: Target, workers: usize) -> Result<ExperimentOutcome, VerifyError> {
    with_workers(workers, || {
        let exp = Experiment::prepare(config, log_horizon, target)?;
        let samples = exp.simulate();
        let report = exp.evaluate(&samples)?;
        Ok(ExperimentOutcome { report, samples })
    })?
}

/// [`run_at`] at the config's `log_horizon`.
pub fn run_experiment(config: &ExperimentConfig, target: Target, workers: usize) -> Result<ExperimentOutcome, VerifyError> {
    run_at(config, config.log_horizon, target, workers)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub log_horizon: f64,
    pub sup_distance: f64,
    pub sup_stderr: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub target: &'static str,
    pub config_hash: String,
    pub rows: Vec<SweepRow>,
    /// The largest horizon's distance is the smallest, or within one
    /// combined standard error of it.
    pub verdict: Verdict,
    /// Every step along the ladder is non-increasing within one combined
    /// standard error.
    pub non_increasing: bool,
    pub reports: Vec<ExperimentReport>,
}

fn combined(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// Sweep verdicts from per-horizon `(distance, stderr)` pairs in ladder
/// order: `(last is min within 1 se, non-increasing within 1 se)`.
pub fn sweep_verdict(rows: &[(f64, f64)]) -> (bool, bool) {
    let Some(&(last, last_se)) = rows.last() else { return (false, false) };
    let (min, min_se) = rows.iter().copied().fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    let last_ok = last <= min + combined(last_se, min_se);
    let monotone = rows.windows(2).all(|w| w[1].0 <= w[0].0 + combined(w[0].1, w[1].1));
    (last_ok, monotone)
}

/// Runs `config` at every `ln T` of its ladder. `known` supplies reports
/// already computed for some horizons (same config and seed), which are
/// reused rather than simulated again.
pub fn convergence_sweep_with(
    config: &ExperimentConfig,
    target: Target,
    workers: usize,
    known: &[ExperimentReport],
) -> Result<SweepReport, VerifyError> {
    let ladder = &config.log_horizons;
    if ladder.len() < MIN_LADDER {
        return Err(VerifyError::LadderTooShort(ladder.len()));
    }
    let hash = config.hash();
    let mut reports = Vec::with_capacity(ladder.len());
    for &log_t in ladder {
        let reused = known.iter().find(|r| r.log_horizon == log_t && r.target == target.name() && r.seed == config.seed);
        let report = match reused {
            Some(r) => r.clone(),
            None => run_at(config, log_t, target, workers)?.report,
        };
        reports.push(report);
    }
    let rows: Vec<SweepRow> = reports
        .iter()
        .map(|r| SweepRow { log_horizon: r.log_horizon, sup_distance: r.sup_distance, sup_stderr: r.sup_stderr, verdict: r.verdict })
        .collect();
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.sup_distance, r.sup_stderr)).collect();
    let (last_ok, non_increasing) = sweep_verdict(&pairs);
    Ok(SweepReport {
        target: target.name(),
        config_hash: hash,
        rows,
        verdict: if last_ok { Verdict::Pass } else { Verdict::Fail },
        non_increasing,
        reports,
    })
}

pub fn convergence_sweep(config: &ExperimentConfig, target: Target, workers: usize) -> Result<SweepReport, VerifyError> {
    convergence_sweep_with(config, target, workers, &[])
}

/// Mean continuous maximum per component at the configured mesh and at half
/// its step, over `reps` replications.
pub fn mesh_refinement(config: &ExperimentConfig, target: Target, reps: usize, workers: usize) -> Result<Vec<(f64, f64)>, VerifyError> {
    let mut coarse = config.clone();
    coarse.replications = reps;
    let mut fine = coarse.clone();
    fine.mesh_factor = coarse.mesh_factor / 2.0;
    let a = run_experiment(&coarse, target, workers)?.samples;
    let b = run_experiment(&fine, target, workers)?.samples;
    let p = config.p();
    Ok((0..p)
        .map(|k| {
            let ma = a.iter().map(|s| s[k].m_cont).sum::<f64>() / a.len() as f64;
            let mb = b.iter().map(|s| s[k].m_cont).sum::<f64>() / b.len() as f64;
            (ma, mb)
        })
        .collect())
}
