//! Exact Gaussian path samplers on a uniform mesh.
//!
//! Stationary paths use circulant embedding; the exponential kernel
//! (`alpha = 1`) is Markov and is sampled by its exact AR(1) recursion, which
//! is the same law at a fraction of the cost. Fractional Brownian motion is
//! the cumulative sum of circulant-embedded fractional Gaussian noise.

use std::sync::Arc;

use maxdisc_core::mesh::MeshSpec;
use maxdisc_core::model::{ComponentParams, Horizon, ModelError, VectorCorrelationModel};
use maxdisc_core::seed::{derive_seed, Stream};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Generator behind every stream; seeded from [`derive_seed`].
pub type PathRng = Xoshiro256PlusPlus;

pub fn rng_for(seed: u64) -> PathRng {
    PathRng::seed_from_u64(seed)
}

/// Padding multipliers tried in turn when the minimal embedding has
/// negative eigenvalues.
pub const PADDING_FACTORS: [usize; 4] = [1, 2, 4, 8];

/// Eigenvalues down to `-EMBEDDING_TOLERANCE * max eigenvalue` are rounding
/// noise and are set to zero.
pub const EMBEDDING_TOLERANCE: f64 = 1e-10;

/// Largest size accepted by the dense square-root oracle.
pub const DENSE_ORACLE_MAX: usize = 64;

/// Fewest replications [`covariance_selfcheck`] works with.
pub const SELFCHECK_MIN_REPS: usize = 1000;

/// `|z|` above this is flagged by [`covariance_selfcheck`].
pub const SELFCHECK_FLAG_Z: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("circulant embedding is not positive semidefinite even with 8x padding (most negative eigenvalue {min_eigenvalue:.3e})")]
    EmbeddingNotPSD { min_eigenvalue: f64 },
    #[error("Hurst exponent {0} is outside (0, 1]")]
    InvalidHurst(f64),
    #[error("the Markov sampler needs alpha = 1, got {0}")]
    NotMarkov(f64),
    #[error("dense oracle handles at most {max} points, got {n}")]
    OracleTooLarge { n: usize, max: usize },
    #[error("mesh horizon {mesh} does not match T = {horizon}")]
    HorizonMismatch { mesh: f64, horizon: f64 },
    #[error("self-check needs at least {min} replications, got {found}")]
    InsufficientReplications { min: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Correlation `exp(-C |t|^alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub c: f64,
    pub alpha: f64,
}

impl Kernel {
    pub fn new(c: f64, alpha: f64) -> Self {
        Self { c, alpha }
    }

    pub fn at(&self, t: f64) -> f64 {
        let t = t.abs();
        if t == 0.0 {
            1.0
        } else {
            (-self.c * t.powf(self.alpha)).exp()
        }
    }

    pub fn is_markov(&self) -> bool {
        self.alpha == 1.0
    }
}

impl From<&ComponentParams> for Kernel {
    fn from(p: &ComponentParams) -> Self {
        Self { c: p.c(), alpha: p.alpha() }
    }
}

/// Exact sampler for a stationary Gaussian sequence with a given
/// autocovariance, by circulant embedding.
pub struct CirculantSampler {
    n: usize,
    m: usize,
    /// `sqrt(lambda_j / m)` for the embedding eigenvalues.
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler").field("n", &self.n).field("m", &self.m).finish()
    }
}

/// Reusable buffers for one worker.
#[derive(Debug, Default)]
pub struct Workspace {
    spectrum: Vec<Complex<f64>>,
    fft_scratch: Vec<Complex<f64>>,
}

impl CirculantSampler {
    /// `cov(j)` is the covariance at lag `j` mesh steps; it is evaluated up to
    /// half the embedding size, so padding extends it rather than zero-filling.
    pub fn new(n: usize, cov: impl Fn(usize) -> f64) -> Result<Self, SamplerError> {
        let base = (2 * n.saturating_sub(1)).max(2).next_power_of_two();
        let mut planner = FftPlanner::new();
        let mut most_negative = 0.0f64;
        for factor in PADDING_FACTORS {
            let m = base * factor;
            let mut row: Vec<Complex<f64>> =
                (0..m).map(|j| Complex::new(cov(j.min(m - j)), 0.0)).collect();
            let fft = planner.plan_fft_forward(m);
            fft.process(&mut row);
            let top = row.iter().map(|c| c.re).fold(0.0, f64::max);
            let low = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
            if low < -EMBEDDING_TOLERANCE * top {
                most_negative = low;
                continue;
            }
            let scale = row.iter().map(|c| (c.re.max(0.0) / m as f64).sqrt()).collect();
            let scratch_len = fft.get_inplace_scratch_len();
            return Ok(Self { n, m, scale, fft, scratch_len });
        }
        Err(SamplerError::EmbeddingNotPSD { min_eigenvalue: most_negative })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn embedding_size(&self) -> usize {
        self.m
    }

    /// Writes one sample into `out[..n]`.
    pub fn sample_into(&self, rng: &mut impl Rng, ws: &mut Workspace, out: &mut [f64]) {
        debug_assert!(out.len() >= self.n);
        ws.spectrum.clear();
        ws.spectrum.extend(self.scale.iter().map(|&s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(s * re, s * im)
        }));
        ws.fft_scratch.resize(self.scratch_len, Complex::new(0.0, 0.0));
        self.fft.process_with_scratch(&mut ws.spectrum, &mut ws.fft_scratch);
        for (o, c) in out.iter_mut().zip(&ws.spectrum[..self.n]) {
            *o = c.re;
        }
    }
}

/// How stationary components are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerChoice {
    /// AR(1) recursion for `alpha = 1`, circulant embedding otherwise.
    #[default]
    Auto,
    /// Circulant embedding for every kernel.
    Circulant,
}

/// Sampler for one standard stationary component on a fixed mesh.
#[derive(Debug)]
pub enum StationarySampler {
    /// Single point: one standard normal.
    Point,
    /// `X_{i+1} = phi X_i + sqrt(1 - phi^2) e_i`, exact for `exp(-C |t|)`.
    Markov { n: usize, phi: f64, innovation: f64 },
    Circulant(CirculantSampler),
}

impl StationarySampler {
    pub fn new(kernel: Kernel, mesh: &MeshSpec, choice: SamplerChoice) -> Result<Self, SamplerError> {
        Self::with_len(kernel, mesh.h, mesh.n, choice)
    }

    pub fn with_len(kernel: Kernel, h: f64, n: usize, choice: SamplerChoice) -> Result<Self, SamplerError> {
        if n <= 1 {
            return Ok(StationarySampler::Point);
        }
        if kernel.is_markov() && choice == SamplerChoice::Auto {
            return Self::markov(kernel, h, n);
        }
        Ok(StationarySampler::Circulant(CirculantSampler::new(n, |j| kernel.at(j as f64 * h))?))
    }

    pub fn markov(kernel: Kernel, h: f64, n: usize) -> Result<Self, SamplerError> {
        if !kernel.is_markov() {
            return Err(SamplerError::NotMarkov(kernel.alpha));
        }
        let phi = (-kernel.c * h).exp();
        // 1 - phi^2 without cancellation
        let innovation = (-(-2.0 * kernel.c * h).exp_m1()).sqrt();
        Ok(StationarySampler::Markov { n, phi, innovation })
    }

    pub fn len(&self) -> usize {
        match self {
            StationarySampler::Point => 1,
            StationarySampler::Markov { n, .. } => *n,
            StationarySampler::Circulant(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_into(&self, rng: &mut impl Rng, ws: &mut Workspace, out: &mut [f64]) {
        match self {
            StationarySampler::Point => out[0] = rng.sample(StandardNormal),
            StationarySampler::Markov { n, phi, innovation } => {
                let mut x: f64 = rng.sample(StandardNormal);
                out[0] = x;
                for o in out[1..*n].iter_mut() {
                    let e: f64 = rng.sample(StandardNormal);
                    x = phi * x + innovation * e;
                    *o = x;
                }
            }
            StationarySampler::Circulant(c) => c.sample_into(rng, ws, out),
        }
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.sample_into(&mut rng_for(seed), &mut Workspace::default(), &mut out);
        out
    }
}

/// One standard stationary path with correlation `kernel` on `mesh`.
pub fn sample_stationary(kernel: Kernel, mesh: &MeshSpec, seed: u64) -> Result<Vec<f64>, SamplerError> {
    Ok(StationarySampler::new(kernel, mesh, SamplerChoice::Auto)?.sample(seed))
}

/// Sampler for fractional Brownian motion `B_H` on `{0, h, ..., (n-1) h}`.
#[derive(Debug)]
pub enum FbmSampler {
    /// `H = 1`: the line `t N`.
    Line { h: f64, n: usize },
    /// `H = 1/2`: independent increments.
    Brownian { h: f64, n: usize },
    /// Cumulative fractional Gaussian noise.
    Noise { n: usize, noise: CirculantSampler, buffer_len: usize },
}

impl FbmSampler {
    pub fn new(hurst: f64, h: f64, n: usize) -> Result<Self, SamplerError> {
        if !(hurst > 0.0 && hurst <= 1.0) {
            return Err(SamplerError::InvalidHurst(hurst));
        }
        if hurst == 1.0 {
            return Ok(FbmSampler::Line { h, n });
        }
        if hurst == 0.5 {
            return Ok(FbmSampler::Brownian { h, n });
        }
        let two_h = 2.0 * hurst;
        let scale = 0.5 * h.powf(two_h);
        let gamma = move |k: usize| {
            let k = k as f64;
            scale * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
        };
        let increments = n.saturating_sub(1).max(1);
        let noise = CirculantSampler::new(increments, gamma)?;
        Ok(FbmSampler::Noise { n, noise, buffer_len: increments })
    }

    pub fn len(&self) -> usize {
        match self {
            FbmSampler::Line { n, .. } | FbmSampler::Brownian { n, .. } | FbmSampler::Noise { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `B(0) = 0, B(h), ...` into `out[..n]`.
    pub fn sample_into(&self, rng: &mut impl Rng, ws: &mut Workspace, out: &mut [f64]) {
        let n = self.len();
        if n == 0 {
            return;
        }
        out[0] = 0.0;
        match self {
            FbmSampler::Line { h, .. } => {
                let g: f64 = rng.sample(StandardNormal);
                for (i, o) in out[..n].iter_mut().enumerate() {
                    *o = i as f64 * h * g;
                }
            }
            FbmSampler::Brownian { h, .. } => {
                let s = h.sqrt();
                let mut acc = 0.0;
                for o in out[1..n].iter_mut() {
                    let e: f64 = rng.sample(StandardNormal);
                    acc += s * e;
                    *o = acc;
                }
            }
            FbmSampler::Noise { noise, buffer_len, .. } => {
                // increments land in out[1..], then get summed in place
                noise.sample_into(rng, ws, &mut out[1..=*buffer_len]);
                for i in 1..n {
                    out[i] += out[i - 1];
                }
            }
        }
    }
}

/// One fractional Brownian path with Hurst exponent `hurst` (`alpha / 2`).
pub fn sample_fbm(hurst: f64, mesh: &MeshSpec, seed: u64) -> Result<Vec<f64>, SamplerError> {
    let sampler = FbmSampler::new(hurst, mesh.h, mesh.n)?;
    let mut out = vec![0.0; mesh.n];
    sampler.sample_into(&mut rng_for(seed), &mut Workspace::default(), &mut out);
    Ok(out)
}

/// Symmetric square root `V diag(sqrt(max(lambda, 0))) V^T` of a covariance
/// matrix, the reference the fast samplers are checked against.
pub fn dense_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, SamplerError> {
    let n = cov.nrows();
    if n > DENSE_ORACLE_MAX {
        return Err(SamplerError::OracleTooLarge { n, max: DENSE_ORACLE_MAX });
    }
    let eig = SymmetricEigen::new(cov.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Stationary covariance matrix of `kernel` on `n` points spaced `h`.
pub fn kernel_matrix(kernel: Kernel, h: f64, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| kernel.at((i as f64 - j as f64) * h))
}

pub fn dense_sample(root: &DMatrix<f64>, rng: &mut impl Rng) -> Vec<f64> {
    let xi = nalgebra::DVector::from_fn(root.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    (root * xi).iter().copied().collect()
}

/// Sample paths of all components of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub p: usize,
    /// `paths[k]` holds component `k` on the mesh.
    pub paths: Vec<Vec<f64>>,
    pub mesh: MeshSpec,
    pub master_seed: u64,
    pub replication: u64,
}

/// Per-component stationary samplers plus the latent factor of a model at a
/// fixed horizon and mesh.
#[derive(Debug)]
pub struct VectorSampler {
    samplers: Vec<StationarySampler>,
    /// `(sqrt(1 - rho_kk), sqrt(rho_kk))` per component.
    weights: Vec<(f64, f64)>,
    model: VectorCorrelationModel,
    mesh: MeshSpec,
}

impl VectorSampler {
    pub fn new(
        model: &VectorCorrelationModel,
        horizon: Horizon,
        mesh: MeshSpec,
        choice: SamplerChoice,
    ) -> Result<Self, SamplerError> {
        model.check_horizon(horizon)?;
        let t = horizon.value();
        if (mesh.horizon() - t).abs() > 1e-9 * t {
            return Err(SamplerError::HorizonMismatch { mesh: mesh.horizon(), horizon: t });
        }
        let mut samplers = Vec::with_capacity(model.p());
        let mut weights = Vec::with_capacity(model.p());
        for k in 0..model.p() {
            let comp = model.component(k)?;
            samplers.push(StationarySampler::new(Kernel::from(comp), &mesh, choice)?);
            weights.push(model.mixing_weights(k, horizon)?);
        }
        Ok(Self { samplers, weights, model: model.clone(), mesh })
    }

    pub fn mesh(&self) -> &MeshSpec {
        &self.mesh
    }

    pub fn p(&self) -> usize {
        self.samplers.len()
    }

    pub fn sampler(&self, k: usize) -> &StationarySampler {
        &self.samplers[k]
    }

    /// `(sqrt(1 - rho_kk(T)), sqrt(rho_kk(T)))`.
    pub fn weights(&self, k: usize) -> (f64, f64) {
        self.weights[k]
    }

    /// Latent vector `Z ~ N(0, Sigma_Z)` of replication `rep`.
    pub fn latent(&self, master: u64, rep: u64) -> Vec<f64> {
        let factor = self.model.latent_factor();
        let mut rng = rng_for(derive_seed(master, rep, Stream::Latent));
        let xi: Vec<f64> = (0..factor.rank()).map(|_| rng.sample(StandardNormal)).collect();
        let mut z = vec![0.0; self.p()];
        factor.apply(&xi, &mut z);
        z
    }

    /// Stationary path `eta_k` of replication `rep`.
    pub fn eta_into(&self, master: u64, rep: u64, k: usize, ws: &mut Workspace, out: &mut [f64]) {
        let mut rng = rng_for(derive_seed(master, rep, Stream::Path(k)));
        self.samplers[k].sample_into(&mut rng, ws, out);
    }

    /// `X_k = sqrt(1 - rho_kk) eta_k + sqrt(rho_kk) Z_k` for every component.
    pub fn sample(&self, master: u64, rep: u64) -> PathEnsemble {
        let z = self.latent(master, rep);
        let mut ws = Workspace::default();
        let paths = (0..self.p())
            .map(|k| {
                let mut path = vec![0.0; self.mesh.n];
                self.eta_into(master, rep, k, &mut ws, &mut path);
                let (a, b) = self.weights[k];
                let shift = b * z[k];
                for v in path.iter_mut() {
                    *v = a * *v + shift;
                }
                path
            })
            .collect();
        PathEnsemble { p: self.p(), paths, mesh: self.mesh, master_seed: master, replication: rep }
    }
}

/// Draws replication `rep` of the vector process at horizon `horizon`.
pub fn sample_vector_process(
    model: &VectorCorrelationModel,
    horizon: Horizon,
    mesh: MeshSpec,
    master: u64,
    rep: u64,
) -> Result<PathEnsemble, SamplerError> {
    Ok(VectorSampler::new(model, horizon, mesh, SamplerChoice::Auto)?.sample(master, rep))
}

/// Which pair of values a self-check row compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagProbe {
    pub k: usize,
    pub l: usize,
    /// Lag in mesh steps, measured from mesh index 0.
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckRow {
    pub probe: LagProbe,
    pub empirical: f64,
    pub model: f64,
    pub z: f64,
    pub flagged: bool,
}

/// Compares empirical correlations of `X_k(0)` and `X_l(lag h)` over a batch
/// with `expected(probe)`. The standard error of a sample correlation `r` is
/// taken as `(1 - r^2) / sqrt(n)`.
pub fn covariance_selfcheck(
    batch: &[PathEnsemble],
    probes: &[LagProbe],
    expected: impl Fn(&LagProbe) -> f64,
) -> Result<Vec<SelfCheckRow>, SamplerError> {
    if batch.len() < SELFCHECK_MIN_REPS {
        return Err(SamplerError::InsufficientReplications { min: SELFCHECK_MIN_REPS, found: batch.len() });
    }
    let n = batch.len() as f64;
    Ok(probes
        .iter()
        .map(|probe| {
            let a: Vec<f64> = batch.iter().map(|e| e.paths[probe.k][0]).collect();
            let b: Vec<f64> = batch.iter().map(|e| e.paths[probe.l][probe.lag]).collect();
            let empirical = maxdisc_core::stats::correlation(&a, &b);
            let model = expected(probe);
            let se = ((1.0 - model * model).max(1e-12)) / n.sqrt();
            let z = (empirical - model) / se;
            SelfCheckRow { probe: *probe, empirical, model, z, flagged: z.abs() > SELFCHECK_FLAG_Z }
        })
        .collect())
}

/// Model correlation of a self-check probe at horizon `horizon` on `mesh`.
pub fn model_correlation(
    model: &VectorCorrelationModel,
    horizon: Horizon,
    mesh: &MeshSpec,
    probe: &LagProbe,
) -> Result<f64, SamplerError> {
    Ok(model.correlation_at(probe.k, probe.l, mesh.time(probe.lag), horizon)?)
}

/// Largest standardized difference between circulant and dense-root samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleComparison {
    pub n: usize,
    pub reps: usize,
    /// Over the `n` means.
    pub max_mean_z: f64,
    /// Over the `n (n + 1) / 2` second moments.
    pub max_cov_z: f64,
}

impl OracleComparison {
    pub fn max_z(&self) -> f64 {
        self.max_mean_z.max(self.max_cov_z)
    }
}

/// Draws `reps` circulant paths and `reps` dense-root paths of `kernel` on
/// `n <= 64` points spaced `h` and compares means and second moments entry
/// by entry. Each difference is scaled by the standard error of a difference
/// of two independent estimates under the model covariance.
pub fn oracle_comparison(kernel: Kernel, h: f64, n: usize, reps: usize, seed: u64) -> Result<OracleComparison, SamplerError> {
    let cov = kernel_matrix(kernel, h, n);
    let root = dense_sqrt(&cov)?;
    let circulant = CirculantSampler::new(n, |j| kernel.at(j as f64 * h))?;
    if reps < 2 {
        return Err(SamplerError::InsufficientReplications { min: 2, found: reps });
    }
    let moments = |draw: &mut dyn FnMut(&mut Vec<f64>)| {
        let mut sum = vec![0.0; n];
        let mut prod = vec![0.0; n * n];
        let mut x = vec![0.0; n];
        for _ in 0..reps {
            draw(&mut x);
            for i in 0..n {
                sum[i] += x[i];
                for j in 0..=i {
                    prod[i * n + j] += x[i] * x[j];
                }
            }
        }
        (sum, prod)
    };
    let mut rng = rng_for(derive_seed(seed, 0, Stream::Aux(2)));
    let mut ws = Workspace::default();
    let (sa, pa) = moments(&mut |x| circulant.sample_into(&mut rng, &mut ws, x));
    let mut rng = rng_for(derive_seed(seed, 1, Stream::Aux(2)));
    let (sb, pb) = moments(&mut |x| *x = dense_sample(&root, &mut rng));

    let m = reps as f64;
    let mut max_mean_z: f64 = 0.0;
    let mut max_cov_z: f64 = 0.0;
    for i in 0..n {
        let se = (2.0 * cov[(i, i)] / m).sqrt();
        max_mean_z = max_mean_z.max(((sa[i] - sb[i]) / m).abs() / se);
        for j in 0..=i {
            let c = cov[(i, j)];
            let se = (2.0 * (cov[(i, i)] * cov[(j, j)] + c * c) / m).sqrt();
            max_cov_z = max_cov_z.max(((pa[i * n + j] - pb[i * n + j]) / m).abs() / se);
        }
    }
    Ok(OracleComparison { n, reps, max_mean_z, max_cov_z })
}
