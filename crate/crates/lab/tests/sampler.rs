use maxdisc::sampler::{
    covariance_selfcheck, model_correlation, oracle_comparison, rng_for, sample_fbm, sample_stationary,
    sample_vector_process, CirculantSampler, FbmSampler, Kernel, LagProbe, SamplerChoice, SamplerError,
    StationarySampler, VectorSampler, Workspace,
};
use maxdisc_core::mesh::MeshSpec;
use maxdisc_core::model::{ComponentParams, Horizon, VectorCorrelationModel};

fn sample_moments(paths: &[Vec<f64>], i: usize, j: usize) -> (f64, f64) {
    let n = paths.len() as f64;
    let mean = paths.iter().map(|p| p[i]).sum::<f64>() / n;
    let cov = paths.iter().map(|p| p[i] * p[j]).sum::<f64>() / n;
    (mean, cov)
}

#[test]
fn circulant_matches_dense_root_for_small_grids() {
    for (kernel, h) in [(Kernel::new(1.0, 1.5), 0.1), (Kernel::new(2.0, 0.5), 0.05), (Kernel::new(1.0, 1.0), 0.2)] {
        let cmp = oracle_comparison(kernel, h, 32, 20_000, 11).unwrap();
        assert!(cmp.max_z() <= 4.5, "{kernel:?}: {cmp:?}");
    }
}

#[test]
fn dense_oracle_is_capped() {
    assert!(matches!(
        oracle_comparison(Kernel::new(1.0, 1.0), 0.1, 65, 10, 0),
        Err(SamplerError::OracleTooLarge { n: 65, .. })
    ));
}

#[test]
fn exact_markov_recursion_has_the_kernel_covariance() {
    let kernel = Kernel::new(1.5, 1.0);
    let sampler = StationarySampler::with_len(kernel, 0.05, 40, SamplerChoice::Auto).unwrap();
    assert!(matches!(sampler, StationarySampler::Markov { .. }));
    let paths: Vec<Vec<f64>> = (0..40_000).map(|s| sampler.sample(s)).collect();
    for lag in [0, 1, 5, 39] {
        let (mean, cov) = sample_moments(&paths, 0, lag);
        let target = kernel.at(lag as f64 * 0.05);
        assert!(mean.abs() < 4.0 * (1.0f64 / 40_000.0).sqrt());
        assert!((cov - target).abs() < 4.0 * ((1.0 + target * target) / 40_000.0).sqrt(), "lag {lag}: {cov} vs {target}");
    }
}

#[test]
fn forced_circulant_agrees_with_markov_in_distribution() {
    let kernel = Kernel::new(1.0, 1.0);
    let circ = StationarySampler::with_len(kernel, 0.1, 20, SamplerChoice::Circulant).unwrap();
    assert!(matches!(circ, StationarySampler::Circulant(_)));
    let paths: Vec<Vec<f64>> = (0..40_000).map(|s| circ.sample(s)).collect();
    let (_, cov) = sample_moments(&paths, 3, 10);
    let target = (-0.7f64).exp();
    assert!((cov - target).abs() < 4.0 * ((1.0 + target * target) / 40_000.0).sqrt());
}

#[test]
fn embedding_rejects_a_non_positive_definite_sequence() {
    // a sequence that is not a covariance: too strongly correlated neighbours
    let err = CirculantSampler::new(16, |j| match j {
        0 => 1.0,
        1 => 0.99,
        _ => 0.0,
    })
    .unwrap_err();
    assert!(matches!(err, SamplerError::EmbeddingNotPSD { .. }), "{err:?}");
}

#[test]
fn fbm_variance_scales_with_the_hurst_exponent() {
    for hurst in [0.25, 0.5, 0.75, 1.0] {
        let mesh = MeshSpec::new(0.01, 201).unwrap();
        let n = 20_000;
        let paths: Vec<Vec<f64>> = (0..n).map(|s| sample_fbm(hurst, &mesh, s).unwrap()).collect();
        for i in [50, 200] {
            let t = i as f64 * 0.01;
            let var = paths.iter().map(|p| p[i] * p[i]).sum::<f64>() / n as f64;
            let target = t.powf(2.0 * hurst);
            assert!((var / target - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "H={hurst}, t={t}: {var} vs {target}");
            assert_eq!(paths[0][0], 0.0);
        }
    }
}

#[test]
fn fbm_rejects_bad_hurst() {
    assert!(matches!(FbmSampler::new(0.0, 0.01, 10), Err(SamplerError::InvalidHurst(_))));
    assert!(matches!(FbmSampler::new(1.5, 0.01, 10), Err(SamplerError::InvalidHurst(_))));
}

#[test]
fn same_seed_same_path() {
    let mesh = MeshSpec::new(0.01, 1000).unwrap();
    let k = Kernel::new(1.0, 1.3);
    assert_eq!(sample_stationary(k, &mesh, 5).unwrap(), sample_stationary(k, &mesh, 5).unwrap());
    assert_ne!(sample_stationary(k, &mesh, 5).unwrap(), sample_stationary(k, &mesh, 6).unwrap());
    let s = StationarySampler::new(k, &mesh, SamplerChoice::Auto).unwrap();
    let mut a = vec![0.0; 1000];
    let mut ws = Workspace::default();
    s.sample_into(&mut rng_for(9), &mut ws, &mut a);
    assert_eq!(a, s.sample(9));
}

fn two_component_model() -> VectorCorrelationModel {
    let comps = vec![ComponentParams::new(1.0, 1.0, 0.5).unwrap(), ComponentParams::new(1.5, 2.0, 0.5).unwrap()];
    VectorCorrelationModel::build(comps, &[0.5, 0.25, 0.25, 0.5], false).unwrap()
}

#[test]
fn vector_process_passes_its_self_check_and_flags_a_wrong_model() {
    let model = two_component_model();
    let horizon = Horizon::from_log(4.0);
    let mesh = MeshSpec::covering(horizon.value(), 0.05, 1 << 20).unwrap();
    let sampler = VectorSampler::new(&model, horizon, mesh, SamplerChoice::Auto).unwrap();
    let batch: Vec<_> = (0..4000).map(|rep| sampler.sample(3, rep)).collect();
    let probes = [
        LagProbe { k: 0, l: 0, lag: 1 },
        LagProbe { k: 0, l: 0, lag: 20 },
        LagProbe { k: 1, l: 1, lag: 3 },
        LagProbe { k: 0, l: 1, lag: 0 },
        LagProbe { k: 1, l: 0, lag: 40 },
    ];
    let rows = covariance_selfcheck(&batch, &probes, |p| model_correlation(&model, horizon, &mesh, p).unwrap()).unwrap();
    assert!(rows.iter().all(|r| !r.flagged), "{rows:?}");

    // the cross-correlation of a model with r_12 = 0 is visibly wrong
    let rows = covariance_selfcheck(&batch, &probes[3..4], |_| 0.0).unwrap();
    assert!(rows[0].flagged, "{rows:?}");

    assert!(matches!(
        covariance_selfcheck(&batch[..10], &probes, |_| 0.0),
        Err(SamplerError::InsufficientReplications { .. })
    ));
}

#[test]
fn vector_sampler_checks_the_mesh_horizon() {
    let model = two_component_model();
    let horizon = Horizon::from_log(4.0);
    let mesh = MeshSpec::covering(horizon.value(), 0.05, 1 << 20).unwrap();
    let paths = sample_vector_process(&model, horizon, mesh, 1, 0).unwrap();
    assert_eq!(paths.paths.len(), 2);
    assert_eq!(paths.paths[1].len(), mesh.n);
    assert!(matches!(
        sample_vector_process(&model, horizon, MeshSpec::new(0.05, 64).unwrap(), 1, 0),
        Err(SamplerError::HorizonMismatch { .. })
    ));
    assert!(sample_vector_process(&model, Horizon::from_log(0.1), mesh, 1, 0).is_err());
}
