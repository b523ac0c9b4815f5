use maxdisc::config::{CenteringFault, ExperimentConfig, GridConfig};
use maxdisc::io::{report_csv, sweep_csv, to_json};
use maxdisc::verify::{
    convergence_sweep, run_experiment, sweep_verdict, Experiment, Target, Verdict, VerifyError,
};

fn small(components: &str, extra: &str) -> ExperimentConfig {
    let text = format!(r#"{{"components": {components}, "log_horizon": 4, "replications": 300, "seed": 17{extra}}}"#);
    ExperimentConfig::from_json(&text).unwrap()
}

#[test]
fn reports_do_not_depend_on_the_worker_count() {
    // alpha = 1.5 has no closed-form constant, so estimation is part of the run
    let cfg = small(
        r#"[{"alpha": 1, "r_diag": 0.5}, {"alpha": 1.5, "r_diag": 0.5}]"#,
        r#", "r_cross": [0.5, 0.25, 0.5], "constants": {"reps": 500}"#,
    );
    let a = run_experiment(&cfg, Target::Dense, 1).unwrap();
    let b = run_experiment(&cfg, Target::Dense, 3).unwrap();
    assert_eq!(to_json(&a.report), to_json(&b.report));
    assert_eq!(report_csv(&a.report, 2), report_csv(&b.report, 2));
    assert_eq!(a.samples, b.samples);
}

#[test]
fn grid_maxima_never_exceed_continuous_maxima() {
    let cfg = small(r#"[{"alpha": 1, "r_diag": 0.3}]"#, r#", "grid": {"rule": "constant", "delta": 0.3}"#);
    let out = run_experiment(&cfg, Target::Sparse, 2).unwrap();
    assert!(out.samples.iter().flatten().all(|s| s.m_grid <= s.m_cont));
    assert_eq!(out.report.components[0].grid_above_continuous, 0);
}

#[test]
fn wrong_centering_is_caught() {
    let mut cfg = small(r#"[{"alpha": 1, "c": 20}]"#, "");
    cfg.centering_fault = CenteringFault::BtIsAt;
    let out = run_experiment(&cfg, Target::Dense, 1).unwrap();
    assert_eq!(out.report.verdict, Verdict::Fail);
    assert!(out.report.sup_distance > 0.3);
}

#[test]
fn law_must_match_the_grid() {
    let mut cfg = small(r#"[{"alpha": 1}]"#, "");
    cfg.grid = Some(GridConfig::Dense);
    assert!(matches!(
        Experiment::prepare(&cfg, 4.0, Target::Sparse),
        Err(VerifyError::RegimeMismatch { expected: "sparse", found: "dense" })
    ));
    // the marginal law accepts any grid
    assert!(Experiment::prepare(&cfg, 4.0, Target::Corollary).is_ok());
}

#[test]
fn corollary_lattice_ignores_y() {
    let cfg = small(r#"[{"alpha": 1}]"#, "");
    let exp = Experiment::prepare(&cfg, 4.0, Target::Corollary).unwrap();
    let lattice = exp.lattice().unwrap();
    assert_eq!(lattice.len(), 4);
    assert!(lattice.iter().all(|p| p.y[0] == f64::INFINITY));
}

#[test]
fn sweeps_need_three_horizons() {
    let mut cfg = small(r#"[{"alpha": 1}]"#, "");
    cfg.log_horizons = vec![8.0];
    assert!(matches!(convergence_sweep(&cfg, Target::Sparse, 1), Err(VerifyError::LadderTooShort(1))));
}

#[test]
fn sweep_rows_and_plot_file() {
    let mut cfg = small(r#"[{"alpha": 1}]"#, "");
    cfg.log_horizons = vec![3.0, 3.5, 4.0];
    let sweep = convergence_sweep(&cfg, Target::Corollary, 1).unwrap();
    assert_eq!(sweep.rows.len(), 3);
    let csv = sweep_csv(&sweep);
    assert!(csv.starts_with("# columns:"));
    assert_eq!(csv.lines().count(), 2 + 3);
}

#[test]
fn sweep_verdict_rules() {
    assert_eq!(sweep_verdict(&[(0.10, 0.01), (0.08, 0.01), (0.05, 0.01)]), (true, true));
    // the last distance is within one combined stderr of the minimum
    assert_eq!(sweep_verdict(&[(0.10, 0.01), (0.05, 0.01), (0.06, 0.01)]), (true, true));
    assert_eq!(sweep_verdict(&[(0.05, 0.005), (0.07, 0.005), (0.12, 0.005)]), (false, false));
}

#[test]
fn pickands_experiment_builds_its_constants() {
    let cfg = small(
        r#"[{"alpha": 1, "r_diag": 0.5}]"#,
        r#", "grid": {"rule": "pickands", "d": 1}, "constants": {"reps": 400, "lambdas": [8, 16]}"#,
    );
    let exp = Experiment::prepare(&cfg, 4.0, Target::Pickands).unwrap();
    let c = &exp.components[0];
    assert!((c.d_effective - 1.0).abs() < 1e-3, "{}", c.d_effective);
    assert!(c.h_d_alpha.unwrap() < c.h_alpha);
    assert_eq!(exp.constants_diagnostics.len(), 1);
    assert_eq!(exp.limit().pickands().len(), 1);
}
