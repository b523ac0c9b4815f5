use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maxdisc::config::{ConfigError, ExperimentConfig};
use maxdisc::io::{self, fmt6, OutputDir, OutputError, PathDump, RunManifest};
use maxdisc::maxima::ContinuousMax;
use maxdisc::pickands::{
    build_constants, default_table_axis, known_h_alpha, Estimator, Extrapolation, PickandsError, PickandsEstimate,
    PickandsOptions,
};
use maxdisc::verify::{self, Experiment, ExperimentReport, Target, VerifyError};
use maxdisc_core::limits::{limit_cdf, LimitRegime, LimitSpec};
use serde::Serialize;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_FAIL: u8 = 3;

#[derive(Parser)]
#[command(name = "maxdisc", version, about = "Continuous vs grid maxima of stationary Gaussian vector processes")]
struct Cli {
    /// Directory for every output file.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correlation model checks.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Simulate replications and write per-replication maxima.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        dump: DumpArgs,
    },
    /// Estimate Pickands-type constants on a window ladder.
    Pickands(PickandsArgs),
    /// Compare empirical joint maxima with a limit law.
    Verify {
        #[arg(value_enum)]
        law: Law,
        config: PathBuf,
        /// Also write samples.csv.
        #[arg(long)]
        samples: bool,
        #[command(flatten)]
        dump: DumpArgs,
    },
    /// Sup-distance across the config's ln T ladder.
    Sweep {
        config: PathBuf,
        /// Law to compare with; defaults to the config grid's regime.
        #[arg(long, value_enum)]
        law: Option<Law>,
    },
    /// Evaluate limit distribution functions.
    Limits {
        #[command(subcommand)]
        action: LimitsAction,
    },
}

#[derive(Subcommand)]
enum ModelAction {
    /// Validate a config and print a summary.
    Check { config: PathBuf },
}

#[derive(Subcommand)]
enum LimitsAction {
    /// Print `x, y, value, error` rows as CSV.
    Eval {
        config: PathBuf,
        /// Comma-separated x coordinates, one per component; repeatable.
        #[arg(long, required = true, allow_hyphen_values = true)]
        x: Vec<String>,
        /// Comma-separated y coordinates; one per --x.
        #[arg(long, required = true, allow_hyphen_values = true)]
        y: Vec<String>,
        /// Law; defaults to the config grid's regime.
        #[arg(long, value_enum)]
        law: Option<Law>,
    },
}

#[derive(Args)]
struct DumpArgs {
    /// Write the first replications' mesh paths to paths.bin.
    #[arg(long)]
    dump_paths: bool,
    /// Replications to dump.
    #[arg(long, default_value_t = 1)]
    dump_reps: usize,
}

#[derive(Args)]
struct PickandsArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    d: f64,
    /// Largest window; the ladder is lambda/4, lambda/2, lambda.
    #[arg(long)]
    lambda: f64,
    /// Also write the joint table to table.csv.
    #[arg(long)]
    table: bool,
    #[arg(long, default_value_t = maxdisc::pickands::DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    mesh: Option<f64>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Tilted)]
    estimator: EstimatorArg,
    /// Read continuous maxima off the mesh only.
    #[arg(long)]
    mesh_max: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Tilted,
    Plain,
}

#[derive(Clone, Copy, ValueEnum)]
enum Law {
    Sparse,
    Pickands,
    Dense,
    Corollary,
}

impl From<Law> for Target {
    fn from(l: Law) -> Self {
        match l {
            Law::Sparse => Target::Sparse,
            Law::Pickands => Target::Pickands,
            Law::Dense => Target::Dense,
            Law::Corollary => Target::Corollary,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Pickands(#[from] PickandsError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let validation = match self {
            CliError::Config(_) | CliError::Usage(_) => true,
            CliError::Verify(e) => e.is_validation(),
            CliError::Pickands(e) => matches!(
                e,
                PickandsError::AlphaOutOfRange(_)
                    | PickandsError::InvalidD(_)
                    | PickandsError::WindowTooShort { .. }
                    | PickandsError::MeshTooCoarse { .. }
                    | PickandsError::DNotOnMesh { .. }
                    | PickandsError::NoReplications
            ),
            CliError::Output(_) => false,
        };
        if validation {
            EXIT_VALIDATION
        } else {
            EXIT_RUNTIME
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// `Ok(false)` means a FAIL verdict.
fn run(cli: Cli) -> Result<bool, CliError> {
    let workers = verify::worker_count();
    match cli.command {
        Command::Model { action: ModelAction::Check { config } } => model_check(&config),
        Command::Simulate { config, dump } => simulate(&config, &cli.out_dir, &dump, workers),
        Command::Pickands(args) => pickands(&args, &cli.out_dir, workers),
        Command::Verify { law, config, samples, dump } => {
            verify_cmd(law.into(), &config, samples, &dump, &cli.out_dir, workers)
        }
        Command::Sweep { config, law } => sweep(&config, law, &cli.out_dir, workers),
        Command::Limits { action: LimitsAction::Eval { config, x, y, law } } => limits_eval(&config, &x, &y, law, workers),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    Ok(ExperimentConfig::load(path)?)
}

/// Target matching the config's grid classification.
fn target_of(config: &ExperimentConfig) -> Result<Target, CliError> {
    let grids = config.grids(&maxdisc::config::GridConfig::Sparse)?;
    Ok(match grids[0].regime {
        maxdisc_core::grid::Regime::Sparse => Target::Sparse,
        maxdisc_core::grid::Regime::Pickands { .. } => Target::Pickands,
        maxdisc_core::grid::Regime::Dense => Target::Dense,
    })
}

fn model_check(path: &Path) -> Result<bool, CliError> {
    let config = load(path)?;
    let model = config.model()?;
    let p = model.p();
    println!("config   {}", path.display());
    println!("hash     {}", config.hash());
    println!("p        {p}");
    for (k, c) in model.components().iter().enumerate() {
        println!("  component {k}: alpha {} C {} r {}", fmt6(c.alpha()), fmt6(c.c()), fmt6(c.r_diag()));
    }
    println!("long-range matrix r:");
    for k in 0..p {
        let row: Vec<String> = (0..p).map(|l| format!("{:>12}", fmt6(model.r(k, l)))).collect();
        println!("  {}", row.join(" "));
    }
    let factor = model.latent_factor();
    println!("latent   rank {} of {p}, min eigenvalue {}", factor.rank(), fmt6(model.min_latent_eigenvalue()));
    if model.is_singular() {
        println!("         singular latent covariance accepted");
    }
    println!("ln T     must exceed {}", fmt6(model.required_log_horizon()));
    if let Some(grid) = &config.grid {
        for (k, g) in config.grids(grid)?.iter().enumerate() {
            println!("grid     component {k}: {}", describe_regime(g.regime));
        }
    }
    println!("valid");
    Ok(true)
}

fn describe_regime(r: maxdisc_core::grid::Regime) -> String {
    match r {
        maxdisc_core::grid::Regime::Pickands { d } => format!("pickands (d = {})", fmt6(d)),
        other => other.name().to_string(),
    }
}

fn dump_paths(exp: &Experiment, dump: &DumpArgs, out: &mut OutputDir) -> Result<(), CliError> {
    if !dump.dump_paths {
        return Ok(());
    }
    let path = out.root().join("paths.bin");
    let mut file = PathDump::create(&path, exp.model.p(), exp.mesh.n, exp.mesh.h, exp.config.seed)?;
    for rep in 0..dump.dump_reps.min(exp.config.replications) as u64 {
        let ens = exp.sampler().sample(exp.config.seed, rep);
        for col in &ens.paths {
            file.push(col)?;
        }
    }
    file.finish()?;
    out.write_listed("paths.bin");
    Ok(())
}

fn simulate(path: &Path, out_dir: &Path, dump: &DumpArgs, workers: usize) -> Result<bool, CliError> {
    let config = load(path)?;
    let target = target_of(&config)?;
    let manifest = RunManifest::start("simulate", Some(config.hash()), Some(config.seed), workers);
    let mut out = OutputDir::create(out_dir)?;
    let (exp, samples) = verify::with_workers(workers, || -> Result<_, VerifyError> {
        let exp = Experiment::prepare(&config, config.log_horizon, target)?;
        let samples = exp.simulate();
        Ok((exp, samples))
    })??;
    out.write("samples.csv", io::samples_csv(&samples).as_bytes())?;
    dump_paths(&exp, dump, &mut out)?;
    println!(
        "{} replications, p = {}, ln T = {}, mesh {} x {}",
        samples.len(),
        exp.model.p(),
        fmt6(exp.horizon.log()),
        exp.mesh.n,
        fmt6(exp.mesh.h)
    );
    manifest.finish(&mut out)?;
    Ok(true)
}

fn print_report(report: &ExperimentReport) {
    println!(
        "{} law, ln T = {}, {} replications, mesh {} x {}",
        report.target,
        fmt6(report.log_horizon),
        report.replications,
        report.mesh_n,
        fmt6(report.mesh_h)
    );
    println!("{:>28} {:>12} {:>12} {:>12} {:>10}", "point", "empirical", "limit", "stderr", "z");
    for p in &report.points {
        let label = format!("{:?}/{:?}", p.x, p.y);
        println!(
            "{:>28} {:>12} {:>12} {:>12} {:>10}{}",
            label,
            fmt6(p.empirical),
            fmt6(p.theoretical),
            fmt6(p.stderr),
            fmt6(p.z),
            if p.within_tolerance { "" } else { "  *" }
        );
    }
    for (k, c) in report.components.iter().enumerate() {
        println!(
            "component {k}: delta {} (snap {}), mean|x-y| {}, corr {}, equal {}",
            fmt6(c.setup.delta),
            fmt6(c.setup.snap_error),
            fmt6(c.mean_abs_gap),
            fmt6(c.corr_xy),
            fmt6(c.fraction_equal)
        );
    }
    println!("sup distance {}  worst z {}  verdict {}", fmt6(report.sup_distance), fmt6(report.worst_z), report.verdict);
}

fn verify_cmd(
    target: Target,
    path: &Path,
    samples: bool,
    dump: &DumpArgs,
    out_dir: &Path,
    workers: usize,
) -> Result<bool, CliError> {
    let config = load(path)?;
    let manifest = RunManifest::start(format!("verify {}", target.name()), Some(config.hash()), Some(config.seed), workers);
    let mut out = OutputDir::create(out_dir)?;
    let (exp, outcome) = verify::with_workers(workers, || -> Result<_, VerifyError> {
        let exp = Experiment::prepare(&config, config.log_horizon, target)?;
        let samples = exp.simulate();
        let report = exp.evaluate(&samples)?;
        Ok((exp, verify::ExperimentOutcome { report, samples }))
    })??;
    let p = exp.model.p();
    out.write("report.json", io::to_json(&outcome.report).as_bytes())?;
    out.write("report.csv", io::report_csv(&outcome.report, p).as_bytes())?;
    out.write("overlay.csv", io::overlay_csv(&outcome.report.points, p).as_bytes())?;
    if samples {
        out.write("samples.csv", io::samples_csv(&outcome.samples).as_bytes())?;
    }
    dump_paths(&exp, dump, &mut out)?;
    print_report(&outcome.report);
    manifest.finish(&mut out)?;
    Ok(outcome.report.verdict.passed())
}

fn sweep(path: &Path, law: Option<Law>, out_dir: &Path, workers: usize) -> Result<bool, CliError> {
    let config = load(path)?;
    let target = match law {
        Some(l) => l.into(),
        None => target_of(&config)?,
    };
    let manifest = RunManifest::start(format!("sweep {}", target.name()), Some(config.hash()), Some(config.seed), workers);
    let mut out = OutputDir::create(out_dir)?;
    let report = verify::convergence_sweep(&config, target, workers)?;
    out.write("sweep.json", io::to_json(&report).as_bytes())?;
    out.write("sweep.csv", io::sweep_csv(&report).as_bytes())?;
    println!("{:>10} {:>14} {:>12} {:>8}", "ln T", "sup distance", "stderr", "verdict");
    for r in &report.rows {
        println!("{:>10} {:>14} {:>12} {:>8}", fmt6(r.log_horizon), fmt6(r.sup_distance), fmt6(r.sup_stderr), r.verdict);
    }
    println!("trend verdict {} (non-increasing: {})", report.verdict, report.non_increasing);
    manifest.finish(&mut out)?;
    Ok(report.verdict.passed())
}

fn parse_coords(s: &str, p: usize) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            match t {
                "inf" | "+inf" => Ok(f64::INFINITY),
                _ => t.parse::<f64>().map_err(|_| CliError::Usage(format!("`{t}` is not a number"))),
            }
        })
        .collect::<Result<_, _>>()?;
    if v.len() != p {
        return Err(CliError::Usage(format!("`{s}` has {} coordinates, the model has {p}", v.len())));
    }
    Ok(v)
}

fn limits_eval(path: &Path, xs: &[String], ys: &[String], law: Option<Law>, workers: usize) -> Result<bool, CliError> {
    let config = load(path)?;
    if xs.len() != ys.len() {
        return Err(CliError::Usage(format!("{} --x values but {} --y values", xs.len(), ys.len())));
    }
    let target = match law {
        Some(l) => l.into(),
        None => target_of(&config)?,
    };
    let p = config.p();
    let spec: LimitSpec = if target == Target::Pickands {
        // needs the estimated constants of the experiment
        verify::with_workers(workers, || Experiment::prepare(&config, config.log_horizon, target))??.limit().clone()
    } else {
        let regime = match target {
            Target::Sparse => LimitRegime::Sparse,
            Target::Dense => LimitRegime::Dense,
            _ => LimitRegime::CorollaryMarginal,
        };
        LimitSpec::new(&config.model()?, regime, None).map_err(VerifyError::from)?
    };
    let integrator = config.integrator.integrator();
    println!("x,y,value,error_estimate");
    for (xa, ya) in xs.iter().zip(ys) {
        let x = parse_coords(xa, p)?;
        let y = parse_coords(ya, p)?;
        let v = limit_cdf(&spec, &x, &y, integrator).map_err(VerifyError::from)?;
        println!("\"{xa}\",\"{ya}\",{},{}", io::fmt17(v.value), io::fmt17(v.error));
    }
    Ok(true)
}

#[derive(Serialize)]
struct PickandsOutput {
    alpha: f64,
    d: f64,
    lambdas: Vec<f64>,
    reps: usize,
    seed: u64,
    estimator: Estimator,
    /// `H_(d,alpha)`, extrapolated in the window.
    value: f64,
    stderr: f64,
    h_d_alpha: Extrapolation,
    h_alpha: Extrapolation,
    h_alpha_closed_form: Option<f64>,
    per_window: Vec<PickandsEstimate>,
}

fn pickands(args: &PickandsArgs, out_dir: &Path, workers: usize) -> Result<bool, CliError> {
    if !(args.lambda.is_finite() && args.lambda > 0.0) {
        return Err(CliError::Usage(format!("--lambda {} must be positive", args.lambda)));
    }
    let lambdas = vec![args.lambda / 4.0, args.lambda / 2.0, args.lambda];
    let opts = PickandsOptions {
        mesh: args.mesh,
        reps: args.reps,
        seed: args.seed,
        estimator: match args.estimator {
            EstimatorArg::Tilted => Estimator::Tilted,
            EstimatorArg::Plain => Estimator::Plain,
        },
        continuous_max: if args.mesh_max { ContinuousMax::Mesh } else { ContinuousMax::Bridge },
    };
    let manifest = RunManifest::start("pickands", None, Some(args.seed), workers);
    let axis = default_table_axis();
    let build = verify::with_workers(workers, || build_constants(args.alpha, args.d, &lambdas, &axis, &axis, &opts))??;
    let per_window = build.h_d_alpha.points.clone();
    let output = PickandsOutput {
        alpha: args.alpha,
        d: args.d,
        lambdas: lambdas.clone(),
        reps: args.reps,
        seed: args.seed,
        estimator: opts.estimator,
        value: build.h_d_alpha.value,
        stderr: build.h_d_alpha.stderr,
        h_d_alpha: build.h_d_alpha,
        h_alpha: build.h_alpha,
        h_alpha_closed_form: known_h_alpha(args.alpha),
        per_window,
    };
    let json = io::to_json(&output);
    print!("{json}");
    let mut out = OutputDir::create(out_dir)?;
    out.write("pickands.json", json.as_bytes())?;
    if args.table {
        let t = &build.table;
        let mut csv = String::from(
            "# columns: x y value stderr (joint constant per unit window at the largest window)\nx,y,value,stderr\n",
        );
        for (i, &x) in t.xs().iter().enumerate() {
            for (j, &y) in t.ys().iter().enumerate() {
                csv.push_str(&format!("{},{},{},{}\n", io::fmt17(x), io::fmt17(y), io::fmt17(t.cell(i, j)), io::fmt17(t.cell_stderr(i, j))));
            }
        }
        out.write("table.csv", csv.as_bytes())?;
    }
    manifest.finish(&mut out)?;
    Ok(true)
}
