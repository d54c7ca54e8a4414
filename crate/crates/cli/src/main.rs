use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ergowass::covariance::{lemma_suite, mc_covariance, orthant_covariance, write_lemma_report, BivariateGaussianSpec, FunctionTag};
use ergowass::experiment::{emit_report, read_series_csv, read_summary_csv, render_svg, run_experiment, simulate_replication, ExperimentConfig, ReportFormat};
use ergowass::occupation::build_occupation;
use ergowass::rates::{
    abstract_rate, d_thresholds, fractional_rate, limit_rate_wp, nonmarkov_rate, nonmarkov_shorthand, poincare_rate, write_rate_table,
    FractionalSetting, RateGrid, RegimeInput,
};
use ergowass::seed::derive_seed;
use ergowass::{Error, Result};

/// Occupation-measure convergence experiments for ergodic SDEs.
#[derive(Debug, Parser)]
#[command(name = "ergowass", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the base seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate replication 0 and cache its path and occupation measure.
    Simulate,
    /// Print theoretical rate exponents.
    Rate(RateArgs),
    /// Run the experiment and check it against theory.
    Verify,
    /// Monte Carlo check of the Gaussian covariance bound.
    Covcheck(CovArgs),
    /// Re-render the plot from a cached series CSV.
    Plot,
}

#[derive(Debug, Args)]
struct RateArgs {
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = f64::INFINITY)]
    q: f64,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Dump the abstract-rate table over the default grid as CSV instead.
    #[arg(long)]
    table: bool,
}

#[derive(Debug, Args)]
struct CovArgs {
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 || rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().is_err() {
            eprintln!("error: invalid --jobs {jobs}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate => simulate(&cli.global),
        Command::Rate(a) => rate(&cli.global, a),
        Command::Verify => verify(&cli.global),
        Command::Covcheck(a) => covcheck(&cli.global, a),
        Command::Plot => plot(&cli.global),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) | Error::Io { .. } | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let path = g.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn simulate(g: &Global) -> Result<Outcome> {
    let cfg = load_config(g)?;
    let v = cfg.validate()?;
    let law = v.target.resolve(&v.process)?;
    let path = simulate_replication(&cfg, &v, law.as_ref(), 0)?;
    let occ = build_occupation(&path, cfg.experiment.burn_in, cfg.experiment.thinning)?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let stem = cfg.file_stem();
    let bin = dir.join(format!("{stem}-occupation.bin"));
    let csv = dir.join(format!("{stem}-occupation.csv"));
    occ.write_binary(&bin)?;
    occ.write_csv(&csv)?;
    println!("simulated {} steps of {}", path.len() - 1, v.process.describe());
    println!("occupation: {} points, t_effective = {}", occ.count(), occ.t_effective());
    println!("wrote {}", bin.display());
    println!("wrote {}", csv.display());
    Ok(Outcome::Pass)
}

fn rate(g: &Global, a: &RateArgs) -> Result<Outcome> {
    if a.table {
        let grid = RateGrid::default();
        match &g.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join("rate_table.csv");
                let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                let n = write_rate_table(&grid, f)?;
                println!("wrote {n} rows to {}", path.display());
            }
            None => {
                write_rate_table(&grid, std::io::stdout().lock())?;
            }
        }
        return Ok(Outcome::Pass);
    }
    let (p, q, d) = (a.p, a.q, a.d);
    println!("p = {p}, q = {q}, d = {d}, beta = {}, gamma = {}", a.beta, a.gamma);
    if q.is_finite() {
        println!("abstract    : {}", abstract_rate(&RegimeInput::new(p, q, d, a.beta, a.gamma)?));
        println!("poincare    : {}", poincare_rate(p, q, d)?);
        println!("non-Markov  : {}", nonmarkov_rate(p, q, d, a.gamma)?);
    }
    println!("q -> inf    : {}", limit_rate_wp(p, d, a.beta, a.gamma)?);
    println!("shorthand   : {}", nonmarkov_shorthand(p, d, a.gamma, a.epsilon)?);
    let (dm, dp) = d_thresholds(d);
    println!("d_- = {dm}, d_+ = {dp}");
    if let Some(h) = a.hurst {
        println!("fbm         : {}", fractional_rate(FractionalSetting::Fbm { hurst: h }, p, d, a.epsilon)?);
        if d == 1 {
            println!("fOU         : {}", fractional_rate(FractionalSetting::FractionalOu { hurst: h }, p, d, a.epsilon)?);
        }
    }
    if let Some(z) = a.zeta {
        println!("kernel      : {}", fractional_rate(FractionalSetting::GeneralKernel { zeta: z }, p, d, a.epsilon)?);
    }
    Ok(Outcome::Pass)
}

fn verify(g: &Global) -> Result<Outcome> {
    let cfg = load_config(g)?;
    let result = run_experiment(&cfg)?;
    let dir = cfg.output_dir();
    let stem = cfg.file_stem();
    let mut files = emit_report(&result, ReportFormat::Csv, &dir, &stem)?;
    files.extend(emit_report(&result, ReportFormat::SvgPlot, &dir, &stem)?);
    println!("{:>12} {:>14} {:>12} {:>6}", "t", "mean", "se", "n");
    for r in &result.rows {
        println!(
            "{:>12} {:>14.6e} {:>12.3e} {:>6}{}",
            r.t,
            r.mean,
            r.se,
            r.n,
            if r.floored { "  (at sampling floor)" } else { "" }
        );
    }
    if result.floor > 0.0 {
        println!("target sampling floor: {:.6e}", result.floor);
    }
    let v = result.verdict();
    println!("theory: {}", result.theory);
    match result.fit {
        Some(f) => println!("fitted slope {:.4} ± {:.4}", f.slope, f.slope_se),
        None => println!("fitted slope: not enough positive points"),
    }
    println!(
        "verdict: {} (slope {:.4} <= {:.4} + {:.4})",
        if v.pass { "PASS" } else { "FAIL" },
        v.fitted_slope,
        v.theory_slope,
        v.tolerance
    );
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(if v.pass { Outcome::Pass } else { Outcome::Fail })
}

fn covcheck(g: &Global, a: &CovArgs) -> Result<Outcome> {
    let seed = g.seed.unwrap_or(1);
    let catalog = [
        FunctionTag::Indicator(0.0),
        FunctionTag::Indicator(0.5),
        FunctionTag::Identity,
        FunctionTag::ClippedIdentity(1.0),
    ];
    let rhos = [-0.5, -0.3, -0.1, 0.1, 0.3, 0.5];
    let rows = lemma_suite(&catalog, &rhos, a.samples, seed)?;
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("covcheck.csv");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_lemma_report(&rows, f)?;
    let failures = rows.iter().filter(|r| !r.pass).count();
    let worst = rows
        .iter()
        .filter(|r| r.bound > 0.0)
        .map(|r| r.estimate.abs() / r.bound)
        .fold(0.0, f64::max);
    println!("{} cases, {} failures, worst |estimate|/bound = {:.4}", rows.len(), failures, worst);
    let spec = BivariateGaussianSpec::new(1.0, 0.4)?;
    let ind = FunctionTag::Indicator(0.0);
    let (est, se) = mc_covariance(&spec, ind, ind, a.samples, derive_seed(seed, 1 << 20))?;
    let exact = orthant_covariance(0.4);
    let orthant_ok = (est - exact).abs() <= 3.0 * se;
    println!(
        "orthant check: estimate {est:.6} ± {se:.6}, exact {exact:.6}: {}",
        if orthant_ok { "PASS" } else { "FAIL" }
    );
    println!("wrote {}", path.display());
    Ok(if failures == 0 && orthant_ok { Outcome::Pass } else { Outcome::Fail })
}

fn plot(g: &Global) -> Result<Outcome> {
    let cfg = load_config(g)?;
    let dir = cfg.output_dir();
    let stem = cfg.file_stem();
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| Error::io(p, e));
    let series_path = dir.join(format!("{stem}.csv"));
    let summary_path = dir.join(format!("{stem}-summary.csv"));
    let series = read_series_csv(open(&series_path)?)?;
    let summary = read_summary_csv(open(&summary_path)?)?;
    let svg_path = dir.join(format!("{stem}.svg"));
    std::fs::write(&svg_path, render_svg(&series, &summary)).map_err(|e| Error::io(&svg_path, e))?;
    println!("wrote {}", svg_path.display());
    Ok(Outcome::Pass)
}
