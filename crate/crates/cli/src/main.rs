use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use lqr_core::control::{optimal_controller, solve_dare, DEFAULT_DARE_MAX_ITER, DEFAULT_DARE_TOL};
use lqr_core::harness::config::{ExperimentConfig, SystemSpec};
use lqr_core::harness::fit::{fit_exponent, fit_log_squared, fit_sqrt, read_final_regrets};
use lqr_core::harness::run::run_experiment;
use lqr_core::learners::calibrate::{calibrate, log_grid, Perturbed};
use lqr_core::learners::Mode;
use lqr_core::linalg::to_rows;
use lqr_core::lowerbound::{lower_bound_experiment, LowerBoundConfig};
use lqr_core::rng::{Purpose, RngStream};
use lqr_core::simulation::{rollout, Trajectory};
use lqr_core::LqrError;

#[derive(Parser)]
#[command(name = "lqr", version, about = "Online LQR learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Theoretical,
    Practical,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Theoretical => Mode::Theoretical,
            ModeArg::Practical => Mode::Practical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PerturbArg {
    A,
    B,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Riccati equation of the [system] in a config file and print P, K and J⋆.
    Dare {
        #[arg(long)]
        config: PathBuf,
    },
    /// One rollout of one learner; optionally dump the trajectory as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Learner name (defaults to the first learner).
        #[arg(long)]
        learner: Option<String>,
        /// Horizon (defaults to the largest in t_grid).
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_trajectory: bool,
    },
    /// Run a Monte Carlo regret experiment and write curves.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Regret scaling on the randomized scalar family with a degenerate optimal gain.
    LowerBound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Exponent, log² and √T fits of the final regrets in a curves CSV.
    Fit {
        #[arg(long)]
        curves: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the perturbation constants C₀ and ε₀ of the [system] in a config file.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "a")]
        perturb: PerturbArg,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps_min: f64,
        #[arg(long, default_value_t = 1.0)]
        eps_max: f64,
        #[arg(long, default_value_t = 16)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<LqrError> for Failure {
    fn from(e: LqrError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Pretty JSON to `<out>/<name>` if `out` is set, stdout otherwise.
fn emit(out: Option<&Path>, name: &str, value: &serde_json::Value) -> CliResult<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut f = BufWriter::new(File::create(dir.join(name))?);
            serde_json::to_writer_pretty(&mut f, value)?;
            writeln!(f)?;
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn load_experiment(path: &Path, seed: Option<u64>, mode: Option<ModeArg>) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_toml(&read(path)?)?;
    if let Some(s) = seed {
        cfg.experiment.base_seed = s;
    }
    if let Some(m) = mode {
        for l in &mut cfg.learners {
            l.mode = m.into();
        }
    }
    Ok(cfg)
}

fn dare(config: &Path) -> CliResult<()> {
    let sys = SystemSpec::from_toml(&read(config)?)?.build()?;
    let sol = solve_dare(&sys, DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITER)?;
    let k = optimal_controller(&sys, &sol)?;
    let j = sys.sigma * sys.sigma * sol.p.trace();
    emit(
        None,
        "",
        &json!({
            "P": to_rows(&sol.p),
            "K": to_rows(&k.gain),
            "J": j,
            "residual": sol.residual,
            "iterations": sol.iterations,
        }),
    )
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: &Path,
    learner: Option<String>,
    horizon: Option<usize>,
    seed: Option<u64>,
    mode: Option<ModeArg>,
    out: Option<PathBuf>,
    dump: bool,
) -> CliResult<()> {
    let cfg = load_experiment(config, seed, mode)?;
    let sys = cfg.system.build()?;
    let spec = match &learner {
        Some(name) => cfg
            .learners
            .iter()
            .find(|l| &l.label() == name)
            .ok_or_else(|| Failure::Config(format!("no learner named '{name}'")))?,
        None => &cfg.learners[0],
    };
    let horizon = horizon.unwrap_or(*cfg.experiment.t_grid.last().unwrap());
    let base = cfg.experiment.base_seed;
    let mut policy = spec.build(&sys, horizon, base, 0)?;
    let noise = RngStream::for_trial(base, horizon as u64, 0, Purpose::SystemNoise)?;
    let traj: Trajectory = rollout(&sys, policy.as_mut(), horizon, noise, None)?;
    let j_star = sys.optimal_cost()?;
    let report = policy.report();
    let total = traj.total_cost();
    if dump {
        match &out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                traj.write_csv(BufWriter::new(File::create(dir.join("trajectory.csv"))?))?;
            }
            None => traj.write_csv(std::io::stdout().lock())?,
        }
    }
    let summary = json!({
        "learner": spec.label(),
        "T": horizon,
        "j_star": j_star,
        "total_cost": total,
        "regret": total - horizon as f64 * j_star,
        "abort": report.abort,
        "warmup_phases": report.warmup_phases,
        "params": spec.derived_params(&sys, horizon)?,
    });
    if dump && out.is_none() {
        eprintln!("{}", serde_json::to_string_pretty(&summary)?);
        Ok(())
    } else {
        emit(out.as_deref(), "simulate.json", &summary)
    }
}

fn run(config: &Path, seed: Option<u64>, mode: Option<ModeArg>, out: Option<PathBuf>, workers: Option<usize>) -> CliResult<()> {
    let cfg = load_experiment(config, seed, mode)?;
    let dir = out
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| Failure::Config("no output directory (use --out or [output] dir)".into()))?;
    let result = run_experiment(&cfg, workers.unwrap_or_else(default_workers))?;
    result.write_outputs(&dir)?;
    let summary = result.summary()?;
    for l in &summary.learners {
        let last = l.horizons.last().unwrap();
        match &l.fits {
            Some(f) => log::info!(
                "{}: mean regret {:.1} at T = {}, beta = {:.3} [{:.3}, {:.3}]",
                l.name,
                last.mean_regret,
                last.horizon,
                f.exponent.beta,
                f.exponent.ci.0,
                f.exponent.ci.1
            ),
            None => log::info!("{}: mean regret {:.1} at T = {}", l.name, last.mean_regret, last.horizon),
        }
    }
    if !summary.failures.is_empty() {
        log::warn!("{} runs failed; see summary.json", summary.failures.len());
    }
    println!("{}", dir.display());
    Ok(())
}

fn lower_bound(config: &Path, seed: Option<u64>, mode: Option<ModeArg>, out: Option<PathBuf>, workers: Option<usize>) -> CliResult<()> {
    let mut cfg = LowerBoundConfig::from_toml(&read(config)?)?;
    if let Some(s) = seed {
        cfg.lower_bound.base_seed = s;
    }
    let lb = cfg.lower_bound.clone();
    let workers = workers.unwrap_or_else(default_workers);
    let mut reports = serde_json::Map::new();
    for l in &mut cfg.learners {
        if let Some(m) = mode {
            l.mode = m.into();
        }
        let report = lower_bound_experiment(&*l, &lb, workers)?;
        reports.insert(l.label(), serde_json::to_value(report)?);
    }
    emit(out.as_deref(), "lower_bound.json", &serde_json::Value::Object(reports))
}

fn fit(curves: &Path, seed: u64, out: Option<PathBuf>) -> CliResult<()> {
    let file = File::open(curves).map_err(|e| Failure::Config(format!("{}: {e}", curves.display())))?;
    let mut fits = serde_json::Map::new();
    for (i, (name, samples)) in read_final_regrets(file)?.into_iter().enumerate() {
        let mut rng = RngStream::for_trial(seed, 0, i as u64, Purpose::Bootstrap)?;
        let means = samples.means();
        fits.insert(
            name,
            json!({
                "T": samples.t_grid,
                "mean_regret": means,
                "stderr": samples.stderrs(),
                "exponent": fit_exponent(&samples, &mut rng)?,
                "log_squared": fit_log_squared(&samples.t_grid, &means)?,
                "sqrt": fit_sqrt(&samples.t_grid, &means)?,
            }),
        );
    }
    emit(out.as_deref(), "fits.json", &serde_json::Value::Object(fits))
}

#[allow(clippy::too_many_arguments)]
fn calibrate_cmd(
    config: &Path,
    perturb: PerturbArg,
    samples: usize,
    eps_min: f64,
    eps_max: f64,
    points: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> CliResult<()> {
    if !(eps_min > 0.0 && eps_max > eps_min && points >= 2) {
        return Err(Failure::Config("need 0 < eps-min < eps-max and at least 2 points".into()));
    }
    let sys = SystemSpec::from_toml(&read(config)?)?.build()?;
    let which = match perturb {
        PerturbArg::A => Perturbed::A,
        PerturbArg::B => Perturbed::B,
    };
    let mut rng = RngStream::new(seed, Purpose::Generator as u64);
    let cal = calibrate(&sys, which, &log_grid(eps_min, eps_max, points), samples, &mut rng)?;
    emit(out.as_deref(), "calibration.json", &serde_json::to_value(cal)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Dare { config } => dare(&config),
        Command::Simulate { config, learner, horizon, seed, mode, out, dump_trajectory } => {
            simulate(&config, learner, horizon, seed, mode, out, dump_trajectory)
        }
        Command::Run { config, seed, mode, out, workers } => run(&config, seed, mode, out, workers),
        Command::LowerBound { config, seed, mode, out, workers } => lower_bound(&config, seed, mode, out, workers),
        Command::Fit { curves, seed, out } => fit(&curves, seed, out),
        Command::Calibrate { config, perturb, samples, eps_min, eps_max, points, seed, out } => {
            calibrate_cmd(&config, perturb, samples, eps_min, eps_max, points, seed, out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
