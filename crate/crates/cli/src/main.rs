use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prefmobo::benchmarks::BenchmarkName;
use prefmobo::diag;
use prefmobo::engine::Method;
use prefmobo::harness::{manifest, run_experiment, write_csv, ExperimentConfig, RunTrace};
use prefmobo::Error;
use rayon::prelude::*;

/// Interactive multi-objective Bayesian optimization with preference learning.
#[derive(Debug, Parser)]
#[command(name = "prefmobo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one method on one benchmark over a range of seeds.
    Run(RunArgs),
    /// Run several methods on one benchmark, one CSV and manifest per method.
    Sweep(SweepArgs),
    /// Run the numerical self-checks and print one PASS/FAIL line each.
    Diag(DiagArgs),
    /// Start the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; flags given on the command line override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Benchmark name: dtlz1, dtlz3, kursawe, schaffer1, schaffer2, fonseca or poloni.
    #[arg(long, value_parser = parse_benchmark)]
    benchmark: Option<BenchmarkName>,
    /// Number of optimization iterations after the initial design [default: 30].
    #[arg(long, value_name = "N")]
    iters: Option<usize>,
    /// Seeds as an inclusive range `a..b`, a comma list, or a single seed [default: 1..10].
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    /// Noise scale of pairwise-comparison answers [default: 0.1].
    #[arg(long, value_name = "SIGMA")]
    sigma_pc: Option<f64>,
    /// Noise scale of improvement-request answers [default: 0.1].
    #[arg(long, value_name = "SIGMA")]
    sigma_ir: Option<f64>,
    /// Concentration of the symmetric Dirichlet prior on the weights [default: 2].
    #[arg(long)]
    alpha: Option<f64>,
    /// Monte-Carlo sample count for the expected-improvement estimate [default: 1000].
    #[arg(long, value_name = "N")]
    mc_samples: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Method: proposed, proposed-pc, proposed-ir, proposed-pgpm, mobo-rs, ei-tp or random [default: proposed].
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// CSV output path; the manifest goes next to it with a `.manifest.json` suffix. Prints the CSV to stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated methods [default: every method].
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
    /// Output directory, receiving `<benchmark>_<method>.csv` and `.manifest.json` per method.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DiagArgs {
    /// Seed for the randomized checks.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1:8080", value_name = "HOST:PORT")]
    listen: String,
    /// Directory for session snapshots; sessions found there are restored at start-up. Sessions live only in memory when omitted.
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_benchmark(s: &str) -> Result<BenchmarkName, String> {
    s.parse().map_err(|e: Error| config_message(&e))
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| config_message(&e))
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let num = |v: &str| v.trim().parse::<u64>().map_err(|_| format!("invalid seed '{v}'"));
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty seed range {s}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    Ok(Seeds(seeds))
}

fn config_message(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Failure of a subcommand, mapped to the process exit code.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn base_config(args: &ExperimentArgs, method: Option<Method>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let benchmark = args.benchmark.ok_or_else(|| {
                let valid: Vec<&str> = BenchmarkName::ALL.iter().map(|b| b.as_str()).collect();
                Failure::Config(format!("--benchmark is required; valid benchmarks: {}", valid.join(", ")))
            })?;
            ExperimentConfig::new(benchmark, method.unwrap_or(Method::Proposed))
        }
    };
    if let Some(b) = args.benchmark {
        cfg.benchmark = b;
    }
    if let Some(m) = method {
        cfg.method = m;
    }
    if let Some(n) = args.iters {
        cfg.iterations = n;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = s.0.clone();
    }
    if let Some(v) = args.sigma_pc {
        cfg.sigma_pc = v;
    }
    if let Some(v) = args.sigma_ir {
        cfg.sigma_ir = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.mc_samples {
        cfg.mc_samples = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

fn write_outputs(cfg: &ExperimentConfig, traces: &[RunTrace], csv_path: &Path) -> Result<(), Failure> {
    let mut csv = Vec::new();
    write_csv(traces, &mut csv)?;
    fs::write(csv_path, csv).map_err(|e| io_failure(csv_path, e))?;
    let m = manifest_path(csv_path);
    let text = serde_json::to_string_pretty(&manifest(cfg, traces)).expect("manifest serializes");
    fs::write(&m, text + "\n").map_err(|e| io_failure(&m, e))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let cfg = base_config(&args.experiment, args.method)?;
    let traces = run_experiment(&cfg)?;
    match &args.out {
        Some(path) => {
            write_outputs(&cfg, &traces, path)?;
            eprintln!("wrote {} and {}", path.display(), manifest_path(path).display());
        }
        None => {
            let stdout = std::io::stdout();
            write_csv(&traces, stdout.lock())?;
        }
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let base = base_config(&args.experiment, None)?;
    let methods = if args.methods.is_empty() { Method::ALL.to_vec() } else { args.methods.clone() };
    let configs: Vec<ExperimentConfig> =
        methods.iter().map(|&m| ExperimentConfig { method: m, ..base.clone() }).collect();
    for c in &configs {
        c.validate()?;
    }
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let results: Vec<Result<Vec<RunTrace>, Error>> = configs.par_iter().map(run_experiment).collect();
    for (cfg, traces) in configs.iter().zip(results) {
        let traces = traces?;
        let path = args.out.join(format!("{}_{}.csv", cfg.benchmark, cfg.method.as_str()));
        write_outputs(cfg, &traces, &path)?;
        let mean = traces.iter().map(RunTrace::final_regret).sum::<f64>() / traces.len() as f64;
        println!("{}: mean final regret {mean:.4} -> {}", cfg.method.as_str(), path.display());
    }
    Ok(())
}

fn diagnose(args: DiagArgs) -> Result<(), Failure> {
    let checks = diag::run_all(args.seed)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} of {} checks failed", checks.len())));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let state = match &args.data_dir {
        Some(dir) => prefmobo_service::AppState::with_data_dir(dir).map_err(|e| io_failure(dir, e))?,
        None => prefmobo_service::AppState::in_memory(),
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    rt.block_on(prefmobo_service::serve(&args.listen, state))
        .map_err(|e| Failure::Runtime(format!("{}: {e}", args.listen)))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Diag(a) => diagnose(a),
        Command::Serve(a) => serve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            let _ = writeln!(std::io::stderr(), "error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(std::io::stderr(), "error: {m}");
            ExitCode::from(1)
        }
    }
}
