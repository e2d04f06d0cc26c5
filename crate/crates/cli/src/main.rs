use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use qrl::envs::EnvKind;
use qrl::harness::{self, RunConfig, MOVING_AVERAGE_WINDOW};
use qrl::models::QPolicyModel;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "qrl", version, about = "Quantum variational circuit Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over several seeds and write CSVs and checkpoints.
    Run(RunArgs),
    /// Greedy rollout of a saved checkpoint.
    Eval(EvalArgs),
    /// Compare parameter-shift gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Render per-seed or aggregate CSVs as an SVG learning-curve plot.
    Plot(PlotArgs),
}

/// Every config-file key is also a flag; flags win over the file.
#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    episodes: Option<String>,
    /// Comma list and/or inclusive ranges, e.g. `1..6` or `1,4,9`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, alias = "out_dir")]
    out_dir: Option<String>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long, alias = "batch_size")]
    batch_size: Option<String>,
    #[arg(long)]
    capacity: Option<String>,
    /// Hard-copy period C, in episodes.
    #[arg(long, alias = "target_period")]
    target_period: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    /// `per_episode` or `per_step`.
    #[arg(long, alias = "update_timing")]
    update_timing: Option<String>,
    #[arg(long, alias = "terminal_masking")]
    terminal_masking: Option<String>,
    #[arg(long, alias = "circuit_lr")]
    circuit_lr: Option<String>,
    #[arg(long, alias = "dense_lr")]
    dense_lr: Option<String>,
    #[arg(long, alias = "epsilon_start")]
    epsilon_start: Option<String>,
    #[arg(long, alias = "epsilon_decay")]
    epsilon_decay: Option<String>,
    #[arg(long, alias = "epsilon_min")]
    epsilon_min: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    /// Pure-QVC Q multiplier, or `auto`.
    #[arg(long, alias = "output_scale")]
    output_scale: Option<String>,
    #[arg(long, alias = "max_steps")]
    max_steps: Option<String>,
    /// Scaled-encoder ranges, `lo:hi` per input, comma separated.
    #[arg(long)]
    ranges: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        let fields = [
            ("env", &self.env),
            ("model", &self.model),
            ("algo", &self.algo),
            ("episodes", &self.episodes),
            ("seeds", &self.seeds),
            ("out_dir", &self.out_dir),
            ("label", &self.label),
            ("gamma", &self.gamma),
            ("batch_size", &self.batch_size),
            ("capacity", &self.capacity),
            ("target_period", &self.target_period),
            ("tau", &self.tau),
            ("update_timing", &self.update_timing),
            ("terminal_masking", &self.terminal_masking),
            ("circuit_lr", &self.circuit_lr),
            ("dense_lr", &self.dense_lr),
            ("epsilon_start", &self.epsilon_start),
            ("epsilon_decay", &self.epsilon_decay),
            ("epsilon_min", &self.epsilon_min),
            ("layers", &self.layers),
            ("output_scale", &self.output_scale),
            ("max_steps", &self.max_steps),
            ("ranges", &self.ranges),
        ];
        fields.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k, v))).collect()
    }

    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text)?;
        }
        for (key, value) in self.overrides() {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, alias = "max_steps", default_value_t = 200)]
    max_steps: u32,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 200)]
    circuits: usize,
    #[arg(long, default_value_t = 20)]
    models: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-6)]
    h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exit non-zero if either deviation exceeds this.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

#[derive(Args)]
struct PlotArgs {
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Per-seed CSVs (grouped by run id) or aggregate CSVs (labelled by file stem).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

fn run(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = args.resolve()?;
    if args.dry_run {
        print!("{}", cfg.describe());
        return Ok(());
    }
    info!("running {} over seeds {:?}", cfg.run_id(), cfg.seeds);
    let out = harness::run_experiment(&cfg)?;
    for (run, path) in out.runs.iter().zip(&out.seed_csvs) {
        let rewards: Vec<f64> = run.records.iter().map(|r| r.reward).collect();
        let last = harness::moving_average(&rewards, MOVING_AVERAGE_WINDOW)?.last().copied();
        match last {
            Some(ma) => println!("seed {}: final {MOVING_AVERAGE_WINDOW}-episode average {ma:.4} -> {}", run.seed, path.display()),
            None => println!("seed {}: {} episodes -> {}", run.seed, rewards.len(), path.display()),
        }
    }
    println!("aggregate -> {}", out.aggregate_csv.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.checkpoint)
        .with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let model = QPolicyModel::from_checkpoint(&text)?;
    let env_kind: EnvKind = args.env.parse()?;
    let mut env = env_kind.make(args.max_steps);
    let returns = harness::greedy_rollout(&model, env.as_mut(), args.episodes, args.seed)?;
    let (mean, half) = harness::mean_ci95(&returns);
    match half {
        Some(h) => println!("{} episodes: mean reward {mean:.4} ± {h:.4} (95% CI)", returns.len()),
        None => println!("{} episodes: mean reward {mean:.4}", returns.len()),
    }
    Ok(())
}

fn gradcheck(args: &GradcheckArgs) -> anyhow::Result<()> {
    let report = harness::gradcheck(args.circuits, args.models, args.h, args.seed)?;
    println!("circuits checked:      {}", report.circuits);
    println!("max circuit deviation: {:.3e}", report.max_circuit_deviation);
    println!("hybrid models checked: {}", report.hybrid_models);
    println!("max model deviation:   {:.3e}", report.max_model_deviation);
    if report.max_circuit_deviation > args.tolerance || report.max_model_deviation > args.tolerance {
        bail!("gradient deviation exceeds tolerance {:e}", args.tolerance);
    }
    Ok(())
}

fn plot(args: &PlotArgs) -> anyhow::Result<()> {
    let mut series = Vec::new();
    let mut seed_files = Vec::new();
    for path in &args.inputs {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if text.starts_with(harness::AGGREGATE_CSV_HEADER) {
            let label = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            series.push((label.trim_end_matches("-aggregate").to_string(), harness::parse_aggregate_csv(&text)?));
        } else {
            seed_files.push(path);
        }
    }
    series.extend(harness::aggregate_files(&seed_files, MOVING_AVERAGE_WINDOW)?);
    harness::emit_plot(&series, &args.out)?;
    println!("plot -> {}", args.out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<qrl::Error>() {
        Some(qrl::Error::Config(_) | qrl::Error::Parse(_)) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var("QRL_THREADS") {
        let threads: usize = value.parse().map_err(|_| qrl::Error::Config(format!("QRL_THREADS='{value}' is not a count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run(args) => run(args),
        Command::Eval(args) => eval(args),
        Command::Gradcheck(args) => gradcheck(args),
        Command::Plot(args) => plot(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
