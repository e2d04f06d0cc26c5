//! Experiment configuration, multi-seed runs, learning-curve aggregation and
//! CSV / SVG output.
//!
//! Per-seed CSV header: `run_id,seed,episode,reward,epsilon,loss`.
//! Aggregate CSV header: `episode,mean_ma50,ci95_half`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use crate::circuit::random_circuit;
use crate::diffgrad::{finite_diff_oracle, shift_gradient};
use crate::encoding::{Encoder, RangeSpec};
use crate::envs::{random_agent_returns, seeded_rng, EnvKind, Environment};
use crate::error::{config, Error, Result};
use crate::models::QPolicyModel;
use crate::nn::{baseline_mlp_for, AdamConfig, BaselineEnv};
use crate::rlagent::{argmax, Algo, EpisodeRecord, EpsilonSchedule, Trainer, TrainerConfig, UpdateTiming};

pub const SEED_CSV_HEADER: &str = "run_id,seed,episode,reward,epsilon,loss";
pub const AGGREGATE_CSV_HEADER: &str = "episode,mean_ma50,ci95_half";
pub const MOVING_AVERAGE_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelChoice {
    Pure,
    Hybrid,
    Mlp1,
    Mlp2,
    Mlp3,
    Random,
}

impl ModelChoice {
    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Pure => "pure",
            ModelChoice::Hybrid => "hybrid",
            ModelChoice::Mlp1 => "mlp1",
            ModelChoice::Mlp2 => "mlp2",
            ModelChoice::Mlp3 => "mlp3",
            ModelChoice::Random => "random",
        }
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pure" => ModelChoice::Pure,
            "hybrid" => ModelChoice::Hybrid,
            "mlp1" => ModelChoice::Mlp1,
            "mlp2" => ModelChoice::Mlp2,
            "mlp3" => ModelChoice::Mlp3,
            "random" => ModelChoice::Random,
            _ => return config(format!("unknown model '{s}'")),
        })
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvKind,
    pub model: ModelChoice,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub trainer: TrainerConfig,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub layers: usize,
    /// `None` picks the per-environment default (100 for CartPole, 1 for Blackjack).
    pub output_scale: Option<f64>,
    pub max_steps: u32,
    pub ranges: RangeSpec,
    pub label: Option<String>,
}

/// Keys accepted by [`RunConfig::set`], in the order `describe` prints them.
pub const CONFIG_KEYS: &[&str] = &[
    "env",
    "model",
    "algo",
    "episodes",
    "seeds",
    "out_dir",
    "label",
    "gamma",
    "batch_size",
    "capacity",
    "target_period",
    "tau",
    "update_timing",
    "terminal_masking",
    "circuit_lr",
    "dense_lr",
    "epsilon_start",
    "epsilon_decay",
    "epsilon_min",
    "layers",
    "output_scale",
    "max_steps",
    "ranges",
];

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Blackjack,
            model: ModelChoice::Pure,
            episodes: 1000,
            seeds: (1..=6).collect(),
            out_dir: PathBuf::from("runs"),
            trainer: TrainerConfig::default(),
            epsilon_start: 1.0,
            epsilon_decay: 0.9,
            epsilon_min: 0.01,
            layers: 3,
            output_scale: None,
            max_steps: 200,
            ranges: RangeSpec::blackjack(),
            label: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi): (u64, u64) = (parse("seeds", lo)?, parse("seeds", hi.trim_start_matches('='))?);
                if lo > hi {
                    return config(format!("empty seed range '{part}'"));
                }
                seeds.extend(lo..=hi);
            }
            None => seeds.push(parse("seeds", part)?),
        }
    }
    Ok(seeds)
}

fn parse_ranges(value: &str) -> Result<RangeSpec> {
    let bounds = value
        .split(',')
        .map(|r| {
            let (lo, hi) = r.split_once(':').ok_or_else(|| Error::Config(format!("range '{r}' is not lo:hi")))?;
            Ok((parse("ranges", lo.trim())?, parse("ranges", hi.trim())?))
        })
        .collect::<Result<Vec<_>>>()?;
    RangeSpec::new(bounds)
}

impl RunConfig {
    /// Sets one `key = value` pair. Keys are listed in [`CONFIG_KEYS`];
    /// hyphens and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let value = value.trim();
        let t = &mut self.trainer;
        match key.as_str() {
            "env" => self.env = value.parse()?,
            "model" => self.model = value.parse()?,
            "algo" => t.algo = value.parse()?,
            "episodes" => self.episodes = parse(&key, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "label" => self.label = Some(value.to_string()),
            "gamma" => t.gamma = parse(&key, value)?,
            "batch_size" => t.batch_size = parse(&key, value)?,
            "capacity" => t.capacity = parse(&key, value)?,
            "target_period" => t.hard_copy_every = parse(&key, value)?,
            "tau" => t.tau = parse(&key, value)?,
            "update_timing" => t.update_timing = value.parse()?,
            "terminal_masking" => t.terminal_masking = parse(&key, value)?,
            "circuit_lr" => t.circuit_adam = AdamConfig::with_lr(parse(&key, value)?),
            "dense_lr" => t.dense_adam = AdamConfig::with_lr(parse(&key, value)?),
            "epsilon_start" => self.epsilon_start = parse(&key, value)?,
            "epsilon_decay" => self.epsilon_decay = parse(&key, value)?,
            "epsilon_min" => self.epsilon_min = parse(&key, value)?,
            "layers" => self.layers = parse(&key, value)?,
            "output_scale" => {
                self.output_scale = if value == "auto" { None } else { Some(parse(&key, value)?) };
            }
            "max_steps" => self.max_steps = parse(&key, value)?,
            "ranges" => self.ranges = parse_ranges(value)?,
            _ => return config(format!("unknown config key '{key}'")),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Round-trips through [`Self::from_text`].
    pub fn describe(&self) -> String {
        let t = &self.trainer;
        let ranges: Vec<String> = self.ranges.bounds().iter().map(|(lo, hi)| format!("{lo}:{hi}")).collect();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("env", self.env.name().into());
        line("model", self.model.name().into());
        line("algo", t.algo.name().into());
        line("episodes", self.episodes.to_string());
        line("seeds", seeds.join(","));
        line("out_dir", self.out_dir.display().to_string());
        if let Some(label) = &self.label {
            line("label", label.clone());
        }
        line("gamma", t.gamma.to_string());
        line("batch_size", t.batch_size.to_string());
        line("capacity", t.capacity.to_string());
        line("target_period", t.hard_copy_every.to_string());
        line("tau", t.tau.to_string());
        line("update_timing", t.update_timing.name().into());
        line("terminal_masking", t.terminal_masking.to_string());
        line("circuit_lr", t.circuit_adam.lr.to_string());
        line("dense_lr", t.dense_adam.lr.to_string());
        line("epsilon_start", self.epsilon_start.to_string());
        line("epsilon_decay", self.epsilon_decay.to_string());
        line("epsilon_min", self.epsilon_min.to_string());
        line("layers", self.layers.to_string());
        line("output_scale", self.output_scale.map_or("auto".into(), |s| s.to_string()));
        line("max_steps", self.max_steps.to_string());
        line("ranges", ranges.join(","));
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return config("at least one seed is required");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return config("seeds must be distinct");
        }
        if self.episodes == 0 {
            return config("episodes must be at least 1");
        }
        if self.max_steps == 0 {
            return config("max_steps must be at least 1");
        }
        if self.run_id().contains([',', '/', '\\']) {
            return config("label may not contain ',' or path separators");
        }
        self.trainer.validate()?;
        self.schedule()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<EpsilonSchedule> {
        EpsilonSchedule::new(self.epsilon_start, self.epsilon_decay, self.epsilon_min)
    }

    pub fn run_id(&self) -> String {
        match &self.label {
            Some(label) => label.clone(),
            None if self.model == ModelChoice::Random => format!("{}-random", self.env.name()),
            None => format!("{}-{}-{}", self.env.name(), self.model.name(), self.trainer.algo.name()),
        }
    }

    /// Directional for CartPole (unbounded inputs), Scaled for Blackjack.
    pub fn encoder(&self) -> Encoder {
        match self.env {
            EnvKind::CartPole => Encoder::Directional,
            EnvKind::Blackjack => Encoder::Scaled(self.ranges.clone()),
        }
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale.unwrap_or(match self.env {
            EnvKind::CartPole => 100.0,
            EnvKind::Blackjack => 1.0,
        })
    }

    pub fn build_env(&self) -> Box<dyn Environment> {
        self.env.make(self.max_steps)
    }

    /// Fresh model for this config; `None` for the random agent.
    pub fn build_model(&self, rng: &mut impl Rng) -> Result<Option<QPolicyModel>> {
        let env = self.build_env();
        let (n_in, n_act) = (env.obs_len(), env.action_count());
        let baseline_env = match self.env {
            EnvKind::CartPole => BaselineEnv::CartPole,
            EnvKind::Blackjack => BaselineEnv::Blackjack,
        };
        let encoder = self.encoder();
        let model = match self.model {
            ModelChoice::Random => return Ok(None),
            ModelChoice::Pure => QPolicyModel::pure(n_in, n_act, self.layers, encoder, self.output_scale(), rng)?,
            ModelChoice::Hybrid => QPolicyModel::hybrid(n_in, n_act, self.layers, encoder, rng)?,
            ModelChoice::Mlp1 => QPolicyModel::mlp(&baseline_mlp_for(baseline_env, 1)?, encoder, rng)?,
            ModelChoice::Mlp2 => QPolicyModel::mlp(&baseline_mlp_for(baseline_env, 2)?, encoder, rng)?,
            ModelChoice::Mlp3 => QPolicyModel::mlp(&baseline_mlp_for(baseline_env, 3)?, encoder, rng)?,
        };
        Ok(Some(model))
    }
}

/// Result of one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    /// Final online model; `None` for the random agent.
    pub model: Option<QPolicyModel>,
}

/// Trains (or runs the random agent) for one seed. Model initialization and
/// the episode stream share one generator seeded with `seed`.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    let mut rng = seeded_rng(seed);
    let mut env = cfg.build_env();
    match cfg.build_model(&mut rng)? {
        None => {
            let returns = random_agent_returns(env.as_mut(), cfg.episodes, &mut rng)?;
            let records = returns
                .into_iter()
                .enumerate()
                .map(|(i, reward)| EpisodeRecord { episode: i + 1, reward, epsilon: 1.0, loss: 0.0 })
                .collect();
            Ok(SeedRun { seed, records, model: None })
        }
        Some(model) => {
            let mut trainer = Trainer::new(model, cfg.trainer, cfg.schedule()?)?;
            let records = trainer.train(env.as_mut(), cfg.episodes, &mut rng)?;
            Ok(SeedRun { seed, records, model: Some(trainer.pair.online) })
        }
    }
}

pub fn seed_csv(run_id: &str, seed: u64, records: &[EpisodeRecord]) -> String {
    let mut out = String::from(SEED_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{run_id},{seed},{},{},{},{}", r.episode, r.reward, r.epsilon, r.loss);
    }
    out
}

/// Parsed per-seed CSV: `(run_id, seed, rewards in episode order)`.
pub fn parse_seed_csv(text: &str) -> Result<(String, u64, Vec<f64>)> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SEED_CSV_HEADER) {
        return Err(Error::Parse(format!("expected header '{SEED_CSV_HEADER}'")));
    }
    let mut run_id = None;
    let mut seed = None;
    let mut rewards = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse(format!("row {}: malformed '{line}'", n + 2));
        if fields.len() != 6 {
            return Err(bad());
        }
        let episode: usize = fields[2].parse().map_err(|_| bad())?;
        if episode != rewards.len() + 1 {
            return Err(Error::Parse(format!("row {}: episodes must be contiguous from 1", n + 2)));
        }
        run_id.get_or_insert_with(|| fields[0].to_string());
        seed.get_or_insert(fields[1].parse::<u64>().map_err(|_| bad())?);
        rewards.push(fields[3].parse().map_err(|_| bad())?);
    }
    match (run_id, seed) {
        (Some(r), Some(s)) => Ok((r, s, rewards)),
        _ => Err(Error::Parse("no data rows".into())),
    }
}

/// Trailing mean over `window` entries; the output starts at the first full
/// window, so its length is `len − window + 1` (or 0).
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return config("moving-average window must be at least 1");
    }
    Ok(series.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect())
}

/// Mean and 95% half-width `1.96 · s / √k` of one cross-seed sample.
/// The half-width is `None` for a single value.
pub fn mean_ci95(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len() as f64;
    if values.windows(2).all(|w| w[0] == w[1]) {
        return (values[0], (values.len() > 1).then_some(0.0));
    }
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, Some(1.96 * var.sqrt() / k.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    /// Episode numbers (1-based) of each point; starts at the window size.
    pub episodes: Vec<usize>,
    pub mean: Vec<f64>,
    /// `None` when only one seed was available.
    pub ci95_half: Option<Vec<f64>>,
}

/// Moving average per seed, then mean and 95% CI across seeds per episode.
/// Series are truncated to the shortest one.
pub fn aggregate_ci95(per_seed: &[Vec<f64>], window: usize) -> Result<AggregateStats> {
    if per_seed.is_empty() {
        return config("aggregation needs at least one series");
    }
    if per_seed.len() == 1 {
        warn!("only one seed: confidence interval undefined, emitting mean only");
    }
    let len = per_seed.iter().map(Vec::len).min().unwrap_or(0);
    let averaged = per_seed.iter().map(|s| moving_average(&s[..len], window)).collect::<Result<Vec<_>>>()?;
    let points = averaged.first().map_or(0, Vec::len);
    let mut mean = Vec::with_capacity(points);
    let mut half = Vec::with_capacity(points);
    for t in 0..points {
        let column: Vec<f64> = averaged.iter().map(|s| s[t]).collect();
        let (m, h) = mean_ci95(&column);
        mean.push(m);
        half.push(h.unwrap_or(f64::NAN));
    }
    Ok(AggregateStats {
        episodes: (window..window + points).collect(),
        mean,
        ci95_half: (per_seed.len() > 1).then_some(half),
    })
}

pub fn aggregate_csv(stats: &AggregateStats) -> String {
    let mut out = String::from(AGGREGATE_CSV_HEADER);
    out.push('\n');
    for (i, (e, m)) in stats.episodes.iter().zip(&stats.mean).enumerate() {
        match &stats.ci95_half {
            Some(h) => writeln!(out, "{e},{m},{}", h[i]),
            None => writeln!(out, "{e},{m},"),
        }
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn parse_aggregate_csv(text: &str) -> Result<AggregateStats> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(AGGREGATE_CSV_HEADER) {
        return Err(Error::Parse(format!("expected header '{AGGREGATE_CSV_HEADER}'")));
    }
    let mut stats = AggregateStats { episodes: vec![], mean: vec![], ci95_half: Some(vec![]) };
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let bad = || Error::Parse(format!("malformed aggregate row '{line}'"));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad());
        }
        stats.episodes.push(fields[0].parse().map_err(|_| bad())?);
        stats.mean.push(fields[1].parse().map_err(|_| bad())?);
        if fields[2].is_empty() {
            stats.ci95_half = None;
        } else if let Some(h) = stats.ci95_half.as_mut() {
            h.push(fields[2].parse().map_err(|_| bad())?);
        }
    }
    Ok(stats)
}

/// Files produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub seed_csvs: Vec<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub aggregate_csv: PathBuf,
    pub aggregate: AggregateStats,
    pub runs: Vec<SeedRun>,
}

pub fn seed_csv_path(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.out_dir.join(format!("{}-seed{seed}.csv", cfg.run_id()))
}

/// Runs every seed (in parallel), writes one CSV and one checkpoint per seed,
/// then the aggregate CSV.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let run_id = cfg.run_id();
    let runs: Vec<SeedRun> = cfg.seeds.par_iter().map(|&seed| run_seed(cfg, seed)).collect::<Result<_>>()?;
    let mut seed_csvs = Vec::new();
    let mut checkpoints = Vec::new();
    for run in &runs {
        let path = seed_csv_path(cfg, run.seed);
        fs::write(&path, seed_csv(&run_id, run.seed, &run.records))?;
        seed_csvs.push(path);
        if let Some(model) = &run.model {
            let path = cfg.out_dir.join(format!("{run_id}-seed{}.model", run.seed));
            fs::write(&path, model.to_checkpoint())?;
            checkpoints.push(path);
        }
    }
    let rewards: Vec<Vec<f64>> = runs.iter().map(|r| r.records.iter().map(|e| e.reward).collect()).collect();
    let aggregate = aggregate_ci95(&rewards, MOVING_AVERAGE_WINDOW)?;
    let aggregate_path = cfg.out_dir.join(format!("{run_id}-aggregate.csv"));
    fs::write(&aggregate_path, aggregate_csv(&aggregate))?;
    fs::write(cfg.out_dir.join(format!("{run_id}.config")), cfg.describe())?;
    Ok(ExperimentOutput { seed_csvs, checkpoints, aggregate_csv: aggregate_path, aggregate, runs })
}

/// Re-aggregates per-seed CSV files, grouped by run id (sorted).
pub fn aggregate_files(paths: &[impl AsRef<Path>], window: usize) -> Result<Vec<(String, AggregateStats)>> {
    let mut groups: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for path in paths {
        let (run_id, seed, rewards) = parse_seed_csv(&fs::read_to_string(path)?)?;
        groups.entry(run_id).or_default().insert(seed, rewards);
    }
    groups
        .into_iter()
        .map(|(id, seeds)| Ok((id, aggregate_ci95(&seeds.into_values().collect::<Vec<_>>(), window)?)))
        .collect()
}

/// Greedy (ε = 0) returns of `model` over `episodes` episodes.
pub fn greedy_rollout(model: &QPolicyModel, env: &mut dyn Environment, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    if env.obs_len() != model.n_inputs() || env.action_count() != model.n_actions() {
        return config("checkpoint shape does not match the environment");
    }
    let mut rng = seeded_rng(seed);
    (0..episodes)
        .map(|_| {
            let mut obs = env.reset(&mut rng);
            let mut total = 0.0;
            loop {
                let action = argmax(&model.q_values_for_obs(&obs)?);
                let step = env.step(action, &mut rng)?;
                total += step.reward;
                if step.done {
                    return Ok(total);
                }
                obs = step.obs;
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub circuits: usize,
    pub hybrid_models: usize,
    pub max_circuit_deviation: f64,
    pub max_model_deviation: f64,
}

/// Compares parameter-shift gradients with central differences on random
/// circuits (up to 5 qubits, 30 parameters) and on random hybrid models
/// end to end.
pub fn gradcheck(circuits: usize, hybrid_models: usize, h: f64, seed: u64) -> Result<GradcheckReport> {
    let mut rng = seeded_rng(seed);
    let mut max_circuit: f64 = 0.0;
    for _ in 0..circuits {
        let c = random_circuit(&mut rng, 5, 60, 30);
        let params: Vec<f64> = (0..c.param_count()).map(|_| rng.gen_range(-3.2..3.2)).collect();
        let enc: Vec<f64> = (0..c.encoder_slots()).map(|_| rng.gen_range(0.0..6.3)).collect();
        let weights: Vec<f64> = (0..c.readout_qubits().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let exact = shift_gradient(&c, &params, &enc, &weights)?;
        let approx = finite_diff_oracle(&c, &params, &enc, &weights, h)?;
        for (a, b) in exact.iter().zip(&approx) {
            max_circuit = max_circuit.max((a - b).abs());
        }
    }
    let mut max_model: f64 = 0.0;
    for _ in 0..hybrid_models {
        let n_inputs = rng.gen_range(2..=4);
        let n_actions = rng.gen_range(1..=3);
        let layers = rng.gen_range(1..=2);
        let ranges = RangeSpec::new(vec![(-1.0, 1.0); n_inputs])?;
        let model = QPolicyModel::hybrid(n_inputs, n_actions, layers, Encoder::Scaled(ranges), &mut rng)?;
        let obs: Vec<f64> = (0..n_inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let features = model.features(&obs)?;
        let action = rng.gen_range(0..n_actions);
        let target = rng.gen_range(-2.0..2.0);
        let (_, exact) = model.model_gradients(&features, action, target)?;
        let approx = model.finite_diff_gradients(&features, action, target, h)?;
        for (a, b) in exact.iter().zip(&approx) {
            max_model = max_model.max((a - b).abs());
        }
    }
    Ok(GradcheckReport {
        circuits,
        hybrid_models,
        max_circuit_deviation: max_circuit,
        max_model_deviation: max_model,
    })
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Learning curves with shaded 95% CI bands. x is the episode (from the
/// first full moving-average window), y the moving-average reward.
pub fn render_svg(series: &[(String, AggregateStats)]) -> Result<String> {
    let series: Vec<&(String, AggregateStats)> = series.iter().filter(|(_, s)| !s.mean.is_empty()).collect();
    if series.is_empty() {
        return config("nothing to plot");
    }
    let (w, h, ml, mr, mt, mb) = (800.0, 500.0, 70.0, 170.0, 30.0, 50.0);
    let x_min = series.iter().map(|(_, s)| s.episodes[0]).min().unwrap_or(0) as f64;
    let x_max = series.iter().map(|(_, s)| *s.episodes.last().unwrap_or(&0)).max().unwrap_or(0) as f64;
    let band = |s: &AggregateStats, i: usize| s.ci95_half.as_ref().map_or(0.0, |h| h[i]);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, s) in &series {
        for (i, m) in s.mean.iter().enumerate() {
            y_min = y_min.min(m - band(s, i));
            y_max = y_max.max(m + band(s, i));
        }
    }
    if y_max - y_min < 1e-9 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let x_span = (x_max - x_min).max(1.0);
    let px = |x: f64| ml + (x - x_min) / x_span * (w - ml - mr);
    let py = |y: f64| mt + (y_max - y) / (y_max - y_min) * (h - mt - mb);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (ml, w - mr, mt, h - mb);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let xv = x_min + x_span * k as f64 / 4.0;
        let yv = y_min + (y_max - y_min) * k as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{:.0}</text>"#, px(xv), y1 + 16.0, xv);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{:.3}</text>"#, x0 - 6.0, py(yv) + 4.0, yv);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">episode</text>"#, (x0 + x1) / 2.0, h - 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">average reward (last {MOVING_AVERAGE_WINDOW})</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (k, (label, s)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let visible_band = s.ci95_half.as_ref().is_some_and(|h| h.iter().any(|v| *v > 0.0));
        if visible_band {
            let upper = s.episodes.iter().enumerate().map(|(i, &e)| (e, s.mean[i] + band(s, i)));
            let lower = s.episodes.iter().enumerate().rev().map(|(i, &e)| (e, s.mean[i] - band(s, i)));
            let points: Vec<String> = upper.chain(lower).map(|(e, y)| format!("{:.2},{:.2}", px(e as f64), py(y))).collect();
            let _ = writeln!(svg, r#"<polygon class="ci-band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, points.join(" "));
        }
        let d: Vec<String> = s
            .episodes
            .iter()
            .zip(&s.mean)
            .enumerate()
            .map(|(i, (&e, &m))| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, px(e as f64), py(m)))
            .collect();
        let _ = writeln!(svg, r#"<path class="series" d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.join(" "));
        let ly = mt + 20.0 * k as f64;
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>"#, x1 + 10.0, x1 + 30.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#, x1 + 36.0, ly + 4.0, escape(label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn emit_plot(series: &[(String, AggregateStats)], path: &Path) -> Result<()> {
    fs::write(path, render_svg(series)?)?;
    Ok(())
}

/// Default run config matching a learning experiment on `env`: CartPole uses
/// per-step updates, Blackjack per-episode updates.
pub fn preset(env: EnvKind, model: ModelChoice, algo: Algo) -> RunConfig {
    let mut cfg = RunConfig { env, model, ..RunConfig::default() };
    cfg.trainer.algo = algo;
    if env == EnvKind::CartPole {
        cfg.trainer.update_timing = UpdateTiming::PerStep;
    }
    cfg
}
