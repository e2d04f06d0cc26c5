//! Replay buffer, ε-greedy exploration and the DQN / Q-DDQN training loop.
//!
//! Per episode the loop acts ε-greedily, stores transitions, performs the
//! minibatch update (once after the episode, or after every step), and then
//! updates the target network: a hard copy when `episode % C == 0`, otherwise
//! the soft blend `θ^t ← τ θ^t + (1 − τ) θ`. Episodes are numbered from 1.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::envs::{Environment, SeededRng};
use crate::error::{config, Error, Result};
use crate::models::{QPolicyModel, TargetPair};
use crate::nn::{AdamConfig, AdamState};

/// One stored step. `state` / `next` hold model features (encoder angles for
/// circuit models, classical inputs for MLPs); the raw observations are kept
/// alongside for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub raw_obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next: Vec<f64>,
    pub raw_next: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring that evicts the oldest transition first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return config("replay buffer capacity must be positive");
        }
        Ok(Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), head: 0 })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Indices of a uniform minibatch: without replacement when the buffer
    /// holds at least `batch_size` items, with replacement otherwise.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::Usage("cannot sample from an empty replay buffer".into()));
        }
        if batch_size == 0 {
            return config("batch size must be positive");
        }
        let n = self.items.len();
        if n < batch_size {
            Ok((0..batch_size).map(|_| rng.gen_range(0..n)).collect())
        } else {
            Ok(index::sample(rng, n, batch_size).into_vec())
        }
    }

    pub fn sample_minibatch(&self, batch_size: usize, rng: &mut SeededRng) -> Result<Vec<&Transition>> {
        Ok(self.sample_indices(batch_size, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }
}

/// Multiplicative per-episode decay with a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub min: f64,
    current: f64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, decay: f64, min: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&min) || !(min..=1.0).contains(&start) || !(0.0..=1.0).contains(&decay) {
            return config(format!("invalid epsilon schedule start={start} decay={decay} min={min}"));
        }
        Ok(Self { start, decay, min, current: start })
    }

    pub fn value(&self) -> f64 {
        self.current
    }

    /// `ε ← max(ε_min, ε · decay)`
    pub fn advance(&mut self) -> f64 {
        self.current = (self.current * self.decay).max(self.min);
        self.current
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self::new(1.0, 0.9, 0.01).expect("valid defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    /// Bootstraps from the online network; no target network.
    Dqn,
    /// `y = r + γ max_a' Q(s', a'; θ^t)`
    Qddqn,
    /// `y = r + γ Q(s', argmax_a' Q(s', a'; θ); θ^t)`
    CanonicalDdqn,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Dqn => "dqn",
            Algo::Qddqn => "qddqn",
            Algo::CanonicalDdqn => "canonical_ddqn",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(Algo::Dqn),
            "qddqn" => Ok(Algo::Qddqn),
            "canonical_ddqn" => Ok(Algo::CanonicalDdqn),
            _ => Err(Error::Config(format!("unknown algorithm '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateTiming {
    /// One minibatch update after each finished episode.
    PerEpisode,
    /// One minibatch update after every environment step.
    PerStep,
}

impl std::str::FromStr for UpdateTiming {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_episode" => Ok(UpdateTiming::PerEpisode),
            "per_step" => Ok(UpdateTiming::PerStep),
            _ => Err(Error::Config(format!("unknown update timing '{s}'"))),
        }
    }
}

impl UpdateTiming {
    pub fn name(self) -> &'static str {
        match self {
            UpdateTiming::PerEpisode => "per_episode",
            UpdateTiming::PerStep => "per_step",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub capacity: usize,
    /// Hard-copy period C in episodes.
    pub hard_copy_every: usize,
    pub tau: f64,
    pub algo: Algo,
    pub update_timing: UpdateTiming,
    /// Use `y = r` on terminal transitions.
    pub terminal_masking: bool,
    pub circuit_adam: AdamConfig,
    pub dense_adam: AdamConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            batch_size: 32,
            capacity: 10_000,
            hard_copy_every: 10,
            tau: 0.99,
            algo: Algo::Qddqn,
            update_timing: UpdateTiming::PerEpisode,
            terminal_masking: true,
            circuit_adam: AdamConfig::with_lr(1e-2),
            dense_adam: AdamConfig::with_lr(1e-3),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return config(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.hard_copy_every == 0 {
            return config("hard-copy period must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return config(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.capacity == 0 {
            return config("batch size and buffer capacity must be positive");
        }
        for lr in [self.circuit_adam.lr, self.dense_adam.lr] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return config(format!("learning rate must be non-negative, got {lr}"));
            }
        }
        Ok(())
    }
}

/// Greedy index with ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// With probability ε a uniform action, otherwise the greedy one.
pub fn select_action(model: &QPolicyModel, features: &[f64], epsilon: f64, rng: &mut SeededRng) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return config(format!("epsilon must lie in [0, 1], got {epsilon}"));
    }
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..model.n_actions()))
    } else {
        Ok(argmax(&model.q_values(features)?))
    }
}

/// Bootstrapped regression target for one transition.
pub fn compute_target(t: &Transition, pair: &TargetPair, gamma: f64, algo: Algo, terminal_masking: bool) -> Result<f64> {
    if t.done && terminal_masking {
        return Ok(t.reward);
    }
    let future = match algo {
        Algo::Dqn => max(&pair.online.q_values(&t.next)?),
        Algo::Qddqn => max(&pair.target.q_values(&t.next)?),
        Algo::CanonicalDdqn => {
            let choice = argmax(&pair.online.q_values(&t.next)?);
            pair.target.q_values(&t.next)?[choice]
        }
    };
    Ok(t.reward + gamma * future)
}

fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based.
    pub episode: usize,
    pub reward: f64,
    /// ε in effect during the episode.
    pub epsilon: f64,
    /// Mean minibatch loss over the episode's updates.
    pub loss: f64,
}

/// Owns the online/target pair, optimizer state and replay memory of one run.
pub struct Trainer {
    pub pair: TargetPair,
    pub config: TrainerConfig,
    pub schedule: EpsilonSchedule,
    pub buffer: ReplayBuffer,
    circuit_adam: AdamState,
    dense_adam: AdamState,
    episodes_done: usize,
}

impl Trainer {
    pub fn new(online: QPolicyModel, config: TrainerConfig, schedule: EpsilonSchedule) -> Result<Self> {
        config.validate()?;
        let circuit = online.circuit_param_count();
        let dense = online.total_trainable_count() - circuit;
        Ok(Self {
            pair: TargetPair::new(online),
            buffer: ReplayBuffer::new(config.capacity)?,
            circuit_adam: AdamState::new(config.circuit_adam, circuit),
            dense_adam: AdamState::new(config.dense_adam, dense),
            config,
            schedule,
            episodes_done: 0,
        })
    }

    /// Regression targets for a batch, evaluated in parallel.
    pub fn targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let TrainerConfig { gamma, algo, terminal_masking, .. } = self.config;
        batch.par_iter().map(|t| compute_target(t, &self.pair, gamma, algo, terminal_masking)).collect()
    }

    /// One Adam step on the mean squared TD error of a sampled minibatch.
    /// Returns the loss before the step.
    pub fn update(&mut self, rng: &mut SeededRng) -> Result<f64> {
        let batch = self.buffer.sample_minibatch(self.config.batch_size, rng)?;
        let targets = self.targets(&batch)?;
        let samples: Vec<(&[f64], usize, f64)> =
            batch.iter().zip(&targets).map(|(t, &y)| (t.state.as_slice(), t.action, y)).collect();
        let (loss, grads) = self.pair.online.batch_gradients(&samples)?;
        let mut params = self.pair.online.params();
        let split = self.pair.online.circuit_param_count();
        let (circuit_p, dense_p) = params.split_at_mut(split);
        let (circuit_g, dense_g) = grads.split_at(split);
        self.circuit_adam.step(circuit_p, circuit_g)?;
        self.dense_adam.step(dense_p, dense_g)?;
        self.pair.online.set_params(&params)?;
        Ok(loss)
    }

    /// Hard copy on multiples of C, soft blend otherwise.
    pub fn update_target(&mut self, episode: usize) -> Result<()> {
        if episode % self.config.hard_copy_every == 0 {
            self.pair.hard_copy();
            Ok(())
        } else {
            self.pair.soft_update(self.config.tau)
        }
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn run_episode(&mut self, env: &mut dyn Environment, rng: &mut SeededRng) -> Result<EpisodeRecord> {
        let episode = self.episodes_done + 1;
        let epsilon = self.schedule.value();
        let mut raw = env.reset(rng);
        let mut state = self.pair.online.features(&raw)?;
        let mut total = 0.0;
        let mut losses = Vec::new();
        loop {
            let action = select_action(&self.pair.online, &state, epsilon, rng)?;
            let step = env.step(action, rng)?;
            let next = self.pair.online.features(&step.obs)?;
            total += step.reward;
            self.buffer.push(Transition {
                state: std::mem::take(&mut state),
                raw_obs: std::mem::take(&mut raw),
                action,
                reward: step.reward,
                next: next.clone(),
                raw_next: step.obs.clone(),
                done: step.done,
            });
            if self.config.update_timing == UpdateTiming::PerStep {
                losses.push(self.update(rng)?);
            }
            if step.done {
                break;
            }
            state = next;
            raw = step.obs;
        }
        if self.config.update_timing == UpdateTiming::PerEpisode {
            losses.push(self.update(rng)?);
        }
        self.update_target(episode)?;
        self.schedule.advance();
        self.episodes_done = episode;
        let loss = losses.iter().sum::<f64>() / losses.len() as f64;
        Ok(EpisodeRecord { episode, reward: total, epsilon, loss })
    }

    pub fn train(&mut self, env: &mut dyn Environment, episodes: usize, rng: &mut SeededRng) -> Result<Vec<EpisodeRecord>> {
        (0..episodes).map(|_| self.run_episode(env, rng)).collect()
    }
}
