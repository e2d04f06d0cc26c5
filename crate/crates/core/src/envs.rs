//! CartPole and Blackjack with a shared seeded interface.
//!
//! All randomness flows through [`SeededRng`], ChaCha8 seeded by
//! `seed_from_u64`, which yields the same stream on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment: Send {
    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64>;
    fn step(&mut self, action: usize, rng: &mut SeededRng) -> Result<EnvStep>;
    fn action_count(&self) -> usize;
    fn obs_len(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    CartPole,
    Blackjack,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::CartPole => "cartpole",
            EnvKind::Blackjack => "blackjack",
        }
    }

    pub fn make(self, cartpole_max_steps: u32) -> Box<dyn Environment> {
        match self {
            EnvKind::CartPole => Box::new(CartPole::new(cartpole_max_steps)),
            EnvKind::Blackjack => Box::new(Blackjack::new()),
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole" => Ok(EnvKind::CartPole),
            "blackjack" => Ok(EnvKind::Blackjack),
            _ => Err(Error::Config(format!("unknown environment '{s}'"))),
        }
    }
}

// ---------------------------------------------------------------------------
// CartPole

pub const CARTPOLE_GRAVITY: f64 = 9.8;
pub const CARTPOLE_CART_MASS: f64 = 1.0;
pub const CARTPOLE_POLE_MASS: f64 = 0.1;
pub const CARTPOLE_HALF_LENGTH: f64 = 0.5;
pub const CARTPOLE_FORCE: f64 = 10.0;
pub const CARTPOLE_DT: f64 = 0.02;
pub const CARTPOLE_X_LIMIT: f64 = 2.4;
/// 12 degrees.
pub const CARTPOLE_THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

/// Cart-pole with explicit Euler integration. Action 0 pushes left, 1 right.
#[derive(Debug, Clone, PartialEq)]
pub struct CartPole {
    /// `[x, x_dot, theta, theta_dot]`
    pub state: [f64; 4],
    pub steps: u32,
    pub max_steps: u32,
    pub done: bool,
}

impl CartPole {
    pub fn new(max_steps: u32) -> Self {
        Self { state: [0.0; 4], steps: 0, max_steps, done: false }
    }

    pub fn with_state(state: [f64; 4], max_steps: u32) -> Self {
        Self { state, steps: 0, max_steps, done: false }
    }

    /// One integration step with horizontal force `force`.
    pub fn integrate(&mut self, force: f64) {
        let [x, x_dot, theta, theta_dot] = self.state;
        let total_mass = CARTPOLE_CART_MASS + CARTPOLE_POLE_MASS;
        let pole_ml = CARTPOLE_POLE_MASS * CARTPOLE_HALF_LENGTH;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pole_ml * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (CARTPOLE_GRAVITY * sin - cos * temp)
            / (CARTPOLE_HALF_LENGTH * (4.0 / 3.0 - CARTPOLE_POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pole_ml * theta_acc * cos / total_mass;
        self.state = [
            x + CARTPOLE_DT * x_dot,
            x_dot + CARTPOLE_DT * x_acc,
            theta + CARTPOLE_DT * theta_dot,
            theta_dot + CARTPOLE_DT * theta_acc,
        ];
    }

    fn out_of_bounds(&self) -> bool {
        self.state[0].abs() > CARTPOLE_X_LIMIT || self.state[2].abs() > CARTPOLE_THETA_LIMIT
    }
}

impl Environment for CartPole {
    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64> {
        for v in &mut self.state {
            *v = rng.gen_range(-0.05..=0.05);
        }
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize, _rng: &mut SeededRng) -> Result<EnvStep> {
        if self.done {
            return Err(Error::Usage("cartpole episode already finished; call reset".into()));
        }
        let force = match action {
            0 => -CARTPOLE_FORCE,
            1 => CARTPOLE_FORCE,
            _ => return Err(Error::Config(format!("cartpole action {action} out of range"))),
        };
        self.integrate(force);
        self.steps += 1;
        self.done = self.out_of_bounds() || self.steps >= self.max_steps;
        Ok(EnvStep { obs: self.state.to_vec(), reward: 1.0, done: self.done })
    }

    fn action_count(&self) -> usize {
        2
    }

    fn obs_len(&self) -> usize {
        4
    }
}

// ---------------------------------------------------------------------------
// Blackjack

/// Infinite deck: 1 (ace) … 9 with probability 1/13 each, 10 with 4/13.
const DECK: [u8; 13] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 10, 10, 10];

pub fn draw_card(rng: &mut SeededRng) -> u8 {
    DECK[rng.gen_range(0..DECK.len())]
}

pub fn usable_ace(hand: &[u8]) -> bool {
    hand.contains(&1) && hand.iter().map(|&c| c as u32).sum::<u32>() + 10 <= 21
}

/// Best hand value: one ace counts 11 when that does not bust.
pub fn hand_value(hand: &[u8]) -> u32 {
    let raw: u32 = hand.iter().map(|&c| c as u32).sum();
    if usable_ace(hand) {
        raw + 10
    } else {
        raw
    }
}

/// Blackjack without naturals or splitting. Action 0 sticks, 1 hits. The
/// dealer draws until reaching 17 or more.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Blackjack {
    pub player: Vec<u8>,
    pub dealer: Vec<u8>,
    pub done: bool,
}

impl Blackjack {
    pub fn new() -> Self {
        Self::default()
    }

    /// `[player sum, dealer showing card, usable ace]`
    pub fn observation(&self) -> Vec<f64> {
        vec![
            hand_value(&self.player) as f64,
            self.dealer.first().copied().unwrap_or(0) as f64,
            if usable_ace(&self.player) { 1.0 } else { 0.0 },
        ]
    }
}

impl Environment for Blackjack {
    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64> {
        self.player = vec![draw_card(rng), draw_card(rng)];
        self.dealer = vec![draw_card(rng), draw_card(rng)];
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize, rng: &mut SeededRng) -> Result<EnvStep> {
        if self.done {
            return Err(Error::Usage("blackjack hand already finished; call reset".into()));
        }
        let reward = match action {
            1 => {
                self.player.push(draw_card(rng));
                if hand_value(&self.player) > 21 {
                    self.done = true;
                    -1.0
                } else {
                    0.0
                }
            }
            0 => {
                while hand_value(&self.dealer) < 17 {
                    self.dealer.push(draw_card(rng));
                }
                self.done = true;
                let player = hand_value(&self.player);
                let dealer = hand_value(&self.dealer);
                if dealer > 21 || player > dealer {
                    1.0
                } else if player < dealer {
                    -1.0
                } else {
                    0.0
                }
            }
            _ => return Err(Error::Config(format!("blackjack action {action} out of range"))),
        };
        Ok(EnvStep { obs: self.observation(), reward, done: self.done })
    }

    fn action_count(&self) -> usize {
        2
    }

    fn obs_len(&self) -> usize {
        3
    }
}

/// Plays `episodes` episodes with uniformly random actions and returns the
/// mean total reward per episode.
pub fn run_random_agent(env: &mut dyn Environment, episodes: usize, rng: &mut SeededRng) -> Result<f64> {
    Ok(random_agent_returns(env, episodes, rng)?.iter().sum::<f64>() / episodes.max(1) as f64)
}

/// Per-episode returns of the random policy.
pub fn random_agent_returns(env: &mut dyn Environment, episodes: usize, rng: &mut SeededRng) -> Result<Vec<f64>> {
    if episodes == 0 {
        return Err(Error::Config("random agent needs at least one episode".into()));
    }
    let actions = env.action_count();
    (0..episodes)
        .map(|_| {
            env.reset(rng);
            let mut total = 0.0;
            loop {
                let action = rng.gen_range(0..actions);
                let step = env.step(action, rng)?;
                total += step.reward;
                if step.done {
                    return Ok(total);
                }
            }
        })
        .collect()
}
