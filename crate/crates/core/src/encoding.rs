//! Classical observation → rotation angle encoders.
//!
//! Every input value drives one qubit through two gates, RX then RZ, and both
//! gates receive the same angle.

use std::f64::consts::{PI, TAU};

use crate::error::{config, Error, Result};

/// Per-input `(lo, hi)` bounds in the observation's native units.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSpec {
    bounds: Vec<(f64, f64)>,
}

impl RangeSpec {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return config(format!("range {i} must satisfy lo < hi, got [{lo}, {hi}]"));
            }
        }
        Ok(Self { bounds })
    }

    /// Player sum, dealer showing card, usable ace.
    pub fn blackjack() -> Self {
        Self { bounds: vec![(0.0, 32.0), (1.0, 11.0), (0.0, 1.0)] }
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    /// Clamped position of `value` inside input `i`'s range, in `[0, 1]`.
    fn unit(&self, i: usize, value: f64) -> f64 {
        let (lo, hi) = self.bounds[i];
        (value.clamp(lo, hi) - lo) / (hi - lo)
    }
}

/// RX/RZ angles for each input qubit, interleaved `[rx0, rz0, rx1, rz1, …]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedState {
    pub angles: Vec<f64>,
}

impl EncodedState {
    fn from_qubit_angles(per_qubit: impl IntoIterator<Item = f64>) -> Self {
        Self { angles: per_qubit.into_iter().flat_map(|a| [a, a]).collect() }
    }

    pub fn n_inputs(&self) -> usize {
        self.angles.len() / 2
    }
}

fn check_finite(obs: &[f64]) -> Result<()> {
    match obs.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Input(format!("observation component {i} is not finite ({})", obs[i]))),
        None => Ok(()),
    }
}

/// Linear map of each clamped input onto `[0, 2π]`.
pub fn scaled_encode(obs: &[f64], ranges: &RangeSpec) -> Result<EncodedState> {
    if obs.len() != ranges.len() {
        return config(format!("observation has {} values but range spec has {}", obs.len(), ranges.len()));
    }
    check_finite(obs)?;
    Ok(EncodedState::from_qubit_angles(obs.iter().enumerate().map(|(i, &v)| TAU * ranges.unit(i, v))))
}

/// π for strictly positive inputs, 0 otherwise.
pub fn directional_encode(obs: &[f64]) -> Result<EncodedState> {
    check_finite(obs)?;
    Ok(EncodedState::from_qubit_angles(obs.iter().map(|&v| if v > 0.0 { PI } else { 0.0 })))
}

/// 1 for strictly positive inputs, 0 otherwise; the classical twin of
/// [`directional_encode`].
pub fn binary_obs_for_baseline(obs: &[f64]) -> Vec<f64> {
    obs.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()
}

/// Min-max normalization to `[0, 1]`; the classical twin of [`scaled_encode`].
pub fn normalized_obs_for_baseline(obs: &[f64], ranges: &RangeSpec) -> Result<Vec<f64>> {
    if obs.len() != ranges.len() {
        return config(format!("observation has {} values but range spec has {}", obs.len(), ranges.len()));
    }
    check_finite(obs)?;
    Ok(obs.iter().enumerate().map(|(i, &v)| ranges.unit(i, v)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Scaled(RangeSpec),
    Directional,
}

impl Encoder {
    pub fn encode(&self, obs: &[f64]) -> Result<EncodedState> {
        match self {
            Encoder::Scaled(ranges) => scaled_encode(obs, ranges),
            Encoder::Directional => directional_encode(obs),
        }
    }

    /// Input vector for a classical network that should see the same information.
    pub fn classical_input(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Encoder::Scaled(ranges) => normalized_obs_for_baseline(obs, ranges),
            Encoder::Directional => {
                check_finite(obs)?;
                Ok(binary_obs_for_baseline(obs))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Encoder::Scaled(_) => "scaled",
            Encoder::Directional => "directional",
        }
    }
}
