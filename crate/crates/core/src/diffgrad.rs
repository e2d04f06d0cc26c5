//! Exact circuit gradients via the parameter-shift rule.
//!
//! For a gate `exp(-i a G θ)` whose generator has eigenvalues `e₀, e₁`,
//! `∂f/∂θ = r [f(θ + π/4r) − f(θ − π/4r)]` with `r = a/2 (e₁ − e₀)`.
//! With half-angle Pauli rotations `r = 1/2` and the shift is `π/2`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::circuit::{CircuitDef, ParamId};
use crate::error::{config, Result};
use crate::qcore::{Gate, StateVector, GENERATOR_EIGENVALUES, GENERATOR_SCALE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftConstants {
    pub r: f64,
    pub shift: f64,
}

impl ShiftConstants {
    pub fn new(generator_scale: f64, eigenvalues: (f64, f64)) -> Result<Self> {
        let r = generator_scale / 2.0 * (eigenvalues.1 - eigenvalues.0);
        if !(r > 0.0 && r.is_finite()) {
            return config(format!("shift constant r = {r} must be positive"));
        }
        Ok(Self { r, shift: PI / (4.0 * r) })
    }

    /// Constants for the RX/RY/RZ gates of this simulator.
    pub fn pauli_rotation() -> Self {
        Self::new(GENERATOR_SCALE, GENERATOR_EIGENVALUES).expect("Pauli constants are valid")
    }
}

/// `Σ_k w_k ⟨Z⟩_k` for a fully resolved gate list.
fn weighted_readout(circuit: &CircuitDef, gates: &[Gate], weights: &[f64]) -> Result<f64> {
    let mut state = StateVector::new(circuit.n_qubits())?;
    state.apply_all(gates)?;
    let readouts = circuit.readout(&state)?;
    Ok(readouts.iter().zip(weights).map(|(r, w)| r * w).sum())
}

fn check_weights(circuit: &CircuitDef, weights: &[f64]) -> Result<()> {
    if weights.len() != circuit.readout_qubits().len() {
        return config(format!(
            "expected {} readout weights, got {}",
            circuit.readout_qubits().len(),
            weights.len()
        ));
    }
    Ok(())
}

/// Gradient of `f = Σ_k w_k · readout_k` with respect to every parameter.
///
/// Each parameter costs two circuit runs with only its gate's angle shifted.
/// Parameters are processed in parallel; the result does not depend on
/// scheduling.
pub fn shift_gradient(circuit: &CircuitDef, params: &[f64], encoder_angles: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    check_weights(circuit, weights)?;
    let gates = circuit.gates(params, encoder_angles)?;
    let ShiftConstants { r, shift } = ShiftConstants::pauli_rotation();

    // Unshifted state just before each parameter's gate, from one forward sweep.
    let mut order: Vec<(usize, usize)> =
        (0..circuit.param_count()).map(|p| (circuit.param_site(ParamId(p)), p)).collect();
    order.sort_unstable();
    let mut prefixes = Vec::with_capacity(order.len());
    let mut state = StateVector::new(circuit.n_qubits())?;
    let mut applied = 0;
    for &(site, _) in &order {
        state.apply_all(&gates[applied..site])?;
        applied = site;
        prefixes.push(state.clone());
    }

    let run_shifted = |prefix: &StateVector, site: usize, angle: f64| -> Result<f64> {
        let mut s = prefix.clone();
        s.apply(&Gate { angle, ..gates[site] })?;
        s.apply_all(&gates[site + 1..])?;
        let readouts = circuit.readout(&s)?;
        Ok(readouts.iter().zip(weights).map(|(v, w)| v * w).sum())
    };
    let mut grads = vec![0.0; circuit.param_count()];
    let values: Vec<(usize, f64)> = order
        .par_iter()
        .zip(prefixes.par_iter())
        .map(|(&(site, p), prefix)| {
            let angle = gates[site].angle;
            let plus = run_shifted(prefix, site, angle + shift)?;
            let minus = run_shifted(prefix, site, angle - shift)?;
            // gate angle is −p for inverse rotations
            let chain = if circuit.param_negated(ParamId(p)) { -1.0 } else { 1.0 };
            Ok((p, chain * r * (plus - minus)))
        })
        .collect::<Result<_>>()?;
    for (p, g) in values {
        grads[p] = g;
    }
    Ok(grads)
}

/// Straightforward form of [`shift_gradient`]: every shifted evaluation
/// re-runs the whole circuit from `|0…0⟩`.
pub fn shift_gradient_full(circuit: &CircuitDef, params: &[f64], encoder_angles: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    check_weights(circuit, weights)?;
    let base = circuit.gates(params, encoder_angles)?;
    let ShiftConstants { r, shift } = ShiftConstants::pauli_rotation();
    (0..circuit.param_count())
        .map(|p| {
            let site = circuit.param_site(ParamId(p));
            let mut gates = base.clone();
            let angle = base[site].angle;
            gates[site].angle = angle + shift;
            let plus = weighted_readout(circuit, &gates, weights)?;
            gates[site].angle = angle - shift;
            let minus = weighted_readout(circuit, &gates, weights)?;
            let chain = if circuit.param_negated(ParamId(p)) { -1.0 } else { 1.0 };
            Ok(chain * r * (plus - minus))
        })
        .collect()
}

/// Central differences `[f(p+h) − f(p−h)] / 2h` on the raw parameter vector.
pub fn finite_diff_oracle(
    circuit: &CircuitDef,
    params: &[f64],
    encoder_angles: &[f64],
    weights: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return config(format!("finite-difference step must be positive, got {h}"));
    }
    check_weights(circuit, weights)?;
    let f = |values: &[f64]| -> Result<f64> {
        let readouts = circuit.evaluate(values, encoder_angles)?;
        Ok(readouts.iter().zip(weights).map(|(r, w)| r * w).sum())
    };
    let mut shifted = params.to_vec();
    (0..params.len())
        .map(|p| {
            shifted[p] = params[p] + h;
            let plus = f(&shifted)?;
            shifted[p] = params[p] - h;
            let minus = f(&shifted)?;
            shifted[p] = params[p];
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}
