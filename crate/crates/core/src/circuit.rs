//! Parametrized circuit programs: encoder prefix, variational layers and
//! pooling blocks, assembled into pure or hybrid QVC layouts.
//!
//! A [`CircuitDef`] is an immutable gate program whose rotation angles come
//! from an [`AngleSource`]: a constant, a trainable parameter (optionally
//! negated), or an encoder slot filled per evaluation.

use std::fmt;

use crate::error::{config, Result};
use crate::qcore::{Gate, GateKind, StateVector};

/// Index of a trainable angle in the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleSource {
    Constant(f64),
    /// Trainable angle; `negate` marks the inverse rotations used by pooling.
    Param { id: ParamId, negate: bool },
    Encoder(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Op {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: AngleSource,
}

impl Op {
    pub fn rotation(kind: GateKind, target: usize, angle: AngleSource) -> Self {
        Self { kind, target, control: None, angle }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self { kind: GateKind::Cnot, target, control: Some(control), angle: AngleSource::Constant(0.0) }
    }

    fn param(&self) -> Option<(ParamId, bool)> {
        match self.angle {
            AngleSource::Param { id, negate } if self.kind.is_rotation() => Some((id, negate)),
            _ => None,
        }
    }
}

/// Hands out fresh, consecutive parameter ids.
#[derive(Debug, Default)]
pub struct ParamAllocator {
    next: usize,
}

impl ParamAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self) -> ParamId {
        let id = ParamId(self.next);
        self.next += 1;
        id
    }

    pub fn allocated(&self) -> usize {
        self.next
    }
}

/// RX(enc 2i) then RZ(enc 2i+1) on every qubit.
pub fn build_encoder(n_qubits: usize) -> Vec<Op> {
    (0..n_qubits)
        .flat_map(|q| {
            [
                Op::rotation(GateKind::Rx, q, AngleSource::Encoder(2 * q)),
                Op::rotation(GateKind::Rz, q, AngleSource::Encoder(2 * q + 1)),
            ]
        })
        .collect()
}

/// CNOT chain `q_i → q_{i+1}` followed by trainable RX, RY, RZ on each qubit.
pub fn build_variational_layer(n_qubits: usize, alloc: &mut ParamAllocator) -> Result<Vec<Op>> {
    if n_qubits < 2 {
        return config(format!("a variational layer needs at least 2 qubits, got {n_qubits}"));
    }
    let mut ops: Vec<Op> = (0..n_qubits - 1).map(|q| Op::cnot(q, q + 1)).collect();
    for q in 0..n_qubits {
        for kind in [GateKind::Rx, GateKind::Ry, GateKind::Rz] {
            ops.push(Op::rotation(kind, q, AngleSource::Param { id: alloc.fresh(), negate: false }));
        }
    }
    Ok(ops)
}

/// Two-to-one pooling: trainable rotations on `source`, CNOT into `sink`,
/// then trainable inverse rotations on `sink`. Six fresh parameters.
pub fn build_pooling(source: usize, sink: usize, alloc: &mut ParamAllocator) -> Result<Vec<Op>> {
    if source == sink {
        return config("pooling source and sink must differ");
    }
    let mut ops = Vec::with_capacity(7);
    for kind in [GateKind::Rx, GateKind::Ry, GateKind::Rz] {
        ops.push(Op::rotation(kind, source, AngleSource::Param { id: alloc.fresh(), negate: false }));
    }
    ops.push(Op::cnot(source, sink));
    for kind in [GateKind::Rx, GateKind::Ry, GateKind::Rz] {
        ops.push(Op::rotation(kind, sink, AngleSource::Param { id: alloc.fresh(), negate: true }));
    }
    Ok(ops)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitDef {
    n_qubits: usize,
    ops: Vec<Op>,
    encoder_slots: usize,
    readout_qubits: Vec<usize>,
    param_count: usize,
    /// `param_sites[p]` is the op index bound to parameter `p`.
    param_sites: Vec<usize>,
}

impl CircuitDef {
    /// Validates and freezes a gate program.
    ///
    /// Parameter ids must be exactly `0..param_count`, each bound to one gate.
    pub fn new(n_qubits: usize, ops: Vec<Op>, readout_qubits: Vec<usize>) -> Result<Self> {
        if n_qubits == 0 {
            return config("circuit needs at least one qubit");
        }
        if readout_qubits.is_empty() {
            return config("circuit needs at least one readout qubit");
        }
        for (i, q) in readout_qubits.iter().enumerate() {
            if *q >= n_qubits {
                return config(format!("readout qubit {q} out of range"));
            }
            if readout_qubits[..i].contains(q) {
                return config(format!("readout qubit {q} listed twice"));
            }
        }
        let mut encoder_slots = 0;
        let mut sites: Vec<Option<usize>> = Vec::new();
        for (index, op) in ops.iter().enumerate() {
            let probe = Gate { kind: op.kind, target: op.target, control: op.control, angle: 0.0 };
            probe.validate(n_qubits)?;
            match op.angle {
                AngleSource::Encoder(slot) => encoder_slots = encoder_slots.max(slot + 1),
                AngleSource::Constant(v) if !v.is_finite() => return config("non-finite constant angle"),
                _ => {}
            }
            if let Some((ParamId(p), _)) = op.param() {
                if sites.len() <= p {
                    sites.resize(p + 1, None);
                }
                if sites[p].replace(index).is_some() {
                    return config(format!("parameter {p} bound to more than one gate"));
                }
            }
        }
        let param_sites = sites
            .into_iter()
            .enumerate()
            .map(|(p, s)| s.ok_or(p))
            .collect::<std::result::Result<Vec<_>, _>>()
            .or_else(|p| config(format!("parameter ids are not contiguous: {p} unused")))?;
        Ok(Self { n_qubits, ops, encoder_slots, param_count: param_sites.len(), readout_qubits, param_sites })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn encoder_slots(&self) -> usize {
        self.encoder_slots
    }

    pub fn readout_qubits(&self) -> &[usize] {
        &self.readout_qubits
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Index into [`Self::ops`] of the gate bound to `p`.
    pub fn param_site(&self, p: ParamId) -> usize {
        self.param_sites[p.0]
    }

    /// Whether parameter `p` enters its gate negated.
    pub fn param_negated(&self, p: ParamId) -> bool {
        self.ops[self.param_sites[p.0]].param().is_some_and(|(_, neg)| neg)
    }

    fn check_lengths(&self, params: &[f64], encoder_angles: &[f64]) -> Result<()> {
        if params.len() != self.param_count {
            return config(format!("expected {} parameters, got {}", self.param_count, params.len()));
        }
        if encoder_angles.len() != self.encoder_slots {
            return config(format!("expected {} encoder angles, got {}", self.encoder_slots, encoder_angles.len()));
        }
        Ok(())
    }

    /// Resolves every op to a concrete gate.
    pub fn gates(&self, params: &[f64], encoder_angles: &[f64]) -> Result<Vec<Gate>> {
        self.check_lengths(params, encoder_angles)?;
        Ok(self
            .ops
            .iter()
            .map(|op| {
                let angle = match op.angle {
                    AngleSource::Constant(v) => v,
                    AngleSource::Param { id, negate } => {
                        if negate {
                            -params[id.0]
                        } else {
                            params[id.0]
                        }
                    }
                    AngleSource::Encoder(slot) => encoder_angles[slot],
                };
                Gate { kind: op.kind, target: op.target, control: op.control, angle }
            })
            .collect())
    }

    /// Runs the program on an arbitrary starting state.
    pub fn run_from(&self, mut state: StateVector, params: &[f64], encoder_angles: &[f64]) -> Result<StateVector> {
        if state.n_qubits() != self.n_qubits {
            return config("starting state has the wrong qubit count");
        }
        state.apply_all(&self.gates(params, encoder_angles)?)?;
        Ok(state)
    }

    /// Z expectations of the readout qubits after running from `|0…0⟩`.
    pub fn evaluate(&self, params: &[f64], encoder_angles: &[f64]) -> Result<Vec<f64>> {
        let state = self.run_from(StateVector::new(self.n_qubits)?, params, encoder_angles)?;
        self.readout(&state)
    }

    pub fn readout(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.readout_qubits.iter().map(|&q| state.expectation_z(q)).collect()
    }
}

impl fmt::Display for CircuitDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "circuit: {} qubits, {} params, {} encoder slots, readout {:?}",
            self.n_qubits, self.param_count, self.encoder_slots, self.readout_qubits
        )?;
        for (i, op) in self.ops.iter().enumerate() {
            let angle = match op.angle {
                _ if op.kind == GateKind::Cnot => String::new(),
                AngleSource::Constant(v) => format!("({v})"),
                AngleSource::Param { id, negate: false } => format!("(p{})", id.0),
                AngleSource::Param { id, negate: true } => format!("(-p{})", id.0),
                AngleSource::Encoder(s) => format!("(enc{s})"),
            };
            match op.control {
                Some(c) => writeln!(f, "{i:4}  CNOT q{c} -> q{}", op.target)?,
                None => writeln!(f, "{i:4}  {}{angle} q{}", op.kind.name(), op.target)?,
            }
        }
        Ok(())
    }
}

/// Number of trainable parameters in a pure QVC with the given shape.
pub fn pure_qvc_param_count(n_inputs: usize, n_actions: usize, n_layers: usize) -> usize {
    3 * n_layers * n_inputs + 6 * n_inputs.saturating_sub(n_actions)
}

/// Encoder, `n_layers` variational layers, then pooling down to `n_actions` readouts.
///
/// Pooling always folds the lowest-indexed active qubit into the next active one.
pub fn assemble_pure_qvc(n_inputs: usize, n_actions: usize, n_layers: usize) -> Result<CircuitDef> {
    if n_actions == 0 {
        return config("pure QVC needs at least one action");
    }
    if n_actions >= n_inputs {
        return config(format!(
            "pure QVC pooling can only reduce qubits ({n_inputs} inputs, {n_actions} actions); use the hybrid model"
        ));
    }
    if n_layers == 0 {
        return config("pure QVC needs at least one layer");
    }
    let mut alloc = ParamAllocator::new();
    let mut ops = build_encoder(n_inputs);
    for _ in 0..n_layers {
        ops.extend(build_variational_layer(n_inputs, &mut alloc)?);
    }
    let mut active: Vec<usize> = (0..n_inputs).collect();
    while active.len() > n_actions {
        let source = active.remove(0);
        ops.extend(build_pooling(source, active[0], &mut alloc)?);
    }
    CircuitDef::new(n_inputs, ops, active)
}

/// Encoder and `n_layers` variational layers, reading out every qubit.
pub fn assemble_hybrid_qvc(n_inputs: usize, n_layers: usize) -> Result<CircuitDef> {
    if n_layers == 0 {
        return config("hybrid QVC needs at least one layer");
    }
    let mut alloc = ParamAllocator::new();
    let mut ops = build_encoder(n_inputs);
    for _ in 0..n_layers {
        ops.extend(build_variational_layer(n_inputs, &mut alloc)?);
    }
    CircuitDef::new(n_inputs, ops, (0..n_inputs).collect())
}

/// Random program on 1..=`max_qubits` qubits: up to `max_gates` gates mixing
/// CNOTs, constant rotations, encoder slots and at most `max_params`
/// trainable (sometimes negated) rotations. Reads out every qubit.
pub fn random_circuit(rng: &mut impl rand::Rng, max_qubits: usize, max_gates: usize, max_params: usize) -> CircuitDef {
    let n_qubits = rng.gen_range(1..=max_qubits.max(1));
    let n_gates = rng.gen_range(1..=max_gates.max(1));
    let mut alloc = ParamAllocator::new();
    let mut encoder_slots = 0;
    let mut ops = Vec::with_capacity(n_gates);
    for _ in 0..n_gates {
        if n_qubits > 1 && rng.gen_bool(0.25) {
            let control = rng.gen_range(0..n_qubits);
            let target = (control + rng.gen_range(1..n_qubits)) % n_qubits;
            ops.push(Op::cnot(control, target));
            continue;
        }
        let kind = [GateKind::Rx, GateKind::Ry, GateKind::Rz][rng.gen_range(0..3)];
        let target = rng.gen_range(0..n_qubits);
        let angle = match rng.gen_range(0..4) {
            0 => AngleSource::Constant(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)),
            1 => {
                encoder_slots += 1;
                AngleSource::Encoder(encoder_slots - 1)
            }
            _ if alloc.allocated() < max_params => AngleSource::Param { id: alloc.fresh(), negate: rng.gen_bool(0.3) },
            _ => AngleSource::Constant(0.4),
        };
        ops.push(Op::rotation(kind, target, angle));
    }
    CircuitDef::new(n_qubits, ops, (0..n_qubits).collect()).expect("generated circuit is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn encoder_layout() {
        let ops = build_encoder(1);
        assert_eq!(ops, vec![
            Op::rotation(GateKind::Rx, 0, AngleSource::Encoder(0)),
            Op::rotation(GateKind::Rz, 0, AngleSource::Encoder(1)),
        ]);
        let ops = build_encoder(3);
        assert_eq!(ops.len(), 6);
        let c = CircuitDef::new(3, ops, vec![0, 1, 2]).unwrap();
        assert_eq!(c.encoder_slots(), 6);
        assert_eq!(c.evaluate(&[], &[0.0; 6]).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn layer_counts() {
        let mut alloc = ParamAllocator::new();
        let ops = build_variational_layer(4, &mut alloc).unwrap();
        assert_eq!(ops.iter().filter(|o| o.kind == GateKind::Cnot).count(), 3);
        assert_eq!(ops.iter().filter(|o| o.kind.is_rotation()).count(), 12);
        assert_eq!(alloc.allocated(), 12);

        let mut alloc = ParamAllocator::new();
        let ops = build_variational_layer(2, &mut alloc).unwrap();
        assert_eq!(ops.len(), 7);
        assert!(build_variational_layer(1, &mut alloc).is_err());
    }

    #[test]
    fn zero_layer_is_its_cnot_chain() {
        let mut alloc = ParamAllocator::new();
        let mut ops = vec![Op::rotation(GateKind::Rx, 0, AngleSource::Constant(std::f64::consts::PI))];
        ops.extend(build_variational_layer(3, &mut alloc).unwrap());
        let c = CircuitDef::new(3, ops, vec![0, 1, 2]).unwrap();
        // |100⟩ → CNOT(0,1) → |110⟩ → CNOT(1,2) → |111⟩
        let out = c.evaluate(&[0.0; 9], &[]).unwrap();
        for v in out {
            assert!((v + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pooling_allocates_six() {
        let mut alloc = ParamAllocator::new();
        let ops = build_pooling(0, 1, &mut alloc).unwrap();
        assert_eq!(alloc.allocated(), 6);
        assert_eq!(ops.len(), 7);
        assert!(build_pooling(1, 1, &mut alloc).is_err());
    }

    #[test]
    fn zero_pooling_acts_as_cnot() {
        let mut alloc = ParamAllocator::new();
        let c = CircuitDef::new(2, build_pooling(0, 1, &mut alloc).unwrap(), vec![1]).unwrap();
        let start = StateVector::basis(2, 0b10).unwrap();
        let end = c.run_from(start, &[0.0; 6], &[]).unwrap();
        assert_eq!(end.amplitudes()[0b11].re, 1.0);
        assert_eq!(c.readout(&end).unwrap(), vec![-1.0]);
        assert_eq!(c.evaluate(&[0.0; 6], &[]).unwrap(), vec![1.0]);
        assert!(c.param_negated(ParamId(5)));
        assert!(!c.param_negated(ParamId(0)));
    }

    #[test]
    fn pure_qvc_counts() {
        let c = assemble_pure_qvc(4, 2, 3).unwrap();
        assert_eq!(c.param_count(), 48);
        assert_eq!(c.readout_qubits(), &[2, 3]);
        let c = assemble_pure_qvc(3, 2, 3).unwrap();
        assert_eq!(c.param_count(), 33);
        assert_eq!(c.readout_qubits(), &[1, 2]);
        let c = assemble_pure_qvc(2, 1, 1).unwrap();
        assert_eq!(c.param_count(), 12);
        assert_eq!(c.readout_qubits().len(), 1);
        assert!(assemble_pure_qvc(2, 2, 3).is_err());
    }

    #[test]
    fn hybrid_qvc_counts() {
        let c = assemble_hybrid_qvc(4, 3).unwrap();
        assert_eq!((c.param_count(), c.readout_qubits().len()), (36, 4));
        let c = assemble_hybrid_qvc(3, 3).unwrap();
        assert_eq!((c.param_count(), c.readout_qubits().len()), (27, 3));
        assert!(assemble_hybrid_qvc(1, 1).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let c = assemble_pure_qvc(4, 2, 3).unwrap();
        assert_eq!(c.evaluate(&[0.0; 48], &[0.0; 8]).unwrap(), vec![1.0, 1.0]);

        let single = CircuitDef::new(
            1,
            vec![Op::rotation(GateKind::Rx, 0, AngleSource::Param { id: ParamId(0), negate: false })],
            vec![0],
        )
        .unwrap();
        assert!(single.evaluate(&[FRAC_PI_2], &[]).unwrap()[0].abs() < 1e-15);
        assert_eq!(single.evaluate(&[0.0], &[]).unwrap(), vec![1.0]);
        assert!(single.evaluate(&[0.0, 1.0], &[]).is_err());
        assert!(c.evaluate(&[0.0; 48], &[0.0; 7]).is_err());
    }

    #[test]
    fn shared_or_gapped_params_rejected() {
        let p = |i| AngleSource::Param { id: ParamId(i), negate: false };
        let shared = vec![Op::rotation(GateKind::Rx, 0, p(0)), Op::rotation(GateKind::Ry, 0, p(0))];
        assert!(CircuitDef::new(1, shared, vec![0]).is_err());
        let gapped = vec![Op::rotation(GateKind::Rx, 0, p(1))];
        assert!(CircuitDef::new(1, gapped, vec![0]).is_err());
        assert!(CircuitDef::new(2, vec![], vec![1, 1]).is_err());
        assert!(CircuitDef::new(2, vec![], vec![]).is_err());
    }

    #[test]
    fn every_param_bound_once() {
        let c = assemble_pure_qvc(4, 2, 3).unwrap();
        let mut seen = vec![0; c.param_count()];
        for op in c.ops() {
            if let Some((ParamId(p), _)) = op.param() {
                seen[p] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn diagram_lists_ops() {
        let text = assemble_pure_qvc(3, 2, 1).unwrap().to_string();
        assert!(text.contains("CNOT q0 -> q1"));
        assert!(text.contains("RX(-p"));
        assert!(text.contains("RZ(enc5) q2"));
    }
}
