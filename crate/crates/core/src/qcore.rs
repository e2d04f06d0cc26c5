//! Exact statevector simulation over the gate set {RX, RY, RZ, CNOT}.
//!
//! Basis ordering: an amplitude index is the bitstring of the register with
//! qubit 0 as the most significant bit, so for `n` qubits qubit `q` lives in
//! bit `n - 1 - q` of the index. `|10⟩` on two qubits is index 2.
//!
//! Rotations use the half-angle convention `R_P(θ) = exp(-iθP/2)`. The
//! generator is a Pauli matrix scaled by `a = 1/2`, with eigenvalues ±1.

use std::fmt;

use num_complex::Complex64;

use crate::error::{config, Result};

pub const MAX_QUBITS: usize = 20;
/// Largest register the dense oracle will build (a 64×64 matrix).
pub const ORACLE_MAX_QUBITS: usize = 6;

/// Scale `a` in `exp(-i a G θ)` for the rotation gates.
pub const GENERATOR_SCALE: f64 = 0.5;
/// Eigenvalues `(e₀, e₁)` of the Pauli generators.
pub const GENERATOR_EIGENVALUES: (f64, f64) = (-1.0, 1.0);

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cnot,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        !matches!(self, GateKind::Cnot)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Cnot => "CNOT",
        }
    }
}

/// A single gate with all angles resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub target: usize,
    /// Only set for CNOT.
    pub control: Option<usize>,
    /// Radians; ignored for CNOT.
    pub angle: f64,
}

impl Gate {
    pub fn rx(target: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Rx, target, angle)
    }

    pub fn ry(target: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Ry, target, angle)
    }

    pub fn rz(target: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Rz, target, angle)
    }

    pub fn rotation(kind: GateKind, target: usize, angle: f64) -> Self {
        debug_assert!(kind.is_rotation());
        Self { kind, target, control: None, angle }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self { kind: GateKind::Cnot, target, control: Some(control), angle: 0.0 }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.target >= n_qubits {
            return config(format!("{} target qubit {} out of range for {n_qubits} qubits", self.kind.name(), self.target));
        }
        match (self.kind, self.control) {
            (GateKind::Cnot, Some(c)) if c >= n_qubits => {
                config(format!("CNOT control qubit {c} out of range for {n_qubits} qubits"))
            }
            (GateKind::Cnot, Some(c)) if c == self.target => config("CNOT control and target must differ"),
            (GateKind::Cnot, None) => config("CNOT requires a control qubit"),
            (GateKind::Cnot, Some(_)) => Ok(()),
            (_, Some(_)) => config("rotation gates take no control qubit"),
            (_, None) if !self.angle.is_finite() => config(format!("non-finite rotation angle {}", self.angle)),
            (_, None) => Ok(()),
        }
    }

    /// The 2×2 matrix of a rotation gate, row-major.
    pub fn rotation_matrix(&self) -> [[Complex64; 2]; 2] {
        let half = self.angle / 2.0;
        let (s, c) = half.sin_cos();
        match self.kind {
            GateKind::Rx => [
                [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
                [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
            ],
            GateKind::Ry => [
                [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
            ],
            GateKind::Rz => [[Complex64::new(c, -s), ZERO], [ZERO, Complex64::new(c, s)]],
            GateKind::Cnot => panic!("CNOT has no single-qubit matrix"),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.control {
            Some(c) => write!(f, "CNOT q{c} -> q{}", self.target),
            None => write!(f, "{}({:.6}) q{}", self.kind.name(), self.angle, self.target),
        }
    }
}

/// The `2^n` complex amplitudes of an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn new(n_qubits: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return config(format!("qubit count {n_qubits} outside 1..={MAX_QUBITS}"));
        }
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut state = Self::new(n_qubits)?;
        if index >= state.amps.len() {
            return config(format!("basis index {index} out of range for {n_qubits} qubits"));
        }
        state.amps[0] = ZERO;
        state.amps[index] = ONE;
        Ok(state)
    }

    /// Builds a state from raw amplitudes; the caller is responsible for normalization.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return config(format!("amplitude count {len} is not a power of two ≥ 2"));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return config(format!("qubit count {n_qubits} exceeds {MAX_QUBITS}"));
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match gate.control {
            Some(control) => self.apply_cnot(control, gate.target),
            None => self.apply_single(gate.target, gate.rotation_matrix()),
        }
        Ok(())
    }

    pub fn apply_all<'a>(&mut self, gates: impl IntoIterator<Item = &'a Gate>) -> Result<()> {
        gates.into_iter().try_for_each(|g| self.apply(g))
    }

    fn apply_single(&mut self, target: usize, m: [[Complex64; 2]; 2]) {
        let mask = self.mask(target);
        for i in 0..self.amps.len() {
            if i & mask != 0 {
                continue;
            }
            let j = i | mask;
            let (a0, a1) = (self.amps[i], self.amps[j]);
            self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[j] = m[1][0] * a0 + m[1][1] * a1;
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let cmask = self.mask(control);
        let tmask = self.mask(target);
        for i in 0..self.amps.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amps.swap(i, i | tmask);
            }
        }
    }

    /// `⟨Ψ|Z_q|Ψ⟩`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return config(format!("readout qubit {qubit} out of range for {} qubits", self.n_qubits));
        }
        let mask = self.mask(qubit);
        let value = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum::<f64>();
        Ok(value.clamp(-1.0, 1.0))
    }
}

/// Functional form of [`StateVector::apply`].
pub fn apply_gate(mut state: StateVector, gate: &Gate) -> Result<StateVector> {
    state.apply(gate)?;
    Ok(state)
}

/// Row-major dense complex matrix used by the verification oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        Self { dim, data }
    }

    fn from_2x2(m: [[Complex64; 2]; 2]) -> Self {
        Self { dim: 2, data: vec![m[0][0], m[0][1], m[1][0], m[1][1]] }
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn kron(&self, other: &Self) -> Self {
        let dim = self.dim * other.dim;
        let mut data = vec![ZERO; dim * dim];
        for r1 in 0..self.dim {
            for c1 in 0..self.dim {
                let a = self.get(r1, c1);
                for r2 in 0..other.dim {
                    for c2 in 0..other.dim {
                        data[(r1 * other.dim + r2) * dim + c1 * other.dim + c2] = a * other.get(r2, c2);
                    }
                }
            }
        }
        Self { dim, data }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let dim = self.dim;
        let mut data = vec![ZERO; dim * dim];
        for r in 0..dim {
            for k in 0..dim {
                let a = self.get(r, k);
                for c in 0..dim {
                    data[r * dim + c] += a * other.get(k, c);
                }
            }
        }
        Self { dim, data }
    }

    fn add(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self { dim: self.dim, data }
    }

    pub fn apply_to(&self, vector: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.get(r, c) * vector[c]).sum())
            .collect()
    }
}

/// `op` on the listed qubits (each a 2×2 factor), identity elsewhere, as a Kronecker product.
fn lift(factors: &[(usize, DenseMatrix)], n_qubits: usize) -> DenseMatrix {
    let id = DenseMatrix::identity(2);
    let mut out: Option<DenseMatrix> = None;
    for q in 0..n_qubits {
        let factor = factors.iter().find(|(fq, _)| *fq == q).map_or(&id, |(_, m)| m);
        out = Some(match out {
            None => factor.clone(),
            Some(acc) => acc.kron(factor),
        });
    }
    out.expect("n_qubits ≥ 1")
}

/// Full unitary of a gate list, built from Kronecker-lifted gate matrices.
///
/// Independent of the in-place kernels in [`StateVector`]; only intended for
/// cross-checking them on small registers.
pub fn dense_unitary_oracle(gates: &[Gate], n_qubits: usize) -> Result<DenseMatrix> {
    if n_qubits == 0 || n_qubits > ORACLE_MAX_QUBITS {
        return config(format!("dense oracle supports 1..={ORACLE_MAX_QUBITS} qubits, got {n_qubits}"));
    }
    let mut unitary = DenseMatrix::identity(1 << n_qubits);
    for gate in gates {
        gate.validate(n_qubits)?;
        let full = match gate.control {
            None => lift(&[(gate.target, DenseMatrix::from_2x2(gate.rotation_matrix()))], n_qubits),
            Some(control) => {
                let p0 = DenseMatrix::from_2x2([[ONE, ZERO], [ZERO, ZERO]]);
                let p1 = DenseMatrix::from_2x2([[ZERO, ZERO], [ZERO, ONE]]);
                let x = DenseMatrix::from_2x2([[ZERO, ONE], [ONE, ZERO]]);
                lift(&[(control, p0)], n_qubits).add(&lift(&[(control, p1), (gate.target, x)], n_qubits))
            }
        };
        unitary = full.matmul(&unitary);
    }
    Ok(unitary)
}
