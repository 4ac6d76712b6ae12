//! Exact statevector simulation.
//!
//! Qubit 0 is the least significant bit of an amplitude index. A gate on
//! targets `[t0, t1, ...]` uses the same convention locally: bit `k` of the
//! gate's row/column index is the state of `targets[k]`.
//!
//! `|0>` is the +1 eigenstate of Z, `sigma+ = |0><1|` and `sigma- = |1><0|`.

use std::fmt;

use num_complex::Complex64 as C64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, r, unitarity_error, Mat, Pauli};

pub const NORM_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-10;
/// Forcing an outcome below this probability is an error.
pub const FORCE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// What a physical qubit encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QubitRole {
    /// One of the qubits encoding spin site `site`.
    Site { site: usize, slot: u8 },
    /// Bond-space memory of preparation block `block`.
    Memory { block: usize, side: Side },
    Ancilla(usize),
}

impl fmt::Display for QubitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QubitRole::Site { site, slot } => write!(f, "site{site}.{slot}"),
            QubitRole::Memory { block, side: Side::Left } => write!(f, "mem{block}L"),
            QubitRole::Memory { block, side: Side::Right } => write!(f, "mem{block}R"),
            QubitRole::Ancilla(k) => write!(f, "anc{k}"),
        }
    }
}

/// Per-shot RNG stream derived from `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How a measurement outcome is chosen.
pub enum Policy<'r> {
    Sample(&'r mut dyn RngCore),
    Force(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub outcome: usize,
    pub probability: f64,
}

/// A unitary acting on a list of target qubits.
#[derive(Debug, Clone)]
pub struct Gate {
    pub matrix: Mat,
    pub targets: Vec<usize>,
    pub tag: String,
}

impl Gate {
    pub fn new(tag: impl Into<String>, matrix: Mat, targets: Vec<usize>) -> Result<Self> {
        let k = targets.len();
        if matrix.nrows() != 1 << k || matrix.ncols() != 1 << k {
            return Err(Error::DimensionMismatch { expected: 1 << k, found: matrix.nrows() });
        }
        for (i, t) in targets.iter().enumerate() {
            if targets[..i].contains(t) {
                return Err(Error::RepeatedQubit(*t));
            }
        }
        let err = unitarity_error(&matrix);
        if err > UNITARY_TOL {
            return Err(Error::NotUnitary(err));
        }
        Ok(Self { matrix, targets, tag: tag.into() })
    }

    /// Same matrix, new targets.
    pub fn on(&self, targets: Vec<usize>) -> Result<Self> {
        Gate::new(self.tag.clone(), self.matrix.clone(), targets)
    }

    pub fn pauli(p: Pauli, q: usize) -> Self {
        Gate { matrix: p.matrix(), targets: vec![q], tag: p.label().to_string() }
    }

    pub fn h(q: usize) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Gate { matrix: Mat::from_row_slice(2, 2, &[r(s), r(s), r(s), r(-s)]), targets: vec![q], tag: "H".into() }
    }

    pub fn ry(theta: f64, q: usize) -> Self {
        let (s, co) = (theta / 2.0).sin_cos();
        Gate { matrix: Mat::from_row_slice(2, 2, &[r(co), r(-s), r(s), r(co)]), targets: vec![q], tag: "RY".into() }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        let mut m = Mat::zeros(4, 4);
        m[(0, 0)] = r(1.0);
        m[(2, 2)] = r(1.0);
        m[(3, 1)] = r(1.0);
        m[(1, 3)] = r(1.0);
        Gate { matrix: m, targets: vec![control, target], tag: "CX".into() }
    }

    pub fn cz(a: usize, b: usize) -> Self {
        let mut m = Mat::identity(4, 4);
        m[(3, 3)] = r(-1.0);
        Gate { matrix: m, targets: vec![a, b], tag: "CZ".into() }
    }

    /// Controlled single-qubit unitary.
    pub fn controlled(control: usize, target: usize, u: &Mat, tag: &str) -> Self {
        let mut m = Mat::identity(4, 4);
        // local index = control + 2 * target
        for a in 0..2 {
            for b in 0..2 {
                m[(1 + 2 * a, 1 + 2 * b)] = u[(a, b)];
            }
        }
        m[(1, 1)] = u[(0, 0)];
        m[(1, 3)] = u[(0, 1)];
        m[(3, 1)] = u[(1, 0)];
        m[(3, 3)] = u[(1, 1)];
        Gate { matrix: m, targets: vec![control, target], tag: tag.into() }
    }
}

/// The four Bell states of an ordered qubit pair `(q1, q2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [BellState::PhiPlus, BellState::PhiMinus, BellState::PsiPlus, BellState::PsiMinus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or_else(|| Error::InvalidArgument(format!("Bell outcome index {i}")))
    }

    /// Amplitudes in the pair's local basis, index = q1 + 2 q2.
    pub fn ket(self) -> [C64; 4] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = r(0.0);
        match self {
            BellState::PhiPlus => [r(s), z, z, r(s)],
            BellState::PhiMinus => [r(s), z, z, r(-s)],
            BellState::PsiPlus => [z, r(s), r(s), z],
            // (|01> - |10>)/sqrt2 with |q1 q2>: q2 = 1 is local index 2.
            BellState::PsiMinus => [z, r(-s), r(s), z],
        }
    }

    /// Pauli proportional to the bond matrix `sum_jk phi_jk |j><k|` teleported
    /// by this outcome.
    pub fn inserted(self) -> Pauli {
        match self {
            BellState::PhiPlus => Pauli::I,
            BellState::PhiMinus => Pauli::Z,
            BellState::PsiPlus => Pauli::X,
            BellState::PsiMinus => Pauli::Y,
        }
    }

    /// Residual defect `B` with `M ∝ S B` for the singlet bond matrix `S ∝ Y`.
    pub fn defect(self) -> Pauli {
        Pauli::Y.mul(self.inserted())
    }

    /// Bits read out after `CNOT(q1 -> q2); H(q1)`, as `(b1, b2)`.
    pub fn readout_bits(self) -> (bool, bool) {
        match self {
            BellState::PhiPlus => (false, false),
            BellState::PhiMinus => (true, false),
            BellState::PsiPlus => (false, true),
            BellState::PsiMinus => (true, true),
        }
    }

    pub fn from_readout_bits(b1: bool, b2: bool) -> Self {
        match (b1, b2) {
            (false, false) => BellState::PhiPlus,
            (true, false) => BellState::PhiMinus,
            (false, true) => BellState::PsiPlus,
            (true, true) => BellState::PsiMinus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BellState::PhiPlus => "Phi+",
            BellState::PhiMinus => "Phi-",
            BellState::PsiPlus => "Psi+",
            BellState::PsiMinus => "Psi-",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "Phi+" | "phi+" | "PhiPlus" => Ok(BellState::PhiPlus),
            "Phi-" | "phi-" | "PhiMinus" => Ok(BellState::PhiMinus),
            "Psi+" | "psi+" | "PsiPlus" => Ok(BellState::PsiPlus),
            "Psi-" | "psi-" | "PsiMinus" => Ok(BellState::PsiMinus),
            other => Err(Error::InvalidArgument(format!("unknown Bell outcome '{other}'"))),
        }
    }
}

/// A Bell measurement result with the bond matrix and defect it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellOutcome {
    pub label: BellState,
    pub inserted: Pauli,
    pub defect: Pauli,
    pub probability: f64,
}

/// Pure state of `n` labelled qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
    labels: Vec<QubitRole>,
}

impl StateVector {
    /// All qubits in `|0>`.
    pub fn zeros(labels: Vec<QubitRole>) -> Result<Self> {
        check_labels(&labels)?;
        let mut amps = vec![C64::new(0.0, 0.0); 1 << labels.len()];
        amps[0] = r(1.0);
        Ok(Self { amps, labels })
    }

    pub fn from_amplitudes(amps: Vec<C64>, labels: Vec<QubitRole>) -> Result<Self> {
        check_labels(&labels)?;
        if amps.len() != 1 << labels.len() {
            return Err(Error::DimensionMismatch { expected: 1 << labels.len(), found: amps.len() });
        }
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("state norm^2 {norm} != 1")));
        }
        Ok(Self { amps, labels })
    }

    /// Normalises the given amplitudes.
    pub fn normalized(mut amps: Vec<C64>, labels: Vec<QubitRole>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::ZeroNorm);
        }
        amps.iter_mut().for_each(|z| *z /= norm);
        Self::from_amplitudes(amps, labels)
    }

    pub fn num_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn labels(&self) -> &[QubitRole] {
        &self.labels
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn position(&self, role: QubitRole) -> Result<usize> {
        self.labels.iter().position(|&l| l == role).ok_or_else(|| Error::MissingRole(role.to_string()))
    }

    pub fn has(&self, role: QubitRole) -> bool {
        self.labels.contains(&role)
    }

    pub fn relabel(&mut self, q: usize, role: QubitRole) -> Result<()> {
        if self.labels.iter().enumerate().any(|(i, &l)| l == role && i != q) {
            return Err(Error::InvalidArgument(format!("role {role} already present")));
        }
        self.labels[q] = role;
        Ok(())
    }

    /// Appends `other`'s qubits after this state's qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        check_labels(&labels)?;
        let n = self.amps.len();
        let mut amps = vec![C64::new(0.0, 0.0); n * other.amps.len()];
        for (j, b) in other.amps.iter().enumerate() {
            if b.norm_sqr() == 0.0 {
                continue;
            }
            for (i, a) in self.amps.iter().enumerate() {
                amps[i + n * j] = a * b;
            }
        }
        Ok(StateVector { amps, labels })
    }

    fn check_targets(&self, targets: &[usize]) -> Result<()> {
        let n = self.num_qubits();
        for (i, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(Error::QubitOutOfRange { index: t, n });
            }
            if targets[..i].contains(&t) {
                return Err(Error::RepeatedQubit(t));
            }
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        self.check_targets(&gate.targets)?;
        let err = unitarity_error(&gate.matrix);
        if err > UNITARY_TOL {
            return Err(Error::NotUnitary(err));
        }
        self.apply_matrix(&gate.matrix, &gate.targets);
        Ok(())
    }

    /// Applies an arbitrary (not necessarily unitary) local operator without
    /// renormalising. Targets must already be validated.
    fn apply_matrix(&mut self, m: &Mat, targets: &[usize]) {
        let k = targets.len();
        let dim = 1 << k;
        let offsets: Vec<usize> = (0..dim)
            .map(|local| targets.iter().enumerate().fold(0, |acc, (b, &t)| acc | (((local >> b) & 1) << t)))
            .collect();
        let mask = targets.iter().fold(0, |acc, &t| acc | (1 << t));
        let mut buf = vec![C64::new(0.0, 0.0); dim];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            for (l, off) in offsets.iter().enumerate() {
                buf[l] = self.amps[base | off];
            }
            for (row, off) in offsets.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (col, b) in buf.iter().enumerate() {
                    acc += m[(row, col)] * b;
                }
                self.amps[base | off] = acc;
            }
        }
    }

    pub fn apply_pauli(&mut self, p: Pauli, q: usize) -> Result<()> {
        if p != Pauli::I {
            self.apply_gate(&Gate::pauli(p, q))?;
        }
        Ok(())
    }

    /// Outcome probabilities for measuring `qubits` in an orthonormal basis
    /// given as kets (local index convention as for gates). `None` means the
    /// computational basis.
    pub fn probabilities(&self, qubits: &[usize], basis: Option<&[Vec<C64>]>) -> Result<Vec<f64>> {
        self.check_targets(qubits)?;
        let dim = 1 << qubits.len();
        let offsets: Vec<usize> = (0..dim)
            .map(|local| qubits.iter().enumerate().fold(0, |acc, (b, &t)| acc | (((local >> b) & 1) << t)))
            .collect();
        let mask = qubits.iter().fold(0, |acc, &t| acc | (1 << t));
        let mut probs = vec![0.0; basis.map_or(dim, <[Vec<C64>]>::len)];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            match basis {
                None => {
                    for (l, off) in offsets.iter().enumerate() {
                        probs[l] += self.amps[base | off].norm_sqr();
                    }
                }
                Some(kets) => {
                    for (o, ket) in kets.iter().enumerate() {
                        let amp: C64 = offsets.iter().zip(ket).map(|(off, k)| k.conj() * self.amps[base | off]).sum();
                        probs[o] += amp.norm_sqr();
                    }
                }
            }
        }
        Ok(probs)
    }

    /// Projective measurement of `qubits` in `basis` (computational when
    /// `None`). The state collapses onto the outcome ket and is renormalised.
    pub fn measure(&mut self, qubits: &[usize], basis: Option<&[Vec<C64>]>, policy: Policy<'_>) -> Result<Measured> {
        let dim = 1 << qubits.len();
        let kets: Vec<Vec<C64>> = match basis {
            Some(b) => {
                check_orthonormal(b, dim)?;
                b.to_vec()
            }
            None => (0..dim).map(|i| basis_ket(i, dim)).collect(),
        };
        let probs = self.probabilities(qubits, Some(&kets))?;
        let outcome = choose(&probs, policy)?;
        let probability = probs[outcome];
        let ket = &kets[outcome];
        let proj = Mat::from_fn(dim, dim, |i, j| ket[i] * ket[j].conj());
        self.apply_matrix(&proj, qubits);
        let nrm = probability.sqrt();
        self.amps.iter_mut().for_each(|z| *z /= nrm);
        Ok(Measured { outcome, probability })
    }

    /// Two-outcome projective measurement `{P, 1 - P}` on `qubits`. Outcome 0
    /// is the `projector` subspace.
    pub fn measure_subspace(&mut self, qubits: &[usize], projector: &Mat, policy: Policy<'_>) -> Result<Measured> {
        self.check_targets(qubits)?;
        let dim = 1 << qubits.len();
        let mut inside = self.clone();
        inside.apply_matrix(projector, qubits);
        let p0 = inside.norm_sqr();
        let probs = [p0, (1.0 - p0).max(0.0)];
        let outcome = choose(&probs, policy)?;
        if outcome == 0 {
            *self = inside;
        } else {
            let comp = Mat::identity(dim, dim) - projector;
            self.apply_matrix(&comp, qubits);
        }
        let probability = probs[outcome];
        let nrm = probability.sqrt();
        self.amps.iter_mut().for_each(|z| *z /= nrm);
        Ok(Measured { outcome, probability })
    }

    /// Bell measurement of the ordered pair `(q1, q2)`.
    pub fn bell_measure(&mut self, q1: usize, q2: usize, policy: Policy<'_>) -> Result<BellOutcome> {
        if q1 == q2 {
            return Err(Error::RepeatedQubit(q1));
        }
        let basis: Vec<Vec<C64>> = BellState::ALL.iter().map(|b| b.ket().to_vec()).collect();
        let m = self.measure(&[q1, q2], Some(&basis), policy)?;
        let label = BellState::ALL[m.outcome];
        Ok(BellOutcome { label, inserted: label.inserted(), defect: label.defect(), probability: m.probability })
    }

    /// Projects `qubits` onto `ket` and removes them from the register.
    /// Returns the reduced state and the squared norm of the projection.
    pub fn contract_out(&self, qubits: &[usize], ket: &[C64]) -> Result<(StateVector, f64)> {
        self.check_targets(qubits)?;
        let dim = 1 << qubits.len();
        if ket.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: ket.len() });
        }
        let rest: Vec<usize> = (0..self.num_qubits()).filter(|q| !qubits.contains(q)).collect();
        let mut out = vec![C64::new(0.0, 0.0); 1 << rest.len()];
        for (idx, amp) in self.amps.iter().enumerate() {
            let local = qubits.iter().enumerate().fold(0, |acc, (b, &q)| acc | (((idx >> q) & 1) << b));
            let keep = rest.iter().enumerate().fold(0, |acc, (b, &q)| acc | (((idx >> q) & 1) << b));
            out[keep] += ket[local].conj() * amp;
        }
        let norm: f64 = out.iter().map(|z| z.norm_sqr()).sum();
        let labels = rest.iter().map(|&q| self.labels[q]).collect();
        Ok((StateVector::normalized(out, labels)?, norm))
    }

    /// Amplitudes with qubits reordered so that qubit `k` of the result is the
    /// qubit labelled `order[k]`. Every label must appear exactly once.
    pub fn amplitudes_in_order(&self, order: &[QubitRole]) -> Result<Vec<C64>> {
        if order.len() != self.num_qubits() {
            return Err(Error::DimensionMismatch { expected: self.num_qubits(), found: order.len() });
        }
        let pos: Vec<usize> = order.iter().map(|&role| self.position(role)).collect::<Result<_>>()?;
        let mut out = vec![C64::new(0.0, 0.0); self.amps.len()];
        for (idx, amp) in self.amps.iter().enumerate() {
            let new = pos.iter().enumerate().fold(0, |acc, (k, &q)| acc | (((idx >> q) & 1) << k));
            out[new] = *amp;
        }
        Ok(out)
    }

    pub fn reordered(&self, order: &[QubitRole]) -> Result<StateVector> {
        Ok(StateVector { amps: self.amplitudes_in_order(order)?, labels: order.to_vec() })
    }

    /// Expectation of a diagonal observable given as a function of the basis
    /// index.
    pub fn expect_diagonal(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.amps.iter().enumerate().map(|(i, a)| a.norm_sqr() * f(i)).sum()
    }

    /// Samples `shots` computational-basis bitstrings of the full register.
    pub fn sample_bitstrings(&self, shots: usize, rng: &mut dyn RngCore) -> Vec<u64> {
        let cdf = cumulative(&self.amps.iter().map(|a| a.norm_sqr()).collect::<Vec<_>>());
        (0..shots).map(|_| sample_cdf(&cdf, rng) as u64).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let amplitudes: Vec<f64> = self.amps.iter().flat_map(|z| [z.re, z.im]).collect();
        serde_json::json!({
            "n": self.num_qubits(),
            "bit_order": "little-endian",
            "labels": self.labels,
            "amplitudes": amplitudes,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Wire {
            n: usize,
            labels: Vec<QubitRole>,
            amplitudes: Vec<f64>,
        }
        let w: Wire = serde_json::from_value(v.clone())?;
        if w.labels.len() != w.n || w.amplitudes.len() != 2 << w.n {
            return Err(Error::InvalidArgument("inconsistent state JSON".into()));
        }
        let amps = w.amplitudes.chunks(2).map(|p| c(p[0], p[1])).collect();
        Self::from_amplitudes(amps, w.labels)
    }
}

fn check_labels(labels: &[QubitRole]) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::InvalidArgument(format!("duplicate qubit role {l}")));
        }
    }
    if labels.len() > 30 {
        return Err(Error::InvalidArgument(format!("{} qubits exceed the simulator limit", labels.len())));
    }
    Ok(())
}

fn basis_ket(i: usize, dim: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[i] = r(1.0);
    v
}

fn check_orthonormal(kets: &[Vec<C64>], dim: usize) -> Result<()> {
    for (i, a) in kets.iter().enumerate() {
        if a.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: a.len() });
        }
        for (j, b) in kets.iter().enumerate().take(i + 1) {
            let ip: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            if (ip - r(want)).norm() > 1e-10 {
                return Err(Error::InvalidArgument("measurement basis is not orthonormal".into()));
            }
        }
    }
    Ok(())
}

fn choose(probs: &[f64], policy: Policy<'_>) -> Result<usize> {
    match policy {
        Policy::Force(o) => {
            let p = *probs.get(o).ok_or_else(|| Error::InvalidArgument(format!("outcome {o} out of range")))?;
            if p < FORCE_THRESHOLD {
                return Err(Error::ZeroProbability { outcome: o, probability: p });
            }
            Ok(o)
        }
        Policy::Sample(rng) => Ok(sample_cdf(&cumulative(probs), rng)),
    }
}

pub(crate) fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

pub(crate) fn sample_cdf(cdf: &[f64], rng: &mut dyn RngCore) -> usize {
    let total = *cdf.last().unwrap_or(&1.0);
    let u: f64 = rng.random::<f64>() * total;
    let i = cdf.partition_point(|&x| x <= u);
    // Never return a zero-weight trailing index due to round-off.
    let mut i = i.min(cdf.len() - 1);
    while i > 0 && cdf[i] == cdf[i - 1] {
        i -= 1;
    }
    i
}

/// One circuit instruction.
#[derive(Debug, Clone)]
pub enum Instruction {
    Gate(Gate),
    /// Computational-basis measurement.
    Measure(Vec<usize>),
    /// Bell measurement of an ordered pair, realised as `CNOT(q1 -> q2)`,
    /// `H(q1)` and a computational readout.
    BellMeasure(usize, usize),
    /// Two-outcome symmetric/antisymmetric projection of a pair.
    SwapTest(usize, usize),
}

impl Instruction {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Instruction::Gate(g) => g.targets.clone(),
            Instruction::Measure(q) => q.clone(),
            Instruction::BellMeasure(a, b) | Instruction::SwapTest(a, b) => vec![*a, *b],
        }
    }
}

/// Ordered instruction list over a fixed qubit register.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub labels: Vec<QubitRole>,
    pub instructions: Vec<Instruction>,
}

impl Circuit {
    pub fn new(labels: Vec<QubitRole>) -> Self {
        Self { labels, instructions: Vec::new() }
    }

    pub fn num_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn qubit(&self, role: QubitRole) -> Result<usize> {
        self.labels.iter().position(|&l| l == role).ok_or_else(|| Error::MissingRole(role.to_string()))
    }

    pub fn push(&mut self, ins: Instruction) {
        self.instructions.push(ins);
    }

    pub fn gate(&mut self, g: Gate) {
        self.instructions.push(Instruction::Gate(g));
    }

    /// Greedy ASAP layering; instructions sharing a qubit never share a layer.
    pub fn layers(&self) -> Vec<usize> {
        let mut last = vec![0usize; self.num_qubits()];
        self.instructions
            .iter()
            .map(|ins| {
                let qs = ins.qubits();
                let layer = qs.iter().map(|&q| last[q]).max().unwrap_or(0) + 1;
                qs.iter().for_each(|&q| last[q] = layer);
                layer
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.layers().into_iter().max().unwrap_or(0)
    }

    /// Qubits touched by no measurement instruction.
    pub fn unmeasured(&self) -> Vec<usize> {
        let mut measured = vec![false; self.num_qubits()];
        for ins in &self.instructions {
            match ins {
                Instruction::Gate(_) => {}
                other => other.qubits().into_iter().for_each(|q| measured[q] = true),
            }
        }
        (0..self.num_qubits()).filter(|&q| !measured[q]).collect()
    }

    /// JSON instruction list: `{kind, tag, targets, matrix}` with the matrix as
    /// rows of `[re, im]` pairs.
    pub fn to_json(&self) -> serde_json::Value {
        let instructions: Vec<serde_json::Value> = self
            .instructions
            .iter()
            .map(|ins| match ins {
                Instruction::Gate(g) => {
                    let rows: Vec<Vec<[f64; 2]>> = (0..g.matrix.nrows())
                        .map(|i| (0..g.matrix.ncols()).map(|j| [g.matrix[(i, j)].re, g.matrix[(i, j)].im]).collect())
                        .collect();
                    serde_json::json!({"kind": "gate", "tag": g.tag, "targets": g.targets, "matrix": rows})
                }
                Instruction::Measure(q) => serde_json::json!({"kind": "measure", "tag": "MZ", "targets": q}),
                Instruction::BellMeasure(a, b) => serde_json::json!({"kind": "bell_measure", "tag": "MBELL", "targets": [a, b]}),
                Instruction::SwapTest(a, b) => serde_json::json!({"kind": "swap_test", "tag": "MSWAP", "targets": [a, b]}),
            })
            .collect();
        serde_json::json!({
            "num_qubits": self.num_qubits(),
            "bit_order": "little-endian",
            "labels": self.labels,
            "depth": self.depth(),
            "instructions": instructions,
        })
    }
}

/// Depth of a circuit (greedy layering).
pub fn circuit_depth(c: &Circuit) -> usize {
    c.depth()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, kron};

    fn labels(n: usize) -> Vec<QubitRole> {
        (0..n).map(QubitRole::Ancilla).collect()
    }

    fn random_state(n: usize, seed: u64) -> StateVector {
        let mut rng = stream_rng(seed, 0);
        let amps = (0..1 << n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        StateVector::normalized(amps, labels(n)).unwrap()
    }

    fn random_unitary(k: usize, seed: u64) -> Mat {
        let mut rng = stream_rng(seed, 1);
        let dim = 1 << k;
        let a = Mat::from_fn(dim, dim, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        a.qr().q()
    }

    #[test]
    fn x_and_cnot() {
        let mut s = StateVector::zeros(labels(1)).unwrap();
        s.apply_gate(&Gate::pauli(Pauli::X, 0)).unwrap();
        assert_eq!(s.amplitudes()[1], r(1.0));

        // |10> written |q1 q0>: q1 = 1 -> index 2. CNOT(control q1, target q0).
        let mut s = StateVector::zeros(labels(2)).unwrap();
        s.apply_gate(&Gate::pauli(Pauli::X, 1)).unwrap();
        s.apply_gate(&Gate::cnot(1, 0)).unwrap();
        assert_eq!(s.amplitudes()[3], r(1.0));
    }

    #[test]
    fn gate_errors() {
        let bad = Mat::from_row_slice(2, 2, &[r(1.0), r(1.0), r(0.0), r(1.0)]);
        assert!(matches!(Gate::new("bad", bad, vec![0]), Err(Error::NotUnitary(_))));
        assert!(matches!(Gate::new("cx", Gate::cnot(0, 1).matrix, vec![1, 1]), Err(Error::RepeatedQubit(1))));
        let mut s = StateVector::zeros(labels(2)).unwrap();
        assert!(matches!(s.apply_gate(&Gate::h(5)), Err(Error::QubitOutOfRange { .. })));
    }

    #[test]
    fn two_qubit_gate_matches_dense_oracle() {
        let psi = random_state(4, 3);
        let u = random_unitary(2, 4);
        // Gate on qubits [1, 3]: build the full operator by permuting the
        // kron product I ⊗ I ⊗ U (acting on qubits 0,1) into place.
        let mut s = psi.clone();
        s.apply_gate(&Gate::new("U", u.clone(), vec![1, 3]).unwrap()).unwrap();
        let full_on_01 = kron(&Mat::identity(4, 4), &u);
        // permutation: logical qubit order (1,3,0,2) -> physical.
        let perm = |idx: usize| -> usize {
            let bits = [idx & 1, (idx >> 1) & 1, (idx >> 2) & 1, (idx >> 3) & 1];
            // logical bit k lives on physical qubit map[k]
            let map = [1, 3, 0, 2];
            (0..4).fold(0, |acc, k| acc | (bits[k] << map[k]))
        };
        let p = Mat::from_fn(16, 16, |i, j| if perm(j) == i { r(1.0) } else { r(0.0) });
        let full = &p * full_on_01 * p.transpose();
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        let expect = full * v;
        let diff: f64 = expect.iter().zip(s.amplitudes()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(diff < 1e-12, "{diff}");
        assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn measurement_examples() {
        let mut plus = StateVector::zeros(labels(1)).unwrap();
        plus.apply_gate(&Gate::h(0)).unwrap();
        let probs = plus.probabilities(&[0], None).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-14 && (probs[1] - 0.5).abs() < 1e-14);

        let mut zero = StateVector::zeros(labels(1)).unwrap();
        assert!(matches!(zero.measure(&[0], None, Policy::Force(1)), Err(Error::ZeroProbability { .. })));

        let mut rng = stream_rng(42, 0);
        let shots = 100_000;
        let mut ones = 0usize;
        for _ in 0..shots {
            let mut s = plus.clone();
            ones += s.measure(&[0], None, Policy::Sample(&mut rng)).unwrap().outcome;
        }
        let sigma = (shots as f64 * 0.25).sqrt();
        assert!((ones as f64 - shots as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn repeated_measurement_is_idempotent() {
        let mut rng = stream_rng(5, 0);
        for seed in 0..20 {
            let mut s = random_state(3, seed);
            let first = s.measure(&[0, 2], None, Policy::Sample(&mut rng)).unwrap();
            let again = s.probabilities(&[0, 2], None).unwrap();
            assert!((again[first.outcome] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn bell_measurement_examples() {
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let singlet = StateVector::from_amplitudes(BellState::PsiMinus.ket().to_vec(), labels(2)).unwrap();
        let mut s = singlet.clone();
        let out = s.bell_measure(0, 1, Policy::Force(BellState::PsiMinus.index())).unwrap();
        assert!((out.probability - 1.0).abs() < 1e-12);
        assert_eq!(out.defect, Pauli::I);
        let _ = s2;

        let zero = StateVector::zeros(labels(2)).unwrap();
        let basis: Vec<Vec<C64>> = BellState::ALL.iter().map(|b| b.ket().to_vec()).collect();
        let p = zero.probabilities(&[0, 1], Some(&basis)).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        assert!(p[2].abs() < 1e-12 && p[3].abs() < 1e-12);
    }

    #[test]
    fn bell_table_inserted_matrix_matches_ket() {
        // M ∝ sum_jk phi_jk |j><k| with j = q1 (local bit 0), k = q2 (bit 1).
        for b in BellState::ALL {
            let ket = b.ket();
            let m = Mat::from_fn(2, 2, |j, k| ket[j + 2 * k]);
            let p = b.inserted().matrix();
            let ov = crate::linalg::trace(&(p.adjoint() * &m));
            assert!((ov.norm() - frobenius(&m) * 2f64.sqrt()).abs() < 1e-12, "{b:?}");
            // M ∝ S B with S ∝ Y.
            let sb = Pauli::Y.matrix() * b.defect().matrix();
            let ov = crate::linalg::trace(&(sb.adjoint() * &m));
            assert!((ov.norm() - frobenius(&m) * 2f64.sqrt()).abs() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn bell_readout_rotation() {
        for b in BellState::ALL {
            let mut s = StateVector::from_amplitudes(b.ket().to_vec(), labels(2)).unwrap();
            s.apply_gate(&Gate::cnot(0, 1)).unwrap();
            s.apply_gate(&Gate::h(0)).unwrap();
            let (b1, b2) = b.readout_bits();
            let idx = b1 as usize + 2 * b2 as usize;
            assert!((s.amplitudes()[idx].norm() - 1.0).abs() < 1e-12, "{b:?}");
            assert_eq!(BellState::from_readout_bits(b1, b2), b);
        }
    }

    #[test]
    fn depth_layering() {
        let c0 = Circuit::new(labels(3));
        assert_eq!(c0.depth(), 0);
        let mut c1 = Circuit::new(labels(3));
        c1.gate(Gate::h(0));
        c1.gate(Gate::h(1));
        c1.gate(Gate::cnot(0, 1));
        c1.gate(Gate::h(2));
        c1.push(Instruction::Measure(vec![0, 1, 2]));
        assert_eq!(c1.layers(), vec![1, 1, 2, 1, 3]);
        assert_eq!(circuit_depth(&c1), 3);
    }

    #[test]
    fn json_roundtrip() {
        let s = random_state(3, 9);
        let back = StateVector::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn contract_out_and_reorder() {
        let a = random_state(2, 1);
        let b = StateVector::from_amplitudes(BellState::PhiMinus.ket().to_vec(), vec![QubitRole::Ancilla(7), QubitRole::Ancilla(8)]).unwrap();
        let joint = a.tensor(&b).unwrap();
        let (red, norm) = joint.contract_out(&[2, 3], &BellState::PhiMinus.ket()).unwrap();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((crate::linalg::fidelity(red.amplitudes(), a.amplitudes()).unwrap() - 1.0).abs() < 1e-12);
        let swapped = a.reordered(&[QubitRole::Ancilla(1), QubitRole::Ancilla(0)]).unwrap();
        assert_eq!(swapped.amplitudes()[1], a.amplitudes()[2]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn outcome_probabilities_sum_to_one(seed in 0u64..500, mask in 1usize..8) {
                let s = random_state(3, seed);
                let qs: Vec<usize> = (0..3).filter(|q| mask >> q & 1 == 1).collect();
                let p: f64 = s.probabilities(&qs, None).unwrap().iter().sum();
                prop_assert!((p - 1.0).abs() < 1e-10);
            }

            #[test]
            fn gates_preserve_norm(seed in 0u64..500) {
                let mut s = random_state(4, seed);
                s.apply_gate(&Gate::new("U", random_unitary(3, seed), vec![3, 0, 2]).unwrap()).unwrap();
                prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
            }

            #[test]
            fn sampling_is_deterministic(seed in 0u64..1000) {
                let s = random_state(3, seed);
                let a = s.sample_bitstrings(50, &mut stream_rng(seed, 3));
                let b = s.sample_bitstrings(50, &mut stream_rng(seed, 3));
                prop_assert_eq!(a, b);
            }
        }
    }
}
