//! Stochastic Pauli noise on prepared circuits, readout mitigation and the
//! string-order decay fit.
//!
//! Conventions: depolarising noise follows every gate (`p1` for one-qubit
//! gates, `p2` for gates on two or more qubits, drawn uniformly from the
//! non-identity Pauli strings on the gate's support). A qubit that sits idle
//! for a layer between two of its operations suffers a phase flip with
//! probability `idle_dephase`; the same applies to qubits kept unmeasured
//! until the end of the circuit. Every classical readout bit flips with
//! probability `p_ro`.
//!
//! Trajectories allocate qubits at their first operation and read them out
//! right after their last one. Later phase flips commute with the
//! computational readout, so this matches running the whole register.

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fidelity, mcweeny_purify, partial_trace_pure, r, DensityMatrix, Mat, Pauli, MCWEENY_MAX_ITER, MCWEENY_TOL};
use crate::mps::MpsChain;
use crate::observables::{record_labels, remap_bits, sample_preparation, Estimate, PrepSpec, ShotRecord};
use crate::protocol::{
    fusion_blocks, prepare_fusion, prepare_sequential, projector_success_state, MemoryInit, Method, OutcomePolicy,
    PauliFrame, PreparationResult,
};
use crate::sim::{stream_rng, BellState, Circuit, Gate, Instruction, Policy, QubitRole, StateVector};
use crate::teleport::{byproduct, init_basis, site_basis_transform, Cartesian};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub p1: f64,
    pub p2: f64,
    pub p_ro: f64,
    pub idle_dephase: f64,
}

impl NoiseModel {
    pub fn new(p1: f64, p2: f64, p_ro: f64, idle_dephase: f64) -> Result<Self> {
        let m = NoiseModel { p1, p2, p_ro, idle_dephase };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p1", self.p1), ("p2", self.p2), ("p_ro", self.p_ro), ("idle_dephase", self.idle_dephase)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.p1 == 0.0 && self.p2 == 0.0 && self.p_ro == 0.0 && self.idle_dephase == 0.0
    }
}

/// Bernoulli draw that consumes no randomness when `p` is zero.
fn happens(p: f64, rng: &mut dyn RngCore) -> bool {
    p > 0.0 && rng.random::<f64>() < p
}

/// Result of one noisy run of a circuit.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Read bit of every circuit qubit that was read out.
    pub bits: Vec<Option<bool>>,
    /// Bell outcomes as read, in circuit order.
    pub bell: Vec<BellState>,
    /// Remaining qubits (the `keep` set).
    pub state: StateVector,
    /// Whether a post-selected readout or a swap test rejected the run.
    pub rejected: bool,
}

/// Noisy executor for one circuit.
pub struct Executor<'c> {
    circuit: &'c Circuit,
    layers: Vec<usize>,
    last_touch: Vec<Option<usize>>,
    end_layer: usize,
    model: NoiseModel,
}

impl<'c> Executor<'c> {
    pub fn new(circuit: &'c Circuit, model: NoiseModel) -> Result<Self> {
        model.validate()?;
        let layers = circuit.layers();
        let mut last_touch = vec![None; circuit.num_qubits()];
        for (i, ins) in circuit.instructions.iter().enumerate() {
            for q in ins.qubits() {
                last_touch[q] = Some(i);
            }
        }
        let end_layer = layers.iter().copied().max().unwrap_or(0) + 1;
        Ok(Executor { circuit, layers, last_touch, end_layer, model })
    }

    fn dephase_gap(&self, gap: usize, q: usize, state: &mut StateVector, rng: &mut dyn RngCore) -> Result<()> {
        if self.model.idle_dephase == 0.0 || gap == 0 {
            return Ok(());
        }
        // Odd number of flips over `gap` idle layers.
        let p = 0.5 * (1.0 - (1.0 - 2.0 * self.model.idle_dephase).powi(gap as i32));
        if happens(p, rng) {
            state.apply_pauli(Pauli::Z, state.position(self.circuit.labels[q])?)?;
        }
        Ok(())
    }

    fn read(&self, bit: bool, rng: &mut dyn RngCore) -> bool {
        bit ^ happens(self.model.p_ro, rng)
    }

    /// Z readout of circuit qubit `q`; removes it from `state`.
    fn readout(&self, q: usize, state: &mut StateVector, rng: &mut dyn RngCore) -> Result<bool> {
        let pos = state.position(self.circuit.labels[q])?;
        let m = state.measure(&[pos], None, Policy::Sample(&mut *rng))?;
        let ket = if m.outcome == 0 { [r(1.0), r(0.0)] } else { [r(0.0), r(1.0)] };
        *state = state.contract_out(&[pos], &ket)?.0;
        Ok(self.read(m.outcome == 1, rng))
    }

    /// Runs the circuit. Qubits in `keep` are never read out; `postselect`
    /// rejects the run as soon as a listed qubit reads the other value.
    pub fn run(&self, rng: &mut dyn RngCore, keep: &[usize], postselect: &[(usize, bool)]) -> Result<Trajectory> {
        let n = self.circuit.num_qubits();
        let labels = &self.circuit.labels;
        let mut state = StateVector::zeros(vec![])?;
        let mut live = vec![false; n];
        let mut last_layer: Vec<Option<usize>> = vec![None; n];
        let mut bits = vec![None; n];
        let mut bell = Vec::new();
        let reject = |bits: &[Option<bool>]| postselect.iter().any(|&(q, v)| bits[q].is_some_and(|b| b != v));

        for (i, ins) in self.circuit.instructions.iter().enumerate() {
            let qs = ins.qubits();
            let layer = self.layers[i];
            for &q in &qs {
                if !live[q] {
                    state = state.tensor(&StateVector::zeros(vec![labels[q]])?)?;
                    live[q] = true;
                } else if let Some(prev) = last_layer[q] {
                    self.dephase_gap(layer - prev - 1, q, &mut state, rng)?;
                }
                last_layer[q] = Some(layer);
            }
            let pos: Vec<usize> = qs.iter().map(|&q| state.position(labels[q])).collect::<Result<_>>()?;
            match ins {
                Instruction::Gate(g) => {
                    state.apply_gate(&g.on(pos.clone())?)?;
                    let p = if qs.len() == 1 { self.model.p1 } else { self.model.p2 };
                    if happens(p, rng) {
                        let k = pos.len();
                        let code = rng.random_range(1..1usize << (2 * k));
                        for (j, &q) in pos.iter().enumerate() {
                            state.apply_pauli(Pauli::ALL[(code >> (2 * j)) & 3], q)?;
                        }
                    }
                }
                Instruction::Measure(_) => {
                    for &q in &qs {
                        bits[q] = Some(self.readout(q, &mut state, rng)?);
                        live[q] = false;
                    }
                }
                Instruction::BellMeasure(_, _) => {
                    let out = state.bell_measure(pos[0], pos[1], Policy::Sample(&mut *rng))?;
                    state = state.contract_out(&pos, &out.label.ket())?.0;
                    let (b1, b2) = out.label.readout_bits();
                    bell.push(BellState::from_readout_bits(self.read(b1, rng), self.read(b2, rng)));
                    qs.iter().for_each(|&q| live[q] = false);
                }
                Instruction::SwapTest(_, _) => {
                    let m = state.measure_subspace(&pos, &crate::protocol::singlet_projector(), Policy::Sample(&mut *rng))?;
                    // Outcome 0 is the singlet: the trial failed.
                    if !self.read(m.outcome == 1, rng) {
                        return Ok(Trajectory { bits, bell, state, rejected: true });
                    }
                }
            }
            for &q in &qs {
                if live[q] && self.last_touch[q] == Some(i) && !keep.contains(&q) {
                    bits[q] = Some(self.readout(q, &mut state, rng)?);
                    live[q] = false;
                }
            }
            if reject(&bits) {
                return Ok(Trajectory { bits, bell, state, rejected: true });
            }
        }
        for q in 0..n {
            if keep.contains(&q) {
                if !live[q] {
                    state = state.tensor(&StateVector::zeros(vec![labels[q]])?)?;
                } else if let Some(prev) = last_layer[q] {
                    self.dephase_gap(self.end_layer - prev - 1, q, &mut state, rng)?;
                }
            } else if bits[q].is_none() && self.last_touch[q].is_none() {
                bits[q] = Some(self.read(false, rng));
            }
        }
        let rejected = reject(&bits);
        Ok(Trajectory { bits, bell, state, rejected })
    }
}

/// Runs `f(k)` for `k in 0..count` on all cores, results in index order.
pub(crate) fn parallel_map<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(count.max(1));
    let chunk = count.div_ceil(threads.max(1)).max(1);
    let f = &f;
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..count)
            .step_by(chunk)
            .map(|start| s.spawn(move || (start..(start + chunk).min(count)).map(f).collect::<Result<Vec<T>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Ideal preparation whose circuit is replayed with noise. Fusion circuits
/// are outcome independent before correction; corrections are applied as a
/// Pauli frame from the read Bell outcomes.
pub fn noise_template(spec: &PrepSpec) -> Result<PreparationResult> {
    match spec.method {
        Method::Sequential => prepare_sequential(spec.n, spec.memory, &MemoryInit::default()),
        Method::Fusion => {
            let f = fusion_blocks(spec.n).len() - 1;
            prepare_fusion(spec.n, &OutcomePolicy::Forced(vec![BellState::PhiPlus; f]))
        }
        Method::Projector => projector_success_state(spec.n),
        Method::SwapFusion => Err(Error::InvalidArgument("noisy runs are not defined for swap-fusion".into())),
    }
}

/// Bond positions of the fusions of an `n`-site fusion preparation.
pub fn fusion_bonds(n: usize) -> Vec<usize> {
    let blocks = fusion_blocks(n);
    blocks[..blocks.len() - 1].iter().map(|b| *b.last().expect("non-empty block")).collect()
}

fn frame_for(n: usize, bell: &[BellState]) -> PauliFrame {
    let defects: Vec<(usize, Pauli)> = fusion_bonds(n).into_iter().zip(bell).map(|(b, o)| (b, o.defect())).collect();
    PauliFrame::from_defects(n, &defects)
}

/// Noisy shots of a preparation. Shot `k` uses stream `(seed, k)`. With an
/// all-zero model this is the ideal sampler on the same streams.
pub fn run_noisy(spec: &PrepSpec, model: &NoiseModel, shots: usize, seed: u64) -> Result<ShotRecord> {
    model.validate()?;
    if model.is_noiseless() {
        return sample_preparation(spec, shots, seed);
    }
    let template = noise_template(spec)?;
    let labels = record_labels(&template);
    let circuit = &template.circuit;
    let cols: Vec<usize> = labels.iter().map(|&q| circuit.qubit(q)).collect::<Result<_>>()?;
    let exec = Executor::new(circuit, *model)?;
    let runs = parallel_map(shots, |k| {
        let mut rng = stream_rng(seed, k as u64);
        let t = exec.run(&mut rng, &[], &[])?;
        if t.rejected {
            return Ok(None);
        }
        let raw = cols.iter().enumerate().fold(0u64, |acc, (j, &c)| acc | (u64::from(t.bits[c].unwrap_or(false)) << j));
        let frame = (spec.method == Method::Fusion).then(|| frame_for(spec.n, &t.bell));
        Ok(Some((raw, frame)))
    })?;
    let kept: Vec<_> = runs.into_iter().flatten().collect();
    Ok(ShotRecord {
        labels,
        bits: kept.iter().map(|k| k.0).collect(),
        frames: if spec.method == Method::Fusion { kept.iter().map(|k| k.1.clone().unwrap_or_default()).collect() } else { vec![] },
        n_sites: spec.n,
        edges: template.memories.left.zip(template.memories.right),
        attempted: shots,
    })
}

// ---------------------------------------------------------------------------
// Readout mitigation

/// Symmetric confusion matrix `[[1-p, p], [p, 1-p]]` (columns: true value).
pub fn flip_confusion(p: f64) -> [[f64; 2]; 2] {
    [[1.0 - p, p], [p, 1.0 - p]]
}

fn apply_per_qubit(probs: &[f64], mats: &[[[f64; 2]; 2]]) -> Vec<f64> {
    let mut v = probs.to_vec();
    for (q, m) in mats.iter().enumerate() {
        let bit = 1 << q;
        for idx in 0..v.len() {
            if idx & bit == 0 {
                let (a, b) = (v[idx], v[idx | bit]);
                v[idx] = m[0][0] * a + m[0][1] * b;
                v[idx | bit] = m[1][0] * a + m[1][1] * b;
            }
        }
    }
    v
}

/// Forward readout channel on a distribution over `mats.len()` qubits.
pub fn apply_confusion(probs: &[f64], mats: &[[[f64; 2]; 2]]) -> Result<Vec<f64>> {
    if probs.len() != 1 << mats.len() {
        return Err(Error::DimensionMismatch { expected: 1 << mats.len(), found: probs.len() });
    }
    Ok(apply_per_qubit(probs, mats))
}

/// Applies the inverse of the tensor-product confusion, clips negative
/// entries and renormalises.
pub fn readout_mitigate(probs: &[f64], mats: &[[[f64; 2]; 2]]) -> Result<Vec<f64>> {
    if probs.len() != 1 << mats.len() {
        return Err(Error::DimensionMismatch { expected: 1 << mats.len(), found: probs.len() });
    }
    let mut inv = Vec::with_capacity(mats.len());
    for (q, m) in mats.iter().enumerate() {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-12 {
            return Err(Error::SingularConfusion(q));
        }
        inv.push([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]);
    }
    let mut v = apply_per_qubit(probs, &inv);
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let s: f64 = v.iter().sum();
    if s <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    v.iter_mut().for_each(|x| *x /= s);
    Ok(v)
}

/// Empirical distribution of the site qubits of a shot record (frame
/// applied), indexed like `chain.encoding.site_roles(n)`.
pub fn site_distribution(shots: &ShotRecord) -> Result<Vec<f64>> {
    if shots.is_empty() {
        return Err(Error::EmptyShotSet);
    }
    let n = shots.n_sites;
    let mut counts = vec![0.0; 1 << (2 * n)];
    for k in 0..shots.len() {
        let idx = shots.site_codes(k)?.iter().enumerate().fold(0usize, |a, (s, &c)| a | (c << (2 * s)));
        counts[idx] += 1.0;
    }
    let total = shots.len() as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    Ok(counts)
}

/// String order from a distribution over the site qubits. Singlet codes are
/// post-selected away.
pub fn string_order_from_distribution(probs: &[f64], chain: &MpsChain, n: usize, i: usize, ell: usize) -> Result<f64> {
    if ell == 0 || i + ell > n {
        return Err(Error::InvalidArgument(format!("window i={i}, ell={ell} out of range for N={n}")));
    }
    let enc = &chain.encoding;
    let j = i + ell - 1;
    let (mut num, mut den) = (0.0, 0.0);
    'configs: for (idx, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut sz = vec![0.0; n];
        for (s, v) in sz.iter_mut().enumerate() {
            match enc.decode((idx >> (2 * s)) & 3) {
                Some(m) => *v = chain.spin_z[m],
                None => continue 'configs,
            }
        }
        let mut v = if ell == 1 { sz[i] * sz[i] } else { sz[i] * sz[j] };
        for s in &sz[(i + 1).min(j)..j] {
            v *= (std::f64::consts::PI * s).cos();
        }
        den += p;
        num += p * v;
    }
    if den == 0.0 {
        return Err(Error::EmptyShotSet);
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Decay fits

/// String order at every window length `2..=lmax`, averaged per shot over
/// all windows of that length.
pub fn string_order_profile(shots: &ShotRecord, chain: &MpsChain, lmax: usize) -> Result<Vec<(usize, Estimate)>> {
    let (kept, _) = crate::observables::postselect_spin1(shots)?;
    let n = shots.n_sites;
    let lmax = lmax.min(n);
    let spins: Vec<Vec<f64>> = (0..kept.len())
        .map(|k| Ok(kept.site_codes(k)?.into_iter().map(|c| chain.encoding.decode(c).map_or(0.0, |m| chain.spin_z[m])).collect()))
        .collect::<Result<_>>()?;
    (2..=lmax)
        .map(|ell| {
            let est = Estimate::from_samples(spins.iter().map(|sz| {
                let windows = n - ell + 1;
                (0..windows)
                    .map(|i| {
                        let j = i + ell - 1;
                        sz[i] * sz[j] * sz[i + 1..j].iter().map(|s| (std::f64::consts::PI * s).cos()).product::<f64>()
                    })
                    .sum::<f64>()
                    / windows as f64
            }))?;
            Ok((ell, est))
        })
        .collect()
}

/// Weighted log-linear fit of `|O(ell)| = c exp(-ell / l)`. Returns `l`;
/// infinite when the data do not decay.
pub fn fit_decay_length(profile: &[(usize, Estimate)]) -> Result<f64> {
    let pts: Vec<(f64, f64, f64)> = profile
        .iter()
        .filter(|(_, e)| e.value.abs() > 0.0)
        .map(|(l, e)| {
            let w = if e.stderr > 0.0 { (e.value / e.stderr).powi(2) } else { 1e12 };
            (*l as f64, e.value.abs().ln(), w)
        })
        .collect();
    if pts.len() < 2 {
        return Err(Error::Unidentifiable("need two nonzero string-order points".into()));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Unidentifiable("single window length".into()));
    }
    let slope = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    Ok(if slope < 0.0 { -1.0 / slope } else { f64::INFINITY })
}

// ---------------------------------------------------------------------------
// Noisy teleportation

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisyTeleport {
    pub p2: f64,
    pub model: NoiseModel,
    /// Per-shot fidelity of the received state, over accepted shots.
    pub raw_fidelity: Estimate,
    /// Fidelity of the McWeeny-purified average received state.
    pub purified_fidelity: f64,
    /// Accepted fraction of attempts.
    pub acceptance: f64,
    pub attempted: usize,
}

struct TeleportCircuit {
    circuit: Circuit,
    left: usize,
    right: usize,
    sites: Vec<[usize; 2]>,
}

/// Preparation circuit with the teleportation measurements of each site and
/// of the right memory inserted right after their last preparation gate.
fn teleport_circuit(template: &PreparationResult, psi: &[C64; 2]) -> Result<TeleportCircuit> {
    let prep = &template.circuit;
    let left = prep.qubit(template.memories.left.ok_or_else(|| Error::MissingRole("left memory".into()))?)?;
    let right = prep.qubit(template.memories.right.ok_or_else(|| Error::MissingRole("right memory".into()))?)?;
    let roles = template.site_roles();
    let sites: Vec<[usize; 2]> =
        (0..template.n_sites).map(|s| Ok([prep.qubit(roles[2 * s])?, prep.qubit(roles[2 * s + 1])?])).collect::<Result<_>>()?;
    let mut last = vec![None; prep.num_qubits()];
    for (i, ins) in prep.instructions.iter().enumerate() {
        for q in ins.qubits() {
            last[q] = Some(i);
        }
    }
    let basis = init_basis(psi);
    let v = Mat::from_fn(2, 2, |i, j| basis[i][j].conj());
    let t = site_basis_transform();
    let mut circuit = Circuit::new(prep.labels.clone());
    let mut site_done = vec![false; sites.len()];
    let mut right_done = false;
    for (i, ins) in prep.instructions.iter().enumerate() {
        circuit.push(ins.clone());
        for (s, qs) in sites.iter().enumerate() {
            if !site_done[s] && qs.iter().all(|&q| last[q].is_some_and(|l| l <= i)) {
                circuit.gate(t.on(qs.to_vec())?);
                circuit.push(Instruction::Measure(qs.to_vec()));
                site_done[s] = true;
            }
        }
        if !right_done && last[right].is_some_and(|l| l <= i) {
            circuit.gate(Gate::new("INIT", v.clone(), vec![right])?);
            circuit.push(Instruction::Measure(vec![right]));
            right_done = true;
        }
    }
    Ok(TeleportCircuit { circuit, left, right, sites })
}

/// Teleportation through a noisy chain. Shots whose right-memory readout
/// fails the target initialisation, or that read a singlet code on any site,
/// are rejected.
pub fn noisy_teleport(n: usize, psi: [C64; 2], prep: Method, model: &NoiseModel, shots: usize, seed: u64) -> Result<NoisyTeleport> {
    let template = match prep {
        Method::Sequential => prepare_sequential(n, crate::protocol::MemoryMode::Single, &MemoryInit::default())?,
        Method::Fusion => noise_template(&PrepSpec::new(Method::Fusion, n))?,
        other => return Err(Error::InvalidArgument(format!("teleportation needs sequential or fusion, got {}", other.tag()))),
    };
    let tc = teleport_circuit(&template, &psi)?;
    let exec = Executor::new(&tc.circuit, *model)?;
    let bonds = fusion_bonds(n);
    let left_role: QubitRole = tc.circuit.labels[tc.left];
    let psi_v = psi.to_vec();
    let runs = parallel_map(shots, |k| {
        let mut rng = stream_rng(seed, k as u64);
        let t = exec.run(&mut rng, &[tc.left], &[(tc.right, false)])?;
        if t.rejected {
            return Ok(None);
        }
        let outcomes: Vec<Cartesian> = tc
            .sites
            .iter()
            .map(|qs| {
                let code = usize::from(t.bits[qs[0]].unwrap_or(false)) | (usize::from(t.bits[qs[1]].unwrap_or(false)) << 1);
                Cartesian::from_readout(code)
            })
            .collect();
        if outcomes.contains(&Cartesian::S) {
            return Ok(None);
        }
        let defects: Vec<Pauli> = if prep == Method::Fusion {
            bonds.iter().zip(&t.bell).map(|(_, o)| o.defect()).filter(|&p| p != Pauli::I).collect()
        } else {
            vec![]
        };
        let lam = byproduct(&outcomes, &defects)?;
        let st = &t.state;
        let rho = partial_trace_pure(st.amplitudes(), &[st.position(left_role)?], st.num_qubits())?;
        let p = lam.matrix();
        let rho = &p * rho.matrix() * &p;
        let f = fidelity(&DensityMatrix::from_unnormalized(rho.clone())?, &psi_v)?;
        Ok(Some((f, rho)))
    })?;
    let accepted: Vec<(f64, Mat)> = runs.into_iter().flatten().collect();
    let raw_fidelity = Estimate::from_samples(accepted.iter().map(|a| a.0))?;
    let avg = accepted.iter().fold(Mat::zeros(2, 2), |acc, a| acc + &a.1);
    let avg = DensityMatrix::from_unnormalized(avg)?;
    let pure = mcweeny_purify(&avg, MCWEENY_TOL, MCWEENY_MAX_ITER)?;
    Ok(NoisyTeleport {
        p2: model.p2,
        model: *model,
        raw_fidelity,
        purified_fidelity: fidelity(&pure.rho, &psi_v)?,
        acceptance: accepted.len() as f64 / shots as f64,
        attempted: shots,
    })
}

/// Spin-1 rejection probability per shot under readout flips alone, from
/// the exact site distribution.
pub fn expected_readout_rejection(probs: &[f64], n: usize, p_ro: f64) -> f64 {
    // Code 0 (00) needs two flips to reach 11; codes 1 and 2 need one.
    let q = [p_ro * p_ro, p_ro * (1.0 - p_ro), p_ro * (1.0 - p_ro), 1.0];
    let accept: f64 = probs
        .iter()
        .enumerate()
        .map(|(idx, &p)| p * (0..n).map(|s| 1.0 - q[(idx >> (2 * s)) & 3]).product::<f64>())
        .sum();
    1.0 - accept
}

/// Exact site distribution of the ideal preparation (branches averaged,
/// frames applied).
pub fn exact_site_distribution(spec: &PrepSpec) -> Result<Vec<f64>> {
    let n = spec.n;
    let mut out = vec![0.0; 1 << (2 * n)];
    for branch in crate::observables::preparation_branches(spec)? {
        let res = &branch.result;
        let st = &res.state;
        let pos: Vec<usize> = res.site_roles().iter().map(|&q| st.position(q)).collect::<Result<_>>()?;
        let mut marg: HashMap<usize, f64> = HashMap::new();
        for (idx, a) in st.amplitudes().iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                let mut site_idx = remap_bits(idx as u64, &pos) as usize;
                if let Some(f) = res.frame() {
                    site_idx = (0..n).fold(0, |acc, s| acc | (f.site_code(s, (site_idx >> (2 * s)) & 3) << (2 * s)));
                }
                *marg.entry(site_idx).or_insert(0.0) += p;
            }
        }
        for (k, p) in marg {
            out[k] += branch.probability * p;
        }
    }
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    Ok(out)
}

/// Fixed configuration for the sequential-versus-fusion decay comparison.
pub fn comparison_model() -> NoiseModel {
    NoiseModel { p1: 0.0, p2: 0.01, p_ro: 0.0, idle_dephase: 0.02 }
}

/// Convenience for examples: a seeded stream.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    stream_rng(seed, shot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::aklt_tensors;
    use crate::observables::{postselect_spin1, string_order_shots};
    use crate::protocol::CorrectionMode;
    use crate::teleport::canonical_targets;

    #[test]
    fn zero_model_matches_ideal_sampler() {
        let spec = PrepSpec::new(Method::Fusion, 4);
        let a = run_noisy(&spec, &NoiseModel::default(), 300, 9).unwrap();
        let b = sample_preparation(&spec, 300, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn executor_without_noise_reproduces_exact_string_order() {
        let ch = aklt_tensors();
        for method in [Method::Sequential, Method::Fusion, Method::Projector] {
            let spec = PrepSpec { correction: CorrectionMode::Frame, ..PrepSpec::new(method, 4) };
            // Tiny p1 forces the trajectory path; no one-qubit gates are noisy
            // enough to matter at this shot count.
            let model = NoiseModel { p1: 1e-12, ..NoiseModel::default() };
            let shots = run_noisy(&spec, &model, 20_000, 4).unwrap();
            let exact = exact_site_distribution(&spec).unwrap();
            let want = string_order_from_distribution(&exact, &ch, 4, 0, 4).unwrap();
            let got = string_order_shots(&shots, &ch, 0, 4).unwrap();
            assert!((got.value - want).abs() < 4.0 * got.stderr, "{method:?}: {} vs {want}", got.value);
            if method == Method::Projector {
                let rate = shots.len() as f64 / shots.attempted as f64;
                assert!((rate - 0.75f64.powi(4)).abs() < 0.02, "{rate}");
            }
        }
    }

    #[test]
    fn readout_rejection_matches_binomial_prediction() {
        let spec = PrepSpec::new(Method::Sequential, 4);
        let model = NoiseModel { p_ro: 0.02, ..NoiseModel::default() };
        let shots = run_noisy(&spec, &model, 100_000, 21).unwrap();
        let (_, rej) = postselect_spin1(&shots).unwrap();
        let want = expected_readout_rejection(&exact_site_distribution(&spec).unwrap(), 4, 0.02);
        let sigma = (want * (1.0 - want) / shots.len() as f64).sqrt();
        assert!((rej - want).abs() < 3.0 * sigma, "{rej} vs {want}");
    }

    #[test]
    fn mitigation_cases() {
        let p = vec![0.1, 0.2, 0.3, 0.4];
        let id = [flip_confusion(0.0), flip_confusion(0.0)];
        assert_eq!(readout_mitigate(&p, &id).unwrap(), p);
        assert!(matches!(readout_mitigate(&p, &[flip_confusion(0.5), flip_confusion(0.0)]), Err(Error::SingularConfusion(0))));
        let noisy = apply_confusion(&p, &[flip_confusion(0.05), flip_confusion(0.1)]).unwrap();
        let m = readout_mitigate(&noisy, &[flip_confusion(0.05), flip_confusion(0.1)]).unwrap();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in m.iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mitigation_removes_string_order_bias() {
        let ch = aklt_tensors();
        let spec = PrepSpec::new(Method::Sequential, 4);
        let exact = exact_site_distribution(&spec).unwrap();
        let mats = vec![flip_confusion(0.05); 8];
        let noisy = apply_confusion(&exact, &mats).unwrap();
        let fixed = readout_mitigate(&noisy, &mats).unwrap();
        let truth = string_order_from_distribution(&exact, &ch, 4, 0, 4).unwrap();
        let raw = string_order_from_distribution(&noisy, &ch, 4, 0, 4).unwrap();
        let mit = string_order_from_distribution(&fixed, &ch, 4, 0, 4).unwrap();
        assert!((raw - truth).abs() >= 5.0 * (mit - truth).abs(), "{truth} {raw} {mit}");
    }

    #[test]
    fn decay_fit_on_synthetic_profile() {
        let prof: Vec<(usize, Estimate)> =
            (2..=8).map(|l| (l, Estimate { value: -0.44 * (-(l as f64) / 2.5).exp(), stderr: 1e-3, shots: 1 })).collect();
        assert!((fit_decay_length(&prof).unwrap() - 2.5).abs() < 1e-9);
        let flat: Vec<(usize, Estimate)> = (2..=5).map(|l| (l, Estimate { value: -4.0 / 9.0, stderr: 1e-3, shots: 1 })).collect();
        assert!(fit_decay_length(&flat).unwrap().is_infinite());
    }

    #[test]
    fn noiseless_trajectory_teleport() {
        let (_, psi) = canonical_targets()[5];
        for prep in [Method::Sequential, Method::Fusion] {
            let model = NoiseModel { p1: 1e-12, ..NoiseModel::default() };
            let t = noisy_teleport(4, psi, prep, &model, 2000, 3).unwrap();
            assert!((t.raw_fidelity.value - 1.0).abs() < 1e-9, "{prep:?} {:?}", t.raw_fidelity);
            assert!((t.acceptance - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn purification_does_not_hurt() {
        let (_, psi) = canonical_targets()[2];
        let model = NoiseModel { p1: 0.01, p2: 0.02, p_ro: 0.01, idle_dephase: 0.01 };
        let t = noisy_teleport(3, psi, Method::Fusion, &model, 4000, 8).unwrap();
        assert!(t.raw_fidelity.value < 1.0);
        assert!(t.purified_fidelity >= t.raw_fidelity.value - 1e-12);
    }

    #[test]
    fn invalid_model_rejected() {
        assert!(NoiseModel::new(0.1, 1.5, 0.0, 0.0).is_err());
        let json = r#"{"p1":0.0,"p2":0.01,"bogus":1}"#;
        assert!(serde_json::from_str::<NoiseModel>(json).is_err());
    }
}
