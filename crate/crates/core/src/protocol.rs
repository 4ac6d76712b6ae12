//! State preparation: sequential, fusion, SWAP-test fusion and the
//! probabilistic projector baseline.
//!
//! Blocks of sites are entangled with memory qubits that carry the virtual
//! (bond) index. Fusion measurements on neighbouring memories glue blocks
//! together up to a Pauli defect on the bond, which is then removed either by
//! unitaries pushed to the left edge or by relabelling measurement outcomes.

use num_complex::Complex64 as C64;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, r, Mat, Pauli};
use crate::mps::{
    aklt_tensors, check_inversion, contract_open_inserted, contract_periodic_sites, singlet_matrix, spin1_pi_rotation,
    MpsChain, SiteEncoding, SiteState,
};
use crate::sim::{stream_rng, BellState, Circuit, Gate, Instruction, Policy, QubitRole, Side, StateVector};

/// Sites per fusion block.
pub const BLOCK_SITES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sequential,
    Fusion,
    Projector,
    SwapFusion,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Sequential => "sequential",
            Method::Fusion => "fusion",
            Method::Projector => "projector",
            Method::SwapFusion => "swap-fusion",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryMode {
    Single,
    Dual,
}

/// Initial two-memory state `sum_jk Lambda_jk |j>_L |k>_R`.
#[derive(Debug, Clone)]
pub struct MemoryInit {
    pub lambda: Mat,
}

impl Default for MemoryInit {
    fn default() -> Self {
        MemoryInit { lambda: singlet_matrix() }
    }
}

impl MemoryInit {
    pub fn new(lambda: Mat) -> Result<Self> {
        if lambda.nrows() != 2 || lambda.ncols() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: lambda.nrows() });
        }
        if (frobenius(&lambda) - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument("memory matrix must have unit Frobenius norm".into()));
        }
        Ok(MemoryInit { lambda })
    }

    /// `Lambda = I / sqrt2`.
    pub fn phi_plus() -> Self {
        MemoryInit { lambda: Mat::identity(2, 2).map(|z| z * std::f64::consts::FRAC_1_SQRT_2) }
    }

    fn is(&self, m: &Mat) -> bool {
        frobenius(&(&self.lambda - m)) < 1e-12
    }
}

/// Fusion outcomes and the Pauli defects they leave on bonds. A bond at
/// position `p` sits between sites `p` and `p + 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefectRecord {
    pub outcomes: Vec<(usize, BellState)>,
    /// Non-identity defects only, positions strictly increasing.
    pub defects: Vec<(usize, Pauli)>,
}

impl DefectRecord {
    pub fn push(&mut self, bond: usize, outcome: BellState) {
        self.outcomes.push((bond, outcome));
        let b = outcome.defect();
        if b != Pauli::I {
            self.defects.push((bond, b));
        }
    }

    pub fn is_empty(&self) -> bool {
        self.defects.is_empty()
    }
}

/// Classical relabelling of Z-basis outcomes equivalent to the unitary
/// correction: `+` and `-` swap on flagged sites and the left memory bit flips.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliFrame {
    pub site_swap: Vec<bool>,
    pub memory_flip: bool,
}

impl PauliFrame {
    /// Frame cancelling every defect in `defects` on an `n`-site chain.
    pub fn from_defects(n: usize, defects: &[(usize, Pauli)]) -> Self {
        let mut frame = PauliFrame { site_swap: vec![false; n], memory_flip: false };
        for &(bond, b) in defects {
            frame.absorb(bond, b);
        }
        frame
    }

    pub fn absorb(&mut self, bond: usize, b: Pauli) {
        if b.flips_z() {
            for s in &mut self.site_swap[..=bond] {
                *s ^= true;
            }
            self.memory_flip ^= true;
        }
    }

    /// Physical index after relabelling.
    pub fn site_index(&self, site: usize, m: usize) -> usize {
        if self.site_swap.get(site).copied().unwrap_or(false) && m != 1 {
            2 - m
        } else {
            m
        }
    }

    /// Relabels a two-qubit spin-1 code (exchanging the two slot bits).
    pub fn site_code(&self, site: usize, code: usize) -> usize {
        if self.site_swap.get(site).copied().unwrap_or(false) {
            ((code & 1) << 1) | (code >> 1)
        } else {
            code
        }
    }

    pub fn memory_bit(&self, bit: usize) -> usize {
        bit ^ self.memory_flip as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Correction {
    None,
    Unitary,
    Frame(PauliFrame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exchange {
    Symmetric,
    Antisymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Z outcomes of the left and right edge memories.
    Z { left: usize, right: usize },
    Subspace(Exchange),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTarget {
    Outcomes(usize, usize),
    Subspace(Exchange),
    Sample(u64),
}

/// How fusion outcomes are chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutcomePolicy {
    Sample { seed: u64, stream: u64 },
    Forced(Vec<BellState>),
}

impl OutcomePolicy {
    pub fn seeded(seed: u64) -> Self {
        OutcomePolicy::Sample { seed, stream: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryIndices {
    pub left: Option<QubitRole>,
    pub right: Option<QubitRole>,
    pub consumed: Vec<QubitRole>,
}

/// Output of a preparation routine. Measured fusion memories are removed from
/// `state` but stay in `circuit`.
#[derive(Debug, Clone)]
pub struct PreparationResult {
    pub state: StateVector,
    pub n_sites: usize,
    pub chain: MpsChain,
    pub method: Method,
    pub mode: Option<MemoryMode>,
    pub lambda: Mat,
    pub memories: MemoryIndices,
    pub defects: DefectRecord,
    pub circuit: Circuit,
    pub correction: Correction,
    pub boundary: Option<Boundary>,
    /// Probability of the recorded measurement branch.
    pub probability: f64,
}

impl PreparationResult {
    /// Circuit depth with a final readout of every qubit not yet measured.
    pub fn depth(&self) -> usize {
        let mut c = self.circuit.clone();
        let rest = c.unmeasured();
        if !rest.is_empty() {
            c.push(Instruction::Measure(rest));
        }
        c.depth()
    }

    pub fn num_qubits(&self) -> usize {
        self.circuit.num_qubits()
    }

    pub fn site_roles(&self) -> Vec<QubitRole> {
        self.chain.encoding.site_roles(self.n_sites)
    }

    pub fn frame(&self) -> Option<&PauliFrame> {
        match &self.correction {
            Correction::Frame(f) => Some(f),
            _ => None,
        }
    }

    pub(crate) fn gate(&mut self, tag: &str, matrix: &Mat, roles: &[QubitRole]) -> Result<()> {
        let full: Vec<usize> = roles.iter().map(|&q| self.circuit.qubit(q)).collect::<Result<_>>()?;
        let local: Vec<usize> = roles.iter().map(|&q| self.state.position(q)).collect::<Result<_>>()?;
        self.circuit.gate(Gate::new(tag, matrix.clone(), full)?);
        self.state.apply_gate(&Gate::new(tag, matrix.clone(), local)?)
    }
}

/// Orthonormal completion of `columns` (given at their input indices) to a
/// `dim x dim` unitary. Remaining columns come from Gram-Schmidt over the
/// computational basis in index order, each with its first nonzero entry made
/// real-positive.
pub fn complete_unitary(dim: usize, columns: &[(usize, Vec<C64>)]) -> Result<Mat> {
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(dim);
    for (_, col) in columns {
        if col.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: col.len() });
        }
        basis.push(col.clone());
    }
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate().take(i + 1) {
            let ip: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            if (ip - r(want)).norm() > 1e-10 {
                return Err(Error::NotUnitary((ip - r(want)).norm()));
            }
        }
    }
    let mut extra = Vec::new();
    for e in 0..dim {
        if basis.len() + extra.len() == dim {
            break;
        }
        let mut v = vec![r(0.0); dim];
        v[e] = r(1.0);
        for b in basis.iter().chain(extra.iter()) {
            let ip: C64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= ip * y);
        }
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm < 1e-8 {
            continue;
        }
        let lead = v.iter().find(|z| z.norm() > 1e-12).copied().unwrap_or(r(1.0));
        let phase = lead.conj() / lead.norm();
        v.iter_mut().for_each(|z| *z = *z * phase / nrm);
        extra.push(v);
    }
    let mut u = Mat::zeros(dim, dim);
    let taken: Vec<usize> = columns.iter().map(|(i, _)| *i).collect();
    for ((idx, _), col) in columns.iter().zip(&basis) {
        u.set_column(*idx, &nalgebra::DVector::from_column_slice(col));
    }
    let free = (0..dim).filter(|i| !taken.contains(i));
    for (idx, col) in free.zip(&extra) {
        u.set_column(idx, &nalgebra::DVector::from_column_slice(col));
    }
    Ok(u)
}

/// Site unitary on targets `[memory, slot0, slot1, ...]` (gate index
/// `mem + 2 * local`) with `U |j>|initial> = sum_m A^m |j> (x) |m>`.
pub fn build_site_unitary(chain: &MpsChain) -> Result<Mat> {
    if chain.bond_dim != 2 {
        return Err(Error::InvalidArgument("site unitaries need a single memory qubit".into()));
    }
    let enc = &chain.encoding;
    let dim = 2 * enc.local_dim();
    let cols: Vec<(usize, Vec<C64>)> = (0..2)
        .map(|j| {
            let mut v = vec![r(0.0); dim];
            for (m, a) in chain.tensors.iter().enumerate() {
                for i in 0..2 {
                    v[i + 2 * enc.codes[m]] += a[(i, j)];
                }
            }
            (j + 2 * enc.initial, v)
        })
        .collect();
    complete_unitary(dim, &cols)
}

/// Embeds a `d x d` operator on physical indices into the site's qubit space,
/// acting as identity on unused codes.
pub fn site_operator(u: &Mat, enc: &SiteEncoding) -> Mat {
    let dim = enc.local_dim();
    let mut v = Mat::identity(dim, dim);
    for (m, &cm) in enc.codes.iter().enumerate() {
        for (mp, &cmp) in enc.codes.iter().enumerate() {
            v[(cm, cmp)] = u[(m, mp)];
        }
    }
    v
}

/// Maps a qubit pair holding a triplet `{|00>, (|01>+|10>)/sqrt2, |11>}`
/// onto the spin-1 codes of `(+, 0, -)`, and the singlet onto `|s>`.
pub fn triplet_to_spin1() -> Mat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = r(0.0);
    let kets: [[C64; 4]; 4] = [
        [r(1.0), z, z, z],
        [z, r(s), r(s), z],
        [z, z, z, r(1.0)],
        BellState::PsiMinus.ket(),
    ];
    let enc = SiteEncoding::spin1();
    let targets = [enc.codes[0], enc.codes[1], enc.codes[2], SiteEncoding::SPIN1_SINGLET];
    let mut w = Mat::zeros(4, 4);
    for (ket, &t) in kets.iter().zip(&targets) {
        for (j, a) in ket.iter().enumerate() {
            w[(t, j)] += a.conj();
        }
    }
    w
}

/// Projector onto the antisymmetric (singlet) state of a qubit pair.
pub fn singlet_projector() -> Mat {
    let k = BellState::PsiMinus.ket();
    Mat::from_fn(4, 4, |i, j| k[i] * k[j].conj())
}

pub(crate) fn memory(block: usize, side: Side) -> QubitRole {
    QubitRole::Memory { block, side }
}

/// Gates preparing `sum_jk Lambda_jk |j>_a |k>_b` from `|00>`.
fn memory_init_gates(init: &MemoryInit, a: usize, b: usize) -> Result<Vec<Gate>> {
    let z = Pauli::Z;
    if init.is(&singlet_matrix()) {
        return Ok(vec![Gate::pauli(Pauli::X, b), Gate::h(a), Gate::cnot(a, b), Gate::pauli(z, a)]);
    }
    if init.is(&MemoryInit::phi_plus().lambda) {
        return Ok(vec![Gate::h(a), Gate::cnot(a, b)]);
    }
    let col: Vec<C64> = (0..4).map(|idx| init.lambda[(idx & 1, idx >> 1)]).collect();
    Ok(vec![Gate::new("INIT", complete_unitary(4, &[(0, col)])?, vec![a, b])?])
}

/// Register order: site qubits first (`site k slot s -> q * k + s`), then
/// memories in block order, left before right.
pub(crate) fn register(enc: &SiteEncoding, n: usize, blocks: usize) -> Vec<QubitRole> {
    let mut labels = enc.site_roles(n);
    for b in 0..blocks {
        labels.push(memory(b, Side::Left));
        labels.push(memory(b, Side::Right));
    }
    labels
}

pub(crate) fn site_targets(enc: &SiteEncoding, site: usize) -> Vec<QubitRole> {
    (0..enc.qubits_per_site).map(|slot| QubitRole::Site { site, slot: slot as u8 }).collect()
}

/// Prepares `sites` of one block with memories of block `block`. Returns the
/// block's state; gates go into `circuit` (full register indices).
pub(crate) fn prepare_block(
    chain: &MpsChain,
    u: &Mat,
    sites: &[usize],
    block: usize,
    mode: MemoryMode,
    init: &MemoryInit,
    circuit: &mut Circuit,
) -> Result<StateVector> {
    let enc = &chain.encoding;
    let (ml, mr) = (memory(block, Side::Left), memory(block, Side::Right));
    let mut labels: Vec<QubitRole> = sites.iter().flat_map(|&s| site_targets(enc, s)).collect();
    labels.push(ml);
    labels.push(mr);
    let mut state = StateVector::zeros(labels)?;
    // Sites start in the encoding's initial code.
    for &s in sites {
        for (slot, role) in site_targets(enc, s).into_iter().enumerate() {
            if (enc.initial >> slot) & 1 == 1 {
                let p = Pauli::X;
                circuit.gate(Gate::pauli(p, circuit.qubit(role)?));
                state.apply_pauli(p, state.position(role)?)?;
            }
        }
    }
    for g in memory_init_gates(init, 0, 1)? {
        let roles = [ml, mr];
        let full = g.targets.iter().map(|&t| circuit.qubit(roles[t])).collect::<Result<Vec<_>>>()?;
        let local = g.targets.iter().map(|&t| state.position(roles[t])).collect::<Result<Vec<_>>>()?;
        circuit.gate(g.on(full)?);
        state.apply_gate(&g.on(local)?)?;
    }
    let mut apply_u = |mem: QubitRole, site: usize, state: &mut StateVector| -> Result<()> {
        let mut roles = vec![mem];
        roles.extend(site_targets(enc, site));
        let full = roles.iter().map(|&q| circuit.qubit(q)).collect::<Result<Vec<_>>>()?;
        let local = roles.iter().map(|&q| state.position(q)).collect::<Result<Vec<_>>>()?;
        circuit.gate(Gate::new("U", u.clone(), full)?);
        state.apply_gate(&Gate::new("U", u.clone(), local)?)
    };
    match mode {
        MemoryMode::Single => {
            for &s in sites.iter().rev() {
                apply_u(ml, s, &mut state)?;
            }
        }
        MemoryMode::Dual => {
            let c = sites.len().div_ceil(2);
            // Interleave so that both memories act in the same layer.
            let left: Vec<usize> = sites[..c].iter().rev().copied().collect();
            let right: Vec<usize> = sites[c..].to_vec();
            for k in 0..c {
                apply_u(ml, left[k], &mut state)?;
                if let Some(&s) = right.get(k) {
                    apply_u(mr, s, &mut state)?;
                }
            }
        }
    }
    Ok(state)
}

/// Sequential preparation of an `n`-site chain with two memory qubits.
pub fn prepare_sequential_with(chain: &MpsChain, n: usize, mode: MemoryMode, init: &MemoryInit) -> Result<PreparationResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if mode == MemoryMode::Dual && !check_inversion(chain) {
        return Err(Error::SymmetryViolated("dual-memory preparation needs (A^m)^T = -Y A^m Y".into()));
    }
    let u = build_site_unitary(chain)?;
    let mut circuit = Circuit::new(register(&chain.encoding, n, 1));
    let sites: Vec<usize> = (0..n).collect();
    let state = prepare_block(chain, &u, &sites, 0, mode, init, &mut circuit)?;
    Ok(PreparationResult {
        state,
        n_sites: n,
        chain: chain.clone(),
        method: Method::Sequential,
        mode: Some(mode),
        lambda: init.lambda.clone(),
        memories: MemoryIndices { left: Some(memory(0, Side::Left)), right: Some(memory(0, Side::Right)), consumed: vec![] },
        defects: DefectRecord::default(),
        circuit,
        correction: Correction::None,
        boundary: None,
        probability: 1.0,
    })
}

pub fn prepare_sequential(n: usize, mode: MemoryMode, init: &MemoryInit) -> Result<PreparationResult> {
    prepare_sequential_with(&aklt_tensors(), n, mode, init)
}

/// Site ranges of the fusion blocks: pairs, plus a single site when `n` is
/// odd.
pub fn fusion_blocks(n: usize) -> Vec<Vec<usize>> {
    (0..n).collect::<Vec<_>>().chunks(BLOCK_SITES).map(<[usize]>::to_vec).collect()
}

fn fusion_register(chain: &MpsChain, n: usize) -> Result<(Vec<Vec<usize>>, Circuit, Mat)> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let blocks = fusion_blocks(n);
    let circuit = Circuit::new(register(&chain.encoding, n, blocks.len()));
    Ok((blocks, circuit, build_site_unitary(chain)?))
}

/// All fusion blocks prepared and tensored, memories untouched.
pub fn prepare_blocks(n: usize) -> Result<PreparationResult> {
    let chain = aklt_tensors();
    let (blocks, mut circuit, u) = fusion_register(&chain, n)?;
    let init = MemoryInit::default();
    let mut state: Option<StateVector> = None;
    for (b, sites) in blocks.iter().enumerate() {
        let s = prepare_block(&chain, &u, sites, b, MemoryMode::Dual, &init, &mut circuit)?;
        state = Some(match state {
            None => s,
            Some(acc) => acc.tensor(&s)?,
        });
    }
    let last = blocks.len() - 1;
    Ok(PreparationResult {
        state: state.expect("at least one block"),
        n_sites: n,
        chain,
        method: Method::Fusion,
        mode: Some(MemoryMode::Dual),
        lambda: init.lambda,
        memories: MemoryIndices { left: Some(memory(0, Side::Left)), right: Some(memory(last, Side::Right)), consumed: vec![] },
        defects: DefectRecord::default(),
        circuit,
        correction: Correction::None,
        boundary: None,
        probability: 1.0,
    })
}

/// Constant-depth preparation: blocks in parallel, then Bell fusions of
/// neighbouring memories. Defects are recorded, not corrected.
pub fn prepare_fusion(n: usize, policy: &OutcomePolicy) -> Result<PreparationResult> {
    let chain = aklt_tensors();
    let (blocks, mut circuit, u) = fusion_register(&chain, n)?;
    let fusions = blocks.len() - 1;
    if let OutcomePolicy::Forced(list) = policy {
        if list.len() != fusions {
            return Err(Error::InvalidArgument(format!("expected {fusions} forced outcomes, got {}", list.len())));
        }
    }
    let mut rng = match policy {
        OutcomePolicy::Sample { seed, stream } => Some(stream_rng(*seed, *stream)),
        OutcomePolicy::Forced(_) => None,
    };
    let init = MemoryInit::default();
    let mut defects = DefectRecord::default();
    let mut consumed = Vec::new();
    let mut probability = 1.0;
    let mut state = prepare_block(&chain, &u, &blocks[0], 0, MemoryMode::Dual, &init, &mut circuit)?;
    for b in 1..blocks.len() {
        let next = prepare_block(&chain, &u, &blocks[b], b, MemoryMode::Dual, &init, &mut circuit)?;
        state = state.tensor(&next)?;
        let (q1, q2) = (memory(b - 1, Side::Right), memory(b, Side::Left));
        circuit.push(Instruction::BellMeasure(circuit.qubit(q1)?, circuit.qubit(q2)?));
        let pol = match (&mut rng, policy) {
            (Some(rng), _) => Policy::Sample(rng as &mut dyn RngCore),
            (None, OutcomePolicy::Forced(list)) => Policy::Force(list[b - 1].index()),
            (None, OutcomePolicy::Sample { .. }) => unreachable!(),
        };
        let (p1, p2) = (state.position(q1)?, state.position(q2)?);
        let out = state.bell_measure(p1, p2, pol)?;
        probability *= out.probability;
        let (reduced, _) = state.contract_out(&[p1, p2], &out.label.ket())?;
        state = reduced;
        defects.push(*blocks[b - 1].last().expect("non-empty block"), out.label);
        consumed.extend([q1, q2]);
    }
    let last = blocks.len() - 1;
    Ok(PreparationResult {
        state,
        n_sites: n,
        chain,
        method: Method::Fusion,
        mode: Some(MemoryMode::Dual),
        lambda: init.lambda,
        memories: MemoryIndices { left: Some(memory(0, Side::Left)), right: Some(memory(last, Side::Right)), consumed },
        defects,
        circuit,
        correction: Correction::None,
        boundary: None,
        probability,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMode {
    Unitary,
    Frame,
}

/// Removes recorded defects, rightmost bond first. Unitary mode applies `U_B`
/// to every site left of the bond and `B` to the left edge memory; frame mode
/// only records the equivalent relabelling of Z-basis outcomes.
pub fn correct_defects(mut result: PreparationResult, mode: CorrectionMode) -> Result<PreparationResult> {
    if result.correction != Correction::None {
        return Err(Error::InvalidArgument("defects already corrected".into()));
    }
    let left = result.memories.left.ok_or_else(|| Error::MissingRole("left edge memory".into()))?;
    let mut frame = PauliFrame { site_swap: vec![false; result.n_sites], memory_flip: false };
    let defects = result.defects.defects.clone();
    for &(bond, b) in defects.iter().rev() {
        if bond + 1 >= result.n_sites {
            return Err(Error::InvalidArgument(format!("defect on bond {bond} outside the chain")));
        }
        match mode {
            CorrectionMode::Unitary => {
                let v = site_operator(&spin1_pi_rotation(b), &result.chain.encoding);
                for site in 0..=bond {
                    let roles = site_targets(&result.chain.encoding, site);
                    result.gate(&format!("U{}", b.label()), &v, &roles)?;
                }
                result.gate(b.label(), &b.matrix(), &[left])?;
            }
            CorrectionMode::Frame => frame.absorb(bond, b),
        }
    }
    result.correction = match mode {
        CorrectionMode::Unitary => Correction::Unitary,
        CorrectionMode::Frame => Correction::Frame(frame),
    };
    Ok(result)
}

fn edge_memories(result: &PreparationResult) -> Result<(QubitRole, QubitRole)> {
    match (result.memories.left, result.memories.right, result.boundary) {
        (Some(l), Some(r), None) => Ok((l, r)),
        _ => Err(Error::InvalidArgument("edge memories already measured".into())),
    }
}

/// Joint Z-outcome probabilities `p[l][r]` of the edge memories.
pub fn boundary_probabilities(result: &PreparationResult) -> Result<[[f64; 2]; 2]> {
    let (l, r) = edge_memories(result)?;
    let p = result.state.probabilities(&[result.state.position(l)?, result.state.position(r)?], None)?;
    Ok([[p[0], p[2]], [p[1], p[3]]])
}

/// Bell-outcome probabilities of the edge memories `(left, right)`.
pub fn edge_bell_probabilities(result: &PreparationResult) -> Result<[f64; 4]> {
    let (l, r) = edge_memories(result)?;
    let basis: Vec<Vec<C64>> = BellState::ALL.iter().map(|b| b.ket().to_vec()).collect();
    let p = result.state.probabilities(&[result.state.position(l)?, result.state.position(r)?], Some(&basis))?;
    Ok([p[0], p[1], p[2], p[3]])
}

/// Measures the edge memories. Z outcomes remove them from the register, as
/// does the antisymmetric projection; the symmetric projection keeps them.
pub fn enforce_boundary(mut result: PreparationResult, target: BoundaryTarget) -> Result<PreparationResult> {
    let (l, r) = edge_memories(&result)?;
    let (ql, qr) = (result.circuit.qubit(l)?, result.circuit.qubit(r)?);
    match target {
        BoundaryTarget::Outcomes(_, _) | BoundaryTarget::Sample(_) => {
            result.circuit.push(Instruction::Measure(vec![ql, qr]));
            let mut rng = match target {
                BoundaryTarget::Sample(seed) => Some(stream_rng(seed, u64::MAX)),
                _ => None,
            };
            let mut outcome = [0usize; 2];
            for (k, role) in [l, r].into_iter().enumerate() {
                let pol = match (&mut rng, target) {
                    (Some(g), _) => Policy::Sample(g as &mut dyn RngCore),
                    (None, BoundaryTarget::Outcomes(a, b)) => Policy::Force([a, b][k]),
                    _ => unreachable!(),
                };
                let pos = result.state.position(role)?;
                let m = result.state.measure(&[pos], None, pol)?;
                result.probability *= m.probability;
                outcome[k] = m.outcome;
                let ket: Vec<C64> = (0..2).map(|i| r_f(i == m.outcome)).collect();
                result.state = result.state.contract_out(&[pos], &ket)?.0;
            }
            result.boundary = Some(Boundary::Z { left: outcome[0], right: outcome[1] });
        }
        BoundaryTarget::Subspace(ex) => {
            result.circuit.push(Instruction::SwapTest(ql, qr));
            let (pl, pr) = (result.state.position(l)?, result.state.position(r)?);
            let outcome = if ex == Exchange::Antisymmetric { 0 } else { 1 };
            let m = result.state.measure_subspace(&[pl, pr], &singlet_projector(), Policy::Force(outcome))?;
            result.probability *= m.probability;
            if ex == Exchange::Antisymmetric {
                result.state = result.state.contract_out(&[pl, pr], &BellState::PsiMinus.ket())?.0;
            }
            result.boundary = Some(Boundary::Subspace(ex));
        }
    }
    Ok(result)
}

fn r_f(one: bool) -> C64 {
    r(if one { 1.0 } else { 0.0 })
}

/// Probability of each exchange outcome for a memory pair.
pub fn swap_test_probabilities(result: &PreparationResult, pair: (QubitRole, QubitRole)) -> Result<[f64; 2]> {
    let qs = [result.state.position(pair.0)?, result.state.position(pair.1)?];
    let mut probe = result.state.clone();
    let p_anti = {
        let m = probe.measure_subspace(&qs, &singlet_projector(), Policy::Force(0));
        match m {
            Ok(m) => m.probability,
            Err(Error::ZeroProbability { .. }) => 0.0,
            Err(e) => return Err(e),
        }
    };
    Ok([1.0 - p_anti, p_anti])
}

/// SWAP-test fusion of a memory pair `(q1, q2)` where `q1` carries the right
/// bond index of the chain segment to its left. The antisymmetric outcome
/// acts like a singlet Bell outcome. The symmetric outcome turns the pair
/// into a new spin-1 site placed after the last site of the left segment
/// (after site `N - 1` when fusing the two edge memories).
pub fn swap_test_fusion(
    mut result: PreparationResult,
    pair: (QubitRole, QubitRole),
    policy: Policy<'_>,
) -> Result<(PreparationResult, Exchange)> {
    if result.correction != Correction::None || !result.defects.is_empty() {
        return Err(Error::InvalidArgument("SWAP-test fusion expects a defect-free preparation".into()));
    }
    let (q1, q2) = pair;
    let (p1, p2) = (result.state.position(q1)?, result.state.position(q2)?);
    result.circuit.push(Instruction::SwapTest(result.circuit.qubit(q1)?, result.circuit.qubit(q2)?));
    let m = result.state.measure_subspace(&[p1, p2], &singlet_projector(), policy)?;
    result.probability *= m.probability;
    let edge = Some(q1) == result.memories.right && Some(q2) == result.memories.left;
    if m.outcome == 0 {
        result.state = result.state.contract_out(&[p1, p2], &BellState::PsiMinus.ket())?.0;
        result.memories.consumed.extend([q1, q2]);
        if edge {
            result.boundary = Some(Boundary::Subspace(Exchange::Antisymmetric));
        }
        result.method = Method::SwapFusion;
        return Ok((result, Exchange::Antisymmetric));
    }
    let after = match q1 {
        _ if edge => result.n_sites - 1,
        QubitRole::Memory { block, .. } => {
            // Last site of the left segment: the largest site index whose
            // memory block is at most `block`.
            fusion_blocks(result.n_sites).get(block).and_then(|b| b.last().copied()).ok_or_else(|| Error::MissingRole(q1.to_string()))?
        }
        _ => return Err(Error::InvalidArgument("SWAP-test fusion acts on memory qubits".into())),
    };
    let new_site = after + 1;
    // Shift later sites, then adopt the pair as the new site.
    let mut labels = result.state.labels().to_vec();
    let mut cl = result.circuit.labels.clone();
    for set in [&mut labels, &mut cl] {
        for role in set.iter_mut() {
            if let QubitRole::Site { site, slot } = *role {
                if site >= new_site {
                    *role = QubitRole::Site { site: site + 1, slot };
                }
            }
        }
    }
    let s0 = QubitRole::Site { site: new_site, slot: 0 };
    let s1 = QubitRole::Site { site: new_site, slot: 1 };
    labels[p1] = s0;
    labels[p2] = s1;
    let (c1, c2) = (result.circuit.qubit(q1)?, result.circuit.qubit(q2)?);
    cl[c1] = s0;
    cl[c2] = s1;
    result.state = StateVector::from_amplitudes(result.state.amplitudes().to_vec(), labels)?;
    result.circuit.labels = cl;
    result.n_sites += 1;
    let w = site_operator(&spin1_pi_rotation(Pauli::Y), &result.chain.encoding) * triplet_to_spin1();
    result.gate("TRIPLET_UY", &w, &[s0, s1])?;
    result.memories.consumed.extend([q1, q2]);
    if edge {
        result.memories.left = None;
        result.memories.right = None;
        result.boundary = Some(Boundary::Subspace(Exchange::Symmetric));
    }
    result.method = Method::SwapFusion;
    Ok((result, Exchange::Symmetric))
}

/// One trial of the probabilistic construction: singlets on every bond, then
/// a triplet/singlet measurement on each site's pair of virtual qubits.
/// Returns `None` when any site projects onto the singlet.
pub fn prepare_projector_baseline(n: usize, rng: &mut dyn RngCore) -> Result<Option<PreparationResult>> {
    projector_trial(n, Some(rng))
}

/// The post-selected branch of the projector construction (every site in
/// its triplet subspace).
pub fn projector_success_state(n: usize) -> Result<PreparationResult> {
    projector_trial(n, None).map(|r| r.expect("forced triplet outcomes always succeed"))
}

fn projector_trial(n: usize, mut rng: Option<&mut dyn RngCore>) -> Result<Option<PreparationResult>> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let chain = aklt_tensors();
    let enc = chain.encoding.clone();
    let labels = register(&enc, n, 1);
    let mut circuit = Circuit::new(labels.clone());
    let mut state = StateVector::zeros(labels)?;
    let (ml, mr) = (memory(0, Side::Left), memory(0, Side::Right));
    // Bond pairs: (memL, v_0.0), (v_k.1, v_{k+1}.0), (v_{N-1}.1, memR).
    let mut ends = vec![ml];
    for k in 0..n {
        ends.push(QubitRole::Site { site: k, slot: 0 });
        ends.push(QubitRole::Site { site: k, slot: 1 });
    }
    ends.push(mr);
    let init = MemoryInit::default();
    for pair in ends.chunks(2) {
        let (a, b) = (circuit.qubit(pair[0])?, circuit.qubit(pair[1])?);
        for g in memory_init_gates(&init, a, b)? {
            state.apply_gate(&g)?;
            circuit.gate(g);
        }
    }
    let proj = singlet_projector();
    let mut probability = 1.0;
    for k in 0..n {
        let roles = site_targets(&enc, k);
        let qs = [circuit.qubit(roles[0])?, circuit.qubit(roles[1])?];
        circuit.push(Instruction::SwapTest(qs[0], qs[1]));
        let pol = match rng.as_deref_mut() {
            Some(g) => Policy::Sample(g),
            None => Policy::Force(1),
        };
        let m = state.measure_subspace(&qs, &proj, pol)?;
        probability *= m.probability;
        if m.outcome == 0 {
            return Ok(None);
        }
    }
    let w = triplet_to_spin1();
    let mut result = PreparationResult {
        state,
        n_sites: n,
        chain,
        method: Method::Projector,
        mode: None,
        lambda: init.lambda,
        memories: MemoryIndices { left: Some(ml), right: Some(mr), consumed: vec![] },
        defects: DefectRecord::default(),
        circuit,
        correction: Correction::Unitary,
        boundary: None,
        probability,
    };
    for k in 0..n {
        result.gate("TRIPLET", &w, &site_targets(&enc, k))?;
    }
    result.gate("Y", &Pauli::Y.matrix(), &[ml])?;
    result.gate("Y", &Pauli::Y.matrix(), &[mr])?;
    Ok(Some(result))
}

/// Reference amplitudes for the prepared sites given the enforced boundary.
pub fn reference_sites(result: &PreparationResult) -> Result<SiteState> {
    let chain = &result.chain;
    let y = Pauli::Y.matrix();
    match result.boundary {
        Some(Boundary::Z { left, right }) => {
            let e = |i: usize| -> Vec<C64> { (0..2).map(|k| r_f(k == i)).collect() };
            let el = e(left);
            let er = nalgebra::DVector::from_vec(e(right));
            match (result.method, result.mode) {
                (Method::Sequential, Some(MemoryMode::Dual)) => {
                    let c = result.n_sites.div_ceil(2);
                    let mid = &result.lambda * &y;
                    let rv: Vec<C64> = (&y * er).iter().copied().collect();
                    contract_open_inserted(chain, &el, &rv, result.n_sites, Some((c, &mid)))
                }
                _ => {
                    let rv: Vec<C64> = (&result.lambda * er).iter().copied().collect();
                    contract_open_inserted(chain, &el, &rv, result.n_sites, None)
                }
            }
        }
        Some(Boundary::Subspace(_)) => contract_periodic_sites(chain, result.n_sites),
        None => Err(Error::InvalidArgument("boundary not enforced".into())),
    }
}

/// Fidelity of the site register with the reference chain. Requires the edge
/// memories to have been removed.
pub fn fidelity_to_reference(result: &PreparationResult) -> Result<f64> {
    let reference = reference_sites(result)?.to_statevector(&result.chain.encoding)?;
    let ours = result.state.amplitudes_in_order(&result.site_roles())?;
    crate::linalg::fidelity(&ours, reference.amplitudes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fidelity, unitarity_error};
    use crate::mps::contract_open_sites;

    #[test]
    fn site_unitary_columns() {
        let ch = aklt_tensors();
        let u = build_site_unitary(&ch).unwrap();
        assert!(unitarity_error(&u) < 1e-12);
        // U |1>_mem |0bar> = sqrt(2/3) |0>|+> + sqrt(1/3) |1>|0bar>.
        let col = u.column(1);
        let plus = 2 * 2; // code(+) = 2
        assert!((col[plus] - r((2.0f64 / 3.0).sqrt())).norm() < 1e-14);
        assert!((col[1] - r((1.0f64 / 3.0).sqrt())).norm() < 1e-14);
        let rest: f64 = col.iter().enumerate().filter(|(i, _)| *i != plus && *i != 1).map(|(_, z)| z.norm_sqr()).sum();
        assert!(rest < 1e-28);
        for j in 0..2 {
            for s_code in [6, 7] {
                assert_eq!(u[(s_code, j)], r(0.0));
            }
        }
    }

    #[test]
    fn completion_is_deterministic() {
        let ch = aklt_tensors();
        let a = build_site_unitary(&ch).unwrap();
        let b = build_site_unitary(&ch).unwrap();
        assert_eq!(a, b);
        for j in 2..8 {
            let lead = a.column(j).iter().find(|z| z.norm() > 1e-12).copied().unwrap();
            assert!(lead.im.abs() < 1e-14 && lead.re > 0.0);
        }
    }

    #[test]
    fn triplet_map_is_unitary() {
        assert!(unitarity_error(&triplet_to_spin1()) < 1e-14);
    }

    fn pin(res: PreparationResult, l: usize, r: usize) -> PreparationResult {
        enforce_boundary(res, BoundaryTarget::Outcomes(l, r)).unwrap()
    }

    #[test]
    fn sequential_matches_contraction() {
        for n in 1..=5 {
            for mode in [MemoryMode::Single, MemoryMode::Dual] {
                let res = prepare_sequential(n, mode, &MemoryInit::default()).unwrap();
                assert_eq!(res.num_qubits(), 2 * n + 2);
                for (l, rr) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let probs = boundary_probabilities(&res).unwrap();
                    if probs[l][rr] < 1e-12 {
                        continue;
                    }
                    let f = fidelity_to_reference(&pin(res.clone(), l, rr)).unwrap();
                    assert!(f > 1.0 - 1e-10, "n={n} {mode:?} ({l},{rr}): {f}");
                }
            }
        }
    }

    #[test]
    fn single_and_dual_agree() {
        for n in 1..=5 {
            let a = pin(prepare_sequential(n, MemoryMode::Single, &MemoryInit::default()).unwrap(), 0, 1);
            let b = pin(prepare_sequential(n, MemoryMode::Dual, &MemoryInit::default()).unwrap(), 0, 1);
            let roles = a.site_roles();
            let f = fidelity(&a.state.amplitudes_in_order(&roles).unwrap(), &b.state.amplitudes_in_order(&roles).unwrap()).unwrap();
            assert!(f > 1.0 - 1e-10);
        }
    }

    #[test]
    fn general_memory_matrix() {
        let lam = Mat::from_row_slice(2, 2, &[r(0.5), C64::new(0.0, 0.5), r(-0.5), r(0.5)]);
        let init = MemoryInit::new(lam).unwrap();
        for mode in [MemoryMode::Single, MemoryMode::Dual] {
            let res = prepare_sequential(4, mode, &init).unwrap();
            let f = fidelity_to_reference(&pin(res, 1, 0)).unwrap();
            assert!(f > 1.0 - 1e-10, "{mode:?} {f}");
        }
    }

    #[test]
    fn dual_singlet_projection_is_periodic() {
        let res = prepare_sequential(2, MemoryMode::Dual, &MemoryInit::default()).unwrap();
        let res = enforce_boundary(res, BoundaryTarget::Subspace(Exchange::Antisymmetric)).unwrap();
        assert!(fidelity_to_reference(&res).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn dual_mode_rejects_asymmetric_tensors() {
        let mut ch = aklt_tensors();
        ch.tensors[1][(0, 0)] += r(1e-3);
        let err = prepare_sequential_with(&ch, 3, MemoryMode::Dual, &MemoryInit::default());
        assert!(matches!(err, Err(Error::SymmetryViolated(_))));
    }

    #[test]
    fn fusion_counts_and_depth() {
        let mut depths = Vec::new();
        for n in 2..=8 {
            let res = prepare_fusion(n, &OutcomePolicy::seeded(n as u64)).unwrap();
            assert_eq!(res.num_qubits(), 3 * n + n % 2);
            assert_eq!(res.defects.outcomes.len(), (n - 1) / 2);
            assert_eq!(fusion_blocks(n).len(), n.div_ceil(2));
            depths.push(res.depth());
        }
        assert!(depths.iter().all(|&d| d == depths[0]), "{depths:?}");
        let seq: Vec<usize> =
            (1..=8).map(|n| prepare_sequential(n, MemoryMode::Single, &MemoryInit::default()).unwrap().depth()).collect();
        assert!(seq.windows(2).all(|w| w[1] > w[0]), "{seq:?}");
    }

    #[test]
    fn fusion_defect_table() {
        let res = prepare_fusion(4, &OutcomePolicy::Forced(vec![BellState::PsiMinus])).unwrap();
        assert!(res.defects.is_empty());
        let f = fidelity_to_reference(&pin(res, 0, 1)).unwrap();
        assert!(f > 1.0 - 1e-10);
        let res = prepare_fusion(4, &OutcomePolicy::Forced(vec![BellState::PhiPlus])).unwrap();
        assert_eq!(res.defects.defects, vec![(1, Pauli::Y)]);
        assert!(matches!(prepare_fusion(4, &OutcomePolicy::Forced(vec![])), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fusion_with_unitary_correction_is_deterministic() {
        for n in 2..=6 {
            let f = (n - 1) / 2;
            for combo in 0..4usize.pow(f as u32) {
                let outs: Vec<BellState> = (0..f).map(|k| BellState::ALL[(combo >> (2 * k)) & 3]).collect();
                let res = prepare_fusion(n, &OutcomePolicy::Forced(outs.clone())).unwrap();
                let res = correct_defects(res, CorrectionMode::Unitary).unwrap();
                let probs = boundary_probabilities(&res).unwrap();
                for (l, rr) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    if probs[l][rr] < 1e-12 {
                        continue;
                    }
                    let fid = fidelity_to_reference(&pin(res.clone(), l, rr)).unwrap();
                    assert!(fid > 1.0 - 1e-10, "n={n} {outs:?} ({l},{rr}) {fid}");
                }
            }
        }
    }

    #[test]
    fn uncorrected_defect_differs() {
        let res = prepare_fusion(4, &OutcomePolicy::Forced(vec![BellState::PhiPlus])).unwrap();
        let f = fidelity_to_reference(&pin(res, 0, 1)).unwrap();
        assert!(f < 0.99);
    }

    #[test]
    fn frame_relabelling_matches_unitary_distribution() {
        // Exact Z-basis distributions: frame-relabelled uncorrected state vs
        // unitary-corrected state.
        let n = 6;
        for combo in 0..16usize {
            let outs: Vec<BellState> = (0..2).map(|k| BellState::ALL[(combo >> (2 * k)) & 3]).collect();
            let raw = prepare_fusion(n, &OutcomePolicy::Forced(outs.clone())).unwrap();
            let uni = correct_defects(raw.clone(), CorrectionMode::Unitary).unwrap();
            let fr = correct_defects(raw, CorrectionMode::Frame).unwrap();
            let frame = fr.frame().unwrap().clone();
            let mut order = fr.site_roles();
            order.push(fr.memories.left.unwrap());
            order.push(fr.memories.right.unwrap());
            let a = uni.state.amplitudes_in_order(&order).unwrap();
            let b = fr.state.amplitudes_in_order(&order).unwrap();
            let mut relabelled = vec![0.0; b.len()];
            for (idx, z) in b.iter().enumerate() {
                let mut out = 0;
                for k in 0..n {
                    out |= frame.site_code(k, (idx >> (2 * k)) & 3) << (2 * k);
                }
                out |= frame.memory_bit((idx >> (2 * n)) & 1) << (2 * n);
                out |= idx & (1 << (2 * n + 1));
                relabelled[out] += z.norm_sqr();
            }
            for (p, z) in relabelled.iter().zip(&a) {
                assert!((p - z.norm_sqr()).abs() < 1e-12, "{outs:?}");
            }
        }
    }

    #[test]
    fn boundary_outcomes() {
        let res = prepare_sequential(3, MemoryMode::Single, &MemoryInit::default()).unwrap();
        let p = boundary_probabilities(&res).unwrap();
        let total: f64 = p.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(p.iter().flatten().all(|&x| x > 0.0));
        let large = prepare_sequential(10, MemoryMode::Single, &MemoryInit::default()).unwrap();
        for p in edge_bell_probabilities(&large).unwrap() {
            assert!((p - 0.25).abs() < 1e-3);
        }
    }

    #[test]
    fn swap_test_fusion_outcomes() {
        // Antisymmetric outcome on block memories equals the singlet Bell fusion.
        let blocks = prepare_blocks(4).unwrap();
        let pair = (memory(0, Side::Right), memory(1, Side::Left));
        let (anti, ex) = swap_test_fusion(blocks.clone(), pair, Policy::Force(0)).unwrap();
        assert_eq!(ex, Exchange::Antisymmetric);
        let bell = prepare_fusion(4, &OutcomePolicy::Forced(vec![BellState::PsiMinus])).unwrap();
        let mut order = anti.site_roles();
        order.extend([memory(0, Side::Left), memory(1, Side::Right)]);
        let f = fidelity(&anti.state.amplitudes_in_order(&order).unwrap(), &bell.state.amplitudes_in_order(&order).unwrap()).unwrap();
        assert!(f > 1.0 - 1e-10);

        // Symmetric outcome absorbs the pair as a fifth site.
        let (sym, ex) = swap_test_fusion(blocks, pair, Policy::Force(1)).unwrap();
        assert_eq!(ex, Exchange::Symmetric);
        assert_eq!(sym.n_sites, 5);
        for (l, rr) in [(0, 1), (1, 0)] {
            let f = fidelity_to_reference(&pin(sym.clone(), l, rr)).unwrap();
            assert!(f > 1.0 - 1e-10, "{f}");
        }
    }

    #[test]
    fn edge_swap_test_gives_periodic_chains() {
        let res = prepare_sequential(3, MemoryMode::Single, &MemoryInit::default()).unwrap();
        let pair = (memory(0, Side::Right), memory(0, Side::Left));
        let (anti, _) = swap_test_fusion(res.clone(), pair, Policy::Force(0)).unwrap();
        assert!(fidelity_to_reference(&anti).unwrap() > 1.0 - 1e-10);
        let (sym, _) = swap_test_fusion(res.clone(), pair, Policy::Force(1)).unwrap();
        assert_eq!(sym.n_sites, 4);
        assert!(fidelity_to_reference(&sym).unwrap() > 1.0 - 1e-10);
        let p = swap_test_probabilities(&res, pair).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projector_baseline_success_state() {
        let mut rng = stream_rng(7, 0);
        let mut found = 0;
        for _ in 0..50 {
            if let Some(res) = prepare_projector_baseline(3, &mut rng).unwrap() {
                assert!((res.probability - 0.75f64.powi(3)).abs() < 1e-12);
                let p = boundary_probabilities(&res).unwrap();
                for (l, rr) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    if p[l][rr] > 1e-12 {
                        let f = fidelity_to_reference(&pin(res.clone(), l, rr)).unwrap();
                        assert!(f > 1.0 - 1e-10, "{f}");
                    }
                }
                found += 1;
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn reference_is_aklt_open_chain() {
        let res = pin(prepare_sequential(3, MemoryMode::Single, &MemoryInit::default()).unwrap(), 0, 0);
        let a = reference_sites(&res).unwrap();
        let s = singlet_matrix();
        let rv: Vec<C64> = s.column(0).iter().copied().collect();
        let b = contract_open_sites(&res.chain, &[r(1.0), r(0.0)], &rv, 3).unwrap();
        assert_eq!(a, b);
    }
}
