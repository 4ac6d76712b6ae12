//! GHZ and 1D cluster chains built with the same fuse-and-correct scheme.

use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fidelity, r, Mat, Pauli};
use crate::mps::{check_symmetry_with, MpsChain, SiteEncoding};
use crate::protocol::{
    build_site_unitary, memory, prepare_block, register, Correction, DefectRecord, MemoryIndices, MemoryInit, MemoryMode,
    Method, OutcomePolicy, PreparationResult,
};
use crate::sim::{stream_rng, Circuit, Gate, Instruction, Policy, QubitRole, Side, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Ghz,
    Cluster,
}

impl VariantKind {
    pub fn tag(self) -> &'static str {
        match self {
            VariantKind::Ghz => "ghz",
            VariantKind::Cluster => "cluster",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ghz" => Ok(VariantKind::Ghz),
            "cluster" => Ok(VariantKind::Cluster),
            other => Err(Error::InvalidArgument(format!("unknown variant '{other}'"))),
        }
    }
}

fn qubit_chain(tensors: Vec<Mat>, site_symmetries: Option<Vec<Mat>>) -> MpsChain {
    MpsChain {
        phys_dim: 2,
        bond_dim: 2,
        tensors,
        labels: vec!["0".into(), "1".into()],
        spin_z: vec![1.0, -1.0],
        left: None,
        right: None,
        singlet: None,
        projectors: None,
        site_symmetries,
        canonical: true,
        encoding: SiteEncoding::qubit(),
    }
}

/// GHZ: `<i|A^m|j> = delta_im delta_jm`. Cluster: `A^0 = |+><0|`,
/// `A^1 = |-><1|`.
pub fn variant_tensors(kind: VariantKind) -> MpsChain {
    let (o, z) = (r(1.0), r(0.0));
    let s = r(std::f64::consts::FRAC_1_SQRT_2);
    match kind {
        VariantKind::Ghz => {
            let x = Pauli::X.matrix();
            let id = Mat::identity(2, 2);
            qubit_chain(
                vec![Mat::from_row_slice(2, 2, &[o, z, z, z]), Mat::from_row_slice(2, 2, &[z, z, z, o])],
                Some(vec![id.clone(), x.clone(), x, id]),
            )
        }
        VariantKind::Cluster => {
            qubit_chain(vec![Mat::from_row_slice(2, 2, &[s, z, s, z]), Mat::from_row_slice(2, 2, &[z, s, z, -s])], None)
        }
    }
}

/// Two-site tensors `A^{n0} A^{n1}` indexed `n = n0 + 2 n1`.
pub fn pair_tensors(chain: &MpsChain) -> Vec<Mat> {
    (0..4).map(|n| &chain.tensors[n & 1] * &chain.tensors[n >> 1]).collect()
}

/// Solves `sum_n' U_{n n'} T^{n'} = B T^n B` for the pair tensors of the
/// cluster chain. The four pair tensors span all 2x2 matrices, so `U` is
/// unique.
fn derive_pair_symmetry(b: Pauli) -> Result<Mat> {
    let pairs = pair_tensors(&variant_tensors(VariantKind::Cluster));
    let vec4 = |m: &Mat| nalgebra::DVector::from_iterator(4, (0..4).map(|k| m[(k & 1, k >> 1)]));
    let t = Mat::from_columns(&pairs.iter().map(vec4).collect::<Vec<_>>());
    let t_inv = t.try_inverse().ok_or_else(|| Error::SymmetryViolated("pair tensors are linearly dependent".into()))?;
    let p = b.matrix();
    let mut u = Mat::zeros(4, 4);
    for (n, a) in pairs.iter().enumerate() {
        let x = &t_inv * vec4(&(&p * a * &p));
        for k in 0..4 {
            u[(n, k)] = x[k];
        }
    }
    check_symmetry_with(&pairs, &u, &p, &p)?;
    Ok(u)
}

/// Pair representation `U_B` of the cluster symmetry, derived once per `B`.
pub fn cluster_pair_symmetry(b: Pauli) -> Mat {
    static CACHE: OnceLock<Vec<Mat>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        Pauli::ALL.iter().map(|&p| derive_pair_symmetry(p).expect("cluster pair symmetry holds")).collect()
    });
    all[Pauli::ALL.iter().position(|&p| p == b).expect("Pauli in ALL")].clone()
}

/// Block sizes and whether the fused memories rejoin the chain as sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantLayout {
    pub blocks: Vec<usize>,
    pub recycle: bool,
}

impl VariantLayout {
    pub fn n_sites(&self) -> usize {
        let f = self.blocks.len().saturating_sub(1);
        self.blocks.iter().sum::<usize>() + if self.recycle { 2 * f } else { 0 }
    }

    /// Pairs for the cluster and non-recycled GHZ; for recycled GHZ the
    /// largest number of one- or two-site blocks that fills `n` sites.
    pub fn default_for(kind: VariantKind, n: usize) -> Self {
        match kind {
            VariantKind::Ghz => {
                let k = n.div_ceil(3).max(1);
                let total = n - 2 * (k - 1);
                let blocks = (0..k).map(|b| total / k + usize::from(b < total % k)).collect();
                VariantLayout { blocks, recycle: true }
            }
            VariantKind::Cluster => VariantLayout { blocks: pair_blocks(n), recycle: false },
        }
    }
}

fn pair_blocks(n: usize) -> Vec<usize> {
    (0..n).step_by(2).map(|s| (n - s).min(2)).collect()
}

fn fusion_policy(policy: &OutcomePolicy, fusions: usize) -> Result<Option<rand_chacha::ChaCha8Rng>> {
    match policy {
        OutcomePolicy::Sample { seed, stream } => Ok(Some(stream_rng(*seed, *stream))),
        OutcomePolicy::Forced(list) if list.len() == fusions => Ok(None),
        OutcomePolicy::Forced(list) => {
            Err(Error::InvalidArgument(format!("expected {fusions} forced outcomes, got {}", list.len())))
        }
    }
}

fn policy_for<'a>(rng: &'a mut Option<rand_chacha::ChaCha8Rng>, policy: &OutcomePolicy, k: usize) -> Policy<'a> {
    match (rng, policy) {
        (Some(g), _) => Policy::Sample(g),
        (None, OutcomePolicy::Forced(list)) => Policy::Force(list[k].index()),
        (None, OutcomePolicy::Sample { .. }) => unreachable!("sampling policies carry an rng"),
    }
}

fn site(s: usize) -> QubitRole {
    QubitRole::Site { site: s, slot: 0 }
}

/// Applies `g` (local targets into `roles`) to the state and the circuit.
fn apply(state: &mut StateVector, circuit: &mut Circuit, g: &Gate, roles: &[QubitRole]) -> Result<()> {
    let full = roles.iter().map(|&q| circuit.qubit(q)).collect::<Result<Vec<_>>>()?;
    let local = roles.iter().map(|&q| state.position(q)).collect::<Result<Vec<_>>>()?;
    circuit.gate(g.on(full)?);
    state.apply_gate(&g.on(local)?)
}

/// Fuses independently prepared blocks with Bell measurements; defects are
/// recorded, not corrected.
pub fn prepare_fusion_variant_with(kind: VariantKind, layout: &VariantLayout, policy: &OutcomePolicy) -> Result<PreparationResult> {
    if layout.blocks.is_empty() || layout.blocks.contains(&0) {
        return Err(Error::InvalidArgument("blocks must be non-empty".into()));
    }
    match kind {
        VariantKind::Ghz => fuse_ghz(layout, policy),
        VariantKind::Cluster if layout.recycle => Err(Error::InvalidArgument("recycling applies to GHZ only".into())),
        VariantKind::Cluster => fuse_cluster(&layout.blocks, policy),
    }
}

/// Fusion with the default layout followed by defect correction.
pub fn prepare_fusion_variant(kind: VariantKind, n: usize, policy: &OutcomePolicy) -> Result<PreparationResult> {
    if n < 2 {
        return Err(Error::InvalidArgument("N must be at least 2".into()));
    }
    correct_variant(prepare_fusion_variant_with(kind, &VariantLayout::default_for(kind, n), policy)?, kind)
}

fn fuse_cluster(blocks: &[usize], policy: &OutcomePolicy) -> Result<PreparationResult> {
    let chain = variant_tensors(VariantKind::Cluster);
    let u = build_site_unitary(&chain)?;
    let n: usize = blocks.iter().sum();
    let mut ranges = Vec::new();
    let mut start = 0;
    for &b in blocks {
        ranges.push((start..start + b).collect::<Vec<_>>());
        start += b;
    }
    let fusions = blocks.len() - 1;
    let mut rng = fusion_policy(policy, fusions)?;
    let mut circuit = Circuit::new(register(&chain.encoding, n, blocks.len()));
    let init = MemoryInit::phi_plus();
    let mut defects = DefectRecord::default();
    let mut consumed = Vec::new();
    let mut probability = 1.0;
    let mut state = prepare_block(&chain, &u, &ranges[0], 0, MemoryMode::Single, &init, &mut circuit)?;
    for b in 1..ranges.len() {
        let bond = *ranges[b - 1].last().expect("non-empty block");
        if (bond + 1) % 2 != 0 {
            return Err(Error::SymmetryViolated(format!("cluster fusion after site {bond} splits a site pair")));
        }
        let next = prepare_block(&chain, &u, &ranges[b], b, MemoryMode::Single, &init, &mut circuit)?;
        state = state.tensor(&next)?;
        let (q1, q2) = (memory(b - 1, Side::Right), memory(b, Side::Left));
        circuit.push(Instruction::BellMeasure(circuit.qubit(q1)?, circuit.qubit(q2)?));
        let (p1, p2) = (state.position(q1)?, state.position(q2)?);
        let out = state.bell_measure(p1, p2, policy_for(&mut rng, policy, b - 1))?;
        probability *= out.probability;
        state = state.contract_out(&[p1, p2], &out.label.ket())?.0;
        record(&mut defects, bond, out.label);
        consumed.extend([q1, q2]);
    }
    Ok(PreparationResult {
        state,
        n_sites: n,
        chain,
        method: Method::Fusion,
        mode: Some(MemoryMode::Single),
        lambda: init.lambda,
        memories: MemoryIndices {
            left: Some(memory(0, Side::Left)),
            right: Some(memory(blocks.len() - 1, Side::Right)),
            consumed,
        },
        defects,
        circuit,
        correction: Correction::None,
        boundary: None,
        probability,
    })
}

/// Bell outcomes insert their own Pauli here: the blocks carry a `Phi+`
/// bond, not a singlet.
fn record(defects: &mut DefectRecord, bond: usize, label: crate::sim::BellState) {
    defects.outcomes.push((bond, label));
    if label.inserted() != Pauli::I {
        defects.defects.push((bond, label.inserted()));
    }
}

fn fuse_ghz(layout: &VariantLayout, policy: &OutcomePolicy) -> Result<PreparationResult> {
    let chain = variant_tensors(VariantKind::Ghz);
    let u = build_site_unitary(&chain)?;
    let k = layout.blocks.len();
    let n = layout.n_sites();
    // Site numbers per block, leaving two slots after each fused block when
    // the measured memories come back as sites.
    let mut ranges = Vec::new();
    let mut next_site = 0;
    for (b, &len) in layout.blocks.iter().enumerate() {
        ranges.push((next_site..next_site + len).collect::<Vec<_>>());
        next_site += len + if layout.recycle && b + 1 < k { 2 } else { 0 };
    }
    let mut labels: Vec<QubitRole> = ranges.iter().flatten().map(|&s| site(s)).collect();
    for b in 0..k.saturating_sub(1) {
        labels.extend([memory(b, Side::Right), memory(b + 1, Side::Left)]);
    }
    let mut circuit = Circuit::new(labels);
    let block_roles = |b: usize| {
        let mut roles = Vec::new();
        if b > 0 {
            roles.push(memory(b, Side::Left));
        }
        roles.extend(ranges[b].iter().map(|&s| site(s)));
        if b + 1 < k {
            roles.push(memory(b, Side::Right));
        }
        roles
    };
    let prepare = |b: usize, circuit: &mut Circuit| -> Result<StateVector> {
        let roles = block_roles(b);
        let mut st = StateVector::zeros(roles.clone())?;
        apply(&mut st, circuit, &Gate::h(0), &roles[..1])?;
        let ug = Gate::new("U", u.clone(), vec![0, 1])?;
        for &q in &roles[1..] {
            apply(&mut st, circuit, &ug, &[roles[0], q])?;
        }
        Ok(st)
    };

    let mut rng = fusion_policy(policy, k - 1)?;
    let mut defects = DefectRecord::default();
    let mut consumed = Vec::new();
    let mut probability = 1.0;
    let mut state = prepare(0, &mut circuit)?;
    for b in 1..k {
        let next = prepare(b, &mut circuit)?;
        state = state.tensor(&next)?;
        let (q1, q2) = (memory(b - 1, Side::Right), memory(b, Side::Left));
        let (c1, c2) = (circuit.qubit(q1)?, circuit.qubit(q2)?);
        circuit.push(Instruction::BellMeasure(c1, c2));
        let (p1, p2) = (state.position(q1)?, state.position(q2)?);
        let out = state.bell_measure(p1, p2, policy_for(&mut rng, policy, b - 1))?;
        probability *= out.probability;
        let last = *ranges[b - 1].last().expect("non-empty block");
        if layout.recycle {
            // Readout basis change, then an outcome-dependent reset to |00>.
            state.apply_gate(&Gate::cnot(p1, p2))?;
            state.apply_gate(&Gate::h(p1))?;
            let (b1, b2) = out.label.readout_bits();
            for (bit, q, c) in [(b1, p1, c1), (b2, p2, c2)] {
                let p = if bit { Pauli::X } else { Pauli::I };
                state.apply_pauli(p, q)?;
                circuit.gate(Gate::new("RESET", p.matrix(), vec![c])?);
            }
            let (s1, s2) = (site(last + 1), site(last + 2));
            state.relabel(p1, s1)?;
            state.relabel(p2, s2)?;
            circuit.labels[c1] = s1;
            circuit.labels[c2] = s2;
            let ug = Gate::new("U", u.clone(), vec![0, 1])?;
            for s in [s1, s2] {
                apply(&mut state, &mut circuit, &ug, &[site(last), s])?;
            }
            record(&mut defects, last + 2, out.label);
        } else {
            state = state.contract_out(&[p1, p2], &out.label.ket())?.0;
            record(&mut defects, last, out.label);
            consumed.extend([q1, q2]);
        }
    }
    Ok(PreparationResult {
        state,
        n_sites: n,
        chain,
        method: Method::Fusion,
        mode: None,
        lambda: MemoryInit::phi_plus().lambda,
        memories: MemoryIndices { left: None, right: None, consumed },
        defects,
        circuit,
        correction: Correction::None,
        boundary: None,
        probability,
    })
}

/// One layer of corrections, touching only qubits at or left of each defect.
/// GHZ: `X` on every site up to the defect and `Z` on its left neighbour.
/// Cluster: `U_B^dagger` on each site pair left of the defect and `B` on the
/// left memory.
pub fn correct_variant(mut result: PreparationResult, kind: VariantKind) -> Result<PreparationResult> {
    if result.correction != Correction::None {
        return Err(Error::InvalidArgument("defects already corrected".into()));
    }
    let defects = result.defects.defects.clone();
    match kind {
        VariantKind::Ghz => {
            let mut ops = vec![Pauli::I; result.n_sites];
            for &(bond, b) in &defects {
                let (x, z) = b.bits();
                if x {
                    for p in &mut ops[..=bond] {
                        *p = p.mul(Pauli::X);
                    }
                }
                if z {
                    ops[bond] = ops[bond].mul(Pauli::Z);
                }
            }
            for (s, p) in ops.into_iter().enumerate() {
                if p != Pauli::I {
                    result.gate(p.label(), &p.matrix(), &[site(s)])?;
                }
            }
        }
        VariantKind::Cluster => {
            let pairs = result.n_sites / 2;
            let mut ops = vec![Mat::identity(4, 4); pairs];
            let mut mem = Pauli::I;
            for &(bond, b) in defects.iter().rev() {
                let u = cluster_pair_symmetry(b).adjoint();
                for op in &mut ops[..bond.div_ceil(2)] {
                    *op = &u * &*op;
                }
                mem = mem.mul(b);
            }
            for (p, op) in ops.iter().enumerate() {
                if (op - Mat::identity(4, 4)).norm() > 1e-12 {
                    result.gate("UB", op, &[site(2 * p), site(2 * p + 1)])?;
                }
            }
            if mem != Pauli::I {
                let left = result.memories.left.ok_or_else(|| Error::MissingRole("left edge memory".into()))?;
                result.gate(mem.label(), &mem.matrix(), &[left])?;
            }
        }
    }
    result.correction = Correction::Unitary;
    Ok(result)
}

/// `(|0...0> + |1...1>)/sqrt2` on `n` sites.
pub fn ghz_oracle(n: usize) -> Result<StateVector> {
    let mut amps = vec![r(0.0); 1 << n];
    amps[0] = r(1.0);
    amps[(1 << n) - 1] = r(1.0);
    StateVector::normalized(amps, (0..n).map(site).collect())
}

/// Cluster chain over `[L, s_0, ..., s_{n-1}]` built from `|+>` states and
/// nearest-neighbour CZ, with the right memory `R` a CNOT copy of the last
/// site.
pub fn cluster_oracle(n: usize, right_block: usize) -> Result<StateVector> {
    let mut labels = vec![memory(0, Side::Left)];
    labels.extend((0..n).map(site));
    labels.push(memory(right_block, Side::Right));
    let mut st = StateVector::zeros(labels)?;
    for q in 0..=n {
        st.apply_gate(&Gate::h(q))?;
    }
    for q in 0..n {
        st.apply_gate(&Gate::cz(q, q + 1))?;
    }
    st.apply_gate(&Gate::cnot(n, n + 1))?;
    Ok(st)
}

/// Fidelity of a corrected variant state with its oracle.
pub fn variant_fidelity(result: &PreparationResult, kind: VariantKind) -> Result<f64> {
    let oracle = match kind {
        VariantKind::Ghz => ghz_oracle(result.n_sites)?,
        VariantKind::Cluster => {
            let right = result.memories.right.ok_or_else(|| Error::MissingRole("right edge memory".into()))?;
            let QubitRole::Memory { block, .. } = right else {
                return Err(Error::MissingRole("right edge memory".into()));
            };
            cluster_oracle(result.n_sites, block)?
        }
    };
    let amps: Vec<C64> = result.state.amplitudes_in_order(oracle.labels())?;
    fidelity(&amps, oracle.amplitudes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::{check_symmetry, contract_open};
    use crate::observables::fusion_combinations;

    #[test]
    fn ghz_contraction() {
        let ch = variant_tensors(VariantKind::Ghz);
        let st = contract_open(&ch, &[r(1.0), r(1.0)], &[r(1.0), r(1.0)], 3).unwrap();
        let f = fidelity(st.amplitudes(), ghz_oracle(3).unwrap().amplitudes()).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
        for b in Pauli::ALL {
            check_symmetry(&ch, b).unwrap();
        }
    }

    #[test]
    fn cluster_contraction_matches_cz_construction() {
        let ch = variant_tensors(VariantKind::Cluster);
        let st = contract_open(&ch, &[r(1.0), r(0.0)], &[r(1.0), r(1.0)], 3).unwrap();
        let mut o = StateVector::zeros((0..3).map(site).collect()).unwrap();
        for q in 0..3 {
            o.apply_gate(&Gate::h(q)).unwrap();
        }
        o.apply_gate(&Gate::cz(0, 1)).unwrap();
        o.apply_gate(&Gate::cz(1, 2)).unwrap();
        let f = fidelity(st.amplitudes(), o.amplitudes()).unwrap();
        assert!((f - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pair_symmetries_hold_and_are_unitary() {
        let pairs = pair_tensors(&variant_tensors(VariantKind::Cluster));
        for b in Pauli::ALL {
            let u = cluster_pair_symmetry(b);
            assert!(crate::linalg::unitarity_error(&u) < 1e-12, "{b:?}");
            check_symmetry_with(&pairs, &u, &b.matrix(), &b.matrix()).unwrap();
        }
        assert!((cluster_pair_symmetry(Pauli::I) - Mat::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn single_site_cluster_symmetry_absent() {
        // No site-local U reproduces X A X for the cluster tensors.
        let ch = variant_tensors(VariantKind::Cluster);
        let x = Pauli::X.matrix();
        let target: Vec<Mat> = ch.tensors.iter().map(|a| &x * a * &x).collect();
        for t in &target {
            let resid = ch.tensors.iter().map(|a| (t - a).norm().min((t + a).norm())).fold(f64::MAX, f64::min);
            assert!(resid > 1e-3);
        }
    }

    #[test]
    fn ghz_recycled_two_blocks() {
        let layout = VariantLayout { blocks: vec![2, 2], recycle: true };
        assert_eq!(layout.n_sites(), 6);
        for outs in fusion_combinations(3) {
            let raw = prepare_fusion_variant_with(VariantKind::Ghz, &layout, &OutcomePolicy::Forced(outs)).unwrap();
            assert_eq!(raw.state.num_qubits(), 6);
            assert_eq!(raw.circuit.num_qubits(), 6);
            let fixed = correct_variant(raw, VariantKind::Ghz).unwrap();
            assert!((variant_fidelity(&fixed, VariantKind::Ghz).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ghz_three_three_layout() {
        let layout = VariantLayout { blocks: vec![3, 3], recycle: false };
        for outs in fusion_combinations(3) {
            let raw = prepare_fusion_variant_with(VariantKind::Ghz, &layout, &OutcomePolicy::Forced(outs)).unwrap();
            let fixed = correct_variant(raw, VariantKind::Ghz).unwrap();
            assert!((variant_fidelity(&fixed, VariantKind::Ghz).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn exhaustive_forced_outcomes() {
        for kind in [VariantKind::Ghz, VariantKind::Cluster] {
            for n in 2..=6 {
                let layout = VariantLayout::default_for(kind, n);
                assert_eq!(layout.n_sites(), n);
                let f = layout.blocks.len() - 1;
                for c in 0..4usize.pow(f as u32) {
                    let outs = (0..f).map(|k| crate::sim::BellState::ALL[(c >> (2 * k)) & 3]).collect();
                    let res = prepare_fusion_variant(kind, n, &OutcomePolicy::Forced(outs)).unwrap();
                    let fid = variant_fidelity(&res, kind).unwrap();
                    assert!((fid - 1.0).abs() < 1e-10, "{kind:?} n={n} c={c}: {fid}");
                    if kind == VariantKind::Ghz {
                        assert_eq!(res.state.num_qubits(), n);
                    }
                }
            }
        }
    }

    #[test]
    fn cluster_corrections_stay_left_of_defects() {
        for c in 0..4usize {
            let outs = vec![crate::sim::BellState::ALL[c]];
            let raw = prepare_fusion_variant_with(VariantKind::Cluster, &VariantLayout::default_for(VariantKind::Cluster, 4), &OutcomePolicy::Forced(outs)).unwrap();
            let before = raw.circuit.instructions.len();
            let max_bond = raw.defects.defects.iter().map(|d| d.0).max();
            let fixed = correct_variant(raw, VariantKind::Cluster).unwrap();
            for ins in &fixed.circuit.instructions[before..] {
                let Instruction::Gate(g) = ins else { panic!("correction is unitary") };
                for &q in &g.targets {
                    match fixed.circuit.labels[q] {
                        QubitRole::Site { site, .. } => assert!(site <= max_bond.unwrap()),
                        QubitRole::Memory { block: 0, side: Side::Left } => {}
                        other => panic!("correction touched {other}"),
                    }
                }
            }
        }
    }

    #[test]
    fn sampled_outcomes_corrected() {
        for seed in 0..8 {
            let res = prepare_fusion_variant(VariantKind::Cluster, 6, &OutcomePolicy::seeded(seed)).unwrap();
            assert!((variant_fidelity(&res, VariantKind::Cluster).unwrap() - 1.0).abs() < 1e-10);
        }
        assert!(prepare_fusion_variant(VariantKind::Ghz, 1, &OutcomePolicy::seeded(0)).is_err());
    }
}
