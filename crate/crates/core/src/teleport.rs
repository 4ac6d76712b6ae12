//! Teleporting a qubit state from the right edge memory to the left one
//! through an AKLT chain.

use num_complex::Complex64 as C64;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, fidelity, mcweeny_purify, partial_trace_pure, r, DensityMatrix, Mat, Pauli, MCWEENY_MAX_ITER, MCWEENY_TOL};
use crate::observables::Estimate;
use crate::protocol::{
    prepare_fusion, prepare_sequential, Correction, MemoryInit, MemoryMode, Method, OutcomePolicy, PreparationResult,
};
use crate::sim::{stream_rng, Gate, Policy, StateVector};

/// Site outcome in the Cartesian spin-1 basis, plus the encoded singlet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cartesian {
    X,
    Y,
    Z,
    S,
}

impl Cartesian {
    pub const ALL: [Cartesian; 4] = [Cartesian::X, Cartesian::Y, Cartesian::Z, Cartesian::S];

    /// Readout code after [`site_basis_transform`].
    pub fn readout(self) -> usize {
        match self {
            Cartesian::X => 0b10,
            Cartesian::Y => 0b00,
            Cartesian::Z => 0b01,
            Cartesian::S => 0b11,
        }
    }

    pub fn from_readout(code: usize) -> Cartesian {
        match code & 3 {
            0b10 => Cartesian::X,
            0b00 => Cartesian::Y,
            0b01 => Cartesian::Z,
            _ => Cartesian::S,
        }
    }

    /// Pauli carried by the projected site tensor; `None` for the singlet.
    pub fn pauli(self) -> Option<Pauli> {
        match self {
            Cartesian::X => Some(Pauli::X),
            Cartesian::Y => Some(Pauli::Y),
            Cartesian::Z => Some(Pauli::Z),
            Cartesian::S => None,
        }
    }

    /// Encoded ket over the four two-qubit site codes.
    pub fn encoded(self) -> [C64; 4] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = c(0.0, 0.0);
        // codes: 0 -> m=0, 1 -> m=-, 2 -> m=+, 3 -> singlet
        match self {
            Cartesian::X => [z, r(-h), r(h), z],
            Cartesian::Y => [z, c(0.0, h), c(0.0, h), z],
            Cartesian::Z => [r(1.0), z, z, z],
            Cartesian::S => [z, z, z, r(1.0)],
        }
    }
}

/// Two-qubit unitary taking each encoded Cartesian state to its readout code.
/// Local bit `k` is slot `k` of the site.
pub fn site_basis_transform() -> Gate {
    let mut u = Mat::zeros(4, 4);
    for b in Cartesian::ALL {
        let e = b.encoded();
        for (col, amp) in e.iter().enumerate() {
            u[(b.readout(), col)] += amp.conj();
        }
    }
    Gate { matrix: u, targets: vec![0, 1], tag: "Txyz".into() }
}

/// Phase-stripped byproduct `Y * prod(site Paulis) * prod(defects)`.
pub fn byproduct(outcomes: &[Cartesian], defects: &[Pauli]) -> Result<Pauli> {
    let mut lam = Pauli::Y;
    for o in outcomes {
        lam = lam.mul(o.pauli().ok_or_else(|| Error::SymmetryViolated("singlet site outcome".into()))?);
    }
    Ok(defects.iter().fold(lam, |a, &b| a.mul(b)))
}

/// Basis in which the right memory is measured. Outcome 0 initialises the
/// target: the chain carries the right memory to the left memory as its
/// complex conjugate partner.
pub fn init_basis(psi: &[C64; 2]) -> [Vec<C64>; 2] {
    [vec![psi[0].conj(), psi[1].conj()], vec![-psi[1], psi[0]]]
}

fn normalized(psi: [C64; 2]) -> Result<[C64; 2]> {
    let n = (psi[0].norm_sqr() + psi[1].norm_sqr()).sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("target norm {n} is not 1")));
    }
    Ok(psi)
}

/// Standard single-qubit targets: `|0>, |1>, |+>, |->, |+i>` and
/// `(|0> + e^{i pi/4}|1>)/sqrt2`.
pub fn canonical_targets() -> Vec<(&'static str, [C64; 2])> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let t = C64::from_polar(h, std::f64::consts::FRAC_PI_4);
    vec![
        ("0", [r(1.0), r(0.0)]),
        ("1", [r(0.0), r(1.0)]),
        ("+", [r(h), r(h)]),
        ("-", [r(h), r(-h)]),
        ("+i", [r(h), c(0.0, h)]),
        ("t", [r(h), t]),
    ]
}

/// How site outcomes are chosen.
pub enum SitePolicy<'r> {
    Sample(&'r mut dyn RngCore),
    Forced(&'r [Cartesian]),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeleportReport {
    pub target: [C64; 2],
    #[serde(rename = "N")]
    pub n: usize,
    pub prep: Method,
    pub outcomes: Vec<Cartesian>,
    /// Fusion defects left in the state and absorbed into the byproduct.
    pub defects: Vec<Pauli>,
    pub byproduct: Pauli,
    /// Received left-memory state after undoing the byproduct.
    pub received: [[C64; 2]; 2],
    pub raw_fidelity: f64,
    pub purified_fidelity: f64,
    /// Probability of the accepted target initialisation.
    pub acceptance: f64,
}

/// Defects still present in the state, i.e. not removed by a unitary correction.
pub fn uncorrected_defects(result: &PreparationResult) -> Vec<Pauli> {
    match result.correction {
        Correction::Unitary => vec![],
        _ => result.defects.defects.iter().map(|d| d.1).collect(),
    }
}

/// Runs the teleportation measurements on a prepared chain with open edge
/// memories.
pub fn teleport_prepared(result: &PreparationResult, psi: [C64; 2], sites: SitePolicy<'_>) -> Result<TeleportReport> {
    let psi = normalized(psi)?;
    let (left, right) = match (result.memories.left, result.memories.right, result.boundary) {
        (Some(l), Some(rr), None) => (l, rr),
        _ => return Err(Error::MissingRole("open edge memories".into())),
    };
    let mut st: StateVector = result.state.clone();
    let basis = init_basis(&psi);
    let init = st.measure(&[st.position(right)?], Some(&basis), Policy::Force(0))?;

    let roles = result.site_roles();
    let t = site_basis_transform();
    let mut outcomes = Vec::with_capacity(result.n_sites);
    let mut sites = sites;
    for site in 0..result.n_sites {
        let q = [st.position(roles[2 * site])?, st.position(roles[2 * site + 1])?];
        st.apply_gate(&t.on(q.to_vec())?)?;
        let policy = match &mut sites {
            SitePolicy::Sample(rng) => Policy::Sample(&mut **rng),
            SitePolicy::Forced(list) => Policy::Force(
                list.get(site).ok_or_else(|| Error::InvalidArgument("too few forced site outcomes".into()))?.readout(),
            ),
        };
        outcomes.push(Cartesian::from_readout(st.measure(&q, None, policy)?.outcome));
    }

    let defects = uncorrected_defects(result);
    let lam = byproduct(&outcomes, &defects)?;
    let rho = partial_trace_pure(st.amplitudes(), &[st.position(left)?], st.num_qubits())?;
    let p = lam.matrix();
    let received = DensityMatrix::from_unnormalized(&p * rho.matrix() * &p)?;
    let psi_v = psi.to_vec();
    let raw_fidelity = fidelity(&received, &psi_v)?;
    let purified = mcweeny_purify(&received, MCWEENY_TOL, MCWEENY_MAX_ITER)?;
    let purified_fidelity = fidelity(&purified.rho, &psi_v)?;
    let m = received.matrix();
    Ok(TeleportReport {
        target: psi,
        n: result.n_sites,
        prep: result.method,
        outcomes,
        defects,
        byproduct: lam,
        received: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
        raw_fidelity,
        purified_fidelity,
        acceptance: init.probability,
    })
}

/// Prepares a chain for teleportation. Fusion defects are left uncorrected
/// and tracked in the byproduct.
pub fn prepare_for_teleport(n: usize, prep: Method, seed: u64) -> Result<PreparationResult> {
    match prep {
        Method::Sequential => prepare_sequential(n, MemoryMode::Single, &MemoryInit::default()),
        Method::Fusion => prepare_fusion(n, &OutcomePolicy::Sample { seed, stream: 0 }),
        other => Err(Error::InvalidArgument(format!("teleportation needs sequential or fusion, got {}", other.tag()))),
    }
}

/// One teleportation run: stream 0 of `seed` drives the fusion outcomes,
/// stream 1 the site outcomes.
pub fn teleport(n: usize, psi: [C64; 2], prep: Method, seed: u64) -> Result<TeleportReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let result = prepare_for_teleport(n, prep, seed)?;
    let mut rng = stream_rng(seed, 1);
    teleport_prepared(&result, psi, SitePolicy::Sample(&mut rng))
}

/// Fraction of accepted target initialisations over `shots` simulated
/// attempts; attempt `k` draws from stream `(seed, k)`.
pub fn acceptance_shots(n: usize, psi: [C64; 2], prep: Method, shots: usize, seed: u64) -> Result<Estimate> {
    let result = prepare_for_teleport(n, prep, seed)?;
    let right = result.memories.right.ok_or_else(|| Error::MissingRole("right memory".into()))?;
    let st = &result.state;
    let basis = init_basis(&normalized(psi)?);
    let p = st.probabilities(&[st.position(right)?], Some(&basis))?[0];
    Estimate::from_samples((0..shots as u64).map(|k| {
        let u: f64 = stream_rng(seed, k).random();
        if u < p { 1.0 } else { 0.0 }
    }))
}
