//! Matrix product states with small bond dimension: the reference oracle for
//! every prepared state.
//!
//! Amplitudes are `l^T A^{m_0} ... A^{m_{N-1}} r` for open chains (the
//! boundary vectors are used as plain coefficient vectors, no conjugation) and
//! `Tr(A^{m_0} ... A^{m_{N-1}})` for periodic chains.
//!
//! Spin-1 physical indices are ordered `(+, 0, -)`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{frobenius, kron, r, trace, Mat, Pauli};
use crate::sim::{QubitRole, StateVector};

pub const CANONICAL_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Maps physical indices onto computational basis states of the qubits of one
/// site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteEncoding {
    pub qubits_per_site: usize,
    /// `codes[m]` is the local basis index (slot 0 = least significant bit).
    pub codes: Vec<usize>,
    /// Local index of the state every site starts in.
    pub initial: usize,
}

impl SiteEncoding {
    /// `|+> -> |10>`, `|0> -> |00>`, `|-> -> |01>` written `|q1 q0>`. The
    /// remaining code `|11>` is the encoded singlet `|s>`.
    pub fn spin1() -> Self {
        SiteEncoding { qubits_per_site: 2, codes: vec![2, 0, 1], initial: 0 }
    }

    /// One qubit per site, physical index = bit value.
    pub fn qubit() -> Self {
        SiteEncoding { qubits_per_site: 1, codes: vec![0, 1], initial: 0 }
    }

    pub const SPIN1_SINGLET: usize = 3;

    pub fn local_dim(&self) -> usize {
        1 << self.qubits_per_site
    }

    /// Physical index of a local basis state, `None` for unused codes.
    pub fn decode(&self, local: usize) -> Option<usize> {
        self.codes.iter().position(|&c| c == local)
    }

    pub fn site_roles(&self, n: usize) -> Vec<QubitRole> {
        (0..n)
            .flat_map(|site| (0..self.qubits_per_site).map(move |slot| QubitRole::Site { site, slot: slot as u8 }))
            .collect()
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.local_dim()];
        for &c in &self.codes {
            if c >= seen.len() || seen[c] {
                return false;
            }
            seen[c] = true;
        }
        true
    }
}

/// Translation-invariant MPS data.
#[derive(Debug, Clone)]
pub struct MpsChain {
    pub phys_dim: usize,
    pub bond_dim: usize,
    pub tensors: Vec<Mat>,
    pub labels: Vec<String>,
    /// Diagonal of the S^z-like operator used by string and zz observables.
    pub spin_z: Vec<f64>,
    pub left: Option<Vec<C64>>,
    pub right: Option<Vec<C64>>,
    /// Bond matrix `S` with `A^m = P^m S`.
    pub singlet: Option<Mat>,
    pub projectors: Option<Vec<Mat>>,
    /// Site representations `U_B` indexed as `Pauli::ALL`.
    pub site_symmetries: Option<Vec<Mat>>,
    pub canonical: bool,
    pub encoding: SiteEncoding,
}

fn spin1_matrices() -> [Mat; 3] {
    let s2 = std::f64::consts::SQRT_2;
    let plus = Mat::from_row_slice(3, 3, &[r(0.0), r(s2), r(0.0), r(0.0), r(0.0), r(s2), r(0.0), r(0.0), r(0.0)]);
    let minus = plus.adjoint();
    let sx = (&plus + &minus).map(|z| z / 2.0);
    let sy = (&plus - &minus).map(|z| z / C64::new(0.0, 2.0));
    let sz = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![r(1.0), r(0.0), r(-1.0)]));
    [sx, sy, sz]
}

/// Spin-1 operators `(S^x, S^y, S^z)` in the `(+, 0, -)` basis.
pub fn spin1_operators() -> [Mat; 3] {
    spin1_matrices()
}

/// Two-site AKLT Hamiltonian term `S.S + (S.S)^2 / 3` on `(m_i, m_{i+1})`
/// with index `m_i + 3 m_{i+1}`.
pub fn aklt_bond_hamiltonian() -> Mat {
    let ops = spin1_matrices();
    let mut ss = Mat::zeros(9, 9);
    for o in &ops {
        // S.S is symmetric under exchange, so the factor order does not matter.
        ss += kron(o, o);
    }
    &ss + (&ss * &ss).map(|z| z / 3.0)
}

/// `U_B = exp(i pi S^alpha)` on the `(+, 0, -)` basis.
pub fn spin1_pi_rotation(b: Pauli) -> Mat {
    let z = r(0.0);
    match b {
        Pauli::I => Mat::identity(3, 3),
        Pauli::X => Mat::from_row_slice(3, 3, &[z, z, r(-1.0), z, r(-1.0), z, r(-1.0), z, z]),
        Pauli::Y => Mat::from_row_slice(3, 3, &[z, z, r(1.0), z, r(-1.0), z, r(1.0), z, z]),
        Pauli::Z => Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![r(-1.0), r(1.0), r(-1.0)])),
    }
}

/// AKLT tensors `A^+ = sqrt(2/3) s+`, `A^0 = -sqrt(1/3) Z`, `A^- = -sqrt(2/3) s-`.
pub fn aklt_tensors() -> MpsChain {
    let a = (2.0f64 / 3.0).sqrt();
    let b = (1.0f64 / 3.0).sqrt();
    let z = r(0.0);
    let ap = Mat::from_row_slice(2, 2, &[z, r(a), z, z]);
    let a0 = Mat::from_row_slice(2, 2, &[r(-b), z, z, r(b)]);
    let am = Mat::from_row_slice(2, 2, &[z, z, r(-a), z]);
    let s = singlet_matrix();
    let s_inv = s.clone().try_inverse().expect("singlet matrix is invertible");
    let tensors = vec![ap, a0, am];
    let projectors = tensors.iter().map(|t| t * &s_inv).collect();
    MpsChain {
        phys_dim: 3,
        bond_dim: 2,
        tensors,
        labels: vec!["+".into(), "0".into(), "-".into()],
        spin_z: vec![1.0, 0.0, -1.0],
        left: None,
        right: None,
        singlet: Some(s),
        projectors: Some(projectors),
        site_symmetries: Some(Pauli::ALL.iter().map(|&p| spin1_pi_rotation(p)).collect()),
        canonical: true,
        encoding: SiteEncoding::spin1(),
    }
}

/// `S = (|01> - |10>)/sqrt2` written as a 2x2 coefficient matrix.
pub fn singlet_matrix() -> Mat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Mat::from_row_slice(2, 2, &[r(0.0), r(s), r(-s), r(0.0)])
}

impl MpsChain {
    pub fn with_boundaries(mut self, left: Vec<C64>, right: Vec<C64>) -> Self {
        self.left = Some(left);
        self.right = Some(right);
        self
    }

    /// `sum_m A^m^dagger A^m`.
    pub fn gram(&self) -> Mat {
        self.tensors.iter().fold(Mat::zeros(self.bond_dim, self.bond_dim), |acc, a| acc + a.adjoint() * a)
    }

    pub fn canonical_error(&self) -> f64 {
        frobenius(&(self.gram() - Mat::identity(self.bond_dim, self.bond_dim)))
    }

    /// `Gamma(rho) = sum_m A^m rho A^m^dagger`.
    pub fn channel(&self, rho: &Mat) -> Mat {
        self.tensors.iter().fold(Mat::zeros(self.bond_dim, self.bond_dim), |acc, a| acc + a * rho * a.adjoint())
    }

    /// `sum_m A^m (x) conj(A^m)`.
    pub fn transfer(&self) -> Mat {
        self.transfer_with(&Mat::identity(self.phys_dim, self.phys_dim))
    }

    /// `E_O = sum_{m m'} O_{m m'} A^{m'} (x) conj(A^m)`.
    pub fn transfer_with(&self, o: &Mat) -> Mat {
        let d2 = self.bond_dim * self.bond_dim;
        let mut e = Mat::zeros(d2, d2);
        for (m, am) in self.tensors.iter().enumerate() {
            for (mp, amp) in self.tensors.iter().enumerate() {
                let w = o[(m, mp)];
                if w.norm() > 0.0 {
                    e += kron(amp, &am.conjugate()).map(|z| z * w);
                }
            }
        }
        e
    }

    /// Two-site transfer operator for an operator on `(m_i, m_{i+1})` with
    /// index `m_i + d m_{i+1}`.
    pub fn transfer_two_site(&self, h: &Mat) -> Mat {
        let d = self.phys_dim;
        let d2 = self.bond_dim * self.bond_dim;
        let pairs: Vec<Mat> =
            (0..d * d).map(|idx| &self.tensors[idx % d] * &self.tensors[idx / d]).collect();
        let mut e = Mat::zeros(d2, d2);
        for (row, pr) in pairs.iter().enumerate() {
            for (col, pc) in pairs.iter().enumerate() {
                let w = h[(row, col)];
                if w.norm() > 0.0 {
                    e += kron(pc, &pr.conjugate()).map(|z| z * w);
                }
            }
        }
        e
    }

    fn sz(&self) -> Mat {
        Mat::from_diagonal(&nalgebra::DVector::from_iterator(self.phys_dim, self.spin_z.iter().map(|&x| r(x))))
    }

    fn string_phase(&self) -> Mat {
        Mat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.phys_dim,
            self.spin_z.iter().map(|&x| C64::from_polar(1.0, std::f64::consts::PI * x)),
        ))
    }
}

/// Amplitudes over physical configurations, index `sum_k m_k d^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteState {
    pub phys_dim: usize,
    pub n: usize,
    pub amps: Vec<C64>,
}

/// Spin-1 chain state stored as `3^N` amplitudes.
pub type Spin1State = SiteState;

impl SiteState {
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Physical index of site `k` in configuration `idx`.
    pub fn digit(&self, idx: usize, k: usize) -> usize {
        (idx / self.phys_dim.pow(k as u32)) % self.phys_dim
    }

    /// Expectation of a product of diagonal single-site operators.
    pub fn expect_product(&self, ops: &[(usize, &[f64])]) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > 0.0)
            .map(|(idx, a)| a.norm_sqr() * ops.iter().map(|(k, diag)| diag[self.digit(idx, *k)]).product::<f64>())
            .sum()
    }

    /// `<S^z_i prod_{i<k<j} exp(i pi S^z_k) S^z_j>` with `j = i + ell - 1`
    /// (0-based sites).
    pub fn string_order(&self, chain: &MpsChain, i: usize, ell: usize) -> Result<f64> {
        check_window(i, ell, self.n)?;
        let j = i + ell - 1;
        let sz = chain.spin_z.clone();
        let phase: Vec<f64> = sz.iter().map(|&x| (std::f64::consts::PI * x).cos()).collect();
        if ell == 1 {
            let sq: Vec<f64> = sz.iter().map(|x| x * x).collect();
            return Ok(self.expect_product(&[(i, &sq)]));
        }
        let mut ops: Vec<(usize, &[f64])> = vec![(i, &sz), (j, &sz)];
        for k in i + 1..j {
            ops.push((k, &phase));
        }
        Ok(self.expect_product(&ops))
    }

    /// `<S^z_i S^z_j>`.
    pub fn zz(&self, chain: &MpsChain, i: usize, j: usize) -> Result<f64> {
        if i >= self.n || j >= self.n || i == j {
            return Err(Error::InvalidArgument(format!("zz sites ({i}, {j}) for N={}", self.n)));
        }
        Ok(self.expect_product(&[(i, &chain.spin_z), (j, &chain.spin_z)]))
    }

    /// Qubit statevector under `encoding`, sites in order.
    pub fn to_statevector(&self, encoding: &SiteEncoding) -> Result<StateVector> {
        let q = encoding.qubits_per_site;
        let mut out = vec![C64::new(0.0, 0.0); 1 << (q * self.n)];
        for (idx, a) in self.amps.iter().enumerate() {
            let mut code = 0;
            for k in 0..self.n {
                code |= encoding.codes[self.digit(idx, k)] << (q * k);
            }
            out[code] = *a;
        }
        StateVector::normalized(out, encoding.site_roles(self.n))
    }

    /// Reads site amplitudes from a statevector holding exactly the site
    /// qubits. Weight on unused codes is dropped and reported.
    pub fn from_statevector(sv: &StateVector, encoding: &SiteEncoding, n: usize) -> Result<(SiteState, f64)> {
        let order = encoding.site_roles(n);
        let amps = sv.amplitudes_in_order(&order)?;
        let d = encoding.codes.len();
        let q = encoding.qubits_per_site;
        let mut out = vec![C64::new(0.0, 0.0); d.pow(n as u32)];
        let mut leaked = 0.0;
        for (code, a) in amps.iter().enumerate() {
            let mut idx = 0;
            let mut ok = true;
            for k in (0..n).rev() {
                match encoding.decode((code >> (q * k)) & ((1 << q) - 1)) {
                    Some(m) => idx = idx * d + m,
                    None => ok = false,
                }
            }
            if ok {
                out[idx] = *a;
            } else {
                leaked += a.norm_sqr();
            }
        }
        Ok((SiteState { phys_dim: d, n, amps: out }, leaked))
    }
}

fn check_window(i: usize, ell: usize, n: usize) -> Result<()> {
    if ell == 0 || i + ell > n {
        return Err(Error::InvalidArgument(format!("window i={i}, ell={ell} out of range for N={n}")));
    }
    Ok(())
}

fn normalize(mut amps: Vec<C64>) -> Result<Vec<C64>> {
    let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-14 {
        return Err(Error::ZeroNorm);
    }
    amps.iter_mut().for_each(|z| *z /= norm);
    Ok(amps)
}

struct Walk<'a> {
    chain: &'a MpsChain,
    n: usize,
    insert: Option<(usize, &'a Mat)>,
}

fn contract_into(w: &Walk<'_>, acc: &Mat, k: usize, idx: usize, stride: usize, out: &mut [Mat]) {
    let chain = w.chain;
    if k == w.n {
        out[idx] = acc.clone();
        return;
    }
    let acc = match w.insert {
        Some((at, m)) if at == k => acc * m,
        _ => acc.clone(),
    };
    for (m, a) in chain.tensors.iter().enumerate() {
        let next = &acc * a;
        if next.iter().all(|z| z.norm_sqr() == 0.0) {
            continue;
        }
        contract_into(w, &next, k + 1, idx + m * stride, stride * chain.phys_dim, out);
    }
}

fn contract_all(chain: &MpsChain, start: Mat, n: usize, insert: Option<(usize, &Mat)>) -> Vec<Mat> {
    let zero = Mat::zeros(start.nrows(), chain.bond_dim);
    let mut out = vec![zero; chain.phys_dim.pow(n as u32)];
    contract_into(&Walk { chain, n, insert }, &start, 0, 0, 1, &mut out);
    out
}

/// Open-boundary amplitudes `l^T A...A r`, normalised.
pub fn contract_open_sites(chain: &MpsChain, left: &[C64], right: &[C64], n: usize) -> Result<SiteState> {
    contract_open_inserted(chain, left, right, n, None)
}

/// Open-boundary amplitudes with an extra bond matrix `M` placed in front of
/// site `at`: `l^T A_0 ... A_{at-1} M A_at ... A_{N-1} r`.
pub fn contract_open_inserted(
    chain: &MpsChain,
    left: &[C64],
    right: &[C64],
    n: usize,
    insert: Option<(usize, &Mat)>,
) -> Result<SiteState> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let d = chain.bond_dim;
    if left.len() != d || right.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: left.len().min(right.len()) });
    }
    let l = Mat::from_row_slice(1, d, left);
    let rv = nalgebra::DVector::from_column_slice(right);
    let amps = contract_all(chain, l, n, insert).into_iter().map(|m| (m * &rv)[(0, 0)]).collect();
    Ok(SiteState { phys_dim: chain.phys_dim, n, amps: normalize(amps)? })
}

/// Trace-closed amplitudes, normalised.
pub fn contract_periodic_sites(chain: &MpsChain, n: usize) -> Result<SiteState> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let id = Mat::identity(chain.bond_dim, chain.bond_dim);
    let amps = contract_all(chain, id, n, None).iter().map(trace).collect();
    Ok(SiteState { phys_dim: chain.phys_dim, n, amps: normalize(amps)? })
}

/// Open chain as a qubit statevector in the chain's encoding.
pub fn contract_open(chain: &MpsChain, left: &[C64], right: &[C64], n: usize) -> Result<StateVector> {
    contract_open_sites(chain, left, right, n)?.to_statevector(&chain.encoding)
}

pub fn contract_periodic(chain: &MpsChain, n: usize) -> Result<StateVector> {
    contract_periodic_sites(chain, n)?.to_statevector(&chain.encoding)
}

/// Observables evaluated through transfer operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    StringOrder,
    ZzCorrelator,
    EnergyPerSite,
}

/// Chain geometry for transfer-operator evaluation.
#[derive(Debug, Clone)]
pub enum Extent {
    Open { n: usize, left: Vec<C64>, right: Vec<C64> },
    Periodic(usize),
    Infinite,
}

fn mat_pow(m: &Mat, mut e: u64) -> Mat {
    let mut base = m.clone();
    let mut acc = Mat::identity(m.nrows(), m.ncols());
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    acc
}

/// Dominant right and left fixed points of `e`, normalised so `l^T r = 1`.
fn fixed_points(e: &Mat) -> Result<(nalgebra::DVector<C64>, nalgebra::DVector<C64>, C64)> {
    let dim = e.nrows();
    let power = |m: &Mat| -> Result<(nalgebra::DVector<C64>, C64)> {
        let mut v = nalgebra::DVector::from_fn(dim, |i, _| r(1.0 + 0.1 * i as f64));
        let mut lambda = r(0.0);
        for _ in 0..10_000 {
            let w = m * &v;
            let nrm = w.norm();
            if nrm < 1e-300 {
                return Err(Error::ZeroNorm);
            }
            let (k, _) = v.iter().enumerate().fold((0, 0.0), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best });
            let new_lambda = w[k] / v[k];
            let w = w / r(nrm);
            let diff = (&w - &v).norm();
            v = w;
            if diff < 1e-15 && (new_lambda - lambda).norm() < 1e-15 {
                return Ok((v, new_lambda));
            }
            lambda = new_lambda;
        }
        Ok((v, lambda))
    };
    let (rv, lambda) = power(e)?;
    let (lv, _) = power(&e.transpose())?;
    let ov = lv.dot(&rv);
    if ov.norm() < 1e-12 {
        return Err(Error::InvalidArgument("degenerate transfer fixed points".into()));
    }
    Ok((lv / ov, rv, lambda))
}

/// Exact expectation of `obs` through transfer operators. Sites are 0-based;
/// the window is `i .. i + ell - 1`. For `EnergyPerSite` the window arguments
/// are ignored and the bond energy sum divided by the site count is returned
/// (a single bond for the infinite chain).
pub fn transfer_matrix_observable(chain: &MpsChain, obs: Observable, i: usize, ell: usize, extent: &Extent) -> Result<f64> {
    let e = chain.transfer();
    let sz = chain.sz();
    let d = chain.phys_dim;
    let window: Vec<Mat> = match obs {
        Observable::StringOrder | Observable::ZzCorrelator => {
            if ell == 0 {
                return Err(Error::InvalidArgument("ell must be at least 1".into()));
            }
            if ell == 1 {
                vec![chain.transfer_with(&(&sz * &sz))]
            } else {
                let mid = if obs == Observable::StringOrder { chain.transfer_with(&chain.string_phase()) } else { e.clone() };
                let es = chain.transfer_with(&sz);
                let mut w = vec![es.clone()];
                w.extend(std::iter::repeat_n(mid, ell - 2));
                w.push(es);
                w
            }
        }
        Observable::EnergyPerSite => {
            if d != 3 {
                return Err(Error::InvalidArgument("energy is defined for spin-1 chains".into()));
            }
            vec![chain.transfer_two_site(&aklt_bond_hamiltonian())]
        }
    };
    // Each two-site block spans two sites.
    let span = if obs == Observable::EnergyPerSite { 2 } else { ell };
    let block = window.iter().fold(Mat::identity(e.nrows(), e.ncols()), |acc, w| acc * w);
    match extent {
        Extent::Infinite => {
            let (l, rv, lambda) = fixed_points(&e)?;
            let val = (l.transpose() * &block * rv)[(0, 0)] / lambda.powu(span as u32);
            Ok(val.re)
        }
        Extent::Periodic(n) => {
            let n = *n;
            if span > n {
                return Err(Error::InvalidArgument(format!("window of {span} sites exceeds N={n}")));
            }
            let norm = trace(&mat_pow(&e, n as u64));
            let val = trace(&(&block * mat_pow(&e, (n - span) as u64))) / norm;
            Ok(val.re)
        }
        Extent::Open { n, left, right } => {
            let n = *n;
            let bl = nalgebra::DVector::from_iterator(left.len() * left.len(), kron_vec(left));
            let br = nalgebra::DVector::from_iterator(right.len() * right.len(), kron_vec(right));
            let norm = (bl.transpose() * mat_pow(&e, n as u64) * &br)[(0, 0)];
            if norm.norm() < 1e-300 {
                return Err(Error::ZeroNorm);
            }
            if obs == Observable::EnergyPerSite {
                let mut total = r(0.0);
                for b in 0..n.saturating_sub(1) {
                    let m = mat_pow(&e, b as u64) * &block * mat_pow(&e, (n - b - 2) as u64);
                    total += (bl.transpose() * m * &br)[(0, 0)];
                }
                return Ok((total / norm).re / n as f64);
            }
            check_window(i, ell, n)?;
            let m = mat_pow(&e, i as u64) * &block * mat_pow(&e, (n - i - ell) as u64);
            Ok(((bl.transpose() * m * &br)[(0, 0)] / norm).re)
        }
    }
}

/// `v (x) conj(v)` matching the transfer operator's index order.
fn kron_vec(v: &[C64]) -> Vec<C64> {
    v.iter().flat_map(|a| v.iter().map(move |b| a * b.conj())).collect()
}

/// Phase `theta_B` with `sum_m' (U_B)_{m m'} A^{m'} = e^{i theta_B} B^dagger A^m B`.
pub fn check_symmetry(chain: &MpsChain, b: Pauli) -> Result<f64> {
    let us = chain
        .site_symmetries
        .as_ref()
        .ok_or_else(|| Error::SymmetryViolated("chain has no site representation of the symmetry".into()))?;
    let u = &us[Pauli::ALL.iter().position(|&p| p == b).unwrap_or(0)];
    check_symmetry_with(&chain.tensors, u, &b.matrix(), &b.matrix())
}

/// Phase `theta` with `sum_m' U_{m m'} A^{m'} = e^{i theta} L^dagger A^m R`.
pub fn check_symmetry_with(tensors: &[Mat], u: &Mat, left: &Mat, right: &Mat) -> Result<f64> {
    let lhs: Vec<Mat> = (0..tensors.len())
        .map(|m| tensors.iter().enumerate().fold(Mat::zeros(tensors[0].nrows(), tensors[0].ncols()), |acc, (mp, a)| acc + a.map(|z| z * u[(m, mp)])))
        .collect();
    let rhs: Vec<Mat> = tensors.iter().map(|a| left.adjoint() * a * right).collect();
    let mut num = r(0.0);
    let mut den = 0.0;
    for (x, y) in lhs.iter().zip(&rhs) {
        num += trace(&(y.adjoint() * x));
        den += frobenius(y).powi(2);
    }
    if den < 1e-24 {
        return Err(Error::SymmetryViolated("right-hand side vanishes".into()));
    }
    let phase = num / den;
    let residual: f64 = lhs.iter().zip(&rhs).map(|(x, y)| frobenius(&(x - y.map(|z| z * phase))).powi(2)).sum::<f64>().sqrt();
    if (phase.norm() - 1.0).abs() > SYMMETRY_TOL || residual > SYMMETRY_TOL {
        return Err(Error::SymmetryViolated(format!("residual {residual:.3e}, |phase| {:.6}", phase.norm())));
    }
    Ok(phase.arg())
}

/// `(A^m)^T = -Y A^m Y` for every `m`.
pub fn check_inversion(chain: &MpsChain) -> bool {
    let y = Pauli::Y.matrix();
    chain.bond_dim == 2 && chain.tensors.iter().all(|a| frobenius(&(a.transpose() + &y * a * &y)) < SYMMETRY_TOL)
}

/// Dense matrix of `sum_bonds h` on the periodic spin-1 chain of `n` sites.
pub fn aklt_hamiltonian_periodic(n: usize) -> Mat {
    let h = aklt_bond_hamiltonian();
    let dim = 3usize.pow(n as u32);
    let mut out = Mat::zeros(dim, dim);
    let pow3: Vec<usize> = (0..n).map(|k| 3usize.pow(k as u32)).collect();
    for bond in 0..n {
        let (a, b) = (bond, (bond + 1) % n);
        for col in 0..dim {
            let ma = (col / pow3[a]) % 3;
            let mb = (col / pow3[b]) % 3;
            let base = col - ma * pow3[a] - mb * pow3[b];
            for na in 0..3 {
                for nb in 0..3 {
                    let w = h[(na + 3 * nb, ma + 3 * mb)];
                    if w.norm() > 0.0 {
                        out[(base + na * pow3[a] + nb * pow3[b], col)] += w;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh, fidelity};
    use rand::Rng;

    fn basis(i: usize) -> Vec<C64> {
        let mut v = vec![r(0.0); 2];
        v[i] = r(1.0);
        v
    }

    #[test]
    fn tensor_forms() {
        let ch = aklt_tensors();
        let b = (1.0f64 / 3.0).sqrt();
        assert!((ch.tensors[1][(0, 0)] - r(-b)).norm() < 1e-15);
        assert!((ch.tensors[1][(1, 1)] - r(b)).norm() < 1e-15);
        assert!(ch.canonical_error() < CANONICAL_TOL);
        let s = ch.singlet.as_ref().unwrap();
        for (a, p) in ch.tensors.iter().zip(ch.projectors.as_ref().unwrap()) {
            assert!(frobenius(&(a - p * s)) < 1e-14);
        }
        // Right canonical too.
        let rg = ch.tensors.iter().fold(Mat::zeros(2, 2), |acc, a| acc + a * a.adjoint());
        assert!(frobenius(&(rg - Mat::identity(2, 2))) < 1e-12);
        assert!(ch.encoding.is_bijection());
    }

    #[test]
    fn projectors_are_scaled_triplets() {
        let ch = aklt_tensors();
        let p = ch.projectors.unwrap();
        let k = 2.0 / 3f64.sqrt();
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let trip = [
            Mat::from_row_slice(2, 2, &[r(1.0), r(0.0), r(0.0), r(0.0)]),
            Mat::from_row_slice(2, 2, &[r(0.0), r(s2), r(s2), r(0.0)]),
            Mat::from_row_slice(2, 2, &[r(0.0), r(0.0), r(0.0), r(1.0)]),
        ];
        for (pm, t) in p.iter().zip(&trip) {
            assert!(frobenius(&(pm - t.map(|z| z * k))) < 1e-14);
        }
    }

    #[test]
    fn periodic_two_site() {
        let ch = aklt_tensors();
        let st = contract_periodic_sites(&ch, 2).unwrap();
        assert_eq!(st.amps[0], r(0.0));
        assert!((st.norm_sqr() - 1.0).abs() < 1e-14);
        for a in 0..3 {
            for b in 0..3 {
                assert!((st.amps[a + 3 * b] - st.amps[b + 3 * a]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn open_amplitudes_match_index_sum() {
        let ch = aklt_tensors();
        let (l, rr) = (vec![r(0.6), C64::new(0.0, 0.8)], vec![r(1.0), r(-0.5)]);
        let st = contract_open_sites(&ch, &l, &rr, 3).unwrap();
        let mut raw = vec![r(0.0); 27];
        for m0 in 0..3 {
            for m1 in 0..3 {
                for m2 in 0..3 {
                    let mut acc = r(0.0);
                    for a in 0..2 {
                        for b in 0..2 {
                            for c in 0..2 {
                                for d in 0..2 {
                                    acc += l[a] * ch.tensors[m0][(a, b)] * ch.tensors[m1][(b, c)] * ch.tensors[m2][(c, d)] * rr[d];
                                }
                            }
                        }
                    }
                    raw[m0 + 3 * m1 + 9 * m2] = acc;
                }
            }
        }
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for (x, y) in st.amps.iter().zip(&raw) {
            assert!((x - y / norm).norm() < 1e-12);
        }
    }

    #[test]
    fn disallowed_string_and_hidden_order() {
        let ch = aklt_tensors();
        // + + - 0 0 + -
        let cfg = [0usize, 0, 2, 1, 1, 0, 2];
        let idx: usize = cfg.iter().enumerate().map(|(k, &m)| m * 3usize.pow(k as u32)).sum();
        for (l, rr) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let st = contract_open_sites(&ch, &basis(l), &basis(rr), 7).unwrap();
            assert_eq!(st.amps[idx].norm(), 0.0);
            for (i, a) in st.amps.iter().enumerate() {
                if a.norm() < 1e-14 {
                    continue;
                }
                let nonzero: Vec<usize> = (0..7).map(|k| st.digit(i, k)).filter(|&m| m != 1).collect();
                assert!(nonzero.windows(2).all(|w| w[0] != w[1]));
            }
        }
    }

    #[test]
    fn qubit_statevector_has_no_singlet_codes() {
        let ch = aklt_tensors();
        let sv = contract_open(&ch, &basis(0), &basis(1), 3).unwrap();
        for (idx, a) in sv.amplitudes().iter().enumerate() {
            let has_s = (0..3).any(|k| (idx >> (2 * k)) & 3 == SiteEncoding::SPIN1_SINGLET);
            if has_s {
                assert_eq!(a.norm(), 0.0);
            }
        }
        let (back, leaked) = SiteState::from_statevector(&sv, &ch.encoding, 3).unwrap();
        assert_eq!(leaked, 0.0);
        let direct = contract_open_sites(&ch, &basis(0), &basis(1), 3).unwrap();
        assert!(back.amps.iter().zip(&direct.amps).all(|(a, b)| (a - b).norm() < 1e-14));
    }

    #[test]
    fn zero_boundary_is_an_error() {
        let ch = aklt_tensors();
        assert!(matches!(contract_open_sites(&ch, &[r(0.0), r(0.0)], &basis(0), 2), Err(Error::ZeroNorm)));
    }

    #[test]
    fn channel_is_trace_preserving() {
        let ch = aklt_tensors();
        let mut rng = crate::sim::stream_rng(11, 0);
        for _ in 0..20 {
            let a = Mat::from_fn(2, 2, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let rho = &a * a.adjoint();
            assert!((trace(&ch.channel(&rho)) - trace(&rho)).norm() < 1e-12);
        }
    }

    #[test]
    fn string_order_infinite_and_flat() {
        let ch = aklt_tensors();
        for ell in 2..12 {
            let v = transfer_matrix_observable(&ch, Observable::StringOrder, 0, ell, &Extent::Infinite).unwrap();
            assert!((v + 4.0 / 9.0).abs() < 1e-12, "{ell}: {v}");
        }
        let n = 8;
        let st = contract_open_sites(&ch, &basis(0), &basis(0), n).unwrap();
        let ext = Extent::Open { n, left: basis(0), right: basis(0) };
        let reference = st.string_order(&ch, 0, 2).unwrap();
        for i in 0..n - 1 {
            for ell in 2..=n - i {
                let a = st.string_order(&ch, i, ell).unwrap();
                let b = transfer_matrix_observable(&ch, Observable::StringOrder, i, ell, &ext).unwrap();
                assert!((a - b).abs() < 1e-12);
                assert!((a - reference).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zz_decay_ratio() {
        let ch = aklt_tensors();
        let c = |ell| transfer_matrix_observable(&ch, Observable::ZzCorrelator, 0, ell, &Extent::Infinite).unwrap();
        for ell in 2..10 {
            assert!((c(ell + 1) / c(ell) + 1.0 / 3.0).abs() < 1e-9);
            // (4/3)(-1/3)^(distance), distance = ell - 1.
            assert!((c(ell) - 4.0 / 3.0 * (-1.0f64 / 3.0).powi(ell as i32 - 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn large_chain_powers() {
        let ch = aklt_tensors();
        let ext = Extent::Periodic(1_000_000);
        let v = transfer_matrix_observable(&ch, Observable::StringOrder, 0, 500_000, &ext).unwrap();
        assert!((v + 4.0 / 9.0).abs() < 1e-10);
    }

    #[test]
    fn energy_matches_exact_diagonalisation() {
        let ch = aklt_tensors();
        let e_inf = transfer_matrix_observable(&ch, Observable::EnergyPerSite, 0, 0, &Extent::Infinite).unwrap();
        assert!((e_inf + 2.0 / 3.0).abs() < 1e-12);
        let e4 = transfer_matrix_observable(&ch, Observable::EnergyPerSite, 0, 0, &Extent::Periodic(4)).unwrap();
        let h = aklt_hamiltonian_periodic(4);
        let (vals, _) = eigh(&h);
        let ground = vals.last().copied().unwrap() / 4.0;
        assert!((ground + 2.0 / 3.0).abs() < 1e-9, "{ground}");
        assert!((e4 - ground).abs() < 1e-9);
        // Same value from the contracted state.
        let st = contract_periodic_sites(&ch, 4).unwrap();
        let v = nalgebra::DVector::from_vec(st.amps.clone());
        let e = (v.adjoint() * &h * &v)[(0, 0)].re / 4.0;
        assert!((e - ground).abs() < 1e-9);
        // Open chain: -2(N-1)/3 in total.
        let ext = Extent::Open { n: 5, left: basis(0), right: basis(1) };
        let eo = transfer_matrix_observable(&ch, Observable::EnergyPerSite, 0, 0, &ext).unwrap();
        assert!((eo * 5.0 + 2.0 * 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn symmetry_phases() {
        let ch = aklt_tensors();
        for b in Pauli::ALL {
            let theta = check_symmetry(&ch, b).unwrap();
            let ph = C64::from_polar(1.0, theta);
            assert!((ph - r(1.0)).norm() < 1e-10 || (ph + r(1.0)).norm() < 1e-10, "{b}: {theta}");
        }
        assert!(check_symmetry(&ch, Pauli::I).unwrap().abs() < 1e-12);
    }

    #[test]
    fn inversion() {
        let ch = aklt_tensors();
        assert!(check_inversion(&ch));
        let mut ghz = ch.clone();
        ghz.tensors = vec![
            Mat::from_row_slice(2, 2, &[r(1.0), r(0.0), r(0.0), r(0.0)]),
            Mat::from_row_slice(2, 2, &[r(0.0), r(0.0), r(0.0), r(1.0)]),
        ];
        assert!(!check_inversion(&ghz));
        let mut rng = crate::sim::stream_rng(3, 0);
        let mut noisy = ch.clone();
        for a in &mut noisy.tensors {
            *a += Mat::from_fn(2, 2, |_, _| r(1e-3 * (rng.random::<f64>() - 0.5)));
        }
        assert!(!check_inversion(&noisy));
    }

    #[test]
    fn periodic_qubit_state_roundtrip() {
        let ch = aklt_tensors();
        let sv = contract_periodic(&ch, 3).unwrap();
        let st = contract_periodic_sites(&ch, 3).unwrap();
        let back = st.to_statevector(&ch.encoding).unwrap();
        assert!((fidelity(sv.amplitudes(), back.amplitudes()).unwrap() - 1.0).abs() < 1e-12);
    }
}
