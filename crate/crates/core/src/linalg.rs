//! Dense complex linear algebra on small Hilbert spaces.
//!
//! Everything here works on `nalgebra` dense matrices of `Complex64`. Qubit 0
//! is always the least significant bit of a basis index.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<C64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues below this are treated as zero before taking logarithms.
pub const EIGEN_CLIP: f64 = 1e-12;

pub const MCWEENY_TOL: f64 = 1e-12;
pub const MCWEENY_MAX_ITER: usize = 200;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn mat2(a: [[C64; 2]; 2]) -> Mat {
    Mat::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]])
}

pub fn from_rows(rows: &[Vec<C64>]) -> Mat {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

/// Kronecker product `a ⊗ b`. With LSB-first qubit ordering, `b` acts on the
/// low-order qubits.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn dagger(a: &Mat) -> Mat {
    a.adjoint()
}

pub fn frobenius(a: &Mat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn hermiticity_error(a: &Mat) -> f64 {
    frobenius(&(a - a.adjoint()))
}

pub fn unitarity_error(u: &Mat) -> f64 {
    let n = u.nrows();
    frobenius(&(u.adjoint() * u - Mat::identity(n, n)))
}

pub fn commutator(a: &Mat, b: &Mat) -> Mat {
    a * b - b * a
}

pub fn trace(a: &Mat) -> C64 {
    a.diagonal().iter().sum()
}

/// Single-qubit Pauli labels. Products are tracked with phases stripped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Mat {
        let o = r(0.0);
        let l = r(1.0);
        let i = c(0.0, 1.0);
        match self {
            Pauli::I => mat2([[l, o], [o, l]]),
            Pauli::X => mat2([[o, l], [l, o]]),
            Pauli::Y => mat2([[o, -i], [i, o]]),
            Pauli::Z => mat2([[l, o], [o, -l]]),
        }
    }

    /// (x, z) bits of the symplectic representation.
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    /// Product up to phase.
    pub fn mul(self, other: Pauli) -> Pauli {
        let (x1, z1) = self.bits();
        let (x2, z2) = other.bits();
        Pauli::from_bits(x1 ^ x2, z1 ^ z2)
    }

    pub fn anticommutes(self, other: Pauli) -> bool {
        let (x1, z1) = self.bits();
        let (x2, z2) = other.bits();
        (x1 & z2) ^ (z1 & x2)
    }

    /// True when the Pauli flips computational-basis states.
    pub fn flips_z(self) -> bool {
        self.bits().0
    }

    pub fn label(self) -> &'static str {
        match self {
            Pauli::I => "I",
            Pauli::X => "X",
            Pauli::Y => "Y",
            Pauli::Z => "Z",
        }
    }
}

impl std::fmt::Display for Pauli {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A density operator on `log2(dim)` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: Mat,
}

impl DensityMatrix {
    /// Wraps a matrix after checking the Hermitian and unit-trace invariants.
    /// Small negative eigenvalues are tolerated; reconstructed states may be
    /// slightly unphysical.
    pub fn new(mat: Mat) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch { expected: mat.nrows(), found: mat.ncols() });
        }
        let herm = hermiticity_error(&mat);
        if herm > HERMITIAN_TOL * (1.0 + frobenius(&mat)) {
            return Err(Error::NotHermitian(herm));
        }
        let tr = trace(&mat);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidArgument(format!("density matrix trace {tr} != 1")));
        }
        Ok(Self { mat })
    }

    /// Hermitian-symmetrises and renormalises the trace. Used for noisy
    /// reconstructions that only approximately satisfy the invariants.
    pub fn from_unnormalized(mat: Mat) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch { expected: mat.nrows(), found: mat.ncols() });
        }
        let h = (&mat + mat.adjoint()) * r(0.5);
        let tr = trace(&h).re;
        if tr.abs() < 1e-300 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self { mat: h / r(tr) })
    }

    pub fn from_pure(psi: &[C64]) -> Self {
        let n = psi.len();
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let mat = Mat::from_fn(n, n, |i, j| psi[i] * psi[j].conj() / norm);
        Self { mat }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { mat: Mat::identity(dim, dim) / r(dim as f64) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn num_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &Mat {
        &self.mat
    }

    pub fn into_matrix(self) -> Mat {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        trace(&self.mat)
    }

    pub fn purity(&self) -> f64 {
        trace(&(&self.mat * &self.mat)).re
    }

    pub fn expectation(&self, op: &Mat) -> C64 {
        trace(&(&self.mat * op))
    }

    /// Hermitian eigendecomposition, eigenvalues sorted descending.
    pub fn eigh(&self) -> (Vec<f64>, Mat) {
        eigh(&self.mat)
    }
}

/// Hermitian eigendecomposition with eigenvalues sorted descending; columns of
/// the returned matrix are the matching eigenvectors.
pub fn eigh(a: &Mat) -> (Vec<f64>, Mat) {
    let eig = a.clone().symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(n, n, |row, col| eig.eigenvectors[(row, order[col])]);
    (values, vectors)
}

/// Principal square root of a positive semidefinite Hermitian matrix;
/// negative eigenvalues are clipped to zero.
pub fn sqrt_psd(a: &Mat) -> Mat {
    let (vals, vecs) = eigh(a);
    let d = Mat::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| r(v.max(0.0).sqrt())),
    ));
    &vecs * d * vecs.adjoint()
}

/// Either a pure state vector or a density matrix.
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Pure(&'a [C64]),
    Mixed(&'a DensityMatrix),
}

impl StateRef<'_> {
    fn dim(&self) -> usize {
        match self {
            StateRef::Pure(v) => v.len(),
            StateRef::Mixed(m) => m.dim(),
        }
    }
}

impl<'a> From<&'a [C64]> for StateRef<'a> {
    fn from(v: &'a [C64]) -> Self {
        StateRef::Pure(v)
    }
}

impl<'a> From<&'a Vec<C64>> for StateRef<'a> {
    fn from(v: &'a Vec<C64>) -> Self {
        StateRef::Pure(v.as_slice())
    }
}

impl<'a> From<&'a DensityMatrix> for StateRef<'a> {
    fn from(m: &'a DensityMatrix) -> Self {
        StateRef::Mixed(m)
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(a) b sqrt(a)))^2`; `|<a|b>|^2` for two pure
/// states. Inputs are normalised first, so global phases and scales drop out.
pub fn fidelity<'a, 'b>(a: impl Into<StateRef<'a>>, b: impl Into<StateRef<'b>>) -> Result<f64> {
    let (a, b) = (a.into(), b.into());
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let f = match (a, b) {
        (StateRef::Pure(x), StateRef::Pure(y)) => inner(x, y).norm_sqr() / (norm_sqr(x) * norm_sqr(y)),
        (StateRef::Pure(x), StateRef::Mixed(m)) | (StateRef::Mixed(m), StateRef::Pure(x)) => {
            let v = nalgebra::DVector::from_column_slice(x);
            (v.adjoint() * m.matrix() * &v)[(0, 0)].re / norm_sqr(x)
        }
        (StateRef::Mixed(x), StateRef::Mixed(y)) => {
            let s = sqrt_psd(x.matrix());
            let inner = &s * y.matrix() * &s;
            let (vals, _) = eigh(&inner);
            let t: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
            t * t
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

/// Result of McWeeny purification.
#[derive(Debug, Clone)]
pub struct Purification {
    pub rho: DensityMatrix,
    pub iterations: usize,
    /// True when the iteration converged to a rank-1 projector.
    pub rank_one: bool,
}

/// Iterates `rho -> 3 rho^2 - 2 rho^3` (trace renormalised after each step)
/// until `|rho^2 - rho|_F < tol`. Eigenvalues above 1/2 are driven to one and
/// the rest to zero; the eigenvectors never move.
pub fn mcweeny_purify(rho: &DensityMatrix, tol: f64, max_iter: usize) -> Result<Purification> {
    let herm = hermiticity_error(rho.matrix());
    if herm > HERMITIAN_TOL * (1.0 + frobenius(rho.matrix())) {
        return Err(Error::NotHermitian(herm));
    }
    let normalize = |m: Mat| {
        let tr = trace(&m).re;
        m / r(tr)
    };
    let mut cur = normalize(rho.matrix().clone());
    let idempotency = |m: &Mat| frobenius(&(m * m - m));
    let initial = idempotency(&cur);
    let mut err = initial;
    let mut iterations = 0;
    while err >= tol {
        if iterations == max_iter {
            if err < initial {
                break;
            }
            return Err(Error::PurificationStalled(max_iter));
        }
        let sq = &cur * &cur;
        let cube = &sq * &cur;
        let next = normalize(sq * r(3.0) - cube * r(2.0));
        let step = frobenius(&(&next - &cur));
        cur = (&next + next.adjoint()) * r(0.5);
        iterations += 1;
        err = idempotency(&cur);
        if step < tol * 1e-3 {
            // Higher-rank fixed point, e.g. degenerate top eigenvalues.
            break;
        }
    }
    let rank_one = err < tol.max(1e-9) && (trace(&(&cur * &cur)).re - 1.0).abs() < 1e-9;
    Ok(Purification { rho: DensityMatrix { mat: cur }, iterations, rank_one })
}

fn check_keep(keep: &[usize], n: usize) -> Result<()> {
    for (i, &q) in keep.iter().enumerate() {
        if q >= n {
            return Err(Error::QubitOutOfRange { index: q, n });
        }
        if keep[..i].contains(&q) {
            return Err(Error::RepeatedQubit(q));
        }
    }
    Ok(())
}

/// Splits a basis index into (kept index, traced index). Kept qubit `k` of the
/// output is `keep[k]`.
fn split_index(idx: usize, keep: &[usize], rest: &[usize]) -> (usize, usize) {
    let mut a = 0;
    for (k, &q) in keep.iter().enumerate() {
        a |= ((idx >> q) & 1) << k;
    }
    let mut b = 0;
    for (k, &q) in rest.iter().enumerate() {
        b |= ((idx >> q) & 1) << k;
    }
    (a, b)
}

fn complement(keep: &[usize], n: usize) -> Vec<usize> {
    (0..n).filter(|q| !keep.contains(q)).collect()
}

/// Reduced density matrix on `keep` (in the given order) of an `n`-qubit state.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize], n: usize) -> Result<DensityMatrix> {
    if rho.dim() != 1 << n {
        return Err(Error::DimensionMismatch { expected: 1 << n, found: rho.dim() });
    }
    check_keep(keep, n)?;
    let rest = complement(keep, n);
    let dk = 1 << keep.len();
    let mut out = Mat::zeros(dk, dk);
    let m = rho.matrix();
    for i in 0..rho.dim() {
        let (ai, bi) = split_index(i, keep, &rest);
        for j in 0..rho.dim() {
            let (aj, bj) = split_index(j, keep, &rest);
            if bi == bj {
                out[(ai, aj)] += m[(i, j)];
            }
        }
    }
    Ok(DensityMatrix { mat: out })
}

/// Reduced density matrix of a pure state without forming `|psi><psi|`.
pub fn partial_trace_pure(psi: &[C64], keep: &[usize], n: usize) -> Result<DensityMatrix> {
    if psi.len() != 1 << n {
        return Err(Error::DimensionMismatch { expected: 1 << n, found: psi.len() });
    }
    check_keep(keep, n)?;
    let rest = complement(keep, n);
    let dk = 1 << keep.len();
    let dr = 1 << rest.len();
    // psi reshaped as a dk x dr matrix; rho = M M^dagger.
    let mut m = Mat::zeros(dk, dr);
    for (idx, amp) in psi.iter().enumerate() {
        let (a, b) = split_index(idx, keep, &rest);
        m[(a, b)] = *amp;
    }
    let rho = &m * m.adjoint();
    let tr = trace(&rho).re;
    Ok(DensityMatrix { mat: rho / r(tr) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Descending, clipped to [0, 1].
    pub eigenvalues: Vec<f64>,
    /// `-ln(lambda)` for every eigenvalue above the clip threshold.
    pub entanglement_levels: Vec<f64>,
    /// Von Neumann entropy in bits.
    pub entropy_base2: f64,
}

pub fn spectrum(rho: &DensityMatrix) -> Spectrum {
    spectrum_of_matrix(rho.matrix())
}

pub fn spectrum_of_matrix(m: &Mat) -> Spectrum {
    let (vals, _) = eigh(m);
    let eigenvalues: Vec<f64> = vals.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let kept: Vec<f64> = eigenvalues.iter().copied().filter(|&v| v > EIGEN_CLIP).collect();
    let entanglement_levels = kept.iter().map(|v| -v.ln()).collect();
    let entropy_base2 = -kept.iter().map(|v| v * v.log2()).sum::<f64>();
    Spectrum { eigenvalues, entanglement_levels, entropy_base2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ket(v: &[f64]) -> Vec<C64> {
        v.iter().map(|&x| r(x)).collect()
    }

    fn random_state(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<C64> = (0..1 << n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let nrm = norm_sqr(&v).sqrt();
        v.iter_mut().for_each(|z| *z /= nrm);
        v
    }

    #[test]
    fn fidelity_basic_cases() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let zero = ket(&[1.0, 0.0]);
        let one = ket(&[0.0, 1.0]);
        let plus = ket(&[s, s]);
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert!(fidelity(&zero, &one).unwrap().abs() < 1e-15);
        assert!((fidelity(&plus, &zero).unwrap() - 0.5).abs() < 1e-15);
        let rho = DensityMatrix::from_pure(&plus);
        assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-10);
        assert!((fidelity(&rho, &zero).unwrap() - 0.5).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!((fidelity(&mixed, &DensityMatrix::from_pure(&zero)).unwrap() - 0.5).abs() < 1e-10);
        assert!(matches!(
            fidelity(&zero, &ket(&[1.0, 0.0, 0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fidelity_is_phase_invariant_and_symmetric() {
        let a = random_state(3, 1);
        let b = random_state(3, 2);
        let phased: Vec<C64> = a.iter().map(|z| z * C64::from_polar(1.0, 0.7)).collect();
        assert!((fidelity(&a, &phased).unwrap() - 1.0).abs() < 1e-12);
        let ab = fidelity(&a, &b).unwrap();
        let ba = fidelity(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-14);
        let ra = DensityMatrix::from_pure(&a);
        let rb = DensityMatrix::from_pure(&b);
        assert!((fidelity(&ra, &rb).unwrap() - ab).abs() < 1e-8);
    }

    #[test]
    fn mcweeny_fixed_points() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let pure = DensityMatrix::from_pure(&ket(&[s, s]));
        let p = mcweeny_purify(&pure, MCWEENY_TOL, MCWEENY_MAX_ITER).unwrap();
        assert_eq!(p.iterations, 0);
        assert!(p.rank_one);

        let mixed = DensityMatrix::maximally_mixed(2);
        let p = mcweeny_purify(&mixed, MCWEENY_TOL, MCWEENY_MAX_ITER).unwrap();
        assert!(!p.rank_one);
        assert!(frobenius(&(p.rho.matrix() - mixed.matrix())) < 1e-14);
    }

    #[test]
    fn mcweeny_purifies_biased_mixture() {
        // Scalar oracle: iterate x -> 3x^2 - 2x^3 with renormalisation.
        let (mut a, mut b) = (0.9f64, 0.1f64);
        let mut steps = 0;
        while (a * a - a).hypot(b * b - b) >= MCWEENY_TOL {
            let (na, nb) = (3.0 * a * a - 2.0 * a * a * a, 3.0 * b * b - 2.0 * b * b * b);
            a = na / (na + nb);
            b = nb / (na + nb);
            steps += 1;
        }
        let rho = DensityMatrix::new(mat2([[r(0.9), r(0.0)], [r(0.0), r(0.1)]])).unwrap();
        let p = mcweeny_purify(&rho, MCWEENY_TOL, MCWEENY_MAX_ITER).unwrap();
        assert!(p.rank_one);
        assert_eq!(p.iterations, steps);
        assert!((p.rho.matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(p.rho.matrix()[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn mcweeny_rejects_non_hermitian() {
        let m = mat2([[r(0.5), r(0.3)], [r(0.0), r(0.5)]]);
        let rho = DensityMatrix { mat: m };
        assert!(matches!(mcweeny_purify(&rho, 1e-12, 10), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn partial_trace_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // |0> on qubit 0, |+> on qubit 1: index = q0 + 2 q1.
        let prod = ket(&[s, 0.0, s, 0.0]);
        let red = partial_trace(&DensityMatrix::from_pure(&prod), &[1], 2).unwrap();
        let expect = DensityMatrix::from_pure(&ket(&[s, s]));
        assert!(frobenius(&(red.matrix() - expect.matrix())) < 1e-14);

        let bell = ket(&[s, 0.0, 0.0, s]);
        for q in 0..2 {
            let red = partial_trace(&DensityMatrix::from_pure(&bell), &[q], 2).unwrap();
            assert!(frobenius(&(red.matrix() - DensityMatrix::maximally_mixed(2).matrix())) < 1e-14);
        }
        assert!(matches!(
            partial_trace(&DensityMatrix::from_pure(&bell), &[2], 2),
            Err(Error::QubitOutOfRange { .. })
        ));
    }

    #[test]
    fn partial_trace_matches_index_sum() {
        let psi = random_state(3, 11);
        let rho = DensityMatrix::from_pure(&psi);
        let red = partial_trace(&rho, &[0, 2], 3).unwrap();
        // Brute force: rho_red[(a0 a2),(b0 b2)] = sum_x psi[a0,x,a2] conj(psi[b0,x,b2]).
        let mut oracle = Mat::zeros(4, 4);
        for a0 in 0..2 {
            for a2 in 0..2 {
                for b0 in 0..2 {
                    for b2 in 0..2 {
                        for x in 0..2 {
                            let i = a0 | (x << 1) | (a2 << 2);
                            let j = b0 | (x << 1) | (b2 << 2);
                            oracle[(a0 | (a2 << 1), b0 | (b2 << 1))] += psi[i] * psi[j].conj();
                        }
                    }
                }
            }
        }
        assert!(frobenius(&(red.matrix() - &oracle)) < 1e-12);
        let fast = partial_trace_pure(&psi, &[0, 2], 3).unwrap();
        assert!(frobenius(&(fast.matrix() - &oracle)) < 1e-12);
    }

    #[test]
    fn spectrum_examples() {
        let sp = spectrum(&DensityMatrix::maximally_mixed(2));
        assert!((sp.eigenvalues[0] - 0.5).abs() < 1e-14 && (sp.eigenvalues[1] - 0.5).abs() < 1e-14);
        assert!((sp.entropy_base2 - 1.0).abs() < 1e-12);
        let sp = spectrum(&DensityMatrix::from_pure(&ket(&[0.6, 0.8])));
        assert!((sp.eigenvalues[0] - 1.0).abs() < 1e-12 && sp.eigenvalues[1].abs() < 1e-12);
        assert!(sp.entropy_base2.abs() < 1e-10);
        assert_eq!(sp.entanglement_levels.len(), 1);
    }

    #[test]
    fn pauli_algebra() {
        for a in Pauli::ALL {
            for b in Pauli::ALL {
                let prod = a.matrix() * b.matrix();
                let label = a.mul(b).matrix();
                // prod = phase * label
                let ov = trace(&(label.adjoint() * &prod)) / r(2.0);
                assert!((ov.norm() - 1.0).abs() < 1e-14, "{a}{b}");
                let anti = frobenius(&(&prod + b.matrix() * a.matrix())) < 1e-14;
                assert_eq!(anti, a.anticommutes(b));
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn purification_commutes_with_input(seed in 0u64..1000, w in 0.55f64..0.95) {
                let psi = random_state(2, seed);
                let phi = random_state(2, seed + 7);
                let m = DensityMatrix::from_pure(&psi).matrix() * r(w)
                    + DensityMatrix::from_pure(&phi).matrix() * r(1.0 - w);
                let rho = DensityMatrix::from_unnormalized(m).unwrap();
                let out = mcweeny_purify(&rho, MCWEENY_TOL, MCWEENY_MAX_ITER).unwrap();
                prop_assert!(frobenius(&commutator(rho.matrix(), out.rho.matrix())) < 1e-9);
            }

            #[test]
            fn partial_trace_preserves_trace(seed in 0u64..1000, mask in 1usize..15) {
                let psi = random_state(4, seed);
                let keep: Vec<usize> = (0..4).filter(|q| mask >> q & 1 == 1).collect();
                let red = partial_trace_pure(&psi, &keep, 4).unwrap();
                prop_assert!((red.trace().re - 1.0).abs() < 1e-10);
                prop_assert!(hermiticity_error(red.matrix()) < 1e-12);
            }

            #[test]
            fn schmidt_symmetry(seed in 0u64..1000, mask in 1usize..15) {
                let psi = random_state(4, seed);
                let keep: Vec<usize> = (0..4).filter(|q| mask >> q & 1 == 1).collect();
                let rest: Vec<usize> = (0..4).filter(|q| mask >> q & 1 == 0).collect();
                let a = spectrum(&partial_trace_pure(&psi, &keep, 4).unwrap());
                let b = spectrum(&partial_trace_pure(&psi, &rest, 4).unwrap());
                prop_assert!((a.entropy_base2 - b.entropy_base2).abs() < 1e-9);
            }
        }
    }
}
