//! Estimators on prepared states and sampled shots: string order, spin-1
//! post-selection, Pauli tomography, memory-qubit spectra and the
//! correlation-length fit.

use std::collections::HashMap;
use std::io::Write;

use num_complex::Complex64 as C64;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    c, mcweeny_purify, partial_trace_pure, r, spectrum, DensityMatrix, Mat, Pauli, Spectrum, MCWEENY_MAX_ITER,
    MCWEENY_TOL,
};
use crate::mps::{MpsChain, SiteEncoding};
use crate::protocol::{
    correct_defects, prepare_fusion, prepare_sequential, projector_success_state, CorrectionMode, MemoryInit,
    MemoryMode, Method, OutcomePolicy, PauliFrame, PreparationResult,
};
use crate::sim::{cumulative, sample_cdf, stream_rng, BellState, Gate, QubitRole, StateVector};

/// Sampled computational-basis readouts of a register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub labels: Vec<QubitRole>,
    /// Bit `k` of each entry is the outcome of qubit `labels[k]`.
    pub bits: Vec<u64>,
    /// Per-shot relabelling, empty when none applies.
    pub frames: Vec<PauliFrame>,
    pub n_sites: usize,
    /// Left and right edge memories, when read out.
    pub edges: Option<(QubitRole, QubitRole)>,
    /// Preparation attempts, including post-selected failures.
    pub attempted: usize,
}

impl ShotRecord {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    fn position(&self, role: QubitRole) -> Result<usize> {
        self.labels.iter().position(|&l| l == role).ok_or_else(|| Error::MissingRole(role.to_string()))
    }

    /// Positions of the two slot qubits of every site.
    fn site_positions(&self) -> Result<Vec<[usize; 2]>> {
        (0..self.n_sites)
            .map(|site| {
                Ok([
                    self.position(QubitRole::Site { site, slot: 0 })?,
                    self.position(QubitRole::Site { site, slot: 1 })?,
                ])
            })
            .collect()
    }

    /// Raw two-bit code of every site in shot `k`, frame applied.
    pub fn site_codes(&self, k: usize) -> Result<Vec<usize>> {
        let pos = self.site_positions()?;
        let b = self.bits[k];
        Ok(pos
            .iter()
            .enumerate()
            .map(|(site, [p0, p1])| {
                let code = ((b >> p0) & 1) as usize | ((((b >> p1) & 1) as usize) << 1);
                match self.frames.get(k) {
                    Some(f) => f.site_code(site, code),
                    None => code,
                }
            })
            .collect())
    }

    /// Edge memory bits `(left, right)` of shot `k`, frame applied.
    pub fn edge_bits(&self, k: usize) -> Result<Option<(usize, usize)>> {
        let Some((l, rr)) = self.edges else { return Ok(None) };
        let (pl, pr) = (self.position(l)?, self.position(rr)?);
        let b = self.bits[k];
        let mut left = ((b >> pl) & 1) as usize;
        if let Some(f) = self.frames.get(k) {
            left = f.memory_bit(left);
        }
        Ok(Some((left, ((b >> pr) & 1) as usize)))
    }

    fn subset(&self, keep: &[usize]) -> ShotRecord {
        ShotRecord {
            labels: self.labels.clone(),
            bits: keep.iter().map(|&k| self.bits[k]).collect(),
            frames: if self.frames.is_empty() { vec![] } else { keep.iter().map(|&k| self.frames[k].clone()).collect() },
            n_sites: self.n_sites,
            edges: self.edges,
            attempted: self.attempted,
        }
    }
}

/// Mean with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub shots: usize,
}

impl Estimate {
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Result<Self> {
        let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
        for x in xs {
            n += 1;
            s += x;
            s2 += x * x;
        }
        if n == 0 {
            return Err(Error::EmptyShotSet);
        }
        let mean = s / n as f64;
        let var = if n > 1 { (s2 - n as f64 * mean * mean).max(0.0) / (n as f64 - 1.0) } else { 0.0 };
        Ok(Estimate { value: mean, stderr: (var / n as f64).sqrt(), shots: n })
    }
}

fn spin_of_code(enc: &SiteEncoding, chain: &MpsChain, code: usize) -> Option<f64> {
    enc.decode(code).map(|m| chain.spin_z[m])
}

fn check_window(i: usize, ell: usize, n: usize) -> Result<()> {
    if ell == 0 || i + ell > n {
        return Err(Error::InvalidArgument(format!("window i={i}, ell={ell} out of range for N={n}")));
    }
    Ok(())
}

/// String-order value of one configuration of spin values.
fn string_value(sz: &[f64], i: usize, ell: usize) -> f64 {
    let j = i + ell - 1;
    if ell == 1 {
        return sz[i] * sz[i];
    }
    let mut v = sz[i] * sz[j];
    for s in &sz[i + 1..j] {
        v *= (std::f64::consts::PI * s).cos();
    }
    v
}

/// Exact `<S^z_i prod exp(i pi S^z_k) S^z_j>` over the site marginal of the
/// prepared state. Configurations containing the encoded singlet are
/// discarded and the remainder renormalised. Frame relabelling is applied.
pub fn string_order_exact(result: &PreparationResult, i: usize, ell: usize) -> Result<f64> {
    let n = result.n_sites;
    check_window(i, ell, n)?;
    let enc = &result.chain.encoding;
    let roles = result.site_roles();
    let pos: Vec<usize> = roles.iter().map(|&q| result.state.position(q)).collect::<Result<_>>()?;
    let q = enc.qubits_per_site;
    let frame = result.frame();
    let (mut num, mut den) = (0.0, 0.0);
    let mut sz = vec![0.0; n];
    'amps: for (idx, a) in result.state.amplitudes().iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        for (site, s) in sz.iter_mut().enumerate() {
            let mut code = 0;
            for slot in 0..q {
                code |= ((idx >> pos[q * site + slot]) & 1) << slot;
            }
            if let Some(f) = frame {
                code = f.site_code(site, code);
            }
            match spin_of_code(enc, &result.chain, code) {
                Some(v) => *s = v,
                None => continue 'amps,
            }
        }
        den += p;
        num += p * string_value(&sz, i, ell);
    }
    if den == 0.0 {
        return Err(Error::EmptyShotSet);
    }
    Ok(num / den)
}

/// Drops shots with an encoded singlet on any site.
pub fn postselect_spin1(shots: &ShotRecord) -> Result<(ShotRecord, f64)> {
    let total = shots.len();
    let mut keep = Vec::with_capacity(total);
    for k in 0..total {
        if !shots.site_codes(k)?.contains(&SiteEncoding::SPIN1_SINGLET) {
            keep.push(k);
        }
    }
    let rejection = if total == 0 { 0.0 } else { 1.0 - keep.len() as f64 / total as f64 };
    Ok((shots.subset(&keep), rejection))
}

/// Drops shots whose total site magnetisation differs from
/// `(s_L + s_R) / 2` with `s = +1` for memory outcome 0 and `-1` for 1.
/// Expects spin-1 post-selected shots.
pub fn boundary_filter(shots: &ShotRecord, chain: &MpsChain) -> Result<(ShotRecord, f64)> {
    let enc = &chain.encoding;
    let total = shots.len();
    let mut keep = Vec::with_capacity(total);
    for k in 0..total {
        let Some((l, rr)) = shots.edge_bits(k)? else {
            keep.push(k);
            continue;
        };
        let codes = shots.site_codes(k)?;
        let mut mz = 0.0;
        let mut valid = true;
        for code in codes {
            match spin_of_code(enc, chain, code) {
                Some(v) => mz += v,
                None => valid = false,
            }
        }
        let sign = |b: usize| if b == 0 { 1.0 } else { -1.0 };
        if valid && (mz - (sign(l) + sign(rr)) / 2.0).abs() < 1e-9 {
            keep.push(k);
        }
    }
    let rejection = if total == 0 { 0.0 } else { 1.0 - keep.len() as f64 / total as f64 };
    Ok((shots.subset(&keep), rejection))
}

/// Shot estimator of the string order. Applies spin-1 post-selection first.
pub fn string_order_shots(shots: &ShotRecord, chain: &MpsChain, i: usize, ell: usize) -> Result<Estimate> {
    check_window(i, ell, shots.n_sites)?;
    let (kept, _) = postselect_spin1(shots)?;
    let mut values = Vec::with_capacity(kept.len());
    for k in 0..kept.len() {
        let sz: Vec<f64> =
            kept.site_codes(k)?.into_iter().map(|c| spin_of_code(&chain.encoding, chain, c).unwrap_or(0.0)).collect();
        values.push(string_value(&sz, i, ell));
    }
    Estimate::from_samples(values)
}

/// Preparation recipe for shot sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepSpec {
    pub method: Method,
    pub n: usize,
    pub memory: MemoryMode,
    pub correction: CorrectionMode,
}

impl PrepSpec {
    pub fn new(method: Method, n: usize) -> Self {
        PrepSpec { method, n, memory: MemoryMode::Single, correction: CorrectionMode::Frame }
    }
}

/// All fusion outcome combinations of an `n`-site fusion preparation, with
/// outcome `k` of fusion `f` at bits `2f..2f+2` of the combination index.
pub fn fusion_combinations(n: usize) -> Vec<Vec<BellState>> {
    let f = n.saturating_sub(1) / 2;
    (0..4usize.pow(f as u32)).map(|c| (0..f).map(|k| BellState::ALL[(c >> (2 * k)) & 3]).collect()).collect()
}

/// Branch of a shot: a prepared pure state plus its relabelling frame.
pub struct Branch {
    pub result: PreparationResult,
    pub probability: f64,
}

/// Every measurement branch of a preparation with its probability. Fusion
/// branches are the Bell-outcome combinations; the projector baseline has a
/// single success branch whose weight is the success probability.
pub fn preparation_branches(spec: &PrepSpec) -> Result<Vec<Branch>> {
    match spec.method {
        Method::Sequential => {
            let result = prepare_sequential(spec.n, spec.memory, &MemoryInit::default())?;
            Ok(vec![Branch { result, probability: 1.0 }])
        }
        Method::Fusion => fusion_combinations(spec.n)
            .into_iter()
            .map(|outs| {
                let raw = prepare_fusion(spec.n, &OutcomePolicy::Forced(outs))?;
                let probability = raw.probability;
                Ok(Branch { result: correct_defects(raw, spec.correction)?, probability })
            })
            .collect(),
        Method::Projector => {
            let result = projector_success_state(spec.n)?;
            let probability = result.probability;
            Ok(vec![Branch { result, probability }])
        }
        Method::SwapFusion => Err(Error::InvalidArgument("shot sampling is not defined for swap-fusion".into())),
    }
}

/// Readout bits of `state` mapped onto `labels` order.
pub(crate) fn remap_bits(state_bits: u64, from: &[usize]) -> u64 {
    from.iter().enumerate().fold(0u64, |acc, (k, &p)| acc | (((state_bits >> p) & 1) << k))
}

/// Samples `shots` full-register readouts. Shot `k` uses the RNG stream
/// `(seed, k)`: first to pick the branch (or the success of a projector
/// trial), then for the bitstring.
pub fn sample_preparation(spec: &PrepSpec, shots: usize, seed: u64) -> Result<ShotRecord> {
    let branches = preparation_branches(spec)?;
    sample_branches(spec, &branches, shots, seed)
}

pub(crate) fn pick_branch(branches: &[Branch], spec: &PrepSpec, rng: &mut ChaCha8Rng) -> Option<usize> {
    if spec.method == Method::Projector {
        let u: f64 = rand::Rng::random(rng);
        return (u < branches[0].probability).then_some(0);
    }
    if branches.len() == 1 {
        return Some(0);
    }
    let cdf = cumulative(&branches.iter().map(|b| b.probability).collect::<Vec<_>>());
    Some(sample_cdf(&cdf, rng))
}

pub(crate) fn record_labels(result: &PreparationResult) -> Vec<QubitRole> {
    let mut labels = result.site_roles();
    labels.extend(result.memories.left);
    labels.extend(result.memories.right);
    labels
}

fn sample_branches(spec: &PrepSpec, branches: &[Branch], shots: usize, seed: u64) -> Result<ShotRecord> {
    let labels = record_labels(&branches[0].result);
    if labels.len() > 64 {
        return Err(Error::InvalidArgument("shot records hold at most 64 qubits".into()));
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..shots as u64).map(|k| stream_rng(seed, k)).collect();
    let picks: Vec<Option<usize>> = rngs.iter_mut().map(|g| pick_branch(branches, spec, g)).collect();
    let mut bits = vec![0u64; shots];
    let mut frames = vec![PauliFrame::default(); shots];
    let framed = branches.iter().any(|b| b.result.frame().is_some());
    for (bi, branch) in branches.iter().enumerate() {
        let members: Vec<usize> = (0..shots).filter(|&k| picks[k] == Some(bi)).collect();
        if members.is_empty() {
            continue;
        }
        let st = &branch.result.state;
        let pos: Vec<usize> = labels.iter().map(|&q| st.position(q)).collect::<Result<_>>()?;
        let cdf = cumulative(&st.amplitudes().iter().map(|a| a.norm_sqr()).collect::<Vec<_>>());
        for k in members {
            let raw = sample_cdf(&cdf, &mut rngs[k]) as u64;
            bits[k] = remap_bits(raw, &pos);
            if let Some(f) = branch.result.frame() {
                frames[k] = f.clone();
            }
        }
    }
    let kept: Vec<usize> = (0..shots).filter(|&k| picks[k].is_some()).collect();
    let result = &branches[0].result;
    Ok(ShotRecord {
        labels,
        bits: kept.iter().map(|&k| bits[k]).collect(),
        frames: if framed { kept.iter().map(|&k| frames[k].clone()).collect() } else { vec![] },
        n_sites: spec.n,
        edges: result.memories.left.zip(result.memories.right),
        attempted: shots,
    })
}

// ---------------------------------------------------------------------------
// Tomography

/// Outcome counts of one Pauli measurement setting (letters X, Y or Z).
#[derive(Debug, Clone, PartialEq)]
pub struct SettingData {
    pub setting: Vec<Pauli>,
    /// Outcome distribution (probabilities or counts), index bit `k` = qubit `k`.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TomographyOptions {
    pub project_spin1: bool,
    pub purify: bool,
}

#[derive(Debug, Clone)]
pub struct TomographyResult {
    /// Linear-inversion estimate (may be unphysical).
    pub raw: Mat,
    pub rho: DensityMatrix,
    /// `Tr(rho_raw rho_pure)`; one when no purification was requested.
    pub likelihood: f64,
    /// Weight removed by the spin-1 projection.
    pub rejection_rate: f64,
    pub purification_iterations: usize,
}

pub fn settings(k: usize) -> Vec<Vec<Pauli>> {
    let letters = [Pauli::X, Pauli::Y, Pauli::Z];
    (0..3usize.pow(k as u32)).map(|mut c| (0..k).map(|_| { let p = letters[c % 3]; c /= 3; p }).collect()).collect()
}

fn setting_label(s: &[Pauli]) -> String {
    s.iter().map(|p| p.label()).collect()
}

/// Rotation taking the eigenbasis of `p` to the computational basis.
fn basis_rotation(p: Pauli, q: usize) -> Option<Gate> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match p {
        Pauli::X => Some(Gate::h(q)),
        // H S^dagger
        Pauli::Y => Some(Gate {
            matrix: Mat::from_row_slice(2, 2, &[r(s), c(0.0, -s), r(s), c(0.0, s)]),
            targets: vec![q],
            tag: "HSdg".into(),
        }),
        _ => None,
    }
}

/// Exact outcome distributions of every Pauli setting on `targets`.
pub fn exact_settings(state: &StateVector, targets: &[usize]) -> Result<Vec<SettingData>> {
    settings(targets.len())
        .into_iter()
        .map(|setting| {
            let mut st = state.clone();
            for (&p, &q) in setting.iter().zip(targets) {
                if let Some(g) = basis_rotation(p, q) {
                    st.apply_gate(&g)?;
                }
            }
            Ok(SettingData { weights: st.probabilities(targets, None)?, setting })
        })
        .collect()
}

/// Multinomial counts drawn by conditional binomials.
pub fn multinomial(probs: &[f64], n: u64, rng: &mut dyn RngCore) -> Vec<f64> {
    let mut left = n;
    let mut mass: f64 = probs.iter().sum();
    let mut out = vec![0.0; probs.len()];
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let x = if i + 1 == probs.len() {
            left
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(0)
        };
        out[i] = x as f64;
        left -= x;
        mass -= p;
    }
    out
}

/// Sampled settings with `per_setting` shots each; setting `s` uses stream
/// `(seed, s)`.
pub fn sampled_settings(state: &StateVector, targets: &[usize], per_setting: u64, seed: u64) -> Result<Vec<SettingData>> {
    let mut data = exact_settings(state, targets)?;
    for (s, d) in data.iter_mut().enumerate() {
        let mut rng = stream_rng(seed, s as u64);
        d.weights = multinomial(&d.weights, per_setting, &mut rng);
    }
    Ok(data)
}

/// `rho = sum_P <P> P / 2^k` from per-setting outcome distributions. Every
/// Pauli string is averaged over all settings that measure it.
pub fn linear_inversion(k: usize, data: &[SettingData]) -> Result<Mat> {
    let mut by_setting: HashMap<Vec<Pauli>, &SettingData> = HashMap::new();
    for d in data {
        if d.setting.len() != k || d.weights.len() != 1 << k {
            return Err(Error::DimensionMismatch { expected: k, found: d.setting.len() });
        }
        by_setting.insert(d.setting.clone(), d);
    }
    for s in settings(k) {
        if !by_setting.contains_key(&s) {
            return Err(Error::IncompleteTomography(setting_label(&s)));
        }
    }
    let dim = 1 << k;
    let mut rho = Mat::zeros(dim, dim);
    for code in 0..4usize.pow(k as u32) {
        let string: Vec<Pauli> = (0..k).map(|q| Pauli::ALL[(code >> (2 * q)) & 3]).collect();
        let (mut sum, mut count) = (0.0, 0usize);
        for s in settings(k) {
            if string.iter().zip(&s).any(|(p, m)| *p != Pauli::I && p != m) {
                continue;
            }
            let d = by_setting[&s];
            let total: f64 = d.weights.iter().sum();
            if total <= 0.0 {
                continue;
            }
            let ev: f64 = d
                .weights
                .iter()
                .enumerate()
                .map(|(o, w)| {
                    let parity = string.iter().enumerate().filter(|(q, p)| **p != Pauli::I && (o >> q) & 1 == 1).count();
                    if parity % 2 == 0 { *w } else { -*w }
                })
                .sum::<f64>()
                / total;
            sum += ev;
            count += 1;
        }
        if count == 0 {
            return Err(Error::IncompleteTomography(setting_label(&string)));
        }
        // Qubit 0 is the least significant index: build the operator with
        // the last qubit as the leftmost Kronecker factor.
        let op = string.iter().rev().fold(Mat::identity(1, 1), |acc, p| crate::linalg::kron(&acc, &p.matrix()));
        rho += op * r(sum / count as f64);
    }
    Ok(rho / r(dim as f64))
}

/// Linear-inversion tomography with optional spin-1 projection (pairs of
/// target positions holding one site each) and McWeeny purification.
pub fn tomography(data: &[SettingData], site_pairs: &[(usize, usize)], options: TomographyOptions) -> Result<TomographyResult> {
    let k = data.first().map(|d| d.setting.len()).ok_or(Error::EmptyShotSet)?;
    let raw = linear_inversion(k, data)?;
    let mut rho = raw.clone();
    let mut rejection_rate = 0.0;
    if options.project_spin1 {
        let dim = 1 << k;
        let keep = |idx: usize| site_pairs.iter().all(|&(a, b)| (idx >> a) & 1 == 0 || (idx >> b) & 1 == 0);
        let proj = Mat::from_fn(dim, dim, |i, j| if i == j && keep(i) { r(1.0) } else { r(0.0) });
        rho = &proj * rho * &proj;
        rejection_rate = 1.0 - crate::linalg::trace(&rho).re;
    }
    let projected = DensityMatrix::from_unnormalized(rho)?;
    let (rho, likelihood, iterations) = if options.purify {
        let p = mcweeny_purify(&projected, MCWEENY_TOL, MCWEENY_MAX_ITER)?;
        let l = crate::linalg::trace(&(&raw * p.rho.matrix())).re;
        (p.rho, l, p.iterations)
    } else {
        (projected, 1.0, 0)
    };
    Ok(TomographyResult { raw, rho, likelihood, rejection_rate, purification_iterations: iterations })
}

// ---------------------------------------------------------------------------
// Memory spectra

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemorySpectrum {
    pub ell: usize,
    pub joint: Spectrum,
    /// Spectra of `rho_{R|L}` for `L = 0, 1`.
    pub conditioned: [Spectrum; 2],
    pub left_probabilities: [f64; 2],
    /// Conditioned eigenvalues (descending) averaged with weights `p(L)`.
    pub averaged: Vec<f64>,
}

/// `rho_{R|L}` blocks from a two-qubit `rho_LR` (qubit 0 = L).
pub fn conditioned_on_left(rho: &Mat) -> Result<([DensityMatrix; 2], [f64; 2])> {
    let mut blocks = Vec::new();
    let mut probs = [0.0; 2];
    for (l, p) in probs.iter_mut().enumerate() {
        let m = Mat::from_fn(2, 2, |a, b| rho[(l + 2 * a, l + 2 * b)]);
        *p = crate::linalg::trace(&m).re;
        blocks.push(DensityMatrix::from_unnormalized(m)?);
    }
    let [a, b]: [DensityMatrix; 2] = blocks.try_into().expect("two blocks");
    Ok(([a, b], probs))
}

pub fn memory_spectrum_from(ell: usize, rho_lr: &Mat) -> Result<MemorySpectrum> {
    let joint = crate::linalg::spectrum_of_matrix(rho_lr);
    let (cond, probs) = conditioned_on_left(rho_lr)?;
    let specs = [spectrum(&cond[0]), spectrum(&cond[1])];
    let averaged = (0..2).map(|i| probs[0] * specs[0].eigenvalues[i] + probs[1] * specs[1].eigenvalues[i]).collect();
    Ok(MemorySpectrum { ell, joint, conditioned: specs, left_probabilities: probs, averaged })
}

/// Edge-memory reduced state `rho_LR` (qubit 0 = left memory).
pub fn memory_state(result: &PreparationResult) -> Result<DensityMatrix> {
    let (l, rr) = match (result.memories.left, result.memories.right, result.boundary) {
        (Some(l), Some(rr), None) => (l, rr),
        _ => return Err(Error::InvalidArgument("edge memories already consumed".into())),
    };
    let st = &result.state;
    partial_trace_pure(st.amplitudes(), &[st.position(l)?, st.position(rr)?], st.num_qubits())
}

/// Defect-free chain of `ell` sites with its memories still open.
pub fn prepare_for_spectrum(method: Method, ell: usize) -> Result<PreparationResult> {
    match method {
        Method::Sequential => prepare_sequential(ell, MemoryMode::Single, &MemoryInit::default()),
        Method::Fusion => correct_defects(prepare_fusion(ell, &OutcomePolicy::seeded(ell as u64))?, CorrectionMode::Unitary),
        Method::Projector => projector_success_state(ell),
        Method::SwapFusion => Err(Error::InvalidArgument("spectrum is not defined for swap-fusion".into())),
    }
}

/// Exact memory spectra for a chain of `ell` sites.
pub fn memory_spectrum(method: Method, ell: usize) -> Result<MemorySpectrum> {
    let result = prepare_for_spectrum(method, ell)?;
    memory_spectrum_from(ell, memory_state(&result)?.matrix())
}

/// Memory spectra from simulated tomography of the two edge memories.
pub fn memory_spectrum_shots(method: Method, ell: usize, per_setting: u64, seed: u64) -> Result<MemorySpectrum> {
    let result = prepare_for_spectrum(method, ell)?;
    let st = &result.state;
    let (l, rr) = (result.memories.left.expect("open memory"), result.memories.right.expect("open memory"));
    let targets = [st.position(l)?, st.position(rr)?];
    let data = sampled_settings(st, &targets, per_setting, seed)?;
    let tomo = tomography(&data, &[], TomographyOptions::default())?;
    memory_spectrum_from(ell, tomo.rho.matrix())
}

// ---------------------------------------------------------------------------
// Correlation-length fit

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub xi: f64,
    pub amplitude: f64,
    /// Sum of squared residuals.
    pub residual: f64,
}

/// Least-squares fit of `lambda = 1/2 +- A exp(-ell / xi)` over both
/// branches, the branch of each point given by the sign of `lambda - 1/2`.
pub fn fit_correlation_length(points: &[(f64, f64)]) -> Result<FitResult> {
    let mut ells: Vec<f64> = points.iter().map(|p| p.0).collect();
    ells.sort_by(f64::total_cmp);
    ells.dedup();
    if ells.len() < 3 {
        return Err(Error::Unidentifiable(format!("{} distinct ell values, need 3", ells.len())));
    }
    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(ell, lam)| {
            let d = lam - 0.5;
            (ell, d.abs(), if d < 0.0 { -1.0 } else { 1.0 })
        })
        .collect();
    let logs: Vec<(f64, f64)> = data.iter().filter(|p| p.1 > 0.0).map(|p| (p.0, p.1.ln())).collect();
    if logs.len() < 2 || data.iter().all(|p| p.1 == 0.0) {
        return Err(Error::Unidentifiable("all eigenvalues equal 1/2".into()));
    }
    // Log-linear start, then damped Gauss-Newton on (ln A, 1/xi).
    let n = logs.len() as f64;
    let (sx, sy) = logs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Unidentifiable("nonzero deviations at a single ell".into()));
    }
    let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let mut theta = [my - slope * mx, -slope];
    let cost = |t: &[f64; 2]| -> f64 { data.iter().map(|&(l, d, _)| (d - (t[0] - t[1] * l).exp()).powi(2)).sum() };
    let mut lambda = 1e-3;
    let mut current = cost(&theta);
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for &(l, d, _) in &data {
            let f = (theta[0] - theta[1] * l).exp();
            let jac = [f, -l * f];
            let res = d - f;
            for a in 0..2 {
                jtr[a] += jac[a] * res;
                for b in 0..2 {
                    jtj[a][b] += jac[a] * jac[b];
                }
            }
        }
        let a00 = jtj[0][0] * (1.0 + lambda);
        let a11 = jtj[1][1] * (1.0 + lambda);
        let det = a00 * a11 - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let step = [(a11 * jtr[0] - jtj[0][1] * jtr[1]) / det, (a00 * jtr[1] - jtj[1][0] * jtr[0]) / det];
        let trial = [theta[0] + step[0], theta[1] + step[1]];
        let c_trial = cost(&trial);
        if c_trial <= current {
            let done = (current - c_trial) <= 1e-30 + 1e-15 * current && step[0].abs() + step[1].abs() < 1e-14;
            theta = trial;
            current = c_trial;
            lambda = (lambda * 0.3).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    if theta[1] <= 0.0 || !theta[1].is_finite() {
        return Err(Error::Unidentifiable(format!("non-decaying fit, 1/xi = {}", theta[1])));
    }
    Ok(FitResult { xi: 1.0 / theta[1], amplitude: theta[0].exp(), residual: current })
}

// ---------------------------------------------------------------------------
// CSV

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringOrderRow {
    pub method: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub i: usize,
    #[serde(rename = "ℓ")]
    pub ell: usize,
    pub value: f64,
    pub stderr: f64,
    pub shots: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub method: String,
    #[serde(rename = "ℓ")]
    pub ell: usize,
    pub eigenvalue_index: usize,
    pub lambda: f64,
    pub minus_ln_lambda: f64,
}

pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in rows {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn spectrum_rows(method: &str, spec: &MemorySpectrum) -> Vec<SpectrumRow> {
    spec.averaged
        .iter()
        .enumerate()
        .map(|(k, &lambda)| SpectrumRow {
            method: method.to_string(),
            ell: spec.ell,
            eigenvalue_index: k,
            lambda,
            minus_ln_lambda: if lambda > 0.0 { -lambda.ln() } else { f64::INFINITY },
        })
        .collect()
}

/// Complex helper used by tests and examples.
pub fn expectation(rho: &DensityMatrix, op: &Mat) -> C64 {
    rho.expectation(op)
}
