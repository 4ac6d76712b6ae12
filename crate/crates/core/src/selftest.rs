//! End-to-end checks of the library, one per acceptance criterion. Shared by
//! the `selftest` subcommand and the acceptance test target.

use std::time::Instant;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{c, commutator, frobenius, inner, mcweeny_purify, r, DensityMatrix, Mat, Pauli};
use crate::mps::{
    aklt_tensors, check_inversion, check_symmetry, check_symmetry_with, contract_open_inserted, contract_open_sites,
    singlet_matrix, transfer_matrix_observable, Extent, Observable,
};
use crate::noise::{
    apply_confusion, comparison_model, exact_site_distribution, fit_decay_length, flip_confusion, parallel_map,
    readout_mitigate, run_noisy, string_order_from_distribution, string_order_profile,
};
use crate::observables::{
    fit_correlation_length, fusion_combinations, memory_spectrum, preparation_branches, sample_preparation,
    string_order_exact, string_order_shots, PrepSpec,
};
use crate::protocol::{
    boundary_probabilities, correct_defects, enforce_boundary, fidelity_to_reference, prepare_fusion,
    prepare_projector_baseline, prepare_sequential, BoundaryTarget, CorrectionMode, MemoryInit, MemoryMode, Method,
    OutcomePolicy,
};
use crate::sim::{stream_rng, BellState};
use crate::teleport::{canonical_targets, teleport, teleport_prepared, Cartesian, SitePolicy};
use crate::variants::{
    cluster_pair_symmetry, pair_tensors, prepare_fusion_variant, variant_fidelity, variant_tensors, VariantKind,
    VariantLayout,
};

/// Outcome of one criterion.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{:>2}] {}: {} ({:.1} s)", self.id, self.name, self.detail, self.seconds)
    }
}

pub const CRITERIA: [&str; 12] = [
    "fusion determinism",
    "constant depth",
    "string order",
    "correlation length",
    "entanglement spectrum structure",
    "bell outcome table",
    "symmetry relations",
    "projector baseline",
    "teleportation",
    "variants",
    "noise qualitative",
    "mcweeny purification",
];

const SEED: u64 = 20_240_601;

type Check = (bool, String);

/// Runs criterion `id` (1-based). Library errors count as failures.
pub fn run_criterion(id: usize) -> Result<CriterionOutcome> {
    let name = *CRITERIA.get(id.wrapping_sub(1)).ok_or_else(|| Error::InvalidArgument(format!("no criterion {id}")))?;
    let start = Instant::now();
    let res = match id {
        1 => fusion_determinism(),
        2 => constant_depth(),
        3 => string_order(),
        4 => correlation_length(),
        5 => spectrum_structure(),
        6 => bell_table(),
        7 => symmetry_relations(),
        8 => projector_baseline(),
        9 => teleportation(),
        10 => variants(),
        11 => noise_qualitative(),
        _ => mcweeny(),
    };
    let (passed, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(CriterionOutcome { id, name, passed, detail, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_all() -> Vec<CriterionOutcome> {
    (1..=CRITERIA.len()).map(|id| run_criterion(id).expect("valid id")).collect()
}

fn pinned(res: &crate::protocol::PreparationResult) -> Result<Vec<crate::protocol::PreparationResult>> {
    let p = boundary_probabilities(res)?;
    let mut out = Vec::new();
    for (l, rr) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        if p[l][rr] > 1e-12 {
            out.push(enforce_boundary(res.clone(), BoundaryTarget::Outcomes(l, rr))?);
        }
    }
    Ok(out)
}

fn fusion_determinism() -> Result<Check> {
    let mut worst: f64 = 1.0;
    let mut cases = 0;
    for n in 2..=6 {
        for outs in fusion_combinations(n) {
            let res = correct_defects(prepare_fusion(n, &OutcomePolicy::Forced(outs))?, CorrectionMode::Unitary)?;
            for p in pinned(&res)? {
                worst = worst.min(fidelity_to_reference(&p)?);
                cases += 1;
            }
        }
    }
    Ok((worst >= 1.0 - 1e-10, format!("{cases} boundary states, min fidelity 1 - {:.1e}", 1.0 - worst)))
}

fn constant_depth() -> Result<Check> {
    let fusion: Vec<usize> =
        (2..=8).map(|n| prepare_fusion(n, &OutcomePolicy::seeded(n as u64)).map(|r| r.depth())).collect::<Result<_>>()?;
    let seq: Vec<usize> = (2..=8)
        .map(|n| prepare_sequential(n, MemoryMode::Single, &MemoryInit::default()).map(|r| r.depth()))
        .collect::<Result<_>>()?;
    let ok = fusion.iter().all(|&d| d == fusion[0]) && seq.windows(2).all(|w| w[1] > w[0]);
    Ok((ok, format!("fusion depths {fusion:?}, sequential depths {seq:?}")))
}

fn string_order() -> Result<Check> {
    let ch = aklt_tensors();
    let target = -4.0 / 9.0;
    let mut inf_err: f64 = 0.0;
    for ell in 2..=12 {
        let v = transfer_matrix_observable(&ch, Observable::StringOrder, 0, ell, &Extent::Infinite)?;
        inf_err = inf_err.max((v - target).abs());
    }
    let st = contract_open_sites(&ch, &[r(1.0), r(0.0)], &[r(0.0), r(1.0)], 14)?;
    let v14 = st.string_order(&ch, 3, 8)?;
    let mut ok = inf_err <= 1e-12 && (v14 - target).abs() <= 2e-3;
    let mut detail = format!("infinite |err| {inf_err:.1e}, N=14 window {v14:.5}");
    for method in [Method::Sequential, Method::Fusion] {
        let spec = PrepSpec::new(method, 6);
        let shots = sample_preparation(&spec, 100_000, SEED)?;
        let est = string_order_shots(&shots, &ch, 0, 6)?;
        let exact: f64 = preparation_branches(&spec)?
            .iter()
            .map(|b| string_order_exact(&b.result, 0, 6).map(|v| b.probability * v))
            .sum::<Result<f64>>()?;
        let z = (est.value - exact).abs() / est.stderr;
        ok &= z <= 4.0;
        detail.push_str(&format!(", {} N=6 {:.4}±{:.4} vs {exact:.4} ({z:.2} SE)", method.tag(), est.value, est.stderr));
    }
    Ok((ok, detail))
}

fn correlation_length() -> Result<Check> {
    let mut points = Vec::new();
    for ell in 1..=8 {
        let s = memory_spectrum(Method::Fusion, ell)?;
        points.extend(s.averaged.iter().map(|&v| (ell as f64, v)));
    }
    let fit = fit_correlation_length(&points)?;
    let xi = 1.0 / 3f64.ln();
    let rel = (fit.xi - xi).abs() / xi;
    Ok((rel <= 5e-3, format!("xi = {:.5} (relative error {rel:.1e})", fit.xi)))
}

/// `rho_LR` of `(A...A Lambda)_{lr}` over `ell` sites by iterating the
/// transfer channel on `Lambda |r><r'| Lambda^dagger`. Index `l + 2 r`.
fn channel_memory_state(ell: usize) -> Mat {
    let ch = aklt_tensors();
    let lam = MemoryInit::default().lambda;
    let mut rho = Mat::zeros(4, 4);
    for rr in 0..2 {
        for rp in 0..2 {
            let mut x = lam.column(rr) * lam.column(rp).adjoint();
            for _ in 0..ell {
                x = ch.channel(&x);
            }
            for l in 0..2 {
                for lp in 0..2 {
                    rho[(l + 2 * rr, lp + 2 * rp)] = x[(l, lp)];
                }
            }
        }
    }
    let t = crate::linalg::trace(&rho);
    rho / t
}

fn entropy_gap(m: &Mat) -> f64 {
    2.0 - crate::linalg::spectrum_of_matrix(m).entropy_base2
}

fn spectrum_structure() -> Result<Check> {
    let mut ok = true;
    let mut worst_deg: f64 = 0.0;
    let mut gaps = Vec::new();
    for ell in 1..=8 {
        let s = memory_spectrum(Method::Sequential, ell)?;
        let e = &s.joint.eigenvalues;
        let spread = |a: &[f64]| a.iter().copied().fold(f64::MIN, f64::max) - a.iter().copied().fold(f64::MAX, f64::min);
        let deg = spread(&e[..3]).min(spread(&e[1..4]));
        worst_deg = worst_deg.max(deg);
        gaps.push(2.0 - s.joint.entropy_base2);
    }
    ok &= worst_deg < 1e-10;
    ok &= gaps.iter().all(|&g| g > 0.0) && gaps.windows(2).all(|w| w[1] < w[0]);

    // Ratios of successive entropy gaps for ell >= 4 against the channel oracle.
    let mut max_dev: f64 = 0.0;
    let mut band_misses = Vec::new();
    let mut ratios = Vec::new();
    for ell in 4..8 {
        let sim = gaps[ell] / gaps[ell - 1];
        let oracle = entropy_gap(&channel_memory_state(ell + 1)) / entropy_gap(&channel_memory_state(ell));
        max_dev = max_dev.max((sim - oracle).abs());
        if (sim - 1.0 / 9.0).abs() > 1e-3 {
            band_misses.push(format!("{ell}->{}", ell + 1));
        }
        ratios.push(format!("{sim:.4}"));
    }
    // The oracle itself approaches 1/9 once the subleading terms die out.
    let asym = entropy_gap(&channel_memory_state(12)) / entropy_gap(&channel_memory_state(11));
    ok &= max_dev <= 1e-3 && (asym - 1.0 / 9.0).abs() <= 1e-3;
    let band = if band_misses.is_empty() { "all inside 1/9±1e-3".to_string() } else { format!("outside 1/9±1e-3 at {}", band_misses.join(",")) };
    Ok((
        ok,
        format!(
            "degeneracy spread {worst_deg:.1e}, gap ratios [{}] vs oracle max dev {max_dev:.1e}, oracle ratio at 11->12 {asym:.5}; literal band: {band}",
            ratios.join(", ")
        ),
    ))
}

fn proportional(a: &Mat, b: &Mat) -> bool {
    let ov = crate::linalg::trace(&(a.adjoint() * b)).norm();
    (ov - frobenius(a) * frobenius(b)).abs() < 1e-10
}

fn bell_table() -> Result<Check> {
    let ch = aklt_tensors();
    let s = singlet_matrix();
    let mut ok = true;
    let mut rows = Vec::new();
    for bell in BellState::ALL {
        let res = prepare_fusion(4, &OutcomePolicy::Forced(vec![bell]))?;
        let bond = res.defects.outcomes[0].0;
        // Brute force: which Pauli on the fused bond reproduces the state.
        let mut found = Vec::new();
        for p in Pauli::ALL {
            let mut all = true;
            for pin in pinned(&res)? {
                let Some(crate::protocol::Boundary::Z { left, right }) = pin.boundary else { unreachable!() };
                let el: Vec<C64> = (0..2).map(|k| r((k == left) as u8 as f64)).collect();
                let er = nalgebra::DVector::from_fn(2, |k, _| r((k == right) as u8 as f64));
                let rv: Vec<C64> = (&pin.lambda * er).iter().copied().collect();
                let pm = p.matrix();
                let reference = contract_open_inserted(&ch, &el, &rv, 4, Some((bond + 1, &pm)))?;
                let sv = reference.to_statevector(&ch.encoding)?;
                let ours = pin.state.amplitudes_in_order(&pin.site_roles())?;
                all &= crate::linalg::fidelity(&ours, sv.amplitudes())? > 1.0 - 1e-10;
            }
            if all {
                found.push(p);
            }
        }
        let ket = bell.ket();
        let m = Mat::from_fn(2, 2, |j, k| ket[j + 2 * k]);
        let row_ok = found.len() == 1
            && found[0] == bell.defect()
            && proportional(&m, &(&s * found[0].matrix()))
            && proportional(&m, &bell.inserted().matrix());
        ok &= row_ok;
        let b = found.iter().map(|p| p.label()).collect::<Vec<_>>().join("|");
        rows.push(format!("{}: M~{} B={b}", bell.label(), bell.inserted().label()));
    }
    Ok((ok, rows.join(", ")))
}

fn symmetry_relations() -> Result<Check> {
    let ch = aklt_tensors();
    let mut phases = Vec::new();
    let mut ok = true;
    for b in Pauli::ALL {
        let th = check_symmetry(&ch, b)?;
        let ph = c(th.cos(), th.sin());
        ok &= (ph - r(1.0)).norm() < 1e-10 || (ph + r(1.0)).norm() < 1e-10;
        phases.push(format!("{}:{:+.0}", b.label(), ph.re));
    }
    let inv = check_inversion(&ch);
    let pairs = pair_tensors(&variant_tensors(VariantKind::Cluster));
    let mut cluster = true;
    for b in Pauli::ALL {
        cluster &= check_symmetry_with(&pairs, &cluster_pair_symmetry(b), &b.matrix(), &b.matrix()).is_ok();
    }
    ok &= inv && cluster;
    Ok((ok, format!("phases [{}], inversion {inv}, cluster pairs {cluster}", phases.join(" "))))
}

fn projector_baseline() -> Result<Check> {
    let trials = 100_000;
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [1usize, 2, 4] {
        let hits = parallel_map(trials, |k| {
            let mut rng = stream_rng(SEED + n as u64, k as u64);
            Ok(prepare_projector_baseline(n, &mut rng)?.is_some())
        })?;
        let rate = hits.iter().filter(|&&h| h).count() as f64 / trials as f64;
        let p = 0.75f64.powi(n as i32);
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let z = (rate - p).abs() / sigma;
        ok &= z <= 3.0;
        detail.push(format!("N={n} {rate:.4} vs {p:.4} ({z:.2} sigma)"));
    }
    Ok((ok, detail.join(", ")))
}

fn teleportation() -> Result<Check> {
    let mut worst: f64 = 1.0;
    for n in 1..=6 {
        for prep in [Method::Sequential, Method::Fusion] {
            for (k, (_, psi)) in canonical_targets().into_iter().enumerate() {
                let rep = teleport(n, psi, prep, SEED + (10 * n + k) as u64)?;
                worst = worst.min(rep.raw_fidelity);
            }
        }
    }
    let mut ok = (1.0 - worst).abs() <= 1e-10;

    let paths = 10_000;
    let targets = canonical_targets();
    let bad = parallel_map(paths, |k| {
        let psi = targets[k % targets.len()].1;
        let rep = teleport(4, psi, Method::Fusion, SEED ^ k as u64)?;
        Ok(rep.outcomes.contains(&Cartesian::S) || (rep.raw_fidelity - 1.0).abs() > 1e-10)
    })?
    .into_iter()
    .filter(|&b| b)
    .count();
    ok &= bad == 0;

    let mut absorb: f64 = 1.0;
    for outs in fusion_combinations(4) {
        let raw = prepare_fusion(4, &OutcomePolicy::Forced(outs))?;
        let fixed = correct_defects(raw.clone(), CorrectionMode::Unitary)?;
        for (_, psi) in canonical_targets() {
            let mut g1 = stream_rng(SEED, 1);
            let mut g2 = stream_rng(SEED, 1);
            let a = teleport_prepared(&raw, psi, SitePolicy::Sample(&mut g1))?;
            let b = teleport_prepared(&fixed, psi, SitePolicy::Sample(&mut g2))?;
            let da = DensityMatrix::new(Mat::from_fn(2, 2, |i, j| a.received[i][j]))?;
            let db = DensityMatrix::new(Mat::from_fn(2, 2, |i, j| b.received[i][j]))?;
            absorb = absorb.min(crate::linalg::fidelity(&da, &db)?);
        }
    }
    ok &= absorb >= 1.0 - 1e-10;
    Ok((
        ok,
        format!(
            "min raw fidelity 1 - {:.1e} over 72 runs, {bad}/{paths} non-Pauli or imperfect paths, defect absorption min fidelity 1 - {:.1e}",
            1.0 - worst,
            1.0 - absorb
        ),
    ))
}

fn variants() -> Result<Check> {
    let mut worst: f64 = 1.0;
    let mut cases = 0;
    for kind in [VariantKind::Ghz, VariantKind::Cluster] {
        for n in 2..=6 {
            let f = VariantLayout::default_for(kind, n).blocks.len() - 1;
            for c in 0..4usize.pow(f as u32) {
                let outs = (0..f).map(|k| BellState::ALL[(c >> (2 * k)) & 3]).collect();
                let res = prepare_fusion_variant(kind, n, &OutcomePolicy::Forced(outs))?;
                worst = worst.min(variant_fidelity(&res, kind)?);
                cases += 1;
            }
        }
    }
    Ok((worst >= 1.0 - 1e-10, format!("{cases} forced-outcome preparations, min fidelity 1 - {:.1e}", 1.0 - worst)))
}

fn noise_qualitative() -> Result<Check> {
    let ch = aklt_tensors();
    let model = comparison_model();
    let mut lengths = Vec::new();
    for method in [Method::Sequential, Method::Fusion] {
        let spec = PrepSpec::new(method, 8);
        let shots = run_noisy(&spec, &model, 100_000, SEED)?;
        lengths.push(fit_decay_length(&string_order_profile(&shots, &ch, 8)?)?);
    }
    let decay_ok = lengths[1] > lengths[0];

    let spec = PrepSpec::new(Method::Sequential, 4);
    let exact = exact_site_distribution(&spec)?;
    let mats = vec![flip_confusion(0.05); 8];
    let noisy = apply_confusion(&exact, &mats)?;
    let fixed = readout_mitigate(&noisy, &mats)?;
    let truth = string_order_from_distribution(&exact, &ch, 4, 0, 4)?;
    let raw = string_order_from_distribution(&noisy, &ch, 4, 0, 4)?;
    let mit = string_order_from_distribution(&fixed, &ch, 4, 0, 4)?;
    let (raw_bias, mit_bias) = ((raw - truth).abs(), (mit - truth).abs());
    let mit_ok = raw_bias >= 5.0 * mit_bias;
    Ok((
        decay_ok && mit_ok,
        format!(
            "decay length sequential {:.1}, fusion {:.1} (fusion longer: {decay_ok}); readout bias {raw_bias:.3e} -> {mit_bias:.1e}",
            lengths[0], lengths[1]
        ),
    ))
}

fn mcweeny() -> Result<Check> {
    let (th, ph) = (0.7f64, 0.3f64);
    let v0 = [r((th / 2.0).cos()), c(ph.cos(), ph.sin()) * (th / 2.0).sin()];
    let v1 = [c(-ph.cos(), ph.sin()) * (th / 2.0).sin(), r((th / 2.0).cos())];
    let proj = |v: &[C64; 2]| Mat::from_fn(2, 2, |i, j| v[i] * v[j].conj());
    let rho = DensityMatrix::new(proj(&v0) * r(0.9) + proj(&v1) * r(0.1))?;
    let out = mcweeny_purify(&rho, 1e-12, 200)?;
    let comm = frobenius(&commutator(rho.matrix(), out.rho.matrix()));
    let m = out.rho.matrix();
    let idem = frobenius(&(m * m - m));
    let overlap = inner(&v0, &(m * nalgebra::DVector::from_column_slice(&v0)).as_slice()).re;
    let ok = comm < 1e-9 && idem <= 1e-12 && (overlap - 1.0).abs() <= 1e-12;
    Ok((ok, format!("commutator {comm:.1e}, |rho^2-rho| {idem:.1e}, <v0|rho|v0> = 1 - {:.1e}", 1.0 - overlap)))
}
