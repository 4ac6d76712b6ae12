use aklt::linalg::fidelity;
use aklt::mps::aklt_tensors;
use aklt::noise::{run_noisy, NoiseModel};
use aklt::observables::{
    memory_spectrum, memory_spectrum_shots, preparation_branches, sample_preparation, string_order_exact,
    string_order_shots, PrepSpec,
};
use aklt::protocol::{CorrectionMode, Method};
use aklt::teleport::{canonical_targets, teleport};

#[test]
fn frame_shots_match_unitary_exact() {
    let ch = aklt_tensors();
    let n = 5;
    let exact: f64 = preparation_branches(&PrepSpec { correction: CorrectionMode::Unitary, ..PrepSpec::new(Method::Fusion, n) })
        .unwrap()
        .iter()
        .map(|b| b.probability * string_order_exact(&b.result, 1, 3).unwrap())
        .sum();
    let shots = sample_preparation(&PrepSpec::new(Method::Fusion, n), 40_000, 12).unwrap();
    let est = string_order_shots(&shots, &ch, 1, 3).unwrap();
    assert!((est.value - exact).abs() < 4.0 * est.stderr, "{} vs {exact}", est.value);
}

#[test]
fn noiseless_trajectories_agree_with_direct_sampling() {
    let ch = aklt_tensors();
    let spec = PrepSpec::new(Method::Fusion, 4);
    let a = run_noisy(&spec, &NoiseModel { p1: 1e-15, ..NoiseModel::default() }, 20_000, 4).unwrap();
    let b = sample_preparation(&spec, 20_000, 5).unwrap();
    let (ea, eb) = (string_order_shots(&a, &ch, 0, 4).unwrap(), string_order_shots(&b, &ch, 0, 4).unwrap());
    let se = (ea.stderr.powi(2) + eb.stderr.powi(2)).sqrt();
    assert!((ea.value - eb.value).abs() < 4.0 * se);
}

#[test]
fn sampled_memory_spectrum_tracks_exact() {
    for ell in [1, 2, 4] {
        let exact = memory_spectrum(Method::Fusion, ell).unwrap();
        let sampled = memory_spectrum_shots(Method::Fusion, ell, 50_000, ell as u64).unwrap();
        assert!((exact.averaged[0] - sampled.averaged[0]).abs() < 1.5e-2, "ell={ell}");
    }
}

#[test]
fn teleport_report_serialises() {
    let (_, psi) = canonical_targets()[3];
    let rep = teleport(3, psi, Method::Fusion, 8).unwrap();
    let v = serde_json::to_value(&rep).unwrap();
    assert_eq!(v["N"], 3);
    assert!((rep.raw_fidelity - 1.0).abs() < 1e-10);
    let rho = aklt::linalg::DensityMatrix::new(nalgebra::DMatrix::from_fn(2, 2, |i, j| rep.received[i][j])).unwrap();
    assert!((fidelity(&rho, &psi.to_vec()).unwrap() - 1.0).abs() < 1e-10);
}
