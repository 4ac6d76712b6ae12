//! Noisy trajectories: string-order decay, readout mitigation and noisy teleportation.

use aklt::mps::aklt_tensors;
use aklt::noise::{
    fit_decay_length, flip_confusion, noisy_teleport, readout_mitigate, run_noisy, site_distribution,
    string_order_from_distribution, string_order_profile, NoiseModel,
};
use aklt::observables::{string_order_shots, PrepSpec};
use aklt::protocol::Method;
use aklt::teleport::canonical_targets;

fn main() -> aklt::Result<()> {
    let ch = aklt_tensors();
    let model = NoiseModel::new(0.001, 0.01, 0.0, 0.02)?;
    for method in [Method::Sequential, Method::Fusion] {
        let shots = run_noisy(&PrepSpec::new(method, 6), &model, 20_000, 9)?;
        let prof = string_order_profile(&shots, &ch, 6)?;
        println!("{}: O(6) = {:.4}, decay length {:.1}", method.tag(), prof.last().unwrap().1.value, fit_decay_length(&prof)?);
    }

    let ro = NoiseModel { p_ro: 0.03, ..NoiseModel::default() };
    let shots = run_noisy(&PrepSpec::new(Method::Fusion, 4), &ro, 50_000, 2)?;
    let raw = string_order_shots(&shots, &ch, 0, 4)?;
    let fixed = readout_mitigate(&site_distribution(&shots)?, &vec![flip_confusion(0.03); 8])?;
    println!("readout flips 3%: raw {:.4}, mitigated {:.4}", raw.value, string_order_from_distribution(&fixed, &ch, 4, 0, 4)?);

    let psi = canonical_targets()[5].1;
    for p2 in [0.0, 0.01, 0.02] {
        let t = noisy_teleport(4, psi, Method::Fusion, &NoiseModel { p2, ..NoiseModel::default() }, 5_000, 4)?;
        println!("teleport p2={p2}: raw {:.4}, purified {:.4}, acceptance {:.3}", t.raw_fidelity.value, t.purified_fidelity, t.acceptance);
    }
    Ok(())
}
