//! Edge-memory spectra versus chain length and the correlation-length fit.

use aklt::observables::{fit_correlation_length, memory_spectrum, memory_spectrum_shots};
use aklt::protocol::Method;

fn main() -> aklt::Result<()> {
    let mut points = Vec::new();
    println!("ell  joint eigenvalues                        S(bits)   conditioned");
    for ell in 1..=8 {
        let s = memory_spectrum(Method::Fusion, ell)?;
        let e: Vec<String> = s.joint.eigenvalues.iter().map(|v| format!("{v:.6}")).collect();
        println!("{ell:>3}  [{}]  {:.6}  {:.6}/{:.6}", e.join(", "), s.joint.entropy_base2, s.averaged[0], s.averaged[1]);
        points.extend(s.averaged.iter().map(|&v| (ell as f64, v)));
    }
    let fit = fit_correlation_length(&points)?;
    println!("xi = {:.5}, 1/ln 3 = {:.5}", fit.xi, 1.0 / 3f64.ln());

    let sampled = memory_spectrum_shots(Method::Sequential, 3, 20_000, 1)?;
    println!("tomographic estimate at ell=3: {:.4}/{:.4}", sampled.averaged[0], sampled.averaged[1]);
    Ok(())
}
