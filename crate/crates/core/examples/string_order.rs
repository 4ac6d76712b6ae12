//! String order: transfer-matrix limit, a finite open chain, and the shot
//! estimate from sampled fusion preparations.

use aklt::mps::{aklt_tensors, contract_open_sites, transfer_matrix_observable, Extent, Observable};
use aklt::observables::{sample_preparation, string_order_shots, PrepSpec};
use aklt::protocol::Method;
use aklt::linalg::r;

fn main() -> aklt::Result<()> {
    let ch = aklt_tensors();
    for ell in [2, 4, 8] {
        let v = transfer_matrix_observable(&ch, Observable::StringOrder, 0, ell, &Extent::Infinite)?;
        println!("infinite chain, ell={ell}: {v:.12}");
    }
    let st = contract_open_sites(&ch, &[r(1.0), r(0.0)], &[r(0.0), r(1.0)], 12)?;
    println!("N=12 open chain, sites 2..9: {:.6}", st.string_order(&ch, 2, 8)?);

    for method in [Method::Sequential, Method::Fusion] {
        let shots = sample_preparation(&PrepSpec::new(method, 6), 50_000, 5)?;
        let est = string_order_shots(&shots, &ch, 0, 6)?;
        println!("{} N=6 from {} shots: {:.4} +- {:.4}", method.tag(), est.shots, est.value, est.stderr);
    }
    Ok(())
}
