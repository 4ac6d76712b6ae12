//! Site symmetries of the chain tensors and fusion through a swap test.

use aklt::linalg::Pauli;
use aklt::mps::{aklt_tensors, check_inversion, check_symmetry};
use aklt::protocol::{fidelity_to_reference, prepare_sequential, swap_test_fusion, MemoryInit, MemoryMode};
use aklt::sim::{Policy, QubitRole, Side};

fn main() -> aklt::Result<()> {
    let ch = aklt_tensors();
    for b in Pauli::ALL {
        println!("U_{} phase {:+.3}", b.label(), check_symmetry(&ch, b)?);
    }
    println!("inversion identity: {}", check_inversion(&ch));

    // Closing an open chain through a swap test on its two edge memories.
    let res = prepare_sequential(3, MemoryMode::Single, &MemoryInit::default())?;
    let pair = (QubitRole::Memory { block: 0, side: Side::Right }, QubitRole::Memory { block: 0, side: Side::Left });
    for outcome in [0, 1] {
        let (closed, ex) = swap_test_fusion(res.clone(), pair, Policy::Force(outcome))?;
        println!("{ex:?}: {} sites, fidelity to periodic chain {:.12}", closed.n_sites, fidelity_to_reference(&closed)?);
    }
    Ok(())
}
