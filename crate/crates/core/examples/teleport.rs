//! Teleport qubit states through sequential and fused chains.

use aklt::protocol::Method;
use aklt::teleport::{canonical_targets, teleport};

fn main() -> aklt::Result<()> {
    for prep in [Method::Sequential, Method::Fusion] {
        for (name, psi) in canonical_targets() {
            let rep = teleport(5, psi, prep, 21)?;
            let outs: String = rep.outcomes.iter().map(|o| format!("{o:?}")).collect();
            println!(
                "{:<10} {name:<3} outcomes {outs:<6} defects {:?} byproduct {} fidelity {:.12} acceptance {:.3}",
                prep.tag(),
                rep.defects,
                rep.byproduct.label(),
                rep.raw_fidelity,
                rep.acceptance
            );
        }
    }
    Ok(())
}
