//! GHZ (with qubit recycling) and cluster states from the same fuse-and-correct scheme.

use aklt::protocol::OutcomePolicy;
use aklt::variants::{prepare_fusion_variant, variant_fidelity, VariantKind, VariantLayout};

fn main() -> aklt::Result<()> {
    for kind in [VariantKind::Ghz, VariantKind::Cluster] {
        for n in [4, 6, 8] {
            let layout = VariantLayout::default_for(kind, n);
            let res = prepare_fusion_variant(kind, n, &OutcomePolicy::seeded(n as u64))?;
            let outs: Vec<&str> = res.defects.outcomes.iter().map(|(_, b)| b.label()).collect();
            println!(
                "{} N={n} blocks {:?} qubits {} depth {} outcomes {outs:?} fidelity {:.12}",
                kind.tag(),
                layout.blocks,
                res.num_qubits(),
                res.depth(),
                variant_fidelity(&res, kind)?
            );
        }
    }
    Ok(())
}
