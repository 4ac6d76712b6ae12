//! Fuse two-site blocks into an N-site chain, correct the Bell-outcome
//! defects and compare with the contracted chain. Also prints circuit depths.

use aklt::protocol::{
    boundary_probabilities, correct_defects, enforce_boundary, fidelity_to_reference, prepare_fusion, prepare_sequential,
    BoundaryTarget, CorrectionMode, MemoryInit, MemoryMode, OutcomePolicy,
};

fn main() -> aklt::Result<()> {
    let n = 6;
    let raw = prepare_fusion(n, &OutcomePolicy::seeded(11))?;
    for (bond, outcome) in &raw.defects.outcomes {
        println!("bond {bond}: {} -> defect {}", outcome.label(), outcome.defect().label());
    }
    let fixed = correct_defects(raw, CorrectionMode::Unitary)?;
    let p = boundary_probabilities(&fixed)?;
    println!("edge outcome probabilities {p:?}");
    let pinned = enforce_boundary(fixed, BoundaryTarget::Sample(11))?;
    println!("boundary {:?}, fidelity {:.12}", pinned.boundary, fidelity_to_reference(&pinned)?);

    println!("\n N  fusion  sequential");
    for n in 2..=8 {
        let f = prepare_fusion(n, &OutcomePolicy::seeded(0))?.depth();
        let s = prepare_sequential(n, MemoryMode::Single, &MemoryInit::default())?.depth();
        println!("{n:>2}  {f:>6}  {s:>10}");
    }
    Ok(())
}
