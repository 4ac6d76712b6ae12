//! Acceptance suite: one PASS/FAIL line per criterion. Pass criterion ids as
//! arguments to run a subset.

use std::process::ExitCode;

use aklt::selftest::{run_criterion, CRITERIA};

fn main() -> ExitCode {
    let ids: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids = if ids.is_empty() { (1..=CRITERIA.len()).collect() } else { ids };
    let mut failed = 0;
    for id in ids {
        let outcome = run_criterion(id).expect("criterion id in range");
        println!("{outcome}");
        failed += usize::from(!outcome.passed);
    }
    println!("acceptance: {failed} criteria failed");
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
