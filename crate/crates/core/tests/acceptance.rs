//! Acceptance suite: runs every criterion at its stated size and tolerance
//! and prints one pass/fail line per criterion.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 3 7`.

use std::process::ExitCode;
use std::time::Instant;

use bplab::runner::verify::{self, CRITERIA};
use bplab::runner::Profile;

const SEED: u64 = 20_240_601;

fn main() -> ExitCode {
    let ids: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let ids = if ids.is_empty() {
        (1..=CRITERIA).collect()
    } else {
        ids
    };
    let mut failed = 0;
    for id in ids {
        let start = Instant::now();
        let report = verify::run_selected(Profile::Full, SEED, 1, &[id]);
        let r = &report.results[0];
        println!(
            "criterion {:>2} {:<24} {}  value={:.6}  [{:.1}s]  {}",
            r.id,
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.value,
            start.elapsed().as_secs_f64(),
            r.diagnostics
        );
        if !r.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
