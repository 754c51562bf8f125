//! Acceptance suite: runs every verification criterion at its pinned
//! tolerances and prints one pass/fail line per criterion.
//!
//! The same criteria back the `rmiso check` subcommand; this target is the
//! test-harness entry point for them.

use rmiso::checks::{default_seeds, run_criteria, CRITERION_NAMES};

#[test]
fn acceptance_criteria() {
    let seeds = default_seeds();
    let reports = run_criteria(None, &seeds).expect("criteria run");
    assert_eq!(reports.len(), CRITERION_NAMES.len());
    let mut failures = Vec::new();
    for report in &reports {
        let status = if report.passed { "PASS" } else { "FAIL" };
        println!("{status} {} - {}", report.name, report.details);
        if !report.passed {
            failures.push(report.name);
        }
    }
    assert!(
        failures.is_empty(),
        "failing criteria: {}",
        failures.join(", ")
    );
}
