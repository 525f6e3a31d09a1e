//! The full acceptance suite. Prints one line per criterion, then fails if
//! any criterion did.

use surrogates::harness::run_acceptance;

#[test]
fn acceptance_suite() {
    let report = run_acceptance(0).expect("acceptance suite runs");
    for line in report.lines() {
        println!("{line}");
    }
    let failed: Vec<String> = report.criteria.iter().filter(|c| !c.passed).map(|c| c.line()).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
