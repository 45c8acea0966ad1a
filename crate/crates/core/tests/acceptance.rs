use std::io::Write;

use weyl_lab::acceptance::{run_all, CHECK_COUNT};

// Lines go straight to stdout so they show even when the harness captures
// test output.
#[test]
fn acceptance_criteria() {
    let results = run_all();
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out);
    for r in &results {
        let _ = writeln!(out, "{r}");
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    let _ = writeln!(out, "acceptance: {} of {CHECK_COUNT} passed", CHECK_COUNT - failed.len());
    assert_eq!(results.len(), CHECK_COUNT);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
