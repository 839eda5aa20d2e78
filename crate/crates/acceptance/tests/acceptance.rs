use std::path::Path;

use copilot_acceptance::{run_all, Verdict};

#[test]
fn primary_criteria() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let results = run_all(&root);
    for c in &results {
        println!("{c}");
    }
    assert!(results.iter().any(|c| c.verdict == Verdict::Stated));
    let failed: Vec<&str> = results.iter().filter(|c| !c.ok()).map(|c| c.name).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
