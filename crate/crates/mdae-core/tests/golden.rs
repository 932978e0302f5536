//! Field-by-field comparison of every shipped fixture against its
//! expectation file. Full-corpus pass is the release gate.

use mdae_core::corpus::{default_corpus_dir, run_corpus};

#[test]
fn full_corpus_passes() {
    let results = run_corpus(&default_corpus_dir()).expect("corpus loads");
    assert!(!results.is_empty(), "no fixtures found");
    let mut failed = false;
    for r in &results {
        if r.passed() {
            println!("PASS {}", r.name);
        } else {
            failed = true;
            println!("FAIL {}", r.name);
            for f in &r.failures {
                println!("     {f}");
            }
        }
    }
    assert!(!failed, "corpus failures");
}
