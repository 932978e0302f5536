//! End-to-end checks of the command line: exit codes, report determinism,
//! and the documented failure modes.

use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join("corpus")
}

fn mdae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdae"))
        .args(args)
        .env("MDAE_COLOR", "0")
        .output()
        .expect("binary runs")
}

fn model(name: &str) -> String {
    corpus()
        .join(name)
        .join("model.mdae")
        .to_string_lossy()
        .into_owned()
}

#[test]
fn check_accepts_valid_model() {
    let out = mdae(&["check", &model("cupball")]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("validates"));
}

#[test]
fn check_rejects_defective_model() {
    let dir = std::env::temp_dir().join("mdae-bad-model.mdae");
    std::fs::write(
        &dir,
        "model bad\nvar x, y;\nmode a {\n eq e: der(x) = y;\n}\n",
    )
    .unwrap();
    let out = mdae(&["check", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("not square"));
}

#[test]
fn missing_file_is_a_usage_error() {
    let out = mdae(&["check", "/nonexistent/model.mdae"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn restart_good_solution_exits_zero_with_deterministic_json() {
    let args = [
        "restart",
        &model("cupball"),
        "--from",
        "free",
        "--to",
        "taut",
        "--json",
    ];
    let a = mdae(&args);
    let b = mdae(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout, "reports must be byte-identical");
    let doc: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["transition"]["outcome"], "good");
    assert_eq!(doc["transition"]["heights"]["k_star"], 1);
}

#[test]
fn restart_with_limits_and_eps_table() {
    let out = mdae(&[
        "restart",
        &model("cupball"),
        "--from",
        "free",
        "--to",
        "taut",
        "--limits",
        r#"{ "x": 0.6, "y": -0.8, "der(x)": 1.0, "der(y)": 0.5 }"#,
        "--verify-eps",
        "0.01,0.001",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("x'+ = 0.880000000000"), "{text}");
    assert!(text.contains("step-size convergence"));
}

#[test]
fn forced_height_produces_diagnosis_exit_code() {
    let out = mdae(&[
        "restart",
        &model("cupball"),
        "--from",
        "free",
        "--to",
        "taut",
        "--height",
        "2",
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["transition"]["outcome"], "diagnosis");
    let wit: Vec<String> = doc["transition"]["goodness"]["g39_witnesses"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(wit, vec!["x''[1]", "y''[1]"]);
}

#[test]
fn under_height_is_a_structural_failure() {
    let out = mdae(&[
        "restart",
        &model("cupball"),
        "--from",
        "free",
        "--to",
        "taut",
        "--height",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no admissible matching"));
}

#[test]
fn explain_renders_the_array_table() {
    let out = mdae(&[
        "explain",
        &model("cupball"),
        "--from",
        "free",
        "--to",
        "taut",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in [
        "k1             t+0e    fact",
        "k1'            t+0e    disabled",
        "height K = 1",
    ] {
        assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
    }
}

#[test]
fn corpus_subcommand_passes() {
    let out = mdae(&["corpus", corpus().to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn circuit_runs_at_its_computed_height_too() {
    // the shipped expectation forces the lower height; the computed bound
    // must also go through and produce a diagnosis, not a structural error
    let out = mdae(&[
        "restart",
        &model("circuit"),
        "--from",
        "source",
        "--to",
        "wired",
        "--json",
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["transition"]["heights"]["used"], 2);
}
