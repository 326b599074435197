use std::path::Path;
use std::process::{Command, Output};

fn cfexplain(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfexplain"))
        .args(args)
        .arg("--set")
        .arg(format!("output_dir={}", dir.display()))
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = stdout(&cfexplain(d, &["train", "--seed", "1"]));
    assert!(out.contains("test accuracy"));
    assert!(d.join("model.json").exists() && d.join("history.json").exists());

    let out = stdout(&cfexplain(d, &["explain", "--seed", "1", "--set", "explainer=both"]));
    assert!(out.contains("counterfactuals found"), "{out}");

    let out = stdout(&cfexplain(d, &["run", "--seed", "1", "--backend", "mock", "--set", "explainer=both"]));
    assert!(out.contains("| mock "), "{out}");
    let report = std::fs::read_to_string(d.join("report.md")).unwrap();

    let again = stdout(&cfexplain(d, &["report"]));
    assert!(again.contains("exported"));
    assert_eq!(report, std::fs::read_to_string(d.join("report.md")).unwrap());
}

#[test]
fn configuration_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // live without an endpoint
    assert!(!cfexplain(d, &["run", "--backend", "live"]).status.success());
    // unknown corruption field
    let o = cfexplain(d, &["config", "--set", r#"corruption={"fields":[{"field":"nope","probability":0.5}]}"#]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
    // missing dataset files
    let o = cfexplain(d, &["train", "--set", r#"dataset={"source":"files","dir":"/nonexistent","name":"cora"}"#]);
    assert!(!o.status.success());
    // report without a log
    assert!(!cfexplain(d, &["report"]).status.success());
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"sample_size": 7, "train": {"epochs": 3}}"#).unwrap();
    let o = stdout(&cfexplain(
        dir.path(),
        &["config", "--config", path.to_str().unwrap(), "--set", "train.epochs=9", "--seed", "4"],
    ));
    let v: serde_json::Value = serde_json::from_str(&o).unwrap();
    assert_eq!(v["sample_size"], 7);
    assert_eq!(v["train"]["epochs"], 9);
    assert_eq!(v["train"]["seed"], 4);
    assert_eq!(v["llm"]["top_k"], 30);
}
