use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ics_core::harness::validate_report_json;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/esnli_sample")
}

fn ics(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ics"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    let text = format!(
        r#"dataset = "esnli"
manifest = "{manifest}"
data_root = "{root}"
candidate_strategy = "similarity"
augment_strategy = "random"
n = 20
k = 3
trials = 2
master_seed = 5

[backend]
kind = "mock"
base_accuracy = 0.7
{extra}"#,
        manifest = fixture().join("manifest.toml").display(),
        root = fixture().display(),
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    ok(ics(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let report =
        validate_report_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.cells.len(), 1);
    assert_eq!(report.cells[0].trial_reports.len(), 2);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["engine_version"], ics_core::ENGINE_VERSION);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn flags_and_dotted_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    ok(ics(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "99",
        "--n",
        "12",
        "--trials=1",
        "--backend.base_accuracy",
        "0.95",
        "--max-concurrency",
        "3",
    ]));
    let report =
        validate_report_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let cell = &report.cells[0];
    assert_eq!((cell.master_seed, cell.n, cell.trials), (99, Some(12), 1));
    assert_eq!(cell.trial_reports[0].candidate_ids.len(), 12);
}

#[test]
fn unknown_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = ics(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--no-such-field",
        "1",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_field"));
}

#[test]
fn grid_then_report_reemits_with_named_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "\n[grid]\nn = [9, 20]\nk = [3, 5]\ninclude_baseline = true\n",
    );
    let out = dir.path().join("grid");
    let stdout = ok(ics(&[
        "grid",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(stdout.contains("Skipped"), "{stdout}");
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.contains(",skipped,"));

    let again = dir.path().join("again");
    ok(ics(&[
        "report",
        "--from",
        out.join("report.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "--baseline",
        "esnli/similarity+random/n=20/k=3",
    ]));
    let csv = std::fs::read_to_string(again.join("report.csv")).unwrap();
    let row = csv
        .lines()
        .find(|l| l.starts_with("esnli/similarity+random/n=20/k=3,"))
        .unwrap();
    // the baseline row has no delta against itself
    assert!(row.contains(",,0,"), "{row}");

    let missing = ics(&[
        "report",
        "--from",
        out.join("report.json").to_str().unwrap(),
        "--baseline",
        "nope",
    ]);
    assert!(!missing.status.success());
}

#[test]
fn grid_without_table_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = ics(&[
        "grid",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn validate_data_reports_line_numbers() {
    let stdout = ok(ics(&[
        "validate-data",
        "--dataset",
        "esnli",
        "--data-root",
        fixture().to_str().unwrap(),
        "--manifest",
        fixture().join("manifest.toml").to_str().unwrap(),
    ]));
    assert!(stdout.contains("train: 31 rows ok"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("esnli")).unwrap();
    std::fs::copy(
        fixture().join("esnli/train.jsonl"),
        dir.path().join("esnli/train.jsonl"),
    )
    .unwrap();
    std::fs::write(
        dir.path().join("esnli/test.jsonl"),
        "{\"id\":\"a\",\"premise\":\"p\",\"hypothesis\":\"h\",\"label\":\"entailment\"}\n{\"id\":\"b\",\"premise\":\"p\"}\n",
    )
    .unwrap();
    let out = ics(&[
        "validate-data",
        "--dataset",
        "esnli",
        "--data-root",
        dir.path().to_str().unwrap(),
        "--manifest",
        fixture().join("manifest.toml").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("test.jsonl:2"));
}
