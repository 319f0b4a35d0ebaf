use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mdim::report::{cells_csv, parse_f64, read_csv, CELLS_HEADER};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mdim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mdim"))
        .args(args)
        .output()
        .unwrap()
}

const SMALL: &str = r#"
[experiment]
name = "small"
seed = 5
mode = "exact"

[system]
kind = "shift"
alphabet = { kind = "points", values = [0.0, 0.3, 1.0] }
lambda = 0.5

[folner]
shape = "boxes"
rank = 1
n_min = 1
n_max = 4

[grid]
hi = 0.4
lo = 0.1
count = 4
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn unknown_key_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL.replace("lambda = 0.5", "lambda = 0.5\nlamda = 0.3"),
    );
    let out = mdim(&[
        "estimate",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("system"), "{err}");
}

#[test]
fn bad_value_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("n_max = 4", "n_max = \"four\""));
    let out = mdim(&["estimate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("folner.n_max"));
}

#[test]
fn syntax_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[experiment\nseed = 1");
    assert_eq!(mdim(&["estimate", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    let out = mdim(&["estimate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn bad_mode_flag_exits_2() {
    assert_eq!(mdim(&["verify", "--mode", "fast"]).status.code(), Some(2));
}

#[test]
fn enumeration_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{SMALL}\n[budgets]\nconfigurations = 10\n"),
    );
    let out = mdim(&[
        "estimate",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn verify_suite_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("verify.toml");
    let out = mdim(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    let (header, rows) = read_csv(&text).unwrap();
    assert_eq!(header[0], "name");
    assert!(rows.iter().all(|r| r[1] != "fail"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["tool"], "mdim");
    assert!(summary["config"].is_object());
}

#[test]
fn estimate_writes_cells_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = mdim(&[
        "estimate",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&fs::read_to_string(out_dir.join("cells.csv")).unwrap()).unwrap();
    assert_eq!(header, CELLS_HEADER);
    assert_eq!(rows.len(), 16);
    for r in &rows {
        let s = parse_f64(&r[3]).unwrap();
        let rr = parse_f64(&r[4]).unwrap();
        let cov = parse_f64(&r[5]).unwrap();
        assert!(rr <= s && s <= cov);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["experiment"]["seed"], 5);
    assert!(summary["version"].is_string());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let code = mdim_cli::main_with_args([
        "mdim",
        "estimate",
        "--config",
        &cfg,
        "--seed",
        "9",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["experiment"]["seed"], 9);
}

#[test]
fn empty_report_is_header_only() {
    let text = cells_csv(&[]).unwrap();
    assert_eq!(text.trim_end(), CELLS_HEADER.join(","));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("\"exact\"", "\"sampled\""));
    let run = |name: &str| {
        let d = dir.path().join(name);
        assert_eq!(
            mdim_cli::main_with_args([
                "mdim",
                "estimate",
                "--config",
                &cfg,
                "--out",
                d.to_str().unwrap()
            ]),
            0
        );
        (
            fs::read(d.join("cells.csv")).unwrap(),
            fs::read(d.join("summary.json")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}
