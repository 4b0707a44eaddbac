mod common;

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use common::{fixture_bytes, fixture_path, python3, run_script};

fn wrangle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wrangle"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn detect_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.csv");
    std::fs::write(&clean, "c,v\na,1\na,2\nb,1\nb,2\n").unwrap();
    let o = wrangle(&["detect", path(&clean)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());

    let o = wrangle(&["detect", path(&fixture_path())]);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["ranked"].as_array().unwrap().len() <= 3);
    assert!(report["total"].as_u64().unwrap() > 0);

    let o = wrangle(&["detect", path(&dir.path().join("absent.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    let o = wrangle(&["detect"]);
    assert_eq!(o.status.code(), Some(64));
    let o = wrangle(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(64));
    let o = wrangle(&["detect", path(&fixture_path()), "--target", "Nope"]);
    assert_eq!(o.status.code(), Some(64));
    let o = wrangle(&["detect", path(&fixture_path()), "--rule", "bad=value <"]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn detect_markdown_report_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.md");
    let o = wrangle(&["detect", path(&fixture_path()), "--format", "md", "--report", path(&report)]);
    assert_eq!(o.status.code(), Some(2));
    let md = std::fs::read_to_string(&report).unwrap();
    assert!(md.contains("Bhutan"));
}

#[test]
fn custom_rule_counts_planted_negatives() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("neg.csv");
    // three negatives planted among non-negative values, one group-by column
    let mut csv = String::from("k,v\n");
    for i in 0..30 {
        let v = if [3, 11, 25].contains(&i) { -i - 1 } else { 10 + i % 5 };
        csv.push_str(&format!("{},{v}\n", if i % 2 == 0 { "x" } else { "y" }));
    }
    std::fs::write(&input, csv).unwrap();
    let o = wrangle(&["detect", path(&input), "--rule", "neg=value < 0", "--top-k", "10"]);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["counts"]["custom:neg"], 3, "{report:#}");
}

#[test]
fn empty_recipe_copies_input_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    // quoting and spacing the serializer would normalize
    let bytes = b"c,v\n\"a\",1.50\nb, 2\n".to_vec();
    std::fs::write(&input, &bytes).unwrap();
    let recipe = dir.path().join("r.json");
    std::fs::write(&recipe, r#"{"actions": []}"#).unwrap();
    let out = dir.path().join("out.csv");
    let o = wrangle(&["apply", path(&input), "--recipe", path(&recipe), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&out).unwrap(), bytes);
}

#[test]
fn recipe_converts_twelve_k() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("r.json");
    std::fs::write(
        &recipe,
        r#"{"format_version": 1, "actions": [{"action": "convert_cells", "cells": [{"row": 7, "column": "Income"}]}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    let o = wrangle(&["apply", path(&fixture_path()), "--recipe", path(&recipe), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("Lesotho,PhD,12000\n"), "{text}");
    assert!(!text.contains("12k"));
}

#[test]
fn recipe_errors() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("r.json");
    let out = dir.path().join("out.csv");
    std::fs::write(&recipe, r#"{"actions": [{"action": "teleport"}]}"#).unwrap();
    let o = wrangle(&["apply", path(&fixture_path()), "--recipe", path(&recipe), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(65));
    assert!(!out.exists());

    std::fs::write(&recipe, r#"{"actions": [{"action": "remove_rows", "rows": [40]}]}"#).unwrap();
    let o = wrangle(&["apply", path(&fixture_path()), "--recipe", path(&recipe), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn emitted_script_reproduces_apply() {
    if python3().is_none() {
        eprintln!("warning: python3 not found, skipping script execution");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("r.json");
    std::fs::write(
        &recipe,
        r#"{"actions": [
            {"action": "convert_cells", "cells": [{"row": 7, "column": "Income"}]},
            {"action": "remove_rows", "rows": [0, 1]},
            {"action": "impute_column_mean", "cells": [{"row": 0, "column": "Income"}]}
        ]}"#,
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    let script = dir.path().join("replay.py");
    let o = wrangle(&[
        "apply",
        path(&fixture_path()),
        "--recipe",
        path(&recipe),
        "--out",
        path(&out),
        "--emit-script",
        path(&script),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let source = std::fs::read_to_string(&script).unwrap();
    let work = tempfile::tempdir().unwrap();
    let replayed = run_script(work.path(), &source, &fixture_bytes()).unwrap();
    assert_eq!(replayed, std::fs::read(&out).unwrap());
}

#[test]
fn serve_reports_occupied_port() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port().to_string();
    let mut child = Command::new(env!("CARGO_BIN_EXE_wrangle"))
        .args(["serve", "--port", &port])
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let start = Instant::now();
    let status = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s;
        }
        if start.elapsed() > Duration::from_secs(10) {
            child.kill().unwrap();
            panic!("server started on an occupied port");
        }
        std::thread::sleep(Duration::from_millis(50));
    };
    assert_eq!(status.code(), Some(1));
    let mut err = String::new();
    std::io::Read::read_to_string(&mut child.stderr.take().unwrap(), &mut err).unwrap();
    assert!(err.contains(&format!("port {port} is already in use")), "{err}");
    drop(listener);
}
