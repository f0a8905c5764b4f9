//! Exit codes and end-to-end runs of the binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

mod common;
use common::fixture;

fn mesa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mesa")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn exit_codes() {
    let cards = fixture("cards.json");
    let mini = fixture("mini_cards.json");
    assert_eq!(mesa(&["--help"]).status.code(), Some(0));
    assert_eq!(mesa(&["--version"]).status.code(), Some(0));
    let bad = mesa(&["evaal"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown subcommand"));
    assert_eq!(mesa(&["cards", "lint", p(&cards)]).status.code(), Some(1));
    assert_eq!(mesa(&["cards", "lint", p(&mini)]).status.code(), Some(0));
    assert_eq!(mesa(&["cards", "lint", "/nonexistent/cards.json"]).status.code(), Some(3));
    assert_eq!(mesa(&["report", "--in", "/nonexistent/report.json"]).status.code(), Some(3));
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mesa.toml");
    fs::write(&cfg, "alpha = 0.6\ngamma = 1\n").unwrap();
    let out = mesa(&["--config", p(&cfg), "cards", "lint", p(&fixture("mini_cards.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn eval_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let (suite, cards, script) = (fixture("suite.json"), fixture("cards.json"), fixture("script.json"));
    let base = ["eval", "--suite", p(&suite), "--cards", p(&cards), "--script", p(&script)];
    let text = mesa(&base);
    assert_eq!(text.status.code(), Some(0));
    let mut args = base.to_vec();
    args.extend(["--format", "machine", "--out", p(&json)]);
    assert_eq!(mesa(&args).status.code(), Some(0));
    let rendered = mesa(&["report", "--in", p(&json)]);
    assert_eq!(rendered.status.code(), Some(0));
    assert_eq!(rendered.stdout, text.stdout);
    let csv = mesa(&["report", "--in", p(&json), "--format", "csv"]);
    let csv = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7 * 4);
    assert!(csv.contains("NoVigilance,B,25,50,0.500"), "{csv}");
}

#[test]
fn eval_with_missing_script_keys_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("s.json");
    fs::write(&script, "{\"rows\": []}").unwrap();
    let out = mesa(&[
        "eval",
        "--suite",
        p(&fixture("mini_suite.json")),
        "--cards",
        p(&fixture("mini_cards.json")),
        "--script",
        p(&script),
        "--any-size",
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("M-001/"));
}

#[test]
fn bank_flow() {
    let dir = tempfile::tempdir().unwrap();
    let cards = dir.path().join("cards.json");
    fs::copy(fixture("cards.json"), &cards).unwrap();
    let bank = dir.path().join("bank.jsonl");
    let out = mesa(&[
        "eval",
        "--suite",
        p(&fixture("suite.json")),
        "--cards",
        p(&cards),
        "--script",
        p(&fixture("script.json")),
        "--conditions",
        "Baseline",
        "--bank",
        p(&bank),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let shown = mesa(&["bank", "show", p(&bank)]);
    assert_eq!(shown.status.code(), Some(0));
    assert!(!shown.stdout.is_empty());

    let before = fs::read(&cards).unwrap();
    let dry = mesa(&["bank", "correct", "--bank", p(&bank), "--cards", p(&cards), "--dry-run"]);
    assert_eq!(dry.status.code(), Some(0));
    assert!(!dry.stdout.is_empty());
    assert_eq!(fs::read(&cards).unwrap(), before);

    let wet = mesa(&["bank", "correct", "--bank", p(&bank), "--cards", p(&cards)]);
    assert_eq!(wet.status.code(), Some(0), "{}", String::from_utf8_lossy(&wet.stderr));
    assert_ne!(fs::read(&cards).unwrap(), before);
    assert_eq!(mesa(&["cards", "lint", p(&cards)]).status.code().map(|c| c <= 1), Some(true));
}

#[test]
fn route_prints_decisions() {
    let out = mesa(&[
        "route",
        "--cards",
        p(&fixture("cards.json")),
        "--script",
        p(&fixture("script.json")),
        "--item",
        "B-001",
        "--prompt",
        "x",
        "--condition",
        "NoVigilance",
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("decision 1"), "{text}");
    assert!(text.contains("terminal_confidence"), "{text}");
}
