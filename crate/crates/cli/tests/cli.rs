use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dockmine"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version() {
    let o = run(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "dockmine 0.1.0 (catalog 1.0)");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["check"]).status.code(), Some(2));
}

#[test]
fn parse_listing_and_ir() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("Dockerfile");
    std::fs::write(&f, "FROM python:3.7-slim\nRUN pip install \\\n    flask\n").unwrap();
    let o = run(&["parse", path(&f)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "1-1\tFROM python:3.7-slim\n2-3\tRUN pip install     flask\n");

    let o = run(&["parse", "--dump-ir", path(&f)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("FROM-IMAGE-[python]-TAG-[SPECIFIC]"), "{out}");
    assert!(out.contains("SC-[pip]-ARG-[flask]"), "{out}");

    std::fs::write(&f, "FROM python\nFROBNICATE x\n").unwrap();
    let o = run(&["parse", path(&f)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains('2'));
    assert_eq!(run(&["parse", path(&dir.path().join("missing"))]).status.code(), Some(2));
}

#[test]
fn check_exit_codes() {
    let bad = fixture("rule02-violating.Dockerfile");
    let o = run(&["check", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1, "{out}");
    assert!(out.contains("[MANDATORY] rule 2 "), "{out}");

    let good = fixture("rule02-compliant.Dockerfile");
    let o = run(&["check", path(&good)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "");
}

#[test]
fn encouraged_only_is_clean() {
    let o = run(&["check", path(&fixture("rule03-violating.Dockerfile"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("[ENCOURAGED] rule 3 "));
}

#[test]
fn only_and_records() {
    let bad = fixture("rule02-violating.Dockerfile");
    let o = run(&["check", "--only", "1,3", path(&bad)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "");

    let o = run(&["check", "--only", "2", "--format", "records", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let rec: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(rec["rule_id"], 2);
    assert_eq!(rec["level"], "MANDATORY");
    assert!(rec["line_start"].as_u64().unwrap() <= rec["line_end"].as_u64().unwrap());

    assert_eq!(run(&["check", "--only", "999", path(&bad)]).status.code(), Some(2));
}

#[test]
fn check_directory() {
    let o = run(&["check", path(&fixture(""))]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.lines().all(|l| l.contains("-violating.Dockerfile:")), "{out}");
    assert_eq!(out.lines().count(), 34);
}

#[test]
fn custom_rules_file() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("rules.yaml");
    std::fs::write(
        &rules,
        "version: \"1.0\"\nrules:\n  - id: 1\n    name: wget-needs-rm\n    type: implies\n    level: MANDATORY\n    p: [[\"SC-[wget]\"]]\n    q: [[\"SC-[rm]\"]]\n",
    )
    .unwrap();
    let f = dir.path().join("Dockerfile");
    std::fs::write(&f, "FROM debian:12\nRUN wget http://x.org/a.zip\n").unwrap();
    let o = run(&["check", "--rules", path(&rules), path(&f)]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("rule 1 wget-needs-rm"));

    std::fs::write(&rules, "version: \"1.0\"\nrules:\n  - id: 1\n    bogus: true\n").unwrap();
    assert_eq!(run(&["check", "--rules", path(&rules), path(&f)]).status.code(), Some(2));
}

#[test]
fn mine_rejects_bad_support() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["mine", "--min-support", "1.01", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mine_one_file_corpus() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("Dockerfile"),
        "FROM python:3.11\nRUN pip install --no-cache-dir flask\n",
    )
    .unwrap();
    let out = dir.path().join("report.json");
    let manifest = dir.path().join("manifest.jsonl");
    let o = run(&[
        "mine",
        "--out",
        path(&out),
        "--manifest",
        path(&manifest),
        "--jobs",
        "1",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let text = report.to_string();
    assert!(text.contains("SC-[pip]-ARG-[--no-cache-dir]"), "{text}");
    let m = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(m.lines().count(), 1);
    assert!(m.contains("\"gold_eligible\":true"), "{m}");
}
