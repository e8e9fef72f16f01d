use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn hyperfind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperfind")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn bug_exits_with_one_and_reports_a_trace() {
    let out = hyperfind(&[fixture("voting_buggy.hyp").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out);
    assert_eq!(report["verdict"], "bug_found");
    assert_eq!(report["k"], 2);
    let observed = report["counterexample"]["observed_trace"].as_array().unwrap();
    assert_eq!(observed.len(), 2);
    for s in observed {
        assert_eq!(s["memory"]["p1.countA"], 0);
        assert_eq!(s["memory"]["p1.countB"], 1);
    }
    assert!(report["counterexample"]["explanation_smt"].is_string());
    assert!(report["stats"]["combinations"].as_u64().unwrap() >= 1);
}

#[test]
fn clean_run_exits_with_zero() {
    let out = hyperfind(&[fixture("min_flip.hyp").to_str().unwrap(), "--max-observations", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["verdict"], "no_bug");
}

#[test]
fn budget_exhaustion_exits_with_two() {
    let out = hyperfind(&[fixture("factorial.hyp").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let report = json(&out);
    assert_eq!(report["verdict"], "inconclusive");
    assert_eq!(report["reason"], "budget");
}

#[test]
fn input_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.hyp");
    fs::write(&bad, "prog p {\n  x := ;\n}\n").unwrap();
    let out = hyperfind(&[bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2:8"), "{}", String::from_utf8_lossy(&out.stderr));

    let out = hyperfind(&["--max-observations", "x", fixture("once.hyp").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let out = hyperfind(&[fixture("once.hyp").to_str().unwrap(), "--solver", "/nonexistent/solver"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oracle_mode() {
    let f = fixture("voting_buggy.hyp");
    let out = hyperfind(&[f.to_str().unwrap(), "--oracle", "--domain", "0..1", "--max-observations", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out);
    assert_eq!(report["k"], 2);
    let out = hyperfind(&[fixture("voting_correct.hyp").to_str().unwrap(), "--oracle", "--max-observations", "3"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn naive_algorithm_and_text_report() {
    let f = fixture("voting_buggy.hyp");
    let out = hyperfind(&[f.to_str().unwrap(), "--algorithm", "naive", "--max-observations", "2", "--report", "text"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("BUG FOUND after 2"));
}

#[test]
fn emitted_queries_are_standalone_scripts() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture("voting_buggy.hyp");
    let out = hyperfind(&[f.to_str().unwrap(), "--emit-smt", dir.path().to_str().unwrap()]);
    let queries = json(&out)["stats"]["queries"].as_u64().unwrap();
    let mut files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len() as u64, queries);
    assert!(files[0].file_name().unwrap().to_str().unwrap().starts_with("k1_"));
    for p in &files {
        let text = fs::read_to_string(p).unwrap();
        assert!(text.contains("(set-logic LIA)") && text.contains("\n(check-sat)\n"), "{text}");
        assert_eq!(text.matches('(').count(), text.matches(')').count());
    }
}

#[test]
fn dump_graphs_goes_to_stderr() {
    let out = hyperfind(&[fixture("once.hyp").to_str().unwrap(), "--dump-graphs"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("l0 -> l1 [true] p.x := 0"), "{err}");
    json(&out);
}

#[test]
fn bench_records_failures_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("bench.json");
    let entries = serde_json::json!([
        {"name": "escalating_max0", "file": fixture("escalating_0.hyp"), "repetitions": 2},
        {"name": "leak", "file": fixture("secret_pin_leak.hyp"), "repetitions": 1},
        {"name": "missing", "file": "nope.hyp", "repetitions": 1},
    ]);
    fs::write(&manifest, entries.to_string()).unwrap();
    let out = hyperfind(&["--bench", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rows = json(&out);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["k"], 4);
    assert_eq!(rows[0]["repetitions"], 2);
    assert!(rows[0]["median_ms"].as_f64().unwrap() > 0.0);
    assert_eq!(rows[1]["verdict"], "bug_found");
    assert!(rows[2]["error"].as_str().unwrap().contains("nope.hyp"));

    let out = hyperfind(&["--bench", manifest.to_str().unwrap(), "--report", "text"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().count() == 4 && table.contains("error:"), "{table}");
}

#[test]
fn shipped_bench_manifest_parses() {
    let entries = hyperfind::driver::bench::load_manifest(&fixture("bench.json")).unwrap();
    assert!(entries.iter().any(|e| e.file.to_str() == Some("escalating.hyp")));
}
