use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn klay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_klay")).args(args).env_remove("KLAY_THREADS").output().unwrap()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name).display().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn compiled(dir: &Path, name: &str, inputs: &[&str]) -> String {
    let out: PathBuf = dir.join(name);
    let mut args = vec!["compile"];
    args.extend_from_slice(inputs);
    let out_s = out.display().to_string();
    args.extend(["-o", &out_s]);
    assert_eq!(code(&klay(&args)), 0);
    out_s
}

#[test]
fn compile_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let path = compiled(dir.path(), "fig1b.klay", &[&fixture("fig1b.nnf")]);
    let s = json(&klay(&["stats", &path]));
    assert_eq!(s["nodes_per_layer"], serde_json::json!([8, 7, 6, 3, 1]));
    assert_eq!(s["nodes_total"], 25);
    assert_eq!(s["edges_per_layer"][0], 9);
    assert_eq!(s["layer_sparsity"][0].as_f64().unwrap(), 9.0 / 56.0);
}

#[test]
fn compile_merges_inputs_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let sdd = fixture("implies.sdd");
    let two = compiled(dir.path(), "ab.klay", &[&sdd, &fixture("xor2.d4")]);
    assert_eq!(json(&klay(&["stats", &two]))["num_outputs"], 2);

    let one = json(&klay(&["stats", &compiled(dir.path(), "a.klay", &[&sdd])]));
    let dup = json(&klay(&["stats", &compiled(dir.path(), "aa.klay", &[&sdd, &sdd])]));
    assert_eq!(dup["nodes_total"], one["nodes_total"]);
    assert_eq!(dup["num_outputs"], 2);
}

#[test]
fn eval_and_log_eval() {
    let dir = tempfile::tempdir().unwrap();
    let path = compiled(dir.path(), "fig1b.klay", &[&fixture("fig1b.nnf")]);
    let weights = dir.path().join("w.json");
    std::fs::write(&weights, r#"{"p": {"1": 0.5, "2": 0.5, "3": 0.5, "4": 0.5}}"#).unwrap();
    let w = weights.display().to_string();
    assert_eq!(json(&klay(&["eval", &path, &w]))["roots"], serde_json::json!([0.8125]));
    let log = json(&klay(&["eval", "--log", &path, &w]))["roots"][0].as_f64().unwrap();
    assert!((log - 0.8125f64.ln()).abs() < 1e-14);
    let f32 = json(&klay(&["eval", "--f32", &path, &w]))["roots"][0].as_f64().unwrap();
    assert!((f32 - 0.8125).abs() < 1e-6);
}

#[test]
fn boolean_semiring_matches_models() {
    // (a, b) = (1, 0) violates a -> b; (0, 0) satisfies it.
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    std::fs::write(&w, r#"[{"p": {"1": 1, "2": 0}}, {"p": {"1": 0, "2": 0}}]"#).unwrap();
    let out = json(&klay(&["eval", "--semiring", "bool", &fixture("implies.sdd"), &w.display().to_string()]));
    assert_eq!(out["roots"], serde_json::json!([[0.0], [1.0]]));
}

#[test]
fn grad_dump_schema_and_batch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dump.json");
    let o = klay(&["grad", &fixture("fig1b.nnf"), "--batch", "3", "--dump-json", &out.display().to_string()]);
    assert_eq!(code(&o), 0);
    let dump: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(dump["roots"].as_array().unwrap().len(), 3);
    assert_eq!(dump["grad"].as_array().unwrap().len(), 3);
    assert_eq!(dump["grad"][0].as_array().unwrap().len(), 8);
    assert_eq!(dump["literals"], serde_json::json!([1, -1, 2, -2, 3, -3, 4, -4]));
}

#[test]
fn shape_and_option_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    std::fs::write(&w, r#"[{"p": {"1": 0.5, "2": 0.5}}, {"p": {"1": 0.5, "2": 0.5}}]"#).unwrap();
    let w = w.display().to_string();
    let sdd = fixture("implies.sdd");
    assert_eq!(code(&klay(&["eval", &sdd, &w, "--batch", "3"])), 2);
    let missing = dir.path().join("m.json");
    std::fs::write(&missing, r#"{"p": {"1": 0.5}}"#).unwrap();
    assert_eq!(code(&klay(&["eval", &sdd, &missing.display().to_string()])), 2);
    assert_eq!(code(&klay(&["grad", "--semiring", "maxprod", &sdd])), 2);
    assert_eq!(code(&klay(&["eval", "--epsilon", "0.1", &sdd])), 2);
}

#[test]
fn check_passes_on_fixtures() {
    for f in ["fig1b.nnf", "fig6a.nnf", "implies.sdd", "xor2.d4"] {
        let report = json(&klay(&["check", &fixture(f), "--trials", "25", "--seed", "3"]));
        assert_eq!(report["ok"], true, "{f}");
        assert_eq!(report["enumeration"], true);
    }
}

#[test]
fn check_detects_a_wrong_klay() {
    let dir = tempfile::tempdir().unwrap();
    let other = compiled(dir.path(), "xor.klay", &[&fixture("xor2.d4")]);
    let o = klay(&["check", &fixture("implies.sdd"), "--klay", &other]);
    assert_eq!(code(&o), 1);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["ok"], false);
    assert!(report["worst"]["trial"].is_u64());
}

#[test]
fn corrupted_klay_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let good = compiled(dir.path(), "fig1b.klay", &[&fixture("fig1b.nnf")]);
    let text = std::fs::read_to_string(&good).unwrap();
    let r_line = text.lines().find(|l| l.starts_with("R ")).unwrap();
    let mut r: Vec<&str> = r_line.split(' ').skip(1).collect();
    r.reverse();
    let bad = dir.path().join("bad.klay");
    std::fs::write(&bad, text.replacen(r_line, &format!("R {}", r.join(" ")), 1)).unwrap();
    let bad = bad.display().to_string();
    assert_eq!(code(&klay(&["check", &fixture("fig1b.nnf"), "--klay", &bad])), 2);
    assert_eq!(code(&klay(&["stats", &bad])), 2);
    assert_eq!(code(&klay(&["eval", &bad])), 2);
}

#[test]
fn io_failures_exit_3() {
    assert_eq!(code(&klay(&["stats", ""])), 3);
    assert_eq!(code(&klay(&["stats", "/no/such/file.klay"])), 3);
    let o = klay(&["compile", &fixture("fig1b.nnf"), "-o", "/no/such/dir/out.klay"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn parse_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.nnf");
    std::fs::write(&bad, "nnf 2 1 1\nL 1\nA 1 5\n").unwrap();
    assert_eq!(code(&klay(&["compile", &bad.display().to_string(), "-o", "x.klay"])), 2);
    assert_eq!(code(&klay(&["stats", "--format", "nope", &fixture("fig1b.nnf")])), 2);
}

#[test]
fn bench_with_missing_compiler_reports_rows() {
    let o = klay(&["bench", "--vars", "5,6", "--instances", "2", "--compiler", "no-such-compiler-xyz {in} {out}"]);
    assert_eq!(code(&o), 0);
    let rows: Vec<Value> = String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["error"].as_str().unwrap().contains("no-such-compiler-xyz")));
}

#[test]
fn bench_with_builtin_compiler() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.tsv");
    let o = klay(&["bench", "--vars", "8", "--instances", "2", "--repetitions", "2", "--table", &table.display().to_string()]);
    let rows: Vec<Value> = String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["error"].is_null() && r["t_klay_ms"].is_f64()));
    assert_eq!(std::fs::read_to_string(&table).unwrap().lines().count(), 3);
}

#[test]
fn thread_count_from_environment() {
    let run = |t: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_klay")).args(["grad", &fixture("fig1b.nnf"), "--batch", "4"]).env("KLAY_THREADS", t).output().unwrap();
        (code(&o), o.stdout)
    };
    let (c1, o1) = run("1");
    let (c4, o4) = run("4");
    assert_eq!((c1, c4), (0, 0));
    assert_eq!(o1, o4);
    assert_eq!(run("zero").0, 2);
}

#[test]
fn smoothed_compile_counts_models_with_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.klay").display().to_string();
    assert_eq!(code(&klay(&["compile", "--smooth", &fixture("fig1b.nnf"), "-o", &path])), 0);
    let w = dir.path().join("ones.json");
    std::fs::write(&w, r#"{"w": {"1": 1, "-1": 1, "2": 1, "-2": 1, "3": 1, "-3": 1, "4": 1, "-4": 1}}"#).unwrap();
    assert_eq!(json(&klay(&["eval", &path, &w.display().to_string()]))["roots"], serde_json::json!([13.0]));
}
