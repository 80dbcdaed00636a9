use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn klay(args: &[&str]) -> Vec<u8> {
    let o = Command::new(env!("CARGO_BIN_EXE_klay")).args(args).current_dir(corpus()).env_remove("KLAY_THREADS").output().unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o.stdout
}

fn close(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300)
        }
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(x, y)| close(x, y, tol)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| close(v, w, tol)))
        }
        _ => a == b,
    }
}

#[test]
fn dumps_are_reproduced() {
    let manifest: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(corpus().join("manifest.json")).unwrap()).unwrap();
    assert!(!manifest.is_empty());
    for entry in &manifest {
        let args: Vec<&str> = entry["args"].as_array().unwrap().iter().map(|a| a.as_str().unwrap()).collect();
        let name = entry["dump"].as_str().unwrap();
        let expected: Value = serde_json::from_str(&std::fs::read_to_string(corpus().join("dumps").join(name)).unwrap()).unwrap();
        let got: Value = serde_json::from_slice(&klay(&args)).unwrap();
        let tol = if args.contains(&"--f32") { 1e-6 } else { 1e-12 };
        assert!(close(&got, &expected, tol), "{name}: {got} vs {expected}");
    }
}

#[test]
fn klay_files_match_a_fresh_compile() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let f = |n: &str| fixtures.join(n).display().to_string();
    let dir = tempfile::tempdir().unwrap();
    for (name, inputs) in [
        ("fig1b.klay", vec![f("fig1b.nnf")]),
        ("fig1b_fig6a.klay", vec![f("fig1b.nnf"), f("fig6a.nnf")]),
        ("implies_xor.klay", vec![f("implies.sdd"), f("xor2.d4")]),
    ] {
        let out = dir.path().join(name).display().to_string();
        let mut args: Vec<&str> = vec!["compile"];
        args.extend(inputs.iter().map(String::as_str));
        args.extend(["-o", &out]);
        klay(&args);
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(corpus().join(name)).unwrap(), "{name}");
    }
}
