//! End-to-end acceptance suite: one PASS/FAIL line per criterion on stderr,
//! written past the test harness's capture so it always shows.
//!
//! Criteria 1-6 and 8 are hard gates. Criterion 7 (performance and the
//! sparsity trend) is reported only, since wall times depend on the machine.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeSet, HashSet};
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use common::{all_fixtures, finite_differences, fixture, lit, prob_weight, random_circuit, random_probs, rel_err, rng};
use klay_core::bench::{compile_cnf, gen_3cnf, measure};
use klay_core::eval::semiring::{BooleanSemiring, RealSemiring};
use klay_core::eval::{backward, evaluate_semiring, forward, forward_log, forward_real, EvalOptions};
use klay_core::hash::Mixer;
use klay_core::oracle::{postorder_eval, ModelTable};
use klay_core::{
    layerize, layerize_with, tensorize, BitAssignment, Circuit, Domain, LayeredCircuit, Literal, TensorizedCircuit,
    WeightAssignment,
};
use ndarray::Array2;
use rand::Rng;

fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn tc_of(c: &Circuit) -> TensorizedCircuit {
    tensorize(&layerize(std::slice::from_ref(c)).unwrap())
}

fn prob_rows(tc: &TensorizedCircuit, rows: &[Vec<f64>], domain: Domain) -> WeightAssignment<f64> {
    WeightAssignment::from_fn(tc.inputs(), rows.len(), domain, |r, l| {
        let w = prob_weight(&rows[r], l);
        if domain == Domain::Log { w.ln() } else { w }
    })
    .unwrap()
}

/// A Shannon-compiled random 3-CNF with 3 to `max_vars` variables.
fn compiled_cnf(seed: u64, max_vars: u32) -> Circuit {
    let mut r = rng(seed ^ 0x00ac_ce55);
    let vars = r.random_range(3..=max_vars);
    let clauses = ((f64::from(vars) * r.random_range(0.5..4.5)) as usize).max(1);
    compile_cnf(&gen_3cnf(vars, clauses, seed))
}

fn criterion_1() -> String {
    let find = |lc: &LayeredCircuit, layer: usize, children: &[u32]| {
        let mut want = children.to_vec();
        want.sort();
        lc.layer(layer)
            .iter()
            .position(|n| {
                let mut c = n.children.clone();
                c.sort();
                c == want
            })
            .expect("node present")
    };
    let mut lc = layerize(&[fixture("fig1b.nnf")]).unwrap();
    assert_eq!(lc.layer_sizes(), vec![8, 7, 6, 3, 1]);
    let s = |lc: &LayeredCircuit, x: i64| lc.input_slot(lit(x)).unwrap() as u32;
    let drawn: Vec<Vec<u32>> = [vec![-2, -1], vec![-1], vec![2], vec![-3], vec![3, 4], vec![-4], vec![1]]
        .iter()
        .map(|c| c.iter().map(|&x| s(&lc, x)).collect())
        .collect();
    let order: Vec<usize> = drawn.iter().map(|c| find(&lc, 1, c)).collect();
    lc.reorder_layer(1, &order).unwrap();
    let tc = tensorize(&lc);
    assert_eq!(tc.layers()[0].select(), &[3, 1, 1, 2, 5, 4, 6, 7, 0]);
    assert_eq!(tc.layers()[0].reduce(), &[0, 0, 1, 2, 3, 4, 4, 5, 6]);

    let merged = layerize(&[fixture("fig1b.nnf"), fixture("fig6a.nnf")]).unwrap();
    assert_eq!(merged.layer_sizes(), vec![9, 8, 7, 4, 2]);
    let reach = |root: usize| {
        let mut frontier = BTreeSet::from([merged.root_indices()[root]]);
        let mut seen = BTreeSet::new();
        for l in (1..=merged.height()).rev() {
            let mut next = BTreeSet::new();
            for &i in &frontier {
                seen.insert((l, i));
                next.extend(merged.layer(l)[i as usize].children.iter().copied());
            }
            frontier = next;
        }
        seen
    };
    let shared = reach(0).intersection(&reach(1)).count();
    assert!(shared > 0);
    format!("layers [8,7,6,3,1], S1/R1 as drawn, merge [9,8,7,4,2] sharing {shared} gates")
}

fn criterion_2() -> String {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..500 {
        let c = compiled_cnf(seed, 14);
        let tc = tc_of(&c);
        let mut r = rng(seed + 1);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| random_probs(&mut r, c.num_vars(), 0.0, 1.0)).collect();
        let out = forward_real(&tc, &prob_rows(&tc, &rows, Domain::Real)).unwrap();
        let table = ModelTable::new(&c).unwrap();
        for (k, probs) in rows.iter().enumerate() {
            let w = |l: Literal| Some(prob_weight(probs, l));
            let engine = out.outputs()[[k, 0]];
            let post = postorder_eval(&c, w, &RealSemiring).unwrap()[0];
            let wmc = table.wmc(w).unwrap()[0];
            let e = rel_err(engine, post).max(rel_err(engine, wmc));
            assert!(e <= 1e-9, "seed {seed} draw {k}: engine {engine}, postorder {post}, enumeration {wmc}");
            worst = worst.max(e);
        }
    }
    format!("500 circuits x 20 draws, worst rel err {worst:.1e}, {:.1}s", start.elapsed().as_secs_f64())
}

fn criterion_3() -> String {
    let mut worst = [0.0f64; 2];
    for (d, domain) in [Domain::Real, Domain::Log].into_iter().enumerate() {
        for seed in 0..100 {
            let c = random_circuit(seed, 10);
            let tc = tc_of(&c);
            let mut r = rng(seed + 300);
            for draw in 0..5 {
                let probs = random_probs(&mut r, c.num_vars(), 0.05, 0.95);
                let w = prob_rows(&tc, std::slice::from_ref(&probs), domain);
                let trace = forward(&tc, &w, EvalOptions { epsilon: 0.0, retain_trace: true }).unwrap();
                let grad = backward(&tc, &trace, Array2::ones((1, tc.num_outputs())).view()).unwrap();
                let fd = finite_differences(&c, &tc, &probs, domain, 0.0, 1e-6);
                for (s, &f) in fd.iter().enumerate() {
                    let e = rel_err(grad[[0, s]], f);
                    assert!(e <= 1e-5, "{domain:?} seed {seed} draw {draw} slot {s}: {} vs {f}", grad[[0, s]]);
                    worst[d] = worst[d].max(e);
                }
            }
        }
    }
    format!("100 circuits x 5 draws, worst rel err real {:.1e}, log {:.1e}", worst[0], worst[1])
}

fn criterion_4() -> String {
    let mut worst = 0.0f64;
    let mut cases = all_fixtures();
    cases.extend((0..50).map(|s| (format!("random {s}"), random_circuit(s, 10))));
    for (name, c) in &cases {
        let tc = tc_of(c);
        let mut r = rng(4);
        let rows: Vec<Vec<f64>> = (0..10).map(|_| random_probs(&mut r, c.num_vars(), 0.01, 0.99)).collect();
        let real = forward_real(&tc, &prob_rows(&tc, &rows, Domain::Real)).unwrap();
        let log = forward_log(&tc, &prob_rows(&tc, &rows, Domain::Log), 0.0).unwrap();
        for (a, b) in real.outputs().iter().zip(log.outputs()) {
            let e = rel_err(*a, b.exp());
            assert!(e <= 1e-9, "{name}: {a} vs exp({b})");
            worst = worst.max(e);
        }
        // Deterministic probabilities produce log(0) = -inf inputs.
        let hard: Vec<Vec<f64>> = (0..10).map(|_| (0..=c.num_vars()).map(|_| f64::from(r.random_range(0..2u8))).collect()).collect();
        let real = forward_real(&tc, &prob_rows(&tc, &hard, Domain::Real)).unwrap();
        for eps in [0.0, 1e-3] {
            let log = forward_log(&tc, &prob_rows(&tc, &hard, Domain::Log), eps).unwrap();
            for l in 0..log.num_layers() {
                assert!(log.node_values(l).unwrap().iter().all(|v| !v.is_nan()), "{name}: NaN in layer {l}");
            }
            for (a, b) in real.outputs().iter().zip(log.outputs()) {
                assert_eq!(*a == 0.0, *b == f64::NEG_INFINITY, "{name}: real {a}, log {b}");
            }
            let g = backward(&tc, &log, Array2::ones((hard.len(), tc.num_outputs())).view()).unwrap();
            assert!(g.iter().all(|v| !v.is_nan()), "{name}: NaN gradient");
        }
    }
    format!("{} circuits, worst rel err {worst:.1e}; -inf inputs give -inf roots and no NaN", cases.len())
}

fn criterion_5() -> String {
    let mut notes = Vec::new();
    for (name, c) in all_fixtures() {
        assert!(c.num_vars() <= 20);
        let table = ModelTable::new(&c).unwrap();
        let ones = |c: &Circuit| {
            let tc = tc_of(c);
            let w = WeightAssignment::<f64>::from_fn(tc.inputs(), 1, Domain::Real, |_, _| 1.0).unwrap();
            forward_real(&tc, &w).unwrap().outputs()[[0, 0]].round() as u64
        };
        let smoothed = ones(&c.smooth());
        assert_eq!(smoothed, table.count(0), "{name}");
        let raw = ones(&c);
        if raw != table.count(0) {
            notes.push(format!("{name} unsmoothed {raw} vs {}", table.count(0)));
        }

        let tc = tc_of(&c);
        let mut r = rng(5);
        let bits: Vec<u64> = (0..1000).map(|_| r.random_range(0..1u64 << c.num_vars())).collect();
        let w = WeightAssignment::<f64>::from_fn(tc.inputs(), bits.len(), Domain::Real, |row, l| {
            let value = bits[row] >> (l.variable() - 1) & 1 == 1;
            if l.holds(value) { 1.0 } else { 0.0 }
        })
        .unwrap();
        let out = evaluate_semiring(&tc, &w, &BooleanSemiring).unwrap();
        for (row, &b) in bits.iter().enumerate() {
            let expect = c.boolean_eval(&BitAssignment { bits: b, num_vars: c.num_vars() }).unwrap()[0];
            assert_eq!(out[[row, 0]] == 1.0, expect, "{name} assignment {b:#b}");
        }
    }
    format!(
        "all-ones counts equal enumeration on smoothed fixtures ({}); Boolean semiring equals boolean_eval on 1000 assignments per fixture",
        notes.join(", ")
    )
}

struct Collide;

impl Mixer for Collide {
    fn mix(&self, _: u64) -> u64 {
        0
    }
}

fn criterion_6() -> String {
    let mut cases = all_fixtures();
    cases.extend((0..100).map(|s| (format!("random {s}"), random_circuit(s, 12))));
    for (name, c) in &cases {
        let one = layerize(std::slice::from_ref(c)).unwrap();
        let two = layerize(&[c.clone(), c.clone()]).unwrap();
        assert_eq!(two.num_nodes(), one.num_nodes(), "{name}: two copies");

        let collided = layerize_with(std::slice::from_ref(c), &Collide).unwrap();
        assert_eq!(collided.layer_sizes(), one.layer_sizes(), "{name}: collisions changed the structure");
        let mut r = rng(6);
        let probs = random_probs(&mut r, c.num_vars(), 0.05, 0.95);
        let eval = |lc: &LayeredCircuit| {
            let tc = tensorize(lc);
            forward_real(&tc, &prob_rows(&tc, std::slice::from_ref(&probs), Domain::Real)).unwrap().outputs().clone()
        };
        assert_eq!(eval(&collided), eval(&one), "{name}: collisions changed the function");

        for lc in [&one, &two, &collided] {
            for l in 1..=lc.height() {
                let mut seen = HashSet::new();
                for n in lc.layer(l) {
                    let mut key = n.children.clone();
                    key.sort_unstable();
                    assert!(seen.insert(key), "{name}: duplicate node in layer {l}");
                }
            }
        }
    }
    format!("{} circuits: copies merge, forced collisions merge nothing distinct, no duplicate nodes", cases.len())
}

/// Returns the report line and whether the soft thresholds were met.
fn criterion_7() -> (String, bool) {
    let mut best = (0usize, 0.0f64);
    let mut speedups = Vec::new();
    for seed in 0..3u64 {
        let c = compile_cnf(&gen_3cnf(50, 100, seed));
        let m = measure(&c, 64, 5, seed).unwrap();
        let speedup = m.t_naive_ms / m.t_klay_ms;
        speedups.push(format!("{} nodes {:.1}x", m.nodes_src, speedup));
        if m.nodes_src >= 100_000 {
            best = (m.nodes_src, best.1.max(speedup));
        }
    }
    let mut sparsity = Vec::new();
    for vars in [20u32, 30, 40] {
        let mean: f64 = (0..5u64)
            .map(|seed| {
                let c = compile_cnf(&gen_3cnf(vars, (vars * 4) as usize, seed));
                layerize(&[c]).unwrap().stats().sparsity
            })
            .sum::<f64>()
            / 5.0;
        sparsity.push(mean);
    }
    let decreasing = sparsity.windows(2).all(|w| w[1] < w[0]);
    let ok = best.0 >= 100_000 && best.1 >= 5.0 && decreasing;
    let line = format!(
        "forward+backward, batch 64, {} threads, speedup over naive: [{}]; mean sparsity at vars 20/30/40: {:.4}/{:.4}/{:.4}{}",
        rayon::current_num_threads(),
        speedups.join(", "),
        sparsity[0],
        sparsity[1],
        sparsity[2],
        if decreasing { " (decreasing)" } else { " (not decreasing)" }
    );
    (line, ok)
}

fn criterion_8() -> String {
    for seed in 0..100 {
        let tc = tc_of(&random_circuit(seed, 14));
        let text = tc.to_klay_string();
        let back = TensorizedCircuit::read_klay(text.as_bytes()).unwrap();
        assert_eq!(back, tc, "seed {seed}");
        assert_eq!(back.to_klay_string(), text, "seed {seed}");
    }
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("fig1b.klay");
    std::fs::write(&good, tc_of(&fixture("fig1b.nnf")).to_klay_string()).unwrap();
    let text = std::fs::read_to_string(&good).unwrap();
    let exit = |path: &std::path::Path| {
        Command::new(env!("CARGO_BIN_EXE_klay")).arg("stats").arg(path).output().unwrap().status.code().unwrap()
    };
    assert_eq!(exit(&good), 0);
    let corruptions = [
        text.replacen("klay 1", "klay 2", 1),
        text.replacen("R 0 1 1 2 3 4 4 5 6", "R 6 5 4 4 3 2 1 1 0", 1),
        text.replacen("layer 1 prod", "layer 1 sum", 1),
        text[..text.len() / 2].to_string(),
        String::new(),
    ];
    for (k, bad) in corruptions.iter().enumerate() {
        let path = dir.path().join(format!("bad{k}.klay"));
        std::fs::write(&path, bad).unwrap();
        assert_eq!(exit(&path), 2, "corruption {k}");
    }
    assert_eq!(exit(&dir.path().join("missing.klay")), 3);
    format!("100 bit-exact round trips; {} malformed files exit 2, missing file exits 3", corruptions.len())
}

fn run(n: usize, f: impl FnOnce() -> String) -> bool {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(detail) => {
            report(&format!("PASS criterion {n}: {detail}"));
            true
        }
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            report(&format!("FAIL criterion {n}: {msg}"));
            false
        }
    }
}

#[test]
fn acceptance() {
    let hard = [
        run(1, criterion_1),
        run(2, criterion_2),
        run(3, criterion_3),
        run(4, criterion_4),
        run(5, criterion_5),
        run(6, criterion_6),
    ];
    match catch_unwind(criterion_7) {
        Ok((line, true)) => report(&format!("PASS criterion 7 (soft): {line}")),
        Ok((line, false)) => report(&format!("FAIL criterion 7 (soft, not gating): {line}")),
        Err(_) => report("FAIL criterion 7 (soft, not gating): benchmark did not complete"),
    }
    let eight = run(8, criterion_8);
    let failed: Vec<usize> =
        hard.iter().chain([&eight]).zip([1, 2, 3, 4, 5, 6, 8]).filter(|(ok, _)| !**ok).map(|(_, n)| n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
