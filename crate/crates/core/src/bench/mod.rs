//! Synthetic benchmark pipeline: random 3-CNF, compilation, layering and
//! timed forward+backward passes against the naive baseline.

pub mod external;
pub mod generate;
pub mod shannon;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Literal};
use crate::eval::semiring::RealSemiring;
use crate::eval::{backward, forward_real, Domain, WeightAssignment};
use crate::layerize::layerize;
use crate::oracle::{postorder_eval, NaiveEvaluator};
use crate::scalar::relative_error;
use crate::tensorize::tensorize;

pub use external::{compile_external, CompileError};
pub use generate::{gen_3cnf, random_dag, DagConfig};
pub use shannon::compile_cnf;

/// Tolerance of the correctness check that precedes every timing.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// One benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub vars: u32,
    pub clauses: usize,
    pub seed: u64,
    /// External compiler template with `{in}` / `{out}`; the built-in
    /// Shannon compiler is used when absent.
    pub compiler_cmd: Option<String>,
    pub repetitions: usize,
    pub timeout: Duration,
    /// Weight rows per evaluation.
    pub batch: usize,
}

impl BenchConfig {
    pub fn new(vars: u32, clauses: usize, seed: u64) -> Self {
        BenchConfig {
            vars,
            clauses,
            seed,
            compiler_cmd: None,
            repetitions: 10,
            timeout: Duration::from_secs(60),
            batch: 1,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.vars < 3 {
            return Err(format!("vars must be at least 3, got {}", self.vars));
        }
        if self.clauses < 1 {
            return Err("clauses must be at least 1".into());
        }
        if self.repetitions < 1 || self.batch < 1 {
            return Err("repetitions and batch must be at least 1".into());
        }
        Ok(())
    }
}

/// One line of the JSON-lines report. Measurement fields are absent when
/// the instance failed, in which case `error` says why.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub vars: u32,
    pub clauses: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes_src: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes_klay: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_naive_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_klay_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_compile_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_layerize_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_json_lines(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
            .collect()
    }

    /// Running totals of the `n` fastest evaluations of each method, every
    /// method sorted on its own.
    pub fn cumulative_table(&self) -> String {
        let naive = cumulative(&self.rows.iter().filter_map(|r| r.t_naive_ms).collect::<Vec<_>>());
        let klay = cumulative(&self.rows.iter().filter_map(|r| r.t_klay_ms).collect::<Vec<_>>());
        let mut out = String::from("n\tnaive_ms\tklay_ms\n");
        for (n, (a, b)) in naive.iter().zip(&klay).enumerate() {
            let _ = writeln!(out, "{}\t{a:.3}\t{b:.3}", n + 1);
        }
        out
    }
}

/// Prefix sums of `times` sorted ascending.
pub fn cumulative(times: &[f64]) -> Vec<f64> {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .iter()
        .scan(0.0, |acc, &t| {
            *acc += t;
            Some(*acc)
        })
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Sizes and timings of one circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub nodes_src: usize,
    pub nodes_klay: usize,
    pub layers: usize,
    pub sparsity: f64,
    /// Layerization plus tensorization.
    pub t_layerize_ms: f64,
    /// Median forward+backward time of the naive evaluator over all rows.
    pub t_naive_ms: f64,
    /// Median forward+backward time of the layered engine over all rows.
    pub t_klay_ms: f64,
}

/// Layers `circuit`, checks the engine against the oracles on random
/// weights, then times both evaluators. Timing runs one after the other.
pub fn measure(circuit: &Circuit, batch: usize, repetitions: usize, seed: u64) -> Result<Measurement, String> {
    let start = Instant::now();
    let layered = layerize(std::slice::from_ref(circuit)).map_err(|e| e.to_string())?;
    let tc = tensorize(&layered);
    let t_layerize_ms = ms(start.elapsed());

    let mut rng = generate::rng(seed);
    let probs: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..=circuit.num_vars()).map(|_| rng.random_range(0.05..0.95)).collect())
        .collect();
    let weight = |row: usize, lit: Literal| {
        let p = probs[row][lit.variable() as usize];
        if lit.is_positive() { p } else { 1.0 - p }
    };
    let w = WeightAssignment::<f64>::from_fn(tc.inputs(), batch, Domain::Real, weight).map_err(|e| e.to_string())?;
    let seed_grad = Array2::from_elem((batch, tc.num_outputs()), 1.0);
    let naive = NaiveEvaluator::new(circuit, tc.inputs()).map_err(|e| e.to_string())?;
    let ones = vec![1.0; circuit.roots().len()];

    let trace = forward_real(&tc, &w).map_err(|e| e.to_string())?;
    let grad = backward(&tc, &trace, seed_grad.view()).map_err(|e| e.to_string())?;
    for row in 0..batch {
        let expect = postorder_eval(circuit, |l| Some(weight(row, l)), &RealSemiring).map_err(|e| e.to_string())?;
        let (_, naive_grad) = naive.forward_backward(w.values().row(row).as_slice().expect("row-major"), &ones);
        let roots_ok = expect.iter().enumerate().all(|(k, &e)| relative_error(trace.outputs()[[row, k]], e) <= ORACLE_TOLERANCE);
        let grad_ok = naive_grad.iter().enumerate().all(|(s, &g)| relative_error(grad[[row, s]], g) <= ORACLE_TOLERANCE);
        if !roots_ok || !grad_ok {
            return Err(format!("engine disagrees with the oracles on weight row {row}"));
        }
    }

    let mut naive_times = Vec::with_capacity(repetitions);
    let mut klay_times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for row in w.values().rows() {
            std::hint::black_box(naive.forward_backward(row.as_slice().expect("row-major"), &ones));
        }
        naive_times.push(ms(start.elapsed()));
        let start = Instant::now();
        let trace = forward_real(&tc, &w).map_err(|e| e.to_string())?;
        std::hint::black_box(backward(&tc, &trace, seed_grad.view()).map_err(|e| e.to_string())?);
        klay_times.push(ms(start.elapsed()));
    }
    let stats = layered.stats();
    Ok(Measurement {
        nodes_src: circuit.reachable_len(),
        nodes_klay: layered.num_nodes(),
        layers: stats.num_layers(),
        sparsity: stats.sparsity,
        t_layerize_ms,
        t_naive_ms: median(naive_times),
        t_klay_ms: median(klay_times),
    })
}

/// Runs every instance; failures become error rows instead of aborting.
pub fn run_bench(configs: &[BenchConfig]) -> BenchReport {
    let rows = configs
        .iter()
        .map(|cfg| {
            let mut row = BenchRow { vars: cfg.vars, clauses: cfg.clauses, seed: cfg.seed, ..BenchRow::default() };
            if let Err(e) = run_instance(cfg, &mut row) {
                log::warn!("instance vars={} clauses={} seed={}: {e}", cfg.vars, cfg.clauses, cfg.seed);
                row.error = Some(e);
            }
            row
        })
        .collect();
    BenchReport { rows }
}

fn run_instance(cfg: &BenchConfig, row: &mut BenchRow) -> Result<(), String> {
    cfg.validate()?;
    let cnf = gen_3cnf(cfg.vars, cfg.clauses, cfg.seed);
    let start = Instant::now();
    let circuit = match &cfg.compiler_cmd {
        Some(cmd) => compile_external(&cnf, cmd, cfg.timeout).map_err(|e| e.to_string())?,
        None => compile_cnf(&cnf),
    };
    row.t_compile_ms = Some(ms(start.elapsed()));
    let m = measure(&circuit, cfg.batch, cfg.repetitions, cfg.seed)?;
    row.nodes_src = Some(m.nodes_src);
    row.nodes_klay = Some(m.nodes_klay);
    row.layers = Some(m.layers);
    row.sparsity = Some(m.sparsity);
    row.t_layerize_ms = Some(m.t_layerize_ms);
    row.t_naive_ms = Some(m.t_naive_ms);
    row.t_klay_ms = Some(m.t_klay_ms);
    Ok(())
}
