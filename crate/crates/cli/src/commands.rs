use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use klay_core::bench::{run_bench, BenchConfig};
use klay_core::eval::semiring::RealSemiring;
use klay_core::eval::{backward, dump_json, evaluate_semiring, forward, parse_weights_json, EvalOptions};
use klay_core::oracle::{postorder_eval, ModelTable, MAX_ENUMERATION_VARS};
use klay_core::parse::{read_circuit_file, CircuitFormat};
use klay_core::scalar::relative_error;
use klay_core::{
    layerize, tensorize, BuiltinSemiring, Circuit, Domain, Literal, Scalar, TensorizedCircuit, WeightAssignment,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{CliError, EXIT_MISMATCH, EXIT_OK};
use crate::{BenchArgs, EvalArgs};

/// Tolerance of `check`.
const CHECK_TOLERANCE: f64 = 1e-9;
/// `check` enumerates models up to this many variables.
const CHECK_ENUMERATION_VARS: u32 = 20;

fn read_source(path: &Path, format: Option<CircuitFormat>) -> Result<Circuit, CliError> {
    read_circuit_file(path, format).map_err(|e| CliError::from(e).in_file(path))
}

fn is_klay(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("klay"))
}

fn read_klay(path: &Path) -> Result<TensorizedCircuit, CliError> {
    let file = File::open(path).map_err(|e| CliError::from(e).in_file(path))?;
    TensorizedCircuit::read_klay(BufReader::new(file)).map_err(|e| CliError::from(e).in_file(path))
}

/// A `.klay` file as is, or a source circuit layered on the fly.
fn load(path: &Path, format: Option<CircuitFormat>) -> Result<(TensorizedCircuit, Option<Circuit>), CliError> {
    if is_klay(path) && format.is_none() {
        return Ok((read_klay(path)?, None));
    }
    let c = read_source(path, format)?;
    Ok((tensorize(&layerize(std::slice::from_ref(&c))?), Some(c)))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::from(e).in_file(path)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn stats_json(tc: &TensorizedCircuit, source: Option<&Circuit>) -> Value {
    let mut v = serde_json::to_value(tc.stats()).expect("stats serialize");
    let obj = v.as_object_mut().expect("stats is an object");
    obj.insert("num_inputs".into(), json!(tc.num_inputs()));
    obj.insert("num_vars".into(), json!(tc.num_vars()));
    obj.insert("num_outputs".into(), json!(tc.num_outputs()));
    if let Some(c) = source {
        obj.insert("nodes_src".into(), json!(c.reachable_len()));
    }
    v
}

pub fn compile(
    inputs: &[std::path::PathBuf],
    out: &Path,
    smooth: bool,
    format: Option<CircuitFormat>,
) -> Result<u8, CliError> {
    let mut circuits = inputs.iter().map(|p| read_source(p, format)).collect::<Result<Vec<_>, _>>()?;
    if smooth {
        circuits = circuits.iter().map(Circuit::smooth).collect();
    }
    let tc = tensorize(&layerize(&circuits)?);
    let file = File::create(out).map_err(|e| CliError::from(e).in_file(out))?;
    let mut writer = BufWriter::new(file);
    tc.write_klay(&mut writer).and_then(|_| writer.flush()).map_err(|e| CliError::from(e).in_file(out))?;
    let nodes_src: usize = circuits.iter().map(Circuit::reachable_len).sum();
    let mut line = stats_json(&tc, None);
    line["nodes_src"] = json!(nodes_src);
    println!("{line}");
    Ok(EXIT_OK)
}

pub fn stats(path: &Path, format: Option<CircuitFormat>) -> Result<u8, CliError> {
    let (tc, source) = load(path, format)?;
    println!("{}", stats_json(&tc, source.as_ref()));
    Ok(EXIT_OK)
}

fn weights<T: Scalar>(args: &EvalArgs, tc: &TensorizedCircuit, domain: Domain) -> Result<WeightAssignment<T>, CliError> {
    let w = match &args.weights {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).in_file(path))?;
            let mut rows = parse_weights_json(&text).map_err(|e| CliError::from(e).in_file(path))?;
            match args.batch {
                Some(n) if rows.len() == 1 => rows = vec![rows[0].clone(); n],
                Some(n) if n != rows.len() => {
                    return Err(CliError::invalid(format!(
                        "--batch {n} does not match the {} weight rows of {}",
                        rows.len(),
                        path.display()
                    )))
                }
                _ => {}
            }
            WeightAssignment::from_literal_weights(tc.inputs(), &rows, domain)?
        }
        None => WeightAssignment::uniform(tc.inputs(), args.batch.unwrap_or(1), 0.5, domain)?,
    };
    if w.batch() == 0 {
        return Err(CliError::invalid("batch must be at least 1"));
    }
    Ok(w)
}

fn eval_typed<T: Scalar>(args: &EvalArgs, tc: &TensorizedCircuit, grad: bool) -> Result<Value, CliError> {
    let semiring = if args.log { BuiltinSemiring::Log } else { args.semiring };
    match semiring {
        BuiltinSemiring::Real | BuiltinSemiring::Log => {
            let domain = if semiring == BuiltinSemiring::Log { Domain::Log } else { Domain::Real };
            if domain == Domain::Real && args.epsilon != 0.0 {
                return Err(CliError::invalid("--epsilon only applies to the log domain"));
            }
            let w = weights::<T>(args, tc, domain)?;
            let options = EvalOptions { epsilon: T::from_f64_lossy(args.epsilon), retain_trace: grad };
            let trace = forward(tc, &w, options)?;
            let g = if grad {
                let seed = Array2::from_elem((w.batch(), tc.num_outputs()), T::one());
                Some(backward(tc, &trace, seed.view())?)
            } else {
                None
            };
            Ok(dump_json(trace.outputs().view(), g.as_ref().map(|g| g.view()), tc.inputs()))
        }
        other => {
            if grad {
                return Err(CliError::invalid(format!("gradients are only defined for the real and log semirings, not {other}")));
            }
            let w = weights::<T>(args, tc, Domain::Real)?;
            let out = evaluate_semiring(tc, &w, &other)?;
            Ok(dump_json(out.view(), None, tc.inputs()))
        }
    }
}

pub fn eval(args: &EvalArgs, grad: bool) -> Result<u8, CliError> {
    let (tc, _) = load(&args.circuit, args.source.format)?;
    let dump = if args.f32 { eval_typed::<f32>(args, &tc, grad)? } else { eval_typed::<f64>(args, &tc, grad)? };
    write_output(args.out.as_deref(), &format!("{dump}\n"))?;
    Ok(EXIT_OK)
}

/// Largest relative error seen, with where it happened.
#[derive(Debug, Default)]
struct Worst {
    error: f64,
    trial: usize,
    root: usize,
    engine: f64,
    oracle: f64,
    oracle_name: &'static str,
}

impl Worst {
    fn update(&mut self, trial: usize, root: usize, engine: f64, oracle: f64, oracle_name: &'static str) {
        let e = relative_error(engine, oracle);
        let e = if e.is_nan() { f64::INFINITY } else { e };
        if e > self.error || self.oracle_name.is_empty() {
            *self = Worst { error: e, trial, root, engine, oracle, oracle_name };
        }
    }
}

pub fn check(
    source: &Path,
    klay: Option<&Path>,
    trials: usize,
    seed: u64,
    format: Option<CircuitFormat>,
) -> Result<u8, CliError> {
    let circuit = read_source(source, format)?;
    let tc = match klay {
        Some(path) => read_klay(path)?,
        None => tensorize(&layerize(std::slice::from_ref(&circuit))?),
    };
    if tc.num_outputs() != circuit.roots().len() {
        let msg = format!("circuit has {} roots but the layered form has {} outputs", circuit.roots().len(), tc.num_outputs());
        println!("{}", json!({"ok": false, "error": msg}));
        return Ok(EXIT_MISMATCH);
    }
    let num_vars = circuit.num_vars().max(tc.num_vars());
    let table = if num_vars <= CHECK_ENUMERATION_VARS.min(MAX_ENUMERATION_VARS) {
        Some(ModelTable::new(&circuit).map_err(CliError::invalid)?)
    } else {
        log::info!("{num_vars} variables: skipping enumeration");
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..trials).map(|_| (0..=num_vars).map(|_| rng.random_range(0.05..=0.95)).collect()).collect();
    let weight = |probs: &[f64], l: Literal| {
        let p = probs[l.variable() as usize];
        if l.is_positive() { p } else { 1.0 - p }
    };
    let mut worst = Worst::default();
    if trials > 0 {
        let w = WeightAssignment::<f64>::from_fn(tc.inputs(), trials, Domain::Real, |r, l| weight(&draws[r], l))?;
        let out = forward(&tc, &w, EvalOptions { epsilon: 0.0, retain_trace: false })?;
        for (t, probs) in draws.iter().enumerate() {
            let w = |l: Literal| Some(weight(probs, l));
            let post = postorder_eval(&circuit, w, &RealSemiring).map_err(CliError::invalid)?;
            for (k, &p) in post.iter().enumerate() {
                worst.update(t, k, out.outputs()[[t, k]], p, "postorder");
            }
            if let Some(table) = &table {
                let wmc = table.wmc(w).map_err(CliError::invalid)?;
                for (k, &m) in wmc.iter().enumerate() {
                    worst.update(t, k, out.outputs()[[t, k]], m, "enumeration");
                }
            }
        }
    }
    let ok = worst.error <= CHECK_TOLERANCE;
    let mut report = json!({
        "ok": ok,
        "trials": trials,
        "roots": tc.num_outputs(),
        "enumeration": table.is_some(),
        "worst_rel_err": worst.error,
    });
    if !ok {
        report["worst"] = json!({
            "trial": worst.trial,
            "root": worst.root,
            "engine": klay_core::eval::json_number(worst.engine),
            "oracle": klay_core::eval::json_number(worst.oracle),
            "oracle_name": worst.oracle_name,
        });
    }
    println!("{report}");
    Ok(if ok { EXIT_OK } else { EXIT_MISMATCH })
}

pub fn bench(args: &BenchArgs) -> Result<u8, CliError> {
    if !(args.timeout > 0.0 && args.timeout.is_finite()) {
        return Err(CliError::invalid("--timeout must be positive"));
    }
    if !(args.ratio > 0.0 && args.ratio.is_finite()) {
        return Err(CliError::invalid("--ratio must be positive"));
    }
    let configs: Vec<BenchConfig> = args
        .vars
        .iter()
        .flat_map(|&vars| {
            (0..args.instances).map(move |i| {
                let mut cfg = BenchConfig::new(vars, ((f64::from(vars) * args.ratio).round() as usize).max(1), args.seed + i);
                cfg.compiler_cmd = args.compiler.clone();
                cfg.timeout = Duration::from_secs_f64(args.timeout);
                cfg.repetitions = args.repetitions;
                cfg.batch = args.batch;
                cfg
            })
        })
        .collect();
    let report = run_bench(&configs);
    write_output(args.out.as_deref(), &report.to_json_lines())?;
    if let Some(path) = &args.table {
        std::fs::write(path, report.cumulative_table()).map_err(|e| CliError::from(e).in_file(path))?;
    }
    Ok(EXIT_OK)
}
