//! Batched forward and reverse evaluation of a [`TensorizedCircuit`].
//!
//! Every layer is a gather of the previous layer's values through `S`
//! followed by a segment reduction keyed by `R`. Values are stored node-major
//! (`[width, batch]`) so that each segment reduces contiguous rows; the
//! public accessors expose the `[batch, width]` view. Segments are reduced
//! in parallel, but always sequentially left to right within a segment, so
//! results are bit-identical across runs and thread counts.

pub mod semiring;
mod weights;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::Literal;
use crate::scalar::Scalar;
use crate::tensorize::{Output, ReduceOp, TensorLayer, TensorizedCircuit};
use semiring::Semiring;

pub use weights::{dump_json, json_number, parse_weights_json, LiteralWeights};

/// Interpretation of input and node values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Probabilities or other real weights.
    Real,
    /// Natural logarithms of non-negative real weights.
    Log,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("expected {expected:?}-domain weights, got {found:?}")]
    Domain { expected: Domain, found: Domain },
    #[error("epsilon must be non-negative, got {0}")]
    NegativeEpsilon(f64),
    #[error("weight at row {row}, slot {slot} is {value}, which is not valid in the {domain:?} domain")]
    InvalidWeight { row: usize, slot: usize, value: f64, domain: Domain },
    #[error("trace does not match the circuit: {0}")]
    TraceMismatch(String),
    #[error("no weight given for literal {0}")]
    MissingWeight(Literal),
    #[error("invalid weight file: {0}")]
    WeightFormat(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Input values, one row per batch element and one column per input slot.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAssignment<T> {
    values: Array2<T>,
    domain: Domain,
}

impl<T: Scalar> WeightAssignment<T> {
    /// Rejects empty batches, non-finite real weights and `NaN` / `+inf`
    /// log weights.
    pub fn new(values: Array2<T>, domain: Domain) -> Result<Self, EvalError> {
        if values.nrows() == 0 {
            return Err(EvalError::Shape("a weight batch needs at least one row".into()));
        }
        for ((row, slot), &v) in values.indexed_iter() {
            let ok = match domain {
                Domain::Real => v.is_finite(),
                Domain::Log => !v.is_nan() && v != T::infinity(),
            };
            if !ok {
                return Err(EvalError::InvalidWeight { row, slot, value: v.to_f64_lossy(), domain });
            }
        }
        Ok(WeightAssignment { values, domain })
    }

    /// Builds a `[batch, inputs.len()]` matrix from `f(row, literal)`.
    pub fn from_fn(
        inputs: &[Literal],
        batch: usize,
        domain: Domain,
        mut f: impl FnMut(usize, Literal) -> T,
    ) -> Result<Self, EvalError> {
        let values = Array2::from_shape_fn((batch, inputs.len()), |(row, slot)| f(row, inputs[slot]));
        Self::new(values, domain)
    }

    /// Probability `p` on every positive literal and `1 - p` on every
    /// negative one, converted to `domain`.
    pub fn uniform(inputs: &[Literal], batch: usize, p: f64, domain: Domain) -> Result<Self, EvalError> {
        Self::from_fn(inputs, batch, domain, |_, lit| {
            let w = if lit.is_positive() { p } else { 1.0 - p };
            T::from_f64_lossy(match domain {
                Domain::Real => w,
                Domain::Log => w.ln(),
            })
        })
    }

    /// Converts parsed weight rows into a matrix over `inputs`.
    ///
    /// Probability rows give `p` to `x` and `1 - p` to `-x`; in the log
    /// domain both are then logged. Explicit rows are taken verbatim as
    /// values of `domain`.
    pub fn from_literal_weights(inputs: &[Literal], rows: &[LiteralWeights], domain: Domain) -> Result<Self, EvalError> {
        let mut values = Array2::from_elem((rows.len(), inputs.len()), T::zero());
        for (r, row) in rows.iter().enumerate() {
            for (slot, &lit) in inputs.iter().enumerate() {
                let v = match row {
                    LiteralWeights::Probabilities(p) => {
                        let p = *p.get(&lit.variable()).ok_or(EvalError::MissingWeight(lit))?;
                        let w = if lit.is_positive() { p } else { 1.0 - p };
                        match domain {
                            Domain::Real => w,
                            Domain::Log => w.ln(),
                        }
                    }
                    LiteralWeights::Explicit(w) => *w.get(&lit).ok_or(EvalError::MissingWeight(lit))?,
                };
                values[[r, slot]] = T::from_f64_lossy(v);
            }
        }
        Self::new(values, domain)
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn batch(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_inputs(&self) -> usize {
        self.values.ncols()
    }

    /// Natural log of a real-domain assignment.
    pub fn to_log(&self) -> Result<Self, EvalError> {
        match self.domain {
            Domain::Log => Ok(self.clone()),
            Domain::Real => Self::new(self.values.mapv(T::ln), Domain::Log),
        }
    }
}

/// Result of a forward pass: outputs and, if retained, every layer's values.
#[derive(Debug, Clone)]
pub struct EvalTrace<T> {
    /// Node-major `[width, batch]` per layer, empty unless retained.
    layers: Vec<Array2<T>>,
    outputs: Array2<T>,
    domain: Domain,
    epsilon: T,
}

impl<T: Scalar> EvalTrace<T> {
    /// `[batch, num_outputs]`, constant outputs included.
    pub fn outputs(&self) -> &Array2<T> {
        &self.outputs
    }

    /// `[batch, width_l]` values of layer `l`; `None` if the trace was not
    /// retained.
    pub fn node_values(&self, l: usize) -> Option<ArrayView2<'_, T>> {
        self.layers.get(l).map(|a| a.t())
    }

    pub fn is_retained(&self) -> bool {
        !self.layers.is_empty()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn batch(&self) -> usize {
        self.outputs.nrows()
    }
}

/// Knobs for [`forward`].
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions<T> {
    /// Added inside the logarithm of log-domain sums.
    pub epsilon: T,
    /// Keep every layer for [`backward`]; otherwise only two layers are
    /// alive at a time.
    pub retain_trace: bool,
}

impl<T: Scalar> Default for EvalOptions<T> {
    fn default() -> Self {
        EvalOptions { epsilon: T::zero(), retain_trace: true }
    }
}

/// Real-domain forward pass keeping the full trace.
pub fn forward_real<T: Scalar>(tc: &TensorizedCircuit, w: &WeightAssignment<T>) -> Result<EvalTrace<T>, EvalError> {
    expect_domain(w, Domain::Real)?;
    forward(tc, w, EvalOptions::default())
}

/// Log-domain forward pass keeping the full trace.
pub fn forward_log<T: Scalar>(
    tc: &TensorizedCircuit,
    w: &WeightAssignment<T>,
    epsilon: T,
) -> Result<EvalTrace<T>, EvalError> {
    expect_domain(w, Domain::Log)?;
    forward(tc, w, EvalOptions { epsilon, retain_trace: true })
}

/// Forward pass in the domain of `w`.
pub fn forward<T: Scalar>(
    tc: &TensorizedCircuit,
    w: &WeightAssignment<T>,
    options: EvalOptions<T>,
) -> Result<EvalTrace<T>, EvalError> {
    check_inputs(tc, w)?;
    if options.epsilon.is_nan() || options.epsilon < T::zero() {
        return Err(EvalError::NegativeEpsilon(options.epsilon.to_f64_lossy()));
    }
    let (layers, outputs) = match w.domain {
        Domain::Real => run_forward(tc, w.values(), &RealKernel, options.retain_trace, |b| {
            if b { T::one() } else { T::zero() }
        }),
        Domain::Log => {
            let kernel = LogKernel { epsilon: options.epsilon };
            run_forward(tc, w.values(), &kernel, options.retain_trace, |b| {
                if b { T::zero() } else { T::neg_infinity() }
            })
        }
    };
    Ok(EvalTrace { layers, outputs, domain: w.domain, epsilon: options.epsilon })
}

/// Outputs `[batch, num_outputs]` under an arbitrary semiring. The domain
/// tag of `w` is ignored; its values must lie in the semiring's carrier.
pub fn evaluate_semiring<T: Scalar, S: Semiring<T>>(
    tc: &TensorizedCircuit,
    w: &WeightAssignment<T>,
    semiring: &S,
) -> Result<Array2<T>, EvalError> {
    check_inputs(tc, w)?;
    let kernel = SemiringKernel(semiring);
    let (_, outputs) = run_forward(tc, w.values(), &kernel, false, |b| {
        if b { semiring.one() } else { semiring.zero() }
    });
    Ok(outputs)
}

/// Gradient `[batch, num_inputs]` of `sum_r seed[., r] * output_r` with
/// respect to the inputs, in the domain of the trace (log-domain gradients
/// are with respect to the log weights).
pub fn backward<T: Scalar>(
    tc: &TensorizedCircuit,
    trace: &EvalTrace<T>,
    seed: ArrayView2<'_, T>,
) -> Result<Array2<T>, EvalError> {
    if !trace.is_retained() {
        return Err(EvalError::TraceMismatch("forward pass did not retain its layers".into()));
    }
    if trace.layers.len() != tc.num_layers() + 1 {
        return Err(EvalError::TraceMismatch(format!(
            "trace has {} layers, circuit has {}",
            trace.layers.len(),
            tc.num_layers() + 1
        )));
    }
    let batch = trace.batch();
    for (l, values) in trace.layers.iter().enumerate() {
        if values.dim() != (tc.width(l), batch) {
            return Err(EvalError::TraceMismatch(format!("layer {l} has {} nodes, expected {}", values.nrows(), tc.width(l))));
        }
    }
    if seed.dim() != (batch, tc.num_outputs()) {
        return Err(EvalError::Shape(format!(
            "seed is {:?}, expected [{batch}, {}]",
            seed.dim(),
            tc.num_outputs()
        )));
    }

    let top = tc.num_layers();
    let mut grad = Array2::from_elem((tc.width(top), batch), T::zero());
    for (pos, out) in tc.outputs().enumerate() {
        if let Output::Node(i) = out {
            for b in 0..batch {
                grad[[i, b]] += seed[[b, pos]];
            }
        }
    }
    for l in (1..=top).rev() {
        let layer = &tc.layers()[l - 1];
        let prev = slice(&trace.layers[l - 1]);
        let cur = slice(&trace.layers[l]);
        // Sums of reals and products of logs pass the parent's adjoint to
        // every edge unchanged, so those rows are gathered directly.
        let passes_through = matches!(
            (trace.domain, layer.op()),
            (Domain::Real, ReduceOp::Sum) | (Domain::Log, ReduceOp::Product)
        );
        let grad_edges = if passes_through {
            Vec::new()
        } else {
            edge_adjoints(layer, prev, cur, slice(&grad), batch, trace.domain, trace.epsilon)
        };
        let (source, by_edge): (&[T], bool) = if passes_through { (slice(&grad), false) } else { (&grad_edges, true) };
        let mut grad_prev = Array2::from_elem((tc.width(l - 1), batch), T::zero());
        grad_prev
            .as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(batch)
            .with_min_len(min_len(batch, 1))
            .enumerate()
            .for_each(|(c, out)| {
                for &e in layer.fanout(c) {
                    let index = if by_edge { e } else { layer.reduce()[e as usize] };
                    for (r, &g) in out.iter_mut().zip(row(source, index, batch)) {
                        *r += g;
                    }
                }
            });
        grad = grad_prev;
    }
    Ok(grad.reversed_axes().as_standard_layout().into_owned())
}

fn expect_domain<T>(w: &WeightAssignment<T>, expected: Domain) -> Result<(), EvalError> {
    if w.domain != expected {
        return Err(EvalError::Domain { expected, found: w.domain });
    }
    Ok(())
}

fn check_inputs<T: Scalar>(tc: &TensorizedCircuit, w: &WeightAssignment<T>) -> Result<(), EvalError> {
    if w.num_inputs() != tc.num_inputs() {
        return Err(EvalError::Shape(format!(
            "weights have {} columns, circuit has {} inputs",
            w.num_inputs(),
            tc.num_inputs()
        )));
    }
    Ok(())
}

fn slice<T>(a: &Array2<T>) -> &[T] {
    a.as_slice().expect("node values are kept in standard layout")
}

/// Smallest number of rows handed to one rayon task, aiming at a few
/// thousand scalar operations per task.
fn min_len(batch: usize, fan_in: usize) -> usize {
    (4096 / (batch * fan_in).max(1)).max(1)
}

/// Reduces one segment of a layer into `out` (one row of `batch` values).
trait Kernel<T: Scalar>: Sync {
    fn reduce(&self, op: ReduceOp, children: &[u32], prev: &[T], batch: usize, out: &mut [T], scratch: &mut Vec<T>);
}

fn row<T>(values: &[T], index: u32, batch: usize) -> &[T] {
    &values[index as usize * batch..(index as usize + 1) * batch]
}

fn run_forward<T: Scalar, K: Kernel<T>>(
    tc: &TensorizedCircuit,
    weights: &Array2<T>,
    kernel: &K,
    retain: bool,
    constant: impl Fn(bool) -> T,
) -> (Vec<Array2<T>>, Array2<T>) {
    let batch = weights.nrows();
    let mut layers = Vec::new();
    let mut prev = weights.t().as_standard_layout().into_owned();
    for layer in tc.layers() {
        let mut next = Array2::from_elem((layer.width(), batch), T::zero());
        let fan_in = layer.num_edges() / layer.width();
        let prev_values = slice(&prev);
        next.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(batch)
            .with_min_len(min_len(batch, fan_in))
            .enumerate()
            .for_each_init(Vec::new, |scratch, (p, out)| {
                let children = &layer.select()[layer.segment(p)];
                kernel.reduce(layer.op(), children, prev_values, batch, out, scratch);
            });
        let done = std::mem::replace(&mut prev, next);
        if retain {
            layers.push(done);
        }
    }
    let sources: Vec<Output> = tc.outputs().collect();
    let outputs = Array2::from_shape_fn((batch, sources.len()), |(b, pos)| match sources[pos] {
        Output::Node(i) => prev[[i, b]],
        Output::Constant(v) => constant(v),
    });
    if retain {
        layers.push(prev);
    }
    (layers, outputs)
}

struct RealKernel;

impl<T: Scalar> Kernel<T> for RealKernel {
    fn reduce(&self, op: ReduceOp, children: &[u32], prev: &[T], batch: usize, out: &mut [T], _: &mut Vec<T>) {
        out.copy_from_slice(row(prev, children[0], batch));
        for &c in &children[1..] {
            let values = row(prev, c, batch);
            match op {
                ReduceOp::Product => out.iter_mut().zip(values).for_each(|(o, &v)| *o *= v),
                ReduceOp::Sum => out.iter_mut().zip(values).for_each(|(o, &v)| *o += v),
            }
        }
    }
}

struct LogKernel<T> {
    epsilon: T,
}

impl<T: Scalar> Kernel<T> for LogKernel<T> {
    fn reduce(&self, op: ReduceOp, children: &[u32], prev: &[T], batch: usize, out: &mut [T], scratch: &mut Vec<T>) {
        out.copy_from_slice(row(prev, children[0], batch));
        match op {
            ReduceOp::Product => {
                for &c in &children[1..] {
                    out.iter_mut().zip(row(prev, c, batch)).for_each(|(o, &v)| *o += v);
                }
            }
            ReduceOp::Sum => {
                for &c in &children[1..] {
                    out.iter_mut().zip(row(prev, c, batch)).for_each(|(o, &v)| *o = o.max(v));
                }
                scratch.clear();
                scratch.resize(batch, T::zero());
                for &c in children {
                    for ((t, &m), &v) in scratch.iter_mut().zip(out.iter()).zip(row(prev, c, batch)) {
                        if m != T::neg_infinity() {
                            *t += (v - m).exp();
                        }
                    }
                }
                for (o, &t) in out.iter_mut().zip(scratch.iter()) {
                    if *o != T::neg_infinity() {
                        *o += (t + self.epsilon).ln();
                    }
                }
            }
        }
    }
}

struct SemiringKernel<'a, S>(&'a S);

impl<T: Scalar, S: Semiring<T>> Kernel<T> for SemiringKernel<'_, S> {
    fn reduce(&self, op: ReduceOp, children: &[u32], prev: &[T], batch: usize, out: &mut [T], _: &mut Vec<T>) {
        out.copy_from_slice(row(prev, children[0], batch));
        for &c in &children[1..] {
            let values = row(prev, c, batch);
            match op {
                ReduceOp::Product => out.iter_mut().zip(values).for_each(|(o, &v)| *o = self.0.mul(*o, v)),
                ReduceOp::Sum => out.iter_mut().zip(values).for_each(|(o, &v)| *o = self.0.add(*o, v)),
            }
        }
    }
}

/// Gradient with respect to every edge value of `layer`, edge-major
/// (`[num_edges, batch]`).
fn edge_adjoints<T: Scalar>(
    layer: &TensorLayer,
    prev: &[T],
    cur: &[T],
    grad: &[T],
    batch: usize,
    domain: Domain,
    epsilon: T,
) -> Vec<T> {
    let mut grad_edges = vec![T::zero(); layer.num_edges() * batch];
    let mut segments = Vec::with_capacity(layer.width());
    let mut rest = grad_edges.as_mut_slice();
    for p in 0..layer.width() {
        let (head, tail) = std::mem::take(&mut rest).split_at_mut(layer.segment(p).len() * batch);
        segments.push(head);
        rest = tail;
    }
    let fan_in = layer.num_edges() / layer.width();
    segments
        .into_par_iter()
        .with_min_len(min_len(batch, fan_in))
        .enumerate()
        .for_each(|(p, out)| {
            let children = &layer.select()[layer.segment(p)];
            let g = &grad[p * batch..(p + 1) * batch];
            let n = &cur[p * batch..(p + 1) * batch];
            match (domain, layer.op()) {
                (Domain::Real, ReduceOp::Sum) | (Domain::Log, ReduceOp::Product) => {
                    out.chunks_mut(batch).for_each(|o| o.copy_from_slice(g));
                }
                (Domain::Real, ReduceOp::Product) => product_adjoint(children, prev, g, batch, out),
                (Domain::Log, ReduceOp::Sum) => log_sum_adjoint(children, prev, n, g, batch, epsilon, out),
            }
        });
    grad_edges
}

/// `g * prod_{j != i} v_j` for every edge `i`, from prefix and suffix
/// products so that zero-valued siblings need no special casing.
fn product_adjoint<T: Scalar>(children: &[u32], prev: &[T], g: &[T], batch: usize, out: &mut [T]) {
    let k = children.len();
    out[..batch].copy_from_slice(g);
    for i in 1..k {
        let (done, todo) = out.split_at_mut(i * batch);
        let before = &done[(i - 1) * batch..];
        let v = row(prev, children[i - 1], batch);
        for ((o, &p), &x) in todo[..batch].iter_mut().zip(before).zip(v) {
            *o = p * x;
        }
    }
    let mut suffix = vec![T::one(); batch];
    for i in (0..k).rev() {
        let o = &mut out[i * batch..(i + 1) * batch];
        for (o, &s) in o.iter_mut().zip(&suffix) {
            *o *= s;
        }
        for (s, &x) in suffix.iter_mut().zip(row(prev, children[i], batch)) {
            *s *= x;
        }
    }
}

/// Adjoint of `N = ln(sum_e exp(E_e - M) + eps) + M` with `M = max_e E_e`.
///
/// Each edge gets `g * exp(E_e - N)`. With `eps > 0`, `N` also depends on
/// `M` through `eps * exp(M - N)`, which is credited to the first maximal
/// edge, the one the maximum selects.
fn log_sum_adjoint<T: Scalar>(children: &[u32], prev: &[T], n: &[T], g: &[T], batch: usize, epsilon: T, out: &mut [T]) {
    for (i, &c) in children.iter().enumerate() {
        let o = &mut out[i * batch..(i + 1) * batch];
        for b in 0..batch {
            o[b] = if n[b] == T::neg_infinity() { T::zero() } else { g[b] * (prev[c as usize * batch + b] - n[b]).exp() };
        }
    }
    if epsilon > T::zero() {
        for b in 0..batch {
            if n[b] == T::neg_infinity() {
                continue;
            }
            let mut arg = 0;
            let mut m = prev[children[0] as usize * batch + b];
            for (i, &c) in children.iter().enumerate().skip(1) {
                let v = prev[c as usize * batch + b];
                if v > m {
                    m = v;
                    arg = i;
                }
            }
            out[arg * batch + b] += g[b] * epsilon * (m - n[b]).exp();
        }
    }
}
