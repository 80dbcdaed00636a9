//! Reference evaluators that work on the source [`Circuit`] directly.
//!
//! [`postorder_eval`] visits every reachable node once, children first.
//! [`enumerate_wmc`] ignores the circuit structure altogether and sums the
//! weights of all satisfying assignments. [`NaiveEvaluator`] is the node by
//! node forward and reverse pass used as the benchmark baseline.

use thiserror::Error;

use crate::circuit::{Circuit, Literal, NodeKind};
use crate::eval::semiring::Semiring;
use crate::scalar::Scalar;

/// Largest variable count [`enumerate_wmc`] accepts.
pub const MAX_ENUMERATION_VARS: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("no weight for literal {0}")]
    MissingWeight(Literal),
    #[error("enumeration over {num_vars} variables exceeds the limit of {limit}")]
    TooManyVariables { num_vars: u32, limit: u32 },
}

/// Semiring value of every root, evaluating each reachable node once.
pub fn postorder_eval<T: Scalar, S: Semiring<T>>(
    circuit: &Circuit,
    weights: impl Fn(Literal) -> Option<T>,
    semiring: &S,
) -> Result<Vec<T>, OracleError> {
    let reach = circuit.reachable();
    let mut values = vec![semiring.zero(); circuit.len()];
    for (i, node) in circuit.nodes().iter().enumerate() {
        if !reach[i] {
            continue;
        }
        let child = |k: usize| values[node.children[k].index()];
        let v = match node.kind {
            NodeKind::True => semiring.one(),
            NodeKind::False => semiring.zero(),
            NodeKind::Leaf(lit) => weights(lit).ok_or(OracleError::MissingWeight(lit))?,
            NodeKind::And => (1..node.children.len()).fold(child(0), |acc, k| semiring.mul(acc, child(k))),
            NodeKind::Or => (1..node.children.len()).fold(child(0), |acc, k| semiring.add(acc, child(k))),
        };
        values[i] = v;
    }
    Ok(circuit.roots().iter().map(|r| values[r.index()]).collect())
}

/// Sum over all `2^n` assignments of the product of their literal weights,
/// restricted to the models of each root. Needs a weight for both literals
/// of every variable `1..=num_vars`.
pub fn enumerate_wmc<T: Scalar>(circuit: &Circuit, weights: impl Fn(Literal) -> Option<T>) -> Result<Vec<T>, OracleError> {
    ModelTable::new(circuit)?.wmc(weights)
}

/// Models of every root as a bitset over all assignments, where bit
/// `v - 1` of an assignment index is the value of variable `v`.
#[derive(Debug, Clone)]
pub struct ModelTable {
    num_vars: u32,
    roots: Vec<Vec<u64>>,
}

const LOW_PATTERNS: [u64; 6] = [
    0xaaaa_aaaa_aaaa_aaaa,
    0xcccc_cccc_cccc_cccc,
    0xf0f0_f0f0_f0f0_f0f0,
    0xff00_ff00_ff00_ff00,
    0xffff_0000_ffff_0000,
    0xffff_ffff_0000_0000,
];

/// Words evaluated together; bounds memory to `nodes * BLOCK` words.
const BLOCK: usize = 64;

impl ModelTable {
    pub fn new(circuit: &Circuit) -> Result<Self, OracleError> {
        let num_vars = circuit.num_vars();
        if num_vars > MAX_ENUMERATION_VARS {
            return Err(OracleError::TooManyVariables { num_vars, limit: MAX_ENUMERATION_VARS });
        }
        let assignments = 1usize << num_vars;
        let words = assignments.div_ceil(64);
        let tail = if assignments < 64 { (1u64 << assignments) - 1 } else { !0 };
        let reach = circuit.reachable();
        let mut roots = vec![vec![0u64; words]; circuit.roots().len()];
        let mut values = vec![0u64; circuit.len() * BLOCK];
        for start in (0..words).step_by(BLOCK) {
            let len = BLOCK.min(words - start);
            for (i, node) in circuit.nodes().iter().enumerate() {
                if !reach[i] {
                    continue;
                }
                for k in 0..len {
                    let w = start + k;
                    let c = |j: usize| values[node.children[j].index() * BLOCK + k];
                    let v = match node.kind {
                        NodeKind::True => tail,
                        NodeKind::False => 0,
                        NodeKind::Leaf(lit) => {
                            let j = lit.variable() as usize - 1;
                            let pos = if j < 6 {
                                LOW_PATTERNS[j]
                            } else if (w >> (j - 6)) & 1 == 1 {
                                !0
                            } else {
                                0
                            };
                            (if lit.is_positive() { pos } else { !pos }) & tail
                        }
                        NodeKind::And => (0..node.children.len()).fold(!0, |acc, j| acc & c(j)),
                        NodeKind::Or => (0..node.children.len()).fold(0, |acc, j| acc | c(j)),
                    };
                    values[i * BLOCK + k] = v;
                }
            }
            for (bits, r) in roots.iter_mut().zip(circuit.roots()) {
                bits[start..start + len].copy_from_slice(&values[r.index() * BLOCK..r.index() * BLOCK + len]);
            }
        }
        Ok(ModelTable { num_vars, roots })
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    /// Number of models of root `root`.
    pub fn count(&self, root: usize) -> u64 {
        self.roots[root].iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn is_model(&self, root: usize, assignment: u64) -> bool {
        self.roots[root][(assignment / 64) as usize] >> (assignment % 64) & 1 == 1
    }

    /// Weighted model count of every root.
    pub fn wmc<T: Scalar>(&self, weights: impl Fn(Literal) -> Option<T>) -> Result<Vec<T>, OracleError> {
        // Weight of assignment `a` is `high[a >> split] * low[a & mask]`.
        let split = self.num_vars.min(12);
        let table = |vars: std::ops::RangeInclusive<u32>| -> Result<Vec<T>, OracleError> {
            let mut t = vec![T::one()];
            for v in vars {
                let pos = weights(Literal::positive(v)).ok_or(OracleError::MissingWeight(Literal::positive(v)))?;
                let neg = weights(Literal::negative(v)).ok_or(OracleError::MissingWeight(Literal::negative(v)))?;
                let mut next = Vec::with_capacity(t.len() * 2);
                next.extend(t.iter().map(|&x| x * neg));
                next.extend(t.iter().map(|&x| x * pos));
                t = next;
            }
            Ok(t)
        };
        let low = table(1..=split)?;
        let high = table(split + 1..=self.num_vars)?;
        let mask = (1usize << split) - 1;
        Ok(self
            .roots
            .iter()
            .map(|bits| {
                let mut total = T::zero();
                let mut inner = T::zero();
                let mut current = 0usize;
                for (w, &word) in bits.iter().enumerate() {
                    let mut word = word;
                    while word != 0 {
                        let a = w * 64 + word.trailing_zeros() as usize;
                        word &= word - 1;
                        if a >> split != current {
                            total += high[current] * inner;
                            inner = T::zero();
                            current = a >> split;
                        }
                        inner += low[a & mask];
                    }
                }
                total + high[current] * inner
            })
            .collect())
    }
}

/// Node by node real-domain evaluation over the linked circuit, with a
/// reverse pass for input gradients.
#[derive(Debug, Clone)]
pub struct NaiveEvaluator<'a> {
    circuit: &'a Circuit,
    order: Vec<usize>,
    slots: Vec<u32>,
}

impl<'a> NaiveEvaluator<'a> {
    /// `inputs[s]` is the literal whose weight sits in column `s`.
    pub fn new(circuit: &'a Circuit, inputs: &[Literal]) -> Result<Self, OracleError> {
        let reach = circuit.reachable();
        let order: Vec<usize> = (0..circuit.len()).filter(|&i| reach[i]).collect();
        let mut slots = vec![u32::MAX; circuit.len()];
        for &i in &order {
            if let NodeKind::Leaf(lit) = circuit.nodes()[i].kind {
                let s = inputs.iter().position(|&l| l == lit).ok_or(OracleError::MissingWeight(lit))?;
                slots[i] = s as u32;
            }
        }
        Ok(NaiveEvaluator { circuit, order, slots })
    }

    fn run_forward<T: Scalar>(&self, weights: &[T], values: &mut [T]) {
        let nodes = self.circuit.nodes();
        for &i in &self.order {
            let node = &nodes[i];
            values[i] = match node.kind {
                NodeKind::True => T::one(),
                NodeKind::False => T::zero(),
                NodeKind::Leaf(_) => weights[self.slots[i] as usize],
                NodeKind::And => node.children[1..]
                    .iter()
                    .fold(values[node.children[0].index()], |acc, c| acc * values[c.index()]),
                NodeKind::Or => node.children[1..]
                    .iter()
                    .fold(values[node.children[0].index()], |acc, c| acc + values[c.index()]),
            };
        }
    }

    /// Root values for one weight row.
    pub fn forward<T: Scalar>(&self, weights: &[T]) -> Vec<T> {
        let mut values = vec![T::zero(); self.circuit.len()];
        self.run_forward(weights, &mut values);
        self.circuit.roots().iter().map(|r| values[r.index()]).collect()
    }

    /// Root values and the gradient of `sum_r seed[r] * root_r` with
    /// respect to every input column.
    pub fn forward_backward<T: Scalar>(&self, weights: &[T], seed: &[T]) -> (Vec<T>, Vec<T>) {
        let nodes = self.circuit.nodes();
        let mut values = vec![T::zero(); nodes.len()];
        self.run_forward(weights, &mut values);
        let mut adjoint = vec![T::zero(); nodes.len()];
        for (r, &s) in self.circuit.roots().iter().zip(seed) {
            adjoint[r.index()] += s;
        }
        let mut grad = vec![T::zero(); weights.len()];
        let mut prefix = Vec::new();
        for &i in self.order.iter().rev() {
            let node = &nodes[i];
            let g = adjoint[i];
            match node.kind {
                NodeKind::True | NodeKind::False => {}
                NodeKind::Leaf(_) => grad[self.slots[i] as usize] += g,
                NodeKind::Or => {
                    for c in &node.children {
                        adjoint[c.index()] += g;
                    }
                }
                NodeKind::And => {
                    prefix.clear();
                    let mut acc = T::one();
                    for c in &node.children {
                        prefix.push(acc);
                        acc *= values[c.index()];
                    }
                    let mut suffix = T::one();
                    for (k, c) in node.children.iter().enumerate().rev() {
                        adjoint[c.index()] += g * prefix[k] * suffix;
                        suffix *= values[c.index()];
                    }
                }
            }
        }
        let roots = self.circuit.roots().iter().map(|r| values[r.index()]).collect();
        (roots, grad)
    }
}
