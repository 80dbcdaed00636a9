#![allow(dead_code)]

use std::path::PathBuf;

use klay_core::bench::{compile_cnf, gen_3cnf, random_dag, DagConfig};
use klay_core::parse::read_circuit_file;
use klay_core::{Circuit, Literal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Also included by the CLI crate's tests, hence the path through `core`.
pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn fixture(name: &str) -> Circuit {
    read_circuit_file(&fixture_path(name), None).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// All circuit fixtures, the compiled CNF included.
pub fn all_fixtures() -> Vec<(String, Circuit)> {
    let mut out: Vec<(String, Circuit)> = ["fig1b.nnf", "fig6a.nnf", "implies.sdd", "xor2.d4"]
        .iter()
        .map(|n| (n.to_string(), fixture(n)))
        .collect();
    let cnf = klay_core::parse::read_dimacs_file(&fixture_path("random12.cnf")).unwrap();
    out.push(("random12.cnf".into(), compile_cnf(&cnf)));
    out
}

pub fn lit(x: i64) -> Literal {
    Literal::from_dimacs(x).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random d-DNNF (compiled 3-CNF) or, every third seed, a random DAG.
pub fn random_circuit(seed: u64, max_vars: u32) -> Circuit {
    let mut r = rng(seed ^ 0x5eed);
    let vars = r.random_range(3..=max_vars);
    if seed % 3 == 2 {
        // Shallow: Or values above one get squared by And parents, so deep
        // random DAGs overflow.
        let gates = r.random_range(1..=16);
        return random_dag(&DagConfig { vars, gates, max_fan_in: 4, window: 2 * vars as usize + 4, seed });
    }
    let ratio = r.random_range(0.5..4.5);
    let clauses = ((vars as f64 * ratio) as usize).max(1);
    compile_cnf(&gen_3cnf(vars, clauses, seed))
}

/// Independent probabilities in `[lo, hi]` per variable; `1 - p` on negatives.
pub fn random_probs(r: &mut ChaCha8Rng, num_vars: u32, lo: f64, hi: f64) -> Vec<f64> {
    (0..=num_vars).map(|_| r.random_range(lo..=hi)).collect()
}

pub fn prob_weight(probs: &[f64], l: Literal) -> f64 {
    let p = probs[l.variable() as usize];
    if l.is_positive() { p } else { 1.0 - p }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    klay_core::scalar::relative_error(a, b)
}

/// Double-double number: `hi + lo` with `|lo| <= ulp(hi) / 2`, about 32
/// significant digits. Only what the finite-difference oracle needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn quick(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = Self::two_sum(self.hi, o.hi);
        let t = Self::two_sum(self.lo, o.lo);
        let u = Self::quick(s.hi, s.lo + t.hi);
        Self::quick(u.hi, u.lo + t.lo)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Self::quick(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn max(self, o: Dd) -> Dd {
        if (self.hi, self.lo) >= (o.hi, o.lo) { self } else { o }
    }

    /// `exp(h)` for `|h| <= 1e-4` by its Taylor series.
    pub fn exp_small(h: f64) -> Dd {
        assert!(h.abs() <= 1e-4);
        let x = Dd::from(h);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for k in 1..=8 {
            term = term.mul(x).mul(Dd::from(1.0 / k as f64));
            sum = sum.add(term);
        }
        sum
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Post-order value of every root in double-double precision, with
/// `weight(slot)` supplying the value of each input literal.
pub fn dd_postorder(c: &Circuit, weight: impl Fn(Literal) -> Dd) -> Vec<Dd> {
    use klay_core::NodeKind;
    let mut v = vec![Dd::ZERO; c.len()];
    for (i, n) in c.nodes().iter().enumerate() {
        v[i] = match n.kind {
            NodeKind::True => Dd::ONE,
            NodeKind::False => Dd::ZERO,
            NodeKind::Leaf(l) => weight(l),
            NodeKind::And => n.children.iter().fold(Dd::ONE, |a, ch| a.mul(v[ch.index()])),
            NodeKind::Or => n.children.iter().fold(Dd::ZERO, |a, ch| a.add(v[ch.index()])),
        };
    }
    c.roots().iter().map(|r| v[r.index()]).collect()
}

/// Probability-space value of a layered circuit under the log-domain sum
/// rule with `eps`: a sum node is `sum(children) + eps * max(children)`.
pub fn dd_layered(tc: &klay_core::TensorizedCircuit, inputs: &[Dd], eps: f64) -> Vec<Dd> {
    use klay_core::ReduceOp;
    let mut prev = inputs.to_vec();
    for layer in tc.layers() {
        prev = (0..layer.width())
            .map(|p| {
                let kids = layer.segment(p).map(|e| prev[layer.select()[e] as usize]);
                match layer.op() {
                    ReduceOp::Product => kids.fold(Dd::ONE, Dd::mul),
                    ReduceOp::Sum => {
                        let kids: Vec<Dd> = kids.collect();
                        let m = kids.iter().copied().fold(kids[0], Dd::max);
                        kids.iter().copied().fold(Dd::ZERO, Dd::add).add(m.mul(Dd::from(eps)))
                    }
                }
            })
            .collect();
    }
    tc.root_indices().iter().map(|&r| prev[r as usize]).collect()
}

/// Central differences of output 0 in double-double precision, computed
/// without the engine: post-order on the source circuit for the real
/// domain, a layer-by-layer sweep for the log domain.
pub fn finite_differences(c: &Circuit, tc: &klay_core::TensorizedCircuit, probs: &[f64], domain: klay_core::Domain, eps: f64, h: f64) -> Vec<f64> {
    let base: Vec<f64> = tc.inputs().iter().map(|&l| prob_weight(probs, l)).collect();
    (0..tc.num_inputs())
        .map(|s| match domain {
            klay_core::Domain::Real => {
                let eval = |d: f64| {
                    dd_postorder(c, |l| {
                        let w = Dd::from(prob_weight(probs, l));
                        if l == tc.inputs()[s] { w.add(Dd::from(d)) } else { w }
                    })[0]
                };
                eval(h).sub(eval(-h)).to_f64() / (2.0 * h)
            }
            klay_core::Domain::Log => {
                let eval = |d: f64| {
                    let mut w: Vec<Dd> = base.iter().map(|&x| Dd::from(x)).collect();
                    w[s] = w[s].mul(Dd::exp_small(d));
                    dd_layered(tc, &w, eps)[0]
                };
                let (up, down) = (eval(h), eval(-h));
                (up.sub(down).to_f64() / down.to_f64()).ln_1p() / (2.0 * h)
            }
        })
        .collect()
}
