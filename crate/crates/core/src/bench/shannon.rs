//! Small CNF to d-DNNF compiler for when no external compiler is installed.
//!
//! Decision-DNNF by Shannon expansion: unit propagation, splitting into
//! variable-disjoint components (decomposable And), branching on the most
//! frequent variable (deterministic Or), and caching of compiled components.
//! The output is not smoothed. Practical up to a few dozen variables.

use std::collections::HashMap;

use crate::circuit::{Circuit, CircuitBuilder, Literal, NodeId};
use crate::parse::CnfFormula;

type Clause = Vec<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Compiled {
    Const(bool),
    Node(NodeId),
}

struct Compiler {
    builder: CircuitBuilder,
    leaves: HashMap<i64, NodeId>,
    cache: HashMap<Vec<Clause>, Compiled>,
}

/// Compiles `cnf` into an equivalent single-rooted d-DNNF.
pub fn compile_cnf(cnf: &CnfFormula) -> Circuit {
    let mut c = Compiler {
        builder: CircuitBuilder::with_num_vars(cnf.num_vars),
        leaves: HashMap::new(),
        cache: HashMap::new(),
    };
    let root = if cnf.clauses.iter().any(Vec::is_empty) {
        Compiled::Const(false)
    } else {
        let clauses = cnf.clauses.iter().filter_map(|cl| normalize(cl.iter().map(|l| l.to_dimacs()).collect()));
        c.compile(clauses.collect())
    };
    let root = match root {
        Compiled::Node(id) => id,
        Compiled::Const(v) => c.builder.constant(v),
    };
    c.builder.build(vec![root]).expect("root was just built")
}

/// Sorted, duplicate-free literals; `None` for a tautology.
fn normalize(mut clause: Clause) -> Option<Clause> {
    clause.sort_unstable_by_key(|&l| (l.abs(), l < 0));
    clause.dedup();
    (!clause.windows(2).any(|w| w[0] == -w[1])).then_some(clause)
}

/// Clauses with `lit` set true; `None` on an empty clause.
fn condition(clauses: &[Clause], lit: i64) -> Option<Vec<Clause>> {
    let mut out = Vec::with_capacity(clauses.len());
    for cl in clauses {
        if cl.contains(&lit) {
            continue;
        }
        let reduced: Clause = cl.iter().copied().filter(|&l| l != -lit).collect();
        if reduced.is_empty() {
            return None;
        }
        out.push(reduced);
    }
    Some(out)
}

/// Repeatedly assigns unit clauses; returns the implied literals, or
/// `None` on a conflict.
fn propagate(mut clauses: Vec<Clause>) -> Option<(Vec<Clause>, Vec<i64>)> {
    let mut units = Vec::new();
    while let Some(unit) = clauses.iter().find(|cl| cl.len() == 1).map(|cl| cl[0]) {
        units.push(unit);
        clauses = condition(&clauses, unit)?;
    }
    Some((clauses, units))
}

/// Groups clauses into variable-disjoint components.
fn components(clauses: Vec<Clause>) -> Vec<Vec<Clause>> {
    let mut parent: HashMap<u64, u64> = HashMap::new();
    fn find(parent: &mut HashMap<u64, u64>, x: u64) -> u64 {
        let p = *parent.entry(x).or_insert(x);
        if p == x {
            return x;
        }
        let r = find(parent, p);
        parent.insert(x, r);
        r
    }
    for cl in &clauses {
        let first = find(&mut parent, cl[0].unsigned_abs());
        for l in &cl[1..] {
            let other = find(&mut parent, l.unsigned_abs());
            if other != first {
                parent.insert(other, first);
            }
        }
    }
    let mut groups: Vec<(u64, Vec<Clause>)> = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    for cl in clauses {
        let r = find(&mut parent, cl[0].unsigned_abs());
        let k = *index.entry(r).or_insert_with(|| {
            groups.push((r, Vec::new()));
            groups.len() - 1
        });
        groups[k].1.push(cl);
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

impl Compiler {
    fn leaf(&mut self, lit: i64) -> NodeId {
        let b = &mut self.builder;
        *self.leaves.entry(lit).or_insert_with(|| b.leaf(Literal::from_dimacs(lit).expect("nonzero literal")))
    }

    fn and(&mut self, parts: Vec<NodeId>) -> Compiled {
        match parts.len() {
            0 => Compiled::Const(true),
            1 => Compiled::Node(parts[0]),
            _ => Compiled::Node(self.builder.and(parts).expect("children exist")),
        }
    }

    fn compile(&mut self, clauses: Vec<Clause>) -> Compiled {
        let Some((clauses, units)) = propagate(clauses) else {
            return Compiled::Const(false);
        };
        let mut parts: Vec<NodeId> = units.into_iter().map(|u| self.leaf(u)).collect();
        for comp in components(clauses) {
            match self.component(comp) {
                Compiled::Const(false) => return Compiled::Const(false),
                Compiled::Const(true) => {}
                Compiled::Node(id) => parts.push(id),
            }
        }
        self.and(parts)
    }

    fn component(&mut self, mut clauses: Vec<Clause>) -> Compiled {
        clauses.sort_unstable();
        if let Some(&hit) = self.cache.get(&clauses) {
            return hit;
        }
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for l in clauses.iter().flatten() {
            *counts.entry(l.unsigned_abs()).or_default() += 1;
        }
        let var = counts.iter().max_by_key(|&(&v, &n)| (n, std::cmp::Reverse(v))).map(|(&v, _)| v as i64).expect("non-empty component");
        let mut branches = Vec::with_capacity(2);
        for lit in [var, -var] {
            let Some(rest) = condition(&clauses, lit) else { continue };
            let decision = self.leaf(lit);
            let branch = match self.compile(rest) {
                Compiled::Const(false) => continue,
                Compiled::Const(true) => Compiled::Node(decision),
                Compiled::Node(id) => self.and(vec![decision, id]),
            };
            if let Compiled::Node(id) = branch {
                branches.push(id);
            }
        }
        let result = match branches.len() {
            0 => Compiled::Const(false),
            1 => Compiled::Node(branches[0]),
            _ => Compiled::Node(self.builder.or(branches).expect("children exist")),
        };
        self.cache.insert(clauses, result);
        result
    }
}
