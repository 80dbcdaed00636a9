//! Seeded random instances: 3-CNF formulas and unstructured And/Or DAGs.
//!
//! All randomness comes from ChaCha8 seeded with `seed_from_u64`, whose
//! output stream is fixed across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, CircuitBuilder, Literal, NodeId, NodeKind};
use crate::parse::CnfFormula;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `clauses` clauses of three distinct variables drawn uniformly without
/// replacement from `1..=vars`, each negated with probability 1/2.
///
/// # Panics
/// If `vars < 3`.
pub fn gen_3cnf(vars: u32, clauses: usize, seed: u64) -> CnfFormula {
    assert!(vars >= 3, "3-CNF needs at least three variables");
    let mut rng = rng(seed);
    let clauses = (0..clauses)
        .map(|_| {
            let mut picked: Vec<u32> = Vec::with_capacity(3);
            while picked.len() < 3 {
                let v = rng.random_range(1..=vars);
                if !picked.contains(&v) {
                    picked.push(v);
                }
            }
            picked
                .into_iter()
                .map(|v| if rng.random_bool(0.5) { Literal::positive(v) } else { Literal::negative(v) })
                .collect()
        })
        .collect();
    CnfFormula { num_vars: vars, clauses }
}

/// Shape of [`random_dag`].
#[derive(Debug, Clone, Copy)]
pub struct DagConfig {
    pub vars: u32,
    /// Number of And/Or gates, the root included.
    pub gates: usize,
    /// Gates take between 2 and `max_fan_in` children.
    pub max_fan_in: usize,
    /// Children are drawn from the most recent `window` nodes, which keeps
    /// the DAG deep instead of flat.
    pub window: usize,
    pub seed: u64,
}

impl Default for DagConfig {
    fn default() -> Self {
        DagConfig { vars: 16, gates: 64, max_fan_in: 4, window: 32, seed: 0 }
    }
}

/// A single-rooted random And/Or DAG over both literals of every variable.
///
/// It is not decomposable or deterministic; it only exercises evaluation.
/// Depth grows with `gates / window`, and layering inserts a pass-through
/// chain for every edge that skips layers, so deep DAGs layer into far more
/// nodes than they have. Real-domain values may overflow: Or nodes exceed
/// one and And parents multiply them.
/// Every node is reachable: each gate adopts one node nobody uses yet, and
/// the root collects whatever is left.
pub fn random_dag(config: &DagConfig) -> Circuit {
    assert!(config.vars >= 1 && config.gates >= 1 && config.max_fan_in >= 2 && config.window >= 2);
    let mut rng = rng(config.seed);
    let mut b = CircuitBuilder::with_num_vars(config.vars);
    let mut unused: Vec<NodeId> = (1..=config.vars)
        .flat_map(|v| [Literal::positive(v), Literal::negative(v)])
        .map(|l| b.leaf(l))
        .collect();
    // `unused` may hold stale entries; `used` is authoritative.
    let mut used = vec![false; unused.len()];
    for _ in 1..config.gates {
        let len = b.len();
        let fan_in = rng.random_range(2..=config.max_fan_in).min(len.min(config.window));
        let mut children = Vec::with_capacity(fan_in);
        while !unused.is_empty() {
            let k = rng.random_range(0..unused.len());
            let c = unused.swap_remove(k);
            if !used[c.index()] {
                children.push(c);
                break;
            }
        }
        let lo = len.saturating_sub(config.window);
        while children.len() < fan_in {
            let c = NodeId(rng.random_range(lo..len) as u32);
            if !children.contains(&c) {
                children.push(c);
            }
        }
        for c in &children {
            used[c.index()] = true;
        }
        let kind = if rng.random_bool(0.5) { NodeKind::And } else { NodeKind::Or };
        unused.push(b.add_node(kind, children).expect("children exist"));
        used.push(false);
    }
    unused.retain(|u| !used[u.index()]);
    unused.sort();
    let root = if unused.len() == 1 { unused[0] } else { b.or(unused).expect("children exist") };
    b.build(vec![root]).expect("root exists")
}
