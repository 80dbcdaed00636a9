//! Grouping circuit nodes into alternating product/sum layers.
//!
//! Every source node is placed at the smallest height above its children
//! that matches its kind (And on odd layers, Or on even layers), children
//! further down are reached through chains of single-child pass-through
//! nodes, and all roots are lifted to a common final layer. Nodes are
//! hash-consed per layer, so identical subcircuits (within one circuit,
//! across circuits, and among pass-through chains) are stored once.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::circuit::{Circuit, Literal, NodeKind};
use crate::hash::{leaf_hash, node_hash, Fmix64, Mixer};
use crate::stats::CircuitStats;

/// Operation of a layered node. Layer 0 holds inputs, odd layers products
/// and even layers (from 2 on) sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerOp {
    Input,
    Product,
    Sum,
}

impl LayerOp {
    pub fn for_layer(layer: usize) -> LayerOp {
        match layer {
            0 => LayerOp::Input,
            l if l % 2 == 1 => LayerOp::Product,
            _ => LayerOp::Sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredNode {
    pub op: LayerOp,
    /// Indices into the previous layer, duplicates allowed.
    pub children: Vec<u32>,
    pub hash: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayerizeError {
    #[error("no circuits to layerize")]
    NoCircuits,
    #[error("circuit {0} has no roots")]
    NoRoots(usize),
    #[error("layer {layer} does not exist")]
    NoSuchLayer { layer: usize },
    #[error("ordering for layer {layer} is not a permutation of 0..{width}")]
    NotAPermutation { layer: usize, width: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Multi-rooted circuit whose edges only connect adjacent layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredCircuit {
    layers: Vec<Vec<LayeredNode>>,
    inputs: Vec<Literal>,
    input_map: BTreeMap<Literal, u32>,
    root_indices: Vec<u32>,
    constant_roots: BTreeMap<usize, bool>,
    num_vars: u32,
}

impl LayeredCircuit {
    /// All layers; layer 0 holds one input node per literal.
    pub fn layers(&self) -> &[Vec<LayeredNode>] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &[LayeredNode] {
        &self.layers[l]
    }

    /// Index of the last layer (0 when every root is constant).
    pub fn height(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    /// Literal held by each input slot.
    pub fn inputs(&self) -> &[Literal] {
        &self.inputs
    }

    pub fn input_map(&self) -> &BTreeMap<Literal, u32> {
        &self.input_map
    }

    pub fn input_slot(&self, lit: Literal) -> Option<usize> {
        self.input_map.get(&lit).map(|&s| s as usize)
    }

    /// Final-layer index of every non-constant root, in output order.
    pub fn root_indices(&self) -> &[u32] {
        &self.root_indices
    }

    /// Output position -> value for roots that folded to a constant.
    pub fn constant_roots(&self) -> &BTreeMap<usize, bool> {
        &self.constant_roots
    }

    pub fn num_outputs(&self) -> usize {
        self.root_indices.len() + self.constant_roots.len()
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn num_nodes(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.layers.iter().flatten().map(|n| n.children.len()).sum()
    }

    pub fn stats(&self) -> CircuitStats {
        CircuitStats::from_layered(self)
    }

    /// Reorders the nodes of one layer; `order[new] = old`.
    ///
    /// Parents in the next layer, the input map and the root indices follow
    /// the move. Used to pin a hand-drawn node order in golden tests.
    pub fn reorder_layer(&mut self, layer: usize, order: &[usize]) -> Result<(), LayerizeError> {
        let width = self.layers.get(layer).ok_or(LayerizeError::NoSuchLayer { layer })?.len();
        let mut new_pos = vec![u32::MAX; width];
        if order.len() != width {
            return Err(LayerizeError::NotAPermutation { layer, width });
        }
        for (new, &old) in order.iter().enumerate() {
            if old >= width || new_pos[old] != u32::MAX {
                return Err(LayerizeError::NotAPermutation { layer, width });
            }
            new_pos[old] = new as u32;
        }
        let old_nodes = std::mem::take(&mut self.layers[layer]);
        self.layers[layer] = order.iter().map(|&o| old_nodes[o].clone()).collect();
        if layer == 0 {
            self.inputs = order.iter().map(|&o| self.inputs[o]).collect();
            self.input_map = self.inputs.iter().enumerate().map(|(s, &l)| (l, s as u32)).collect();
        }
        if let Some(parents) = self.layers.get_mut(layer + 1) {
            for node in parents {
                for c in &mut node.children {
                    *c = new_pos[*c as usize];
                }
            }
        }
        if layer == self.height() {
            for r in &mut self.root_indices {
                *r = new_pos[*r as usize];
            }
        }
        Ok(())
    }

    /// Checks the structural invariants: layer/op parity, child ranges,
    /// no dead nodes, no duplicate nodes within a layer, roots on top.
    pub fn check_invariants(&self) -> Result<(), LayerizeError> {
        let bad = |msg: String| Err(LayerizeError::Invariant(msg));
        if self.layers.is_empty() {
            return bad("missing input layer".into());
        }
        if self.inputs.len() != self.layers[0].len() || self.input_map.len() != self.inputs.len() {
            return bad("input map does not match layer 0".into());
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let expected = LayerOp::for_layer(l);
            let below = if l == 0 { 0 } else { self.layers[l - 1].len() };
            let mut seen: HashMap<Vec<u32>, usize> = HashMap::new();
            for (i, node) in layer.iter().enumerate() {
                if node.op != expected {
                    return bad(format!("layer {l} node {i} is {:?}, expected {expected:?}", node.op));
                }
                if (l == 0) != node.children.is_empty() {
                    return bad(format!("layer {l} node {i} has {} children", node.children.len()));
                }
                if node.children.iter().any(|&c| c as usize >= below) {
                    return bad(format!("layer {l} node {i} has a child outside layer {}", l - 1));
                }
                if l > 0 {
                    let mut key = node.children.clone();
                    key.sort_unstable();
                    if let Some(j) = seen.insert(key, i) {
                        return bad(format!("layer {l} nodes {j} and {i} are identical"));
                    }
                }
            }
            if l > 0 {
                let mut has_parent = vec![false; below];
                for node in layer {
                    for &c in &node.children {
                        has_parent[c as usize] = true;
                    }
                }
                if let Some(dead) = has_parent.iter().position(|p| !p) {
                    return bad(format!("layer {} node {dead} has no parent", l - 1));
                }
            }
        }
        let top = self.layers[self.height()].len();
        if self.height() == 0 {
            if !self.root_indices.is_empty() || !self.inputs.is_empty() {
                return bad("circuit without layers must only have constant roots".into());
            }
        } else {
            if self.root_indices.iter().any(|&r| r as usize >= top) {
                return bad("root index outside the final layer".into());
            }
            let mut is_root = vec![false; top];
            for &r in &self.root_indices {
                is_root[r as usize] = true;
            }
            if let Some(dead) = is_root.iter().position(|r| !r) {
                return bad(format!("final layer node {dead} is not a root"));
            }
        }
        if self.constant_roots.keys().any(|&p| p >= self.num_outputs()) {
            return bad("constant root position out of range".into());
        }
        Ok(())
    }
}

/// Layerizes `circuits` into one multi-rooted circuit with the default
/// hasher. Output position `k` is the `k`-th root when the circuits' root
/// lists are concatenated in order.
pub fn layerize(circuits: &[Circuit]) -> Result<LayeredCircuit, LayerizeError> {
    layerize_with(circuits, &Fmix64)
}

/// [`layerize`] with a caller-supplied mixing function.
pub fn layerize_with<M: Mixer>(circuits: &[Circuit], mixer: &M) -> Result<LayeredCircuit, LayerizeError> {
    if circuits.is_empty() {
        return Err(LayerizeError::NoCircuits);
    }
    let mut builder = Builder::new(mixer);
    let mut outputs: Vec<Placed> = Vec::new();
    let mut num_vars = 0;
    for (ci, circuit) in circuits.iter().enumerate() {
        if circuit.roots().is_empty() {
            return Err(LayerizeError::NoRoots(ci));
        }
        num_vars = num_vars.max(circuit.num_vars());
        let folded;
        let circuit = if circuit.is_folded() {
            circuit
        } else {
            folded = circuit.fold_constants();
            &folded
        };
        outputs.extend(builder.place_circuit(circuit));
    }

    let top = outputs
        .iter()
        .filter_map(|p| match p {
            Placed::At { layer, .. } => Some(*layer),
            Placed::Const(_) => None,
        })
        .max()
        .map(|h| h.max(1));
    let mut roots = Vec::new();
    let mut constant_roots = BTreeMap::new();
    for (pos, placed) in outputs.iter().enumerate() {
        match *placed {
            Placed::Const(v) => {
                constant_roots.insert(pos, v);
            }
            Placed::At { layer, id } => {
                let top = top.expect("a placed root exists");
                roots.push(builder.lift(layer, id, top));
            }
        }
    }
    Ok(builder.finish(roots, constant_roots, num_vars))
}

#[derive(Debug, Clone, Copy)]
enum Placed {
    Const(bool),
    At { layer: usize, id: u32 },
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Default)]
struct Table {
    nodes: Vec<LayeredNode>,
    /// Sorted child multiset of each node, the structural dedup key.
    keys: Vec<Vec<u32>>,
    buckets: HashMap<u64, Vec<u32>>,
    /// Pass-through parent of each node in the next layer, if built.
    lifted: Vec<u32>,
}

struct Builder<'m, M> {
    mixer: &'m M,
    tables: Vec<Table>,
    leaves: HashMap<Literal, u32>,
    literals: Vec<Literal>,
}

impl<'m, M: Mixer> Builder<'m, M> {
    fn new(mixer: &'m M) -> Self {
        Builder { mixer, tables: vec![Table::default()], leaves: HashMap::new(), literals: Vec::new() }
    }

    fn place_circuit(&mut self, circuit: &Circuit) -> Vec<Placed> {
        let reach = circuit.reachable();
        let mut placed: Vec<Option<Placed>> = vec![None; circuit.len()];
        for (i, node) in circuit.nodes().iter().enumerate() {
            if !reach[i] {
                continue;
            }
            let p = match node.kind {
                NodeKind::True => Placed::Const(true),
                NodeKind::False => Placed::Const(false),
                NodeKind::Leaf(lit) => Placed::At { layer: 0, id: self.input(lit) },
                NodeKind::And | NodeKind::Or => {
                    let children: Vec<(usize, u32)> = node
                        .children
                        .iter()
                        .map(|c| match placed[c.index()].expect("children precede parents") {
                            Placed::At { layer, id } => (layer, id),
                            Placed::Const(_) => unreachable!("constants are folded before layerization"),
                        })
                        .collect();
                    if let [(layer, id)] = children[..] {
                        // A single-child gate is the identity in every semiring.
                        Placed::At { layer, id }
                    } else {
                        let below = children.iter().map(|&(l, _)| l).max().expect("gates have children");
                        let layer = gate_height(node.kind, below);
                        let ids = children.iter().map(|&(l, id)| self.lift(l, id, layer - 1)).collect();
                        Placed::At { layer, id: self.intern(layer, ids) }
                    }
                }
            };
            placed[i] = Some(p);
        }
        circuit.roots().iter().map(|r| placed[r.index()].expect("roots are reachable")).collect()
    }

    fn input(&mut self, lit: Literal) -> u32 {
        if let Some(&id) = self.leaves.get(&lit) {
            return id;
        }
        let id = self.literals.len() as u32;
        let table = &mut self.tables[0];
        table.nodes.push(LayeredNode { op: LayerOp::Input, children: Vec::new(), hash: leaf_hash(self.mixer, lit) });
        table.keys.push(Vec::new());
        table.lifted.push(NO_PARENT);
        self.literals.push(lit);
        self.leaves.insert(lit, id);
        id
    }

    /// Returns the node of `layer` (>= 1) with these children, creating it
    /// if no structurally equal node exists.
    fn intern(&mut self, layer: usize, children: Vec<u32>) -> u32 {
        let op = LayerOp::for_layer(layer);
        let hash = {
            let below = &self.tables[layer - 1].nodes;
            node_hash(self.mixer, op, children.iter().map(|&c| below[c as usize].hash))
        };
        let mut key = children.clone();
        key.sort_unstable();
        if self.tables.len() <= layer {
            self.tables.resize_with(layer + 1, Table::default);
        }
        let table = &mut self.tables[layer];
        let bucket = table.buckets.entry(hash).or_default();
        if let Some(&existing) = bucket.iter().find(|&&cand| table.keys[cand as usize] == key) {
            return existing;
        }
        let id = table.nodes.len() as u32;
        bucket.push(id);
        table.nodes.push(LayeredNode { op, children, hash });
        table.keys.push(key);
        table.lifted.push(NO_PARENT);
        id
    }

    /// Carries node `id` of `layer` up to `target` through pass-through nodes.
    fn lift(&mut self, mut layer: usize, mut id: u32, target: usize) -> u32 {
        debug_assert!(layer <= target);
        while layer < target {
            let up = self.tables[layer].lifted[id as usize];
            let next = if up == NO_PARENT {
                let next = self.intern(layer + 1, vec![id]);
                self.tables[layer].lifted[id as usize] = next;
                next
            } else {
                up
            };
            id = next;
            layer += 1;
        }
        id
    }

    /// Fixes the canonical order of every layer and assembles the result:
    /// inputs by literal, other layers by digest then insertion order.
    fn finish(mut self, roots: Vec<u32>, constant_roots: BTreeMap<usize, bool>, num_vars: u32) -> LayeredCircuit {
        if roots.is_empty() {
            self.tables.truncate(1);
        }
        let mut layers = Vec::with_capacity(self.tables.len());
        let mut order: Vec<u32> = (0..self.literals.len() as u32).collect();
        order.sort_by_key(|&i| self.literals[i as usize]);
        let inputs: Vec<Literal> = order.iter().map(|&i| self.literals[i as usize]).collect();
        let mut position = inverse(&order);
        let mut tables = self.tables.into_iter();
        let layer0 = tables.next().expect("input table exists");
        layers.push(order.iter().map(|&i| layer0.nodes[i as usize].clone()).collect::<Vec<_>>());
        for table in tables {
            let mut nodes = table.nodes;
            for n in &mut nodes {
                for c in &mut n.children {
                    *c = position[*c as usize];
                }
            }
            let mut order: Vec<u32> = (0..nodes.len() as u32).collect();
            order.sort_by_key(|&i| (nodes[i as usize].hash, i));
            position = inverse(&order);
            let mut slots: Vec<Option<LayeredNode>> = nodes.into_iter().map(Some).collect();
            layers.push(order.iter().map(|&i| slots[i as usize].take().expect("permutation")).collect());
        }
        let root_indices = roots.iter().map(|&r| position[r as usize]).collect();
        let input_map = inputs.iter().enumerate().map(|(s, &l)| (l, s as u32)).collect();
        LayeredCircuit { layers, inputs, input_map, root_indices, constant_roots, num_vars }
    }
}

/// Lowest layer above `below` whose parity matches the gate kind.
fn gate_height(kind: NodeKind, below: usize) -> usize {
    let h = below + 1;
    let want_odd = kind == NodeKind::And;
    if (h % 2 == 1) == want_odd {
        h
    } else {
        h + 1
    }
}

fn inverse(order: &[u32]) -> Vec<u32> {
    let mut inv = vec![0u32; order.len()];
    for (new, &old) in order.iter().enumerate() {
        inv[old as usize] = new as u32;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{CircuitBuilder, NodeId};

    fn lit(x: i64) -> Literal {
        Literal::from_dimacs(x).unwrap()
    }

    struct Constant;

    impl Mixer for Constant {
        fn mix(&self, _: u64) -> u64 {
            7
        }
    }

    #[test]
    fn single_and() {
        let mut b = CircuitBuilder::new();
        let x = b.leaf(lit(1));
        let y = b.leaf(lit(2));
        let r = b.and(vec![x, y]).unwrap();
        let lc = layerize(&[b.build(vec![r]).unwrap()]).unwrap();
        assert_eq!(lc.layer_sizes(), vec![2, 1]);
        assert_eq!(lc.layer(1)[0].children, vec![0, 1]);
        assert_eq!(lc.root_indices(), &[0]);
        lc.check_invariants().unwrap();
    }

    #[test]
    fn leaf_root_is_lifted_to_layer_one() {
        let mut b = CircuitBuilder::new();
        let x = b.leaf(lit(-1));
        let lc = layerize(&[b.build(vec![x]).unwrap()]).unwrap();
        assert_eq!(lc.layer_sizes(), vec![1, 1]);
        assert_eq!(lc.inputs(), &[lit(-1)]);
        lc.check_invariants().unwrap();
    }

    #[test]
    fn or_over_literals_gets_product_pass_through() {
        let mut b = CircuitBuilder::new();
        let x = b.leaf(lit(1));
        let y = b.leaf(lit(-1));
        let r = b.or(vec![x, y]).unwrap();
        let lc = layerize(&[b.build(vec![r]).unwrap()]).unwrap();
        assert_eq!(lc.layer_sizes(), vec![2, 2, 1]);
        assert!(lc.layer(1).iter().all(|n| n.op == LayerOp::Product && n.children.len() == 1));
        lc.check_invariants().unwrap();
    }

    #[test]
    fn same_kind_edges_get_opposite_pass_through() {
        // And(And(x1, x2), x3): inner And at 1, outer And at 3.
        let mut b = CircuitBuilder::new();
        let x1 = b.leaf(lit(1));
        let x2 = b.leaf(lit(2));
        let x3 = b.leaf(lit(3));
        let inner = b.and(vec![x1, x2]).unwrap();
        let r = b.and(vec![inner, x3]).unwrap();
        let lc = layerize(&[b.build(vec![r]).unwrap()]).unwrap();
        assert_eq!(lc.layer_sizes(), vec![3, 2, 2, 1]);
        lc.check_invariants().unwrap();
    }

    #[test]
    fn chain_shared_between_parents() {
        // x1 feeds three And gates at layer 3 -> one chain of two pass-throughs.
        let mut b = CircuitBuilder::new();
        let x1 = b.leaf(lit(1));
        let leaves: Vec<NodeId> = (2..=5).map(|v| b.leaf(lit(v))).collect();
        let a = b.and(vec![leaves[0], leaves[1]]).unwrap();
        let o1 = b.or(vec![a, leaves[2]]).unwrap();
        let o2 = b.or(vec![a, leaves[3]]).unwrap();
        let o3 = b.or(vec![a, leaves[0]]).unwrap();
        let p1 = b.and(vec![x1, o1]).unwrap();
        let p2 = b.and(vec![x1, o2]).unwrap();
        let p3 = b.and(vec![x1, o3]).unwrap();
        let r = b.or(vec![p1, p2, p3]).unwrap();
        let lc = layerize(&[b.build(vec![r]).unwrap()]).unwrap();
        lc.check_invariants().unwrap();
        let slot = lc.input_slot(lit(1)).unwrap() as u32;
        let l1: Vec<usize> = (0..lc.layer(1).len()).filter(|&i| lc.layer(1)[i].children == [slot]).collect();
        assert_eq!(l1.len(), 1);
        let l2 = lc.layer(2).iter().filter(|n| n.children == [l1[0] as u32]).count();
        assert_eq!(l2, 1);
    }

    #[test]
    fn duplicate_children_are_kept() {
        let mut b = CircuitBuilder::new();
        let x = b.leaf(lit(1));
        let r = b.and(vec![x, x]).unwrap();
        let lc = layerize(&[b.build(vec![r]).unwrap()]).unwrap();
        assert_eq!(lc.layer(1)[0].children, vec![0, 0]);
    }

    #[test]
    fn forced_collisions_do_not_merge_distinct_nodes() {
        let mut b = CircuitBuilder::new();
        let xs: Vec<NodeId> = (1..=4).map(|v| b.leaf(lit(v))).collect();
        let a1 = b.and(vec![xs[0], xs[1]]).unwrap();
        let a2 = b.and(vec![xs[2], xs[3]]).unwrap();
        let a3 = b.and(vec![xs[1], xs[0]]).unwrap();
        let r = b.or(vec![a1, a2, a3]).unwrap();
        let c = b.build(vec![r]).unwrap();
        let honest = layerize(std::slice::from_ref(&c)).unwrap();
        let colliding = layerize_with(&[c], &Constant).unwrap();
        colliding.check_invariants().unwrap();
        assert_eq!(honest.layer_sizes(), colliding.layer_sizes());
        assert_eq!(colliding.layer_sizes(), vec![4, 2, 1]);
    }

    #[test]
    fn constant_roots_bypass_layers() {
        let mut b = CircuitBuilder::new();
        let x = b.leaf(lit(1));
        let t = b.constant(true);
        let c1 = b.build(vec![x, t]).unwrap();
        let lc = layerize(&[c1]).unwrap();
        assert_eq!(lc.num_outputs(), 2);
        assert_eq!(lc.constant_roots().get(&1), Some(&true));
        assert_eq!(lc.root_indices().len(), 1);

        let mut b = CircuitBuilder::new();
        let f = b.constant(false);
        let lc = layerize(&[b.build(vec![f]).unwrap()]).unwrap();
        assert_eq!(lc.height(), 0);
        assert_eq!(lc.layer_sizes(), vec![0]);
        lc.check_invariants().unwrap();
    }

    #[test]
    fn no_circuits_is_an_error() {
        assert_eq!(layerize(&[]), Err(LayerizeError::NoCircuits));
    }

    #[test]
    fn reorder_layer_validates_and_remaps() {
        let mut b = CircuitBuilder::new();
        let x = b.leaf(lit(1));
        let y = b.leaf(lit(2));
        let r = b.and(vec![x, y]).unwrap();
        let mut lc = layerize(&[b.build(vec![r]).unwrap()]).unwrap();
        lc.reorder_layer(0, &[1, 0]).unwrap();
        assert_eq!(lc.inputs(), &[lit(2), lit(1)]);
        assert_eq!(lc.layer(1)[0].children, vec![1, 0]);
        assert_eq!(lc.input_slot(lit(1)), Some(1));
        assert!(lc.reorder_layer(0, &[0, 0]).is_err());
        assert!(lc.reorder_layer(5, &[]).is_err());
        lc.check_invariants().unwrap();
    }
}
