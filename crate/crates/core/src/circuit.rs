//! In-memory circuit representation shared by every other module.
//!
//! A [`Circuit`] is an append-only, topologically numbered DAG of literal,
//! And, Or and constant nodes with one or more roots.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Positive,
    Negative,
}

/// A Boolean variable (1-based) or its negation.
///
/// Ordering is by variable first, positive before negative, which is also the
/// canonical order of input slots in a layered circuit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    variable: u32,
    polarity: Polarity,
}

impl Literal {
    /// Panics if `variable` is zero.
    pub fn new(variable: u32, polarity: Polarity) -> Self {
        assert!(variable >= 1, "literal variables are 1-based");
        Literal { variable, polarity }
    }

    pub fn positive(variable: u32) -> Self {
        Self::new(variable, Polarity::Positive)
    }

    pub fn negative(variable: u32) -> Self {
        Self::new(variable, Polarity::Negative)
    }

    /// DIMACS-style signed encoding; `None` for zero.
    pub fn from_dimacs(code: i64) -> Option<Self> {
        let variable = u32::try_from(code.unsigned_abs()).ok()?;
        if variable == 0 {
            return None;
        }
        let polarity = if code > 0 { Polarity::Positive } else { Polarity::Negative };
        Some(Literal { variable, polarity })
    }

    pub fn to_dimacs(self) -> i64 {
        match self.polarity {
            Polarity::Positive => i64::from(self.variable),
            Polarity::Negative => -i64::from(self.variable),
        }
    }

    pub fn variable(self) -> u32 {
        self.variable
    }

    pub fn polarity(self) -> Polarity {
        self.polarity
    }

    pub fn is_positive(self) -> bool {
        self.polarity == Polarity::Positive
    }

    pub fn negated(self) -> Self {
        let polarity = match self.polarity {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        };
        Literal { polarity, ..self }
    }

    /// Truth value of this literal when its variable is `value`.
    pub fn holds(self, value: bool) -> bool {
        value == self.is_positive()
    }
}

impl fmt::Debug for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Leaf(Literal),
    And,
    Or,
    True,
    False,
}

impl NodeKind {
    pub fn is_gate(self) -> bool {
        matches!(self, NodeKind::And | NodeKind::Or)
    }
}

/// Dense node index; children always have smaller ids than their parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub children: Vec<NodeId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("child {child} does not exist (circuit has {len} nodes)")]
    UnknownChild { child: NodeId, len: usize },
    #[error("{kind:?} nodes cannot have children")]
    ChildrenOnTerminal { kind: NodeKind },
    #[error("{kind:?} gate has no children")]
    EmptyGate { kind: NodeKind },
    #[error("root {0} does not exist")]
    UnknownRoot(NodeId),
    #[error("circuit has no roots")]
    NoRoots,
    #[error("assignment does not cover variable {0}")]
    MissingVariable(u32),
}

/// Builds a [`Circuit`] node by node.
#[derive(Debug, Default, Clone)]
pub struct CircuitBuilder {
    nodes: Vec<Node>,
    num_vars: u32,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares at least `n` variables even if some never appear in a leaf.
    pub fn with_num_vars(n: u32) -> Self {
        CircuitBuilder { nodes: Vec::new(), num_vars: n }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_node(&mut self, kind: NodeKind, children: Vec<NodeId>) -> Result<NodeId, CircuitError> {
        match kind {
            NodeKind::Leaf(_) | NodeKind::True | NodeKind::False if !children.is_empty() => {
                return Err(CircuitError::ChildrenOnTerminal { kind });
            }
            NodeKind::And | NodeKind::Or if children.is_empty() => {
                return Err(CircuitError::EmptyGate { kind });
            }
            _ => {}
        }
        let len = self.nodes.len();
        if let Some(&child) = children.iter().find(|c| c.index() >= len) {
            return Err(CircuitError::UnknownChild { child, len });
        }
        if let NodeKind::Leaf(lit) = kind {
            self.num_vars = self.num_vars.max(lit.variable());
        }
        let id = u32::try_from(len).expect("circuit exceeds u32::MAX nodes");
        self.nodes.push(Node { kind, children });
        Ok(NodeId(id))
    }

    pub fn leaf(&mut self, lit: Literal) -> NodeId {
        self.add_node(NodeKind::Leaf(lit), Vec::new()).expect("leaf has no children")
    }

    pub fn and(&mut self, children: Vec<NodeId>) -> Result<NodeId, CircuitError> {
        self.add_node(NodeKind::And, children)
    }

    pub fn or(&mut self, children: Vec<NodeId>) -> Result<NodeId, CircuitError> {
        self.add_node(NodeKind::Or, children)
    }

    pub fn constant(&mut self, value: bool) -> NodeId {
        let kind = if value { NodeKind::True } else { NodeKind::False };
        self.add_node(kind, Vec::new()).expect("constant has no children")
    }

    pub fn build(self, roots: Vec<NodeId>) -> Result<Circuit, CircuitError> {
        if roots.is_empty() {
            return Err(CircuitError::NoRoots);
        }
        if let Some(&r) = roots.iter().find(|r| r.index() >= self.nodes.len()) {
            return Err(CircuitError::UnknownRoot(r));
        }
        Ok(Circuit { nodes: self.nodes, roots, num_vars: self.num_vars })
    }
}

/// Source of Boolean values for [`Circuit::boolean_eval`].
pub trait Assignment {
    fn value(&self, variable: u32) -> Option<bool>;
}

/// Index `v - 1` holds the value of variable `v`.
impl Assignment for [bool] {
    fn value(&self, variable: u32) -> Option<bool> {
        self.get(variable as usize - 1).copied()
    }
}

impl Assignment for Vec<bool> {
    fn value(&self, variable: u32) -> Option<bool> {
        self.as_slice().value(variable)
    }
}

impl Assignment for HashMap<u32, bool> {
    fn value(&self, variable: u32) -> Option<bool> {
        self.get(&variable).copied()
    }
}

impl Assignment for BTreeMap<u32, bool> {
    fn value(&self, variable: u32) -> Option<bool> {
        self.get(&variable).copied()
    }
}

/// Bit `v - 1` of the word holds variable `v` (up to 64 variables).
#[derive(Debug, Clone, Copy)]
pub struct BitAssignment {
    pub bits: u64,
    pub num_vars: u32,
}

impl Assignment for BitAssignment {
    fn value(&self, variable: u32) -> Option<bool> {
        (variable <= self.num_vars && variable <= 64).then(|| self.bits >> (variable - 1) & 1 == 1)
    }
}

/// Immutable multi-rooted DAG. See [`CircuitBuilder`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    nodes: Vec<Node>,
    roots: Vec<NodeId>,
    num_vars: u32,
}

#[derive(Clone, Copy)]
enum Folded {
    Const(bool),
    Node(NodeId),
}

impl Circuit {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn num_edges(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).sum()
    }

    /// Every child id is smaller than its parent and every root exists.
    pub fn check_invariants(&self) -> Result<(), CircuitError> {
        if self.roots.is_empty() {
            return Err(CircuitError::NoRoots);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node.kind {
                NodeKind::And | NodeKind::Or if node.children.is_empty() => {
                    return Err(CircuitError::EmptyGate { kind: node.kind });
                }
                NodeKind::Leaf(_) | NodeKind::True | NodeKind::False if !node.children.is_empty() => {
                    return Err(CircuitError::ChildrenOnTerminal { kind: node.kind });
                }
                _ => {}
            }
            if let Some(&child) = node.children.iter().find(|c| c.index() >= i) {
                return Err(CircuitError::UnknownChild { child, len: i });
            }
        }
        match self.roots.iter().find(|r| r.index() >= self.nodes.len()) {
            Some(&r) => Err(CircuitError::UnknownRoot(r)),
            None => Ok(()),
        }
    }

    /// Marks nodes reachable from any root.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        for r in &self.roots {
            seen[r.index()] = true;
        }
        // Parents precede nothing: a reverse scan visits every parent before its children.
        for i in (0..self.nodes.len()).rev() {
            if seen[i] {
                for c in &self.nodes[i].children {
                    seen[c.index()] = true;
                }
            }
        }
        seen
    }

    /// Number of nodes reachable from the roots.
    pub fn reachable_len(&self) -> usize {
        self.reachable().iter().filter(|&&b| b).count()
    }

    /// Literals appearing in reachable leaves, sorted and deduplicated.
    pub fn literals(&self) -> Vec<Literal> {
        let reach = self.reachable();
        let mut lits: Vec<Literal> = self
            .nodes
            .iter()
            .zip(&reach)
            .filter_map(|(n, &r)| match n.kind {
                NodeKind::Leaf(l) if r => Some(l),
                _ => None,
            })
            .collect();
        lits.sort_unstable();
        lits.dedup();
        lits
    }

    /// Removes True/False nodes by propagating them upward.
    ///
    /// And with a False child becomes False, Or with a True child becomes
    /// True, neutral constants are dropped, and a gate left with a single
    /// child by that removal is replaced by the child. A root that folds to a
    /// constant is kept as a single constant node. Only nodes reachable from
    /// the roots survive.
    pub fn fold_constants(&self) -> Circuit {
        let reach = self.reachable();
        let mut out = CircuitBuilder::with_num_vars(self.num_vars);
        let mut folded: Vec<Option<Folded>> = vec![None; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if !reach[i] {
                continue;
            }
            let f = match node.kind {
                NodeKind::True => Folded::Const(true),
                NodeKind::False => Folded::Const(false),
                NodeKind::Leaf(lit) => Folded::Node(out.leaf(lit)),
                NodeKind::And | NodeKind::Or => {
                    // False absorbs And, True absorbs Or.
                    let absorbing = node.kind == NodeKind::Or;
                    let mut kept = Vec::with_capacity(node.children.len());
                    let mut absorbed = false;
                    for c in &node.children {
                        match folded[c.index()].expect("children precede parents") {
                            Folded::Const(v) if v == absorbing => {
                                absorbed = true;
                                break;
                            }
                            Folded::Const(_) => {}
                            Folded::Node(id) => kept.push(id),
                        }
                    }
                    if absorbed {
                        Folded::Const(absorbing)
                    } else if kept.is_empty() {
                        Folded::Const(!absorbing)
                    } else if kept.len() == 1 && node.children.len() > 1 {
                        Folded::Node(kept[0])
                    } else {
                        Folded::Node(out.add_node(node.kind, kept).expect("children already folded"))
                    }
                }
            };
            folded[i] = Some(f);
        }
        let mut const_nodes: [Option<NodeId>; 2] = [None, None];
        let roots = self
            .roots
            .iter()
            .map(|r| match folded[r.index()].expect("roots are reachable") {
                Folded::Node(id) => id,
                Folded::Const(v) => *const_nodes[v as usize].get_or_insert_with(|| out.constant(v)),
            })
            .collect();
        // Leaves emitted before an absorbing constant was seen may be orphaned.
        out.build(roots).expect("roots were remapped").retain_reachable()
    }

    /// True iff no reachable node is a constant other than a constant root.
    pub fn is_folded(&self) -> bool {
        let reach = self.reachable();
        self.nodes.iter().enumerate().all(|(i, n)| {
            !reach[i]
                || n.children
                    .iter()
                    .all(|c| !matches!(self.nodes[c.index()].kind, NodeKind::True | NodeKind::False))
        })
    }

    /// Post-order Boolean evaluation, one value per root.
    pub fn boolean_eval<A: Assignment + ?Sized>(&self, assignment: &A) -> Result<Vec<bool>, CircuitError> {
        let reach = self.reachable();
        let mut values = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if !reach[i] {
                continue;
            }
            values[i] = match node.kind {
                NodeKind::True => true,
                NodeKind::False => false,
                NodeKind::Leaf(lit) => {
                    let v = assignment
                        .value(lit.variable())
                        .ok_or(CircuitError::MissingVariable(lit.variable()))?;
                    lit.holds(v)
                }
                NodeKind::And => node.children.iter().all(|c| values[c.index()]),
                NodeKind::Or => node.children.iter().any(|c| values[c.index()]),
            };
        }
        Ok(self.roots.iter().map(|r| values[r.index()]).collect())
    }

    /// Same circuit with a different root list (nodes are shared by value).
    /// Drops unreachable nodes, keeping the relative order of the rest.
    pub fn retain_reachable(self) -> Circuit {
        let reach = self.reachable();
        if reach.iter().all(|&r| r) {
            return self;
        }
        let mut remap = vec![NodeId(u32::MAX); self.nodes.len()];
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.into_iter().enumerate() {
            if reach[i] {
                remap[i] = NodeId(nodes.len() as u32);
                let children = node.children.iter().map(|c| remap[c.index()]).collect();
                nodes.push(Node { kind: node.kind, children });
            }
        }
        let roots = self.roots.iter().map(|r| remap[r.index()]).collect();
        Circuit { nodes, roots, num_vars: self.num_vars }
    }

    pub fn with_roots(&self, roots: Vec<NodeId>) -> Result<Circuit, CircuitError> {
        let c = Circuit { nodes: self.nodes.clone(), roots, num_vars: self.num_vars };
        c.check_invariants()?;
        Ok(c)
    }

    /// Equivalent circuit in which every Or child mentions the same
    /// variables as the Or, and every root mentions all `1..=num_vars`.
    ///
    /// A child lacking variables `V` is conjoined with `x ∨ ¬x` for each `x`
    /// in `V`. Decomposability and determinism are preserved, and on the
    /// result all-ones weights count models.
    pub fn smooth(&self) -> Circuit {
        let words = (self.num_vars as usize).div_ceil(64);
        let reach = self.reachable();
        let mut vars: Vec<Vec<u64>> = vec![Vec::new(); self.nodes.len()];
        let mut out = CircuitBuilder::with_num_vars(self.num_vars);
        let mut ids = vec![NodeId(u32::MAX); self.nodes.len()];
        let mut tautologies: HashMap<u32, NodeId> = HashMap::new();
        let mut padded: HashMap<(NodeId, Vec<u64>), NodeId> = HashMap::new();
        let mut pad = |out: &mut CircuitBuilder, node: NodeId, have: &[u64], want: &[u64]| -> NodeId {
            let missing: Vec<u64> = want.iter().zip(have).map(|(w, h)| w & !h).collect();
            if missing.iter().all(|&m| m == 0) {
                return node;
            }
            if let Some(&id) = padded.get(&(node, missing.clone())) {
                return id;
            }
            let mut children = vec![node];
            for (k, &word) in missing.iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    let v = (k * 64) as u32 + word.trailing_zeros() + 1;
                    word &= word - 1;
                    children.push(*tautologies.entry(v).or_insert_with(|| {
                        let pos = out.leaf(Literal::positive(v));
                        let neg = out.leaf(Literal::negative(v));
                        out.or(vec![pos, neg]).expect("two leaves")
                    }));
                }
            }
            let id = out.and(children).expect("non-empty");
            padded.insert((node, missing), id);
            id
        };
        for (i, node) in self.nodes.iter().enumerate() {
            if !reach[i] {
                continue;
            }
            let mut set = vec![0u64; words];
            for c in &node.children {
                for (s, w) in set.iter_mut().zip(&vars[c.index()]) {
                    *s |= w;
                }
            }
            if let NodeKind::Leaf(l) = node.kind {
                let v = l.variable() as usize - 1;
                set[v / 64] |= 1 << (v % 64);
            }
            let children = match node.kind {
                NodeKind::Or => node.children.iter().map(|c| pad(&mut out, ids[c.index()], &vars[c.index()], &set)).collect(),
                _ => node.children.iter().map(|c| ids[c.index()]).collect(),
            };
            ids[i] = out.add_node(node.kind, children).expect("children precede parents");
            vars[i] = set;
        }
        let mut all = vec![!0u64; words];
        if !self.num_vars.is_multiple_of(64) {
            all[words - 1] = (1u64 << (self.num_vars % 64)) - 1;
        }
        let roots = self.roots.iter().map(|r| pad(&mut out, ids[r.index()], &vars[r.index()], &all)).collect();
        out.build(roots).expect("roots were remapped")
    }
}
