//! Flat index-vector form of a layered circuit and its `.klay` file format.
//!
//! Layer `l` is described by two vectors with one entry per edge into it:
//! `select` (S) holds the child's index in layer `l - 1` and `reduce` (R)
//! the parent's index in layer `l`. Evaluating a layer is then a gather
//! `E = N[S]` followed by a segment reduction of `E` keyed by `R`.
//!
//! ```text
//! klay 1
//! inputs K
//! vars V
//! roots r1 r2 ...
//! constants p1:b1 ...        (optional)
//! inputmap lit:slot ...
//! layer l OP width E         (OP is prod or sum), then per layer:
//! S i1 ... iE
//! R j1 ... jE
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::circuit::Literal;
use crate::layerize::{LayerOp, LayeredCircuit};
use crate::stats::CircuitStats;

pub const KLAY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReduceOp {
    Product,
    Sum,
}

impl ReduceOp {
    /// Product on odd layers, sum on even ones.
    pub fn for_layer(layer: usize) -> ReduceOp {
        if layer % 2 == 1 {
            ReduceOp::Product
        } else {
            ReduceOp::Sum
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            ReduceOp::Product => "prod",
            ReduceOp::Sum => "sum",
        }
    }
}

impl fmt::Display for ReduceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Error)]
pub enum KlayFormatError {
    #[error("unsupported klay version {0} (expected {KLAY_VERSION})")]
    Version(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid circuit: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn invariant<T>(msg: impl Into<String>) -> Result<T, KlayFormatError> {
    Err(KlayFormatError::Invariant(msg.into()))
}

/// One layer of a [`TensorizedCircuit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorLayer {
    op: ReduceOp,
    width: usize,
    select: Vec<u32>,
    reduce: Vec<u32>,
    /// Edges of parent `p` are `segment_offsets[p]..segment_offsets[p + 1]`.
    segment_offsets: Vec<u32>,
    /// Edges leaving child `c`, ascending: `fanout_edges[fanout_offsets[c]..fanout_offsets[c + 1]]`.
    fanout_offsets: Vec<u32>,
    fanout_edges: Vec<u32>,
}

impl TensorLayer {
    pub fn op(&self) -> ReduceOp {
        self.op
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Child index of every edge (S).
    pub fn select(&self) -> &[u32] {
        &self.select
    }

    /// Parent index of every edge (R), nondecreasing.
    pub fn reduce(&self) -> &[u32] {
        &self.reduce
    }

    pub fn num_edges(&self) -> usize {
        self.select.len()
    }

    pub fn segment(&self, parent: usize) -> std::ops::Range<usize> {
        self.segment_offsets[parent] as usize..self.segment_offsets[parent + 1] as usize
    }

    pub fn segment_offsets(&self) -> &[u32] {
        &self.segment_offsets
    }

    /// Edge ids whose child is `child`, in ascending order.
    pub fn fanout(&self, child: usize) -> &[u32] {
        &self.fanout_edges[self.fanout_offsets[child] as usize..self.fanout_offsets[child + 1] as usize]
    }

    fn new(op: ReduceOp, width: usize, below: usize, select: Vec<u32>, reduce: Vec<u32>, l: usize) -> Result<Self, KlayFormatError> {
        if select.len() != reduce.len() {
            return invariant(format!("layer {l}: |S| = {} but |R| = {}", select.len(), reduce.len()));
        }
        if reduce.windows(2).any(|w| w[0] > w[1]) {
            return invariant(format!("layer {l}: R is not sorted"));
        }
        let mut segment_offsets = vec![0u32; width + 1];
        for &r in &reduce {
            if r as usize >= width {
                return invariant(format!("layer {l}: R entry {r} >= width {width}"));
            }
            segment_offsets[r as usize + 1] += 1;
        }
        for p in 0..width {
            if segment_offsets[p + 1] == 0 {
                return invariant(format!("layer {l}: node {p} has no incoming edge"));
            }
            segment_offsets[p + 1] += segment_offsets[p];
        }
        let mut fanout_offsets = vec![0u32; below + 1];
        for &s in &select {
            if s as usize >= below {
                return invariant(format!("layer {l}: S entry {s} >= width {below} of layer {}", l - 1));
            }
            fanout_offsets[s as usize + 1] += 1;
        }
        for c in 0..below {
            if fanout_offsets[c + 1] == 0 {
                return invariant(format!("layer {}: node {c} is never selected by layer {l}", l - 1));
            }
            fanout_offsets[c + 1] += fanout_offsets[c];
        }
        let mut cursor = fanout_offsets.clone();
        let mut fanout_edges = vec![0u32; select.len()];
        for (e, &s) in select.iter().enumerate() {
            fanout_edges[cursor[s as usize] as usize] = e as u32;
            cursor[s as usize] += 1;
        }
        Ok(TensorLayer { op, width, select, reduce, segment_offsets, fanout_offsets, fanout_edges })
    }
}

/// Index-vector representation of a multi-rooted layered circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorizedCircuit {
    num_vars: u32,
    inputs: Vec<Literal>,
    layers: Vec<TensorLayer>,
    root_indices: Vec<u32>,
    constant_roots: BTreeMap<usize, bool>,
}

/// Raw layer description accepted by [`TensorizedCircuit::from_parts`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerParts {
    pub op: ReduceOp,
    pub width: usize,
    pub select: Vec<u32>,
    pub reduce: Vec<u32>,
}

impl TensorizedCircuit {
    /// Validating constructor; rejects anything that breaks the layer
    /// invariants instead of repairing it.
    pub fn from_parts(
        num_vars: u32,
        inputs: Vec<Literal>,
        layers: Vec<LayerParts>,
        root_indices: Vec<u32>,
        constant_roots: BTreeMap<usize, bool>,
    ) -> Result<Self, KlayFormatError> {
        let distinct: BTreeSet<Literal> = inputs.iter().copied().collect();
        if distinct.len() != inputs.len() {
            return invariant("input map assigns a literal to two slots");
        }
        if let Some(l) = inputs.iter().find(|l| l.variable() > num_vars) {
            return invariant(format!("input literal {l} exceeds {num_vars} variables"));
        }
        let mut below = inputs.len();
        let mut built = Vec::with_capacity(layers.len());
        for (i, parts) in layers.into_iter().enumerate() {
            let l = i + 1;
            if parts.op != ReduceOp::for_layer(l) {
                return invariant(format!("layer {l} must be {}", ReduceOp::for_layer(l)));
            }
            if parts.width == 0 {
                return invariant(format!("layer {l} is empty"));
            }
            built.push(TensorLayer::new(parts.op, parts.width, below, parts.select, parts.reduce, l)?);
            below = parts.width;
        }
        if built.is_empty() {
            if !inputs.is_empty() || !root_indices.is_empty() {
                return invariant("a circuit without layers can only have constant roots");
            }
        } else {
            let mut is_root = vec![false; below];
            for &r in &root_indices {
                match is_root.get_mut(r as usize) {
                    Some(slot) => *slot = true,
                    None => return invariant(format!("root {r} outside the final layer of width {below}")),
                }
            }
            if let Some(p) = is_root.iter().position(|r| !r) {
                return invariant(format!("final layer node {p} is not a root"));
            }
        }
        let outputs = root_indices.len() + constant_roots.len();
        if let Some(p) = constant_roots.keys().find(|&&p| p >= outputs) {
            return invariant(format!("constant root position {p} >= {outputs} outputs"));
        }
        if outputs == 0 {
            return invariant("circuit has no outputs");
        }
        Ok(TensorizedCircuit { num_vars, inputs, layers: built, root_indices, constant_roots })
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    /// Literal held by each input slot.
    pub fn inputs(&self) -> &[Literal] {
        &self.inputs
    }

    pub fn input_slot(&self, lit: Literal) -> Option<usize> {
        self.inputs.iter().position(|&l| l == lit)
    }

    /// Layers `1..=L`; `layers()[0]` is layer 1.
    pub fn layers(&self) -> &[TensorLayer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Width of layer `l`, with layer 0 being the inputs.
    pub fn width(&self, l: usize) -> usize {
        if l == 0 {
            self.inputs.len()
        } else {
            self.layers[l - 1].width
        }
    }

    pub fn root_indices(&self) -> &[u32] {
        &self.root_indices
    }

    pub fn constant_roots(&self) -> &BTreeMap<usize, bool> {
        &self.constant_roots
    }

    pub fn num_outputs(&self) -> usize {
        self.root_indices.len() + self.constant_roots.len()
    }

    /// For each output position, either a constant or a final-layer index.
    pub fn outputs(&self) -> impl Iterator<Item = Output> + '_ {
        let mut roots = self.root_indices.iter();
        (0..self.num_outputs()).map(move |p| match self.constant_roots.get(&p) {
            Some(&v) => Output::Constant(v),
            None => Output::Node(*roots.next().expect("positions partition the outputs") as usize),
        })
    }

    pub fn num_edges(&self) -> usize {
        self.layers.iter().map(TensorLayer::num_edges).sum()
    }

    pub fn stats(&self) -> CircuitStats {
        CircuitStats::from_tensorized(self)
    }

    pub fn write_klay<W: Write>(&self, mut out: W) -> io::Result<()> {
        fn join<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
            items.into_iter().map(|x| format!(" {x}")).collect()
        }
        writeln!(out, "klay {KLAY_VERSION}")?;
        writeln!(out, "inputs {}", self.inputs.len())?;
        writeln!(out, "vars {}", self.num_vars)?;
        writeln!(out, "roots{}", join(&self.root_indices))?;
        if !self.constant_roots.is_empty() {
            writeln!(out, "constants{}", join(self.constant_roots.iter().map(|(p, &b)| format!("{p}:{}", b as u8))))?;
        }
        writeln!(out, "inputmap{}", join(self.inputs.iter().enumerate().map(|(s, l)| format!("{l}:{s}"))))?;
        for (i, layer) in self.layers.iter().enumerate() {
            writeln!(out, "layer {} {} {} {}", i + 1, layer.op, layer.width, layer.num_edges())?;
            writeln!(out, "S{}", join(&layer.select))?;
            writeln!(out, "R{}", join(&layer.reduce))?;
        }
        out.flush()
    }

    pub fn to_klay_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_klay(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("klay output is ASCII")
    }

    pub fn read_klay<R: BufRead>(source: R) -> Result<Self, KlayFormatError> {
        KlayReader::new(source).read()
    }
}

/// Where an output's value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    Constant(bool),
    Node(usize),
}

/// Emits `S_l` / `R_l` per layer by walking each layer's nodes in order
/// and each node's children in stored order.
pub fn tensorize(layered: &LayeredCircuit) -> TensorizedCircuit {
    let layers = layered.layers()[1..]
        .iter()
        .enumerate()
        .map(|(i, nodes)| {
            let edges = nodes.iter().map(|n| n.children.len()).sum();
            let mut select = Vec::with_capacity(edges);
            let mut reduce = Vec::with_capacity(edges);
            for (index, node) in nodes.iter().enumerate() {
                for &child in &node.children {
                    reduce.push(index as u32);
                    select.push(child);
                }
            }
            let op = match nodes.first().map(|n| n.op) {
                Some(LayerOp::Sum) => ReduceOp::Sum,
                _ => ReduceOp::for_layer(i + 1),
            };
            LayerParts { op, width: nodes.len(), select, reduce }
        })
        .collect();
    TensorizedCircuit::from_parts(
        layered.num_vars(),
        layered.inputs().to_vec(),
        layers,
        layered.root_indices().to_vec(),
        layered.constant_roots().clone(),
    )
    .expect("a valid layered circuit tensorizes to a valid index form")
}

struct KlayReader<R> {
    lines: std::iter::Enumerate<io::Lines<R>>,
    line: usize,
}

impl<R: BufRead> KlayReader<R> {
    fn new(source: R) -> Self {
        KlayReader { lines: source.lines().enumerate(), line: 0 }
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, KlayFormatError> {
        Err(KlayFormatError::Syntax { line: self.line, msg: msg.into() })
    }

    /// Next non-empty line, split into tokens.
    fn next_line(&mut self) -> Result<Option<Vec<String>>, KlayFormatError> {
        for (i, line) in self.lines.by_ref() {
            let line = line?;
            self.line = i + 1;
            let tokens: Vec<String> = line.split_ascii_whitespace().map(str::to_string).collect();
            if !tokens.is_empty() {
                return Ok(Some(tokens));
            }
        }
        Ok(None)
    }

    fn expect_line(&mut self, keyword: &str) -> Result<Vec<String>, KlayFormatError> {
        match self.next_line()? {
            Some(tokens) if tokens[0] == keyword => Ok(tokens),
            Some(tokens) => self.syntax(format!("expected `{keyword}`, found `{}`", tokens[0])),
            None => self.syntax(format!("unexpected end of file, expected `{keyword}`")),
        }
    }

    fn int<T: std::str::FromStr>(&self, token: &str) -> Result<T, KlayFormatError> {
        token
            .parse()
            .or_else(|_| self.syntax(format!("invalid integer `{token}`")))
    }

    fn single<T: std::str::FromStr>(&mut self, keyword: &str) -> Result<T, KlayFormatError> {
        let tokens = self.expect_line(keyword)?;
        if tokens.len() != 2 {
            return self.syntax(format!("`{keyword}` takes one value"));
        }
        self.int(&tokens[1])
    }

    fn pair(&self, token: &str) -> Result<(i64, u64), KlayFormatError> {
        let Some((a, b)) = token.split_once(':') else {
            return self.syntax(format!("expected `a:b`, found `{token}`"));
        };
        Ok((self.int(a)?, self.int(b)?))
    }

    fn read(mut self) -> Result<TensorizedCircuit, KlayFormatError> {
        let header = self.expect_line("klay")?;
        if header.len() != 2 || header[1] != KLAY_VERSION.to_string() {
            return Err(KlayFormatError::Version(header[1..].join(" ")));
        }
        let num_inputs: usize = self.single("inputs")?;
        let num_vars: u32 = self.single("vars")?;
        let roots_line = self.expect_line("roots")?;
        let root_indices = roots_line[1..].iter().map(|t| self.int(t)).collect::<Result<Vec<u32>, _>>()?;

        let mut tokens = self.next_line()?;
        let mut constant_roots = BTreeMap::new();
        if let Some(t) = tokens.as_ref().filter(|t| t[0] == "constants") {
            for item in &t[1..] {
                let (pos, value) = self.pair(item)?;
                let value = match value {
                    0 => false,
                    1 => true,
                    _ => return self.syntax("constant value must be 0 or 1"),
                };
                let pos = usize::try_from(pos).or_else(|_| self.syntax("negative constant position"))?;
                if constant_roots.insert(pos, value).is_some() {
                    return self.syntax(format!("constant position {pos} given twice"));
                }
            }
            tokens = self.next_line()?;
        }
        let Some(map) = tokens.filter(|t| t[0] == "inputmap") else {
            return self.syntax("expected `inputmap`");
        };
        let mut slots: Vec<Option<Literal>> = vec![None; num_inputs];
        for item in &map[1..] {
            let (code, slot) = self.pair(item)?;
            let lit = Literal::from_dimacs(code).map_or_else(|| self.syntax("literal 0 in input map"), Ok)?;
            match slots.get_mut(slot as usize) {
                Some(s @ None) => *s = Some(lit),
                Some(Some(_)) => return self.syntax(format!("slot {slot} assigned twice")),
                None => return self.syntax(format!("slot {slot} >= {num_inputs} inputs")),
            }
        }
        let inputs = slots
            .into_iter()
            .enumerate()
            .map(|(s, l)| l.map_or_else(|| self.syntax(format!("slot {s} has no literal")), Ok))
            .collect::<Result<Vec<_>, _>>()?;

        let mut layers = Vec::new();
        while let Some(header) = self.next_line()? {
            if header[0] != "layer" || header.len() != 5 {
                return self.syntax("expected `layer l OP width E`");
            }
            let index: usize = self.int(&header[1])?;
            if index != layers.len() + 1 {
                return self.syntax(format!("layer {index} out of sequence"));
            }
            let op = match header[2].as_str() {
                "prod" => ReduceOp::Product,
                "sum" => ReduceOp::Sum,
                other => return self.syntax(format!("unknown layer op `{other}`")),
            };
            let width: usize = self.int(&header[3])?;
            let edges: usize = self.int(&header[4])?;
            let mut vector = |name: &str| -> Result<Vec<u32>, KlayFormatError> {
                let line = self.expect_line(name)?;
                let values = line[1..].iter().map(|t| self.int(t)).collect::<Result<Vec<u32>, _>>()?;
                if values.len() != edges {
                    return invariant(format!("layer {index}: {name} has {} entries, header says {edges}", values.len()));
                }
                Ok(values)
            };
            let select = vector("S")?;
            let reduce = vector("R")?;
            layers.push(LayerParts { op, width, select, reduce });
        }
        TensorizedCircuit::from_parts(num_vars, inputs, layers, root_indices, constant_roots)
    }
}
