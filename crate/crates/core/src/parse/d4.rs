use std::collections::HashMap;
use std::io::BufRead;

use super::{content_lines, parse_int, ParseError};
use crate::circuit::{Circuit, CircuitBuilder, Literal, NodeId, NodeKind};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Decl {
    Or,
    And,
    True,
    False,
}

struct Edge {
    child: u64,
    literals: Vec<Literal>,
    line: usize,
}

/// Reads the d4 d-DNNF output format.
///
/// Declarations `o i 0`, `a i 0`, `t i 0`, `f i 0` introduce nodes with
/// explicit ids; an edge line `i j l1 .. lk 0` gives node `i` the child
/// `And(j, l1, .., lk)`. Node 1 is the root. Edge literals are expanded into
/// fresh And nodes here so later stages only see plain And/Or/leaf nodes.
pub fn parse_d4_nnf<R: BufRead>(reader: R) -> Result<Circuit, ParseError> {
    let mut decls: HashMap<u64, (Decl, usize)> = HashMap::new();
    let mut edges: HashMap<u64, Vec<Edge>> = HashMap::new();
    let mut num_vars = 0u32;

    for item in content_lines(reader, "c") {
        let (line, text) = item?;
        let tokens: Vec<&str> = text.split_ascii_whitespace().collect();
        if tokens.last() != Some(&"0") {
            return Err(ParseError::Syntax { line, msg: "line must end with 0".into() });
        }
        let body = &tokens[..tokens.len() - 1];
        let decl = match body[0] {
            "o" => Some(Decl::Or),
            "a" => Some(Decl::And),
            "t" => Some(Decl::True),
            "f" => Some(Decl::False),
            _ => None,
        };
        if let Some(decl) = decl {
            if body.len() != 2 {
                return Err(ParseError::Syntax { line, msg: "expected `<type> <id> 0`".into() });
            }
            let id: u64 = parse_int(Some(body[1]), line, "node id")?;
            if id == 0 {
                return Err(ParseError::Syntax { line, msg: "node ids start at 1".into() });
            }
            if decls.insert(id, (decl, line)).is_some() {
                return Err(ParseError::DuplicateNode { line, id });
            }
            continue;
        }
        if body.len() < 2 {
            return Err(ParseError::Syntax { line, msg: "expected `<parent> <child> <literals..> 0`".into() });
        }
        let parent: u64 = parse_int(Some(body[0]), line, "parent id")?;
        let child: u64 = parse_int(Some(body[1]), line, "child id")?;
        let literals = body[2..]
            .iter()
            .map(|t| {
                let code: i64 = parse_int(Some(t), line, "literal")?;
                Literal::from_dimacs(code).ok_or(ParseError::Syntax { line, msg: "literal 0 inside edge".into() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        num_vars = literals.iter().map(|l| l.variable()).fold(num_vars, u32::max);
        edges.entry(parent).or_default().push(Edge { child, literals, line });
    }

    if decls.is_empty() {
        return Err(ParseError::Empty);
    }
    for (parent, list) in &edges {
        for e in list {
            for id in [*parent, e.child] {
                if !decls.contains_key(&id) {
                    return Err(ParseError::UndeclaredNode { line: e.line, id });
                }
            }
        }
    }
    if !decls.contains_key(&1) {
        return Err(ParseError::UndeclaredNode { line: 0, id: 1 });
    }

    let order = post_order(1, &edges)?;
    let mut builder = CircuitBuilder::with_num_vars(num_vars);
    let mut mapped: HashMap<u64, NodeId> = HashMap::with_capacity(order.len());
    let mut leaves: HashMap<Literal, NodeId> = HashMap::new();
    for id in order {
        let (decl, _) = decls[&id];
        let children: Vec<NodeId> = match edges.get(&id) {
            None => Vec::new(),
            Some(list) => list
                .iter()
                .map(|e| {
                    let target = mapped[&e.child];
                    if e.literals.is_empty() {
                        return Ok(target);
                    }
                    let mut conj = vec![target];
                    conj.extend(e.literals.iter().map(|&l| *leaves.entry(l).or_insert_with(|| builder.leaf(l))));
                    builder.and(conj)
                })
                .collect::<Result<_, _>>()?,
        };
        let node = match decl {
            Decl::True => builder.constant(true),
            Decl::False => builder.constant(false),
            Decl::And | Decl::Or if children.is_empty() => builder.constant(decl == Decl::And),
            Decl::And => builder.add_node(NodeKind::And, children)?,
            Decl::Or => builder.add_node(NodeKind::Or, children)?,
        };
        mapped.insert(id, node);
    }
    Ok(builder.build(vec![mapped[&1]])?.fold_constants())
}

/// Children-first order of the nodes reachable from `root`.
fn post_order(root: u64, edges: &HashMap<u64, Vec<Edge>>) -> Result<Vec<u64>, ParseError> {
    const OPEN: u8 = 1;
    const DONE: u8 = 2;
    let mut state: HashMap<u64, u8> = HashMap::new();
    let mut order = Vec::new();
    let mut stack: Vec<(u64, usize)> = vec![(root, 0)];
    state.insert(root, OPEN);
    while let Some((id, next)) = stack.last_mut() {
        let id = *id;
        let list = edges.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        if let Some(e) = list.get(*next) {
            *next += 1;
            match state.get(&e.child) {
                Some(&DONE) => {}
                Some(_) => return Err(ParseError::Cycle(e.child)),
                None => {
                    state.insert(e.child, OPEN);
                    stack.push((e.child, 0));
                }
            }
        } else {
            state.insert(id, DONE);
            order.push(id);
            stack.pop();
        }
    }
    Ok(order)
}
