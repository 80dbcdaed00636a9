use std::collections::HashMap;
use std::io::BufRead;

use log::warn;

use super::{content_lines, parse_int, ParseError};
use crate::circuit::{Circuit, CircuitBuilder, Literal, NodeId};

/// Reads the SDD library's textual format.
///
/// ```text
/// sdd N
/// T id | F id
/// L id vtree literal
/// D id vtree c p1 s1 .. pc sc
/// ```
///
/// A decision node becomes an Or over `And(prime, sub)` pairs. Nodes must be
/// declared before they are referenced; the last declared node is the root.
/// Elements with a False sub disappear during constant folding.
pub fn parse_sdd<R: BufRead>(reader: R) -> Result<Circuit, ParseError> {
    let mut lines = content_lines(reader, "c");
    let (header_line, header) = lines.next().ok_or(ParseError::MissingHeader)??;
    let mut tokens = header.split_ascii_whitespace();
    if tokens.next() != Some("sdd") {
        return Err(ParseError::Header { line: header_line, msg: "expected `sdd N`".into() });
    }
    let declared: u64 = parse_int(tokens.next(), header_line, "node count")
        .map_err(|e| ParseError::Header { line: header_line, msg: e.to_string() })?;

    let mut builder = CircuitBuilder::new();
    let mut ids: HashMap<u64, NodeId> = HashMap::new();
    let mut last = None;
    for item in lines {
        let (line, text) = item?;
        let mut tokens = text.split_ascii_whitespace();
        let tag = tokens.next().expect("content lines are non-empty");
        let id: u64 = parse_int(tokens.next(), line, "node id")?;
        if ids.contains_key(&id) {
            return Err(ParseError::DuplicateNode { line, id });
        }
        let lookup = |ids: &HashMap<u64, NodeId>, token: Option<&str>| -> Result<NodeId, ParseError> {
            let r: u64 = parse_int(token, line, "element reference")?;
            ids.get(&r).copied().ok_or(ParseError::UndeclaredNode { line, id: r })
        };
        let node = match tag {
            "T" => builder.constant(true),
            "F" => builder.constant(false),
            "L" => {
                let _vtree: u64 = parse_int(tokens.next(), line, "vtree index")?;
                let code: i64 = parse_int(tokens.next(), line, "literal")?;
                let lit = Literal::from_dimacs(code)
                    .ok_or(ParseError::Syntax { line, msg: "literal 0".into() })?;
                builder.leaf(lit)
            }
            "D" => {
                let _vtree: u64 = parse_int(tokens.next(), line, "vtree index")?;
                let count: usize = parse_int(tokens.next(), line, "element count")?;
                if count == 0 {
                    return Err(ParseError::Syntax { line, msg: "decision node without elements".into() });
                }
                let mut elements = Vec::with_capacity(count);
                for _ in 0..count {
                    let prime = lookup(&ids, tokens.next())?;
                    let sub = lookup(&ids, tokens.next())?;
                    elements.push(builder.and(vec![prime, sub])?);
                }
                builder.or(elements)?
            }
            other => return Err(ParseError::Syntax { line, msg: format!("unknown node type `{other}`") }),
        };
        if tokens.next().is_some() {
            return Err(ParseError::Syntax { line, msg: "element count does not match the element list".into() });
        }
        ids.insert(id, node);
        last = Some(node);
    }
    let root = last.ok_or(ParseError::Empty)?;
    if ids.len() as u64 != declared {
        warn!("sdd header declares {declared} nodes, found {}", ids.len());
    }
    Ok(builder.build(vec![root])?.fold_constants())
}
