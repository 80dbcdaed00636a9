use std::io::BufRead;

use log::warn;

use super::{content_lines, parse_int, ParseError};
use crate::circuit::{Circuit, CircuitBuilder, Literal, NodeId, NodeKind};

/// Reads the c2d NNF format.
///
/// ```text
/// nnf V E n
/// L l              literal (DIMACS-signed)
/// A c i1 .. ic     And over earlier node indices
/// O j c i1 .. ic   Or; the decision variable j is parsed and ignored
/// ```
///
/// Node `i` is the `i`-th node line; the last node is the root. `A 0` is
/// True and `O j 0` is False; constants are folded before returning.
pub fn parse_c2d_nnf<R: BufRead>(reader: R) -> Result<Circuit, ParseError> {
    let mut lines = content_lines(reader, "c");
    let (header_line, header) = lines.next().ok_or(ParseError::MissingHeader)??;
    let mut tokens = header.split_ascii_whitespace();
    if tokens.next() != Some("nnf") {
        return Err(ParseError::Header { line: header_line, msg: "expected `nnf V E n`".into() });
    }
    let header_int = |t: Option<&str>, what: &str| -> Result<u64, ParseError> {
        parse_int(t, header_line, what)
            .map_err(|e| ParseError::Header { line: header_line, msg: e.to_string() })
    };
    let declared_nodes = header_int(tokens.next(), "node count")?;
    let declared_edges = header_int(tokens.next(), "edge count")?;
    let num_vars = u32::try_from(header_int(tokens.next(), "variable count")?)
        .map_err(|_| ParseError::Header { line: header_line, msg: "variable count too large".into() })?;
    if tokens.next().is_some() {
        return Err(ParseError::Header { line: header_line, msg: "trailing tokens".into() });
    }

    let mut builder = CircuitBuilder::with_num_vars(num_vars);
    let mut edges = 0u64;
    for item in lines {
        let (line, text) = item?;
        let mut tokens = text.split_ascii_whitespace();
        let tag = tokens.next().expect("content lines are non-empty");
        let kind = match tag {
            "L" => {
                let code: i64 = parse_int(tokens.next(), line, "literal")?;
                let lit = Literal::from_dimacs(code)
                    .filter(|l| l.variable() <= num_vars)
                    .ok_or(ParseError::LiteralOutOfRange { line, literal: code, num_vars })?;
                NodeKind::Leaf(lit)
            }
            "A" => NodeKind::And,
            "O" => {
                let _decision: u64 = parse_int(tokens.next(), line, "decision variable")?;
                NodeKind::Or
            }
            other => return Err(ParseError::Syntax { line, msg: format!("unknown node type `{other}`") }),
        };
        let id = if let NodeKind::Leaf(_) = kind {
            builder.add_node(kind, Vec::new())?
        } else {
            let count: usize = parse_int(tokens.next(), line, "child count")?;
            let mut children = Vec::with_capacity(count);
            for _ in 0..count {
                let index: u64 = parse_int(tokens.next(), line, "child index")?;
                if index >= builder.len() as u64 {
                    return Err(ParseError::ForwardReference { line, index });
                }
                children.push(NodeId(index as u32));
            }
            edges += count as u64;
            if children.is_empty() {
                builder.constant(kind == NodeKind::And)
            } else {
                builder.add_node(kind, children)?
            }
        };
        debug_assert_eq!(id.index() + 1, builder.len());
        if tokens.next().is_some() {
            return Err(ParseError::Syntax { line, msg: "trailing tokens".into() });
        }
    }
    if builder.is_empty() {
        return Err(ParseError::Empty);
    }
    if builder.len() as u64 != declared_nodes || edges != declared_edges {
        warn!(
            "c2d header declares {declared_nodes} nodes / {declared_edges} edges, found {} / {edges}",
            builder.len()
        );
    }
    let root = NodeId(builder.len() as u32 - 1);
    Ok(builder.build(vec![root])?.fold_constants())
}
