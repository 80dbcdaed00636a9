use std::io::{self, BufRead, Write};

use log::warn;

use super::{content_lines, parse_int, CnfFormula, ParseError};
use crate::circuit::Literal;

/// Reads DIMACS CNF: `p cnf V C`, then 0-terminated clauses that may span
/// lines. `c` lines are comments; a `%` line ends the input (SATLIB style).
pub fn parse_dimacs<R: BufRead>(reader: R) -> Result<CnfFormula, ParseError> {
    let mut header: Option<(u32, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut last_line = 0;
    for item in content_lines(reader, "c") {
        let (line, text) = item?;
        last_line = line;
        if text.starts_with('%') {
            break;
        }
        let mut tokens = text.split_ascii_whitespace().peekable();
        if tokens.peek() == Some(&"p") {
            if header.is_some() {
                return Err(ParseError::Header { line, msg: "duplicate problem line".into() });
            }
            tokens.next();
            if tokens.next() != Some("cnf") {
                return Err(ParseError::Header { line, msg: "expected `p cnf V C`".into() });
            }
            let to_header = |e: ParseError| ParseError::Header { line, msg: e.to_string() };
            let vars = parse_int(tokens.next(), line, "variable count").map_err(to_header)?;
            let count = parse_int(tokens.next(), line, "clause count").map_err(to_header)?;
            header = Some((vars, count));
            continue;
        }
        let (num_vars, _) = header.ok_or(ParseError::MissingHeader)?;
        for token in tokens {
            let code: i64 = parse_int(Some(token), line, "literal")?;
            if code == 0 {
                if current.is_empty() {
                    return Err(ParseError::Syntax { line, msg: "empty clause".into() });
                }
                clauses.push(std::mem::take(&mut current));
                continue;
            }
            let lit = Literal::from_dimacs(code)
                .filter(|l| l.variable() <= num_vars)
                .ok_or(ParseError::LiteralOutOfRange { line, literal: code, num_vars })?;
            current.push(lit);
        }
    }
    let (num_vars, count) = header.ok_or(ParseError::MissingHeader)?;
    if !current.is_empty() {
        return Err(ParseError::Syntax { line: last_line, msg: "last clause is not 0-terminated".into() });
    }
    if clauses.len() != count {
        warn!("DIMACS header declares {count} clauses, found {}", clauses.len());
    }
    Ok(CnfFormula { num_vars, clauses })
}

pub fn write_dimacs<W: Write>(cnf: &CnfFormula, mut out: W) -> io::Result<()> {
    writeln!(out, "p cnf {} {}", cnf.num_vars, cnf.clauses.len())?;
    for clause in &cnf.clauses {
        for lit in clause {
            write!(out, "{} ", lit.to_dimacs())?;
        }
        writeln!(out, "0")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<CnfFormula, ParseError> {
        parse_dimacs(s.as_bytes())
    }

    #[test]
    fn basic() {
        let f = parse("p cnf 2 1\n1 -2 0").unwrap();
        assert_eq!(f.num_vars, 2);
        assert_eq!(f.clauses, vec![vec![Literal::positive(1), Literal::negative(2)]]);
    }

    #[test]
    fn comments_and_multiline_clauses() {
        let f = parse("c comment\np cnf 1 1\n1 0").unwrap();
        assert_eq!(f.num_vars, 1);
        assert_eq!(f.clauses, vec![vec![Literal::positive(1)]]);
        let f = parse("p cnf 3 2\n1 2\n 3 0 -1\n0\n%\n0\n").unwrap();
        assert_eq!(f.clauses.len(), 2);
        assert_eq!(f.clauses[0].len(), 3);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse("p cnf 1 1\n3 0"), Err(ParseError::LiteralOutOfRange { literal: 3, .. })));
        assert!(matches!(parse("1 2 0"), Err(ParseError::MissingHeader)));
        assert!(matches!(parse(""), Err(ParseError::MissingHeader)));
        assert!(matches!(parse("p cnf 2 1\n1 2"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("p cnf 2 1\n0"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("p dnf 2 1\n1 0"), Err(ParseError::Header { .. })));
    }

    #[test]
    fn write_then_read() {
        let f = parse("p cnf 3 2\n1 -2 3 0\n-1 2 0\n").unwrap();
        let mut buf = Vec::new();
        write_dimacs(&f, &mut buf).unwrap();
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), f);
    }
}
