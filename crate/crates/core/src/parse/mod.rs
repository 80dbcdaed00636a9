//! Line-oriented readers for compiled circuit files and DIMACS CNF.
//!
//! All formats are ASCII; tokens are separated by any run of spaces or tabs.

mod c2d;
mod d4;
mod dimacs;
mod sdd;

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Literal};

pub use c2d::parse_c2d_nnf;
pub use d4::parse_d4_nnf;
pub use dimacs::{parse_dimacs, write_dimacs};
pub use sdd::parse_sdd;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("missing header")]
    MissingHeader,
    #[error("line {line}: malformed header: {msg}")]
    Header { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: node index {index} is not defined before this line")]
    ForwardReference { line: usize, index: u64 },
    #[error("line {line}: literal {literal} out of range for {num_vars} variables")]
    LiteralOutOfRange { line: usize, literal: i64, num_vars: u32 },
    #[error("line {line}: reference to undeclared node {id}")]
    UndeclaredNode { line: usize, id: u64 },
    #[error("line {line}: node {id} declared twice")]
    DuplicateNode { line: usize, id: u64 },
    #[error("node {0} is part of a cycle")]
    Cycle(u64),
    #[error("no nodes in input")]
    Empty,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A CNF formula: conjunction of clauses over variables `1..=num_vars`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfFormula {
    pub num_vars: u32,
    pub clauses: Vec<Vec<Literal>>,
}

impl CnfFormula {
    /// True iff every clause has a literal satisfied by `assignment[v - 1]`.
    pub fn eval(&self, assignment: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|cl| cl.iter().any(|l| l.holds(assignment[l.variable() as usize - 1])))
    }

    /// Brute-force model count; only sensible for small `num_vars`.
    pub fn count_models(&self) -> u64 {
        let n = self.num_vars;
        assert!(n <= 30, "brute-force count limited to 30 variables");
        let mut assignment = vec![false; n as usize];
        (0..1u64 << n)
            .filter(|bits| {
                for (v, slot) in assignment.iter_mut().enumerate() {
                    *slot = bits >> v & 1 == 1;
                }
                self.eval(&assignment)
            })
            .count() as u64
    }
}

/// On-disk circuit formats understood by [`parse_circuit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircuitFormat {
    C2d,
    D4,
    Sdd,
}

impl FromStr for CircuitFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "c2d" | "nnf" => Ok(CircuitFormat::C2d),
            "d4" => Ok(CircuitFormat::D4),
            "sdd" => Ok(CircuitFormat::Sdd),
            other => Err(format!("unknown circuit format `{other}` (expected c2d, d4 or sdd)")),
        }
    }
}

impl CircuitFormat {
    /// Guesses the format from the first meaningful line of a file.
    ///
    /// `nnf V E n` is c2d, `sdd N` is SDD, and d4 files open with a node
    /// declaration such as `o 1 0`.
    pub fn sniff(text: &str) -> Option<CircuitFormat> {
        for line in text.lines() {
            let mut tokens = line.split_ascii_whitespace();
            let Some(first) = tokens.next() else { continue };
            return match first {
                "c" => continue,
                "nnf" => Some(CircuitFormat::C2d),
                "sdd" => Some(CircuitFormat::Sdd),
                "o" | "a" | "t" | "f" => Some(CircuitFormat::D4),
                "L" | "T" | "F" | "D" => Some(CircuitFormat::Sdd),
                _ => None,
            };
        }
        None
    }

    pub fn from_extension(path: &Path) -> Option<CircuitFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "sdd" => Some(CircuitFormat::Sdd),
            "d4" | "dnnf" => Some(CircuitFormat::D4),
            _ => None,
        }
    }
}

pub fn parse_circuit<R: BufRead>(format: CircuitFormat, reader: R) -> Result<Circuit, ParseError> {
    match format {
        CircuitFormat::C2d => parse_c2d_nnf(reader),
        CircuitFormat::D4 => parse_d4_nnf(reader),
        CircuitFormat::Sdd => parse_sdd(reader),
    }
}

/// Reads a circuit file, choosing the format from `format`, the extension
/// (`.sdd`, `.d4`) or the file contents, in that order. `.nnf` files are
/// told apart by content since both c2d and d4 use that extension.
pub fn read_circuit_file(path: &Path, format: Option<CircuitFormat>) -> Result<Circuit, ParseError> {
    let text = std::fs::read_to_string(path)?;
    let format = format
        .or_else(|| CircuitFormat::from_extension(path))
        .or_else(|| CircuitFormat::sniff(&text))
        .ok_or_else(|| ParseError::Syntax { line: 1, msg: "cannot determine circuit format".into() })?;
    parse_circuit(format, text.as_bytes())
}

pub fn read_dimacs_file(path: &Path) -> Result<CnfFormula, ParseError> {
    parse_dimacs(BufReader::new(File::open(path)?))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
pub(crate) fn content_lines<R: BufRead>(
    reader: R,
    comment_prefix: &'static str,
) -> impl Iterator<Item = Result<(usize, String), io::Error>> {
    reader.lines().enumerate().filter_map(move |(i, line)| match line {
        Err(e) => Some(Err(e)),
        Ok(l) => {
            let trimmed = l.trim();
            let is_comment = trimmed == comment_prefix || trimmed.starts_with(&format!("{comment_prefix} "));
            (!trimmed.is_empty() && !is_comment).then(|| Ok((i + 1, trimmed.to_string())))
        }
    })
}

pub(crate) fn parse_int<T: FromStr>(token: Option<&str>, line: usize, what: &str) -> Result<T, ParseError> {
    let token = token.ok_or_else(|| ParseError::Syntax { line, msg: format!("missing {what}") })?;
    token
        .parse()
        .map_err(|_| ParseError::Syntax { line, msg: format!("invalid {what} `{token}`") })
}
