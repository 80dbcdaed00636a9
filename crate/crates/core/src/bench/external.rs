use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::circuit::Circuit;
use crate::parse::{parse_circuit, write_dimacs, CircuitFormat, CnfFormula, ParseError};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("compiler command is empty")]
    EmptyCommand,
    #[error("cannot run `{cmd}`: {source}")]
    Spawn { cmd: String, source: std::io::Error },
    #[error("`{cmd}` timed out after {elapsed:.1?}")]
    Timeout { cmd: String, elapsed: Duration },
    #[error("`{cmd}` failed with {status}: {stderr}")]
    Failed { cmd: String, status: ExitStatus, stderr: String },
    #[error("`{cmd}` produced no output file at {}", path.display())]
    NoOutput { cmd: String, path: PathBuf },
    #[error("cannot parse the output of `{cmd}`: {source}")]
    Parse { cmd: String, source: ParseError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const POLL: Duration = Duration::from_millis(5);

/// Runs an external knowledge compiler on `cnf`.
///
/// `cmd` is split on whitespace (no shell quoting); every `{in}` and
/// `{out}` inside a token is replaced by the DIMACS input and the expected
/// output path. A command without `{out}` is assumed to write `<in>.nnf`,
/// as c2d does. The output format is sniffed from the file contents.
pub fn compile_external(cnf: &CnfFormula, cmd: &str, timeout: Duration) -> Result<Circuit, CompileError> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("formula.cnf");
    write_dimacs(cnf, BufWriter::new(File::create(&input)?))?;
    let output = if cmd.contains("{out}") {
        dir.path().join("compiled.nnf")
    } else {
        dir.path().join("formula.cnf.nnf")
    };
    let argv: Vec<String> = cmd
        .split_ascii_whitespace()
        .map(|t| t.replace("{in}", &path_str(&input)).replace("{out}", &path_str(&output)))
        .collect();
    let (program, args) = argv.split_first().ok_or(CompileError::EmptyCommand)?;
    let stderr_path = dir.path().join("stderr.txt");
    let start = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(File::create(&stderr_path)?)
        .spawn()
        .map_err(|source| CompileError::Spawn { cmd: cmd.to_string(), source })?;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(CompileError::Timeout { cmd: cmd.to_string(), elapsed: start.elapsed() });
        }
        std::thread::sleep(POLL);
    };
    if !status.success() {
        let mut stderr = String::new();
        File::open(&stderr_path)?.read_to_string(&mut stderr)?;
        let tail: String = stderr.lines().rev().take(5).collect::<Vec<_>>().into_iter().rev().collect::<Vec<_>>().join(" | ");
        return Err(CompileError::Failed { cmd: cmd.to_string(), status, stderr: tail });
    }
    if !output.exists() {
        return Err(CompileError::NoOutput { cmd: cmd.to_string(), path: output });
    }
    let text = std::fs::read_to_string(&output)?;
    let parse_err = |source| CompileError::Parse { cmd: cmd.to_string(), source };
    let format = CircuitFormat::sniff(&text)
        .ok_or_else(|| parse_err(ParseError::Syntax { line: 1, msg: "unrecognized circuit format".into() }))?;
    parse_circuit(format, text.as_bytes()).map_err(parse_err)
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}
