//! External SMT solver sessions over the SMT-LIB 2 text protocol.
//!
//! A session owns one solver process. Commands are sent with
//! `:print-success` enabled so that every command is acknowledged and errors
//! surface at the command that caused them. When a `check-sat` exceeds the
//! timeout the process is killed, the result is `Unknown("timeout")`, and the
//! next command transparently restarts the solver and replays the live
//! assertion stack.

pub mod sexp;
pub mod smtlib;

use std::collections::BTreeSet;
use std::env;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::logic::{Assignment, Formula, Var};

/// Logic for quantified queries.
pub const QUANTIFIED_LOGIC: &str = "LIA";
/// Logic for quantifier-free feasibility checks.
pub const QF_LOGIC: &str = "QF_LIA";

/// Deadline for commands other than `check-sat`.
const COMMAND_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    /// Model over the requested variables; omitted ones are completed with 0.
    Sat(Assignment),
    Unsat,
    Unknown(String),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("cannot start solver `{program}`: {source}")]
    Spawn { program: String, source: std::io::Error },
    #[error("solver i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver process exited unexpectedly")]
    Exited,
    #[error("solver did not answer within {0:?}")]
    Unresponsive(Duration),
    #[error("unexpected solver output `{0}`")]
    Protocol(String),
    #[error("solver reported an error: {0}")]
    Solver(String),
    #[error("variable `{0}` was not declared in this session")]
    Undeclared(Var),
    #[error("pop on an empty assertion stack")]
    PopAtZero,
}

/// How to launch a solver.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    pub program: PathBuf,
    pub args: Vec<String>,
}

/// Solvers tried, in order, when none is configured explicitly.
pub const KNOWN_SOLVERS: &[&str] = &["yices-smt2", "z3", "cvc5"];

impl SolverConfig {
    /// Configuration for `program`, with the flags that put known solvers in
    /// incremental stdin mode.
    pub fn new(program: impl Into<PathBuf>) -> Self {
        let program = program.into();
        let base = program.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
        let args: &[&str] = if base.starts_with("z3") {
            &["-in", "-smt2"]
        } else if base.starts_with("yices") {
            &["--incremental"]
        } else if base.starts_with("cvc5") || base.starts_with("cvc4") {
            &["--incremental", "--lang", "smt2"]
        } else {
            &[]
        };
        SolverConfig { program, args: args.iter().map(|s| s.to_string()).collect() }
    }

    /// First known solver found on `PATH`.
    pub fn detect() -> Option<Self> {
        KNOWN_SOLVERS.iter().find_map(|name| find_in_path(name).map(SolverConfig::new))
    }
}

pub fn find_in_path(name: &str) -> Option<PathBuf> {
    let candidate = Path::new(name);
    if candidate.components().count() > 1 {
        return candidate.is_file().then(|| candidate.to_path_buf());
    }
    env::split_paths(&env::var_os("PATH")?)
        .map(|dir| dir.join(name))
        .find(|p| p.is_file())
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Process {
    fn spawn(config: &SolverConfig) -> Result<Self, SolverError> {
        let mut child = Command::new(&config.program)
            .args(&config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| SolverError::Spawn {
                program: config.program.display().to_string(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(Process { child, stdin, lines })
    }

    /// Reads one complete s-expression or atom, possibly spanning lines.
    fn read_response(&mut self, timeout: Duration) -> Result<String, SolverError> {
        let deadline = Instant::now() + timeout;
        let mut text = String::new();
        let mut depth = 0;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(line) => {
                    if line.trim().is_empty() && text.is_empty() {
                        continue;
                    }
                    depth += sexp::depth_delta(&line);
                    text.push_str(&line);
                    text.push('\n');
                    if depth <= 0 {
                        return Ok(text.trim().to_string());
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Err(SolverError::Unresponsive(timeout)),
                Err(RecvTimeoutError::Disconnected) => return Err(SolverError::Exited),
            }
        }
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "(exit)");
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Default)]
struct Level {
    declared: BTreeSet<Var>,
    commands: Vec<String>,
}

/// An incremental solver session.
pub struct SolverSession {
    config: SolverConfig,
    logic: String,
    timeout: Duration,
    process: Option<Process>,
    levels: Vec<Level>,
    /// Number of `check-sat` commands issued.
    pub sat_calls: u64,
}

impl SolverSession {
    pub fn new(config: &SolverConfig, logic: &str, timeout: Duration) -> Result<Self, SolverError> {
        let mut s = SolverSession {
            config: config.clone(),
            logic: logic.to_string(),
            timeout,
            process: None,
            levels: vec![Level::default()],
            sat_calls: 0,
        };
        s.ensure_process()?;
        Ok(s)
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn is_declared(&self, v: &Var) -> bool {
        self.levels.iter().any(|l| l.declared.contains(v))
    }

    fn ensure_process(&mut self) -> Result<&mut Process, SolverError> {
        if self.process.is_none() {
            let mut p = Process::spawn(&self.config)?;
            let mut replay = vec![
                "(set-option :print-success true)".to_string(),
                "(set-option :produce-models true)".to_string(),
                format!("(set-logic {})", self.logic),
            ];
            for (i, level) in self.levels.iter().enumerate() {
                if i > 0 {
                    replay.push("(push 1)".into());
                }
                replay.extend(level.commands.iter().cloned());
            }
            for cmd in replay {
                send_acknowledged(&mut p, &cmd)?;
            }
            self.process = Some(p);
        }
        Ok(self.process.as_mut().expect("just spawned"))
    }

    fn command(&mut self, cmd: String) -> Result<(), SolverError> {
        let p = self.ensure_process()?;
        send_acknowledged(p, &cmd)
    }

    /// Declares `v` at the current level unless it is already visible.
    pub fn declare(&mut self, v: &Var) -> Result<(), SolverError> {
        if self.is_declared(v) {
            return Ok(());
        }
        let cmd = format!("(declare-const {} Int)", smtlib::symbol(v));
        self.command(cmd.clone())?;
        let top = self.levels.last_mut().expect("base level");
        top.declared.insert(v.clone());
        top.commands.push(cmd);
        Ok(())
    }

    /// Asserts `f`; every free variable must be declared.
    pub fn assert(&mut self, f: &Formula) -> Result<(), SolverError> {
        if let Some(v) = f.free_vars().into_iter().find(|v| !self.is_declared(v)) {
            return Err(SolverError::Undeclared(v));
        }
        let cmd = format!("(assert {})", smtlib::formula(f));
        self.command(cmd.clone())?;
        self.levels.last_mut().expect("base level").commands.push(cmd);
        Ok(())
    }

    pub fn push(&mut self) -> Result<(), SolverError> {
        self.command("(push 1)".into())?;
        self.levels.push(Level::default());
        Ok(())
    }

    pub fn pop(&mut self) -> Result<(), SolverError> {
        if self.levels.len() == 1 {
            return Err(SolverError::PopAtZero);
        }
        self.levels.pop();
        if self.process.is_some() {
            self.command("(pop 1)".into())?;
        }
        Ok(())
    }

    /// Checks satisfiability of the current assertions, returning a model for
    /// `wanted` on `sat`.
    pub fn check(&mut self, wanted: &BTreeSet<Var>) -> Result<SatResult, SolverError> {
        self.sat_calls += 1;
        let timeout = self.timeout;
        let p = self.ensure_process()?;
        writeln!(p.stdin, "(check-sat)")?;
        p.stdin.flush()?;
        let answer = match p.read_response(timeout) {
            Ok(a) => a,
            Err(SolverError::Unresponsive(_)) => {
                self.process.take().expect("live process").kill();
                return Ok(SatResult::Unknown("timeout".into()));
            }
            Err(e) => return Err(e),
        };
        match answer.as_str() {
            "sat" => Ok(SatResult::Sat(self.model(wanted)?)),
            "unsat" => Ok(SatResult::Unsat),
            "unknown" => Ok(SatResult::Unknown("solver returned unknown".into())),
            other if other.starts_with("(error") => Err(SolverError::Solver(other.to_string())),
            other => Err(SolverError::Protocol(other.to_string())),
        }
    }

    fn model(&mut self, wanted: &BTreeSet<Var>) -> Result<Assignment, SolverError> {
        let mut rho: Assignment = wanted.iter().map(|v| (v.clone(), 0)).collect();
        let asked: Vec<&Var> = wanted.iter().filter(|v| self.is_declared(v)).collect();
        if asked.is_empty() {
            return Ok(rho);
        }
        let names: Vec<String> = asked.iter().map(|v| smtlib::symbol(v)).collect();
        let p = self.ensure_process()?;
        writeln!(p.stdin, "(get-value ({}))", names.join(" "))?;
        p.stdin.flush()?;
        let text = p.read_response(COMMAND_TIMEOUT)?;
        if text.starts_with("(error") {
            return Err(SolverError::Solver(text));
        }
        let parsed = sexp::parse(&text).map_err(|_| SolverError::Protocol(text.clone()))?;
        let pairs = parsed.as_list().ok_or_else(|| SolverError::Protocol(text.clone()))?;
        for pair in pairs {
            match pair.as_list() {
                Some([name, value]) => {
                    let var = Var::new(name.as_atom().ok_or_else(|| SolverError::Protocol(text.clone()))?);
                    let value = value.as_int().ok_or_else(|| SolverError::Protocol(text.clone()))?;
                    if wanted.contains(&var) {
                        rho.insert(var, value);
                    }
                }
                _ => return Err(SolverError::Protocol(text.clone())),
            }
        }
        Ok(rho)
    }

    /// One-shot check of `f` in a pushed scope. Free variables of `f` are
    /// declared at the current level first so that they outlive the scope.
    pub fn check_sat(&mut self, f: &Formula, wanted: &BTreeSet<Var>) -> Result<SatResult, SolverError> {
        for v in f.free_vars() {
            self.declare(&v)?;
        }
        self.push()?;
        let result = self.assert(f).and_then(|_| self.check(wanted));
        let popped = self.pop();
        let result = result?;
        popped?;
        Ok(result)
    }
}

fn send_acknowledged(p: &mut Process, cmd: &str) -> Result<(), SolverError> {
    writeln!(p.stdin, "{cmd}")?;
    p.stdin.flush()?;
    let answer = p.read_response(COMMAND_TIMEOUT)?;
    match answer.as_str() {
        "success" => Ok(()),
        a if a.starts_with("(error") => Err(SolverError::Solver(a.to_string())),
        a => Err(SolverError::Protocol(a.to_string())),
    }
}

/// A standalone script checking `f`, as written by `--emit-smt`.
pub fn script(logic: &str, f: &Formula, wanted: &BTreeSet<Var>) -> String {
    let mut out = format!("(set-option :produce-models true)\n(set-logic {logic})\n");
    for v in f.free_vars() {
        out.push_str(&format!("(declare-const {} Int)\n", smtlib::symbol(&v)));
    }
    out.push_str(&format!("(assert {})\n(check-sat)\n", smtlib::formula(f)));
    let shown: Vec<String> = wanted.intersection(&f.free_vars()).map(smtlib::symbol).collect();
    if !shown.is_empty() {
        out.push_str(&format!("(get-value ({}))\n", shown.join(" ")));
    }
    out
}
