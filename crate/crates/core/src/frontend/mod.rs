//! Surface language: programs plus a trace-quantified invariant.
//!
//! See the README for the grammar. [`load`] parses a source text and lowers
//! every quantified program to a prefixed program graph.

mod lower;
mod parse;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::graph::{ObservationSet, ProgramGraph};
use crate::logic::{Formula, Quantifier, Term, Var};

pub use lower::{lower, Lowered};
pub use parse::parse_source;

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Assign(Var, Term),
    Havoc(Var),
    Assume(Formula),
    If(Formula, Vec<Stmt>, Vec<Stmt>),
    While(Formula, Vec<Stmt>),
    Loop(Vec<Stmt>),
    Either(Vec<Stmt>, Vec<Stmt>),
    Observe(String),
    Skip,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProgramAst {
    pub name: String,
    pub body: Vec<Stmt>,
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantifierAst {
    pub kind: Quantifier,
    pub trace: String,
    pub program: String,
    pub labels: Vec<String>,
    pub line: usize,
    pub col: usize,
}

/// Parsed specification. Body variables are named `trace.var`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spec {
    pub quantifiers: Vec<QuantifierAst>,
    pub body: Formula,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceFile {
    pub programs: Vec<ProgramAst>,
    pub spec: Spec,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: nonlinear multiplication (one operand must be an integer literal)")]
    Nonlinear { line: usize, col: usize },
    #[error("no specification")]
    NoSpecification,
    #[error("{line}:{col}: unknown program `{name}`")]
    UnknownProgram { name: String, line: usize, col: usize },
    #[error("{line}:{col}: duplicate program `{name}`")]
    DuplicateProgram { name: String, line: usize, col: usize },
    #[error("{line}:{col}: duplicate trace variable `{name}`")]
    DuplicateTrace { name: String, line: usize, col: usize },
    #[error("unsupported quantifier prefix `{0}` (expected forall+ exists*)")]
    UnsupportedPrefix(String),
    #[error("{line}:{col}: program `{program}` has no observation label `{label}`")]
    UnknownLabel { program: String, label: String, line: usize, col: usize },
    #[error("{line}:{col}: empty observation set")]
    EmptyObservation { line: usize, col: usize },
    #[error("specification refers to unbound trace `{0}`")]
    UnboundTrace(String),
    #[error("program `{program}` has no variable `{var}`")]
    UnknownVariable { program: String, var: String },
}

/// One quantifier of an elaborated specification.
#[derive(Clone, Debug)]
pub struct QuantifiedProgram {
    pub kind: Quantifier,
    pub trace: String,
    pub program: String,
    /// Lowered graph with variables renamed to `trace.x`.
    pub graph: ProgramGraph,
    pub observed: ObservationSet,
}

/// A specification whose programs are lowered to graphs.
#[derive(Clone, Debug)]
pub struct Instance {
    pub quantifiers: Vec<QuantifiedProgram>,
    pub body: Formula,
}

impl Instance {
    pub fn universals(&self) -> impl Iterator<Item = &QuantifiedProgram> {
        self.quantifiers.iter().filter(|q| q.kind == Quantifier::Forall)
    }

    pub fn existentials(&self) -> impl Iterator<Item = &QuantifiedProgram> {
        self.quantifiers.iter().filter(|q| q.kind == Quantifier::Exists)
    }
}

/// Parses and elaborates a source text.
pub fn load(src: &str) -> Result<Instance, FrontendError> {
    elaborate(&parse_source(src)?)
}

pub fn elaborate(file: &SourceFile) -> Result<Instance, FrontendError> {
    let mut programs: BTreeMap<&str, (&ProgramAst, Lowered)> = BTreeMap::new();
    for p in &file.programs {
        if programs.contains_key(p.name.as_str()) {
            return Err(FrontendError::DuplicateProgram {
                name: p.name.clone(),
                line: p.line,
                col: p.col,
            });
        }
        programs.insert(&p.name, (p, lower(p)));
    }

    let spec = &file.spec;
    check_prefix(&spec.quantifiers)?;

    let mut traces = BTreeSet::new();
    let mut quantifiers = Vec::new();
    for q in &spec.quantifiers {
        if !traces.insert(q.trace.as_str()) {
            return Err(FrontendError::DuplicateTrace {
                name: q.trace.clone(),
                line: q.line,
                col: q.col,
            });
        }
        let (_, lowered) = programs.get(q.program.as_str()).ok_or_else(|| {
            FrontendError::UnknownProgram { name: q.program.clone(), line: q.line, col: q.col }
        })?;
        if q.labels.is_empty() {
            return Err(FrontendError::EmptyObservation { line: q.line, col: q.col });
        }
        let mut observed = Vec::new();
        for label in &q.labels {
            let locs = lowered.labels.get(label).ok_or_else(|| FrontendError::UnknownLabel {
                program: q.program.clone(),
                label: label.clone(),
                line: q.line,
                col: q.col,
            })?;
            observed.extend(locs.iter().copied());
        }
        quantifiers.push(QuantifiedProgram {
            kind: q.kind,
            trace: q.trace.clone(),
            program: q.program.clone(),
            graph: lowered.graph.with_prefix(&q.trace),
            observed: ObservationSet::new(observed),
        });
    }

    for v in spec.body.free_vars() {
        let (trace, name) = v.name().split_once('.').expect("body variables are trace-indexed");
        let q = quantifiers
            .iter()
            .find(|q| q.trace == trace)
            .ok_or_else(|| FrontendError::UnboundTrace(trace.to_string()))?;
        if !q.graph.variables().contains(&v) {
            return Err(FrontendError::UnknownVariable {
                program: q.program.clone(),
                var: name.to_string(),
            });
        }
    }

    Ok(Instance { quantifiers, body: spec.body.clone() })
}

fn check_prefix(qs: &[QuantifierAst]) -> Result<(), FrontendError> {
    let first_exists = qs.iter().position(|q| q.kind == Quantifier::Exists).unwrap_or(qs.len());
    let ok = first_exists >= 1 && qs[first_exists..].iter().all(|q| q.kind == Quantifier::Exists);
    if ok {
        return Ok(());
    }
    let prefix: Vec<&str> = qs
        .iter()
        .map(|q| match q.kind {
            Quantifier::Forall => "forall",
            Quantifier::Exists => "exists",
        })
        .collect();
    Err(FrontendError::UnsupportedPrefix(prefix.join(" ")))
}
