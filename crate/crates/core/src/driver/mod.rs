//! Top-level search: reduction of the quantifier prefix to one universal and
//! at most one existential program, the lazy and naive bug-finding loops,
//! reports, the benchmark harness and the command line.

pub mod bench;
pub mod cli;
pub mod report;

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use log::{debug, info};
use thiserror::Error;

use crate::concrete::{default_budget, replay, ConcreteTrace};
use crate::encode::{self, EncodeError, EncodedQuery};
use crate::frontend::{Instance, QuantifiedProgram};
use crate::graph::{async_product, GraphError, ObservationSet, ProgramGraph};
use crate::logic::{Assignment, Formula, Quantifier};
use crate::solver::{self, SatResult, SolverConfig, SolverError, SolverSession};
use crate::symexec::{concretize, observe_all, FreshSupply, ObservedTrace, Observer};

/// One side of a generalized specification: the product of a block of
/// equally quantified programs.
#[derive(Clone, Debug)]
pub struct Side {
    /// Trace variables folded into this side, in prefix order.
    pub traces: Vec<String>,
    pub graph: ProgramGraph,
    pub observed: ObservationSet,
}

/// A specification with one universal and at most one existential program.
#[derive(Clone, Debug)]
pub struct Generalized {
    pub universal: Side,
    pub existential: Option<Side>,
    pub body: Formula,
}

fn fold_block<'a>(block: impl Iterator<Item = &'a QuantifiedProgram>) -> Result<Option<Side>, GraphError> {
    let mut acc: Option<Side> = None;
    for q in block {
        acc = Some(match acc {
            None => Side { traces: vec![q.trace.clone()], graph: q.graph.clone(), observed: q.observed.clone() },
            Some(side) => {
                let (graph, observed) = async_product(&side.graph, &side.observed, &q.graph, &q.observed)?;
                let mut traces = side.traces;
                traces.push(q.trace.clone());
                Side { traces, graph, observed }
            }
        });
    }
    Ok(acc)
}

/// Folds each quantifier block into a single program with the asynchronous
/// product. Program variables are already prefixed by their trace variable,
/// so the body needs no renaming.
pub fn generalize(inst: &Instance) -> Result<Generalized, GraphError> {
    let universal = fold_block(inst.universals())?.ok_or(GraphError::EmptyObservation)?;
    let existential = fold_block(inst.existentials())?;
    Ok(Generalized { universal, existential, body: inst.body.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Lazy,
    Naive,
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub max_observations: usize,
    /// Per-trace transition budget; `None` uses `10 · k · |locations|`.
    pub step_budget: Option<usize>,
    pub solver: SolverConfig,
    pub query_timeout: Duration,
    pub feasibility_timeout: Duration,
    /// Directory receiving every final query as an SMT-LIB script.
    pub emit_smt: Option<PathBuf>,
    /// Restricts every fresh variable to `lo..=hi` in the final queries, for
    /// comparison with the finite-domain oracle.
    pub domain: Option<(i64, i64)>,
}

impl SearchOptions {
    pub fn new(solver: SolverConfig) -> Self {
        SearchOptions {
            max_observations: 10,
            step_budget: None,
            solver,
            query_timeout: Duration::from_secs(60),
            feasibility_timeout: Duration::from_secs(5),
            emit_smt: None,
            domain: None,
        }
    }

    fn budget(&self, g: &ProgramGraph, k: usize) -> usize {
        self.step_budget.unwrap_or_else(|| default_budget(g, k))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InconclusiveReason {
    Budget,
    SolverUnknown,
    NotEncodable,
}

impl InconclusiveReason {
    pub fn as_str(self) -> &'static str {
        match self {
            InconclusiveReason::Budget => "budget",
            InconclusiveReason::SolverUnknown => "solver-unknown",
            InconclusiveReason::NotEncodable => "not-encodable",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub k: usize,
    /// The universal symbolic trace, full and projected.
    pub trace: ObservedTrace,
    /// Model of the lazy query, completed with 0 on every fresh variable of
    /// the full trace.
    pub model: Assignment,
    pub full_trace: ConcreteTrace,
    pub observed_trace: ConcreteTrace,
    /// "No existential trace matches" part of the query.
    pub explanation: Formula,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    /// Violation at `k` observations. The naive algorithm gives no witness.
    BugFound { k: usize, counterexample: Option<Box<Counterexample>> },
    NoBugUpTo(usize),
    Inconclusive(InconclusiveReason),
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::NoBugUpTo(_) => 0,
            Verdict::BugFound { .. } => 1,
            Verdict::Inconclusive(_) => 2,
        }
    }

    pub fn bug_k(&self) -> Option<usize> {
        match self {
            Verdict::BugFound { k, .. } => Some(*k),
            _ => None,
        }
    }

    pub fn counterexample(&self) -> Option<&Counterexample> {
        match self {
            Verdict::BugFound { counterexample, .. } => counterexample.as_deref(),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Universal/existential trace pairs examined by final queries; a query
    /// without existential traces counts once.
    pub combinations: u64,
    /// Final queries sent to the solver.
    pub queries: u64,
    /// All `check-sat` calls, including feasibility checks.
    pub sat_calls: u64,
    pub universal_traces: u64,
    pub existential_traces: u64,
    pub wall_ms: u128,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub verdict: Verdict,
    pub stats: SearchStats,
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("cannot write query: {0}")]
    Emit(std::io::Error),
    #[error("internal error: counterexample failed replay ({0})")]
    Replay(String),
}

/// Runs the selected algorithm.
pub fn search(gen: &Generalized, algorithm: Algorithm, opts: &SearchOptions) -> Result<Outcome, DriverError> {
    match algorithm {
        Algorithm::Lazy => lazy_search(gen, opts),
        Algorithm::Naive => naive_search(gen, opts),
    }
}

struct Emitter<'a> {
    dir: Option<&'a PathBuf>,
    count: usize,
}

impl Emitter<'_> {
    fn emit(&mut self, k: usize, f: &Formula, wanted: &BTreeSet<crate::logic::Var>) -> Result<(), DriverError> {
        let Some(dir) = self.dir else { return Ok(()) };
        fs::create_dir_all(dir).map_err(DriverError::Emit)?;
        let path = dir.join(format!("k{k}_q{:05}.smt2", self.count));
        self.count += 1;
        fs::write(path, solver::script(solver::QUANTIFIED_LOGIC, f, wanted)).map_err(DriverError::Emit)
    }
}

/// Lazy search: per universal trace, ask whether no existential trace
/// matches it.
pub fn lazy_search(gen: &Generalized, opts: &SearchOptions) -> Result<Outcome, DriverError> {
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let supply = FreshSupply::new();
    let mut emitter = Emitter { dir: opts.emit_smt.as_ref(), count: 0 };
    let mut saw_unknown = false;
    let u = &gen.universal;

    let finish = |verdict, mut stats: SearchStats| {
        stats.wall_ms = start.elapsed().as_millis();
        Ok(Outcome { verdict, stats })
    };

    for k in 1..=opts.max_observations {
        let existentials = match &gen.existential {
            None => None,
            Some(e) => {
                let mut feas = SolverSession::new(&opts.solver, solver::QF_LOGIC, opts.feasibility_timeout)?;
                let set = observe_all(&e.graph, &e.observed, k, opts.budget(&e.graph, k), supply.clone(), &mut feas)?;
                stats.sat_calls += feas.sat_calls;
                stats.existential_traces += set.traces.len() as u64;
                if !set.complete {
                    info!("existential traces at k={k} exceed the step budget");
                    return finish(Verdict::Inconclusive(InconclusiveReason::Budget), stats);
                }
                Some(set.traces)
            }
        };
        debug!("k={k}: {} existential traces", existentials.as_ref().map_or(0, Vec::len));

        let mut feas = SolverSession::new(&opts.solver, solver::QF_LOGIC, opts.feasibility_timeout)?;
        let mut stream = Observer::new(&u.graph, &u.observed, k, opts.budget(&u.graph, k), supply.clone(), &mut feas);
        let mut found = None;
        for t1 in stream.by_ref() {
            stats.universal_traces += 1;
            let query = match opts.domain {
                None => encode::lazy_query(&t1, existentials.as_deref(), &gen.body, k),
                Some(d) => encode::lazy_query_in_domain(&t1, existentials.as_deref(), &gen.body, k, d),
            };
            let query = match query {
                Ok(q) => q,
                Err(e) => {
                    info!("cannot encode query: {e}");
                    return finish(Verdict::Inconclusive(InconclusiveReason::NotEncodable), stats);
                }
            };
            stats.queries += 1;
            stats.combinations += query.existential_traces.max(1) as u64;
            emitter.emit(k, &query.formula, &query.free_vars)?;
            let mut session = SolverSession::new(&opts.solver, solver::QUANTIFIED_LOGIC, opts.query_timeout)?;
            let result = session.check_sat(&query.formula, &query.free_vars)?;
            stats.sat_calls += session.sat_calls;
            match result {
                SatResult::Sat(model) => {
                    found = Some(build_counterexample(u, k, t1, model, query)?);
                    break;
                }
                SatResult::Unsat => {}
                SatResult::Unknown(reason) => {
                    info!("query at k={k} returned unknown ({reason}); skipping trace");
                    saw_unknown = true;
                }
            }
        }
        let error = stream.take_error();
        let complete = stream.complete();
        stats.sat_calls += stream.stats.sat_calls;
        if let Some(e) = error {
            return Err(e.into());
        }
        if let Some(cex) = found {
            return finish(Verdict::BugFound { k, counterexample: Some(Box::new(cex)) }, stats);
        }
        if !complete {
            info!("universal traces at k={k} exceed the step budget");
            return finish(Verdict::Inconclusive(InconclusiveReason::Budget), stats);
        }
    }
    let verdict = if saw_unknown {
        Verdict::Inconclusive(InconclusiveReason::SolverUnknown)
    } else {
        Verdict::NoBugUpTo(opts.max_observations)
    };
    finish(verdict, stats)
}

fn build_counterexample(
    side: &Side,
    k: usize,
    trace: ObservedTrace,
    mut model: Assignment,
    query: EncodedQuery,
) -> Result<Counterexample, DriverError> {
    // Fresh variables outside the query (overwritten before any observation
    // and absent from the path) are don't-cares.
    for s in &trace.full.states {
        for t in s.mem.values() {
            for v in t.free_vars() {
                if !model.contains(&v) {
                    model.insert(v, 0);
                }
            }
        }
    }
    let full_trace = concretize(&trace.full.states, &model).map_err(|e| DriverError::Replay(e.to_string()))?;
    let observed_trace = concretize(&trace.observed, &model).map_err(|e| DriverError::Replay(e.to_string()))?;
    replay(&side.graph, &side.observed, &full_trace, &observed_trace)
        .map_err(|e| DriverError::Replay(e.to_string()))?;
    Ok(Counterexample { k, trace, model, full_trace, observed_trace, explanation: query.explanation })
}

/// Naive search: check the negated full encoding for each bound.
pub fn naive_search(gen: &Generalized, opts: &SearchOptions) -> Result<Outcome, DriverError> {
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let supply = FreshSupply::new();
    let mut emitter = Emitter { dir: opts.emit_smt.as_ref(), count: 0 };
    let mut saw_unknown = false;
    let finish = |verdict, mut stats: SearchStats| {
        stats.wall_ms = start.elapsed().as_millis();
        Ok(Outcome { verdict, stats })
    };

    for k in 1..=opts.max_observations {
        let mut sides = vec![(Quantifier::Forall, &gen.universal)];
        if let Some(e) = &gen.existential {
            sides.push((Quantifier::Exists, e));
        }
        let mut sets = Vec::new();
        for (q, side) in &sides {
            let mut feas = SolverSession::new(&opts.solver, solver::QF_LOGIC, opts.feasibility_timeout)?;
            let set = observe_all(&side.graph, &side.observed, k, opts.budget(&side.graph, k), supply.clone(), &mut feas)?;
            stats.sat_calls += feas.sat_calls;
            if !set.complete {
                return finish(Verdict::Inconclusive(InconclusiveReason::Budget), stats);
            }
            let traces = match opts.domain {
                None => set.traces,
                Some((lo, hi)) => set.traces.iter().map(|t| encode::restrict_to_domain(t, lo, hi)).collect(),
            };
            sets.push((*q, traces));
        }
        stats.universal_traces += sets[0].1.len() as u64;
        stats.existential_traces += sets.get(1).map_or(0, |s| s.1.len()) as u64;
        stats.combinations += sets.iter().map(|s| s.1.len().max(1) as u64).product::<u64>();
        let prefix: Vec<(Quantifier, &[ObservedTrace])> = sets.iter().map(|(q, t)| (*q, t.as_slice())).collect();
        let encoding = match encode::encode(&prefix, &gen.body, k) {
            Ok(f) => f,
            Err(EncodeError::Unbound(_) | EncodeError::Length { .. }) => {
                return finish(Verdict::Inconclusive(InconclusiveReason::NotEncodable), stats)
            }
        };
        let negated = Formula::not(encoding);
        emitter.emit(k, &negated, &BTreeSet::new())?;
        stats.queries += 1;
        let mut session = SolverSession::new(&opts.solver, solver::QUANTIFIED_LOGIC, opts.query_timeout)?;
        let result = session.check_sat(&negated, &BTreeSet::new())?;
        stats.sat_calls += session.sat_calls;
        match result {
            SatResult::Sat(_) => return finish(Verdict::BugFound { k, counterexample: None }, stats),
            SatResult::Unsat => {}
            SatResult::Unknown(_) => saw_unknown = true,
        }
    }
    let verdict = if saw_unknown {
        Verdict::Inconclusive(InconclusiveReason::SolverUnknown)
    } else {
        Verdict::NoBugUpTo(opts.max_observations)
    };
    finish(verdict, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend;

    const GNI: &str = "
        prog g { loop { havoc pub; havoc sec; out := sec; observe o; } }
        forall a in g obs {o} . forall b in g obs {o} . exists c in g obs {o} .
            always (pub@a == pub@c && out@a == out@c && sec@b == sec@c)
    ";

    #[test]
    fn universal_block_becomes_one_product() {
        let gen = generalize(&frontend::load(GNI).unwrap()).unwrap();
        assert_eq!(gen.universal.traces, ["a", "b"]);
        assert_eq!(gen.existential.as_ref().unwrap().traces, ["c"]);
        let vars: Vec<&str> = gen.universal.graph.variables().iter().map(|v| v.name()).collect();
        assert_eq!(vars, ["a.out", "a.pub", "a.sec", "b.out", "b.pub", "b.sec"]);
        assert!(gen.universal.graph.validate().is_ok());
    }

    #[test]
    fn forall_only_has_no_existential_side() {
        let src = "prog p { x := 0; observe o; } forall t in p obs {o} . always (x@t == 0)";
        let gen = generalize(&frontend::load(src).unwrap()).unwrap();
        assert!(gen.existential.is_none());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Verdict::NoBugUpTo(3).exit_code(), 0);
        assert_eq!(Verdict::BugFound { k: 1, counterexample: None }.exit_code(), 1);
        assert_eq!(Verdict::Inconclusive(InconclusiveReason::Budget).exit_code(), 2);
        assert_eq!(InconclusiveReason::SolverUnknown.as_str(), "solver-unknown");
    }

    #[test]
    fn emitter_numbers_queries_across_bounds() {
        let dir = std::env::temp_dir().join(format!("hyperfind-emit-{}", std::process::id()));
        let mut e = Emitter { dir: Some(&dir), count: 0 };
        e.emit(1, &Formula::tt(), &BTreeSet::new()).unwrap();
        e.emit(2, &Formula::ff(), &BTreeSet::new()).unwrap();
        let mut names: Vec<String> =
            fs::read_dir(&dir).unwrap().map(|d| d.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        assert_eq!(names, ["k1_q00000.smt2", "k2_q00001.smt2"]);
        fs::remove_dir_all(&dir).unwrap();
    }
}
