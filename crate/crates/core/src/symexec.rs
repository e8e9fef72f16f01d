//! Symbolic execution of program graphs: extension of symbolic traces by one
//! edge, breadth-first enumeration of observed symbolic traces, and
//! concretization under a model.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::concrete::{ConcreteState, ConcreteTrace};
use crate::graph::{Effect, LocId, ObservationSet, ProgramGraph};
use crate::logic::{Assignment, EvalError, Formula, Term, Var};
use crate::solver::{SatResult, SolverError, SolverSession};

/// Prefix of fresh symbolic variables. `$` cannot start a source identifier,
/// so fresh names never clash with program variables.
pub const FRESH_PREFIX: &str = "$v";

/// Shared supply of fresh variables `$v0, $v1, ...`. Clones share the counter.
#[derive(Clone, Debug, Default)]
pub struct FreshSupply(Arc<AtomicU64>);

impl FreshSupply {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&self) -> Var {
        let n = self.0.fetch_add(1, Ordering::Relaxed);
        Var::new(format!("{FRESH_PREFIX}{n}"))
    }
}

pub type SymbolicMemory = BTreeMap<Var, Term>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicState {
    pub loc: LocId,
    pub path: Formula,
    pub mem: SymbolicMemory,
}

impl fmt::Display for SymbolicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<l{}, {}", self.loc, self.path)?;
        for (k, v) in &self.mem {
            write!(f, ", {k}={v}")?;
        }
        write!(f, ">")
    }
}

/// A nonempty sequence of symbolic states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicTrace {
    pub states: Vec<SymbolicState>,
}

impl SymbolicTrace {
    pub fn initial(g: &ProgramGraph) -> Self {
        let mem = g.variables().iter().map(|v| (v.clone(), Term::Int(0))).collect();
        SymbolicTrace { states: vec![SymbolicState { loc: g.initial(), path: Formula::tt(), mem }] }
    }

    pub fn last(&self) -> &SymbolicState {
        self.states.last().expect("symbolic traces are nonempty")
    }

    pub fn path(&self) -> &Formula {
        &self.last().path
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn project(&self, obs: &ObservationSet) -> Vec<SymbolicState> {
        self.states.iter().filter(|s| obs.contains(s.loc)).cloned().collect()
    }
}

/// An observed symbolic trace together with the full trace it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedTrace {
    pub full: SymbolicTrace,
    pub observed: Vec<SymbolicState>,
}

impl ObservedTrace {
    pub fn path(&self) -> &Formula {
        self.full.path()
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// Free variables of the path formula and of the observed memories.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = self.path().free_vars();
        for s in &self.observed {
            for t in s.mem.values() {
                t.collect_vars(&mut out);
            }
        }
        out
    }
}

/// Satisfiability oracle used to prune infeasible extensions.
pub trait Feasibility {
    fn check(&mut self, path: &Formula) -> Result<SatResult, SolverError>;
}

impl Feasibility for SolverSession {
    fn check(&mut self, path: &Formula) -> Result<SatResult, SolverError> {
        self.check_sat(path, &BTreeSet::new())
    }
}

/// Treats every extension as feasible. Only sound for callers that filter
/// paths themselves.
pub struct AssumeFeasible;

impl Feasibility for AssumeFeasible {
    fn check(&mut self, _: &Formula) -> Result<SatResult, SolverError> {
        Ok(SatResult::Sat(Assignment::new()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExplorationStats {
    pub traces_yielded: u64,
    pub sat_calls: u64,
    pub max_depth: usize,
}

/// Extends `trace` by every feasible outgoing edge, in declaration order.
/// Unknown feasibility counts as feasible.
pub fn extend(
    g: &ProgramGraph,
    trace: &SymbolicTrace,
    supply: &FreshSupply,
    feasibility: &mut dyn Feasibility,
    stats: &mut ExplorationStats,
) -> Result<Vec<SymbolicTrace>, SolverError> {
    let last = trace.last();
    let mut out = Vec::new();
    for e in g.outgoing(last.loc) {
        let guard = e.guard.substitute(&last.mem);
        if guard.is_false() {
            continue;
        }
        let path = if guard.is_true() {
            last.path.clone()
        } else {
            let path = Formula::and([last.path.clone(), guard]);
            if path.is_false() {
                continue;
            }
            stats.sat_calls += 1;
            if feasibility.check(&path)? == SatResult::Unsat {
                continue;
            }
            path
        };
        let mut mem = last.mem.clone();
        match &e.effect {
            Effect::Assign(x, t) => {
                mem.insert(x.clone(), t.substitute(&last.mem));
            }
            Effect::Havoc(x) => {
                mem.insert(x.clone(), Term::Var(supply.fresh()));
            }
            Effect::Skip => {}
        }
        let mut states = trace.states.clone();
        states.push(SymbolicState { loc: e.dst, path, mem });
        out.push(SymbolicTrace { states });
    }
    Ok(out)
}

/// Breadth-first stream of observed symbolic traces with exactly `n`
/// observations. Each run is cut at its `n`-th observation and may take at
/// most `budget` transitions.
pub struct Observer<'a> {
    graph: &'a ProgramGraph,
    obs: &'a ObservationSet,
    n: usize,
    budget: usize,
    supply: FreshSupply,
    feasibility: &'a mut dyn Feasibility,
    queue: VecDeque<SymbolicTrace>,
    complete: bool,
    error: Option<SolverError>,
    pub stats: ExplorationStats,
}

impl<'a> Observer<'a> {
    pub fn new(
        graph: &'a ProgramGraph,
        obs: &'a ObservationSet,
        n: usize,
        budget: usize,
        supply: FreshSupply,
        feasibility: &'a mut dyn Feasibility,
    ) -> Self {
        let mut queue = VecDeque::new();
        if n > 0 {
            queue.push_back(SymbolicTrace::initial(graph));
        }
        Observer {
            graph,
            obs,
            n,
            budget,
            supply,
            feasibility,
            queue,
            complete: true,
            error: None,
            stats: ExplorationStats::default(),
        }
    }

    /// True once the stream is exhausted without hitting the budget. Only
    /// meaningful after the iterator returned `None`.
    pub fn complete(&self) -> bool {
        self.complete && self.error.is_none()
    }

    /// Solver failure that ended the stream, if any.
    pub fn take_error(&mut self) -> Option<SolverError> {
        self.error.take()
    }

    fn observations(&self, t: &SymbolicTrace) -> usize {
        t.states.iter().filter(|s| self.obs.contains(s.loc)).count()
    }

    fn advance(&mut self) -> Result<Option<ObservedTrace>, SolverError> {
        while let Some(trace) = self.queue.pop_front() {
            let depth = trace.len() - 1;
            self.stats.max_depth = self.stats.max_depth.max(depth);
            if self.observations(&trace) == self.n {
                self.stats.traces_yielded += 1;
                let observed = trace.project(self.obs);
                return Ok(Some(ObservedTrace { full: trace, observed }));
            }
            let succs = extend(self.graph, &trace, &self.supply, self.feasibility, &mut self.stats)?;
            if depth >= self.budget {
                if !succs.is_empty() {
                    self.complete = false;
                }
                continue;
            }
            self.queue.extend(succs);
        }
        Ok(None)
    }
}

impl Iterator for Observer<'_> {
    type Item = ObservedTrace;

    fn next(&mut self) -> Option<ObservedTrace> {
        if self.error.is_some() {
            return None;
        }
        match self.advance() {
            Ok(t) => t,
            Err(e) => {
                self.complete = false;
                self.error = Some(e);
                None
            }
        }
    }
}

/// Materialized result of an exploration.
#[derive(Clone, Debug)]
pub struct TraceSet {
    pub traces: Vec<ObservedTrace>,
    pub complete: bool,
    pub stats: ExplorationStats,
}

/// Runs an [`Observer`] to exhaustion.
pub fn observe_all(
    graph: &ProgramGraph,
    obs: &ObservationSet,
    n: usize,
    budget: usize,
    supply: FreshSupply,
    feasibility: &mut dyn Feasibility,
) -> Result<TraceSet, SolverError> {
    let mut stream = Observer::new(graph, obs, n, budget, supply, feasibility);
    let traces: Vec<ObservedTrace> = stream.by_ref().collect();
    if let Some(e) = stream.take_error() {
        return Err(e);
    }
    Ok(TraceSet { traces, complete: stream.complete(), stats: stream.stats })
}

fn concretize_state(s: &SymbolicState, rho: &Assignment) -> Result<ConcreteState, EvalError> {
    let mem = s
        .mem
        .iter()
        .map(|(k, t)| Ok((k.clone(), t.eval(rho)?)))
        .collect::<Result<Assignment, EvalError>>()?;
    Ok(ConcreteState { loc: s.loc, mem })
}

/// Point-wise evaluation of a sequence of symbolic states under `rho`.
pub fn concretize(states: &[SymbolicState], rho: &Assignment) -> Result<ConcreteTrace, EvalError> {
    states.iter().map(|s| concretize_state(s, rho)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load;
    use crate::graph::Edge;
    use crate::logic::CmpOp;

    fn fig2() -> ProgramGraph {
        let x = Var::new("x");
        let out = Var::new("output");
        let xv = Term::Var(x.clone());
        ProgramGraph::from_edges(
            2,
            vec![
                Edge { src: LocId(0), dst: LocId(1), guard: Formula::tt(), effect: Effect::Havoc(x.clone()) },
                Edge {
                    src: LocId(1),
                    dst: LocId(0),
                    guard: Formula::cmp(CmpOp::Gt, xv.clone(), Term::Int(0)),
                    effect: Effect::Assign(out.clone(), Term::Int(1)),
                },
                Edge {
                    src: LocId(1),
                    dst: LocId(0),
                    guard: Formula::cmp(CmpOp::Le, xv, Term::Int(0)),
                    effect: Effect::Assign(out.clone(), Term::Int(0)),
                },
            ],
            LocId(0),
            [x, out],
        )
    }

    #[test]
    fn fresh_names_are_distinct_and_shared_across_clones() {
        let s = FreshSupply::new();
        let t = s.clone();
        assert_eq!(s.fresh(), Var::new("$v0"));
        assert_eq!(t.fresh(), Var::new("$v1"));
        assert_eq!(s.fresh(), Var::new("$v2"));
    }

    #[test]
    fn extend_fig2() {
        let g = fig2();
        let supply = FreshSupply::new();
        let mut stats = ExplorationStats::default();
        let t0 = SymbolicTrace::initial(&g);
        let one = extend(&g, &t0, &supply, &mut AssumeFeasible, &mut stats).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].path().is_true());
        assert_eq!(one[0].last().mem[&Var::new("x")], Term::var("$v0"));
        let two = extend(&g, &one[0], &supply, &mut AssumeFeasible, &mut stats).unwrap();
        let paths: Vec<String> = two.iter().map(|t| t.path().to_string()).collect();
        assert_eq!(paths, vec!["$v0 > 0", "$v0 <= 0"]);
        assert_eq!(two[0].last().mem[&Var::new("output")], Term::Int(1));
    }

    #[test]
    fn constant_false_guards_are_pruned_without_solver() {
        let src = "prog g { x := 0; if (x < 0) { skip; } else { skip; } observe o; }
                   forall p in g obs {o} . always (true)";
        let inst = load(src).unwrap();
        let q = &inst.quantifiers[0];
        let mut stats = ExplorationStats::default();
        let t = extend(&q.graph, &SymbolicTrace::initial(&q.graph), &FreshSupply::new(), &mut AssumeFeasible, &mut stats)
            .unwrap();
        let next = extend(&q.graph, &t[0], &FreshSupply::new(), &mut AssumeFeasible, &mut stats).unwrap();
        assert_eq!(next.len(), 1);
        assert_eq!(stats.sat_calls, 0);
    }

    #[test]
    fn two_location_graph_observations() {
        let src = "prog g { x := 0; observe o; } forall p in g obs {o} . always (x@p > 0)";
        let inst = load(src).unwrap();
        let q = &inst.quantifiers[0];
        let one = observe_all(&q.graph, &q.observed, 1, 100, FreshSupply::new(), &mut AssumeFeasible).unwrap();
        assert_eq!(one.traces.len(), 1);
        assert!(one.complete);
        let two = observe_all(&q.graph, &q.observed, 2, 100, FreshSupply::new(), &mut AssumeFeasible).unwrap();
        assert!(two.traces.is_empty());
        assert!(two.complete);
        assert_eq!(two.stats.traces_yielded, 0);
    }

    #[test]
    fn concretize_fig2_trace() {
        let g = fig2();
        let supply = FreshSupply::new();
        let mut stats = ExplorationStats::default();
        let t0 = SymbolicTrace::initial(&g);
        assert_eq!(
            concretize(&t0.states, &Assignment::new()).unwrap(),
            vec![crate::concrete::initial_state(&g)]
        );
        let t1 = extend(&g, &t0, &supply, &mut AssumeFeasible, &mut stats).unwrap().remove(0);
        let t2 = extend(&g, &t1, &supply, &mut AssumeFeasible, &mut stats).unwrap().remove(0);
        let c = concretize(&t2.states, &Assignment::from([("$v0", 1)])).unwrap();
        let last = c.last().unwrap();
        assert_eq!(last.mem.get(&Var::new("x")), Some(1));
        assert_eq!(last.mem.get(&Var::new("output")), Some(1));
        assert!(concretize(&t2.states, &Assignment::new()).is_err());
    }

    #[test]
    fn budget_marks_stream_incomplete() {
        let src = "prog g { loop { x := x + 1; } } forall p in g obs {o} . always (true)";
        let src = src.replace("x := x + 1;", "x := x + 1; if (x < 0) { observe o; }");
        let inst = load(&src).unwrap();
        let q = &inst.quantifiers[0];
        let set = observe_all(&q.graph, &q.observed, 1, 15, FreshSupply::new(), &mut AssumeFeasible).unwrap();
        assert!(!set.complete);
    }
}
