//! Concrete semantics over a finite havoc domain: successor computation,
//! enumeration of observed traces, a brute-force checker for bounded
//! specifications, and replay of claimed traces.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::frontend::Instance;
use crate::graph::{Effect, LocId, ObservationSet, ProgramGraph};
use crate::logic::{Assignment, Formula, Quantifier, Var};

/// Memories are total maps over the owning graph's variables.
pub type Memory = Assignment;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConcreteState {
    pub loc: LocId,
    pub mem: Memory,
}

impl fmt::Display for ConcreteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<l{}", self.loc)?;
        for (k, v) in self.mem.iter() {
            write!(f, ", {k}={v}")?;
        }
        write!(f, ">")
    }
}

pub type ConcreteTrace = Vec<ConcreteState>;

/// The all-zero memory over `g`'s variables.
pub fn initial_memory(g: &ProgramGraph) -> Memory {
    g.variables().iter().map(|v| (v.clone(), 0)).collect()
}

pub fn initial_state(g: &ProgramGraph) -> ConcreteState {
    ConcreteState { loc: g.initial(), mem: initial_memory(g) }
}

/// Successors of `s`, in edge declaration order, havoc values ascending.
/// Edges whose guard or assignment cannot be evaluated (overflow) are
/// treated as disabled.
pub fn step(g: &ProgramGraph, s: &ConcreteState, domain: &[i64]) -> Vec<ConcreteState> {
    let mut out = Vec::new();
    for e in g.outgoing(s.loc) {
        if e.guard.eval(&s.mem) != Ok(true) {
            continue;
        }
        match &e.effect {
            Effect::Skip => out.push(ConcreteState { loc: e.dst, mem: s.mem.clone() }),
            Effect::Assign(x, t) => {
                if let Ok(v) = t.eval(&s.mem) {
                    let mut mem = s.mem.clone();
                    mem.insert(x.clone(), v);
                    out.push(ConcreteState { loc: e.dst, mem });
                }
            }
            Effect::Havoc(x) => {
                for &v in domain {
                    let mut mem = s.mem.clone();
                    mem.insert(x.clone(), v);
                    out.push(ConcreteState { loc: e.dst, mem });
                }
            }
        }
    }
    out
}

/// Default per-trace transition budget for `k` observations.
pub fn default_budget(g: &ProgramGraph, k: usize) -> usize {
    10 * k.max(1) * g.num_locations()
}

/// Result of [`enumerate_observed`]: each observed trace with one full trace
/// that produces it.
#[derive(Clone, Debug, Default)]
pub struct Enumeration {
    pub traces: BTreeMap<ConcreteTrace, ConcreteTrace>,
    /// False when some run reached the budget before its `k`-th observation.
    pub complete: bool,
}

impl Enumeration {
    pub fn observed(&self) -> impl Iterator<Item = &ConcreteTrace> {
        self.traces.keys()
    }
}

/// All observed traces with exactly `k` observations reachable within
/// `budget` transitions. Runs stop at their `k`-th observation.
pub fn enumerate_observed(
    g: &ProgramGraph,
    obs: &ObservationSet,
    k: usize,
    domain: &[i64],
    budget: usize,
) -> Enumeration {
    let mut result = Enumeration { traces: BTreeMap::new(), complete: true };
    if k == 0 {
        return result;
    }
    let s0 = initial_state(g);
    let mut projection = Vec::new();
    if obs.contains(s0.loc) {
        projection.push(s0.clone());
    }
    let mut seen: BTreeSet<(ConcreteTrace, ConcreteState)> = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert((projection.clone(), s0.clone()));
    queue.push_back((vec![s0], projection));
    while let Some((full, projection)) = queue.pop_front() {
        if projection.len() == k {
            result.traces.entry(projection).or_insert(full);
            continue;
        }
        let last = full.last().expect("traces are nonempty");
        let succs = step(g, last, domain);
        if full.len() > budget {
            if !succs.is_empty() {
                result.complete = false;
            }
            continue;
        }
        for t in succs {
            let mut proj = projection.clone();
            if obs.contains(t.loc) {
                proj.push(t.clone());
            }
            if !seen.insert((proj.clone(), t.clone())) {
                continue;
            }
            let mut next = full.clone();
            next.push(t);
            queue.push_back((next, proj));
        }
    }
    result
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleVerdict {
    Holds,
    /// Earliest bound `k` with a violation, and the universal traces (one per
    /// universal quantifier, observed projections) that have no witness.
    Violated { k: usize, witness: Vec<ConcreteTrace> },
    Inconclusive,
}

/// Evaluates the specification under the upper-bounded semantics, i.e. for
/// every bound `1..=k`, by direct quantifier expansion.
pub fn oracle_check(
    inst: &Instance,
    k: usize,
    domain: &[i64],
    budget: Option<usize>,
) -> OracleVerdict {
    for kk in 1..=k {
        let mut sets = Vec::new();
        for q in &inst.quantifiers {
            let b = budget.unwrap_or_else(|| default_budget(&q.graph, kk));
            let en = enumerate_observed(&q.graph, &q.observed, kk, domain, b);
            if !en.complete {
                return OracleVerdict::Inconclusive;
            }
            sets.push(en.traces.into_keys().collect::<Vec<_>>());
        }
        if let Some(witness) = bounded_violation(inst, kk, &sets) {
            return OracleVerdict::Violated { k: kk, witness };
        }
    }
    OracleVerdict::Holds
}

/// Checks the bounded semantics at exactly `k` over explicit trace sets, one
/// per quantifier. Returns the first universal tuple without a witness.
pub fn bounded_violation(
    inst: &Instance,
    k: usize,
    sets: &[Vec<ConcreteTrace>],
) -> Option<Vec<ConcreteTrace>> {
    let n_forall = inst.quantifiers.iter().filter(|q| q.kind == Quantifier::Forall).count();
    let mut witness = None;
    let mut tuple = Vec::new();
    forall_tuples(&sets[..n_forall], &mut tuple, &mut |univ| {
        let mut bound: Vec<&ConcreteTrace> = univ.to_vec();
        if !exists_tuple(&inst.body, k, &sets[n_forall..], &mut bound) {
            witness = Some(univ.iter().map(|t| (*t).clone()).collect());
            return false;
        }
        true
    });
    witness
}

/// Calls `f` on every tuple in order until it returns false.
fn forall_tuples<'a>(
    sets: &'a [Vec<ConcreteTrace>],
    tuple: &mut Vec<&'a ConcreteTrace>,
    f: &mut dyn FnMut(&[&'a ConcreteTrace]) -> bool,
) -> bool {
    match sets.split_first() {
        None => f(tuple),
        Some((first, rest)) => {
            for t in first {
                tuple.push(t);
                let go_on = forall_tuples(rest, tuple, f);
                tuple.pop();
                if !go_on {
                    return false;
                }
            }
            true
        }
    }
}

fn exists_tuple<'a>(
    body: &Formula,
    k: usize,
    sets: &'a [Vec<ConcreteTrace>],
    bound: &mut Vec<&'a ConcreteTrace>,
) -> bool {
    match sets.split_first() {
        None => invariant_holds(body, k, bound),
        Some((first, rest)) => first.iter().any(|t| {
            bound.push(t);
            let ok = exists_tuple(body, k, rest, bound);
            bound.pop();
            ok
        }),
    }
}

/// `body` holds at every index `0..k` of the point-wise union of `traces`.
pub fn invariant_holds(body: &Formula, k: usize, traces: &[&ConcreteTrace]) -> bool {
    (0..k).all(|i| {
        let mut rho = Assignment::new();
        for t in traces {
            rho.extend(&t[i].mem);
        }
        body.eval(&rho) == Ok(true)
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplayError {
    Empty,
    InitialState,
    /// No edge explains the transition from state `index` to `index + 1`.
    Step { index: usize },
    Projection,
}

impl fmt::Display for ReplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayError::Empty => write!(f, "empty trace"),
            ReplayError::InitialState => write!(f, "trace does not start in the initial state"),
            ReplayError::Step { index } => write!(f, "no edge justifies step {index}"),
            ReplayError::Projection => write!(f, "observed projection does not match"),
        }
    }
}

/// Checks that `full` is a run of `g` whose projection onto `obs` is
/// `observed`. Havoc steps may pick any value.
pub fn replay(
    g: &ProgramGraph,
    obs: &ObservationSet,
    full: &[ConcreteState],
    observed: &[ConcreteState],
) -> Result<(), ReplayError> {
    let first = full.first().ok_or(ReplayError::Empty)?;
    if *first != initial_state(g) {
        return Err(ReplayError::InitialState);
    }
    for (i, pair) in full.windows(2).enumerate() {
        if !justified(g, &pair[0], &pair[1]) {
            return Err(ReplayError::Step { index: i });
        }
    }
    let projection: Vec<&ConcreteState> = full.iter().filter(|s| obs.contains(s.loc)).collect();
    if projection.len() != observed.len() || projection.iter().zip(observed).any(|(a, b)| *a != b) {
        return Err(ReplayError::Projection);
    }
    Ok(())
}

fn justified(g: &ProgramGraph, s: &ConcreteState, t: &ConcreteState) -> bool {
    let same_domain = |m: &Memory| m.len() == s.mem.len() && m.iter().all(|(k, _)| s.mem.contains(k));
    if !same_domain(&t.mem) {
        return false;
    }
    let agrees_except = |x: Option<&Var>| {
        s.mem.iter().all(|(k, v)| Some(k) == x || t.mem.get(k) == Some(*v))
    };
    g.outgoing(s.loc).any(|e| {
        e.dst == t.loc
            && e.guard.eval(&s.mem) == Ok(true)
            && match &e.effect {
                Effect::Skip => agrees_except(None),
                Effect::Havoc(x) => agrees_except(Some(x)),
                Effect::Assign(x, rhs) => {
                    rhs.eval(&s.mem).ok() == t.mem.get(x) && agrees_except(Some(x))
                }
            }
    })
}
