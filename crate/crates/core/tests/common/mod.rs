#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use hyperfind::concrete::{enumerate_observed, oracle_check, ConcreteTrace, OracleVerdict};
use hyperfind::driver::{generalize, search, Algorithm, Outcome, SearchOptions, Verdict};
use hyperfind::frontend::{self, Instance, QuantifiedProgram};
use hyperfind::graph::{async_product, Edge, Effect, LocId, ObservationSet, ProgramGraph};
use hyperfind::logic::{Assignment, CmpOp, Formula, Quantifier, Substitution, Term, Var};
use hyperfind::solver::{self, SolverConfig, SolverSession};
use hyperfind::symexec::{concretize, observe_all, FreshSupply, ObservedTrace};

pub const DOMAIN: [i64; 2] = [0, 1];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> Instance {
    let src = std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    frontend::load(&src).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn solver() -> SolverConfig {
    SolverConfig::detect().expect("an SMT solver (yices-smt2, z3 or cvc5) must be on PATH")
}

pub fn options(n: usize) -> SearchOptions {
    let mut opts = SearchOptions::new(solver());
    opts.max_observations = n;
    opts
}

pub fn run(name: &str, n: usize, algorithm: Algorithm) -> Outcome {
    let inst = fixture(name);
    let gen = generalize(&inst).unwrap();
    search(&gen, algorithm, &options(n)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn oracle(name: &str, n: usize) -> OracleVerdict {
    oracle_check(&fixture(name), n, &DOMAIN, None)
}

/// Pairs of (countA, countB) along an observed trace.
pub fn tallies(t: &ConcreteTrace, trace: &str) -> Vec<(i64, i64)> {
    t.iter()
        .map(|s| {
            let get = |x: &str| s.mem.get(&Var::new(format!("{trace}.{x}"))).unwrap();
            (get("countA"), get("countB"))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random generation

fn random_term(rng: &mut ChaCha8Rng, vars: &[Var], depth: u32) -> Term {
    if depth == 0 || rng.gen_bool(0.4) {
        return if rng.gen_bool(0.5) {
            Term::Var(vars.choose(rng).unwrap().clone())
        } else {
            Term::Int(rng.gen_range(-3..=3))
        };
    }
    let a = random_term(rng, vars, depth - 1);
    match rng.gen_range(0..6) {
        0 => Term::Add(Box::new(a), Box::new(random_term(rng, vars, depth - 1))),
        1 => Term::Sub(Box::new(a), Box::new(random_term(rng, vars, depth - 1))),
        2 => Term::Neg(Box::new(a)),
        3 => Term::Mul(rng.gen_range(-3..=3), Box::new(a)),
        4 => Term::Div(Box::new(a), *[-2i64, 2, 3].choose(rng).unwrap()),
        _ => Term::Mod(Box::new(a), *[-2i64, 2, 3].choose(rng).unwrap()),
    }
}

fn random_cmp(rng: &mut ChaCha8Rng, vars: &[Var]) -> Formula {
    let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge].choose(rng).unwrap();
    Formula::Cmp(op, random_term(rng, vars, 1), random_term(rng, vars, 1))
}

pub fn random_formula(rng: &mut ChaCha8Rng, vars: &[Var], depth: u32) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..8) {
            0 => Formula::Bool(rng.gen_bool(0.5)),
            _ => random_cmp(rng, vars),
        };
    }
    let pick = rng.gen_range(0..4);
    let mut sub = || random_formula(rng, vars, depth - 1);
    match pick {
        0 => Formula::Not(Box::new(sub())),
        1 => Formula::And(vec![sub(), sub()]),
        2 => Formula::Or(vec![sub(), sub()]),
        _ => Formula::Implies(Box::new(sub()), Box::new(sub())),
    }
}

/// A random graph over `x` and `y` with at most 4 locations, at most 2
/// havoc edges and at most 2 edges out of each location, plus a random
/// non-empty observation set.
pub fn random_graph(rng: &mut ChaCha8Rng) -> (ProgramGraph, ObservationSet) {
    let vars = [Var::new("x"), Var::new("y")];
    let n = rng.gen_range(1..=4);
    let mut edges = Vec::new();
    let mut havocs = 0;
    let mut out_degree = vec![0; n];
    // One edge out of every location, then a few extra ones.
    let sources: Vec<usize> = (0..n).chain((0..rng.gen_range(0..=3)).map(|_| rng.gen_range(0..n))).collect();
    for src in sources {
        if out_degree[src] == 2 {
            continue;
        }
        out_degree[src] += 1;
        let src = LocId(src);
        let dst = LocId(rng.gen_range(0..n));
        let guard = if rng.gen_bool(0.65) {
            Formula::tt()
        } else {
            let v = vars.choose(rng).unwrap().clone();
            let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Ge].choose(rng).unwrap();
            Formula::Cmp(op, Term::Var(v), Term::Int(rng.gen_range(-1..=2)))
        };
        let x = vars.choose(rng).unwrap().clone();
        let effect = match rng.gen_range(0..3) {
            0 if havocs < 2 => {
                havocs += 1;
                Effect::Havoc(x)
            }
            1 => Effect::Skip,
            _ => {
                let other = vars.choose(rng).unwrap().clone();
                let t = match rng.gen_range(0..3) {
                    0 => Term::Int(rng.gen_range(-1..=2)),
                    1 => Term::Add(Box::new(Term::Var(other)), Box::new(Term::Int(rng.gen_range(-1..=1)))),
                    _ => Term::Sub(Box::new(Term::Var(other)), Box::new(Term::Var(x.clone()))),
                };
                Effect::Assign(x, t)
            }
        };
        edges.push(Edge { src, dst, guard, effect });
    }
    let mut obs: Vec<LocId> = (0..n).map(LocId).filter(|_| rng.gen_bool(0.5)).collect();
    if obs.is_empty() {
        obs.push(LocId(rng.gen_range(0..n)));
    }
    let g = ProgramGraph::from_edges(n, edges, LocId(0), vars);
    (g, ObservationSet::new(obs))
}

/// Transition budget for random graphs. Symbolic exploration is
/// breadth-first without merging, so this stays small.
fn budget_for(g: &ProgramGraph, k: usize) -> usize {
    k * g.num_locations() + 2
}

// ---------------------------------------------------------------------------
// Property checks. Each returns Ok(true) when checked, Ok(false) when the
// instance was skipped (budget exhausted), and Err on a violation.

pub type Check = Result<bool, String>;

fn all_assignments(vars: &BTreeSet<Var>) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for v in vars {
        out = out
            .into_iter()
            .flat_map(|rho| {
                DOMAIN.iter().map(move |&d| {
                    let mut r = rho.clone();
                    r.insert(v.clone(), d);
                    r
                })
            })
            .collect();
    }
    out
}

/// Every concrete observed trace over the domain is the concretization of a
/// symbolic trace, and every domain model of a symbolic path concretizes to
/// a concrete observed trace.
pub fn check_symbolic_concrete(seed: u64, session: &mut SolverSession) -> Check {
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let (g, obs) = random_graph(&mut rng);
    let k = rng.gen_range(1..=3);
    let budget = budget_for(&g, k);
    let concrete = enumerate_observed(&g, &obs, k, &DOMAIN, budget);
    let symbolic = observe_all(&g, &obs, k, budget, FreshSupply::new(), session).map_err(|e| e.to_string())?;
    if !concrete.complete || !symbolic.complete {
        return Ok(false);
    }
    let expected: BTreeSet<&ConcreteTrace> = concrete.observed().collect();
    let mut covered = BTreeSet::new();
    for t in &symbolic.traces {
        for rho in all_assignments(&t.free_vars()) {
            if !t.path().eval(&rho).map_err(|e| e.to_string())? {
                continue;
            }
            let c = concretize(&t.observed, &rho).map_err(|e| e.to_string())?;
            if !expected.contains(&c) {
                return Err(format!("seed {seed}: symbolic trace concretizes to unknown trace {c:?}\n{}", g.dump()));
            }
            covered.insert(c);
        }
    }
    if covered.len() != expected.len() {
        return Err(format!(
            "seed {seed}: {} concrete traces, {} covered symbolically\n{}",
            expected.len(),
            covered.len(),
            g.dump()
        ));
    }
    Ok(true)
}

fn quantified(kind: Quantifier, trace: &str, g: &ProgramGraph, obs: &ObservationSet) -> QuantifiedProgram {
    QuantifiedProgram {
        kind,
        trace: trace.into(),
        program: format!("g_{trace}"),
        graph: g.with_prefix(trace),
        observed: obs.clone(),
    }
}

/// A random forall-exists instance over two random graphs.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let (g1, o1) = random_graph(rng);
    let (g2, o2) = random_graph(rng);
    let pick = |rng: &mut ChaCha8Rng, t: &str| Term::var(format!("{t}.{}", ["x", "y"].choose(rng).unwrap()));
    let op = *[CmpOp::Eq, CmpOp::Le, CmpOp::Ge, CmpOp::Ne].choose(rng).unwrap();
    let mut body = Formula::cmp(op, pick(rng, "p1"), pick(rng, "p2"));
    if rng.gen_bool(0.3) {
        let op = *[CmpOp::Eq, CmpOp::Le].choose(rng).unwrap();
        body = Formula::and([body, Formula::cmp(op, pick(rng, "p1"), pick(rng, "p2"))]);
    }
    Instance {
        quantifiers: vec![
            quantified(Quantifier::Forall, "p1", &g1, &o1),
            quantified(Quantifier::Exists, "p2", &g2, &o2),
        ],
        body,
    }
}

/// Lazy search restricted to the domain agrees with the oracle.
pub fn check_oracle_agreement(seed: u64, config: &SolverConfig) -> Check {
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let inst = random_instance(&mut rng);
    let n = rng.gen_range(1..=3);
    let budget = inst.quantifiers.iter().map(|q| budget_for(&q.graph, n)).max().unwrap();
    let expected = oracle_check(&inst, n, &DOMAIN, Some(budget));
    if expected == OracleVerdict::Inconclusive {
        return Ok(false);
    }
    let gen = generalize(&inst).map_err(|e| e.to_string())?;
    let mut opts = SearchOptions::new(config.clone());
    opts.max_observations = n;
    opts.step_budget = Some(budget);
    opts.domain = Some((DOMAIN[0], DOMAIN[1]));
    opts.query_timeout = Duration::from_secs(20);
    let outcome = search(&gen, Algorithm::Lazy, &opts).map_err(|e| e.to_string())?;
    let agree = match (&outcome.verdict, &expected) {
        (Verdict::BugFound { k, .. }, OracleVerdict::Violated { k: ok, .. }) => k == ok,
        (Verdict::NoBugUpTo(m), OracleVerdict::Holds) => *m == n,
        (Verdict::Inconclusive(_), _) => return Ok(false),
        _ => false,
    };
    if agree {
        Ok(true)
    } else {
        let dumps: Vec<String> = inst.quantifiers.iter().map(|q| q.graph.dump()).collect();
        Err(format!(
            "seed {seed}: lazy {:?} vs oracle {expected:?} (n = {n}, body {})\n{}",
            outcome.verdict.bug_k(),
            inst.body,
            dumps.join("--\n")
        ))
    }
}

fn memories(t: &ConcreteTrace) -> Vec<BTreeMap<Var, i64>> {
    t.iter().map(|s| s.mem.as_map().clone()).collect()
}

/// Observed product traces are exactly the point-wise unions of pairs of
/// component observed traces.
pub fn check_product(seed: u64) -> Check {
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let (g1, o1) = random_graph(&mut rng);
    let (g2, o2) = random_graph(&mut rng);
    let (g1, g2) = (g1.with_prefix("a"), g2.with_prefix("b"));
    let k = rng.gen_range(1..=2);
    let (p, op) = async_product(&g1, &o1, &g2, &o2).map_err(|e| e.to_string())?;
    let e1 = enumerate_observed(&g1, &o1, k, &DOMAIN, budget_for(&g1, k));
    let e2 = enumerate_observed(&g2, &o2, k, &DOMAIN, budget_for(&g2, k));
    let ep = enumerate_observed(&p, &op, k, &DOMAIN, budget_for(&g1, k) + budget_for(&g2, k) + 2 * k + 2);
    if !e1.complete || !e2.complete || !ep.complete {
        return Ok(false);
    }
    let mut expected = BTreeSet::new();
    for t1 in e1.observed() {
        for t2 in e2.observed() {
            let joined: Vec<BTreeMap<Var, i64>> = memories(t1)
                .into_iter()
                .zip(memories(t2))
                .map(|(mut a, b)| {
                    a.extend(b);
                    a
                })
                .collect();
            expected.insert(joined);
        }
    }
    let actual: BTreeSet<_> = ep.observed().map(memories).collect();
    if actual == expected {
        Ok(true)
    } else {
        Err(format!(
            "seed {seed}, k = {k}: product has {} traces, expected {}\n{}--\n{}",
            actual.len(),
            expected.len(),
            g1.dump(),
            g2.dump()
        ))
    }
}

/// `⟦t[σ]⟧ρ = ⟦t⟧ρ'` where `ρ'(x) = ⟦σ(x)⟧ρ` on the domain of `σ`, and
/// likewise for formulas.
pub fn check_substitution(seed: u64) -> Check {
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let vars: Vec<Var> = ["a", "b", "c"].iter().map(Var::new).collect();
    let rho: Assignment = vars.iter().map(|v| (v.clone(), rng.gen_range(-20..=20))).collect();
    let mut sigma = Substitution::new();
    for v in &vars {
        if rng.gen_bool(0.6) {
            sigma.insert(v.clone(), random_term(&mut rng, &vars, 2));
        }
    }
    let mut shifted = rho.clone();
    for (x, t) in &sigma {
        shifted.insert(x.clone(), t.eval(&rho).map_err(|e| e.to_string())?);
    }
    let t = random_term(&mut rng, &vars, 3);
    let lhs = t.substitute(&sigma).eval(&rho);
    let rhs = t.eval(&shifted);
    if lhs != rhs {
        return Err(format!("seed {seed}: term {t} under {sigma:?}: {lhs:?} vs {rhs:?}"));
    }
    let f = random_formula(&mut rng, &vars, 2);
    let lhs = f.substitute(&sigma).eval(&rho);
    let rhs = f.eval(&shifted);
    if lhs != rhs {
        return Err(format!("seed {seed}: formula {f} under {sigma:?}: {lhs:?} vs {rhs:?}"));
    }
    Ok(true)
}

pub fn feasibility_session(config: &SolverConfig) -> SolverSession {
    SolverSession::new(config, solver::QF_LOGIC, Duration::from_secs(10)).expect("solver starts")
}

pub fn observed_fixture_traces(inst: &Instance, idx: usize, k: usize) -> Vec<ObservedTrace> {
    let q = &inst.quantifiers[idx];
    let mut session = feasibility_session(&solver());
    observe_all(&q.graph, &q.observed, k, 1000, FreshSupply::new(), &mut session).unwrap().traces
}
