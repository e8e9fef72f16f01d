//! JSON and text rendering of search outcomes.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::concrete::ConcreteState;
use crate::graph::ProgramGraph;
use crate::solver::smtlib;

use super::{Counterexample, Outcome, SearchStats, Verdict};

#[derive(Serialize)]
pub struct StateReport {
    pub location: String,
    pub memory: BTreeMap<String, i64>,
}

impl StateReport {
    pub fn new(g: &ProgramGraph, s: &ConcreteState) -> Self {
        StateReport {
            location: g.location_name(s.loc).to_string(),
            memory: s.mem.iter().map(|(k, v)| (k.name().to_string(), *v)).collect(),
        }
    }
}

#[derive(Serialize)]
pub struct CounterexampleReport {
    pub observed_trace: Vec<StateReport>,
    pub full_trace: Vec<StateReport>,
    pub model: BTreeMap<String, i64>,
    pub path: String,
    pub explanation_smt: String,
}

impl CounterexampleReport {
    pub fn new(g: &ProgramGraph, cex: &Counterexample) -> Self {
        CounterexampleReport {
            observed_trace: cex.observed_trace.iter().map(|s| StateReport::new(g, s)).collect(),
            full_trace: cex.full_trace.iter().map(|s| StateReport::new(g, s)).collect(),
            model: cex.model.iter().map(|(k, v)| (k.name().to_string(), *v)).collect(),
            path: cex.trace.path().to_string(),
            explanation_smt: smtlib::formula(&cex.explanation),
        }
    }
}

#[derive(Serialize)]
pub struct StatsReport {
    pub combinations: u64,
    pub queries: u64,
    pub sat_calls: u64,
    pub universal_traces: u64,
    pub existential_traces: u64,
    pub wall_ms: u128,
}

impl From<&SearchStats> for StatsReport {
    fn from(s: &SearchStats) -> Self {
        StatsReport {
            combinations: s.combinations,
            queries: s.queries,
            sat_calls: s.sat_calls,
            universal_traces: s.universal_traces,
            existential_traces: s.existential_traces,
            wall_ms: s.wall_ms,
        }
    }
}

#[derive(Serialize)]
pub struct Report {
    pub verdict: &'static str,
    /// Detection bound for bugs, explored bound for clean runs.
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<&'static str>,
    pub counterexample: Option<CounterexampleReport>,
    pub stats: StatsReport,
}

pub fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::BugFound { .. } => "bug_found",
        Verdict::NoBugUpTo(_) => "no_bug",
        Verdict::Inconclusive(_) => "inconclusive",
    }
}

impl Report {
    /// `g` is the universal (product) graph, used for location names.
    pub fn new(g: &ProgramGraph, outcome: &Outcome) -> Self {
        let (k, reason) = match &outcome.verdict {
            Verdict::BugFound { k, .. } => (Some(*k), None),
            Verdict::NoBugUpTo(n) => (Some(*n), None),
            Verdict::Inconclusive(r) => (None, Some(r.as_str())),
        };
        Report {
            verdict: verdict_name(&outcome.verdict),
            k,
            reason,
            counterexample: outcome.verdict.counterexample().map(|c| CounterexampleReport::new(g, c)),
            stats: (&outcome.stats).into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match (self.verdict, self.k, self.reason) {
            ("bug_found", Some(k), _) => writeln!(out, "BUG FOUND after {k} observation(s)"),
            ("no_bug", Some(n), _) => writeln!(out, "no bug found up to {n} observation(s)"),
            (_, _, reason) => writeln!(out, "inconclusive ({})", reason.unwrap_or("unknown")),
        }
        .unwrap();
        if let Some(c) = &self.counterexample {
            writeln!(out, "counterexample (observed states):").unwrap();
            for (i, s) in c.observed_trace.iter().enumerate() {
                writeln!(out, "  #{i} {}: {}", s.location, memory_text(&s.memory)).unwrap();
            }
            writeln!(out, "full trace:").unwrap();
            for s in &c.full_trace {
                writeln!(out, "  {}: {}", s.location, memory_text(&s.memory)).unwrap();
            }
            if !c.model.is_empty() {
                writeln!(out, "inputs: {}", memory_text(&c.model)).unwrap();
            }
            writeln!(out, "no matching trace: {}", c.explanation_smt).unwrap();
        }
        let s = &self.stats;
        writeln!(
            out,
            "combinations: {}, queries: {}, sat calls: {}, time: {} ms",
            s.combinations, s.queries, s.sat_calls, s.wall_ms
        )
        .unwrap();
        out
    }
}

fn memory_text(m: &BTreeMap<String, i64>) -> String {
    m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}
