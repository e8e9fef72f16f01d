//! Lowering of structured programs to program graphs.
//!
//! Conditions of `if` and `assume` are merged into the guard of the next
//! emitted edge, so `if` produces exactly two guarded edges out of the
//! current location. An `observe` marks the current location when no other
//! statement leaves from it, and a fresh location reached by a skip edge
//! otherwise.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{Edge, Effect, LocId, ProgramGraph};
use crate::logic::{Formula, Var};

use super::{ProgramAst, Stmt};

#[derive(Clone, Debug)]
pub struct Lowered {
    pub graph: ProgramGraph,
    /// Observation label to the locations it marks, in source order.
    pub labels: BTreeMap<String, Vec<LocId>>,
}

struct Lowerer {
    num_locations: usize,
    edges: Vec<Edge>,
    observed: BTreeSet<LocId>,
    labels: BTreeMap<String, Vec<LocId>>,
}

impl Lowerer {
    fn fresh(&mut self) -> LocId {
        self.num_locations += 1;
        LocId(self.num_locations - 1)
    }

    fn resolve(&mut self, slot: &mut Option<LocId>) -> LocId {
        match *slot {
            Some(l) => l,
            None => {
                let l = self.fresh();
                *slot = Some(l);
                l
            }
        }
    }

    fn edge(&mut self, src: LocId, dst: LocId, guard: Formula, effect: Effect) {
        self.edges.push(Edge { src, dst, guard, effect });
    }

    /// Location usable as a loop head. `exclusive` says no other statement
    /// will add edges out of `entry`.
    fn loop_head(&mut self, entry: LocId, guard: Formula, exclusive: bool) -> LocId {
        if exclusive && guard.is_true() && !self.observed.contains(&entry) {
            return entry;
        }
        let head = self.fresh();
        self.edge(entry, head, guard, Effect::Skip);
        head
    }

    /// Lowers `stmts` from `entry` under the pending `guard`, ending at `exit`
    /// (allocated on first use, so unreachable exits cost no location).
    fn seq(
        &mut self,
        stmts: &[Stmt],
        mut entry: LocId,
        mut guard: Formula,
        mut exclusive: bool,
        exit: &mut Option<LocId>,
    ) {
        if stmts.is_empty() {
            let dst = self.resolve(exit);
            self.edge(entry, dst, guard, Effect::Skip);
            return;
        }
        let last = stmts.len() - 1;
        for (i, stmt) in stmts.iter().enumerate() {
            match stmt {
                Stmt::Assume(c) => {
                    guard = Formula::and([guard, c.clone()]);
                    if i == last {
                        let dst = self.resolve(exit);
                        self.edge(entry, dst, guard.clone(), Effect::Skip);
                    }
                }
                Stmt::Observe(label) => {
                    // A location nobody else leaves from can be observed in
                    // place; otherwise step to a dedicated one.
                    let o = if exclusive && guard.is_true() {
                        entry
                    } else {
                        let o = self.fresh();
                        self.edge(entry, o, guard, Effect::Skip);
                        o
                    };
                    self.observed.insert(o);
                    self.labels.entry(label.clone()).or_default().push(o);
                    entry = o;
                    guard = Formula::tt();
                    exclusive = true;
                    if i == last {
                        let dst = self.resolve(exit);
                        self.edge(o, dst, Formula::tt(), Effect::Skip);
                    }
                }
                _ if i == last => self.stmt(stmt, entry, guard.clone(), exclusive, exit),
                _ => {
                    let mut next = None;
                    self.stmt(stmt, entry, guard, exclusive, &mut next);
                    // Code after a non-terminating statement is unreachable but
                    // still lowered so that its observe points exist.
                    entry = next.unwrap_or_else(|| self.fresh());
                    guard = Formula::tt();
                    exclusive = true;
                }
            }
        }
    }

    fn stmt(
        &mut self,
        stmt: &Stmt,
        entry: LocId,
        guard: Formula,
        exclusive: bool,
        exit: &mut Option<LocId>,
    ) {
        match stmt {
            Stmt::Assign(x, e) => {
                let dst = self.resolve(exit);
                self.edge(entry, dst, guard, Effect::Assign(x.clone(), e.clone()));
            }
            Stmt::Havoc(x) => {
                let dst = self.resolve(exit);
                self.edge(entry, dst, guard, Effect::Havoc(x.clone()));
            }
            Stmt::Skip => {
                let dst = self.resolve(exit);
                self.edge(entry, dst, guard, Effect::Skip);
            }
            Stmt::If(c, then, otherwise) => {
                let g_then = Formula::and([guard.clone(), c.clone()]);
                let g_else = Formula::and([guard, Formula::not(c.clone())]);
                self.seq(then, entry, g_then, false, exit);
                self.seq(otherwise, entry, g_else, false, exit);
            }
            Stmt::Either(first, second) => {
                self.seq(first, entry, guard.clone(), false, exit);
                self.seq(second, entry, guard, false, exit);
            }
            Stmt::While(c, body) => {
                let head = self.loop_head(entry, guard, exclusive);
                self.seq(body, head, c.clone(), true, &mut Some(head));
                let dst = self.resolve(exit);
                self.edge(head, dst, Formula::not(c.clone()), Effect::Skip);
            }
            Stmt::Loop(body) => {
                let head = self.loop_head(entry, guard, exclusive);
                self.seq(body, head, Formula::tt(), true, &mut Some(head));
            }
            Stmt::Assume(_) | Stmt::Observe(_) => {
                self.seq(std::slice::from_ref(stmt), entry, guard, exclusive, exit)
            }
        }
    }
}

impl Lowerer {
    /// Removes the program's exit location when it is only reached by a
    /// skip from an observed location: nothing can be observed after it.
    fn drop_final_stutter(&mut self, exit: Option<LocId>) {
        let Some(e) = exit else { return };
        if e.0 + 1 != self.num_locations || self.observed.contains(&e) {
            return;
        }
        let touching: Vec<usize> =
            (0..self.edges.len()).filter(|&i| self.edges[i].src == e || self.edges[i].dst == e).collect();
        if let [i] = touching[..] {
            let edge = &self.edges[i];
            if edge.dst == e
                && edge.src != e
                && edge.guard.is_true()
                && matches!(edge.effect, Effect::Skip)
                && self.observed.contains(&edge.src)
            {
                self.edges.remove(i);
                self.num_locations -= 1;
            }
        }
    }
}

fn collect_vars(stmts: &[Stmt], out: &mut BTreeSet<Var>) {
    for s in stmts {
        match s {
            Stmt::Assign(x, e) => {
                out.insert(x.clone());
                e.collect_vars(out);
            }
            Stmt::Havoc(x) => {
                out.insert(x.clone());
            }
            Stmt::Assume(c) => out.extend(c.free_vars()),
            Stmt::If(c, a, b) => {
                out.extend(c.free_vars());
                collect_vars(a, out);
                collect_vars(b, out);
            }
            Stmt::While(c, body) => {
                out.extend(c.free_vars());
                collect_vars(body, out);
            }
            Stmt::Loop(body) => collect_vars(body, out),
            Stmt::Either(a, b) => {
                collect_vars(a, out);
                collect_vars(b, out);
            }
            Stmt::Observe(_) | Stmt::Skip => {}
        }
    }
}

/// Lowers a program. Deterministic: equal inputs give identical graphs.
pub fn lower(program: &ProgramAst) -> Lowered {
    let mut lw = Lowerer {
        num_locations: 1,
        edges: Vec::new(),
        observed: BTreeSet::new(),
        labels: BTreeMap::new(),
    };
    let mut exit = None;
    lw.seq(&program.body, LocId(0), Formula::tt(), true, &mut exit);
    lw.drop_final_stutter(exit);
    let mut vars = BTreeSet::new();
    collect_vars(&program.body, &mut vars);
    let graph = ProgramGraph::from_edges(lw.num_locations, lw.edges, LocId(0), vars);
    Lowered { graph, labels: lw.labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn lower_src(body: &str) -> Lowered {
        let src = format!("prog p {{ {body} }} forall t in p obs {{o}} . always (true)");
        lower(&parse_source(&src).unwrap().programs[0])
    }

    fn edges(l: &Lowered) -> Vec<String> {
        l.graph.dump().lines().map(str::to_string).collect()
    }

    #[test]
    fn fig2_program_lowers_to_two_locations() {
        let l = lower_src(
            "loop { input x; if (x > 0) { output := 1; } else { output := 0; } }",
        );
        assert_eq!(l.graph.num_locations(), 2);
        assert_eq!(
            edges(&l),
            vec![
                "l0 -> l1 [true] havoc x",
                "l1 -> l0 [x > 0] output := 1",
                "l1 -> l0 [x <= 0] output := 0",
            ]
        );
        assert!(l.graph.validate().is_ok());
    }

    #[test]
    fn straight_line_assignment() {
        let l = lower_src("x := 0;");
        assert_eq!(l.graph.num_locations(), 2);
        assert_eq!(edges(&l), vec!["l0 -> l1 [true] x := 0"]);
    }

    #[test]
    fn observed_loop_head() {
        let l = lower_src("loop { observe o; havoc x; }");
        let o = l.labels["o"][0];
        // The observation point is the location the loop returns to.
        assert!(l.graph.edges().iter().any(|e| e.dst == o));
        assert!(l.graph.outgoing(o).any(|e| e.effect == Effect::Havoc(Var::new("x"))));
        assert_eq!(l.labels.len(), 1);
    }

    #[test]
    fn one_location_per_observe() {
        let l = lower_src("if (x > 0) { observe o; } else { observe o; } observe q; loop { skip; } observe z;");
        assert_eq!(l.labels["o"].len(), 2);
        assert_eq!(l.labels["q"].len(), 1);
        assert_eq!(l.labels["z"].len(), 1);
        let all: BTreeSet<LocId> = l.labels.values().flatten().copied().collect();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn either_inside_loop_keeps_branches_separate() {
        let l = lower_src("loop { either { while (x < 3) { x := x + 1; } } or { y := 1; } }");
        // The inner while needs its own head, otherwise its back edge would
        // re-enable the `or` branch.
        let head = l.graph.initial();
        let inner: Vec<&Edge> = l.graph.edges().iter().filter(|e| e.guard.to_string() == "x < 3").collect();
        assert_eq!(inner.len(), 1);
        assert_ne!(inner[0].src, head);
        assert!(l.graph.validate().is_ok());
    }

    #[test]
    fn assume_merges_into_next_guard() {
        let l = lower_src("havoc s; assume (s >= 1); x := s;");
        assert_eq!(
            edges(&l),
            vec!["l0 -> l1 [true] havoc s", "l1 -> l2 [s >= 1] x := s"]
        );
    }

    #[test]
    fn lowering_is_deterministic() {
        let body = "x := 0; while (x < 4) { either { x := x + 1; } or { x := x + 2; } observe o; }";
        assert_eq!(lower_src(body).graph, lower_src(body).graph);
    }
}
