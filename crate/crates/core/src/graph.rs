//! Guarded program graphs and the asynchronous product construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::logic::{Formula, Term, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocId(pub usize);

impl fmt::Display for LocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Edge effect. `Skip` leaves memory untouched.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Effect {
    Assign(Var, Term),
    Havoc(Var),
    Skip,
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::Assign(x, e) => write!(f, "{x} := {e}"),
            Effect::Havoc(x) => write!(f, "havoc {x}"),
            Effect::Skip => write!(f, "skip"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: LocId,
    pub dst: LocId,
    pub guard: Formula,
    pub effect: Effect,
}

/// A program graph. Locations are `0..num_locations()`; edges keep their
/// declaration order, which drives deterministic exploration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramGraph {
    names: Vec<String>,
    edges: Vec<Edge>,
    initial: LocId,
    variables: BTreeSet<Var>,
    outgoing: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("initial location {0} is not a location of the graph")]
    BadInitial(LocId),
    #[error("edge #{edge} ({src} -> {dst}) references an undeclared location")]
    DanglingEdge { edge: usize, src: LocId, dst: LocId },
    #[error("guard of edge #{edge} is not quantifier-free")]
    QuantifiedGuard { edge: usize },
    #[error("edge #{edge} references unknown variable `{var}`")]
    UnknownVariable { edge: usize, var: Var },
    #[error("observed location {0} is not a location of the graph")]
    BadObservation(LocId),
    #[error("program graphs share variable `{0}`")]
    SharedVariable(Var),
    #[error("observation set is empty")]
    EmptyObservation,
}

impl ProgramGraph {
    pub fn new(
        names: Vec<String>,
        edges: Vec<Edge>,
        initial: LocId,
        variables: BTreeSet<Var>,
    ) -> Self {
        let mut outgoing = vec![Vec::new(); names.len()];
        for (i, e) in edges.iter().enumerate() {
            if let Some(list) = outgoing.get_mut(e.src.0) {
                list.push(i);
            }
        }
        ProgramGraph { names, edges, initial, variables, outgoing }
    }

    /// Builds a graph with locations named by their index.
    pub fn from_edges(
        num_locations: usize,
        edges: Vec<Edge>,
        initial: LocId,
        variables: impl IntoIterator<Item = Var>,
    ) -> Self {
        let names = (0..num_locations).map(|i| format!("l{i}")).collect();
        Self::new(names, edges, initial, variables.into_iter().collect())
    }

    pub fn num_locations(&self) -> usize {
        self.names.len()
    }

    pub fn locations(&self) -> impl Iterator<Item = LocId> {
        (0..self.names.len()).map(LocId)
    }

    pub fn location_name(&self, l: LocId) -> &str {
        self.names.get(l.0).map(String::as_str).unwrap_or("?")
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn initial(&self) -> LocId {
        self.initial
    }

    pub fn variables(&self) -> &BTreeSet<Var> {
        &self.variables
    }

    pub fn contains(&self, l: LocId) -> bool {
        l.0 < self.names.len()
    }

    /// Outgoing edges of `l` in declaration order.
    pub fn outgoing(&self, l: LocId) -> impl Iterator<Item = &Edge> {
        self.outgoing
            .get(l.0)
            .into_iter()
            .flatten()
            .map(move |&i| &self.edges[i])
    }

    /// Checks every structural invariant, collecting all violations.
    pub fn validate(&self) -> Result<(), Vec<GraphError>> {
        let mut errors = Vec::new();
        if !self.contains(self.initial) {
            errors.push(GraphError::BadInitial(self.initial));
        }
        for (i, e) in self.edges.iter().enumerate() {
            if !self.contains(e.src) || !self.contains(e.dst) {
                errors.push(GraphError::DanglingEdge { edge: i, src: e.src, dst: e.dst });
            }
            if !e.guard.is_quantifier_free() {
                errors.push(GraphError::QuantifiedGuard { edge: i });
            }
            let mut used = e.guard.free_vars();
            match &e.effect {
                Effect::Assign(x, t) => {
                    used.insert(x.clone());
                    t.collect_vars(&mut used);
                }
                Effect::Havoc(x) => {
                    used.insert(x.clone());
                }
                Effect::Skip => {}
            }
            for v in used {
                if !self.variables.contains(&v) {
                    errors.push(GraphError::UnknownVariable { edge: i, var: v });
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Renames every program variable `x` to `prefix.x`.
    pub fn with_prefix(&self, prefix: &str) -> ProgramGraph {
        let rename: BTreeMap<Var, Var> = self
            .variables
            .iter()
            .map(|v| (v.clone(), Var::new(format!("{prefix}.{}", v.name()))))
            .collect();
        let sigma = rename
            .iter()
            .map(|(from, to)| (from.clone(), Term::Var(to.clone())))
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: e.src,
                dst: e.dst,
                guard: e.guard.substitute(&sigma),
                effect: match &e.effect {
                    Effect::Assign(x, t) => Effect::Assign(rename[x].clone(), t.substitute(&sigma)),
                    Effect::Havoc(x) => Effect::Havoc(rename[x].clone()),
                    Effect::Skip => Effect::Skip,
                },
            })
            .collect();
        ProgramGraph::new(
            self.names.clone(),
            edges,
            self.initial,
            rename.into_values().collect(),
        )
    }

    /// Plain-text dump, one edge per line: `src -> dst [guard] effect`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!(
                "{} -> {} [{}] {}\n",
                self.location_name(e.src),
                self.location_name(e.dst),
                e.guard,
                e.effect
            ));
        }
        out
    }
}

/// Observed locations of one graph.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ObservationSet(BTreeSet<LocId>);

impl ObservationSet {
    pub fn new(locs: impl IntoIterator<Item = LocId>) -> Self {
        ObservationSet(locs.into_iter().collect())
    }

    pub fn contains(&self, l: LocId) -> bool {
        self.0.contains(&l)
    }

    pub fn iter(&self) -> impl Iterator<Item = LocId> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_against(&self, g: &ProgramGraph) -> Result<(), GraphError> {
        match self.0.iter().find(|l| !g.contains(**l)) {
            Some(l) => Err(GraphError::BadObservation(*l)),
            None => Ok(()),
        }
    }
}

/// Splits every observed location `o` into `o` (incoming edges only) and a
/// fresh re-entry location that takes over `o`'s outgoing edges.
///
/// Returns the transformed graph and the re-entry location of each observed
/// location, in observation-set order.
pub fn add_reentry_points(g: &ProgramGraph, obs: &ObservationSet) -> (ProgramGraph, Vec<LocId>) {
    let mut names = g.names.clone();
    let mut reentry = BTreeMap::new();
    for o in obs.iter() {
        let r = LocId(names.len());
        names.push(format!("{}'", g.location_name(o)));
        reentry.insert(o, r);
    }
    let edges = g
        .edges
        .iter()
        .map(|e| match reentry.get(&e.src) {
            Some(r) => Edge { src: *r, ..e.clone() },
            None => e.clone(),
        })
        .collect();
    let graph = ProgramGraph::new(names, edges, g.initial, g.variables.clone());
    (graph, obs.iter().map(|o| reentry[&o]).collect())
}

/// Asynchronous product of two graphs with disjoint variables.
///
/// The product runs `g1` up to one of its observation points, then `g2` up to
/// one of its observation points, and marks the end of that round as observed.
/// Copies of each component remember where the other one has to resume, so
/// observed product traces are exactly the point-wise unions of pairs of
/// component observed traces.
pub fn async_product(
    g1: &ProgramGraph,
    o1: &ObservationSet,
    g2: &ProgramGraph,
    o2: &ObservationSet,
) -> Result<(ProgramGraph, ObservationSet), GraphError> {
    if o1.is_empty() || o2.is_empty() {
        return Err(GraphError::EmptyObservation);
    }
    o1.check_against(g1)?;
    o2.check_against(g2)?;
    if let Some(shared) = g1.variables.intersection(&g2.variables).next() {
        return Err(GraphError::SharedVariable(shared.clone()));
    }

    let (h1, r1) = add_reentry_points(g1, o1);
    let (h2, r2) = add_reentry_points(g2, o2);
    let obs1: Vec<LocId> = o1.iter().collect();
    let obs2: Vec<LocId> = o2.iter().collect();
    let n1 = h1.num_locations();
    let n2 = h2.num_locations();

    // Copies G1(0..=|O2|) come first, then G2(1..=|O1|).
    let g1_copy = |c: usize, l: LocId| LocId(c * n1 + l.0);
    let g2_base = (obs2.len() + 1) * n1;
    let g2_copy = |c: usize, l: LocId| LocId(g2_base + (c - 1) * n2 + l.0);

    let mut names = Vec::with_capacity(g2_base + obs1.len() * n2);
    let mut edges = Vec::new();
    for c in 0..=obs2.len() {
        for l in h1.locations() {
            names.push(format!("A{c}.{}", h1.location_name(l)));
        }
        for e in &h1.edges {
            edges.push(Edge { src: g1_copy(c, e.src), dst: g1_copy(c, e.dst), ..e.clone() });
        }
    }
    for c in 1..=obs1.len() {
        for l in h2.locations() {
            names.push(format!("B{c}.{}", h2.location_name(l)));
        }
        for e in &h2.edges {
            edges.push(Edge { src: g2_copy(c, e.src), dst: g2_copy(c, e.dst), ..e.clone() });
        }
    }

    let redirect = |src: LocId, dst: LocId| Edge { src, dst, guard: Formula::tt(), effect: Effect::Skip };
    for (i, &o) in obs1.iter().enumerate() {
        edges.push(redirect(g1_copy(0, o), g2_copy(i + 1, h2.initial)));
        for j in 1..=obs2.len() {
            edges.push(redirect(g1_copy(j, o), g2_copy(i + 1, r2[j - 1])));
        }
    }
    for (i, &o) in obs2.iter().enumerate() {
        for j in 1..=obs1.len() {
            edges.push(redirect(g2_copy(j, o), g1_copy(i + 1, r1[j - 1])));
        }
    }

    let observed = ObservationSet::new(
        (1..=obs1.len()).flat_map(|c| obs2.iter().map(move |&o| g2_copy(c, o))),
    );
    let variables = g1.variables.union(&g2.variables).cloned().collect();
    let product = ProgramGraph::new(names, edges, g1_copy(0, h1.initial), variables);
    Ok((product, observed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::CmpOp;

    pub(crate) fn fig2_graph() -> ProgramGraph {
        let x = Var::new("x");
        let out = Var::new("output");
        ProgramGraph::from_edges(
            2,
            vec![
                Edge { src: LocId(0), dst: LocId(1), guard: Formula::tt(), effect: Effect::Havoc(x.clone()) },
                Edge {
                    src: LocId(1),
                    dst: LocId(0),
                    guard: Formula::cmp(CmpOp::Gt, Term::Var(x.clone()), Term::Int(0)),
                    effect: Effect::Assign(out.clone(), Term::Int(1)),
                },
                Edge {
                    src: LocId(1),
                    dst: LocId(0),
                    guard: Formula::cmp(CmpOp::Le, Term::Var(x.clone()), Term::Int(0)),
                    effect: Effect::Assign(out.clone(), Term::Int(0)),
                },
            ],
            LocId(0),
            [x, out],
        )
    }

    fn two_location(var: &str) -> ProgramGraph {
        let v = Var::new(var);
        ProgramGraph::from_edges(
            2,
            vec![
                Edge { src: LocId(0), dst: LocId(1), guard: Formula::tt(), effect: Effect::Havoc(v.clone()) },
                Edge { src: LocId(1), dst: LocId(1), guard: Formula::tt(), effect: Effect::Havoc(v.clone()) },
            ],
            LocId(0),
            [v],
        )
    }

    #[test]
    fn validate_accepts_fig2() {
        assert_eq!(fig2_graph().validate(), Ok(()));
    }

    #[test]
    fn validate_reports_dangling_edges_and_unknown_variables() {
        let g = ProgramGraph::from_edges(
            1,
            vec![Edge {
                src: LocId(0),
                dst: LocId(3),
                guard: Formula::cmp(CmpOp::Gt, Term::var("ghost"), Term::Int(0)),
                effect: Effect::Skip,
            }],
            LocId(0),
            [],
        );
        let errs = g.validate().unwrap_err();
        assert!(errs.iter().any(|e| matches!(e, GraphError::DanglingEdge { .. })));
        assert!(errs
            .iter()
            .any(|e| matches!(e, GraphError::UnknownVariable { var, .. } if var.name() == "ghost")));
    }

    #[test]
    fn reentry_moves_outgoing_edges() {
        let g = two_location("a");
        let (h, r) = add_reentry_points(&g, &ObservationSet::new([LocId(1)]));
        assert_eq!(h.num_locations(), 3);
        assert_eq!(r, vec![LocId(2)]);
        assert_eq!(h.outgoing(LocId(1)).count(), 0);
        let moved: Vec<_> = h.outgoing(LocId(2)).collect();
        assert_eq!(moved.len(), 1);
        assert_eq!(moved[0].dst, LocId(1));
    }

    #[test]
    fn schematic_product_has_nine_locations() {
        let g1 = two_location("a");
        let g2 = two_location("b");
        let o = ObservationSet::new([LocId(1)]);
        let (p, obs) = async_product(&g1, &o, &g2, &o).unwrap();
        // |O2| + 1 = 2 copies of the 3-location G1' and |O1| = 1 copy of G2'.
        assert_eq!(p.num_locations(), 9);
        assert_eq!(obs.len(), 1);
        assert_eq!(p.initial(), LocId(0));
        assert_eq!(p.validate(), Ok(()));
    }

    #[test]
    fn product_rejects_shared_variables_and_empty_observations() {
        let g = two_location("a");
        let o = ObservationSet::new([LocId(1)]);
        assert_eq!(
            async_product(&g, &o, &g, &o).unwrap_err(),
            GraphError::SharedVariable(Var::new("a"))
        );
        let g2 = two_location("b");
        assert_eq!(
            async_product(&g, &o, &g2, &ObservationSet::default()).unwrap_err(),
            GraphError::EmptyObservation
        );
    }

    #[test]
    fn prefixing_renames_every_variable() {
        let g = fig2_graph().with_prefix("p1");
        assert!(g.variables().iter().all(|v| v.name().starts_with("p1.")));
        assert_eq!(g.validate(), Ok(()));
        assert!(g.dump().contains("l1 -> l0 [p1.x > 0] p1.output := 1"));
    }
}
