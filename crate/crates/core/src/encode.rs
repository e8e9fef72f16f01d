//! First-order encodings of bounded specifications over symbolic traces.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::logic::{CmpOp, Formula, Quantifier, Substitution, Term, Var};
use crate::symexec::ObservedTrace;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("variable `{0}` is not bound by any trace")]
    Unbound(Var),
    #[error("trace has {found} observations, expected {expected}")]
    Length { expected: usize, found: usize },
}

/// `⋀_{i<k} body[x ↦ i-th observed memory of x]` over the point-wise union of
/// the bound traces.
pub fn encode_invariant(
    body: &Formula,
    k: usize,
    bound: &[&ObservedTrace],
) -> Result<Formula, EncodeError> {
    for t in bound {
        if t.len() != k {
            return Err(EncodeError::Length { expected: k, found: t.len() });
        }
    }
    let mut parts = Vec::with_capacity(k);
    for i in 0..k {
        let mut sigma = Substitution::new();
        for t in bound {
            sigma.extend(t.observed[i].mem.iter().map(|(x, e)| (x.clone(), e.clone())));
        }
        if let Some(v) = body.free_vars().into_iter().find(|v| !sigma.contains_key(v)) {
            return Err(EncodeError::Unbound(v));
        }
        parts.push(body.substitute(&sigma));
    }
    Ok(Formula::and(parts))
}

/// Encoding of a quantifier prefix over explicit trace sets, one set per
/// quantifier in prefix order. The result is closed when every trace's
/// free variables are distinct from the others'.
pub fn encode(
    prefix: &[(Quantifier, &[ObservedTrace])],
    body: &Formula,
    k: usize,
) -> Result<Formula, EncodeError> {
    let mut bound = Vec::new();
    encode_rec(prefix, body, k, &mut bound)
}

fn encode_rec<'a>(
    prefix: &[(Quantifier, &'a [ObservedTrace])],
    body: &Formula,
    k: usize,
    bound: &mut Vec<&'a ObservedTrace>,
) -> Result<Formula, EncodeError> {
    let Some(((q, traces), rest)) = prefix.split_first() else {
        return encode_invariant(body, k, bound);
    };
    let mut parts = Vec::with_capacity(traces.len());
    for t in traces.iter() {
        bound.push(t);
        let inner = encode_rec(rest, body, k, bound);
        bound.pop();
        let inner = inner?;
        let part = match q {
            Quantifier::Forall => Formula::forall(t.free_vars(), Formula::implies(t.path().clone(), inner)),
            Quantifier::Exists => Formula::exists(t.free_vars(), Formula::and([t.path().clone(), inner])),
        };
        parts.push(part);
    }
    Ok(match q {
        Quantifier::Forall => Formula::and(parts),
        Quantifier::Exists => Formula::or(parts),
    })
}

/// A lazy query for one universal trace.
#[derive(Clone, Debug)]
pub struct EncodedQuery {
    /// `path(τ1) ∧ C2`; satisfiable iff `τ1` has no matching trace.
    pub formula: Formula,
    /// The free variables of `formula`: those of the universal trace.
    pub free_vars: BTreeSet<Var>,
    /// `C2`, the "no existential trace matches" part.
    pub explanation: Formula,
    /// Number of existential traces that contributed.
    pub existential_traces: usize,
}

/// Builds `path(τ1) ∧ ⋀_{τ2} ∀FV(τ2). ¬(path(τ2) ∧ inv(τ1, τ2))`. With no
/// existential quantifier (`existentials` is `None`) the second part is
/// `¬inv(τ1)`.
pub fn lazy_query(
    universal: &ObservedTrace,
    existentials: Option<&[ObservedTrace]>,
    body: &Formula,
    k: usize,
) -> Result<EncodedQuery, EncodeError> {
    let (explanation, n) = match existentials {
        None => (Formula::not(encode_invariant(body, k, &[universal])?), 0),
        Some(set) => {
            let mut parts = Vec::with_capacity(set.len());
            for t in set {
                let inv = encode_invariant(body, k, &[universal, t])?;
                let matched = Formula::and([t.path().clone(), inv]);
                parts.push(Formula::forall(t.free_vars(), Formula::not(matched)));
            }
            (Formula::and(parts), set.len())
        }
    };
    let formula = Formula::and([universal.path().clone(), explanation.clone()]);
    Ok(EncodedQuery { formula, free_vars: universal.free_vars(), explanation, existential_traces: n })
}

/// `lo ≤ v ≤ hi` for every variable in `vars`. Used only to compare
/// against the finite-domain oracle.
pub fn domain_constraint(vars: &BTreeSet<Var>, lo: i64, hi: i64) -> Formula {
    Formula::and(vars.iter().flat_map(|v| {
        [
            Formula::cmp(CmpOp::Ge, Term::Var(v.clone()), Term::Int(lo)),
            Formula::cmp(CmpOp::Le, Term::Var(v.clone()), Term::Int(hi)),
        ]
    }))
}

/// Conjoins `lo ≤ v ≤ hi` for every free variable of `t` to its path.
pub fn restrict_to_domain(t: &ObservedTrace, lo: i64, hi: i64) -> ObservedTrace {
    let mut t = t.clone();
    let domain = domain_constraint(&t.free_vars(), lo, hi);
    let last = t.full.states.last_mut().expect("nonempty");
    last.path = Formula::and([last.path.clone(), domain]);
    t
}

/// Like [`lazy_query`], but with every fresh variable of every trace
/// restricted to `lo..=hi`: existentials inside their quantifier, the
/// universal trace at top level.
pub fn lazy_query_in_domain(
    universal: &ObservedTrace,
    existentials: Option<&[ObservedTrace]>,
    body: &Formula,
    k: usize,
    (lo, hi): (i64, i64),
) -> Result<EncodedQuery, EncodeError> {
    let universal = restrict_to_domain(universal, lo, hi);
    let existentials: Option<Vec<ObservedTrace>> =
        existentials.map(|s| s.iter().map(|t| restrict_to_domain(t, lo, hi)).collect());
    lazy_query(&universal, existentials.as_deref(), body, k)
}
