//! First-order terms and formulas over linear integer arithmetic.
//!
//! Terms are kept linear by construction: multiplication always carries a
//! literal coefficient, and division/modulo always have a non-zero literal
//! divisor. Division and modulo follow the SMT-LIB (Euclidean) convention so
//! that concrete evaluation agrees with the solver.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Sorts of first-order variables. Only integers exist for now.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Int,
}

/// A first-order variable. Program variables and fresh symbolic variables
/// share this type; they live in disjoint namespaces by naming convention.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: impl AsRef<str>) -> Self {
        Var(Arc::from(name.as_ref()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn sort(&self) -> Sort {
        Sort::Int
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Self {
        Var::new(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Int(i64),
    Var(Var),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Neg(Box<Term>),
    /// Literal coefficient times a term.
    Mul(i64, Box<Term>),
    /// Euclidean division by a non-zero literal.
    Div(Box<Term>, i64),
    /// Euclidean remainder by a non-zero literal; always non-negative.
    Mod(Box<Term>, i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantifier {
    Forall,
    Exists,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Bool(bool),
    Cmp(CmpOp, Term, Term),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    /// Quantifier block over pairwise-distinct variables.
    Quant(Quantifier, Vec<Var>, Box<Formula>),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(Var),
    #[error("quantified formulas cannot be evaluated directly")]
    Quantified,
    #[error("integer overflow while evaluating `{0}`")]
    Overflow(String),
    #[error("division by zero")]
    DivisionByZero,
}

/// Finite map from variables to integer values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(BTreeMap<Var, i64>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, var: Var, value: i64) -> Option<i64> {
        self.0.insert(var, value)
    }

    pub fn get(&self, var: &Var) -> Option<i64> {
        self.0.get(var).copied()
    }

    pub fn contains(&self, var: &Var) -> bool {
        self.0.contains_key(var)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &i64)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_map(&self) -> &BTreeMap<Var, i64> {
        &self.0
    }

    /// Adds every binding of `other`, overwriting on conflict.
    pub fn extend(&mut self, other: &Assignment) {
        self.0.extend(other.iter().map(|(k, v)| (k.clone(), *v)));
    }
}

impl FromIterator<(Var, i64)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (Var, i64)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[(&str, i64); N]> for Assignment {
    fn from(pairs: [(&str, i64); N]) -> Self {
        pairs.into_iter().map(|(k, v)| (Var::new(k), v)).collect()
    }
}

/// Simultaneous substitution of variables by terms.
pub type Substitution = BTreeMap<Var, Term>;

#[allow(clippy::should_implement_trait)]
impl Term {
    pub fn var(name: impl AsRef<str>) -> Term {
        Term::Var(Var::new(name))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Term::Int(n) => Some(*n),
            _ => None,
        }
    }

    // Smart constructors fold literal arithmetic when it does not overflow.

    pub fn add(a: Term, b: Term) -> Term {
        match (&a, &b) {
            (Term::Int(x), Term::Int(y)) => {
                if let Some(v) = x.checked_add(*y) {
                    return Term::Int(v);
                }
            }
            (Term::Int(0), _) => return b,
            (_, Term::Int(0)) => return a,
            _ => {}
        }
        Term::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Term, b: Term) -> Term {
        match (&a, &b) {
            (Term::Int(x), Term::Int(y)) => {
                if let Some(v) = x.checked_sub(*y) {
                    return Term::Int(v);
                }
            }
            (_, Term::Int(0)) => return a,
            _ => {}
        }
        Term::Sub(Box::new(a), Box::new(b))
    }

    pub fn neg(a: Term) -> Term {
        match a {
            Term::Int(x) if x != i64::MIN => Term::Int(-x),
            Term::Neg(inner) => *inner,
            other => Term::Neg(Box::new(other)),
        }
    }

    pub fn mul(coeff: i64, a: Term) -> Term {
        match (coeff, &a) {
            (0, _) => Term::Int(0),
            (1, _) => a,
            (c, Term::Int(x)) => match c.checked_mul(*x) {
                Some(v) => Term::Int(v),
                None => Term::Mul(c, Box::new(a)),
            },
            _ => Term::Mul(coeff, Box::new(a)),
        }
    }

    /// Panics if `divisor` is zero; the parser rejects such terms.
    pub fn div(a: Term, divisor: i64) -> Term {
        assert!(divisor != 0, "division by literal zero");
        match &a {
            Term::Int(x) => match smt_div(*x, divisor) {
                Some(v) => Term::Int(v),
                None => Term::Div(Box::new(a), divisor),
            },
            _ if divisor == 1 => a,
            _ => Term::Div(Box::new(a), divisor),
        }
    }

    /// Panics if `divisor` is zero; the parser rejects such terms.
    pub fn modulo(a: Term, divisor: i64) -> Term {
        assert!(divisor != 0, "modulo by literal zero");
        match &a {
            Term::Int(x) => match smt_mod(*x, divisor) {
                Some(v) => Term::Int(v),
                None => Term::Mod(Box::new(a), divisor),
            },
            _ => Term::Mod(Box::new(a), divisor),
        }
    }

    pub fn eval(&self, rho: &Assignment) -> Result<i64, EvalError> {
        let overflow = || EvalError::Overflow(self.to_string());
        Ok(match self {
            Term::Int(n) => *n,
            Term::Var(v) => rho.get(v).ok_or_else(|| EvalError::Unbound(v.clone()))?,
            Term::Add(a, b) => a.eval(rho)?.checked_add(b.eval(rho)?).ok_or_else(overflow)?,
            Term::Sub(a, b) => a.eval(rho)?.checked_sub(b.eval(rho)?).ok_or_else(overflow)?,
            Term::Neg(a) => a.eval(rho)?.checked_neg().ok_or_else(overflow)?,
            Term::Mul(c, a) => c.checked_mul(a.eval(rho)?).ok_or_else(overflow)?,
            Term::Div(a, d) => {
                if *d == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                smt_div(a.eval(rho)?, *d).ok_or_else(overflow)?
            }
            Term::Mod(a, d) => {
                if *d == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                smt_mod(a.eval(rho)?, *d).ok_or_else(overflow)?
            }
        })
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Int(_) => {}
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Add(a, b) | Term::Sub(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Term::Neg(a) | Term::Mul(_, a) | Term::Div(a, _) | Term::Mod(a, _) => {
                a.collect_vars(out)
            }
        }
    }

    /// Simultaneous substitution; variables outside `sigma` are untouched.
    pub fn substitute(&self, sigma: &Substitution) -> Term {
        match self {
            Term::Int(n) => Term::Int(*n),
            Term::Var(v) => sigma.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone())),
            Term::Add(a, b) => Term::add(a.substitute(sigma), b.substitute(sigma)),
            Term::Sub(a, b) => Term::sub(a.substitute(sigma), b.substitute(sigma)),
            Term::Neg(a) => Term::neg(a.substitute(sigma)),
            Term::Mul(c, a) => Term::mul(*c, a.substitute(sigma)),
            Term::Div(a, d) => Term::div(a.substitute(sigma), *d),
            Term::Mod(a, d) => Term::modulo(a.substitute(sigma), *d),
        }
    }

    fn rename(&self, from: &Var, to: &Var) -> Term {
        let mut sigma = Substitution::new();
        sigma.insert(from.clone(), Term::Var(to.clone()));
        self.substitute(&sigma)
    }
}

/// SMT-LIB `div`: floor for positive divisors, ceiling for negative ones, so
/// that the remainder is always non-negative.
pub fn smt_div(a: i64, d: i64) -> Option<i64> {
    if d == 0 {
        return None;
    }
    a.checked_div_euclid(d)
}

pub fn smt_mod(a: i64, d: i64) -> Option<i64> {
    if d == 0 {
        return None;
    }
    a.checked_rem_euclid(d)
}

impl From<i64> for Term {
    fn from(n: i64) -> Self {
        Term::Int(n)
    }
}

impl From<Var> for Term {
    fn from(v: Var) -> Self {
        Term::Var(v)
    }
}

#[allow(clippy::should_implement_trait)]
impl Formula {
    pub fn tt() -> Formula {
        Formula::Bool(true)
    }

    pub fn ff() -> Formula {
        Formula::Bool(false)
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Formula::Bool(true))
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Formula::Bool(false))
    }

    pub fn cmp(op: CmpOp, a: Term, b: Term) -> Formula {
        if let (Some(x), Some(y)) = (a.as_int(), b.as_int()) {
            return Formula::Bool(op.holds(x, y));
        }
        Formula::Cmp(op, a, b)
    }

    pub fn eq(a: Term, b: Term) -> Formula {
        Formula::cmp(CmpOp::Eq, a, b)
    }

    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::Bool(b) => Formula::Bool(!b),
            Formula::Not(inner) => *inner,
            Formula::Cmp(op, a, b) => Formula::Cmp(op.negate(), a, b),
            other => Formula::Not(Box::new(other)),
        }
    }

    /// Conjunction with true-absorption, false-propagation and flattening.
    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::Bool(true) => {}
                Formula::Bool(false) => return Formula::ff(),
                Formula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::tt(),
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::Bool(false) => {}
                Formula::Bool(true) => return Formula::tt(),
                Formula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::ff(),
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        match (&a, &b) {
            (Formula::Bool(false), _) | (_, Formula::Bool(true)) => Formula::tt(),
            (Formula::Bool(true), _) => b,
            (_, Formula::Bool(false)) => Formula::not(a),
            _ => Formula::Implies(Box::new(a), Box::new(b)),
        }
    }

    /// Quantifier block; variables not free in the body are dropped.
    pub fn quant(q: Quantifier, vars: impl IntoIterator<Item = Var>, body: Formula) -> Formula {
        let free = body.free_vars();
        let mut seen = BTreeSet::new();
        let vars: Vec<Var> = vars
            .into_iter()
            .filter(|v| free.contains(v) && seen.insert(v.clone()))
            .collect();
        if vars.is_empty() {
            return body;
        }
        Formula::Quant(q, vars, Box::new(body))
    }

    pub fn forall(vars: impl IntoIterator<Item = Var>, body: Formula) -> Formula {
        Formula::quant(Quantifier::Forall, vars, body)
    }

    pub fn exists(vars: impl IntoIterator<Item = Var>, body: Formula) -> Formula {
        Formula::quant(Quantifier::Exists, vars, body)
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::Bool(_) | Formula::Cmp(..) => true,
            Formula::Not(f) => f.is_quantifier_free(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().all(Formula::is_quantifier_free),
            Formula::Implies(a, b) => a.is_quantifier_free() && b.is_quantifier_free(),
            Formula::Quant(..) => false,
        }
    }

    pub fn eval(&self, rho: &Assignment) -> Result<bool, EvalError> {
        Ok(match self {
            Formula::Bool(b) => *b,
            Formula::Cmp(op, a, b) => op.holds(a.eval(rho)?, b.eval(rho)?),
            Formula::Not(f) => !f.eval(rho)?,
            Formula::And(fs) => {
                let mut all = true;
                for f in fs {
                    // evaluate every conjunct so unbound variables are always reported
                    all &= f.eval(rho)?;
                }
                all
            }
            Formula::Or(fs) => {
                let mut any = false;
                for f in fs {
                    any |= f.eval(rho)?;
                }
                any
            }
            Formula::Implies(a, b) => {
                let lhs = a.eval(rho)?;
                let rhs = b.eval(rho)?;
                !lhs || rhs
            }
            Formula::Quant(..) => return Err(EvalError::Quantified),
        })
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<Var>) {
        match self {
            Formula::Bool(_) => {}
            Formula::Cmp(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Formula::Not(f) => f.collect_free(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_free(out)),
            Formula::Implies(a, b) => {
                a.collect_free(out);
                b.collect_free(out);
            }
            Formula::Quant(_, vars, body) => {
                let mut inner = BTreeSet::new();
                body.collect_free(&mut inner);
                for v in vars {
                    inner.remove(v);
                }
                out.extend(inner);
            }
        }
    }

    /// Capture-avoiding simultaneous substitution.
    pub fn substitute(&self, sigma: &Substitution) -> Formula {
        match self {
            Formula::Bool(b) => Formula::Bool(*b),
            Formula::Cmp(op, a, b) => Formula::cmp(*op, a.substitute(sigma), b.substitute(sigma)),
            Formula::Not(f) => Formula::not(f.substitute(sigma)),
            Formula::And(fs) => Formula::and(fs.iter().map(|f| f.substitute(sigma))),
            Formula::Or(fs) => Formula::or(fs.iter().map(|f| f.substitute(sigma))),
            Formula::Implies(a, b) => Formula::implies(a.substitute(sigma), b.substitute(sigma)),
            Formula::Quant(q, vars, body) => {
                let body_free = body.free_vars();
                // Only the bindings that can actually reach the body matter.
                let mut inner: Substitution = sigma
                    .iter()
                    .filter(|(v, _)| body_free.contains(*v) && !vars.contains(v))
                    .map(|(v, t)| (v.clone(), t.clone()))
                    .collect();
                let mut captured = BTreeSet::new();
                for t in inner.values() {
                    t.collect_vars(&mut captured);
                }
                let mut avoid = captured.clone();
                avoid.extend(body_free.iter().cloned());
                avoid.extend(vars.iter().cloned());

                let mut new_vars = Vec::with_capacity(vars.len());
                let mut body = (**body).clone();
                for v in vars {
                    if captured.contains(v) {
                        let fresh = prime_until_fresh(v, &avoid);
                        avoid.insert(fresh.clone());
                        body = body.rename(v, &fresh);
                        new_vars.push(fresh);
                    } else {
                        new_vars.push(v.clone());
                    }
                }
                inner.retain(|v, _| !new_vars.contains(v));
                Formula::quant(*q, new_vars, body.substitute(&inner))
            }
        }
    }

    fn rename(&self, from: &Var, to: &Var) -> Formula {
        match self {
            Formula::Bool(b) => Formula::Bool(*b),
            Formula::Cmp(op, a, b) => Formula::Cmp(*op, a.rename(from, to), b.rename(from, to)),
            Formula::Not(f) => Formula::Not(Box::new(f.rename(from, to))),
            Formula::And(fs) => Formula::And(fs.iter().map(|f| f.rename(from, to)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| f.rename(from, to)).collect()),
            Formula::Implies(a, b) => {
                Formula::Implies(Box::new(a.rename(from, to)), Box::new(b.rename(from, to)))
            }
            Formula::Quant(q, vars, body) => {
                if vars.contains(from) {
                    self.clone()
                } else {
                    Formula::Quant(*q, vars.clone(), Box::new(body.rename(from, to)))
                }
            }
        }
    }
}

fn prime_until_fresh(v: &Var, avoid: &BTreeSet<Var>) -> Var {
    let mut name = format!("{}'", v.name());
    loop {
        let candidate = Var::new(&name);
        if !avoid.contains(&candidate) {
            return candidate;
        }
        name.push('\'');
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(n) => write!(f, "{n}"),
            Term::Var(v) => write!(f, "{v}"),
            Term::Add(a, b) => write!(f, "({a} + {b})"),
            Term::Sub(a, b) => write!(f, "({a} - {b})"),
            Term::Neg(a) => write!(f, "-{a}"),
            Term::Mul(c, a) => write!(f, "{c} * {a}"),
            Term::Div(a, d) => write!(f, "({a} / {d})"),
            Term::Mod(a, d) => write!(f, "({a} % {d})"),
        }
    }
}

fn write_joined(f: &mut fmt::Formatter<'_>, parts: &[Formula], sep: &str) -> fmt::Result {
    write!(f, "(")?;
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            write!(f, " {sep} ")?;
        }
        write!(f, "{p}")?;
    }
    write!(f, ")")
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Bool(b) => write!(f, "{b}"),
            Formula::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            Formula::Not(inner) => write!(f, "!({inner})"),
            Formula::And(fs) => write_joined(f, fs, "&&"),
            Formula::Or(fs) => write_joined(f, fs, "||"),
            Formula::Implies(a, b) => write!(f, "({a} -> {b})"),
            Formula::Quant(q, vars, body) => {
                let kw = match q {
                    Quantifier::Forall => "forall",
                    Quantifier::Exists => "exists",
                };
                let names: Vec<&str> = vars.iter().map(Var::name).collect();
                write!(f, "{kw} {}. {body}", names.join(", "))
            }
        }
    }
}
