//! Serialization of terms and formulas to SMT-LIB 2 text.

use std::fmt::Write;

use crate::logic::{CmpOp, Formula, Quantifier, Term, Var};

/// Renders a variable as an SMT-LIB symbol, quoting it when needed.
pub fn symbol(v: &Var) -> String {
    let name = v.name();
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{name}|")
    }
}

pub fn int_literal(n: i64) -> String {
    if n < 0 {
        format!("(- {})", (n as i128).unsigned_abs())
    } else {
        n.to_string()
    }
}

pub fn term(t: &Term) -> String {
    let mut out = String::new();
    write_term(&mut out, t);
    out
}

pub fn formula(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(&mut out, f);
    out
}

fn write_term(out: &mut String, t: &Term) {
    match t {
        Term::Int(n) => out.push_str(&int_literal(*n)),
        Term::Var(v) => out.push_str(&symbol(v)),
        Term::Add(a, b) => binary(out, "+", a, b),
        Term::Sub(a, b) => binary(out, "-", a, b),
        Term::Neg(a) => {
            out.push_str("(- ");
            write_term(out, a);
            out.push(')');
        }
        Term::Mul(c, a) => {
            let _ = write!(out, "(* {} ", int_literal(*c));
            write_term(out, a);
            out.push(')');
        }
        Term::Div(a, d) | Term::Mod(a, d) => {
            out.push_str(if matches!(t, Term::Div(..)) { "(div " } else { "(mod " });
            write_term(out, a);
            let _ = write!(out, " {})", int_literal(*d));
        }
    }
}

fn binary(out: &mut String, op: &str, a: &Term, b: &Term) {
    let _ = write!(out, "({op} ");
    write_term(out, a);
    out.push(' ');
    write_term(out, b);
    out.push(')');
}

fn write_formula(out: &mut String, f: &Formula) {
    match f {
        Formula::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Formula::Cmp(op, a, b) => {
            let sym = match op {
                CmpOp::Eq => "=",
                CmpOp::Ne => "distinct",
                CmpOp::Lt => "<",
                CmpOp::Le => "<=",
                CmpOp::Gt => ">",
                CmpOp::Ge => ">=",
            };
            binary(out, sym, a, b);
        }
        Formula::Not(inner) => {
            out.push_str("(not ");
            write_formula(out, inner);
            out.push(')');
        }
        Formula::And(parts) | Formula::Or(parts) => {
            let (op, empty) = if matches!(f, Formula::And(_)) { ("and", "true") } else { ("or", "false") };
            match parts.as_slice() {
                [] => out.push_str(empty),
                [single] => write_formula(out, single),
                _ => {
                    let _ = write!(out, "({op}");
                    for p in parts {
                        out.push(' ');
                        write_formula(out, p);
                    }
                    out.push(')');
                }
            }
        }
        Formula::Implies(a, b) => {
            out.push_str("(=> ");
            write_formula(out, a);
            out.push(' ');
            write_formula(out, b);
            out.push(')');
        }
        Formula::Quant(q, vars, body) => {
            if vars.is_empty() {
                write_formula(out, body);
                return;
            }
            let kw = match q {
                Quantifier::Forall => "forall",
                Quantifier::Exists => "exists",
            };
            let _ = write!(out, "({kw} (");
            for (i, v) in vars.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "({} Int)", symbol(v));
            }
            out.push_str(") ");
            write_formula(out, body);
            out.push(')');
        }
    }
}
