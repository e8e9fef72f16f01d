//! Lexer and recursive-descent parser for `.hyp` input files.

use crate::logic::{CmpOp, Formula, Quantifier, Term, Var};

use super::{FrontendError, ProgramAst, QuantifierAst, SourceFile, Spec, Stmt};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

// Longest symbols first so that `:=` wins over `:` and `->` over `-`.
const SYMBOLS: &[&str] = &[
    ":=", "==", "!=", "<=", ">=", "&&", "||", "->", "{", "}", "(", ")", ";", ",", ".", "@", "<",
    ">", "+", "-", "*", "/", "%", "!",
];

fn lex(src: &str) -> Result<Vec<Token>, FrontendError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start_col = col;
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            let word: String = chars[start..i].iter().collect();
            tokens.push(Token { tok: Tok::Ident(word), line, col: start_col });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            col += i - start;
            let digits: String = chars[start..i].iter().collect();
            let value = digits.parse::<i64>().map_err(|_| FrontendError::Syntax {
                line,
                col: start_col,
                message: format!("integer literal `{digits}` out of range"),
            })?;
            tokens.push(Token { tok: Tok::Int(value), line, col: start_col });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                i += sym.len();
                col += sym.len();
                tokens.push(Token { tok: Tok::Sym(sym), line, col: start_col });
            }
            None => {
                return Err(FrontendError::Syntax {
                    line,
                    col,
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    tokens.push(Token { tok: Tok::Eof, line, col });
    Ok(tokens)
}

/// Whether trace-indexed variables (`x@P`) or plain program variables are
/// expected in expressions.
#[derive(Clone, Copy, PartialEq)]
enum Scope {
    Program,
    SpecBody,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, FrontendError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.tokens[self.pos];
        (t.line, t.col)
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let (line, col) = self.here();
        Err(FrontendError::Syntax { line, col, message: message.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(name) if !is_keyword(&name) => {
                self.bump();
                Ok(name)
            }
            other => self.error(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn file(&mut self) -> PResult<SourceFile> {
        let mut programs = Vec::new();
        while self.is_kw("prog") {
            programs.push(self.program()?);
        }
        if matches!(self.peek(), Tok::Eof) {
            return Err(FrontendError::NoSpecification);
        }
        let spec = self.spec()?;
        if !matches!(self.peek(), Tok::Eof) {
            return self.error(format!("unexpected {} after specification", describe(self.peek())));
        }
        Ok(SourceFile { programs, spec })
    }

    fn program(&mut self) -> PResult<ProgramAst> {
        let (line, col) = self.here();
        self.expect_kw("prog")?;
        let name = self.ident()?;
        let body = self.block()?;
        Ok(ProgramAst { name, body, line, col })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_sym("{")?;
        let mut stmts = Vec::new();
        while !self.is_sym("}") {
            if matches!(self.peek(), Tok::Eof) {
                return self.error("unterminated block");
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok(stmts)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let kw = match self.peek() {
            Tok::Ident(w) => w.clone(),
            other => return self.error(format!("expected statement, found {}", describe(other))),
        };
        match kw.as_str() {
            "havoc" | "input" => {
                self.bump();
                let x = self.ident()?;
                self.expect_sym(";")?;
                Ok(Stmt::Havoc(Var::new(x)))
            }
            "assume" => {
                self.bump();
                self.expect_sym("(")?;
                let c = self.cond(Scope::Program)?;
                self.expect_sym(")")?;
                self.expect_sym(";")?;
                Ok(Stmt::Assume(c))
            }
            "if" => self.if_stmt(),
            "while" => {
                self.bump();
                self.expect_sym("(")?;
                let c = self.cond(Scope::Program)?;
                self.expect_sym(")")?;
                Ok(Stmt::While(c, self.block()?))
            }
            "loop" => {
                self.bump();
                Ok(Stmt::Loop(self.block()?))
            }
            "either" => {
                self.bump();
                let first = self.block()?;
                self.expect_kw("or")?;
                let second = self.block()?;
                Ok(Stmt::Either(first, second))
            }
            "observe" => {
                self.bump();
                let label = self.ident()?;
                self.expect_sym(";")?;
                Ok(Stmt::Observe(label))
            }
            "skip" => {
                self.bump();
                self.expect_sym(";")?;
                Ok(Stmt::Skip)
            }
            _ if !is_keyword(&kw) => {
                let x = self.ident()?;
                self.expect_sym(":=")?;
                let e = self.expr(Scope::Program)?;
                self.expect_sym(";")?;
                Ok(Stmt::Assign(Var::new(x), e))
            }
            _ => self.error(format!("unexpected keyword `{kw}`")),
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        self.expect_kw("if")?;
        self.expect_sym("(")?;
        let c = self.cond(Scope::Program)?;
        self.expect_sym(")")?;
        let then = self.block()?;
        let otherwise = if self.is_kw("else") {
            self.bump();
            if self.is_kw("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::If(c, then, otherwise))
    }

    fn spec(&mut self) -> PResult<Spec> {
        let mut quantifiers = Vec::new();
        loop {
            let (line, col) = self.here();
            let kind = if self.is_kw("forall") {
                Quantifier::Forall
            } else if self.is_kw("exists") {
                Quantifier::Exists
            } else {
                break;
            };
            self.bump();
            let trace = self.ident()?;
            self.expect_kw("in")?;
            let program = self.ident()?;
            self.expect_kw("obs")?;
            self.expect_sym("{")?;
            let mut labels = Vec::new();
            if !self.is_sym("}") {
                labels.push(self.ident()?);
                while self.eat_sym(",") {
                    labels.push(self.ident()?);
                }
            }
            self.expect_sym("}")?;
            self.expect_sym(".")?;
            quantifiers.push(QuantifierAst { kind, trace, program, labels, line, col });
        }
        if quantifiers.is_empty() {
            return self.error(format!(
                "expected `prog`, `forall` or `exists`, found {}",
                describe(self.peek())
            ));
        }
        self.expect_kw("always")?;
        self.expect_sym("(")?;
        let body = self.cond(Scope::SpecBody)?;
        self.expect_sym(")")?;
        self.eat_sym(";");
        Ok(Spec { quantifiers, body })
    }

    fn cond(&mut self, scope: Scope) -> PResult<Formula> {
        let lhs = self.disjunction(scope)?;
        if self.eat_sym("->") {
            let rhs = self.cond(scope)?;
            return Ok(Formula::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self, scope: Scope) -> PResult<Formula> {
        let mut parts = vec![self.conjunction(scope)?];
        while self.eat_sym("||") {
            parts.push(self.conjunction(scope)?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::Or(parts) })
    }

    fn conjunction(&mut self, scope: Scope) -> PResult<Formula> {
        let mut parts = vec![self.negation(scope)?];
        while self.eat_sym("&&") {
            parts.push(self.negation(scope)?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::And(parts) })
    }

    fn negation(&mut self, scope: Scope) -> PResult<Formula> {
        if self.eat_sym("!") {
            return Ok(Formula::Not(Box::new(self.negation(scope)?)));
        }
        if self.is_kw("true") {
            self.bump();
            return Ok(Formula::Bool(true));
        }
        if self.is_kw("false") {
            self.bump();
            return Ok(Formula::Bool(false));
        }
        if self.is_sym("(") {
            // Either a parenthesised condition or the start of an arithmetic
            // comparison such as `(x + 1) > 2`; try the condition first.
            let save = self.pos;
            self.bump();
            if let Ok(inner) = self.cond(scope) {
                if self.eat_sym(")") && !self.at_arith_continuation() {
                    return Ok(inner);
                }
            }
            self.pos = save;
        }
        self.comparison(scope)
    }

    fn at_arith_continuation(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Sym("==" | "!=" | "<" | "<=" | ">" | ">=" | "+" | "-" | "*" | "/" | "%")
        )
    }

    fn comparison(&mut self, scope: Scope) -> PResult<Formula> {
        let lhs = self.expr(scope)?;
        let op = match self.peek() {
            Tok::Sym("==") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            other => return self.error(format!("expected comparison, found {}", describe(other))),
        };
        self.bump();
        let rhs = self.expr(scope)?;
        Ok(Formula::Cmp(op, lhs, rhs))
    }

    fn expr(&mut self, scope: Scope) -> PResult<Term> {
        let mut acc = self.product(scope)?;
        loop {
            if self.eat_sym("+") {
                acc = Term::Add(Box::new(acc), Box::new(self.product(scope)?));
            } else if self.eat_sym("-") {
                acc = Term::Sub(Box::new(acc), Box::new(self.product(scope)?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self, scope: Scope) -> PResult<Term> {
        let mut acc = self.unary(scope)?;
        loop {
            let (line, col) = self.here();
            if self.eat_sym("*") {
                let rhs = self.unary(scope)?;
                acc = match (literal_value(&acc), literal_value(&rhs)) {
                    (Some(c), _) => Term::Mul(c, Box::new(rhs)),
                    (None, Some(c)) => Term::Mul(c, Box::new(acc)),
                    (None, None) => {
                        return Err(FrontendError::Nonlinear { line, col });
                    }
                };
            } else if self.is_sym("/") || self.is_sym("%") {
                let is_div = self.is_sym("/");
                self.bump();
                let rhs = self.unary(scope)?;
                let d = match literal_value(&rhs) {
                    Some(0) => {
                        return Err(FrontendError::Syntax {
                            line,
                            col,
                            message: "division by zero".into(),
                        })
                    }
                    Some(d) => d,
                    None => {
                        return Err(FrontendError::Syntax {
                            line,
                            col,
                            message: "divisor must be an integer literal".into(),
                        })
                    }
                };
                acc = if is_div { Term::Div(Box::new(acc), d) } else { Term::Mod(Box::new(acc), d) };
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self, scope: Scope) -> PResult<Term> {
        if self.eat_sym("-") {
            return Ok(Term::Neg(Box::new(self.unary(scope)?)));
        }
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Term::Int(n))
            }
            Tok::Sym("(") => {
                self.bump();
                let t = self.expr(scope)?;
                self.expect_sym(")")?;
                Ok(t)
            }
            Tok::Ident(_) => {
                let (line, col) = self.here();
                let name = self.ident()?;
                let indexed = matches!(self.peek(), Tok::Sym("@"));
                match (scope, indexed) {
                    (Scope::Program, false) => Ok(Term::var(name)),
                    (Scope::SpecBody, true) => {
                        self.bump();
                        let trace = self.ident()?;
                        Ok(Term::var(format!("{trace}.{name}")))
                    }
                    (Scope::Program, true) => Err(FrontendError::Syntax {
                        line,
                        col,
                        message: "trace-indexed variables are only allowed in the specification".into(),
                    }),
                    (Scope::SpecBody, false) => Err(FrontendError::Syntax {
                        line,
                        col,
                        message: format!("variable `{name}` must be indexed by a trace, as in `{name}@P`"),
                    }),
                }
            }
            other => self.error(format!("expected expression, found {}", describe(&other))),
        }
    }
}

/// Value of a term built only from literals, if it has one.
fn literal_value(t: &Term) -> Option<i64> {
    if !t.free_vars().is_empty() {
        return None;
    }
    t.eval(&Default::default()).ok()
}

fn is_keyword(w: &str) -> bool {
    matches!(
        w,
        "prog" | "havoc" | "input" | "assume" | "if" | "else" | "while" | "loop" | "either" | "or"
            | "observe" | "skip" | "forall" | "exists" | "in" | "obs" | "always" | "true" | "false"
    )
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(w) => format!("`{w}`"),
        Tok::Int(n) => format!("`{n}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

pub fn parse_source(src: &str) -> Result<SourceFile, FrontendError> {
    let tokens = lex(src)?;
    Parser { tokens, pos: 0 }.file()
}
