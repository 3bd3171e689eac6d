//! Polynomial + `pwl` expression language for user-supplied vector fields.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' ['-'] integer)?
//! atom  := number | ident | 'pwl' '(' expr (';' | ',') expr ',' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers are the state variables `x1..xn` and the declared parameters.
//! Division, negative exponents and the breakpoint slopes of `pwl` must be
//! state-free; they fold to constants at load time, which keeps every
//! expression a polynomial (per PWL region) in the state.

use nalgebra::DMatrix;

use super::{Branch, Region};
use crate::error::{FlowError, Result};
use crate::jets::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
    /// Chua characteristic of `arg`; `slot` indexes the region label.
    Pwl {
        slot: usize,
        arg: Box<Expr>,
        a: f64,
        b: f64,
    },
    /// Derivative of `Pwl` with respect to its argument (piecewise constant).
    PwlSlope {
        slot: usize,
        a: f64,
        b: f64,
    },
}

fn add(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Expr::Const(x), _) if *x == 0.0 => r,
        (_, Expr::Const(y)) if *y == 0.0 => l,
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ => Expr::Add(Box::new(l), Box::new(r)),
    }
}

fn sub(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (_, Expr::Const(y)) if *y == 0.0 => l,
        (Expr::Const(x), _) if *x == 0.0 => neg(r),
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ => Expr::Sub(Box::new(l), Box::new(r)),
    }
}

fn mul(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Expr::Const(x), _) | (_, Expr::Const(x)) if *x == 0.0 => Expr::Const(0.0),
        (Expr::Const(x), _) if *x == 1.0 => r,
        (_, Expr::Const(y)) if *y == 1.0 => l,
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ => Expr::Mul(Box::new(l), Box::new(r)),
    }
}

fn neg(e: Expr) -> Expr {
    match e {
        Expr::Const(x) => Expr::Const(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn pow(e: Expr, n: u32) -> Expr {
    match (e, n) {
        (_, 0) => Expr::Const(1.0),
        (e, 1) => e,
        (Expr::Const(x), n) => Expr::Const(x.powi(n as i32)),
        (e, n) => Expr::Pow(Box::new(e), n),
    }
}

impl Expr {
    pub fn eval<T: Scalar>(&self, x: &[T], branches: &[Branch]) -> T {
        match self {
            Expr::Const(c) => x[0].lift(*c),
            Expr::Var(i) => x[*i],
            Expr::Add(l, r) => l.eval(x, branches) + r.eval(x, branches),
            Expr::Sub(l, r) => l.eval(x, branches) - r.eval(x, branches),
            Expr::Mul(l, r) => match (&**l, &**r) {
                (Expr::Const(c), e) | (e, Expr::Const(c)) => e.eval(x, branches) * *c,
                _ => l.eval(x, branches) * r.eval(x, branches),
            },
            Expr::Neg(e) => -e.eval(x, branches),
            Expr::Pow(e, n) => e.eval(x, branches).powi(*n),
            Expr::Pwl { slot, arg, a, b } => branches[*slot].pwl(arg.eval(x, branches), *a, *b),
            Expr::PwlSlope { slot, a, b } => x[0].lift(branches[*slot].slope(*a, *b)),
        }
    }

    /// Symbolic partial derivative with respect to state variable `j`.
    pub fn derivative(&self, j: usize) -> Expr {
        match self {
            Expr::Const(_) | Expr::PwlSlope { .. } => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == j { 1.0 } else { 0.0 }),
            Expr::Add(l, r) => add(l.derivative(j), r.derivative(j)),
            Expr::Sub(l, r) => sub(l.derivative(j), r.derivative(j)),
            Expr::Mul(l, r) => add(mul(l.derivative(j), (**r).clone()), mul((**l).clone(), r.derivative(j))),
            Expr::Neg(e) => neg(e.derivative(j)),
            Expr::Pow(e, n) => mul(mul(Expr::Const(*n as f64), pow((**e).clone(), n - 1)), e.derivative(j)),
            Expr::Pwl { slot, arg, a, b } => mul(
                Expr::PwlSlope {
                    slot: *slot,
                    a: *a,
                    b: *b,
                },
                arg.derivative(j),
            ),
        }
    }

    /// Polynomial degree in the state, treating each PWL branch as affine.
    pub fn degree(&self) -> u32 {
        match self {
            Expr::Const(_) | Expr::PwlSlope { .. } => 0,
            Expr::Var(_) => 1,
            Expr::Add(l, r) | Expr::Sub(l, r) => l.degree().max(r.degree()),
            Expr::Mul(l, r) => l.degree() + r.degree(),
            Expr::Neg(e) => e.degree(),
            Expr::Pow(e, n) => e.degree() * n,
            Expr::Pwl { arg, .. } => arg.degree(),
        }
    }

    fn collect_pwl_args(&self, out: &mut Vec<(usize, Expr)>) {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::PwlSlope { .. } => {}
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) => {
                l.collect_pwl_args(out);
                r.collect_pwl_args(out);
            }
            Expr::Neg(e) | Expr::Pow(e, _) => e.collect_pwl_args(out),
            Expr::Pwl { slot, arg, .. } => {
                arg.collect_pwl_args(out);
                out.push((*slot, (**arg).clone()));
            }
        }
    }
}

/// Symbols visible to the parser.
pub struct SymbolTable<'a> {
    pub dim: usize,
    pub params: &'a [(String, f64)],
}

impl SymbolTable<'_> {
    fn lookup(&self, name: &str) -> Option<Expr> {
        if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            if idx >= 1 && idx <= self.dim {
                return Some(Expr::Var(idx - 1));
            }
        }
        self.params
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| Expr::Const(*v))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Lexed>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut k = i + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    i = k;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| FlowError::Parse {
                line: l0,
                column: c0,
                message: format!("malformed number `{text}`"),
            })?;
            col += i - start;
            out.push(Lexed {
                tok: Tok::Num(v),
                line: l0,
                col: c0,
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            let text: String = chars[start..i].iter().collect();
            out.push(Lexed {
                tok: Tok::Ident(text),
                line: l0,
                col: c0,
            });
            continue;
        }
        let op = match c {
            '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' | ';' => c,
            '\u{2212}' => '-',
            '\u{00b7}' | '\u{22c5}' | '\u{00d7}' => '*',
            _ => {
                return Err(FlowError::Parse {
                    line: l0,
                    column: c0,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push(Lexed {
            tok: Tok::Op(op),
            line: l0,
            col: c0,
        });
        i += 1;
        col += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Lexed>,
    pos: usize,
    syms: &'a SymbolTable<'a>,
    next_slot: &'a mut usize,
    end: (usize, usize),
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|l| (l.line, l.col)).unwrap_or(self.end)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        let (line, column) = self.here();
        Err(FlowError::Parse {
            line,
            column,
            message: message.into(),
        })
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            self.err(format!("expected `{op}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = add(lhs, self.term()?);
            } else if self.eat('-') {
                lhs = sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = mul(lhs, self.unary()?);
            } else if self.eat('/') {
                let at = self.here();
                let rhs = self.unary()?;
                match rhs {
                    Expr::Const(c) if c != 0.0 => {
                        lhs = match lhs {
                            Expr::Const(a) => Expr::Const(a / c),
                            other => mul(other, Expr::Const(1.0 / c)),
                        }
                    }
                    Expr::Const(_) => {
                        return Err(FlowError::Parse {
                            line: at.0,
                            column: at.1,
                            message: "division by zero".into(),
                        })
                    }
                    _ => {
                        return Err(FlowError::Parse {
                            line: at.0,
                            column: at.1,
                            message: "divisor must not depend on the state".into(),
                        })
                    }
                }
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(neg(self.unary()?));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let negative = self.eat('-');
        let n = match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && *v >= 0.0 && *v <= 64.0 => *v as u32,
            _ => return self.err("exponent must be an integer literal"),
        };
        self.pos += 1;
        if negative {
            match base {
                Expr::Const(c) => Ok(Expr::Const(c.powi(-(n as i32)))),
                _ => self.err("negative exponents need a state-free base"),
            }
        } else {
            Ok(pow(base, n))
        }
    }

    fn constant(&mut self, what: &str) -> Result<f64> {
        let at = self.here();
        match self.expr()? {
            Expr::Const(c) => Ok(c),
            _ => Err(FlowError::Parse {
                line: at.0,
                column: at.1,
                message: format!("{what} must not depend on the state"),
            }),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let (line, column) = self.here();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) if name == "pwl" => {
                self.pos += 1;
                self.expect('(')?;
                let arg = self.expr()?;
                if !self.eat(';') {
                    self.expect(',')?;
                }
                let a = self.constant("pwl slope `a`")?;
                self.expect(',')?;
                let b = self.constant("pwl slope `b`")?;
                self.expect(')')?;
                let slot = *self.next_slot;
                *self.next_slot += 1;
                Ok(Expr::Pwl {
                    slot,
                    arg: Box::new(arg),
                    a,
                    b,
                })
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.syms.lookup(&name).ok_or(FlowError::UnknownSymbol {
                    symbol: name,
                    line,
                    column,
                })
            }
            Some(Tok::Op(c)) => self.err(format!("unexpected `{c}`")),
            None => self.err("unexpected end of expression"),
        }
    }
}

/// Parses one expression. `next_slot` numbers `pwl` occurrences across a
/// whole system (inner occurrences first).
pub fn parse_expr(src: &str, syms: &SymbolTable<'_>, next_slot: &mut usize) -> Result<Expr> {
    let toks = lex(src)?;
    let end = {
        let line = src.lines().count().max(1);
        let col = src.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
        (line, col)
    };
    let mut p = Parser {
        toks,
        pos: 0,
        syms,
        next_slot,
        end,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

/// Vector field given by one expression per component, with a symbolic Jacobian.
#[derive(Debug, Clone)]
pub struct ExprSystem {
    rhs: Vec<Expr>,
    jac: Vec<Vec<Expr>>,
    /// Argument of each `pwl` occurrence, indexed by slot.
    switching: Vec<Expr>,
}

impl ExprSystem {
    pub fn new(rhs: Vec<Expr>) -> Self {
        let n = rhs.len();
        let jac = rhs.iter().map(|f| (0..n).map(|j| f.derivative(j)).collect()).collect();
        let mut args = Vec::new();
        for f in &rhs {
            f.collect_pwl_args(&mut args);
        }
        args.sort_by_key(|(slot, _)| *slot);
        ExprSystem {
            rhs,
            jac,
            switching: args.into_iter().map(|(_, e)| e).collect(),
        }
    }

    pub fn components(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn pwl_slots(&self) -> usize {
        self.switching.len()
    }

    pub fn is_piecewise_affine(&self) -> bool {
        self.rhs.iter().all(|f| f.degree() <= 1)
    }

    /// Switching function values; slots are numbered inner-first, so each
    /// argument only needs branches already resolved.
    pub fn switching_values(&self, x: &[f64]) -> Vec<f64> {
        let mut branches = Vec::with_capacity(self.switching.len());
        let mut values = Vec::with_capacity(self.switching.len());
        for arg in &self.switching {
            let s = arg.eval(x, &branches);
            values.push(s);
            branches.push(Branch::classify(s));
        }
        values
    }

    fn branches(&self, x: &[f64], region: Option<&Region>) -> Vec<Branch> {
        match region {
            Some(r) => r.branches().to_vec(),
            None => self.switching_values(x).into_iter().map(Branch::classify).collect(),
        }
    }

    pub fn eval<T: Scalar>(&self, x: &[T], region: Option<&Region>) -> Vec<T> {
        let branches = if self.switching.is_empty() {
            Vec::new()
        } else {
            let values: Vec<f64> = x.iter().map(|v| v.value()).collect();
            self.branches(&values, region)
        };
        self.rhs.iter().map(|f| f.eval(x, &branches)).collect()
    }

    pub fn jacobian(&self, x: &[f64], region: Option<&Region>) -> DMatrix<f64> {
        let n = self.rhs.len();
        let branches = self.branches(x, region);
        DMatrix::from_fn(n, n, |i, j| self.jac[i][j].eval(x, &branches))
    }
}
