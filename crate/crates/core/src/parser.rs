//! Recursive-descent parser for rate-kernel expressions in the variables `j` and `k`.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' number)?
//! base   := 'j' | 'k' | number | '(' expr ')' | ('min' | 'max') '(' expr ',' expr ')'
//! ```
//!
//! Numbers are decimal literals (`12`, `0.5`, `.25`); scientific notation is not accepted.
//! The exponent of `^` must be a literal, so `j^0.5` parses and `j^k` does not.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    J,
    K,
}

/// Parsed kernel expression.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelAst {
    Num(f64),
    Var(Var),
    Binary(BinOp, Box<KernelAst>, Box<KernelAst>),
    Pow(Box<KernelAst>, f64),
    Call(Func, Box<KernelAst>, Box<KernelAst>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected {}", expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
    },
    #[error("unknown identifier '{name}' at offset {offset} (allowed: j, k, min, max)")]
    UnknownIdentifier { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } => {
                *offset
            }
        }
    }
}

impl KernelAst {
    /// Evaluates the expression at `(j, k)`. Division by zero and other
    /// non-finite results propagate as IEEE values; callers validate them.
    pub fn eval(&self, j: f64, k: f64) -> f64 {
        match self {
            KernelAst::Num(v) => *v,
            KernelAst::Var(Var::J) => j,
            KernelAst::Var(Var::K) => k,
            KernelAst::Binary(op, lhs, rhs) => {
                let (a, b) = (lhs.eval(j, k), rhs.eval(j, k));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            KernelAst::Pow(base, exp) => base.eval(j, k).powf(*exp),
            KernelAst::Call(func, a, b) => {
                let (a, b) = (a.eval(j, k), b.eval(j, k));
                // f64::min/max silently drop NaN; keep it visible to validation.
                if a.is_nan() || b.is_nan() {
                    return f64::NAN;
                }
                match func {
                    Func::Min => a.min(b),
                    Func::Max => a.max(b),
                }
            }
        }
    }

    /// Returns the expression with `j` and `k` exchanged.
    pub fn swapped(&self) -> KernelAst {
        match self {
            KernelAst::Num(v) => KernelAst::Num(*v),
            KernelAst::Var(Var::J) => KernelAst::Var(Var::K),
            KernelAst::Var(Var::K) => KernelAst::Var(Var::J),
            KernelAst::Binary(op, a, b) => {
                KernelAst::Binary(*op, Box::new(a.swapped()), Box::new(b.swapped()))
            }
            KernelAst::Pow(b, e) => KernelAst::Pow(Box::new(b.swapped()), *e),
            KernelAst::Call(f, a, b) => {
                KernelAst::Call(*f, Box::new(a.swapped()), Box::new(b.swapped()))
            }
        }
    }
}

/// Canonical, fully parenthesized form. Re-parsing it yields an equivalent tree.
impl fmt::Display for KernelAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelAst::Num(v) => write!(f, "{}", format_literal(*v)),
            KernelAst::Var(Var::J) => f.write_str("j"),
            KernelAst::Var(Var::K) => f.write_str("k"),
            KernelAst::Binary(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
            KernelAst::Pow(b, e) => write!(f, "({b})^{}", format_literal(*e)),
            KernelAst::Call(Func::Min, a, b) => write!(f, "min({a},{b})"),
            KernelAst::Call(Func::Max, a, b) => write!(f, "max({a},{b})"),
        }
    }
}

// Literals are nonnegative; Rust's shortest round-trip Display never uses an exponent.
fn format_literal(v: f64) -> String {
    let s = format!("{v}");
    debug_assert!(!s.contains('e'));
    s
}

pub fn parse(source: &str) -> Result<KernelAst, ParseError> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(p.expected(&["expression"]));
    }
    let ast = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.expected(&["operator", "end of input"]));
    }
    Ok(ast)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn expected(&self, what: &[&'static str]) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            expected: what.to_vec(),
        }
    }

    /// Consumes `c` after optional whitespace.
    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8, name: &'static str) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.expected(&[name]))
        }
    }

    fn expr(&mut self) -> Result<KernelAst, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(b'+') {
                BinOp::Add
            } else if self.eat(b'-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = KernelAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<KernelAst, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat(b'*') {
                BinOp::Mul
            } else if self.eat(b'/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.factor()?;
            lhs = KernelAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<KernelAst, ParseError> {
        let base = self.base()?;
        if self.eat(b'^') {
            self.skip_ws();
            match self.number() {
                Some(e) => Ok(KernelAst::Pow(Box::new(base), e)),
                None => Err(self.expected(&["number"])),
            }
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<KernelAst, ParseError> {
        self.skip_ws();
        const BASE: &[&str] = &["'j'", "'k'", "number", "'('", "'min'", "'max'"];
        let Some(c) = self.peek() else {
            return Err(self.expected(BASE));
        };
        if c == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            self.expect(b')', "')'")?;
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number().map(KernelAst::Num).ok_or_else(|| self.expected(&["number"]));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric() || b == b'_') {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
            return match name {
                "j" => Ok(KernelAst::Var(Var::J)),
                "k" => Ok(KernelAst::Var(Var::K)),
                "min" | "max" => {
                    let func = if name == "min" { Func::Min } else { Func::Max };
                    self.expect(b'(', "'('")?;
                    let a = self.expr()?;
                    self.expect(b',', "','")?;
                    let b = self.expr()?;
                    self.expect(b')', "')'")?;
                    Ok(KernelAst::Call(func, Box::new(a), Box::new(b)))
                }
                _ => Err(ParseError::UnknownIdentifier {
                    offset: start,
                    name: name.to_string(),
                }),
            };
        }
        Err(self.expected(BASE))
    }

    /// Decimal literal: digits with at most one '.', at least one digit overall.
    fn number(&mut self) -> Option<f64> {
        let start = self.pos;
        let mut digits = 0;
        let mut dot = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                digits += 1;
            } else if c == b'.' && !dot {
                dot = true;
            } else {
                break;
            }
            self.pos += 1;
        }
        if digits == 0 {
            self.pos = start;
            return None;
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
    }
}
