//! Scalar field expressions used to declare drifts, costs, diffusion entries
//! and Lyapunov candidates.
//!
//! Grammar (whitespace is insignificant, no implicit multiplication):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-" factor | power
//! power  := atom ("^" factor)?
//! atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Identifiers are state coordinates `x0, x1, ...`, action features
//! `a0, a1, ...` and the functions `exp log sqrt abs tanh sin cos min max`.
//! `^` binds tightest and is right-associative, so `-x0^2 = -(x0^2)` and
//! `2^3^2 = 512`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}`{}", .offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    UnknownIdentifier { name: String, offset: Option<usize> },

    #[error("domain error: {op} of {value}")]
    Domain { op: &'static str, value: f64 },

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Sin,
    Cos,
}

impl UnaryOp {
    fn function(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Self::Exp,
            "log" => Self::Log,
            "sqrt" => Self::Sqrt,
            "abs" => Self::Abs,
            "tanh" => Self::Tanh,
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Neg => "-",
            Self::Exp => "exp",
            Self::Log => "log",
            Self::Sqrt => "sqrt",
            Self::Abs => "abs",
            Self::Tanh => "tanh",
            Self::Sin => "sin",
            Self::Cos => "cos",
        }
    }

    pub fn apply(self, v: f64) -> Result<f64, ExprError> {
        Ok(match self {
            Self::Neg => -v,
            Self::Exp => libm::exp(v),
            Self::Log => {
                if v < 0.0 {
                    return Err(ExprError::Domain {
                        op: "log",
                        value: v,
                    });
                }
                libm::log(v)
            }
            Self::Sqrt => {
                if v < 0.0 {
                    return Err(ExprError::Domain {
                        op: "sqrt",
                        value: v,
                    });
                }
                libm::sqrt(v)
            }
            Self::Abs => libm::fabs(v),
            Self::Tanh => libm::tanh(v),
            Self::Sin => libm::sin(v),
            Self::Cos => libm::cos(v),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

impl BinaryOp {
    pub fn apply(self, l: f64, r: f64) -> Result<f64, ExprError> {
        Ok(match self {
            Self::Add => l + r,
            Self::Sub => l - r,
            Self::Mul => l * r,
            Self::Div => {
                if r == 0.0 {
                    return Err(ExprError::Domain {
                        op: "division",
                        value: l,
                    });
                }
                l / r
            }
            Self::Pow => {
                // libm::pow(0, 0) is 1.
                let v = libm::pow(l, r);
                if v.is_nan() && !l.is_nan() && !r.is_nan() {
                    return Err(ExprError::Domain {
                        op: "power",
                        value: l,
                    });
                }
                v
            }
            Self::Min => {
                if l <= r {
                    l
                } else {
                    r
                }
            }
            Self::Max => {
                if l >= r {
                    l
                } else {
                    r
                }
            }
        })
    }
}

/// Expression tree. Immutable after parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// State coordinate `x<k>`.
    State(usize),
    /// Action feature `a<k>` of the acting player.
    Feature(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// Variable bindings for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub a: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn new(x: &'a [f64], a: &'a [f64]) -> Self {
        Self { x, a }
    }

    pub fn state(x: &'a [f64]) -> Self {
        Self { x, a: &[] }
    }
}

/// Parses `text` into an expression tree.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr()?;
    match parser.peek() {
        Tok {
            kind: Kind::End, ..
        } => Ok(expr),
        tok => Err(syntax(tok.offset, "unexpected trailing input")),
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        parse(text)
    }

    pub fn constant(v: f64) -> Self {
        Self::Num(v)
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<f64, ExprError> {
        match self {
            Self::Num(v) => Ok(*v),
            Self::State(k) => env
                .x
                .get(*k)
                .copied()
                .ok_or_else(|| ExprError::UnboundVariable(format!("x{k}"))),
            Self::Feature(k) => env
                .a
                .get(*k)
                .copied()
                .ok_or_else(|| ExprError::UnboundVariable(format!("a{k}"))),
            Self::Unary(op, e) => op.apply(e.eval(env)?),
            Self::Binary(op, l, r) => op.apply(l.eval(env)?, r.eval(env)?),
        }
    }

    /// Largest `x<k>` index plus one (0 when no state variable occurs).
    pub fn state_arity(&self) -> usize {
        self.fold_index(&|e| match e {
            Self::State(k) => Some(*k),
            _ => None,
        })
    }

    /// Largest `a<k>` index plus one.
    pub fn feature_arity(&self) -> usize {
        self.fold_index(&|e| match e {
            Self::Feature(k) => Some(*k),
            _ => None,
        })
    }

    fn fold_index(&self, pick: &dyn Fn(&Expr) -> Option<usize>) -> usize {
        let own = pick(self).map_or(0, |k| k + 1);
        let children = match self {
            Self::Unary(_, e) => e.fold_index(pick),
            Self::Binary(_, l, r) => l.fold_index(pick).max(r.fold_index(pick)),
            _ => 0,
        };
        own.max(children)
    }

    /// Checks that every variable is declared: `x<k>` with `k < dim` and
    /// `a<k>` with `k < features`.
    pub fn check_scope(&self, dim: usize, features: usize) -> Result<(), ExprError> {
        let s = self.state_arity();
        if s > dim {
            return Err(ExprError::UnknownIdentifier {
                name: format!("x{}", s - 1),
                offset: None,
            });
        }
        let f = self.feature_arity();
        if f > features {
            return Err(ExprError::UnknownIdentifier {
                name: format!("a{}", f - 1),
                offset: None,
            });
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        self.state_arity() == 0 && self.feature_arity() == 0
    }
}

/// Canonical, fully parenthesized form. Re-parsing it yields an equivalent tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            Self::Num(v) => write!(f, "{v:?}"),
            Self::State(k) => write!(f, "x{k}"),
            Self::Feature(k) => write!(f, "a{k}"),
            Self::Unary(UnaryOp::Neg, e) => write!(f, "(-{e})"),
            Self::Unary(op, e) => write!(f, "{}({e})", op.name()),
            Self::Binary(op, l, r) => match op {
                BinaryOp::Add => write!(f, "({l}+{r})"),
                BinaryOp::Sub => write!(f, "({l}-{r})"),
                BinaryOp::Mul => write!(f, "({l}*{r})"),
                BinaryOp::Div => write!(f, "({l}/{r})"),
                BinaryOp::Pow => write!(f, "({l}^{r})"),
                BinaryOp::Min => write!(f, "min({l},{r})"),
                BinaryOp::Max => write!(f, "max({l},{r})"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone, PartialEq)]
struct Tok {
    kind: Kind,
    offset: usize,
}

fn syntax(offset: usize, message: &str) -> ExprError {
    ExprError::Syntax {
        offset,
        message: message.to_string(),
    }
}

fn lex(text: &str) -> Result<Vec<Tok>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Kind::Plus,
            b'-' => Kind::Minus,
            b'*' => Kind::Star,
            b'/' => Kind::Slash,
            b'^' => Kind::Caret,
            b'(' => Kind::LParen,
            b')' => Kind::RParen,
            b',' => Kind::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| syntax(start, "malformed number"))?;
                out.push(Tok {
                    kind: Kind::Num(v),
                    offset: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Tok {
                    kind: Kind::Ident(text[start..i].to_string()),
                    offset: start,
                });
                continue;
            }
            _ => return Err(syntax(start, "unexpected character")),
        };
        i += 1;
        out.push(Tok {
            kind,
            offset: start,
        });
    }
    out.push(Tok {
        kind: Kind::End,
        offset: text.len(),
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].clone();
        if t.kind != Kind::End {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: Kind, message: &str) -> Result<(), ExprError> {
        let t = self.bump();
        if t.kind == kind {
            Ok(())
        } else {
            Err(syntax(t.offset, message))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().kind {
                Kind::Plus => BinaryOp::Add,
                Kind::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().kind {
                Kind::Star => BinaryOp::Mul,
                Kind::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.peek().kind == Kind::Minus {
            self.bump();
            let inner = self.factor()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek().kind == Kind::Caret {
            self.bump();
            let exponent = self.factor()?;
            return Ok(Expr::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let tok = self.bump();
        match tok.kind {
            Kind::Num(v) => Ok(Expr::Num(v)),
            Kind::LParen => {
                let e = self.expr()?;
                self.expect(Kind::RParen, "expected `)`")?;
                Ok(e)
            }
            Kind::Ident(name) => {
                if self.peek().kind == Kind::LParen {
                    self.bump();
                    self.call(&name, tok.offset)
                } else {
                    variable(&name, tok.offset)
                }
            }
            Kind::End => Err(syntax(tok.offset, "unexpected end of input")),
            _ => Err(syntax(tok.offset, "expected a number, variable or `(`")),
        }
    }

    fn call(&mut self, name: &str, offset: usize) -> Result<Expr, ExprError> {
        let fold = match name {
            "min" => Some(BinaryOp::Min),
            "max" => Some(BinaryOp::Max),
            _ => None,
        };
        let unary = UnaryOp::function(name);
        if fold.is_none() && unary.is_none() {
            return Err(ExprError::UnknownIdentifier {
                name: name.to_string(),
                offset: Some(offset),
            });
        }
        let mut args = Vec::new();
        args.push(self.expr()?);
        while self.peek().kind == Kind::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(Kind::RParen, "expected `,` or `)`")?;
        if let Some(op) = unary {
            if args.len() != 1 {
                return Err(syntax(offset, "function takes exactly one argument"));
            }
            let arg = args.pop().expect("one argument");
            return Ok(Expr::Unary(op, Box::new(arg)));
        }
        let op = fold.expect("min or max");
        if args.len() < 2 {
            return Err(syntax(offset, "min/max take at least two arguments"));
        }
        let mut it = args.into_iter();
        let first = it.next().expect("nonempty");
        Ok(it.fold(first, |acc, e| Expr::Binary(op, Box::new(acc), Box::new(e))))
    }
}

fn variable(name: &str, offset: usize) -> Result<Expr, ExprError> {
    let unknown = || ExprError::UnknownIdentifier {
        name: name.to_string(),
        offset: Some(offset),
    };
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(
            if UnaryOp::function(name).is_some() || name == "min" || name == "max" {
                syntax(offset + name.len(), "expected `(` after function name")
            } else {
                unknown()
            },
        );
    }
    let k: usize = digits.parse().map_err(|_| unknown())?;
    match head {
        "x" => Ok(Expr::State(k)),
        "a" => Ok(Expr::Feature(k)),
        _ => Err(unknown()),
    }
}
