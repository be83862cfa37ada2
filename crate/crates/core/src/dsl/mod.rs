//! Scalar coefficient expressions over spacetime coordinates and the path
//! parameter.
//!
//! Grammar (dsl version 1), loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number | ident | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | tanh
//! ```
//!
//! Identifiers are `x0 .. x{d-1}`, `s`, `pi`, and any named constants.
//! Parsing produces an [`Expr`] tree; [`CoefficientExpr::compile`] resolves
//! identifiers and lowers the tree to a postfix program that is what the
//! engine actually evaluates.

mod parser;
mod program;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use parser::parse_expression;
pub use program::{eval_coefficient, CompiledExpr, SymbolTable};

pub const DSL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },

    #[error("unknown identifier `{name}` in `{source_text}`")]
    UnknownIdentifier { name: String, source_text: String },

    #[error("constant `{0}` shadows a built-in symbol")]
    ReservedName(String),

    #[error("division by zero evaluating `{0}`")]
    DivisionByZero(String),

    #[error("non-finite result evaluating `{0}`")]
    NonFinite(String),
}

impl DslError {
    pub fn column(&self) -> Option<usize> {
        match self {
            Self::Syntax { column, .. } => Some(*column),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Self::Sin),
            "cos" => Some(Self::Cos),
            "exp" => Some(Self::Exp),
            "tanh" => Some(Self::Tanh),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Tanh => "tanh",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Sin => x.sin(),
            Self::Cos => x.cos(),
            Self::Exp => x.exp(),
            Self::Tanh => x.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Ident(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Identifiers referenced anywhere in the tree, in first-use order.
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_identifiers(&mut out);
        out
    }

    fn collect_identifiers<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Ident(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_identifiers(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_identifiers(out);
                b.collect_identifiers(out);
            }
        }
    }
}

/// Canonical form: every compound subexpression parenthesized.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Ident(name) => f.write_str(name),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// A parsed coefficient expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientExpr {
    source: Arc<str>,
    ast: Expr,
}

impl CoefficientExpr {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn compile(&self, symbols: &SymbolTable) -> Result<CompiledExpr, DslError> {
        CompiledExpr::compile(self, symbols)
    }
}
