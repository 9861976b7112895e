//! Abstract syntax for the model language.
//!
//! Equality on AST types ignores source spans, so a pretty-printed and
//! re-parsed model compares equal to the original.

use std::fmt;

use crate::graph::DistKind;

/// Source position (1-based line and column).
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Built-in scalar functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Pow,
    Logit,
    InvLogit,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Pow => "pow",
            Func::Logit => "logit",
            Func::InvLogit => "ilogit",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "pow" => Some(Func::Pow),
            "logit" => Some(Func::Logit),
            "ilogit" => Some(Func::InvLogit),
            _ => None,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            Func::Logit | Func::InvLogit => 1,
        }
    }
}

/// A possibly indexed name, e.g. `alpha0` or `r[i]` or `y[i, j]`.
#[derive(Debug, Clone)]
pub struct Var {
    pub name: String,
    pub indices: Vec<Expr>,
    pub span: Span,
}

impl PartialEq for Var {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.indices == other.indices
    }
}

#[derive(Debug, Clone)]
pub enum Expr {
    Number { value: f64, span: Span },
    Var(Var),
    Neg { expr: Box<Expr>, span: Span },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr>, span: Span },
    Call { func: Func, args: Vec<Expr>, span: Span },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Number { span, .. }
            | Expr::Neg { span, .. }
            | Expr::Binary { span, .. }
            | Expr::Call { span, .. } => *span,
            Expr::Var(v) => v.span,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Neg { .. } => 3,
            _ => 4,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let needs_parens = self.precedence() < min;
        if needs_parens {
            f.write_str("(")?;
        }
        match self {
            Expr::Number { value, .. } => write!(f, "{value}")?,
            Expr::Var(v) => write!(f, "{v}")?,
            Expr::Neg { expr, .. } => {
                f.write_str("-")?;
                expr.fmt_prec(f, 4)?;
            }
            Expr::Binary { op, lhs, rhs, .. } => {
                lhs.fmt_prec(f, op.precedence())?;
                write!(f, " {} ", op.symbol())?;
                rhs.fmt_prec(f, op.precedence() + 1)?;
            }
            Expr::Call { func, args, .. } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.fmt_prec(f, 0)?;
                }
                f.write_str(")")?;
            }
        }
        if needs_parens {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Expr::Number { value: a, .. }, Expr::Number { value: b, .. }) => a == b,
            (Expr::Var(a), Expr::Var(b)) => a == b,
            (Expr::Neg { expr: a, .. }, Expr::Neg { expr: b, .. }) => a == b,
            (
                Expr::Binary { op: oa, lhs: la, rhs: ra, .. },
                Expr::Binary { op: ob, lhs: lb, rhs: rb, .. },
            ) => oa == ob && la == lb && ra == rb,
            (Expr::Call { func: fa, args: aa, .. }, Expr::Call { func: fb, args: ab, .. }) => {
                fa == fb && aa == ab
            }
            _ => false,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.indices.is_empty() {
            f.write_str("[")?;
            for (i, ix) in self.indices.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                ix.fmt_prec(f, 0)?;
            }
            f.write_str("]")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone)]
pub enum Stmt {
    /// `target ~ dist(args...)`
    Stochastic { target: Var, dist: DistKind, args: Vec<Expr>, span: Span },
    /// `target <- expr`. A `logit(target) <- expr` form in the source is
    /// normalised by the parser to `target <- ilogit(expr)`.
    Logical { target: Var, expr: Expr, span: Span },
    /// `for (var in lo:hi) { body }`
    For { var: String, lo: Expr, hi: Expr, body: Vec<Stmt>, span: Span },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::Stochastic { span, .. } | Stmt::Logical { span, .. } | Stmt::For { span, .. } => {
                *span
            }
        }
    }

    fn fmt_indented(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match self {
            Stmt::Stochastic { target, dist, args, .. } => {
                write!(f, "{pad}{target} ~ {dist}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                writeln!(f, ")")
            }
            Stmt::Logical { target, expr, .. } => writeln!(f, "{pad}{target} <- {expr}"),
            Stmt::For { var, lo, hi, body, .. } => {
                writeln!(f, "{pad}for ({var} in {lo}:{hi}) {{")?;
                for stmt in body {
                    stmt.fmt_indented(f, depth + 1)?;
                }
                writeln!(f, "{pad}}}")
            }
        }
    }
}

impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                Stmt::Stochastic { target: ta, dist: da, args: aa, .. },
                Stmt::Stochastic { target: tb, dist: db, args: ab, .. },
            ) => ta == tb && da == db && aa == ab,
            (
                Stmt::Logical { target: ta, expr: ea, .. },
                Stmt::Logical { target: tb, expr: eb, .. },
            ) => ta == tb && ea == eb,
            (
                Stmt::For { var: va, lo: la, hi: ha, body: ba, .. },
                Stmt::For { var: vb, lo: lb, hi: hb, body: bb, .. },
            ) => va == vb && la == lb && ha == hb && ba == bb,
            _ => false,
        }
    }
}

/// A parsed model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAst {
    pub stmts: Vec<Stmt>,
}

impl ModelAst {
    /// Counts of stochastic (`~`) and logical (`<-`) relations, including
    /// those nested inside loops (each counted once, not per iteration).
    pub fn relation_counts(&self) -> (usize, usize) {
        fn walk(stmts: &[Stmt], s: &mut usize, l: &mut usize) {
            for stmt in stmts {
                match stmt {
                    Stmt::Stochastic { .. } => *s += 1,
                    Stmt::Logical { .. } => *l += 1,
                    Stmt::For { body, .. } => walk(body, s, l),
                }
            }
        }
        let (mut s, mut l) = (0, 0);
        walk(&self.stmts, &mut s, &mut l);
        (s, l)
    }

    /// Number of `for` loops, counting nested loops.
    pub fn loop_count(&self) -> usize {
        fn walk(stmts: &[Stmt], n: &mut usize) {
            for stmt in stmts {
                if let Stmt::For { body, .. } = stmt {
                    *n += 1;
                    walk(body, n);
                }
            }
        }
        let mut n = 0;
        walk(&self.stmts, &mut n);
        n
    }
}

/// The pretty printer emits a canonical layout that re-parses to an AST
/// equal to the original.
impl fmt::Display for ModelAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model {{")?;
        for stmt in &self.stmts {
            stmt.fmt_indented(f, 1)?;
        }
        writeln!(f, "}}")
    }
}
