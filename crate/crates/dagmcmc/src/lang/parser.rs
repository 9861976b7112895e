//! Recursive descent parser for the model language.
//!
//! Grammar (whitespace and `#` comments are insignificant):
//!
//! ```text
//! model    := "model" "{" stmt* "}"
//! stmt     := for | relation
//! for      := "for" "(" ident "in" expr ":" expr ")" "{" stmt* "}"
//! relation := var "~" dist "(" expr ("," expr)* ")"
//!           | var "<-" expr
//!           | "logit" "(" var ")" "<-" expr
//! var      := ident [ "[" expr ("," expr)* "]" ]
//! expr     := term (("+" | "-") term)*
//! term     := factor (("*" | "/") factor)*
//! factor   := "-" factor | atom
//! atom     := number | "(" expr ")" | func "(" expr ("," expr)* ")" | var
//! ```
//!
//! The `logit(p) <- e` link form is normalised during parsing to
//! `p <- ilogit(e)`, so downstream passes never see a link target.

use std::collections::HashMap;

use thiserror::Error;

use super::ast::{BinOp, Expr, Func, ModelAst, Span, Stmt, Var};
use super::lexer::{tokenize, Tok, Token};
use crate::graph::DistKind;

#[derive(Debug, Clone, Error)]
#[error("parse error at line {line}, column {col}: {message}")]
pub struct ParseError {
    pub message: String,
    pub line: u32,
    pub col: u32,
}

impl ParseError {
    pub(crate) fn at(span: Span, message: String) -> ParseError {
        ParseError { message, line: span.line, col: span.col }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: String) -> ParseError {
        ParseError::at(self.peek().span, message)
    }

    fn expect(&mut self, want: Tok, context: &str) -> Result<Token, ParseError> {
        if self.peek().tok == want {
            Ok(self.next())
        } else {
            Err(self.err(format!(
                "expected {} {}, found {}",
                want.describe(),
                context,
                self.peek().tok.describe()
            )))
        }
    }

    fn expect_ident(&mut self, context: &str) -> Result<(String, Span), ParseError> {
        match self.peek().tok.clone() {
            Tok::Ident(name) => {
                let span = self.next().span;
                Ok((name, span))
            }
            other => Err(self.err(format!("expected identifier {context}, found {}", other.describe()))),
        }
    }

    fn keyword(&mut self, word: &str, context: &str) -> Result<Span, ParseError> {
        match &self.peek().tok {
            Tok::Ident(name) if name == word => Ok(self.next().span),
            other => {
                let d = other.describe();
                Err(self.err(format!("expected `{word}` {context}, found {d}")))
            }
        }
    }

    fn at_ident(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(name) if name == word)
    }

    fn model(&mut self) -> Result<ModelAst, ParseError> {
        self.keyword("model", "to open the model")?;
        self.expect(Tok::LBrace, "after `model`")?;
        let stmts = self.block_body()?;
        self.expect(Tok::RBrace, "to close the model")?;
        if self.peek().tok != Tok::Eof {
            return Err(self.err(format!(
                "expected end of input after the model block, found {}",
                self.peek().tok.describe()
            )));
        }
        Ok(ModelAst { stmts })
    }

    fn block_body(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let mut stmts = Vec::new();
        while self.peek().tok != Tok::RBrace {
            if self.peek().tok == Tok::Eof {
                return Err(self.err("expected `}` to close a block, found end of input".into()));
            }
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        if self.at_ident("for") {
            return self.for_stmt();
        }
        self.relation()
    }

    fn for_stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.keyword("for", "to open a loop")?;
        self.expect(Tok::LParen, "after `for`")?;
        let (var, _) = self.expect_ident("as the loop index")?;
        self.keyword("in", "after the loop index")?;
        let lo = self.expr()?;
        self.expect(Tok::Colon, "between the loop bounds")?;
        let hi = self.expr()?;
        self.expect(Tok::RParen, "after the loop range")?;
        self.expect(Tok::LBrace, "to open the loop body")?;
        let body = self.block_body()?;
        self.expect(Tok::RBrace, "to close the loop body")?;
        Ok(Stmt::For { var, lo, hi, body, span })
    }

    fn relation(&mut self) -> Result<Stmt, ParseError> {
        // `logit(p) <- expr` is a link form, only valid with `<-`.
        if self.at_ident("logit") && self.tokens[self.pos + 1].tok == Tok::LParen {
            let span = self.next().span;
            self.expect(Tok::LParen, "after `logit`")?;
            let target = self.var()?;
            self.expect(Tok::RParen, "to close the link target")?;
            self.expect(Tok::Arrow, "after a `logit(...)` link target")?;
            let expr = self.expr()?;
            let expr_span = expr.span();
            return Ok(Stmt::Logical {
                target,
                expr: Expr::Call { func: Func::InvLogit, args: vec![expr], span: expr_span },
                span,
            });
        }

        let target = self.var()?;
        let span = target.span;
        match self.peek().tok {
            Tok::Tilde => {
                self.next();
                let (dist, args) = self.dist_call()?;
                Ok(Stmt::Stochastic { target, dist, args, span })
            }
            Tok::Arrow => {
                self.next();
                let expr = self.expr()?;
                Ok(Stmt::Logical { target, expr, span })
            }
            _ => Err(self.err(format!(
                "expected `~` or `<-` after `{}`, found {}",
                target,
                self.peek().tok.describe()
            ))),
        }
    }

    fn dist_call(&mut self) -> Result<(DistKind, Vec<Expr>), ParseError> {
        let (name, span) = self.expect_ident("naming a distribution")?;
        let dist = DistKind::from_name(&name).ok_or_else(|| {
            ParseError::at(span, format!("unknown distribution `{name}` (expected dnorm, dbin or dunif)"))
        })?;
        self.expect(Tok::LParen, "after the distribution name")?;
        let args = self.expr_list(Tok::RParen)?;
        self.expect(Tok::RParen, "to close the distribution arguments")?;
        if args.len() != dist.arity() {
            return Err(ParseError::at(
                span,
                format!("{} expects {} arguments, found {}", dist.name(), dist.arity(), args.len()),
            ));
        }
        Ok((dist, args))
    }

    fn var(&mut self) -> Result<Var, ParseError> {
        let (name, span) = self.expect_ident("naming a node")?;
        let mut indices = Vec::new();
        if self.peek().tok == Tok::LBracket {
            self.next();
            indices = self.expr_list(Tok::RBracket)?;
            self.expect(Tok::RBracket, "to close the index list")?;
            if indices.is_empty() {
                return Err(ParseError::at(span, format!("`{name}[]` has an empty index list")));
            }
        }
        Ok(Var { name, indices, span })
    }

    fn expr_list(&mut self, close: Tok) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if self.peek().tok == close {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.peek().tok == Tok::Comma {
                self.next();
            } else {
                return Ok(args);
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let span = self.next().span;
            let rhs = self.term()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), span };
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let span = self.next().span;
            let rhs = self.factor()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), span };
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek().tok == Tok::Minus {
            let span = self.next().span;
            let expr = self.factor()?;
            return Ok(Expr::Neg { expr: Box::new(expr), span });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().tok.clone() {
            Tok::Number(value) => {
                let span = self.next().span;
                Ok(Expr::Number { value, span })
            }
            Tok::LParen => {
                self.next();
                let e = self.expr()?;
                self.expect(Tok::RParen, "to close the parenthesised expression")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.tokens[self.pos + 1].tok == Tok::LParen {
                    let span = self.next().span;
                    let func = Func::from_name(&name).ok_or_else(|| {
                        ParseError::at(span, format!("unknown function `{name}` (expected pow, logit or ilogit)"))
                    })?;
                    self.expect(Tok::LParen, "after the function name")?;
                    let args = self.expr_list(Tok::RParen)?;
                    self.expect(Tok::RParen, "to close the function arguments")?;
                    if args.len() != func.arity() {
                        return Err(ParseError::at(
                            span,
                            format!("{} expects {} arguments, found {}", func.name(), func.arity(), args.len()),
                        ));
                    }
                    Ok(Expr::Call { func, args, span })
                } else {
                    Ok(Expr::Var(self.var()?))
                }
            }
            other => Err(self.err(format!("expected an expression, found {}", other.describe()))),
        }
    }
}

/// Semantic checks that do not need data: loop index scoping and the rule
/// that no name is targeted by both `~` and `<-`.
fn validate(ast: &ModelAst) -> Result<(), ParseError> {
    fn scopes(stmts: &[Stmt], bound: &mut Vec<String>) -> Result<(), ParseError> {
        for stmt in stmts {
            if let Stmt::For { var, body, span, .. } = stmt {
                if bound.iter().any(|b| b == var) {
                    return Err(ParseError::at(
                        *span,
                        format!("loop index `{var}` is already bound in an enclosing loop"),
                    ));
                }
                bound.push(var.clone());
                scopes(body, bound)?;
                bound.pop();
            }
        }
        Ok(())
    }
    let mut bound = Vec::new();
    scopes(&ast.stmts, &mut bound)?;

    // true = stochastic target, false = logical target
    fn targets(stmts: &[Stmt], seen: &mut HashMap<String, bool>) -> Result<(), ParseError> {
        for stmt in stmts {
            let (name, stochastic, span) = match stmt {
                Stmt::Stochastic { target, span, .. } => (&target.name, true, span),
                Stmt::Logical { target, span, .. } => (&target.name, false, span),
                Stmt::For { body, .. } => {
                    targets(body, seen)?;
                    continue;
                }
            };
            if let Some(&was_stochastic) = seen.get(name) {
                if was_stochastic != stochastic {
                    return Err(ParseError::at(
                        *span,
                        format!("`{name}` is the target of both `~` and `<-` relations"),
                    ));
                }
            } else {
                seen.insert(name.clone(), stochastic);
            }
        }
        Ok(())
    }
    let mut seen = HashMap::new();
    targets(&ast.stmts, &mut seen)
}

/// Parses model source into an AST, normalising `logit(p) <- e` targets and
/// rejecting scope and arity violations.
pub fn parse_model(src: &str) -> Result<ModelAst, ParseError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser { tokens, pos: 0 };
    let ast = parser.model()?;
    validate(&ast)?;
    Ok(ast)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_relation_per_form() {
        let ast = parse_model(
            "model {
                x ~ dnorm(0, 1)
                y <- x + 1
                logit(p) <- 2 * x
            }",
        )
        .unwrap();
        assert_eq!(ast.stmts.len(), 3);
        match &ast.stmts[2] {
            Stmt::Logical { target, expr, .. } => {
                assert_eq!(target.name, "p");
                assert!(matches!(expr, Expr::Call { func: Func::InvLogit, .. }));
            }
            other => panic!("expected logical relation, got {other:?}"),
        }
    }

    #[test]
    fn precedence_binds_mul_over_add() {
        let ast = parse_model("model { y <- a + b * c }").unwrap();
        let Stmt::Logical { expr, .. } = &ast.stmts[0] else { panic!() };
        let Expr::Binary { op: BinOp::Add, rhs, .. } = expr else {
            panic!("expected top-level `+`, got {expr:?}")
        };
        assert!(matches!(**rhs, Expr::Binary { op: BinOp::Mul, .. }));
    }

    #[test]
    fn unary_minus_binds_tighter_than_mul() {
        let ast = parse_model("model { y <- -a * b }").unwrap();
        let Stmt::Logical { expr, .. } = &ast.stmts[0] else { panic!() };
        let Expr::Binary { op: BinOp::Mul, lhs, .. } = expr else { panic!() };
        assert!(matches!(**lhs, Expr::Neg { .. }));
    }

    #[test]
    fn unknown_distribution_is_reported_with_position() {
        let err = parse_model("model {\n  x ~ dgamma(1, 1)\n}").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.to_string().contains("unknown distribution `dgamma`"));
    }

    #[test]
    fn wrong_arity_is_reported() {
        let err = parse_model("model { x ~ dnorm(0) }").unwrap_err();
        assert!(err.to_string().contains("dnorm expects 2 arguments, found 1"));
    }

    #[test]
    fn rebinding_a_loop_index_is_rejected() {
        let err = parse_model(
            "model { for (i in 1:3) { for (i in 1:2) { x[i] ~ dnorm(0, 1) } } }",
        )
        .unwrap_err();
        assert!(err.to_string().contains("already bound"));
    }

    #[test]
    fn sibling_loops_may_reuse_an_index() {
        parse_model(
            "model {
                for (i in 1:2) { x[i] ~ dnorm(0, 1) }
                for (i in 1:2) { y[i] ~ dnorm(0, 1) }
            }",
        )
        .unwrap();
    }

    #[test]
    fn mixed_relation_targets_are_rejected() {
        let err = parse_model("model { x ~ dnorm(0, 1) \n x <- 2 }").unwrap_err();
        assert!(err.to_string().contains("both `~` and `<-`"));
    }

    #[test]
    fn missing_close_brace_points_at_eof() {
        let err = parse_model("model { x ~ dnorm(0, 1)").unwrap_err();
        assert!(err.to_string().contains("found end of input"));
    }

    #[test]
    fn pretty_print_round_trips() {
        let src = "model {
            for (i in 1:N) {
                r[i] ~ dbin(p[i], n[i])
                logit(p[i]) <- alpha0 + alpha1 * x1[i] + b[i]
            }
            alpha0 ~ dnorm(0.0, 1.0E-6)
            sigma ~ dunif(0, 10)
            tau <- 1 / pow(sigma, 2)
            z <- -(a + b) / (c - d)
        }";
        let ast = parse_model(src).unwrap();
        let printed = ast.to_string();
        let reparsed = parse_model(&printed).unwrap();
        assert_eq!(ast, reparsed);
        // printing is a fixed point
        assert_eq!(printed, reparsed.to_string());
    }
}
