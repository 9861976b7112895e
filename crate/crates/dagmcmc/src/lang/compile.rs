//! Compiles a parsed model plus data into a [`Dag`].
//!
//! Loops are unrolled against the data, so every array element becomes its
//! own node. Logical relations are not materialised: each use site inlines
//! the defining expression, recursively, until only stochastic nodes,
//! constants and literals remain. Data values referenced by the unrolled
//! relations become named constant nodes; literals are interned by value.

use std::collections::HashMap;

use thiserror::Error;

use super::ast::{BinOp, Expr, Func, ModelAst, Span, Stmt, Var};
use super::rdump::{DataEnvironment, IndexError};
use crate::graph::{Dag, DagBuilder, DistKind, ExprOp, ExprProgram, GraphError, NodeId};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("{span}: `{name}` is not defined by a relation, supplied as data, or a loop index")]
    Undefined { name: String, span: Span },
    #[error("{span}: `{name}` is defined more than once")]
    Redefined { name: String, span: Span },
    #[error("{span}: {message}")]
    ConstExpr { message: String, span: Span },
    #[error("{span}: bad index on `{name}`: {message}")]
    Index { name: String, message: String, span: Span },
    #[error("{span}: `{name}` is NA in the data but is used as a value")]
    MissingData { name: String, span: Span },
    #[error("logical relation `{0}` is defined in terms of itself")]
    LogicalCycle(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A relation expression after loop unrolling: indices are resolved to
/// integers and loop variables are folded away.
#[derive(Debug, Clone)]
enum GExpr {
    Num(f64),
    Ref { name: String, span: Span },
    Neg(Box<GExpr>),
    Bin(BinOp, Box<GExpr>, Box<GExpr>),
    Call(Func, Vec<GExpr>),
}

#[derive(Debug)]
struct GroundStoch {
    base: String,
    indices: Vec<i64>,
    canonical: String,
    dist: DistKind,
    args: Vec<GExpr>,
    span: Span,
}

#[derive(Default)]
struct Unrolled {
    stochs: Vec<GroundStoch>,
    logicals: HashMap<String, GExpr>,
}

fn canonical_name(base: &str, indices: &[i64]) -> String {
    if indices.is_empty() {
        base.to_string()
    } else {
        let list: Vec<String> = indices.iter().map(i64::to_string).collect();
        format!("{}[{}]", base, list.join(","))
    }
}

struct Unroller<'a> {
    data: &'a DataEnvironment,
    bindings: Vec<(String, i64)>,
    out: Unrolled,
}

impl<'a> Unroller<'a> {
    fn binding(&self, name: &str) -> Option<i64> {
        self.bindings.iter().rev().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    /// Evaluates an expression that must reduce to a number at compile time
    /// (loop bounds and index expressions). Loop variables and data values
    /// fold; references to model nodes do not.
    fn eval_const(&self, expr: &Expr) -> Result<f64, CompileError> {
        match expr {
            Expr::Number { value, .. } => Ok(*value),
            Expr::Neg { expr, .. } => Ok(-self.eval_const(expr)?),
            Expr::Binary { op, lhs, rhs, .. } => {
                let l = self.eval_const(lhs)?;
                let r = self.eval_const(rhs)?;
                Ok(match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => l / r,
                })
            }
            Expr::Call { func, args, .. } => {
                let vals: Vec<f64> =
                    args.iter().map(|a| self.eval_const(a)).collect::<Result<_, _>>()?;
                Ok(match func {
                    Func::Pow => vals[0].powf(vals[1]),
                    Func::Logit => (vals[0] / (1.0 - vals[0])).ln(),
                    Func::InvLogit => 1.0 / (1.0 + (-vals[0]).exp()),
                })
            }
            Expr::Var(var) => {
                if var.indices.is_empty() {
                    if let Some(v) = self.binding(&var.name) {
                        return Ok(v as f64);
                    }
                }
                let indices = self.resolve_indices(var)?;
                let entry = self.data.get(&var.name).ok_or_else(|| CompileError::ConstExpr {
                    message: format!(
                        "`{}` must be a fixed value here, but it is not in the data",
                        canonical_name(&var.name, &indices)
                    ),
                    span: var.span,
                })?;
                match entry.element(&indices) {
                    Ok(Some(v)) => Ok(v),
                    Ok(None) => Err(CompileError::ConstExpr {
                        message: format!(
                            "`{}` is NA but is used where a fixed value is required",
                            canonical_name(&var.name, &indices)
                        ),
                        span: var.span,
                    }),
                    Err(e) => Err(index_error(&var.name, var.span, e)),
                }
            }
        }
    }

    fn const_int(&self, expr: &Expr, what: &str) -> Result<i64, CompileError> {
        let v = self.eval_const(expr)?;
        let rounded = v.round();
        if !v.is_finite() || (v - rounded).abs() > 1e-9 {
            return Err(CompileError::ConstExpr {
                message: format!("{what} must be an integer, got {v}"),
                span: expr.span(),
            });
        }
        Ok(rounded as i64)
    }

    fn resolve_indices(&self, var: &Var) -> Result<Vec<i64>, CompileError> {
        var.indices.iter().map(|ix| self.const_int(ix, "an index")).collect()
    }

    fn ground(&self, expr: &Expr) -> Result<GExpr, CompileError> {
        match expr {
            Expr::Number { value, .. } => Ok(GExpr::Num(*value)),
            Expr::Neg { expr, .. } => Ok(GExpr::Neg(Box::new(self.ground(expr)?))),
            Expr::Binary { op, lhs, rhs, .. } => Ok(GExpr::Bin(
                *op,
                Box::new(self.ground(lhs)?),
                Box::new(self.ground(rhs)?),
            )),
            Expr::Call { func, args, .. } => {
                let args: Vec<GExpr> =
                    args.iter().map(|a| self.ground(a)).collect::<Result<_, _>>()?;
                Ok(GExpr::Call(*func, args))
            }
            Expr::Var(var) => {
                if var.indices.is_empty() {
                    if let Some(v) = self.binding(&var.name) {
                        return Ok(GExpr::Num(v as f64));
                    }
                }
                let indices = self.resolve_indices(var)?;
                Ok(GExpr::Ref { name: canonical_name(&var.name, &indices), span: var.span })
            }
        }
    }

    fn walk(&mut self, stmts: &[Stmt]) -> Result<(), CompileError> {
        for stmt in stmts {
            match stmt {
                Stmt::For { var, lo, hi, body, span } => {
                    let lo = self.const_int(lo, "a loop bound")?;
                    let hi = self.const_int(hi, "a loop bound")?;
                    if hi < lo {
                        return Err(CompileError::ConstExpr {
                            message: format!("loop over `{var}` has an empty range {lo}:{hi}"),
                            span: *span,
                        });
                    }
                    for i in lo..=hi {
                        self.bindings.push((var.clone(), i));
                        self.walk(body)?;
                        self.bindings.pop();
                    }
                }
                Stmt::Stochastic { target, dist, args, span } => {
                    let indices = self.resolve_indices(target)?;
                    let canonical = canonical_name(&target.name, &indices);
                    let args: Vec<GExpr> =
                        args.iter().map(|a| self.ground(a)).collect::<Result<_, _>>()?;
                    self.out.stochs.push(GroundStoch {
                        base: target.name.clone(),
                        indices,
                        canonical,
                        dist: *dist,
                        args,
                        span: *span,
                    });
                }
                Stmt::Logical { target, expr, span } => {
                    let indices = self.resolve_indices(target)?;
                    let canonical = canonical_name(&target.name, &indices);
                    let ground = self.ground(expr)?;
                    if self.out.logicals.insert(canonical.clone(), ground).is_some() {
                        return Err(CompileError::Redefined { name: canonical, span: *span });
                    }
                }
            }
        }
        Ok(())
    }
}

fn index_error(name: &str, span: Span, e: IndexError) -> CompileError {
    let message = match e {
        IndexError::RankMismatch { expected, got } => {
            format!("the data has {expected} dimensions but {got} indices were given")
        }
        IndexError::OutOfBounds { axis, index, extent } => {
            format!("index {index} on axis {axis} is outside 1..={extent}")
        }
    };
    CompileError::Index { name: name.to_string(), message, span }
}

struct Resolver<'a> {
    builder: DagBuilder,
    data: &'a DataEnvironment,
    stoch_ids: HashMap<String, NodeId>,
    logicals: &'a HashMap<String, GExpr>,
    data_nodes: HashMap<String, NodeId>,
    inline_stack: Vec<String>,
}

impl<'a> Resolver<'a> {
    fn resolve(&mut self, expr: &GExpr, ops: &mut Vec<ExprOp>) -> Result<(), CompileError> {
        match expr {
            GExpr::Num(v) => {
                let id = self.builder.literal(*v)?;
                ops.push(ExprOp::Load(id));
            }
            GExpr::Neg(e) => {
                self.resolve(e, ops)?;
                ops.push(ExprOp::Neg);
            }
            GExpr::Bin(op, l, r) => {
                self.resolve(l, ops)?;
                self.resolve(r, ops)?;
                ops.push(match op {
                    BinOp::Add => ExprOp::Add,
                    BinOp::Sub => ExprOp::Sub,
                    BinOp::Mul => ExprOp::Mul,
                    BinOp::Div => ExprOp::Div,
                });
            }
            GExpr::Call(func, args) => {
                for a in args {
                    self.resolve(a, ops)?;
                }
                ops.push(match func {
                    Func::Pow => ExprOp::Pow,
                    Func::Logit => ExprOp::Logit,
                    Func::InvLogit => ExprOp::InvLogit,
                });
            }
            GExpr::Ref { name, span } => {
                if let Some(&id) = self.stoch_ids.get(name) {
                    ops.push(ExprOp::Load(id));
                    return Ok(());
                }
                if let Some(def) = self.logicals.get(name) {
                    if self.inline_stack.iter().any(|n| n == name) {
                        return Err(CompileError::LogicalCycle(name.clone()));
                    }
                    self.inline_stack.push(name.clone());
                    self.resolve(def, ops)?;
                    self.inline_stack.pop();
                    return Ok(());
                }
                if let Some(&id) = self.data_nodes.get(name) {
                    ops.push(ExprOp::Load(id));
                    return Ok(());
                }
                let (base, indices) = split_canonical(name);
                if let Some(entry) = self.data.get(base) {
                    return match entry.element(&indices) {
                        Ok(Some(v)) => {
                            let id = self.builder.constant(name, v)?;
                            self.data_nodes.insert(name.clone(), id);
                            ops.push(ExprOp::Load(id));
                            Ok(())
                        }
                        Ok(None) => Err(CompileError::MissingData { name: name.clone(), span: *span }),
                        Err(e) => Err(index_error(base, *span, e)),
                    };
                }
                return Err(CompileError::Undefined { name: name.clone(), span: *span });
            }
        }
        Ok(())
    }
}

fn split_canonical(name: &str) -> (&str, Vec<i64>) {
    match name.split_once('[') {
        None => (name, Vec::new()),
        Some((base, rest)) => {
            let list = rest.trim_end_matches(']');
            let indices = list.split(',').map(|s| s.parse::<i64>().unwrap()).collect();
            (base, indices)
        }
    }
}

/// Compiles a model against its data. The resulting dag holds stochastic
/// nodes (numbered in declaration order) and constant nodes only.
pub fn compile_graph(ast: &ModelAst, data: &DataEnvironment) -> Result<Dag, CompileError> {
    let mut unroller = Unroller { data, bindings: Vec::new(), out: Unrolled::default() };
    unroller.walk(&ast.stmts)?;
    let unrolled = unroller.out;

    let mut builder = DagBuilder::new();
    let mut stoch_ids: HashMap<String, NodeId> = HashMap::new();
    for stoch in &unrolled.stochs {
        if stoch_ids.contains_key(&stoch.canonical) {
            return Err(CompileError::Redefined { name: stoch.canonical.clone(), span: stoch.span });
        }
        if unrolled.logicals.contains_key(&stoch.canonical) {
            // the parser rejects name-level mixing, so this is unreachable
            // for parsed models, but hand-built ASTs can hit it
            return Err(CompileError::Redefined { name: stoch.canonical.clone(), span: stoch.span });
        }
        let observed = match data.get(&stoch.base) {
            None => None,
            Some(entry) => match entry.element(&stoch.indices) {
                Ok(v) => v,
                Err(e) => return Err(index_error(&stoch.base, stoch.span, e)),
            },
        };
        let id = builder.stochastic(&stoch.canonical, observed)?;
        stoch_ids.insert(stoch.canonical.clone(), id);
    }

    let mut resolver = Resolver {
        builder,
        data,
        stoch_ids,
        logicals: &unrolled.logicals,
        data_nodes: HashMap::new(),
        inline_stack: Vec::new(),
    };
    for stoch in &unrolled.stochs {
        let mut params: Vec<ExprProgram> = Vec::with_capacity(2);
        for arg in &stoch.args {
            let mut ops = Vec::new();
            resolver.resolve(arg, &mut ops)?;
            params.push(ExprProgram::new(ops)?);
        }
        let id = resolver.stoch_ids[&stoch.canonical];
        let [a, b]: [ExprProgram; 2] = params.try_into().expect("arity checked by the parser");
        resolver.builder.set_dist_raw(id, stoch.dist, [a, b])?;
    }

    Ok(resolver.builder.build()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeKind;
    use crate::lang::{parse_data, parse_model};

    fn compile(model: &str, data: &str) -> Result<Dag, CompileError> {
        let ast = parse_model(model).unwrap();
        let env = parse_data(data).unwrap();
        compile_graph(&ast, &env)
    }

    #[test]
    fn literals_become_interned_constants() {
        // one stochastic node plus interned 0 and 1
        let dag = compile("model { x ~ dnorm(0, 1) }", "list()").unwrap();
        assert_eq!(dag.len(), 3);
        assert_eq!(dag.stochastic_count(), 1);
        assert_eq!(dag.constant_count(), 2);
        let x = dag.node_by_name("x").unwrap();
        assert_eq!(dag.parents(x).len(), 2);
    }

    #[test]
    fn loops_unroll_against_data() {
        let dag = compile(
            "model {
                for (i in 1:N) { y[i] ~ dnorm(mu, 1) }
                mu ~ dnorm(0, 1.0E-6)
            }",
            "list(N = 3, y = c(0.1, 0.2, NA))",
        )
        .unwrap();
        // y[3] is NA, so it stays a parameter
        assert_eq!(dag.kind(dag.node_by_name("y[1]").unwrap()), NodeKind::Observed);
        assert_eq!(dag.kind(dag.node_by_name("y[3]").unwrap()), NodeKind::Parameter);
        let mu = dag.node_by_name("mu").unwrap();
        assert_eq!(dag.children(mu).len(), 3);
        assert_eq!(dag.parameters().len(), 2);
    }

    #[test]
    fn logical_relations_are_inlined_not_nodes() {
        let dag = compile(
            "model {
                for (i in 1:2) {
                    y[i] ~ dnorm(mu[i], tau)
                    mu[i] <- a + b * x[i]
                }
                a ~ dnorm(0, 1)
                b ~ dnorm(0, 1)
                tau <- pow(sigma, -2)
                sigma ~ dunif(0, 10)
            }",
            "list(y = c(1, 2), x = c(0.5, 1.5))",
        )
        .unwrap();
        assert!(dag.node_by_name("mu[1]").is_none());
        assert!(dag.node_by_name("tau").is_none());
        let y1 = dag.node_by_name("y[1]").unwrap();
        let names: Vec<&str> = dag.parents(y1).iter().map(|&p| dag.name(p)).collect();
        assert!(names.contains(&"a"));
        assert!(names.contains(&"b"));
        assert!(names.contains(&"sigma"));
        assert!(names.contains(&"x[1]"));
        // graph keeps only stochastic and constant nodes
        for id in dag.node_ids() {
            assert!(dag.kind(id).is_stochastic() || dag.kind(id) == NodeKind::Constant);
        }
    }

    #[test]
    fn chained_logicals_inline_recursively() {
        let dag = compile(
            "model {
                y ~ dnorm(m2, 1)
                m2 <- m1 * 2
                m1 <- a + 1
                a ~ dnorm(0, 1)
            }",
            "list(y = 1)",
        )
        .unwrap();
        let y = dag.node_by_name("y").unwrap();
        let a = dag.node_by_name("a").unwrap();
        assert!(dag.parents(y).contains(&a));
        // m2 inlines to (a + 1) * 2: check by evaluating the mean program
        let mut values = dag.base_values();
        values[a.index()] = 3.0;
        let mean = dag.dist(y).unwrap().params[0].eval(&values);
        assert_eq!(mean, 8.0);
    }

    #[test]
    fn logit_link_inlines_inverse_logit() {
        let dag = compile(
            "model {
                r ~ dbin(p, 10)
                logit(p) <- alpha
                alpha ~ dnorm(0, 1)
            }",
            "list(r = 4)",
        )
        .unwrap();
        let r = dag.node_by_name("r").unwrap();
        let alpha = dag.node_by_name("alpha").unwrap();
        let mut values = dag.base_values();
        values[alpha.index()] = 0.0;
        let p = dag.dist(r).unwrap().params[0].eval(&values);
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn data_indices_fold_in_index_position() {
        // nested indexing: group[i] picks which mean each observation uses
        let dag = compile(
            "model {
                for (i in 1:3) { y[i] ~ dnorm(mu[group[i]], 1) }
                for (g in 1:2) { mu[g] ~ dnorm(0, 0.001) }
            }",
            "list(y = c(1, 2, 3), group = c(1, 2, 1))",
        )
        .unwrap();
        let mu1 = dag.node_by_name("mu[1]").unwrap();
        let mu2 = dag.node_by_name("mu[2]").unwrap();
        assert_eq!(dag.children(mu1).len(), 2);
        assert_eq!(dag.children(mu2).len(), 1);
    }

    #[test]
    fn undefined_names_are_reported() {
        let err = compile("model { y ~ dnorm(mystery, 1) }", "list(y = 1)").unwrap_err();
        assert!(matches!(err, CompileError::Undefined { ref name, .. } if name == "mystery"));
    }

    #[test]
    fn out_of_range_data_index_is_reported() {
        let err = compile(
            "model { for (i in 1:4) { y[i] ~ dnorm(0, 1) } }",
            "list(y = c(1, 2, 3))",
        )
        .unwrap_err();
        assert!(matches!(err, CompileError::Index { .. }), "{err}");
    }

    #[test]
    fn logical_cycles_are_reported() {
        let err = compile(
            "model {
                y ~ dnorm(a, 1)
                a <- b + 1
                b <- a - 1
            }",
            "list(y = 1)",
        )
        .unwrap_err();
        assert!(matches!(err, CompileError::LogicalCycle(_)));
    }

    #[test]
    fn redefined_elements_are_reported() {
        let err = compile(
            "model {
                for (i in 1:2) { y[1] ~ dnorm(0, 1) }
            }",
            "list()",
        )
        .unwrap_err();
        assert!(matches!(err, CompileError::Redefined { .. }));
    }

    #[test]
    fn na_used_as_value_is_reported() {
        let err = compile(
            "model { y ~ dnorm(x, 1) }",
            "list(y = 1, x = NA)",
        )
        .unwrap_err();
        assert!(matches!(err, CompileError::MissingData { .. }));
    }

    #[test]
    fn non_integer_loop_bound_is_reported() {
        let err = compile("model { for (i in 1:2.5) { y[i] ~ dnorm(0, 1) } }", "list()")
            .unwrap_err();
        assert!(err.to_string().contains("must be an integer"));
    }

    #[test]
    fn loop_bounds_may_be_expressions() {
        let dag = compile(
            "model { for (i in 1:N - 1) { y[i] ~ dnorm(0, 1) } }",
            "list(N = 4)",
        )
        .unwrap();
        assert_eq!(dag.stochastic_count(), 3);
    }
}
