//! Directed acyclic graph representation of a compiled model.
//!
//! A [`Dag`] holds only stochastic and constant nodes. Logical relations in
//! the source model are inlined into the parameter expressions of the
//! stochastic nodes that use them, so an edge always runs from a node to a
//! stochastic node whose distribution parameters mention it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde_json::{json, Value};
use thiserror::Error;

/// Identifier of a node in a [`Dag`]. Stochastic nodes are numbered first,
/// in model declaration order; constant nodes follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub(crate) fn new(index: usize) -> NodeId {
        NodeId(index as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Unobserved stochastic node: sampled by the engine.
    Parameter,
    /// Stochastic node bound to a data value.
    Observed,
    /// Fixed value from data or a literal in the model text.
    Constant,
}

impl NodeKind {
    pub fn is_stochastic(self) -> bool {
        matches!(self, NodeKind::Parameter | NodeKind::Observed)
    }

    fn label(self) -> &'static str {
        match self {
            NodeKind::Parameter => "parameter",
            NodeKind::Observed => "observed",
            NodeKind::Constant => "constant",
        }
    }
}

/// Distribution families understood by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistKind {
    /// `dnorm(mean, precision)`
    Normal,
    /// `dbin(prob, size)`
    Binomial,
    /// `dunif(lower, upper)`
    Uniform,
}

impl DistKind {
    pub fn name(self) -> &'static str {
        match self {
            DistKind::Normal => "dnorm",
            DistKind::Binomial => "dbin",
            DistKind::Uniform => "dunif",
        }
    }

    pub fn from_name(name: &str) -> Option<DistKind> {
        match name {
            "dnorm" => Some(DistKind::Normal),
            "dbin" => Some(DistKind::Binomial),
            "dunif" => Some(DistKind::Uniform),
            _ => None,
        }
    }

    /// Number of distribution arguments. All supported families take two.
    pub fn arity(self) -> usize {
        2
    }

    /// Whether the support is a set of integers rather than an interval.
    pub fn is_discrete(self) -> bool {
        matches!(self, DistKind::Binomial)
    }
}

impl fmt::Display for DistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One operation of a compiled expression program (reverse Polish order).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExprOp {
    /// Push the current value of a node.
    Load(NodeId),
    /// Push a literal that was folded at compile time (loop bounds etc.).
    Push(f64),
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    /// `pow(base, exponent)`
    Pow,
    /// log-odds of the top of stack
    Logit,
    /// inverse logit of the top of stack
    InvLogit,
}

pub(crate) const MAX_EXPR_STACK: usize = 64;

/// A distribution parameter expression, compiled to a small stack program
/// that evaluates against the full node value vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprProgram {
    ops: Vec<ExprOp>,
}

impl ExprProgram {
    /// Validates stack discipline: every operator has its operands, the
    /// stack never exceeds [`MAX_EXPR_STACK`], and exactly one value remains.
    pub fn new(ops: Vec<ExprOp>) -> Result<ExprProgram, GraphError> {
        let mut height: usize = 0;
        for op in &ops {
            match op {
                ExprOp::Load(_) | ExprOp::Push(_) => {
                    height += 1;
                    if height > MAX_EXPR_STACK {
                        return Err(GraphError::BadProgram("expression too deep".into()));
                    }
                }
                ExprOp::Add | ExprOp::Sub | ExprOp::Mul | ExprOp::Div | ExprOp::Pow => {
                    if height < 2 {
                        return Err(GraphError::BadProgram("operand stack underflow".into()));
                    }
                    height -= 1;
                }
                ExprOp::Neg | ExprOp::Logit | ExprOp::InvLogit => {
                    if height < 1 {
                        return Err(GraphError::BadProgram("operand stack underflow".into()));
                    }
                }
            }
        }
        if height != 1 {
            return Err(GraphError::BadProgram(format!(
                "program leaves {height} values on the stack, expected 1"
            )));
        }
        Ok(ExprProgram { ops })
    }

    pub fn ops(&self) -> &[ExprOp] {
        &self.ops
    }

    /// Node ids loaded by this program, in first-use order, deduplicated.
    pub fn references(&self) -> Vec<NodeId> {
        let mut seen = Vec::new();
        for op in &self.ops {
            if let ExprOp::Load(id) = op {
                if !seen.contains(id) {
                    seen.push(*id);
                }
            }
        }
        seen
    }

    /// Evaluates against `values`, the node value vector of the owning dag.
    pub fn eval(&self, values: &[f64]) -> f64 {
        let mut stack = [0.0f64; MAX_EXPR_STACK];
        let mut top = 0usize;
        for op in &self.ops {
            match *op {
                ExprOp::Load(id) => {
                    stack[top] = values[id.index()];
                    top += 1;
                }
                ExprOp::Push(v) => {
                    stack[top] = v;
                    top += 1;
                }
                ExprOp::Add => {
                    top -= 1;
                    stack[top - 1] += stack[top];
                }
                ExprOp::Sub => {
                    top -= 1;
                    stack[top - 1] -= stack[top];
                }
                ExprOp::Mul => {
                    top -= 1;
                    stack[top - 1] *= stack[top];
                }
                ExprOp::Div => {
                    top -= 1;
                    stack[top - 1] /= stack[top];
                }
                ExprOp::Pow => {
                    top -= 1;
                    stack[top - 1] = stack[top - 1].powf(stack[top]);
                }
                ExprOp::Neg => stack[top - 1] = -stack[top - 1],
                ExprOp::Logit => {
                    let p = stack[top - 1];
                    stack[top - 1] = (p / (1.0 - p)).ln();
                }
                ExprOp::InvLogit => {
                    let x = stack[top - 1];
                    stack[top - 1] = if x >= 0.0 {
                        1.0 / (1.0 + (-x).exp())
                    } else {
                        let e = x.exp();
                        e / (1.0 + e)
                    };
                }
            }
        }
        stack[0]
    }
}

/// Distribution attached to a stochastic node.
#[derive(Debug, Clone, PartialEq)]
pub struct DistSpec {
    pub kind: DistKind,
    /// Parameter expressions in declaration order (two for every family).
    pub params: [ExprProgram; 2],
}

impl DistSpec {
    /// Evaluates both parameter expressions against a value vector.
    pub fn param_values(&self, values: &[f64]) -> [f64; 2] {
        [self.params[0].eval(values), self.params[1].eval(values)]
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("invalid node name `{0}`: names start with a letter")]
    InvalidName(String),
    #[error("model graph has a cycle through `{0}`")]
    Cycle(String),
    #[error("node `{0}` is not an unobserved parameter")]
    NotAParameter(String),
    #[error("stochastic node `{0}` has no distribution")]
    MissingDistribution(String),
    #[error("constant node `{0}` is not finite")]
    NonFiniteConstant(String),
    #[error("observed node `{0}` is not finite")]
    NonFiniteObservation(String),
    #[error("malformed expression program: {0}")]
    BadProgram(String),
    #[error("node id {0} is out of range")]
    UnknownNode(u32),
}

/// Compiled model graph. Construct one with [`DagBuilder`] or by compiling
/// model source with [`crate::lang::compile_graph`].
#[derive(Debug, Clone)]
pub struct Dag {
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    dists: Vec<Option<DistSpec>>,
    /// Constant and observed values; NaN for parameters.
    values: Vec<f64>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    depths: Vec<u32>,
    params: Vec<NodeId>,
    by_name: HashMap<String, NodeId>,
    families: BTreeMap<String, Vec<NodeId>>,
}

impl Dag {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.index()]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.kinds[id.index()]
    }

    pub fn dist(&self, id: NodeId) -> Option<&DistSpec> {
        self.dists[id.index()].as_ref()
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id.index()]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.index()]
    }

    pub fn depth(&self, id: NodeId) -> u32 {
        self.depths[id.index()]
    }

    /// Unobserved stochastic nodes in canonical (declaration) order.
    pub fn parameters(&self) -> &[NodeId] {
        &self.params
    }

    pub fn is_parameter(&self, id: NodeId) -> bool {
        self.kinds[id.index()] == NodeKind::Parameter
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    /// All stochastic nodes sharing a base name, e.g. `family("b")` returns
    /// `b[1] .. b[N]`. A scalar name is a family of one.
    pub fn family(&self, base: &str) -> &[NodeId] {
        self.families.get(base).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn family_names(&self) -> impl Iterator<Item = &str> {
        self.families.keys().map(String::as_str)
    }

    /// Node value vector with constants and observations filled in and NaN
    /// for every parameter. Starting point for building a chain state.
    pub fn base_values(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.names.len()).map(NodeId::new)
    }

    pub fn stochastic_count(&self) -> usize {
        self.kinds.iter().filter(|k| k.is_stochastic()).count()
    }

    pub fn observed_count(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| matches!(k, NodeKind::Observed))
            .count()
    }

    pub fn constant_count(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| matches!(k, NodeKind::Constant))
            .count()
    }

    /// JSON description of the graph: nodes with kind, depth, value and
    /// distribution, plus an explicit edge list.
    pub fn to_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .node_ids()
            .map(|id| {
                let mut n = json!({
                    "id": id.index(),
                    "name": self.name(id),
                    "kind": self.kind(id).label(),
                    "depth": self.depth(id),
                    "parents": self.parents(id).iter().map(|p| p.index()).collect::<Vec<_>>(),
                    "children": self.children(id).iter().map(|c| c.index()).collect::<Vec<_>>(),
                });
                if !self.kind(id).is_stochastic() || self.kind(id) == NodeKind::Observed {
                    n["value"] = json!(self.values[id.index()]);
                }
                if let Some(dist) = self.dist(id) {
                    n["distribution"] = json!(dist.kind.name());
                }
                n
            })
            .collect();
        let mut edges = Vec::new();
        for id in self.node_ids() {
            for c in self.children(id) {
                edges.push(json!([id.index(), c.index()]));
            }
        }
        json!({ "nodes": nodes, "edges": edges })
    }
}

/// Node depths plus the unobserved parameters grouped by depth.
#[derive(Debug, Clone)]
pub struct DepthIndex {
    depths: Vec<u32>,
    param_sets: BTreeMap<u32, Vec<NodeId>>,
    max_param_depth: u32,
}

impl DepthIndex {
    pub fn depth(&self, id: NodeId) -> u32 {
        self.depths[id.index()]
    }

    /// Depth sets over unobserved parameters, keyed by depth. Each set keeps
    /// canonical node order.
    pub fn param_sets(&self) -> &BTreeMap<u32, Vec<NodeId>> {
        &self.param_sets
    }

    /// Deepest depth holding an unobserved parameter; 0 when there are none.
    pub fn max_param_depth(&self) -> u32 {
        self.max_param_depth
    }
}

/// Groups the dag's parameters by topological depth. Constants sit at depth
/// zero and every other node is one deeper than its deepest parent.
pub fn topological_depth(dag: &Dag) -> DepthIndex {
    let mut param_sets: BTreeMap<u32, Vec<NodeId>> = BTreeMap::new();
    for &p in dag.parameters() {
        param_sets.entry(dag.depth(p)).or_default().push(p);
    }
    let max_param_depth = param_sets.keys().next_back().copied().unwrap_or(0);
    DepthIndex {
        depths: dag.depths.clone(),
        param_sets,
        max_param_depth,
    }
}

/// Mean number of children over the unobserved parameters. Zero for a dag
/// without parameters.
pub fn mean_children(dag: &Dag) -> f64 {
    if dag.params.is_empty() {
        return 0.0;
    }
    let total: usize = dag.params.iter().map(|&p| dag.children(p).len()).sum();
    total as f64 / dag.params.len() as f64
}

/// Children of a block treated as a single super-node: the union of the
/// members' children minus the members themselves, sorted by node id.
///
/// Errors if a member is not an unobserved parameter.
pub fn children_of_block(dag: &Dag, members: &[NodeId]) -> Result<Vec<NodeId>, GraphError> {
    for &m in members {
        if m.index() >= dag.len() {
            return Err(GraphError::UnknownNode(m.index() as u32));
        }
        if !dag.is_parameter(m) {
            return Err(GraphError::NotAParameter(dag.name(m).to_string()));
        }
    }
    let mut union: Vec<NodeId> = Vec::new();
    for &m in members {
        union.extend_from_slice(dag.children(m));
    }
    union.sort_unstable();
    union.dedup();
    union.retain(|c| !members.contains(c));
    Ok(union)
}

/// Expression used when wiring nodes through [`DagBuilder`].
#[derive(Debug, Clone)]
pub enum BuildExpr {
    Node(NodeId),
    Lit(f64),
    Neg(Box<BuildExpr>),
    Add(Box<BuildExpr>, Box<BuildExpr>),
    Sub(Box<BuildExpr>, Box<BuildExpr>),
    Mul(Box<BuildExpr>, Box<BuildExpr>),
    Div(Box<BuildExpr>, Box<BuildExpr>),
    Pow(Box<BuildExpr>, Box<BuildExpr>),
    Logit(Box<BuildExpr>),
    InvLogit(Box<BuildExpr>),
}

impl From<NodeId> for BuildExpr {
    fn from(id: NodeId) -> BuildExpr {
        BuildExpr::Node(id)
    }
}

impl From<f64> for BuildExpr {
    fn from(v: f64) -> BuildExpr {
        BuildExpr::Lit(v)
    }
}

struct ProtoNode {
    name: String,
    kind: NodeKind,
    dist: Option<DistSpec>,
    value: f64,
}

/// Incremental dag construction, used by the model compiler and by tests
/// that need hand-built graphs.
///
/// Stochastic nodes can be declared before their distributions are wired,
/// so mutually referencing declarations are expressible; [`DagBuilder::build`]
/// rejects the cyclic ones.
#[derive(Default)]
pub struct DagBuilder {
    nodes: Vec<ProtoNode>,
    by_name: HashMap<String, NodeId>,
    literals: HashMap<u64, NodeId>,
}

impl DagBuilder {
    pub fn new() -> DagBuilder {
        DagBuilder::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn insert(&mut self, name: &str, kind: NodeKind, value: f64) -> Result<NodeId, GraphError> {
        if !name.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            return Err(GraphError::InvalidName(name.to_string()));
        }
        if self.by_name.contains_key(name) {
            return Err(GraphError::DuplicateName(name.to_string()));
        }
        let id = NodeId::new(self.nodes.len());
        self.nodes.push(ProtoNode {
            name: name.to_string(),
            kind,
            dist: None,
            value,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds a named constant (a data value).
    pub fn constant(&mut self, name: &str, value: f64) -> Result<NodeId, GraphError> {
        if !value.is_finite() {
            return Err(GraphError::NonFiniteConstant(name.to_string()));
        }
        self.insert(name, NodeKind::Constant, value)
    }

    /// Adds (or reuses) a constant node for a literal value. Literals are
    /// interned by value, so `0.0` appearing twice yields one node.
    pub fn literal(&mut self, value: f64) -> Result<NodeId, GraphError> {
        if !value.is_finite() {
            return Err(GraphError::NonFiniteConstant(format!("{value}")));
        }
        if let Some(&id) = self.literals.get(&value.to_bits()) {
            return Ok(id);
        }
        let id = NodeId::new(self.nodes.len());
        self.nodes.push(ProtoNode {
            name: format!("{value}"),
            kind: NodeKind::Constant,
            dist: None,
            value,
        });
        self.literals.insert(value.to_bits(), id);
        Ok(id)
    }

    /// Declares a stochastic node without a distribution. Observed nodes
    /// carry their data value. Wire the distribution with [`Self::set_dist`].
    pub fn stochastic(&mut self, name: &str, observed: Option<f64>) -> Result<NodeId, GraphError> {
        match observed {
            Some(v) => {
                if !v.is_finite() {
                    return Err(GraphError::NonFiniteObservation(name.to_string()));
                }
                self.insert(name, NodeKind::Observed, v)
            }
            None => self.insert(name, NodeKind::Parameter, f64::NAN),
        }
    }

    /// Attaches a distribution to a declared stochastic node.
    pub fn set_dist(
        &mut self,
        id: NodeId,
        kind: DistKind,
        params: [BuildExpr; 2],
    ) -> Result<(), GraphError> {
        if id.index() >= self.nodes.len() {
            return Err(GraphError::UnknownNode(id.index() as u32));
        }
        if !self.nodes[id.index()].kind.is_stochastic() {
            return Err(GraphError::NotAParameter(self.nodes[id.index()].name.clone()));
        }
        let [a, b] = params;
        let pa = self.lower(&a)?;
        let pb = self.lower(&b)?;
        self.nodes[id.index()].dist = Some(DistSpec {
            kind,
            params: [pa, pb],
        });
        Ok(())
    }

    /// Attaches a distribution whose parameter expressions are already
    /// lowered to programs. Node references are validated in [`Self::build`].
    pub fn set_dist_raw(
        &mut self,
        id: NodeId,
        kind: DistKind,
        params: [ExprProgram; 2],
    ) -> Result<(), GraphError> {
        if id.index() >= self.nodes.len() {
            return Err(GraphError::UnknownNode(id.index() as u32));
        }
        if !self.nodes[id.index()].kind.is_stochastic() {
            return Err(GraphError::NotAParameter(self.nodes[id.index()].name.clone()));
        }
        self.nodes[id.index()].dist = Some(DistSpec { kind, params });
        Ok(())
    }

    /// Declares an unobserved stochastic node with its distribution.
    pub fn parameter(
        &mut self,
        name: &str,
        kind: DistKind,
        params: [BuildExpr; 2],
    ) -> Result<NodeId, GraphError> {
        let id = self.stochastic(name, None)?;
        self.set_dist(id, kind, params)?;
        Ok(id)
    }

    /// Declares an observed stochastic node with its distribution.
    pub fn observed(
        &mut self,
        name: &str,
        kind: DistKind,
        params: [BuildExpr; 2],
        value: f64,
    ) -> Result<NodeId, GraphError> {
        let id = self.stochastic(name, Some(value))?;
        self.set_dist(id, kind, params)?;
        Ok(id)
    }

    fn lower(&mut self, expr: &BuildExpr) -> Result<ExprProgram, GraphError> {
        let mut ops = Vec::new();
        self.lower_into(expr, &mut ops)?;
        ExprProgram::new(ops)
    }

    fn lower_into(&mut self, expr: &BuildExpr, ops: &mut Vec<ExprOp>) -> Result<(), GraphError> {
        match expr {
            BuildExpr::Node(id) => {
                if id.index() >= self.nodes.len() {
                    return Err(GraphError::UnknownNode(id.index() as u32));
                }
                ops.push(ExprOp::Load(*id));
            }
            BuildExpr::Lit(v) => {
                let id = self.literal(*v)?;
                ops.push(ExprOp::Load(id));
            }
            BuildExpr::Neg(e) => {
                self.lower_into(e, ops)?;
                ops.push(ExprOp::Neg);
            }
            BuildExpr::Add(a, b) => {
                self.lower_into(a, ops)?;
                self.lower_into(b, ops)?;
                ops.push(ExprOp::Add);
            }
            BuildExpr::Sub(a, b) => {
                self.lower_into(a, ops)?;
                self.lower_into(b, ops)?;
                ops.push(ExprOp::Sub);
            }
            BuildExpr::Mul(a, b) => {
                self.lower_into(a, ops)?;
                self.lower_into(b, ops)?;
                ops.push(ExprOp::Mul);
            }
            BuildExpr::Div(a, b) => {
                self.lower_into(a, ops)?;
                self.lower_into(b, ops)?;
                ops.push(ExprOp::Div);
            }
            BuildExpr::Pow(a, b) => {
                self.lower_into(a, ops)?;
                self.lower_into(b, ops)?;
                ops.push(ExprOp::Pow);
            }
            BuildExpr::Logit(e) => {
                self.lower_into(e, ops)?;
                ops.push(ExprOp::Logit);
            }
            BuildExpr::InvLogit(e) => {
                self.lower_into(e, ops)?;
                ops.push(ExprOp::InvLogit);
            }
        }
        Ok(())
    }

    /// Validates and freezes the graph: every stochastic node has a
    /// distribution, references are in range, and the graph is acyclic.
    pub fn build(self) -> Result<Dag, GraphError> {
        let n = self.nodes.len();
        let mut names = Vec::with_capacity(n);
        let mut kinds = Vec::with_capacity(n);
        let mut dists = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for node in self.nodes {
            if node.kind.is_stochastic() && node.dist.is_none() {
                return Err(GraphError::MissingDistribution(node.name));
            }
            names.push(node.name);
            kinds.push(node.kind);
            dists.push(node.dist);
            values.push(node.value);
        }

        let mut parents: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for (i, dist) in dists.iter().enumerate() {
            if let Some(d) = dist {
                let mut refs: Vec<NodeId> = Vec::new();
                for prog in &d.params {
                    for r in prog.references() {
                        if r.index() >= n {
                            return Err(GraphError::UnknownNode(r.index() as u32));
                        }
                        if !refs.contains(&r) {
                            refs.push(r);
                        }
                    }
                }
                refs.sort_unstable();
                parents[i] = refs;
            }
        }

        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for i in 0..n {
            for &p in &parents[i] {
                children[p.index()].push(NodeId::new(i));
            }
        }

        // Kahn's algorithm: peel nodes whose parents are all resolved,
        // assigning depths as we go. Anything left over sits on a cycle.
        let mut remaining: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut depths = vec![0u32; n];
        let mut queue: Vec<usize> = (0..n).filter(|&i| remaining[i] == 0).collect();
        let mut seen = 0usize;
        let mut cursor = 0usize;
        while cursor < queue.len() {
            let u = queue[cursor];
            cursor += 1;
            seen += 1;
            for &c in &children[u] {
                let ci = c.index();
                depths[ci] = depths[ci].max(depths[u] + 1);
                remaining[ci] -= 1;
                if remaining[ci] == 0 {
                    queue.push(ci);
                }
            }
        }
        if seen != n {
            let culprit = (0..n).find(|&i| remaining[i] > 0).unwrap();
            return Err(GraphError::Cycle(names[culprit].clone()));
        }

        let params: Vec<NodeId> = (0..n)
            .filter(|&i| kinds[i] == NodeKind::Parameter)
            .map(NodeId::new)
            .collect();

        let mut by_name = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            by_name.insert(name.clone(), NodeId::new(i));
        }

        let mut families: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            if !kinds[i].is_stochastic() {
                continue;
            }
            let base = name.split('[').next().unwrap_or(name);
            families.entry(base.to_string()).or_default().push(NodeId::new(i));
        }

        Ok(Dag {
            names,
            kinds,
            dists,
            values,
            parents,
            children,
            depths,
            params,
            by_name,
            families,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level() -> Dag {
        let mut b = DagBuilder::new();
        let mu = b.parameter("mu", DistKind::Normal, [0.0.into(), 1.0.into()]).unwrap();
        let tau = b
            .parameter("tau", DistKind::Uniform, [0.0.into(), 10.0.into()])
            .unwrap();
        for i in 0..3 {
            b.observed(
                &format!("y[{}]", i + 1),
                DistKind::Normal,
                [mu.into(), tau.into()],
                i as f64,
            )
            .unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn builder_wires_edges_and_depths() {
        let dag = two_level();
        let mu = dag.node_by_name("mu").unwrap();
        let tau = dag.node_by_name("tau").unwrap();
        let y1 = dag.node_by_name("y[1]").unwrap();
        assert_eq!(dag.children(mu).len(), 3);
        assert_eq!(dag.children(tau).len(), 3);
        assert_eq!(dag.parents(y1), &[mu, tau]);
        assert_eq!(dag.depth(mu), 1);
        assert_eq!(dag.depth(y1), 2);
        assert_eq!(dag.parameters(), &[mu, tau]);
        assert_eq!(dag.family("y").len(), 3);
        // literals 0.0, 1.0, 10.0 interned once each
        assert_eq!(dag.constant_count(), 3);
    }

    #[test]
    fn literal_interning_reuses_nodes() {
        let mut b = DagBuilder::new();
        b.parameter("x", DistKind::Normal, [0.0.into(), 1.0.into()]).unwrap();
        b.parameter("y", DistKind::Normal, [0.0.into(), 1.0.into()]).unwrap();
        let dag = b.build().unwrap();
        assert_eq!(dag.len(), 4);
        assert_eq!(dag.constant_count(), 2);
    }

    #[test]
    fn cycle_is_rejected() {
        let mut b = DagBuilder::new();
        let x = b.stochastic("x", None).unwrap();
        let y = b.stochastic("y", None).unwrap();
        b.set_dist(x, DistKind::Normal, [y.into(), 1.0.into()]).unwrap();
        b.set_dist(y, DistKind::Normal, [x.into(), 1.0.into()]).unwrap();
        assert!(matches!(b.build(), Err(GraphError::Cycle(_))));
    }

    #[test]
    fn self_reference_is_a_cycle() {
        let mut b = DagBuilder::new();
        let x = b.stochastic("x", None).unwrap();
        b.set_dist(x, DistKind::Normal, [x.into(), 1.0.into()]).unwrap();
        assert!(matches!(b.build(), Err(GraphError::Cycle(_))));
    }

    #[test]
    fn missing_distribution_is_rejected() {
        let mut b = DagBuilder::new();
        b.stochastic("x", None).unwrap();
        assert!(matches!(b.build(), Err(GraphError::MissingDistribution(_))));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut b = DagBuilder::new();
        b.constant("x", 1.0).unwrap();
        assert!(matches!(b.constant("x", 2.0), Err(GraphError::DuplicateName(_))));
    }

    #[test]
    fn mean_children_counts_parameters_only() {
        let dag = two_level();
        // mu and tau each have the three observations as children
        assert!((mean_children(&dag) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn block_children_exclude_members() {
        let mut b = DagBuilder::new();
        let a = b.parameter("a", DistKind::Normal, [0.0.into(), 1.0.into()]).unwrap();
        let c = b.parameter("c", DistKind::Normal, [a.into(), 1.0.into()]).unwrap();
        b.observed("y", DistKind::Normal, [c.into(), 1.0.into()], 0.5).unwrap();
        let dag = b.build().unwrap();
        let y = dag.node_by_name("y").unwrap();
        assert_eq!(children_of_block(&dag, &[a, c]).unwrap(), vec![y]);
        assert!(children_of_block(&dag, &[a, y]).is_err());
    }

    #[test]
    fn depth_index_groups_parameters() {
        let dag = two_level();
        let idx = topological_depth(&dag);
        assert_eq!(idx.max_param_depth(), 1);
        assert_eq!(idx.param_sets().len(), 1);
        assert_eq!(idx.param_sets()[&1].len(), 2);
    }

    #[test]
    fn expr_program_validates_stack() {
        assert!(ExprProgram::new(vec![ExprOp::Add]).is_err());
        assert!(ExprProgram::new(vec![ExprOp::Push(1.0), ExprOp::Push(2.0)]).is_err());
        let p = ExprProgram::new(vec![ExprOp::Push(2.0), ExprOp::Push(3.0), ExprOp::Pow]).unwrap();
        assert_eq!(p.eval(&[]), 8.0);
    }

    #[test]
    fn eval_matches_hand_computation() {
        // logit(0.25) and its inverse
        let p = ExprProgram::new(vec![ExprOp::Push(0.25), ExprOp::Logit]).unwrap();
        let x = p.eval(&[]);
        assert!((x - (0.25f64 / 0.75).ln()).abs() < 1e-15);
        let q = ExprProgram::new(vec![ExprOp::Push(x), ExprOp::InvLogit]).unwrap();
        assert!((q.eval(&[]) - 0.25).abs() < 1e-15);
    }
}
