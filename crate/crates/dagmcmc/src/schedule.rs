//! Builds the per-iteration computation schedule for a worker group of C
//! cores updating one chain.
//!
//! Parameters are processed depth set by depth set, deepest first. Within a
//! depth set each parameter (or sampling block) goes one of two ways:
//!
//! * cooperative update: a parameter whose child count exceeds twice the
//!   graph-wide mean gets a partial-product row. Every core proposes the
//!   same move (common random numbers), evaluates its own slice of the
//!   children, and the log-likelihood delta is combined with an all-reduce.
//!   When the deepest parameter depth is 1 every parameter is updated this
//!   way, since nothing can be sampled in parallel underneath it.
//! * parallel sampling: the rest are split into sets of mutually
//!   conditionally independent parameters (no two share a child). Each set
//!   is laid out across the cores in descending child count (ties keep
//!   graph declaration order), C cells per row, padded with blanks when the
//!   set size is not a multiple of C. A value gather follows the last row
//!   of each set.
//!
//! Sampling blocks act as a single unit: their depth is the deepest member
//! depth and their children are the union of member children outside the
//! block. The independence test also keeps a block out of a set that
//! already contains one of its members' children or parents.

use std::collections::HashSet;

use serde_json::{json, Value};
use thiserror::Error;

use crate::graph::{
    children_of_block, mean_children, topological_depth, Dag, GraphError, NodeId,
};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("a schedule needs at least one core")]
    NoCores,
    #[error("sampling block {0} is empty")]
    EmptyBlock(usize),
    #[error("`{0}` appears in more than one sampling block")]
    OverlappingBlocks(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// What a cell updates: a single parameter or a sampling block (an index
/// into [`ScheduleTable::blocks`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Node(NodeId),
    Block(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    /// The core owning this cell samples the target on its own.
    Sample(Target),
    /// All cores cooperate on the target's likelihood.
    Partial(Target),
    Blank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Sample,
    PartialProduct,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub kind: RowKind,
    /// Depth set the row came from.
    pub depth: u32,
    /// Exactly one cell per core.
    pub cells: Vec<Cell>,
}

/// The fixed update order for one iteration, shared by all cores of a
/// worker group.
#[derive(Debug, Clone)]
pub struct ScheduleTable {
    cores: usize,
    rows: Vec<Row>,
    gather_after: Vec<usize>,
    blocks: Vec<Vec<NodeId>>,
}

impl ScheduleTable {
    pub fn cores(&self) -> usize {
        self.cores
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Row indices after which the group gathers sampled values.
    pub fn gather_after(&self) -> &[usize] {
        &self.gather_after
    }

    /// Member lists for block targets, in [`Target::Block`] index order.
    pub fn blocks(&self) -> &[Vec<NodeId>] {
        &self.blocks
    }

    /// Nodes covered by a target, in canonical order.
    pub fn target_nodes(&self, target: Target) -> Vec<NodeId> {
        match target {
            Target::Node(id) => vec![id],
            Target::Block(b) => self.blocks[b].clone(),
        }
    }

    fn target_label(&self, dag: &Dag, target: Target) -> String {
        match target {
            Target::Node(id) => dag.name(id).to_string(),
            Target::Block(b) => format!("block#{}", b + 1),
        }
    }

    /// Plain-text rendering: one line per row, one column per core, with
    /// `sample` / `partial` cell markers, `-` for blanks, gather boundaries,
    /// and a legend for block members.
    pub fn render_text(&self, dag: &Dag) -> String {
        let mut cells: Vec<Vec<String>> = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            cells.push(
                row.cells
                    .iter()
                    .map(|cell| match cell {
                        Cell::Sample(t) => format!("sample {}", self.target_label(dag, *t)),
                        Cell::Partial(t) => format!("partial {}", self.target_label(dag, *t)),
                        Cell::Blank => "-".to_string(),
                    })
                    .collect(),
            );
        }
        let label_width = format!("row {}", self.rows.len()).len().max(4);
        let mut widths = vec![0usize; self.cores];
        for row in &cells {
            for (c, text) in row.iter().enumerate() {
                widths[c] = widths[c].max(text.len()).max(format!("core {}", c + 1).len());
            }
        }

        let mut out = String::new();
        out.push_str(&format!("{:label_width$}", ""));
        for c in 0..self.cores {
            out.push_str(&format!("  {:<width$}", format!("core {}", c + 1), width = widths[c]));
        }
        out.push('\n');
        for (r, row) in cells.iter().enumerate() {
            out.push_str(&format!("{:<label_width$}", format!("row {}", r + 1)));
            for (c, text) in row.iter().enumerate() {
                out.push_str(&format!("  {:<width$}", text, width = widths[c]));
            }
            out.push('\n');
            if self.gather_after.contains(&r) {
                out.push_str(&format!("{:label_width$}  (gather)\n", ""));
            }
        }
        for (b, members) in self.blocks.iter().enumerate() {
            let names: Vec<&str> = members.iter().map(|&m| dag.name(m)).collect();
            out.push_str(&format!("block#{} = {{{}}}\n", b + 1, names.join(", ")));
        }
        out
    }

    /// JSON rendering with the same information as [`Self::render_text`].
    pub fn to_json(&self, dag: &Dag) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let cells: Vec<Value> = row
                    .cells
                    .iter()
                    .map(|cell| match cell {
                        Cell::Sample(t) => {
                            json!({"op": "sample", "target": self.target_label(dag, *t)})
                        }
                        Cell::Partial(t) => {
                            json!({"op": "partial", "target": self.target_label(dag, *t)})
                        }
                        Cell::Blank => json!({"op": "blank"}),
                    })
                    .collect();
                json!({
                    "kind": match row.kind {
                        RowKind::Sample => "sample",
                        RowKind::PartialProduct => "partial-product",
                    },
                    "depth": row.depth,
                    "cells": cells,
                })
            })
            .collect();
        let blocks: Vec<Value> = self
            .blocks
            .iter()
            .map(|members| {
                Value::Array(
                    members.iter().map(|&m| Value::String(dag.name(m).to_string())).collect(),
                )
            })
            .collect();
        json!({
            "cores": self.cores,
            "rows": rows,
            "gather_after": self.gather_after,
            "blocks": blocks,
        })
    }
}

/// Splits a child list across `cores` round-robin: the child at position j
/// goes to partition j mod cores. Sizes differ by at most one.
pub fn partition_list(children: &[NodeId], cores: usize) -> Vec<Vec<NodeId>> {
    let mut parts = vec![Vec::new(); cores.max(1)];
    for (j, &c) in children.iter().enumerate() {
        parts[j % cores.max(1)].push(c);
    }
    parts
}

/// Round-robin partition of a node's children, one slice per core.
pub fn partition_children(dag: &Dag, node: NodeId, cores: usize) -> Vec<Vec<NodeId>> {
    partition_list(dag.children(node), cores)
}

/// A schedulable unit: a parameter, or a block acting as one.
#[derive(Debug, Clone)]
struct Unit {
    target: Target,
    members: Vec<NodeId>,
    children: Vec<NodeId>,
    depth: u32,
    order: usize,
}

fn make_units(dag: &Dag, blocks: &[Vec<NodeId>]) -> Result<Vec<Unit>, ScheduleError> {
    let mut in_block: HashSet<NodeId> = HashSet::new();
    for (b, members) in blocks.iter().enumerate() {
        if members.is_empty() {
            return Err(ScheduleError::EmptyBlock(b));
        }
        for &m in members {
            if !in_block.insert(m) {
                return Err(ScheduleError::OverlappingBlocks(dag.name(m).to_string()));
            }
        }
    }

    let mut units = Vec::new();
    for &p in dag.parameters() {
        if !in_block.contains(&p) {
            units.push(Unit {
                target: Target::Node(p),
                members: vec![p],
                children: dag.children(p).to_vec(),
                depth: dag.depth(p),
                order: p.index(),
            });
        }
    }
    for (b, members) in blocks.iter().enumerate() {
        let children = children_of_block(dag, members)?;
        let mut members = members.clone();
        members.sort_unstable();
        let depth = members.iter().map(|&m| dag.depth(m)).max().unwrap();
        let order = members[0].index();
        units.push(Unit { target: Target::Block(b), members, children, depth, order });
    }
    units.sort_by_key(|u| u.order);
    Ok(units)
}

/// Greedy split of units into sets with no conflicts: within a set no unit
/// is another's child or parent and no two units share a child. Passes the
/// pending list until it empties; each pass yields one set.
fn independent_sets(dag: &Dag, units: Vec<Unit>) -> Vec<Vec<Unit>> {
    let mut remaining = units;
    let mut sets = Vec::new();
    while !remaining.is_empty() {
        let mut taken_children = vec![false; dag.len()];
        let mut taken_members = vec![false; dag.len()];
        let mut set = Vec::new();
        let mut rest = Vec::new();
        for unit in remaining {
            let conflict = unit
                .children
                .iter()
                .any(|&c| taken_children[c.index()] || taken_members[c.index()])
                || unit.members.iter().any(|&m| taken_children[m.index()]);
            if conflict {
                rest.push(unit);
            } else {
                for &c in &unit.children {
                    taken_children[c.index()] = true;
                }
                for &m in &unit.members {
                    taken_members[m.index()] = true;
                }
                set.push(unit);
            }
        }
        sets.push(set);
        remaining = rest;
    }
    sets
}

/// Groups parameters into mutually conditionally independent sets, keeping
/// canonical order within each set. Parameters in the same set can be
/// updated concurrently: conditioned on the rest of the graph, none of them
/// shares a child with, or is a parent of, another.
pub fn conditionally_independent_sets(
    dag: &Dag,
    nodes: &[NodeId],
) -> Result<Vec<Vec<NodeId>>, ScheduleError> {
    let mut units = Vec::with_capacity(nodes.len());
    for &p in nodes {
        if !dag.is_parameter(p) {
            return Err(GraphError::NotAParameter(dag.name(p).to_string()).into());
        }
        units.push(Unit {
            target: Target::Node(p),
            members: vec![p],
            children: dag.children(p).to_vec(),
            depth: dag.depth(p),
            order: p.index(),
        });
    }
    units.sort_by_key(|u| u.order);
    Ok(independent_sets(dag, units)
        .into_iter()
        .map(|set| set.into_iter().map(|u| u.members[0]).collect())
        .collect())
}

/// Which parameters of depth set `h` get cooperative (partial-product)
/// updates: those with more than twice the graph-wide mean child count, or
/// all of them when the deepest parameter depth is 1. Returns the selected
/// and remaining nodes, both in canonical order.
pub fn partial_product_selection(dag: &Dag, h: u32) -> (Vec<NodeId>, Vec<NodeId>) {
    let depth_index = topological_depth(dag);
    let threshold = 2.0 * mean_children(dag);
    let hstar = depth_index.max_param_depth();
    let mut selected = Vec::new();
    let mut remaining = Vec::new();
    for &p in depth_index.param_sets().get(&h).map(Vec::as_slice).unwrap_or(&[]) {
        if hstar == 1 || dag.children(p).len() as f64 > threshold {
            selected.push(p);
        } else {
            remaining.push(p);
        }
    }
    (selected, remaining)
}

/// Builds the schedule for `cores` workers with no sampling blocks.
pub fn build_schedule(dag: &Dag, cores: usize) -> Result<ScheduleTable, ScheduleError> {
    build_schedule_with_blocks(dag, cores, &[])
}

/// Builds the schedule treating each block as a single unit. Blocks must be
/// disjoint, non-empty sets of unobserved parameters.
pub fn build_schedule_with_blocks(
    dag: &Dag,
    cores: usize,
    blocks: &[Vec<NodeId>],
) -> Result<ScheduleTable, ScheduleError> {
    if cores == 0 {
        return Err(ScheduleError::NoCores);
    }
    let units = make_units(dag, blocks)?;
    let threshold = 2.0 * mean_children(dag);
    let hstar = units.iter().map(|u| u.depth).max().unwrap_or(0);

    let mut rows: Vec<Row> = Vec::new();
    let mut gather_after: Vec<usize> = Vec::new();
    for h in (1..=hstar).rev() {
        let depth_units: Vec<Unit> = units.iter().filter(|u| u.depth == h).cloned().collect();
        if depth_units.is_empty() {
            continue;
        }

        let (coop, parallel): (Vec<Unit>, Vec<Unit>) = depth_units
            .into_iter()
            .partition(|u| hstar == 1 || u.children.len() as f64 > threshold);

        for unit in &coop {
            rows.push(Row {
                kind: RowKind::PartialProduct,
                depth: h,
                cells: vec![Cell::Partial(unit.target); cores],
            });
        }

        for set in independent_sets(dag, parallel) {
            let mut ordered = set;
            // widest likelihoods first, canonical order breaking ties
            ordered.sort_by(|a, b| {
                b.children.len().cmp(&a.children.len()).then(a.order.cmp(&b.order))
            });
            for chunk in ordered.chunks(cores) {
                let mut cells: Vec<Cell> =
                    chunk.iter().map(|u| Cell::Sample(u.target)).collect();
                cells.resize(cores, Cell::Blank);
                rows.push(Row { kind: RowKind::Sample, depth: h, cells });
            }
            gather_after.push(rows.len() - 1);
        }
    }

    Ok(ScheduleTable {
        cores,
        rows,
        gather_after,
        blocks: blocks
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.sort_unstable();
                m
            })
            .collect(),
    })
}
