//! Helpers shared by the integration test binaries.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use dagmcmc::graph::{BuildExpr, Dag, DagBuilder, DistKind, NodeId};
use dagmcmc::lang::{compile_graph, parse_data, parse_model};
use dagmcmc::runtime::{ChainInit, RngStreams};
use dagmcmc::sampler::{
    block_rw_metropolis_step, generate_initial_values, log_density_sum, rw_metropolis_step,
    AdaptiveScale, ChainState, SamplerError, BLOCK_TARGET_RATE, SCALAR_TARGET_RATE,
};
use dagmcmc::schedule::{partition_list, Cell, RowKind, ScheduleTable, Target};

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Compiles `model.bug` + `data.txt` from a fixture directory.
pub fn compile_fixture(dir: &Path) -> Arc<Dag> {
    let model = parse_model(&fs::read_to_string(dir.join("model.bug")).unwrap()).unwrap();
    let data = parse_data(&fs::read_to_string(dir.join("data.txt")).unwrap()).unwrap();
    Arc::new(compile_graph(&model, &data).unwrap())
}

pub fn seeds_dag() -> Arc<Dag> {
    compile_fixture(&fixture_dir("seeds"))
}

/// Starting values matching the seeds fixture inits: coefficients at
/// `value`, the random-effect scale at `1 - value`, plate effects from
/// their priors.
pub fn seeds_inits(dag: &Dag, value: f64) -> ChainInit {
    let mut named = BTreeMap::new();
    for name in ["alpha0", "alpha1", "alpha2", "alpha12"] {
        named.insert(name.to_string(), value);
    }
    named.insert("sigma.beta".to_string(), 1.0 - value);
    ChainInit::from_named(dag, &named).unwrap()
}

/// A straight-line single-threaded reimplementation of one chain's update
/// loop for a one-core schedule: no worker threads, no collectives, no
/// message passing — just the documented stream layout and row order. Used
/// to pin down what the engine must produce at C=1.
pub struct SerialReference {
    dag: Arc<Dag>,
    state: ChainState,
    streams: RngStreams,
    rows: Vec<(RowAction, Vec<NodeId>, Vec<NodeId>, AdaptiveScale)>,
    iteration: u64,
}

enum RowAction {
    Cooperative,
    Owned,
}

impl SerialReference {
    pub fn new(
        dag: &Arc<Dag>,
        schedule: &ScheduleTable,
        master_seed: u64,
        chain: u32,
        init: &ChainInit,
    ) -> SerialReference {
        assert_eq!(schedule.cores(), 1, "the reference loop is single-core");
        let mut streams = RngStreams::for_worker(master_seed, chain, 0);
        let state = generate_initial_values(dag, &init.values, &mut streams.common).unwrap();
        let mut rows = Vec::new();
        for row in schedule.rows() {
            let (action, target) = match (row.kind, row.cells[0]) {
                (RowKind::PartialProduct, Cell::Partial(t)) => (RowAction::Cooperative, t),
                (RowKind::Sample, Cell::Sample(t)) => (RowAction::Owned, t),
                other => panic!("unexpected one-core row {:?}", other.0),
            };
            let members = schedule.target_nodes(target);
            let children = match target {
                Target::Node(n) => dag.children(n).to_vec(),
                Target::Block(_) => {
                    dagmcmc::graph::children_of_block(dag, &members).unwrap()
                }
            };
            // At one core the cooperative slice is the whole child set.
            let children = partition_list(&children, 1).swap_remove(0);
            let rate =
                if members.len() == 1 { SCALAR_TARGET_RATE } else { BLOCK_TARGET_RATE };
            rows.push((action, members, children, AdaptiveScale::new(rate)));
        }
        SerialReference { dag: dag.clone(), state, streams, rows, iteration: 0 }
    }

    /// Runs one iteration; row order and stream usage mirror the engine.
    pub fn step(&mut self) {
        for (action, members, children, scale) in &mut self.rows {
            let rng = match action {
                RowAction::Cooperative => &mut self.streams.common,
                RowAction::Owned => &mut self.streams.specific,
            };
            let dag = &self.dag;
            let accepted = if members.len() == 1 {
                let node = members[0];
                rw_metropolis_step(dag, node, scale.scale(), &mut self.state, rng, {
                    let children = &*children;
                    |st: &mut ChainState, cand: f64| {
                        let current = st.value(node);
                        let before = log_density_sum(dag, children, st);
                        st.set_value(node, cand);
                        let after = log_density_sum(dag, children, st);
                        st.set_value(node, current);
                        Ok::<f64, SamplerError>(after - before)
                    }
                })
                .unwrap()
            } else {
                let diagonal = vec![scale.scale(); members.len()];
                block_rw_metropolis_step(dag, members, &diagonal, &mut self.state, rng, {
                    let children = &*children;
                    let members = &*members;
                    |st: &mut ChainState, cands: &[f64]| {
                        let saved: Vec<f64> = members.iter().map(|&m| st.value(m)).collect();
                        let before = log_density_sum(dag, children, st);
                        for (&m, &c) in members.iter().zip(cands) {
                            st.set_value(m, c);
                        }
                        let after = log_density_sum(dag, children, st);
                        for (&m, &v) in members.iter().zip(&saved) {
                            st.set_value(m, v);
                        }
                        Ok::<f64, SamplerError>(after - before)
                    }
                })
                .unwrap()
            };
            scale.observe(accepted);
        }
        self.iteration += 1;
        self.state.set_iteration(self.iteration);
    }

    pub fn value(&self, node: NodeId) -> f64 {
        self.state.value(node)
    }

    pub fn digest(&self) -> u64 {
        self.state.digest(&self.dag)
    }
}

/// A random DAG for structure tests: layered normal nodes with random
/// parents, a mix of observed leaves and latent parameters.
pub fn random_dag(case: u64) -> Dag {
    let mut rng = StdRng::seed_from_u64(case);
    let nodes = rng.random_range(5..=30usize);
    let mut b = DagBuilder::new();
    let mut ids: Vec<NodeId> = Vec::new();
    for i in 0..nodes {
        let parents = if ids.is_empty() { 0 } else { rng.random_range(0..=3.min(ids.len())) };
        let mut mean: BuildExpr = 0.0.into();
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..parents {
            let pick = rng.random_range(0..ids.len());
            if !chosen.contains(&pick) {
                chosen.push(pick);
                mean = BuildExpr::Add(Box::new(mean), Box::new(ids[pick].into()));
            }
        }
        let name = format!("v{}", i);
        // Leaves lean observed so likelihood structure is non-trivial.
        let observed = !chosen.is_empty() && rng.random::<f64>() < 0.5;
        let id = if observed {
            b.observed(&name, DistKind::Normal, [mean, 1.0.into()], rng.random::<f64>())
                .unwrap()
        } else {
            b.parameter(&name, DistKind::Normal, [mean, 1.0.into()]).unwrap()
        };
        ids.push(id);
    }
    b.build().unwrap()
}

/// Brute-force moral-graph adjacency from the parent lists alone: two nodes
/// are adjacent iff one is a parent of the other or they share a child.
/// Conditioning on every other stochastic node blocks all longer paths, so
/// two parameters may be updated simultaneously exactly when they are NOT
/// morally adjacent.
pub fn morally_adjacent(dag: &Dag, u: NodeId, v: NodeId) -> bool {
    if dag.parents(u).contains(&v) || dag.parents(v).contains(&u) {
        return true;
    }
    dag.node_ids().any(|w| {
        let parents = dag.parents(w);
        parents.contains(&u) && parents.contains(&v)
    })
}
