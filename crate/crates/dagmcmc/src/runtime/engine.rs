//! The sampling engine: one worker thread per (chain, core) seat.
//!
//! Workers of one chain form a group of fixed size C and execute the
//! schedule table row by row. A partial-product row is replayed by every
//! core: all draw the same proposal from the common stream, each evaluates
//! its own slice of the children, and an allreduce combines the slices so
//! every core reaches the same accept decision. A sample row gives each
//! core its own parameter, updated with the core-specific stream against
//! the full child set; the new values travel to the rest of the group in
//! one gather at the end of the row set. Core 0 of each chain is the lead
//! worker and the only one that emits monitored values.
//!
//! Every core seeds its chain identically (the initial draw uses the
//! common stream), so no start-up broadcast is needed.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::diagnostics::{MonitorBuffer, MonitorRecord};
use crate::graph::{children_of_block, Dag, NodeId};
use crate::sampler::{
    block_rw_metropolis_step, generate_initial_values, log_density_sum, rw_metropolis_step,
    validate_continuous_parameters, AdaptiveScale, ChainState, BLOCK_TARGET_RATE,
    SCALAR_TARGET_RATE,
};
use crate::schedule::{partition_list, Cell, RowKind, ScheduleTable, Target};

use super::collective::{CollectiveCounts, GroupContext};
use super::streams::RngStreams;
use super::RuntimeError;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub master_seed: u64,
    pub chains: usize,
    /// Total worker count; split evenly over the chains.
    pub total_cores: usize,
}

/// Initial parameter values for one chain. Parameters without an entry are
/// drawn from their priors.
#[derive(Debug, Clone, Default)]
pub struct ChainInit {
    pub values: BTreeMap<NodeId, f64>,
}

impl ChainInit {
    pub fn empty() -> ChainInit {
        ChainInit::default()
    }

    pub fn from_named(dag: &Dag, values: &BTreeMap<String, f64>) -> Result<ChainInit, RuntimeError> {
        let mut out = BTreeMap::new();
        for (name, &value) in values {
            let id = dag.node_by_name(name).ok_or_else(|| {
                RuntimeError::Config(format!("`{name}` is not a node in the model"))
            })?;
            if !dag.is_parameter(id) {
                return Err(RuntimeError::Config(format!("`{name}` is not a model parameter")));
            }
            out.insert(id, value);
        }
        Ok(ChainInit { values: out })
    }
}

enum Command {
    Update { count: u64, record: bool },
    SetMonitors(Arc<Vec<NodeId>>),
    FreezeAdaptation,
    Digest,
    Shutdown,
}

enum Reply {
    Ready,
    Done,
    Digest { chain: u32, rank: u32, digest: u64 },
    Monitor(MonitorRecord),
    Failed { chain: u32, rank: u32, message: String },
}

/// A parameter (or block) this worker updates, with the slice of children
/// it evaluates: the rank's partition share for cooperative targets, the
/// full child set for owned ones.
struct Updater {
    members: Vec<NodeId>,
    local_children: Vec<NodeId>,
    scale: AdaptiveScale,
}

#[derive(Clone, Copy)]
enum RowPlan {
    /// Partial-product row: every rank replays the same update.
    Cooperative { updater: usize },
    /// Sample row with this rank's own cell.
    Own { updater: usize },
    /// Sample row in which this rank's cell is blank.
    Idle,
}

fn build_plans(dag: &Dag, schedule: &ScheduleTable, rank: usize) -> (Vec<Updater>, Vec<RowPlan>) {
    let cores = schedule.cores();
    let mut updaters: Vec<Updater> = Vec::new();
    let mut plans = Vec::with_capacity(schedule.rows().len());
    let add = |target: Target, cooperative: bool, updaters: &mut Vec<Updater>| -> usize {
        let members = schedule.target_nodes(target);
        let children = match target {
            Target::Node(n) => dag.children(n).to_vec(),
            Target::Block(_) => {
                children_of_block(dag, &members).expect("schedule blocks were validated")
            }
        };
        let local_children = if cooperative {
            partition_list(&children, cores).swap_remove(rank)
        } else {
            children
        };
        let rate = if members.len() == 1 { SCALAR_TARGET_RATE } else { BLOCK_TARGET_RATE };
        updaters.push(Updater { members, local_children, scale: AdaptiveScale::new(rate) });
        updaters.len() - 1
    };
    for row in schedule.rows() {
        let plan = match row.kind {
            RowKind::PartialProduct => {
                let Cell::Partial(target) = row.cells[0] else {
                    unreachable!("partial rows hold partial cells")
                };
                RowPlan::Cooperative { updater: add(target, true, &mut updaters) }
            }
            RowKind::Sample => match row.cells[rank] {
                Cell::Sample(target) => {
                    RowPlan::Own { updater: add(target, false, &mut updaters) }
                }
                Cell::Blank => RowPlan::Idle,
                Cell::Partial(_) => unreachable!("sample rows hold sample cells"),
            },
        };
        plans.push(plan);
    }
    (updaters, plans)
}

struct Worker {
    dag: Arc<Dag>,
    group: Arc<GroupContext>,
    chain: u32,
    rank: usize,
    streams: RngStreams,
    state: ChainState,
    updaters: Vec<Updater>,
    plans: Vec<RowPlan>,
    gather_here: Vec<bool>,
    monitors: Arc<Vec<NodeId>>,
    iteration: u64,
    replies: Sender<Reply>,
}

struct WorkerSeat {
    dag: Arc<Dag>,
    schedule: Arc<ScheduleTable>,
    group: Arc<GroupContext>,
    chain: u32,
    rank: usize,
    master_seed: u64,
    init: ChainInit,
    commands: Receiver<Command>,
    replies: Sender<Reply>,
}

fn worker_thread(seat: WorkerSeat) {
    let WorkerSeat { dag, schedule, group, chain, rank, master_seed, init, commands, replies } =
        seat;
    let mut streams = RngStreams::for_worker(master_seed, chain, rank as u32);
    let state = match generate_initial_values(&dag, &init.values, &mut streams.common) {
        Ok(state) => state,
        Err(e) => {
            let message = e.to_string();
            group.abort(&message);
            let _ = replies.send(Reply::Failed { chain, rank: rank as u32, message });
            return;
        }
    };
    let (updaters, plans) = build_plans(&dag, &schedule, rank);
    let mut gather_here = vec![false; schedule.rows().len()];
    for &r in schedule.gather_after() {
        gather_here[r] = true;
    }
    let mut worker = Worker {
        dag,
        group,
        chain,
        rank,
        streams,
        state,
        updaters,
        plans,
        gather_here,
        monitors: Arc::new(Vec::new()),
        iteration: 0,
        replies,
    };
    if worker.replies.send(Reply::Ready).is_err() {
        return;
    }
    worker.serve(commands);
}

impl Worker {
    fn serve(&mut self, commands: Receiver<Command>) {
        loop {
            let Ok(command) = commands.recv() else { return };
            match command {
                Command::Shutdown => return,
                Command::SetMonitors(nodes) => {
                    self.monitors = nodes;
                    let _ = self.replies.send(Reply::Done);
                }
                Command::FreezeAdaptation => {
                    for updater in &mut self.updaters {
                        updater.scale.freeze();
                    }
                    let _ = self.replies.send(Reply::Done);
                }
                Command::Digest => {
                    let digest = self.state.digest(&self.dag);
                    let _ = self.replies.send(Reply::Digest {
                        chain: self.chain,
                        rank: self.rank as u32,
                        digest,
                    });
                }
                Command::Update { count, record } => {
                    for _ in 0..count {
                        if let Err(e) = self.run_iteration() {
                            let message = e.to_string();
                            self.group.abort(&message);
                            let _ = self.replies.send(Reply::Failed {
                                chain: self.chain,
                                rank: self.rank as u32,
                                message,
                            });
                            return;
                        }
                        if record && self.rank == 0 {
                            self.emit_monitors();
                        }
                    }
                    let _ = self.replies.send(Reply::Done);
                }
            }
        }
    }

    fn emit_monitors(&self) {
        for &node in self.monitors.iter() {
            let _ = self.replies.send(Reply::Monitor(MonitorRecord {
                chain: self.chain,
                iteration: self.iteration,
                node,
                value: self.state.value(node),
            }));
        }
    }

    fn run_iteration(&mut self) -> Result<(), RuntimeError> {
        let mut pending: Vec<(NodeId, f64)> = Vec::new();
        for row in 0..self.plans.len() {
            match self.plans[row] {
                RowPlan::Cooperative { updater } => self.cooperative_update(updater)?,
                RowPlan::Own { updater } => self.owned_update(updater, &mut pending)?,
                RowPlan::Idle => {}
            }
            if self.gather_here[row] {
                let shared = self.group.all_gather(self.rank, std::mem::take(&mut pending))?;
                for (node, value) in shared {
                    self.state.set_value(node, value);
                }
            }
        }
        debug_assert!(pending.is_empty(), "every sample row set ends in a gather");
        self.iteration += 1;
        self.state.set_iteration(self.iteration);
        Ok(())
    }

    /// Replayed identically on every rank: common stream, local child
    /// slice, allreduce of the likelihood delta.
    fn cooperative_update(&mut self, index: usize) -> Result<(), RuntimeError> {
        let scale = self.updaters[index].scale.scale();
        let updater = &self.updaters[index];
        let dag = &self.dag;
        let group = &self.group;
        let rank = self.rank;
        let local = &updater.local_children;
        let accepted = if updater.members.len() == 1 {
            let node = updater.members[0];
            rw_metropolis_step(dag, node, scale, &mut self.state, &mut self.streams.common, {
                |st: &mut ChainState, cand: f64| {
                    let current = st.value(node);
                    let before = log_density_sum(dag, local, st);
                    st.set_value(node, cand);
                    let after = log_density_sum(dag, local, st);
                    st.set_value(node, current);
                    group.all_reduce_sum(rank, after - before)
                }
            })?
        } else {
            let members = &updater.members;
            let diagonal = vec![scale; members.len()];
            block_rw_metropolis_step(
                dag,
                members,
                &diagonal,
                &mut self.state,
                &mut self.streams.common,
                |st: &mut ChainState, cands: &[f64]| {
                    let saved: Vec<f64> = members.iter().map(|&m| st.value(m)).collect();
                    let before = log_density_sum(dag, local, st);
                    for (&m, &c) in members.iter().zip(cands) {
                        st.set_value(m, c);
                    }
                    let after = log_density_sum(dag, local, st);
                    for (&m, &v) in members.iter().zip(&saved) {
                        st.set_value(m, v);
                    }
                    group.all_reduce_sum(rank, after - before)
                },
            )?
        };
        self.updaters[index].scale.observe(accepted);
        Ok(())
    }

    /// Performed by this rank alone: specific stream, full child set. The
    /// member values are queued for the next gather whether or not the
    /// proposal was accepted.
    fn owned_update(
        &mut self,
        index: usize,
        pending: &mut Vec<(NodeId, f64)>,
    ) -> Result<(), RuntimeError> {
        let scale = self.updaters[index].scale.scale();
        let updater = &self.updaters[index];
        let dag = &self.dag;
        let local = &updater.local_children;
        let accepted = if updater.members.len() == 1 {
            let node = updater.members[0];
            rw_metropolis_step(dag, node, scale, &mut self.state, &mut self.streams.specific, {
                |st: &mut ChainState, cand: f64| {
                    let current = st.value(node);
                    let before = log_density_sum(dag, local, st);
                    st.set_value(node, cand);
                    let after = log_density_sum(dag, local, st);
                    st.set_value(node, current);
                    Ok::<f64, RuntimeError>(after - before)
                }
            })?
        } else {
            let members = &updater.members;
            let diagonal = vec![scale; members.len()];
            block_rw_metropolis_step(
                dag,
                members,
                &diagonal,
                &mut self.state,
                &mut self.streams.specific,
                |st: &mut ChainState, cands: &[f64]| {
                    let saved: Vec<f64> = members.iter().map(|&m| st.value(m)).collect();
                    let before = log_density_sum(dag, local, st);
                    for (&m, &c) in members.iter().zip(cands) {
                        st.set_value(m, c);
                    }
                    let after = log_density_sum(dag, local, st);
                    for (&m, &v) in members.iter().zip(&saved) {
                        st.set_value(m, v);
                    }
                    Ok::<f64, RuntimeError>(after - before)
                },
            )?
        };
        self.updaters[index].scale.observe(accepted);
        for &member in &self.updaters[index].members {
            pending.push((member, self.state.value(member)));
        }
        Ok(())
    }
}

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker thread panicked".to_string()
    }
}

/// Handle to a set of running chains. All methods are synchronous: they
/// broadcast a command and wait for every worker to acknowledge it.
pub struct Engine {
    dag: Arc<Dag>,
    chains: usize,
    cores_per_chain: usize,
    groups: Vec<Arc<GroupContext>>,
    commands: Vec<Sender<Command>>,
    replies: Receiver<Reply>,
    handles: Vec<Option<JoinHandle<()>>>,
    iteration: u64,
    failed: Option<String>,
}

impl Engine {
    pub fn new(
        dag: Arc<Dag>,
        schedule: Arc<ScheduleTable>,
        inits: &[ChainInit],
        cfg: &EngineConfig,
    ) -> Result<Engine, RuntimeError> {
        if cfg.chains == 0 {
            return Err(RuntimeError::Config("at least one chain is required".to_string()));
        }
        if cfg.total_cores == 0 {
            return Err(RuntimeError::Config("at least one core is required".to_string()));
        }
        if cfg.total_cores % cfg.chains != 0 {
            return Err(RuntimeError::Config(format!(
                "{} cores cannot be divided evenly among {} chains",
                cfg.total_cores, cfg.chains
            )));
        }
        let cores_per_chain = cfg.total_cores / cfg.chains;
        if schedule.cores() != cores_per_chain {
            return Err(RuntimeError::Config(format!(
                "the schedule is laid out for {} cores per chain but each chain group has {}",
                schedule.cores(),
                cores_per_chain
            )));
        }
        if inits.len() != cfg.chains {
            return Err(RuntimeError::Config(format!(
                "{} chains need {} sets of initial values, got {}",
                cfg.chains,
                cfg.chains,
                inits.len()
            )));
        }
        validate_continuous_parameters(&dag)?;

        let (reply_tx, reply_rx) = mpsc::channel();
        let mut groups = Vec::with_capacity(cfg.chains);
        let mut commands = Vec::with_capacity(cfg.total_cores);
        let mut handles = Vec::with_capacity(cfg.total_cores);
        for chain in 0..cfg.chains {
            let group = GroupContext::new(chain as u32, cores_per_chain);
            for rank in 0..cores_per_chain {
                let (tx, rx) = mpsc::channel();
                let seat = WorkerSeat {
                    dag: Arc::clone(&dag),
                    schedule: Arc::clone(&schedule),
                    group: Arc::clone(&group),
                    chain: chain as u32,
                    rank,
                    master_seed: cfg.master_seed,
                    init: inits[chain].clone(),
                    commands: rx,
                    replies: reply_tx.clone(),
                };
                let panic_group = Arc::clone(&group);
                let panic_replies = reply_tx.clone();
                let handle = std::thread::Builder::new()
                    .name(format!("chain{chain}-rank{rank}"))
                    .spawn(move || {
                        let outcome = catch_unwind(AssertUnwindSafe(|| worker_thread(seat)));
                        if let Err(payload) = outcome {
                            let message = panic_text(payload);
                            panic_group.abort(&message);
                            let _ = panic_replies.send(Reply::Failed {
                                chain: chain as u32,
                                rank: rank as u32,
                                message,
                            });
                        }
                    })
                    .map_err(|e| {
                        RuntimeError::Config(format!("could not spawn a worker thread: {e}"))
                    })?;
                commands.push(tx);
                handles.push(Some(handle));
            }
            groups.push(group);
        }
        // the master holds no reply sender, so a fully-failed worker pool
        // surfaces as a channel disconnect rather than a hang
        drop(reply_tx);

        let mut engine = Engine {
            dag,
            chains: cfg.chains,
            cores_per_chain,
            groups,
            commands,
            replies: reply_rx,
            handles,
            iteration: 0,
            failed: None,
        };
        if let Err(e) = engine.await_ready() {
            let _ = engine.shutdown_now();
            return Err(e);
        }
        Ok(engine)
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn cores_per_chain(&self) -> usize {
        self.cores_per_chain
    }

    /// Completed iterations per chain.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Runs `count` iterations on every chain. With `record` set, lead
    /// workers stream back one record per monitored node per iteration.
    pub fn update(&mut self, count: u64, record: bool) -> Result<Vec<MonitorRecord>, RuntimeError> {
        self.ensure_live()?;
        self.broadcast(|| Command::Update { count, record })?;
        let mut monitors = Vec::new();
        self.await_done(&mut monitors)?;
        self.iteration += count;
        Ok(monitors)
    }

    pub fn set_monitors(&mut self, nodes: Vec<NodeId>) -> Result<(), RuntimeError> {
        self.ensure_live()?;
        for &node in &nodes {
            if !self.dag.is_parameter(node) {
                return Err(RuntimeError::Config(format!(
                    "`{}` is not a model parameter and cannot be monitored",
                    self.dag.name(node)
                )));
            }
        }
        let shared = Arc::new(nodes);
        self.broadcast(|| Command::SetMonitors(Arc::clone(&shared)))?;
        self.await_done(&mut Vec::new())
    }

    /// Pins every proposal scale at its current value.
    pub fn freeze_adaptation(&mut self) -> Result<(), RuntimeError> {
        self.ensure_live()?;
        self.broadcast(|| Command::FreezeAdaptation)?;
        self.await_done(&mut Vec::new())
    }

    /// Chain state fingerprints, indexed `[chain][rank]`. All ranks of a
    /// chain hold replicas of the same state, so each row must be constant.
    pub fn state_digests(&mut self) -> Result<Vec<Vec<u64>>, RuntimeError> {
        self.ensure_live()?;
        self.broadcast(|| Command::Digest)?;
        let mut grid = vec![vec![0u64; self.cores_per_chain]; self.chains];
        let mut pending = self.chains * self.cores_per_chain;
        while pending > 0 {
            match self.replies.recv() {
                Err(_) => {
                    return Err(RuntimeError::Protocol(
                        "a worker exited while reporting digests".to_string(),
                    ))
                }
                Ok(Reply::Digest { chain, rank, digest }) => {
                    grid[chain as usize][rank as usize] = digest;
                    pending -= 1;
                }
                Ok(Reply::Failed { chain, rank, message }) => {
                    self.failed = Some(message.clone());
                    return Err(RuntimeError::Worker { chain, rank, message });
                }
                Ok(_) => {
                    return Err(RuntimeError::Protocol(
                        "unexpected reply while collecting digests".to_string(),
                    ))
                }
            }
        }
        Ok(grid)
    }

    /// Completed collective rounds for one chain's group.
    pub fn collective_counts(&self, chain: usize) -> CollectiveCounts {
        self.groups[chain].counts()
    }

    pub fn shutdown(mut self) -> Result<(), RuntimeError> {
        self.shutdown_now()
    }

    fn ensure_live(&self) -> Result<(), RuntimeError> {
        match &self.failed {
            Some(message) =>

                Err(RuntimeError::Protocol(format!("the engine has already failed: {message}"))),
            None => Ok(()),
        }
    }

    fn broadcast(&mut self, make: impl Fn() -> Command) -> Result<(), RuntimeError> {
        for (seat, tx) in self.commands.iter().enumerate() {
            if tx.send(make()).is_err() {
                let error = RuntimeError::Worker {
                    chain: (seat / self.cores_per_chain) as u32,
                    rank: (seat % self.cores_per_chain) as u32,
                    message: "worker is no longer running".to_string(),
                };
                self.failed = Some(error.to_string());
                return Err(error);
            }
        }
        Ok(())
    }

    fn await_ready(&mut self) -> Result<(), RuntimeError> {
        let mut pending = self.chains * self.cores_per_chain;
        let mut failure: Option<RuntimeError> = None;
        while pending > 0 {
            match self.replies.recv() {
                Err(_) => {
                    return Err(failure.unwrap_or_else(|| {
                        RuntimeError::Protocol(
                            "workers exited before reporting readiness".to_string(),
                        )
                    }))
                }
                Ok(Reply::Ready) => pending -= 1,
                Ok(Reply::Failed { chain, rank, message }) => {
                    pending -= 1;
                    failure.get_or_insert(RuntimeError::Worker { chain, rank, message });
                }
                Ok(_) => {
                    return Err(RuntimeError::Protocol(
                        "unexpected reply during initialisation".to_string(),
                    ))
                }
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn await_done(&mut self, monitors: &mut Vec<MonitorRecord>) -> Result<(), RuntimeError> {
        let mut pending = self.chains * self.cores_per_chain;
        let mut failure: Option<RuntimeError> = None;
        while pending > 0 {
            match self.replies.recv() {
                Err(_) => {
                    let error = failure.take().unwrap_or_else(|| {
                        RuntimeError::Protocol("a worker exited without reporting".to_string())
                    });
                    self.failed = Some(error.to_string());
                    return Err(error);
                }
                Ok(Reply::Done) => pending -= 1,
                Ok(Reply::Monitor(record)) => monitors.push(record),
                Ok(Reply::Failed { chain, rank, message }) => {
                    pending -= 1;
                    if failure.is_none() {
                        failure = Some(RuntimeError::Worker { chain, rank, message });
                        // wake every group so blocked workers drain quickly
                        for group in &self.groups {
                            group.abort("a worker in the run failed");
                        }
                    }
                }
                Ok(_) => {
                    let error =
                        RuntimeError::Protocol("unexpected reply while updating".to_string());
                    self.failed = Some(error.to_string());
                    return Err(error);
                }
            }
        }
        match failure {
            Some(error) => {
                self.failed = Some(error.to_string());
                Err(error)
            }
            None => Ok(()),
        }
    }

    fn shutdown_now(&mut self) -> Result<(), RuntimeError> {
        for tx in &self.commands {
            let _ = tx.send(Command::Shutdown);
        }
        let mut panicked = false;
        for handle in &mut self.handles {
            if let Some(handle) = handle.take() {
                panicked |= handle.join().is_err();
            }
        }
        if panicked {
            Err(RuntimeError::Protocol("a worker thread panicked".to_string()))
        } else {
            Ok(())
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        let _ = self.shutdown_now();
    }
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("chains", &self.chains)
            .field("cores_per_chain", &self.cores_per_chain)
            .field("iteration", &self.iteration)
            .field("failed", &self.failed)
            .finish_non_exhaustive()
    }
}

/// Maps monitor names to parameter node ids. A name can be a scalar node
/// or an array family; families expand to every element in index order.
pub fn resolve_monitors(dag: &Dag, names: &[String]) -> Result<Vec<NodeId>, RuntimeError> {
    let mut ids = Vec::new();
    for name in names {
        let family = dag.family(name);
        if !family.is_empty() {
            for &id in family {
                if !dag.is_parameter(id) {
                    return Err(RuntimeError::Config(format!(
                        "`{}` is observed and cannot be monitored",
                        dag.name(id)
                    )));
                }
                ids.push(id);
            }
            continue;
        }
        match dag.node_by_name(name) {
            Some(id) if dag.is_parameter(id) => ids.push(id),
            Some(_) => {
                return Err(RuntimeError::Config(format!("`{name}` is not a model parameter")))
            }
            None => {
                return Err(RuntimeError::Config(format!("`{name}` is not a node in the model")))
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    ids.retain(|&id| seen.insert(id));
    Ok(ids)
}

/// One full run: burn-in with adaptation, freeze, then record.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub master_seed: u64,
    pub chains: usize,
    pub total_cores: usize,
    pub burn_in: u64,
    /// Retained iterations per chain after burn-in.
    pub samples: u64,
    pub monitors: Vec<String>,
}

pub fn run_chains(
    dag: &Arc<Dag>,
    schedule: &Arc<ScheduleTable>,
    inits: &[ChainInit],
    cfg: &RunConfig,
) -> Result<MonitorBuffer, RuntimeError> {
    if cfg.samples == 0 {
        return Err(RuntimeError::Config("at least one retained iteration is required".into()));
    }
    if cfg.monitors.is_empty() {
        return Err(RuntimeError::Config("no monitors requested".into()));
    }
    let monitor_ids = resolve_monitors(dag, &cfg.monitors)?;
    let engine_cfg = EngineConfig {
        master_seed: cfg.master_seed,
        chains: cfg.chains,
        total_cores: cfg.total_cores,
    };
    let mut engine = Engine::new(Arc::clone(dag), Arc::clone(schedule), inits, &engine_cfg)?;
    if cfg.burn_in > 0 {
        engine.update(cfg.burn_in, false)?;
    }
    engine.freeze_adaptation()?;
    engine.set_monitors(monitor_ids)?;
    let records = engine.update(cfg.samples, true)?;
    engine.shutdown()?;
    Ok(MonitorBuffer::from_records(dag, &records, cfg.chains, cfg.burn_in + 1))
}
