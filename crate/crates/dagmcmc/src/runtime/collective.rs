//! Collective operations shared by the workers of one chain.
//!
//! A [`GroupContext`] is a reusable rendezvous: every rank deposits a
//! contribution, the last one to arrive publishes the combined round, and
//! all ranks leave with the same view. Combination is always performed in
//! rank order, so the floating point result does not depend on which rank
//! happened to arrive last. Waiting is fully blocking; no worker spins.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use crate::graph::NodeId;

use super::RuntimeError;

#[derive(Debug, Clone)]
enum Payload {
    Delta(f64),
    Values(Vec<(NodeId, f64)>),
}

struct Round {
    generation: u64,
    arrived: usize,
    slots: Vec<Option<Payload>>,
    published: Arc<Vec<Payload>>,
    abort: Option<String>,
}

/// Number of completed reduce and gather rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectiveCounts {
    pub reduces: u64,
    pub gathers: u64,
}

/// Rendezvous point for the fixed-size worker group of one chain.
pub struct GroupContext {
    chain: u32,
    size: usize,
    round: Mutex<Round>,
    done: Condvar,
    reduces: AtomicU64,
    gathers: AtomicU64,
}

impl GroupContext {
    pub fn new(chain: u32, size: usize) -> Arc<GroupContext> {
        assert!(size >= 1, "a worker group needs at least one member");
        Arc::new(GroupContext {
            chain,
            size,
            round: Mutex::new(Round {
                generation: 0,
                arrived: 0,
                slots: vec![None; size],
                published: Arc::new(Vec::new()),
                abort: None,
            }),
            done: Condvar::new(),
            reduces: AtomicU64::new(0),
            gathers: AtomicU64::new(0),
        })
    }

    pub fn chain(&self) -> u32 {
        self.chain
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Marks the group as failed and wakes every waiter. The first reason
    /// sticks; later calls keep it.
    pub fn abort(&self, reason: &str) {
        let mut round = self.round.lock().unwrap();
        if round.abort.is_none() {
            round.abort = Some(reason.to_string());
        }
        self.done.notify_all();
    }

    pub fn counts(&self) -> CollectiveCounts {
        CollectiveCounts {
            reduces: self.reduces.load(Ordering::Relaxed),
            gathers: self.gathers.load(Ordering::Relaxed),
        }
    }

    /// Deposits this rank's contribution and blocks until the whole group
    /// has arrived. A rank can only start the next round after it has left
    /// the current one, which keeps the slot array unambiguous.
    fn exchange(&self, rank: usize, payload: Payload) -> Result<Arc<Vec<Payload>>, RuntimeError> {
        let mut round = self.round.lock().unwrap();
        if let Some(reason) = &round.abort {
            return Err(RuntimeError::Aborted { chain: self.chain, reason: reason.clone() });
        }
        if round.slots[rank].is_some() {
            return Err(RuntimeError::Protocol(format!(
                "rank {rank} deposited twice in one collective round"
            )));
        }
        round.slots[rank] = Some(payload);
        round.arrived += 1;
        let my_generation = round.generation;
        if round.arrived == self.size {
            let items: Vec<Payload> =
                round.slots.iter_mut().map(|s| s.take().expect("slot filled")).collect();
            let published = Arc::new(items);
            round.published = Arc::clone(&published);
            round.arrived = 0;
            round.generation += 1;
            self.done.notify_all();
            return Ok(published);
        }
        loop {
            round = self.done.wait(round).unwrap();
            if let Some(reason) = &round.abort {
                return Err(RuntimeError::Aborted { chain: self.chain, reason: reason.clone() });
            }
            if round.generation > my_generation {
                return Ok(Arc::clone(&round.published));
            }
        }
    }

    /// Sum of every rank's value, summed in rank order on all ranks so the
    /// result is bitwise identical everywhere.
    pub fn all_reduce_sum(&self, rank: usize, value: f64) -> Result<f64, RuntimeError> {
        if rank == 0 {
            self.reduces.fetch_add(1, Ordering::Relaxed);
        }
        let all = self.exchange(rank, Payload::Delta(value))?;
        let mut sum = 0.0;
        for payload in all.iter() {
            match payload {
                Payload::Delta(x) => sum += x,
                Payload::Values(_) => {
                    return Err(RuntimeError::Protocol(
                        "a gather arrived during a reduce round".to_string(),
                    ))
                }
            }
        }
        Ok(sum)
    }

    /// Concatenation of every rank's items in rank order.
    pub fn all_gather(
        &self,
        rank: usize,
        items: Vec<(NodeId, f64)>,
    ) -> Result<Vec<(NodeId, f64)>, RuntimeError> {
        if rank == 0 {
            self.gathers.fetch_add(1, Ordering::Relaxed);
        }
        let all = self.exchange(rank, Payload::Values(items))?;
        let mut out = Vec::new();
        for payload in all.iter() {
            match payload {
                Payload::Values(v) => out.extend_from_slice(v),
                Payload::Delta(_) => {
                    return Err(RuntimeError::Protocol(
                        "a reduce arrived during a gather round".to_string(),
                    ))
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn reduce_sums_in_rank_order_on_every_rank() {
        let ctx = GroupContext::new(0, 4);
        let inputs = [0.1, 0.2, 0.3, 0.4];
        let expected = ((0.1f64 + 0.2) + 0.3) + 0.4;
        let sums: Vec<f64> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..4)
                .map(|rank| {
                    let ctx = Arc::clone(&ctx);
                    scope.spawn(move || {
                        // arrival order is deliberately scrambled
                        std::thread::sleep(Duration::from_millis(5 * (4 - rank as u64)));
                        ctx.all_reduce_sum(rank, inputs[rank]).unwrap()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for &s in &sums {
            assert_eq!(s.to_bits(), expected.to_bits());
        }
    }

    #[test]
    fn gather_concatenates_in_rank_order() {
        let ctx = GroupContext::new(0, 3);
        let outputs: Vec<Vec<(NodeId, f64)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..3)
                .map(|rank| {
                    let ctx = Arc::clone(&ctx);
                    scope.spawn(move || {
                        let mine = vec![(NodeId::new(rank), rank as f64)];
                        ctx.all_gather(rank, mine).unwrap()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let expected =
            vec![(NodeId::new(0), 0.0), (NodeId::new(1), 1.0), (NodeId::new(2), 2.0)];
        for got in outputs {
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn rounds_can_be_reused_many_times() {
        let ctx = GroupContext::new(1, 2);
        std::thread::scope(|scope| {
            for rank in 0..2usize {
                let ctx = Arc::clone(&ctx);
                scope.spawn(move || {
                    for round in 0..200 {
                        let sum = ctx.all_reduce_sum(rank, (rank + round) as f64).unwrap();
                        assert_eq!(sum, (2 * round + 1) as f64);
                        let items = ctx.all_gather(rank, vec![(NodeId::new(rank), 1.0)]).unwrap();
                        assert_eq!(items.len(), 2);
                    }
                });
            }
        });
        assert_eq!(ctx.counts(), CollectiveCounts { reduces: 200, gathers: 200 });
    }

    #[test]
    fn abort_wakes_a_blocked_rank() {
        let ctx = GroupContext::new(2, 2);
        std::thread::scope(|scope| {
            let waiting = {
                let ctx = Arc::clone(&ctx);
                scope.spawn(move || ctx.all_reduce_sum(0, 1.0))
            };
            std::thread::sleep(Duration::from_millis(20));
            ctx.abort("synthetic failure");
            let err = waiting.join().unwrap().unwrap_err();
            assert!(matches!(err, RuntimeError::Aborted { chain: 2, .. }), "got {err}");
        });
        // the group stays failed for later calls
        assert!(ctx.all_reduce_sum(1, 1.0).is_err());
    }

    #[test]
    fn single_rank_group_is_the_identity() {
        let ctx = GroupContext::new(0, 1);
        assert_eq!(ctx.all_reduce_sum(0, 2.5).unwrap(), 2.5);
        let items = vec![(NodeId::new(7), 1.5)];
        assert_eq!(ctx.all_gather(0, items.clone()).unwrap(), items);
        assert_eq!(ctx.counts(), CollectiveCounts { reduces: 1, gathers: 1 });
    }
}
