//! Log densities, chain state and random-walk Metropolis updates.
//!
//! Updates are written against a caller-supplied likelihood delta, so the
//! same step routine serves both serial evaluation (sum over all children)
//! and cooperative evaluation (sum over a thinned child list, combined
//! across cores with an all-reduce). The proposal draw, the support check
//! and the accept draw always happen in the same order, and a candidate
//! outside the prior's support is rejected before any likelihood work and
//! without consuming the accept draw.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::graph::{Dag, DistKind, NodeId};
use crate::schedule::partition_children;

const LN_2PI: f64 = 1.8378770664093453;

/// Robbins-Monro target acceptance rate for scalar updates.
pub const SCALAR_TARGET_RATE: f64 = 0.44;
/// Robbins-Monro target acceptance rate for block updates.
pub const BLOCK_TARGET_RATE: f64 = 0.234;

#[derive(Debug, Clone, Error)]
pub enum SamplerError {
    #[error("cannot draw `{name}` from {dist}({a}, {b}): invalid parameters")]
    ImproperPrior { name: String, dist: &'static str, a: f64, b: f64 },
    #[error("initial value {value} for `{name}` lies outside the support of its prior")]
    OutOfSupport { name: String, value: f64 },
    #[error("`{name}` is discrete and unobserved; random-walk updates cover continuous parameters only")]
    DiscreteParameter { name: String },
    #[error("non-finite conditional density while updating `{name}`")]
    NonFiniteConditional { name: String },
    #[error("`{0}` is not an unobserved parameter")]
    NotAParameter(String),
}

/// Log density of `x` under a distribution with evaluated parameters.
/// Returns negative infinity outside the support or for invalid parameters.
pub fn log_density(kind: DistKind, x: f64, a: f64, b: f64) -> f64 {
    if !x.is_finite() || !a.is_finite() || !b.is_finite() {
        return f64::NEG_INFINITY;
    }
    match kind {
        DistKind::Normal => {
            // a = mean, b = precision
            if b <= 0.0 {
                return f64::NEG_INFINITY;
            }
            0.5 * (b.ln() - LN_2PI) - 0.5 * b * (x - a) * (x - a)
        }
        DistKind::Uniform => {
            if b <= a {
                return f64::NEG_INFINITY;
            }
            if x < a || x > b {
                f64::NEG_INFINITY
            } else {
                -(b - a).ln()
            }
        }
        DistKind::Binomial => {
            // a = success probability, b = number of trials
            let n = b.round();
            if (b - n).abs() > 1e-6 || n < 0.0 || !(0.0..=1.0).contains(&a) {
                return f64::NEG_INFINITY;
            }
            let k = x.round();
            if (x - k).abs() > 1e-6 || k < 0.0 || k > n {
                return f64::NEG_INFINITY;
            }
            if a == 0.0 {
                return if k == 0.0 { 0.0 } else { f64::NEG_INFINITY };
            }
            if a == 1.0 {
                return if k == n { 0.0 } else { f64::NEG_INFINITY };
            }
            ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
                + k * a.ln()
                + (n - k) * (1.0 - a).ln()
        }
    }
}

pub fn in_support(kind: DistKind, x: f64, a: f64, b: f64) -> bool {
    log_density(kind, x, a, b) > f64::NEG_INFINITY
}

/// Draws from a distribution with evaluated parameters.
pub fn sample_dist<R: Rng + ?Sized>(
    kind: DistKind,
    a: f64,
    b: f64,
    name: &str,
    rng: &mut R,
) -> Result<f64, SamplerError> {
    let invalid = || SamplerError::ImproperPrior { name: name.to_string(), dist: kind.name(), a, b };
    if !a.is_finite() || !b.is_finite() {
        return Err(invalid());
    }
    match kind {
        DistKind::Normal => {
            if b <= 0.0 {
                return Err(invalid());
            }
            let z: f64 = rng.sample(StandardNormal);
            Ok(a + z / b.sqrt())
        }
        DistKind::Uniform => {
            if b <= a {
                return Err(invalid());
            }
            Ok(a + (b - a) * rng.random::<f64>())
        }
        DistKind::Binomial => {
            let n = b.round();
            if (b - n).abs() > 1e-6 || n < 0.0 || !(0.0..=1.0).contains(&a) {
                return Err(invalid());
            }
            let d = rand_distr::Binomial::new(n as u64, a).map_err(|_| invalid())?;
            Ok(rng.sample(d) as f64)
        }
    }
}

/// Values of every node for one chain, plus the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    values: Vec<f64>,
    iteration: u64,
}

impl ChainState {
    /// Constants and observations filled from the dag; parameters NaN until
    /// initial values are assigned.
    pub fn new(dag: &Dag) -> ChainState {
        ChainState { values: dag.base_values(), iteration: 0 }
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.values[id.index()]
    }

    pub fn set_value(&mut self, id: NodeId, value: f64) {
        self.values[id.index()] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn set_iteration(&mut self, iteration: u64) {
        self.iteration = iteration;
    }

    /// FNV-1a hash over the parameter values (canonical order) and the
    /// iteration counter. Workers compare digests to assert they hold the
    /// same chain state.
    pub fn digest(&self, dag: &Dag) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut feed = |word: u64| {
            for byte in word.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        feed(self.iteration);
        for &p in dag.parameters() {
            feed(self.values[p.index()].to_bits());
        }
        h
    }
}

/// Log prior density of one stochastic node given its parents.
pub fn log_prior(dag: &Dag, node: NodeId, state: &ChainState) -> f64 {
    let dist = dag.dist(node).expect("stochastic nodes carry a distribution");
    let [a, b] = dist.param_values(state.values());
    log_density(dist.kind, state.value(node), a, b)
}

/// Sum of log densities of `nodes` given their parents, in list order.
pub fn log_density_sum(dag: &Dag, nodes: &[NodeId], state: &ChainState) -> f64 {
    let mut total = 0.0;
    for &n in nodes {
        total += log_prior(dag, n, state);
    }
    total
}

/// Full log likelihood of a node: the sum over all of its children.
pub fn log_likelihood(dag: &Dag, node: NodeId, state: &ChainState) -> f64 {
    log_density_sum(dag, dag.children(node), state)
}

/// Log likelihood restricted to one core's slice of the children under the
/// round-robin partition.
pub fn log_likelihood_partial(
    dag: &Dag,
    node: NodeId,
    part: usize,
    cores: usize,
    state: &ChainState,
) -> f64 {
    let parts = partition_children(dag, node, cores);
    log_density_sum(dag, &parts[part], state)
}

/// Log full conditional: prior plus likelihood.
pub fn log_conditional(dag: &Dag, node: NodeId, state: &ChainState) -> f64 {
    log_prior(dag, node, state) + log_likelihood(dag, node, state)
}

/// One adaptive random-walk Metropolis update of a scalar parameter.
///
/// `delta_loglik` receives the state (positioned at the current value) and
/// the candidate; it must return `log L(candidate) - log L(current)` and
/// leave the state at the current value. In cooperative mode it is the
/// place where partial sums are combined across cores.
///
/// Draw order is fixed: one standard normal for the proposal, then (only
/// for candidates inside the prior support) one uniform for the accept
/// decision.
pub fn rw_metropolis_step<R, F, E>(
    dag: &Dag,
    node: NodeId,
    scale: f64,
    state: &mut ChainState,
    rng: &mut R,
    delta_loglik: F,
) -> Result<bool, E>
where
    R: Rng + ?Sized,
    F: FnOnce(&mut ChainState, f64) -> Result<f64, E>,
    E: From<SamplerError>,
{
    let dist = dag.dist(node).expect("stochastic nodes carry a distribution");
    if dist.kind.is_discrete() {
        return Err(SamplerError::DiscreteParameter { name: dag.name(node).to_string() }.into());
    }
    let current = state.value(node);
    let [a, b] = dist.param_values(state.values());
    let lp_current = log_density(dist.kind, current, a, b);
    if !lp_current.is_finite() {
        return Err(
            SamplerError::NonFiniteConditional { name: dag.name(node).to_string() }.into()
        );
    }

    let z: f64 = rng.sample(StandardNormal);
    let candidate = current + scale * z;
    // the node's own prior parameters depend only on its parents, so they
    // are unchanged under the proposal
    let lp_candidate = log_density(dist.kind, candidate, a, b);
    if lp_candidate == f64::NEG_INFINITY {
        return Ok(false);
    }

    let delta = delta_loglik(state, candidate)?;
    if delta.is_nan() {
        return Err(
            SamplerError::NonFiniteConditional { name: dag.name(node).to_string() }.into()
        );
    }

    let log_ratio = lp_candidate - lp_current + delta;
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        state.set_value(node, candidate);
        Ok(true)
    } else {
        Ok(false)
    }
}

/// One joint random-walk update of a block of parameters with independent
/// normal increments (`scales` is the diagonal of the proposal).
///
/// `delta_loglik` receives the state at the current values and the
/// candidate vector (member order); it must return the block likelihood
/// delta and restore the current values. The joint prior covers every
/// member, so within-block edges are accounted for on both sides.
pub fn block_rw_metropolis_step<R, F, E>(
    dag: &Dag,
    members: &[NodeId],
    scales: &[f64],
    state: &mut ChainState,
    rng: &mut R,
    delta_loglik: F,
) -> Result<bool, E>
where
    R: Rng + ?Sized,
    F: FnOnce(&mut ChainState, &[f64]) -> Result<f64, E>,
    E: From<SamplerError>,
{
    assert_eq!(members.len(), scales.len(), "one proposal scale per block member");
    for &m in members {
        let dist = dag.dist(m).expect("stochastic nodes carry a distribution");
        if dist.kind.is_discrete() {
            return Err(SamplerError::DiscreteParameter { name: dag.name(m).to_string() }.into());
        }
    }
    let block_name = || dag.name(members[0]).to_string();

    let currents: Vec<f64> = members.iter().map(|&m| state.value(m)).collect();
    let lp_current: f64 = members.iter().map(|&m| log_prior(dag, m, state)).sum();
    if !lp_current.is_finite() {
        return Err(SamplerError::NonFiniteConditional { name: block_name() }.into());
    }

    let candidates: Vec<f64> = members
        .iter()
        .zip(scales)
        .map(|(_, &s)| {
            let z: f64 = rng.sample(StandardNormal);
            s * z
        })
        .zip(&currents)
        .map(|(step, &cur)| cur + step)
        .collect();

    for (&m, &c) in members.iter().zip(&candidates) {
        state.set_value(m, c);
    }
    let lp_candidate: f64 = members.iter().map(|&m| log_prior(dag, m, state)).sum();
    for (&m, &c) in members.iter().zip(&currents) {
        state.set_value(m, c);
    }
    if lp_candidate == f64::NEG_INFINITY {
        return Ok(false);
    }

    let delta = delta_loglik(state, &candidates)?;
    if delta.is_nan() {
        return Err(SamplerError::NonFiniteConditional { name: block_name() }.into());
    }

    let log_ratio = lp_candidate - lp_current + delta;
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        for (&m, &c) in members.iter().zip(&candidates) {
            state.set_value(m, c);
        }
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Robbins-Monro step size adaptation on the log proposal scale. The gain
/// decays as t^-0.6, and [`AdaptiveScale::freeze`] pins the scale for the
/// sampling phase.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveScale {
    log_scale: f64,
    target: f64,
    steps: u64,
    frozen: bool,
}

impl AdaptiveScale {
    pub fn new(target: f64) -> AdaptiveScale {
        AdaptiveScale { log_scale: 0.0, target, steps: 0, frozen: false }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn observe(&mut self, accepted: bool) {
        if self.frozen {
            return;
        }
        self.steps += 1;
        let gain = (self.steps as f64).powf(-0.6);
        let direction = if accepted { 1.0 - self.target } else { -self.target };
        self.log_scale = (self.log_scale + gain * direction).clamp(-20.0, 20.0);
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }
}

/// Rejects graphs with discrete unobserved parameters, which the
/// random-walk samplers cannot update.
pub fn validate_continuous_parameters(dag: &Dag) -> Result<(), SamplerError> {
    for &p in dag.parameters() {
        let dist = dag.dist(p).expect("stochastic nodes carry a distribution");
        if dist.kind.is_discrete() {
            return Err(SamplerError::DiscreteParameter { name: dag.name(p).to_string() });
        }
    }
    Ok(())
}

/// Builds a complete initial state: provided values are applied, every
/// other parameter is drawn from its prior in depth order, and the result
/// is checked to give each parameter a finite prior density.
pub fn generate_initial_values<R: Rng + ?Sized>(
    dag: &Dag,
    provided: &BTreeMap<NodeId, f64>,
    rng: &mut R,
) -> Result<ChainState, SamplerError> {
    validate_continuous_parameters(dag)?;
    let mut state = ChainState::new(dag);
    for (&id, &value) in provided {
        if !dag.is_parameter(id) {
            return Err(SamplerError::NotAParameter(dag.name(id).to_string()));
        }
        state.set_value(id, value);
    }

    let mut order: Vec<NodeId> = dag.parameters().to_vec();
    order.sort_by_key(|&p| (dag.depth(p), p));
    for &p in &order {
        if provided.contains_key(&p) {
            continue;
        }
        let dist = dag.dist(p).expect("stochastic nodes carry a distribution");
        let [a, b] = dist.param_values(state.values());
        let value = sample_dist(dist.kind, a, b, dag.name(p), rng)?;
        state.set_value(p, value);
    }

    for &p in &order {
        if !log_prior(dag, p, &state).is_finite() {
            return Err(SamplerError::OutOfSupport {
                name: dag.name(p).to_string(),
                value: state.value(p),
            });
        }
    }
    Ok(state)
}
