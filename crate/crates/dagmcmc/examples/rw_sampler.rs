//! The sampling primitive on its own: adaptive random-walk Metropolis for a
//! conjugate normal–normal model whose posterior is known in closed form.
//!
//! ```text
//! cargo run --example rw_sampler
//! ```
//!
//! Model: mu ~ N(0, sd 10), y_i | mu ~ N(mu, sd 1), observed y_1..y_25.
//! With these numbers the posterior of mu is normal with known mean and
//! standard deviation, so the example can check the sampler's output against
//! the truth. It also shows the division of labour used everywhere else in
//! the crate: the Metropolis step evaluates the *prior* itself and leaves
//! the likelihood delta to a closure — the hook the runtime uses to swap in
//! a distributed partial sum.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use dagmcmc::graph::{DagBuilder, DistKind};
use dagmcmc::sampler::{
    log_density_sum, rw_metropolis_step, AdaptiveScale, ChainState, SamplerError,
    SCALAR_TARGET_RATE,
};

fn main() {
    // Build the graph directly; the model language would produce the same.
    let observations: Vec<f64> =
        (0..25).map(|i| 3.0 + ((i * 37 + 11) % 97) as f64 / 97.0 - 0.5).collect();
    let mut b = DagBuilder::new();
    // dnorm takes (mean, precision); precision 0.01 is a sd-10 prior.
    let mu = b.parameter("mu", DistKind::Normal, [0.0.into(), 0.01.into()]).unwrap();
    let mut ys = Vec::new();
    for (i, &y) in observations.iter().enumerate() {
        let id = b
            .observed(&format!("y[{}]", i + 1), DistKind::Normal, [mu.into(), 1.0.into()], y)
            .unwrap();
        ys.push(id);
    }
    let dag = b.build().unwrap();

    // Conjugate posterior: precision = n + 0.01, mean = sum(y) / (n + 0.01).
    let n = observations.len() as f64;
    let post_mean = observations.iter().sum::<f64>() / (n + 0.01);
    let post_sd = (1.0 / (n + 0.01)).sqrt();

    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let mut state = ChainState::new(&dag);
    state.set_value(mu, 0.0);
    let mut scale = AdaptiveScale::new(SCALAR_TARGET_RATE);
    let mut accepted = 0usize;
    let mut draws = Vec::new();
    let (burn_in, samples) = (2000usize, 20000usize);
    for step in 0..burn_in + samples {
        if step == burn_in {
            scale.freeze();
        }
        // The likelihood delta closure: children's log density at the
        // candidate minus at the current value, leaving the state unchanged.
        // The runtime evaluates the same quantity as a partial sum per
        // worker followed by an all-reduce; serially it is a subtraction.
        let accept = rw_metropolis_step(&dag, mu, scale.scale(), &mut state, &mut rng, {
            let ys = &ys;
            |state: &mut ChainState, candidate: f64| {
                let current = state.value(mu);
                let before = log_density_sum(&dag, ys, state);
                state.set_value(mu, candidate);
                let after = log_density_sum(&dag, ys, state);
                state.set_value(mu, current);
                Ok::<f64, SamplerError>(after - before)
            }
        })
        .unwrap();
        scale.observe(accept);
        if step >= burn_in {
            accepted += usize::from(accept);
            draws.push(state.value(mu));
        }
    }

    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    println!("conjugate posterior: mean {:.4}, sd {:.4}", post_mean, post_sd);
    println!("sampled posterior:   mean {:.4}, sd {:.4}", mean, var.sqrt());
    println!(
        "acceptance rate {:.3} (adapted towards {:.2}), final proposal scale {:.4}",
        accepted as f64 / draws.len() as f64,
        SCALAR_TARGET_RATE,
        scale.scale()
    );
    assert!((mean - post_mean).abs() < 0.02, "posterior mean off: {mean} vs {post_mean}");
    assert!((var.sqrt() - post_sd).abs() < 0.02, "posterior sd off");
    println!("matches the closed form within Monte Carlo error");
}
