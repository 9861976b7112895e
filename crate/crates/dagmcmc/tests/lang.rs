//! Compiler oracles: evaluate inlined distribution parameters against
//! hand-written arithmetic that never touches the expression machinery.

mod common;

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use dagmcmc::fixtures::{generate_ehealth, EhealthConfig};
use dagmcmc::lang::{compile_graph, parse_data, parse_model};
use dagmcmc::sampler::{log_density_sum, ChainState};

use common::{fixture_dir, seeds_dag};

const LN_2PI: f64 = 1.8378770664093453;

/// The seed trial data exactly as it appears in `fixtures/seeds/data.txt`.
const R: [f64; 21] = [
    10., 23., 23., 26., 17., 5., 53., 55., 32., 46., 10., 8., 10., 8., 23., 0., 3., 22., 15.,
    32., 3.,
];
const N: [f64; 21] = [
    39., 62., 81., 51., 39., 6., 74., 72., 51., 79., 13., 16., 30., 28., 45., 4., 12., 41., 30.,
    51., 7.,
];
const X1: [f64; 21] =
    [0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 1., 1., 1., 1., 1., 1., 1., 1.];
const X2: [f64; 21] =
    [0., 0., 0., 0., 0., 0., 1., 1., 1., 1., 1., 0., 0., 0., 0., 0., 1., 1., 1., 1., 1.];

fn ln_choose(n: f64, k: f64) -> f64 {
    let ln_factorial = |m: f64| -> f64 { (2..=(m as u64)).map(|v| (v as f64).ln()).sum() };
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

#[test]
fn seeds_likelihood_matches_hand_computed_binomial() {
    let dag = seeds_dag();
    let mut rng = StdRng::seed_from_u64(42);
    let mut state = ChainState::new(&dag);

    let alpha: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sigma = rng.random_range(0.3..2.0);
    let b: Vec<f64> = (0..21).map(|_| rng.random_range(-0.5..0.5)).collect();
    for (name, value) in
        [("alpha0", alpha[0]), ("alpha1", alpha[1]), ("alpha2", alpha[2]), ("alpha12", alpha[3])]
    {
        state.set_value(dag.node_by_name(name).unwrap(), value);
    }
    state.set_value(dag.node_by_name("sigma.beta").unwrap(), sigma);
    for (i, &value) in b.iter().enumerate() {
        state.set_value(dag.node_by_name(&format!("b[{}]", i + 1)).unwrap(), value);
    }

    for i in 0..21 {
        // The model says logit(p) is the linear predictor; the compiler must
        // have inlined p into the observation's success probability.
        let lp = alpha[0] + alpha[1] * X1[i] + alpha[2] * X2[i] + alpha[3] * X1[i] * X2[i] + b[i];
        let p = 1.0 / (1.0 + (-lp).exp());
        let expected = ln_choose(N[i], R[i]) + R[i] * p.ln() + (N[i] - R[i]) * (1.0 - p).ln();
        let node = dag.node_by_name(&format!("r[{}]", i + 1)).unwrap();
        let actual = log_density_sum(&dag, &[node], &state);
        assert!(
            (actual - expected).abs() < 1e-9,
            "r[{}]: engine {} vs oracle {}",
            i + 1,
            actual,
            expected
        );
    }
}

#[test]
fn seeds_random_effect_prior_uses_inlined_precision() {
    let dag = seeds_dag();
    let mut rng = StdRng::seed_from_u64(7);
    let mut state = ChainState::new(&dag);
    for name in ["alpha0", "alpha1", "alpha2", "alpha12"] {
        state.set_value(dag.node_by_name(name).unwrap(), 0.0);
    }
    for trial in 0..20 {
        let sigma: f64 = rng.random_range(0.2..3.0);
        let value: f64 = rng.random_range(-2.0..2.0);
        state.set_value(dag.node_by_name("sigma.beta").unwrap(), sigma);
        let node = dag.node_by_name("b[3]").unwrap();
        state.set_value(node, value);
        // tau <- 1/pow(sigma.beta, 2) must have been folded into the prior.
        let tau = 1.0 / (sigma * sigma);
        let expected = 0.5 * (tau.ln() - LN_2PI) - 0.5 * tau * value * value;
        let actual = log_density_sum(&dag, &[node], &state);
        assert!(
            (actual - expected).abs() < 1e-10,
            "trial {}: engine {} vs oracle {}",
            trial,
            actual,
            expected
        );
    }
}

#[test]
fn seeds_fixture_matches_its_documented_shape() {
    let dir = fixture_dir("seeds");
    let model = parse_model(&std::fs::read_to_string(dir.join("model.bug")).unwrap()).unwrap();
    assert_eq!(model.relation_counts(), (7, 2));
    let data = parse_data(&std::fs::read_to_string(dir.join("data.txt")).unwrap()).unwrap();
    assert_eq!(data.len(), 5);
    let dag = compile_graph(&model, &data).unwrap();
    assert_eq!(dag.parameters().len(), 26);
    assert_eq!(dag.observed_count(), 21);
}

struct EhealthCase {
    dag: std::sync::Arc<dagmcmc::graph::Dag>,
    env: dagmcmc::lang::DataEnvironment,
    state: ChainState,
    values: BTreeMap<String, f64>,
}

fn ehealth_case(seed: u64) -> EhealthCase {
    let dir = tempfile::tempdir().unwrap();
    let config = EhealthConfig { persons: 24, regions: 4, prescriptions: 1500, seed: 5 };
    let fixture = generate_ehealth(&config, dir.path()).unwrap();
    let model = parse_model(&std::fs::read_to_string(&fixture.model).unwrap()).unwrap();
    let env = parse_data(&std::fs::read_to_string(&fixture.data).unwrap()).unwrap();
    let dag = std::sync::Arc::new(compile_graph(&model, &env).unwrap());

    let mut rng = StdRng::seed_from_u64(seed);
    let mut state = ChainState::new(&dag);
    let mut values = BTreeMap::new();
    for &p in dag.parameters() {
        let name = dag.name(p).to_string();
        let value = if name.starts_with("sd.") {
            rng.random_range(0.3..3.0)
        } else {
            rng.random_range(-1.5..1.5)
        };
        state.set_value(p, value);
        values.insert(name, value);
    }
    EhealthCase { dag, env, state, values }
}

impl EhealthCase {
    fn datum(&self, name: &str, i: usize) -> f64 {
        self.env.get(name).unwrap().element(&[i as i64]).unwrap().unwrap()
    }

    fn value(&self, name: &str) -> f64 {
        self.values[name]
    }
}

#[test]
fn ehealth_indexed_mean_matches_hand_computed_regression() {
    let case = ehealth_case(31);
    for i in [1usize, 2, 17, 450, 900] {
        let region = case.datum("region.indexed", i) as usize;
        let person = case.datum("person.indexed", i) as usize;
        let source = case.datum("source.indexed", i);
        let mut mu = case.value(&format!("region.effect[{}]", region))
            + case.value(&format!("source.effect[{}]", region)) * source
            + case.value(&format!("person.effect[{}]", person));
        for m in 1..=4 {
            mu += case.value(&format!("beta[{}]", m)) * case.datum(&format!("x{}", m), i);
        }
        let tau = 1.0 / case.value("sd.epsilon").powi(2);
        let y = case.datum("outcome.y", i);
        let expected = 0.5 * (tau.ln() - LN_2PI) - 0.5 * tau * (y - mu) * (y - mu);
        let node = case.dag.node_by_name(&format!("outcome.y[{}]", i)).unwrap();
        let actual = log_density_sum(&case.dag, &[node], &case.state);
        assert!(
            (actual - expected).abs() < 1e-9,
            "outcome.y[{}]: engine {} vs oracle {}",
            i,
            actual,
            expected
        );
    }
}

#[test]
fn ehealth_nonindexed_mean_matches_hand_computed_regression() {
    let case = ehealth_case(32);
    for i in [1usize, 3, 99, 400, 600] {
        let region = case.datum("region.nonindexed", i) as usize;
        let source = case.datum("source.nonindexed", i);
        let mu = case.value("lambda")
            + case.value(&format!("region.effect[{}]", region))
            + case.value(&format!("source.effect[{}]", region)) * source;
        let tau = 1.0 / case.value("sd.eta").powi(2);
        let z = case.datum("outcome.z", i);
        let expected = 0.5 * (tau.ln() - LN_2PI) - 0.5 * tau * (z - mu) * (z - mu);
        let node = case.dag.node_by_name(&format!("outcome.z[{}]", i)).unwrap();
        let actual = log_density_sum(&case.dag, &[node], &case.state);
        assert!(
            (actual - expected).abs() < 1e-9,
            "outcome.z[{}]: engine {} vs oracle {}",
            i,
            actual,
            expected
        );
    }
}
