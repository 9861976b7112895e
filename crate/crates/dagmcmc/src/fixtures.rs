//! Synthetic data generator for the e-health benchmark model.
//!
//! The model is a two-part hierarchical linear regression over health records.
//! Prescriptions where the person is known ("indexed") carry person, region
//! and source effects plus four person-level covariates; prescriptions where
//! the person is unknown ("nonindexed") share the region and source effects
//! around a common intercept. The generator simulates a complete data set
//! from fixed ground-truth parameters and writes a self-contained directory:
//!
//! * `model.bug` — the model itself (also available as [`EHEALTH_MODEL`]),
//! * `data.txt` — simulated observations and index vectors,
//! * `inits1.txt`, `inits2.txt` — two overdispersed starting points,
//! * `truth.txt` — the parameter values the data were simulated from.
//!
//! One person is given roughly forty times as many observations as the rest,
//! so that sampling- versus likelihood-parallelisation decisions have
//! something to bite on: that person's random effect picks up enough children
//! to cross the cooperative-update threshold while everyone else stays below
//! it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// The e-health model text written to `model.bug`.
pub const EHEALTH_MODEL: &str = "\
model {
  # Outcomes with person-level data available
  for (i in 1:n.indexed) {
    outcome.y[i] ~ dnorm(mu.indexed[i], tau.epsilon)
    mu.indexed[i] <- beta[1] * x1[i] +
                     beta[2] * x2[i] +
                     beta[3] * x3[i] +
                     beta[4] * x4[i] +
                     region.effect[region.indexed[i]] +
                     source.effect[region.indexed[i]] * source.indexed[i] +
                     person.effect[person.indexed[i]]
  }

  # Outcomes without person-level data available
  for (i in 1:n.nonindexed){
    outcome.z[i] ~ dnorm(mu.nonindexed[i], tau.eta)
    mu.nonindexed[i] <- lambda +
                        region.effect[region.nonindexed[i]] +
                        source.effect[region.nonindexed[i]] *
                                      source.nonindexed[i]
  }

  # Hierarchical priors
  for (i in 1:n.persons){
    person.effect[i] ~ dnorm(0, tau.person)
  }
  for (i in 1:n.regions) {
    region.effect[i] ~ dnorm(mu.region, tau.region)
    source.effect[i] ~ dnorm(mu.source, tau.source)
  }

  lambda ~ dnorm(0, 0.0001)
  mu.region ~ dnorm(0, 0.0001)
  mu.source ~ dnorm(0, 0.0001)

  # Priors for regression parameters
  for (m in 1:4){
    beta[m] ~ dnorm(0, 0.0001)
  }

  # Priors for variance parameters
  tau.eta <- 1/pow(sd.eta, 2)
  sd.eta ~ dunif(0, 10)
  tau.epsilon <- 1/pow(sd.epsilon, 2)
  sd.epsilon ~ dunif(0, 10)
  tau.person <- 1/pow(sd.person, 2)
  sd.person ~ dunif(0, 10)
  tau.source <- 1/pow(sd.source, 2)
  sd.source ~ dunif(0, 10)
  tau.region <- 1/pow(sd.region, 2)
  sd.region ~ dunif(0, 10)
}
";

/// Starting values for the two chains, written to `inits1.txt` and
/// `inits2.txt`.
pub const EHEALTH_INITS: [&str; 2] = [
    "list(lambda = 0, beta = c(0, 0, 0, 0), mu.source = 0, sd.epsilon = 0.5,
     sd.person = 0.5, sd.source = 0.5, sd.region = 0.5, sd.eta = 0.5)
",
    "list(lambda = 0.5, beta = c(0.5, 0.5, 0.5, 0.5), mu.source = 0.5,
     sd.epsilon = 1, sd.person = 1, sd.source = 1, sd.region = 1,
     sd.eta = 1)
",
];

/// How many observations the dominant person receives for every observation
/// an ordinary person receives.
const DOMINANT_WEIGHT: usize = 40;

/// Probability that a prescription comes from the flagged source.
const SOURCE_RATE: f64 = 0.6;

/// Ground truth used to simulate the data; written to `truth.txt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhealthTruth {
    pub beta: [f64; 4],
    pub lambda: f64,
    pub mu_region: f64,
    pub mu_source: f64,
    pub sd_region: f64,
    pub sd_source: f64,
    pub sd_person: f64,
    pub sd_epsilon: f64,
    pub sd_eta: f64,
}

pub const EHEALTH_TRUTH: EhealthTruth = EhealthTruth {
    beta: [0.8, -0.4, 0.3, 0.15],
    lambda: 1.5,
    mu_region: 2.0,
    mu_source: -0.7,
    sd_region: 0.6,
    sd_source: 0.4,
    sd_person: 0.8,
    sd_epsilon: 1.1,
    sd_eta: 1.3,
};

/// Sizes and seed for a generated data set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EhealthConfig {
    pub persons: usize,
    pub regions: usize,
    /// Total prescription count; 60% become indexed observations and 40%
    /// nonindexed, echoing the real data's split.
    pub prescriptions: usize,
    pub seed: u64,
}

/// Paths and bookkeeping for a generated data set.
#[derive(Debug, Clone)]
pub struct EhealthFixture {
    pub model: PathBuf,
    pub data: PathBuf,
    pub inits: [PathBuf; 2],
    pub truth: PathBuf,
    /// Observations with a person index (`outcome.y`).
    pub indexed: usize,
    /// Observations without one (`outcome.z`).
    pub nonindexed: usize,
    /// 1-based index of the person with the outsized record count.
    pub dominant_person: usize,
    /// How many indexed observations that person received.
    pub dominant_observations: usize,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("sizes too small to populate all plates: {0}")]
    TooSmall(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn observation_counts(config: &EhealthConfig) -> Result<(usize, usize, Vec<usize>), FixtureError> {
    if config.regions == 0 {
        return Err(FixtureError::TooSmall("at least one region is required".into()));
    }
    if config.persons < config.regions {
        return Err(FixtureError::TooSmall(format!(
            "{} persons cannot cover {} regions",
            config.persons, config.regions
        )));
    }
    let nonindexed = config.prescriptions * 2 / 5;
    let indexed = config.prescriptions - nonindexed;
    if nonindexed == 0 {
        return Err(FixtureError::TooSmall(format!(
            "{} prescriptions leave the nonindexed outcome plate empty",
            config.prescriptions
        )));
    }
    // Everyone gets `base` observations; the dominant person absorbs the
    // remainder, which works out to roughly DOMINANT_WEIGHT * base.
    let weight_total = config.persons - 1 + DOMINANT_WEIGHT;
    let base = indexed / weight_total;
    if base == 0 {
        return Err(FixtureError::TooSmall(format!(
            "{} indexed prescriptions cannot give each of {} persons at least \
             one observation plus a {}x share for the dominant person (need \
             at least {})",
            indexed, config.persons, DOMINANT_WEIGHT, weight_total
        )));
    }
    let mut per_person = vec![base; config.persons];
    per_person[0] = indexed - base * (config.persons - 1);
    Ok((indexed, nonindexed, per_person))
}

fn push_vector(out: &mut String, name: &str, values: &[f64]) {
    let _ = write!(out, "{} = c(", name);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
            if i % 8 == 0 {
                out.push('\n');
            } else {
                out.push(' ');
            }
        }
        let _ = write!(out, "{:?}", v);
    }
    out.push(')');
}

fn push_index_vector(out: &mut String, name: &str, values: &[usize]) {
    let _ = write!(out, "{} = c(", name);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
            if i % 16 == 0 {
                out.push('\n');
            } else {
                out.push(' ');
            }
        }
        let _ = write!(out, "{}", v);
    }
    out.push(')');
}

/// Simulates a data set and writes the five fixture files into `out_dir`
/// (created if missing). Identical configurations produce byte-identical
/// files.
pub fn generate_ehealth(
    config: &EhealthConfig,
    out_dir: &Path,
) -> Result<EhealthFixture, FixtureError> {
    let (indexed, nonindexed, per_person) = observation_counts(config)?;
    let truth = EHEALTH_TRUTH;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let normal = |rng: &mut ChaCha12Rng| -> f64 { rng.sample(StandardNormal) };

    // Person-level covariates (shared by all of that person's observations).
    let mut x = vec![[0.0f64; 4]; config.persons];
    for row in &mut x {
        row[0] = f64::from(rng.random::<f64>() < 0.5);
        row[1] = f64::from(rng.random::<f64>() < 0.5);
        row[2] = normal(&mut rng);
        row[3] = normal(&mut rng);
    }
    let person_effect: Vec<f64> =
        (0..config.persons).map(|_| truth.sd_person * normal(&mut rng)).collect();
    let region_effect: Vec<f64> =
        (0..config.regions).map(|_| truth.mu_region + truth.sd_region * normal(&mut rng)).collect();
    let source_effect: Vec<f64> =
        (0..config.regions).map(|_| truth.mu_source + truth.sd_source * normal(&mut rng)).collect();
    let region_of = |person: usize| person % config.regions; // 0-based

    let mut outcome_y = Vec::with_capacity(indexed);
    let mut x_cols = vec![Vec::with_capacity(indexed); 4];
    let mut region_indexed = Vec::with_capacity(indexed);
    let mut person_indexed = Vec::with_capacity(indexed);
    let mut source_indexed = Vec::with_capacity(indexed);
    for (person, &count) in per_person.iter().enumerate() {
        let region = region_of(person);
        for _ in 0..count {
            let source = f64::from(rng.random::<f64>() < SOURCE_RATE);
            let mean = truth.beta.iter().zip(&x[person]).map(|(b, v)| b * v).sum::<f64>()
                + region_effect[region]
                + source_effect[region] * source
                + person_effect[person];
            outcome_y.push(mean + truth.sd_epsilon * normal(&mut rng));
            for (col, value) in x_cols.iter_mut().zip(&x[person]) {
                col.push(*value);
            }
            region_indexed.push(region + 1);
            person_indexed.push(person + 1);
            source_indexed.push(source);
        }
    }

    let mut outcome_z = Vec::with_capacity(nonindexed);
    let mut region_nonindexed = Vec::with_capacity(nonindexed);
    let mut source_nonindexed = Vec::with_capacity(nonindexed);
    for obs in 0..nonindexed {
        let region = obs % config.regions;
        let source = f64::from(rng.random::<f64>() < SOURCE_RATE);
        let mean = truth.lambda + region_effect[region] + source_effect[region] * source;
        outcome_z.push(mean + truth.sd_eta * normal(&mut rng));
        region_nonindexed.push(region + 1);
        source_nonindexed.push(source);
    }

    let mut data = String::new();
    let _ = write!(
        data,
        "list(n.indexed = {}, n.nonindexed = {}, n.persons = {}, n.regions = {},\n",
        indexed, nonindexed, config.persons, config.regions
    );
    push_vector(&mut data, "outcome.y", &outcome_y);
    data.push_str(",\n");
    for (m, col) in x_cols.iter().enumerate() {
        push_vector(&mut data, &format!("x{}", m + 1), col);
        data.push_str(",\n");
    }
    push_index_vector(&mut data, "region.indexed", &region_indexed);
    data.push_str(",\n");
    push_index_vector(&mut data, "person.indexed", &person_indexed);
    data.push_str(",\n");
    push_vector(&mut data, "source.indexed", &source_indexed);
    data.push_str(",\n");
    push_vector(&mut data, "outcome.z", &outcome_z);
    data.push_str(",\n");
    push_index_vector(&mut data, "region.nonindexed", &region_nonindexed);
    data.push_str(",\n");
    push_vector(&mut data, "source.nonindexed", &source_nonindexed);
    data.push_str(")\n");

    let mut truth_text = String::new();
    truth_text.push_str("list(");
    push_vector(&mut truth_text, "beta", &truth.beta);
    let scalars = [
        ("lambda", truth.lambda),
        ("mu.region", truth.mu_region),
        ("mu.source", truth.mu_source),
        ("sd.region", truth.sd_region),
        ("sd.source", truth.sd_source),
        ("sd.person", truth.sd_person),
        ("sd.epsilon", truth.sd_epsilon),
        ("sd.eta", truth.sd_eta),
    ];
    for (name, value) in scalars {
        let _ = write!(truth_text, ",\n{} = {:?}", name, value);
    }
    truth_text.push_str(")\n");

    fs::create_dir_all(out_dir)?;
    let fixture = EhealthFixture {
        model: out_dir.join("model.bug"),
        data: out_dir.join("data.txt"),
        inits: [out_dir.join("inits1.txt"), out_dir.join("inits2.txt")],
        truth: out_dir.join("truth.txt"),
        indexed,
        nonindexed,
        dominant_person: 1,
        dominant_observations: per_person[0],
    };
    fs::write(&fixture.model, EHEALTH_MODEL)?;
    fs::write(&fixture.data, &data)?;
    fs::write(&fixture.inits[0], EHEALTH_INITS[0])?;
    fs::write(&fixture.inits[1], EHEALTH_INITS[1])?;
    fs::write(&fixture.truth, &truth_text)?;
    Ok(fixture)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{compile_graph, parse_data, parse_model};

    fn small() -> EhealthConfig {
        EhealthConfig { persons: 30, regions: 4, prescriptions: 3000, seed: 11 }
    }

    fn read(path: &Path) -> String {
        fs::read_to_string(path).unwrap()
    }

    #[test]
    fn the_same_config_regenerates_byte_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        let first = generate_ehealth(&small(), &dir.path().join("a")).unwrap();
        let second = generate_ehealth(&small(), &dir.path().join("b")).unwrap();
        assert_eq!(read(&first.data), read(&second.data));
        assert_eq!(read(&first.model), read(&second.model));
        assert_eq!(read(&first.truth), read(&second.truth));
        let third = generate_ehealth(
            &EhealthConfig { seed: 12, ..small() },
            &dir.path().join("c"),
        )
        .unwrap();
        assert_ne!(read(&first.data), read(&third.data));
    }

    #[test]
    fn the_checked_in_model_file_matches_the_embedded_text() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/ehealth/model.bug");
        assert_eq!(fs::read_to_string(path).unwrap(), EHEALTH_MODEL);
    }

    #[test]
    fn the_model_text_has_the_documented_shape() {
        let ast = parse_model(EHEALTH_MODEL).unwrap();
        assert_eq!(ast.relation_counts(), (14, 7));
        assert_eq!(ast.loop_count(), 5);
    }

    #[test]
    fn generated_files_compile_into_the_expected_graph() {
        let dir = tempfile::tempdir().unwrap();
        let config = small();
        let fixture = generate_ehealth(&config, dir.path()).unwrap();
        let ast = parse_model(&read(&fixture.model)).unwrap();
        let env = parse_data(&read(&fixture.data)).unwrap();
        let dag = compile_graph(&ast, &env).unwrap();

        // 12 scalar parameters plus one effect per person and two per region.
        let scalars = 12;
        assert_eq!(dag.parameters().len(), scalars + config.persons + 2 * config.regions);
        let observed = fixture.indexed + fixture.nonindexed;
        assert_eq!(config.prescriptions, observed);
        assert_eq!(fixture.nonindexed, config.prescriptions * 2 / 5);

        // The dominant person's effect has one child per observation; an
        // ordinary person sits at the flat base rate.
        let dominant = dag.node_by_name("person.effect[1]").unwrap();
        assert_eq!(dag.children(dominant).len(), fixture.dominant_observations);
        let ordinary = dag.node_by_name("person.effect[2]").unwrap();
        let base = dag.children(ordinary).len();
        assert!(base > 0);
        assert!(
            fixture.dominant_observations >= (DOMINANT_WEIGHT - 5) * base,
            "dominant person has {} observations but the base rate is {}",
            fixture.dominant_observations,
            base
        );

        // Both kinds of inits map straight onto parameter names.
        for path in &fixture.inits {
            let inits = parse_data(&read(path)).unwrap();
            for (name, _) in inits.named_scalars() {
                let node = dag.node_by_name(&name).unwrap();
                assert!(dag.is_parameter(node), "{} is not a parameter", name);
            }
        }
    }

    #[test]
    fn every_person_and_region_plate_is_populated() {
        let dir = tempfile::tempdir().unwrap();
        let config = small();
        let fixture = generate_ehealth(&config, dir.path()).unwrap();
        let env = parse_data(&read(&fixture.data)).unwrap();
        let mut person_seen = vec![false; config.persons];
        let persons = env.get("person.indexed").unwrap();
        for i in 1..=fixture.indexed {
            let p = persons.element(&[i as i64]).unwrap().unwrap() as usize;
            person_seen[p - 1] = true;
        }
        assert!(person_seen.iter().all(|&seen| seen));
        let mut region_seen = vec![false; config.regions];
        for name in ["region.indexed", "region.nonindexed"] {
            let regions = env.get(name).unwrap();
            let len = if name == "region.indexed" { fixture.indexed } else { fixture.nonindexed };
            for i in 1..=len {
                let r = regions.element(&[i as i64]).unwrap().unwrap() as usize;
                region_seen[r - 1] = true;
            }
        }
        assert!(region_seen.iter().all(|&seen| seen));
    }

    #[test]
    fn undersized_configurations_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let few_persons = EhealthConfig { persons: 3, regions: 5, prescriptions: 1000, seed: 1 };
        let err = generate_ehealth(&few_persons, dir.path()).unwrap_err();
        assert!(err.to_string().contains("plates"), "{}", err);
        assert!(err.to_string().contains("3 persons cannot cover 5 regions"), "{}", err);

        let few_scripts = EhealthConfig { persons: 30, regions: 4, prescriptions: 60, seed: 1 };
        let err = generate_ehealth(&few_scripts, dir.path()).unwrap_err();
        assert!(err.to_string().contains("dominant"), "{}", err);

        let none = EhealthConfig { persons: 1, regions: 1, prescriptions: 2, seed: 1 };
        let err = generate_ehealth(&none, dir.path()).unwrap_err();
        assert!(err.to_string().contains("nonindexed"), "{}", err);
    }
}
