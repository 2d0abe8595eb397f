//! Synthetic stand-in for the driving simulator.
//!
//! A ground-truth safe region written in the rule DSL labels inputs, a
//! seeded sampler draws datasets over the ODD grid, and
//! [`make_paper_fixture`] builds the 198-run experiment with a baseline pass
//! rule that is inconsistent on exactly 27 runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::counterfactual::{search_counterfactual, Oracle, OracleError, SearchLimits};
use crate::grammar::{check_vocabulary, parse_rule, OddSpec, RuleAst, VocabularyViolation};
use crate::semantics::{
    classify_consistency, decisiveness, evaluate, Binding, ConsistencyVerdict, LabeledRun, Outcome, Polarity,
    PolarizedRule, DEFAULT_EPS_EQ,
};

pub const PAPER_SAFE_REGION: &str = "(dist_front < 4.05) and (ego_speed > 0) or (ego_speed == 0)";
pub const PAPER_BASELINE_RULE: &str = "(dist_front < 5.0) and (ego_speed > 0)";
pub const PAPER_RUNS: usize = 198;
pub const PAPER_MISMATCHES: usize = 27;

const SAMPLING_ATTEMPTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub odd: OddSpec,
    #[serde(with = "crate::grammar::text_serde")]
    pub safe_region: RuleAst,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Odd(#[from] crate::grammar::OddError),
    #[error("safe region is not vocabulary-clean: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Vocabulary(Vec<VocabularyViolation>),
}

impl OracleConfig {
    pub fn new(odd: OddSpec, safe_region: RuleAst, seed: u64) -> Result<OracleConfig, ConfigError> {
        let config = OracleConfig { odd, safe_region, seed };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.odd.validate()?;
        let violations = check_vocabulary(&self.safe_region, &self.odd);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Vocabulary(violations))
        }
    }

    /// Driving ODD with the safety boundary at `dist_front = 4.05`.
    pub fn paper_default(seed: u64) -> OracleConfig {
        let safe_region = parse_rule(PAPER_SAFE_REGION).expect("built-in safe region parses");
        OracleConfig { odd: OddSpec::driving_default(), safe_region, seed }
    }
}

/// Pass iff the safe region holds on `x`.
pub fn oracle_label(config: &OracleConfig, x: &Binding) -> Result<Outcome, OracleError> {
    for var in &config.odd.variables {
        match x.get(&var.name) {
            None => return Err(OracleError::Unbound(var.name.clone())),
            Some(v) if !var.contains(*v) => {
                return Err(OracleError::OutOfDomain { var: var.name.clone(), value: *v })
            }
            _ => {}
        }
    }
    let holds = evaluate(&config.safe_region, x, DEFAULT_EPS_EQ).map_err(|e| OracleError::Other(e.to_string()))?;
    Ok(if holds { Outcome::Pass } else { Outcome::Fail })
}

/// [`Oracle`] backed by an [`OracleConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyOracle {
    pub config: OracleConfig,
}

impl SafetyOracle {
    pub fn new(config: OracleConfig) -> SafetyOracle {
        SafetyOracle { config }
    }
}

impl Oracle for SafetyOracle {
    fn label(&self, x: &Binding) -> Result<Outcome, OracleError> {
        oracle_label(&self.config, x)
    }
}

fn sample_point(rng: &mut ChaCha8Rng, odd: &OddSpec) -> Binding {
    odd.variables
        .iter()
        .map(|v| (v.name.clone(), v.grid_value(rng.random_range(0..=v.grid_steps()))))
        .collect()
}

/// `n` uniform draws over the ODD grid, labeled by the oracle.
pub fn sample_dataset(config: &OracleConfig, n: usize, seed: u64) -> Result<Vec<LabeledRun>, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = sample_point(&mut rng, &config.odd);
            let y = oracle_label(config, &x)?;
            Ok(LabeledRun::new(x, y))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub dataset: Vec<LabeledRun>,
    pub baseline_rule: PolarizedRule,
    /// Consistent rules that accompany the baseline in the rule set.
    pub historical: Vec<PolarizedRule>,
    pub expected_mismatches: usize,
    pub config: OracleConfig,
}

impl Fixture {
    /// Baseline first, then the historical rules.
    pub fn ruleset(&self) -> Vec<PolarizedRule> {
        std::iter::once(self.baseline_rule.clone()).chain(self.historical.iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FixtureError {
    #[error("could not fill the {stratum} stratum ({found} of {wanted})")]
    ConstructionFailure { stratum: &'static str, found: usize, wanted: usize },
    #[error("fixture invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn paper_rule(id: &str, polarity: Polarity, text: &str) -> PolarizedRule {
    PolarizedRule::new(id, polarity, parse_rule(text).expect("built-in rule parses"))
}

/// The reference input `(ego_speed=8.0, dist_front=4.2, lane_offset=0.1)`.
pub fn paper_x1() -> Binding {
    [("ego_speed", 8.0), ("dist_front", 4.2), ("lane_offset", 0.1)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// 198 runs on which the baseline pass rule has exactly 27 inconsistent
/// runs. The reference input is always one of them.
pub fn make_paper_fixture(seed: u64) -> Result<Fixture, FixtureError> {
    let config = OracleConfig::paper_default(seed);
    let baseline = paper_rule("r1", Polarity::Pass, PAPER_BASELINE_RULE);
    let historical = vec![
        paper_rule("f1", Polarity::Fail, "(dist_front > 5) and (ego_speed > 0)"),
        paper_rule("f2", Polarity::Fail, "(dist_front >= 10) and (ego_speed >= 10)"),
        paper_rule("p2", Polarity::Pass, "(ego_speed == 0)"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let x1 = paper_x1();
    let y1 = oracle_label(&config, &x1)?;
    let mut mismatched = vec![LabeledRun::new(x1, y1)];
    let mut other = Vec::new();
    let wanted_other = PAPER_RUNS - PAPER_MISMATCHES;
    for _ in 0..SAMPLING_ATTEMPTS {
        if mismatched.len() == PAPER_MISMATCHES && other.len() == wanted_other {
            break;
        }
        let x = sample_point(&mut rng, &config.odd);
        let run = LabeledRun::new(x.clone(), oracle_label(&config, &x)?);
        let verdict = classify_consistency(&baseline, &run, DEFAULT_EPS_EQ).expect("baseline binds ODD variables");
        match verdict {
            ConsistencyVerdict::Inconsistent if mismatched.len() < PAPER_MISMATCHES => mismatched.push(run),
            ConsistencyVerdict::Inconsistent => {}
            _ if other.len() < wanted_other => other.push(run),
            _ => {}
        }
    }
    if mismatched.len() < PAPER_MISMATCHES {
        return Err(FixtureError::ConstructionFailure {
            stratum: "mismatch",
            found: mismatched.len(),
            wanted: PAPER_MISMATCHES,
        });
    }
    if other.len() < wanted_other {
        return Err(FixtureError::ConstructionFailure { stratum: "consistent", found: other.len(), wanted: wanted_other });
    }

    let mut dataset = mismatched;
    dataset.extend(other);
    dataset.shuffle(&mut rng);

    let report = decisiveness(&baseline, &dataset, DEFAULT_EPS_EQ).expect("dataset is non-empty and bound");
    if report.n_mismatch != PAPER_MISMATCHES || report.n != PAPER_RUNS {
        return Err(FixtureError::Invariant(format!("{} mismatches in {} runs", report.n_mismatch, report.n)));
    }
    let oracle = SafetyOracle::new(config.clone());
    let limits = SearchLimits { max_radius_steps: 20, ..SearchLimits::default() };
    for &i in &report.mismatches {
        let run = &dataset[i];
        if search_counterfactual(&run.x, run.y, &oracle, &config.odd, limits).is_err() {
            return Err(FixtureError::Invariant(format!("run {i} has no counterfactual within 20 steps")));
        }
    }
    Ok(Fixture { dataset, baseline_rule: baseline, historical, expected_mismatches: PAPER_MISMATCHES, config })
}
