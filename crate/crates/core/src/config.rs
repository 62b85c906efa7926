//! TOML scenario files.
//!
//! A scenario document names the experiment: fleet, target, policy, seeds,
//! and solver tolerances. Shorthands keep files small: `target =
//! "uniform:1200"` spreads 1200 points evenly, `initial_cloud = "zeros"`,
//! `confusion = "identity"` or `"noisy-symmetric:0.9"`. Everything except
//! `n_class`, `rounds`, `target`, and the robot list has a default.
//!
//! Parsing is strict: unknown keys are rejected, dimensions are checked
//! against `n_class`, and every error names the offending field or robot.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::message::CommMode;
use crate::model::{
    ClassDistribution, ConfusionMatrix, EstimationMode, RobotProfile, DIST_SUM_TOL,
};
use crate::policies::PolicyKind;
use crate::sim::{RealizationMode, Scenario, SolverSettings};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("not valid TOML: {0}")]
    Parse(String),
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("field `{field}` has the wrong dimension: expected {expected}, got {actual}")]
    BadDimension {
        field: String,
        expected: usize,
        actual: usize,
    },
    #[error(
        "unknown policy \"{0}\"; valid policies are uniform, greedy, oracle, interactive, \
         lower-bound"
    )]
    UnknownPolicy(String),
    #[error("robot {robot}: confusion row {row} does not sum to 1")]
    RowNotStochastic { robot: usize, row: usize },
    #[error("field `{field}` has unsupported value \"{value}\"; expected {expected}")]
    UnknownValue {
        field: String,
        value: String,
        expected: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
}

type CfgResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ArrayOrName {
    Name(String),
    Counts(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ConfusionSpec {
    Name(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    n_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_robot: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<ArrayOrName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_cloud: Option<ArrayOrName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comm_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimation_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    realization: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<RawSolver>,
    #[serde(skip_serializing_if = "Option::is_none")]
    robots: Option<Vec<RawRobot>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    #[serde(skip_serializing_if = "Option::is_none")]
    step_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_sweeps: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobot {
    #[serde(skip_serializing_if = "Option::is_none")]
    true_dist: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confusion: Option<ConfusionSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    obs_per_round: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cache_budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confusion_schedule: Option<Vec<ConfusionSpec>>,
}

fn missing(field: impl Into<String>) -> ConfigError {
    ConfigError::MissingField(field.into())
}

fn invalid(field: &str, detail: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(format!("{field}: {detail}"))
}

fn expand_counts(spec: &ArrayOrName, n_class: usize, field: &str) -> CfgResult<Vec<f64>> {
    let counts = match spec {
        ArrayOrName::Counts(v) => v.clone(),
        ArrayOrName::Name(s) => {
            if s == "zeros" {
                vec![0.0; n_class]
            } else if let Some(total) = s.strip_prefix("uniform:") {
                let total: f64 = total
                    .parse()
                    .map_err(|_| invalid(field, format!("cannot parse total in \"{s}\"")))?;
                if !total.is_finite() || total < 0.0 {
                    return Err(invalid(field, format!("total {total} must be nonnegative")));
                }
                vec![total / n_class as f64; n_class]
            } else {
                return Err(ConfigError::UnknownValue {
                    field: field.into(),
                    value: s.clone(),
                    expected: "an array of counts, \"uniform:<total>\", or \"zeros\"",
                });
            }
        }
    };
    if counts.len() != n_class {
        return Err(ConfigError::BadDimension {
            field: field.into(),
            expected: n_class,
            actual: counts.len(),
        });
    }
    if let Some(bad) = counts.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(invalid(field, format!("count {bad} must be finite and nonnegative")));
    }
    Ok(counts)
}

fn expand_confusion(
    spec: &ConfusionSpec,
    n_class: usize,
    robot: usize,
    field: &str,
) -> CfgResult<ConfusionMatrix> {
    match spec {
        ConfusionSpec::Name(s) => {
            if s == "identity" {
                ConfusionMatrix::identity(n_class).map_err(|e| invalid(field, e))
            } else if let Some(acc) = s.strip_prefix("noisy-symmetric:") {
                let accuracy: f64 = acc
                    .parse()
                    .map_err(|_| invalid(field, format!("cannot parse accuracy in \"{s}\"")))?;
                ConfusionMatrix::noisy_symmetric(n_class, accuracy).map_err(|e| invalid(field, e))
            } else {
                Err(ConfigError::UnknownValue {
                    field: field.into(),
                    value: s.clone(),
                    expected: "a row matrix, \"identity\", or \"noisy-symmetric:<accuracy>\"",
                })
            }
        }
        ConfusionSpec::Matrix(rows) => {
            if rows.len() != n_class {
                return Err(ConfigError::BadDimension {
                    field: field.into(),
                    expected: n_class,
                    actual: rows.len(),
                });
            }
            for (k, row) in rows.iter().enumerate() {
                if row.len() != n_class {
                    return Err(ConfigError::BadDimension {
                        field: format!("{field}[{k}]"),
                        expected: n_class,
                        actual: row.len(),
                    });
                }
                if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(invalid(
                        &format!("{field}[{k}]"),
                        "entries must be finite and nonnegative",
                    ));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > DIST_SUM_TOL {
                    return Err(ConfigError::RowNotStochastic { robot, row: k });
                }
            }
            ConfusionMatrix::from_rows(rows.clone()).map_err(|e| invalid(field, e))
        }
    }
}

/// Parse and fully validate one scenario document.
pub fn parse_scenario_config(document: &str) -> CfgResult<Scenario> {
    let raw: RawScenario =
        toml::from_str(document).map_err(|e| ConfigError::Parse(e.to_string()))?;

    let n_class = raw.n_class.ok_or_else(|| missing("n_class"))?;
    if n_class == 0 {
        return Err(invalid("n_class", "must be at least 1"));
    }
    let rounds = raw.rounds.ok_or_else(|| missing("rounds"))?;
    if rounds == 0 {
        return Err(invalid("rounds", "must be at least 1"));
    }

    let target = expand_counts(
        &raw.target.ok_or_else(|| missing("target"))?,
        n_class,
        "target",
    )?;
    let initial_cloud = match &raw.initial_cloud {
        None => vec![0.0; n_class],
        Some(spec) => expand_counts(spec, n_class, "initial_cloud")?,
    };

    let policy = match raw.policy.as_deref() {
        None => PolicyKind::Interactive,
        Some(name) => {
            PolicyKind::from_name(name).ok_or_else(|| ConfigError::UnknownPolicy(name.into()))?
        }
    };
    let comm_mode = match raw.comm_mode.as_deref() {
        None => CommMode::Broadcast,
        Some(name) => CommMode::from_name(name).ok_or_else(|| ConfigError::UnknownValue {
            field: "comm_mode".into(),
            value: name.into(),
            expected: "\"broadcast\" or \"ring\"",
        })?,
    };
    let estimation = match raw.estimation_mode.as_deref() {
        None => EstimationMode::GroundTruth,
        Some(name) => {
            EstimationMode::from_name(name).ok_or_else(|| ConfigError::UnknownValue {
                field: "estimation_mode".into(),
                value: name.into(),
                expected: "\"ground-truth\" or \"linear-inversion\"",
            })?
        }
    };
    let realization = match raw.realization.as_deref() {
        None => RealizationMode::Sampled,
        Some(name) => {
            RealizationMode::from_name(name).ok_or_else(|| ConfigError::UnknownValue {
                field: "realization".into(),
                value: name.into(),
                expected: "\"expected\" or \"sampled\"",
            })?
        }
    };

    let defaults = SolverSettings::default();
    let raw_solver = raw.solver.unwrap_or_default();
    let solver = SolverSettings {
        step_tolerance: raw_solver.step_tolerance.unwrap_or(defaults.step_tolerance),
        objective_tolerance: raw_solver
            .objective_tolerance
            .unwrap_or(defaults.objective_tolerance),
        max_iterations: raw_solver.max_iterations.unwrap_or(defaults.max_iterations),
        sweep_threshold: raw_solver
            .sweep_threshold
            .unwrap_or(defaults.sweep_threshold),
        max_sweeps: raw_solver.max_sweeps.unwrap_or(defaults.max_sweeps),
    };

    let raw_robots = raw.robots.ok_or_else(|| missing("robots"))?;
    if raw_robots.is_empty() {
        return Err(invalid("robots", "at least one robot is required"));
    }
    if let Some(declared) = raw.n_robot {
        if declared != raw_robots.len() {
            return Err(ConfigError::BadDimension {
                field: "robots".into(),
                expected: declared,
                actual: raw_robots.len(),
            });
        }
    }

    let mut robots = Vec::with_capacity(raw_robots.len());
    let mut confusion_schedule = Vec::with_capacity(raw_robots.len());
    for (i, raw_robot) in raw_robots.iter().enumerate() {
        let dist_field = format!("robots[{i}].true_dist");
        let dist = raw_robot
            .true_dist
            .as_ref()
            .ok_or_else(|| missing(&dist_field))?;
        if dist.len() != n_class {
            return Err(ConfigError::BadDimension {
                field: dist_field,
                expected: n_class,
                actual: dist.len(),
            });
        }
        let true_dist =
            ClassDistribution::new(dist.clone()).map_err(|e| invalid(&dist_field, e))?;

        let confusion_field = format!("robots[{i}].confusion");
        let confusion = match &raw_robot.confusion {
            None => ConfusionMatrix::identity(n_class)
                .map_err(|e| invalid(&confusion_field, e))?,
            Some(spec) => expand_confusion(spec, n_class, i, &confusion_field)?,
        };

        let obs_per_round = raw_robot
            .obs_per_round
            .ok_or_else(|| missing(format!("robots[{i}].obs_per_round")))?;
        let cache_budget = raw_robot
            .cache_budget
            .ok_or_else(|| missing(format!("robots[{i}].cache_budget")))?;

        robots.push(
            RobotProfile::new(i, true_dist, confusion, obs_per_round, cache_budget)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
        );

        confusion_schedule.push(match &raw_robot.confusion_schedule {
            None => None,
            Some(entries) => {
                let field = format!("robots[{i}].confusion_schedule");
                if entries.len() != rounds {
                    return Err(ConfigError::BadDimension {
                        field,
                        expected: rounds,
                        actual: entries.len(),
                    });
                }
                let mut expanded = Vec::with_capacity(entries.len());
                for (r, spec) in entries.iter().enumerate() {
                    expanded.push(expand_confusion(spec, n_class, i, &format!("{field}[{r}]"))?);
                }
                Some(expanded)
            }
        });
    }

    let scenario = Scenario {
        n_class,
        rounds,
        target,
        initial_cloud,
        robots,
        confusion_schedule,
        policy,
        comm_mode,
        seed: raw.seed.unwrap_or(0),
        estimation,
        realization,
        solver,
    };
    scenario
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(scenario)
}

/// Serialize a scenario back to TOML with every shorthand expanded. Parsing
/// the output reproduces the scenario exactly.
pub fn scenario_to_toml(scenario: &Scenario) -> String {
    let matrix_rows = |c: &ConfusionMatrix| -> Vec<Vec<f64>> {
        (0..c.n_class()).map(|k| c.row(k).to_vec()).collect()
    };
    let raw = RawScenario {
        n_class: Some(scenario.n_class),
        n_robot: Some(scenario.n_robot()),
        rounds: Some(scenario.rounds),
        target: Some(ArrayOrName::Counts(scenario.target.clone())),
        initial_cloud: Some(ArrayOrName::Counts(scenario.initial_cloud.clone())),
        policy: Some(scenario.policy.name().into()),
        comm_mode: Some(scenario.comm_mode.name().into()),
        seed: Some(scenario.seed),
        estimation_mode: Some(scenario.estimation.name().into()),
        realization: Some(scenario.realization.name().into()),
        solver: Some(RawSolver {
            step_tolerance: Some(scenario.solver.step_tolerance),
            objective_tolerance: Some(scenario.solver.objective_tolerance),
            max_iterations: Some(scenario.solver.max_iterations),
            sweep_threshold: Some(scenario.solver.sweep_threshold),
            max_sweeps: Some(scenario.solver.max_sweeps),
        }),
        robots: Some(
            scenario
                .robots
                .iter()
                .zip(&scenario.confusion_schedule)
                .map(|(robot, schedule)| RawRobot {
                    true_dist: Some(robot.true_dist.as_slice().to_vec()),
                    confusion: Some(ConfusionSpec::Matrix(matrix_rows(&robot.confusion))),
                    obs_per_round: Some(robot.obs_per_round),
                    cache_budget: Some(robot.cache_budget),
                    confusion_schedule: schedule
                        .as_ref()
                        .map(|cs| cs.iter().map(|c| ConfusionSpec::Matrix(matrix_rows(c))).collect()),
                })
                .collect(),
        ),
    };
    toml::to_string_pretty(&raw).expect("expanded scenario serializes to TOML")
}

/// Read and parse a scenario file.
pub fn load_scenario(path: &Path) -> crate::Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_scenario_config(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
n_class = 2
rounds = 3
target = [10.0, 10.0]

[[robots]]
true_dist = [0.5, 0.5]
obs_per_round = 100
cache_budget = 2.0
"#;

    #[test]
    fn minimal_document_fills_defaults() {
        let s = parse_scenario_config(MINIMAL).unwrap();
        assert_eq!(s.n_class, 2);
        assert_eq!(s.rounds, 3);
        assert_eq!(s.target, vec![10.0, 10.0]);
        assert_eq!(s.initial_cloud, vec![0.0, 0.0]);
        assert_eq!(s.policy, PolicyKind::Interactive);
        assert_eq!(s.comm_mode, CommMode::Broadcast);
        assert_eq!(s.seed, 0);
        assert_eq!(s.estimation, EstimationMode::GroundTruth);
        assert_eq!(s.realization, RealizationMode::Sampled);
        assert_eq!(s.solver, SolverSettings::default());
        assert_eq!(s.robots.len(), 1);
        assert_eq!(s.robots[0].confusion, ConfusionMatrix::identity(2).unwrap());
        assert_eq!(s.confusion_schedule, vec![None]);
    }

    #[test]
    fn shorthands_expand() {
        let doc = r#"
n_class = 10
rounds = 1
target = "uniform:1200"
initial_cloud = "zeros"

[[robots]]
true_dist = [0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]
confusion = "noisy-symmetric:0.9"
obs_per_round = 1000
cache_budget = 10.0
"#;
        let s = parse_scenario_config(doc).unwrap();
        assert_eq!(s.target, vec![120.0; 10]);
        assert_eq!(s.initial_cloud, vec![0.0; 10]);
        let c = &s.robots[0].confusion;
        assert!((c.entry(0, 0) - 0.9).abs() < 1e-12);
        assert!((c.entry(0, 1) - 0.1 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_policy_lists_the_valid_names() {
        let doc = MINIMAL.replace("rounds = 3", "rounds = 3\npolicy = \"greddy\"");
        let err = parse_scenario_config(&doc).unwrap_err();
        match &err {
            ConfigError::UnknownPolicy(name) => assert_eq!(name, "greddy"),
            other => panic!("expected UnknownPolicy, got {other:?}"),
        }
        let text = err.to_string();
        for name in ["uniform", "greedy", "oracle", "interactive", "lower-bound"] {
            assert!(text.contains(name), "error text misses {name}: {text}");
        }
    }

    #[test]
    fn non_stochastic_confusion_row_is_rejected() {
        let doc = MINIMAL.replace(
            "cache_budget = 2.0",
            "cache_budget = 2.0\nconfusion = [[0.5, 0.4], [0.1, 0.9]]",
        );
        match parse_scenario_config(&doc).unwrap_err() {
            ConfigError::RowNotStochastic { robot, row } => {
                assert_eq!((robot, row), (0, 0));
            }
            other => panic!("expected RowNotStochastic, got {other:?}"),
        }
    }

    #[test]
    fn missing_fields_are_named() {
        let doc = MINIMAL.replace("rounds = 3\n", "");
        match parse_scenario_config(&doc).unwrap_err() {
            ConfigError::MissingField(f) => assert_eq!(f, "rounds"),
            other => panic!("{other:?}"),
        }
        let doc = MINIMAL.replace("cache_budget = 2.0\n", "");
        match parse_scenario_config(&doc).unwrap_err() {
            ConfigError::MissingField(f) => assert_eq!(f, "robots[0].cache_budget"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_errors_name_the_field() {
        let doc = MINIMAL.replace("target = [10.0, 10.0]", "target = [10.0, 10.0, 5.0]");
        match parse_scenario_config(&doc).unwrap_err() {
            ConfigError::BadDimension {
                field,
                expected,
                actual,
            } => {
                assert_eq!(field, "target");
                assert_eq!((expected, actual), (2, 3));
            }
            other => panic!("{other:?}"),
        }

        let doc = MINIMAL.replace("rounds = 3", "rounds = 3\nn_robot = 4");
        match parse_scenario_config(&doc).unwrap_err() {
            ConfigError::BadDimension { field, .. } => assert_eq!(field, "robots"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schedule_length_must_match_rounds() {
        let doc = MINIMAL.replace(
            "cache_budget = 2.0",
            "cache_budget = 2.0\nconfusion_schedule = [\"identity\", \"identity\"]",
        );
        match parse_scenario_config(&doc).unwrap_err() {
            ConfigError::BadDimension {
                field,
                expected,
                actual,
            } => {
                assert_eq!(field, "robots[0].confusion_schedule");
                assert_eq!((expected, actual), (3, 2));
            }
            other => panic!("{other:?}"),
        }

        let doc = MINIMAL.replace(
            "cache_budget = 2.0",
            "cache_budget = 2.0\nconfusion_schedule = [\"identity\", \"noisy-symmetric:0.8\", \"identity\"]",
        );
        let s = parse_scenario_config(&doc).unwrap();
        let schedule = s.confusion_schedule[0].as_ref().unwrap();
        assert_eq!(schedule.len(), 3);
        assert!((schedule[1].entry(0, 0) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_and_bad_syntax_are_parse_errors() {
        let doc = MINIMAL.replace("rounds", "rouns");
        match parse_scenario_config(&doc).unwrap_err() {
            ConfigError::Parse(text) => assert!(text.contains("rouns"), "{text}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_scenario_config("rounds = [[").unwrap_err(),
            ConfigError::Parse(_)
        ));
    }

    #[test]
    fn unknown_mode_values_name_their_field() {
        let doc = MINIMAL.replace("rounds = 3", "rounds = 3\nrealization = \"both\"");
        match parse_scenario_config(&doc).unwrap_err() {
            ConfigError::UnknownValue { field, value, .. } => {
                assert_eq!(field, "realization");
                assert_eq!(value, "both");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn integer_literals_coerce_to_float_fields() {
        let doc = MINIMAL
            .replace("target = [10.0, 10.0]", "target = [10, 10]")
            .replace("cache_budget = 2.0", "cache_budget = 2");
        let s = parse_scenario_config(&doc).unwrap();
        assert_eq!(s.target, vec![10.0, 10.0]);
        assert_eq!(s.robots[0].cache_budget, 2.0);
    }

    #[test]
    fn parse_serialize_parse_is_idempotent() {
        let doc = r#"
n_class = 3
n_robot = 2
rounds = 4
target = "uniform:60"
initial_cloud = [1.0, 0.0, 2.0]
policy = "oracle"
comm_mode = "ring"
seed = 9
estimation_mode = "linear-inversion"
realization = "expected"

[solver]
step_tolerance = 1e-9
max_sweeps = 50

[[robots]]
true_dist = [0.2, 0.3, 0.5]
confusion = "noisy-symmetric:0.85"
obs_per_round = 400
cache_budget = 12.0

[[robots]]
true_dist = [0.6, 0.2, 0.2]
confusion = [[0.9, 0.05, 0.05], [0.1, 0.8, 0.1], [0.0, 0.1, 0.9]]
obs_per_round = 300
cache_budget = 8.0
confusion_schedule = ["identity", "identity", "noisy-symmetric:0.7", "identity"]
"#;
        let first = parse_scenario_config(doc).unwrap();
        let serialized = scenario_to_toml(&first);
        let second = parse_scenario_config(&serialized).unwrap();
        assert_eq!(first, second);
        assert_eq!(serialized, scenario_to_toml(&second));
    }
}
