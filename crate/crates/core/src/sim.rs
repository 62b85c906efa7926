//! Round-based fleet simulation.
//!
//! Each round every robot observes a fresh synthetic label stream through
//! its confusion channel, estimates its true-class distribution (or is
//! handed it), builds its posterior matrix, and the configured policy picks
//! upload actions. Actions are rounded to whole data points, pushed through
//! the channel (exactly in Expected mode, by sampling in Sampled mode), and
//! the cloud state and metrics advance. Every random draw comes from a
//! substream keyed by (seed, robot, round, purpose), so runs are exactly
//! reproducible and adding a robot never perturbs another robot's draws.

use rand::Rng;

use crate::error::Error;
use crate::message::{CommMode, MessageTransport};
use crate::model::{
    build_feasible_matrix, loss_l2, update_cloud_counts, Action, ClassDistribution, CloudState,
    ConfusionMatrix, EstimationMode, FeasibleDataMatrix, RobotProfile,
};
use crate::policies::{
    greedy_action, interactive_actions, lower_bound_for_capacity, oracle_actions, uniform_action,
    PolicyKind,
};
use crate::rng::{draw_categorical, substream, StreamPurpose};
use crate::solver::SolverConfig;
use crate::Result;

/// Solver and sweep tolerances for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub step_tolerance: f64,
    pub objective_tolerance: f64,
    pub max_iterations: usize,
    pub sweep_threshold: f64,
    pub max_sweeps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            step_tolerance: 1e-10,
            objective_tolerance: 1e-9,
            max_iterations: 100_000,
            sweep_threshold: 1e-7,
            max_sweeps: 1000,
        }
    }
}

impl SolverSettings {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            step_tolerance: self.step_tolerance,
            objective_tolerance: self.objective_tolerance,
            max_iterations: self.max_iterations,
        }
    }
}

/// Whether uploads push expected counts or sampled data points to the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealizationMode {
    /// Contributions are P·a exactly; trajectories are deterministic.
    Expected,
    /// Each uploaded point's true class is drawn from its posterior column.
    Sampled,
}

impl RealizationMode {
    pub fn name(self) -> &'static str {
        match self {
            RealizationMode::Expected => "expected",
            RealizationMode::Sampled => "sampled",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "expected" => Some(RealizationMode::Expected),
            "sampled" => Some(RealizationMode::Sampled),
            _ => None,
        }
    }
}

/// One fully specified experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_class: usize,
    pub rounds: usize,
    pub target: Vec<f64>,
    pub initial_cloud: Vec<f64>,
    pub robots: Vec<RobotProfile>,
    /// Optional per-robot channel drift: entry i, when present, holds one
    /// confusion matrix per round that replaces robot i's static channel for
    /// that round.
    pub confusion_schedule: Vec<Option<Vec<ConfusionMatrix>>>,
    pub policy: PolicyKind,
    pub comm_mode: CommMode,
    pub seed: u64,
    pub estimation: EstimationMode,
    pub realization: RealizationMode,
    pub solver: SolverSettings,
}

impl Scenario {
    pub fn n_robot(&self) -> usize {
        self.robots.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_class == 0 {
            return Err(Error::ZeroClasses);
        }
        if self.robots.is_empty() {
            return Err(Error::EmptyFleet);
        }
        if self.rounds == 0 {
            return Err(Error::InvalidState("rounds must be at least 1".into()));
        }
        if self.target.len() != self.n_class {
            return Err(Error::DimensionMismatch {
                context: "scenario target",
                expected: self.n_class,
                actual: self.target.len(),
            });
        }
        if self.initial_cloud.len() != self.n_class {
            return Err(Error::DimensionMismatch {
                context: "scenario initial cloud",
                expected: self.n_class,
                actual: self.initial_cloud.len(),
            });
        }
        if self
            .target
            .iter()
            .chain(&self.initial_cloud)
            .any(|x| !x.is_finite() || *x < 0.0)
        {
            return Err(Error::InvalidState(
                "target and initial cloud counts must be finite and nonnegative".into(),
            ));
        }
        for (i, robot) in self.robots.iter().enumerate() {
            if robot.id != i {
                return Err(Error::InvalidProfile(format!(
                    "robot at position {i} has id {}; ids must be 0..n_robot in order",
                    robot.id
                )));
            }
            if robot.n_class() != self.n_class {
                return Err(Error::DimensionMismatch {
                    context: "robot class count",
                    expected: self.n_class,
                    actual: robot.n_class(),
                });
            }
        }
        if self.confusion_schedule.len() != self.robots.len() {
            return Err(Error::DimensionMismatch {
                context: "confusion schedule fleet size",
                expected: self.robots.len(),
                actual: self.confusion_schedule.len(),
            });
        }
        for (i, schedule) in self.confusion_schedule.iter().enumerate() {
            if let Some(entries) = schedule {
                if entries.len() != self.rounds {
                    return Err(Error::InvalidProfile(format!(
                        "robot {i}: confusion schedule has {} entries for {} rounds",
                        entries.len(),
                        self.rounds
                    )));
                }
                if let Some(bad) = entries.iter().find(|c| c.n_class() != self.n_class) {
                    return Err(Error::DimensionMismatch {
                        context: "scheduled confusion size",
                        expected: self.n_class,
                        actual: bad.n_class(),
                    });
                }
            }
        }
        let s = &self.solver;
        if !(s.step_tolerance > 0.0
            && s.objective_tolerance > 0.0
            && s.sweep_threshold > 0.0
            && s.max_iterations > 0
            && s.max_sweeps > 0)
        {
            return Err(Error::InvalidState(
                "solver tolerances and iteration caps must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The confusion matrix robot `robot` perceives through on `round`
    /// (1-based), honoring the drift schedule.
    pub(crate) fn confusion_for(&self, robot: usize, round: usize) -> &ConfusionMatrix {
        match &self.confusion_schedule[robot] {
            Some(entries) => &entries[round - 1],
            None => &self.robots[robot].confusion,
        }
    }
}

/// One metrics row; row 0 describes the cloud before any upload.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub l2_distance: f64,
    pub lower_bound: f64,
    pub cumulative_messages: u64,
    pub sweeps: usize,
    pub per_class_cloud_counts: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: Vec<RoundMetrics>,
    pub final_cloud: CloudState,
}

/// Draw one round of labels: true labels i.i.d. from the robot's true
/// distribution, each predicted label from the confusion row of its true
/// label. Deterministic in (seed, robot id, round).
pub fn generate_round_observations(
    profile: &RobotProfile,
    seed: u64,
    round: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut true_rng = substream(seed, profile.id as u64, round, StreamPurpose::TrueLabels);
    let mut pred_rng = substream(seed, profile.id as u64, round, StreamPurpose::PredictedLabels);
    let n = profile.obs_per_round as usize;
    let mut true_labels = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    for _ in 0..n {
        let y = draw_categorical(&mut true_rng, profile.true_dist.as_slice());
        true_labels.push(y);
        predicted.push(draw_categorical(&mut pred_rng, profile.confusion.row(y)));
    }
    (true_labels, predicted)
}

/// Round a fractional allocation to whole data points: the total becomes
/// round(min(1ᵀa, budget)), entries keep their floors, and the leftover units
/// go to the largest fractional remainders (lowest index wins ties).
pub fn integerize_action(action: &Action) -> Vec<u64> {
    let counts = action.counts();
    let total_mass: f64 = counts.iter().sum();
    let total = total_mass.min(action.cache_budget()).round() as u64;

    let floors: Vec<u64> = counts.iter().map(|&x| x.floor() as u64).collect();
    let mut leftover = total.saturating_sub(floors.iter().sum::<u64>());
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (counts[a] - counts[a].floor(), counts[b] - counts[b].floor());
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });

    let mut result = floors;
    for &j in &order {
        if leftover == 0 {
            break;
        }
        result[j] += 1;
        leftover -= 1;
    }
    result
}

/// Push integer predicted-class counts through the channel: Expected returns
/// P·a exactly; Sampled draws each point's true class from its posterior
/// column.
pub fn realize_upload(
    a_int: &[u64],
    matrix: &FeasibleDataMatrix,
    rng: &mut impl Rng,
    mode: RealizationMode,
) -> Vec<f64> {
    let n = matrix.n_class();
    debug_assert_eq!(a_int.len(), n);
    match mode {
        RealizationMode::Expected => {
            let a: Vec<f64> = a_int.iter().map(|&x| x as f64).collect();
            matrix.apply(&a).expect("integer action has matrix dimension")
        }
        RealizationMode::Sampled => {
            let mut contribution = vec![0.0; n];
            for (j, &units) in a_int.iter().enumerate() {
                let col = matrix.column(j);
                for _ in 0..units {
                    contribution[draw_categorical(rng, col)] += 1.0;
                }
            }
            contribution
        }
    }
}

/// Mass cap used for the per-round reference curve: what the fleet can
/// upload in one round after integerization.
fn integer_fleet_capacity(robots: &[RobotProfile]) -> f64 {
    robots.iter().map(|r| r.cache_budget.round()).sum()
}

/// Run one scenario to completion: rounds+1 metric rows (round 0 is the
/// untouched initial cloud) plus the final cloud state.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome> {
    scenario.validate()?;
    if scenario.policy == PolicyKind::LowerBound {
        return run_lower_bound_curve(scenario);
    }

    let n_class = scenario.n_class;
    let cfg = scenario.solver.solver_config();
    let mut cloud = CloudState::new(scenario.initial_cloud.clone(), scenario.target.clone())?;
    let mut transport = MessageTransport::new(scenario.comm_mode, scenario.n_robot())?;

    // Reference curve: after r rounds the fleet has moved at most r times its
    // integerized capacity, and distance to any remaining aggregate deficit
    // is at least deficit/sqrt(n).
    let initial_deficit: f64 = cloud.deficit().iter().sum();
    let capacity = integer_fleet_capacity(&scenario.robots);
    let reference = |round: usize| -> f64 {
        let covered = capacity * round as f64;
        if initial_deficit <= covered {
            0.0
        } else {
            (initial_deficit - covered) / (n_class as f64).sqrt()
        }
    };

    let mut metrics = Vec::with_capacity(scenario.rounds + 1);
    metrics.push(RoundMetrics {
        round: 0,
        l2_distance: loss_l2(&cloud),
        lower_bound: reference(0),
        cumulative_messages: 0,
        sweeps: 0,
        per_class_cloud_counts: cloud.counts().to_vec(),
    });

    for round in 1..=scenario.rounds {
        let step = simulate_round(scenario, &cfg, &cloud, &mut transport, round)
            .map_err(|source| Error::SimulationRound {
                round,
                source: Box::new(source),
            })?;
        cloud = update_cloud_counts(&cloud, &step.contributions)
            .map_err(|source| Error::SimulationRound {
                round,
                source: Box::new(source),
            })?;
        metrics.push(RoundMetrics {
            round,
            l2_distance: loss_l2(&cloud),
            lower_bound: reference(round),
            cumulative_messages: transport.sent_total(),
            sweeps: step.sweeps,
            per_class_cloud_counts: cloud.counts().to_vec(),
        });
    }

    Ok(RunOutcome {
        metrics,
        final_cloud: cloud,
    })
}

struct RoundStep {
    contributions: Vec<Vec<f64>>,
    sweeps: usize,
}

fn simulate_round(
    scenario: &Scenario,
    cfg: &SolverConfig,
    cloud: &CloudState,
    transport: &mut MessageTransport,
    round: usize,
) -> Result<RoundStep> {
    let n_class = scenario.n_class;

    // Observation and estimation stage: every robot sees a fresh stream
    // through this round's channel and forms the matrix its policy will use;
    // uploads are realized through the channel built from the true
    // distribution, which GroundTruth estimation makes one and the same.
    let mut policy_matrices = Vec::with_capacity(scenario.n_robot());
    let mut channel_matrices = Vec::with_capacity(scenario.n_robot());
    for (i, robot) in scenario.robots.iter().enumerate() {
        let confusion = scenario.confusion_for(i, round);
        let effective = RobotProfile {
            confusion: confusion.clone(),
            ..robot.clone()
        };
        let (_true_labels, predicted) =
            generate_round_observations(&effective, scenario.seed, round as u64);
        let mut freq = vec![0.0; n_class];
        for &label in &predicted {
            freq[label] += 1.0;
        }
        let total = predicted.len() as f64;
        freq.iter_mut().for_each(|x| *x /= total);
        let predicted_dist = ClassDistribution::new(freq)?;

        let estimated = crate::model::estimate_true_distribution(
            &robot.true_dist,
            &predicted_dist,
            confusion,
            scenario.estimation,
        )?;
        policy_matrices.push(build_feasible_matrix(confusion, &estimated)?);
        channel_matrices.push(build_feasible_matrix(confusion, &robot.true_dist)?);
    }

    let fleet: Vec<crate::policies::FleetMember> = policy_matrices
        .iter()
        .zip(&scenario.robots)
        .map(|(matrix, robot)| crate::policies::FleetMember {
            matrix: matrix.clone(),
            budget: robot.cache_budget,
        })
        .collect();

    let (actions, sweeps): (Vec<Action>, usize) = match scenario.policy {
        PolicyKind::Uniform => {
            let actions = scenario
                .robots
                .iter()
                .map(|r| uniform_action(n_class, r.cache_budget))
                .collect::<Result<Vec<_>>>()?;
            (actions, 0)
        }
        PolicyKind::Greedy => {
            let actions = fleet
                .iter()
                .map(|member| greedy_action(member, cloud, cfg))
                .collect::<Result<Vec<_>>>()?;
            (actions, 0)
        }
        PolicyKind::Oracle => (oracle_actions(&fleet, cloud, cfg)?, 0),
        PolicyKind::Interactive => {
            let (actions, trace) = interactive_actions(
                &fleet,
                cloud,
                transport,
                cfg,
                scenario.solver.sweep_threshold,
                scenario.solver.max_sweeps,
            )?;
            (actions, trace.sweeps)
        }
        PolicyKind::LowerBound => unreachable!("handled by the analytic branch"),
    };

    let mut contributions = Vec::with_capacity(actions.len());
    for (i, action) in actions.iter().enumerate() {
        let a_int = integerize_action(action);
        let mut upload_rng = substream(
            scenario.seed,
            scenario.robots[i].id as u64,
            round as u64,
            StreamPurpose::Upload,
        );
        contributions.push(realize_upload(
            &a_int,
            &channel_matrices[i],
            &mut upload_rng,
            scenario.realization,
        ));
    }

    Ok(RoundStep {
        contributions,
        sweeps,
    })
}

/// The LowerBound "policy" is the analytic optimum of the relaxation that
/// drops nonnegativity: its trajectory is closed-form and its per-class
/// counts may legitimately dip below zero, so this branch never goes through
/// CloudState arithmetic.
fn run_lower_bound_curve(scenario: &Scenario) -> Result<RunOutcome> {
    let n_class = scenario.n_class;
    let cloud = CloudState::new(scenario.initial_cloud.clone(), scenario.target.clone())?;
    let initial_deficit: f64 = cloud.deficit().iter().sum();
    let capacity = integer_fleet_capacity(&scenario.robots);

    let mut metrics = Vec::with_capacity(scenario.rounds + 1);
    metrics.push(RoundMetrics {
        round: 0,
        l2_distance: loss_l2(&cloud),
        lower_bound: lower_bound_for_capacity(&cloud, 0.0),
        cumulative_messages: 0,
        sweeps: 0,
        per_class_cloud_counts: cloud.counts().to_vec(),
    });
    let mut last_counts = cloud.counts().to_vec();
    for round in 1..=scenario.rounds {
        let covered = capacity * round as f64;
        let excess = (initial_deficit - covered).max(0.0);
        let shift = excess / n_class as f64;
        // Relaxed optimum: the target minus an even residual across classes.
        let counts: Vec<f64> = scenario.target.iter().map(|t| t - shift).collect();
        let l2 = excess / (n_class as f64).sqrt();
        last_counts = counts.clone();
        metrics.push(RoundMetrics {
            round,
            l2_distance: l2,
            lower_bound: l2,
            cumulative_messages: 0,
            sweeps: 0,
            per_class_cloud_counts: counts,
        });
    }

    // The relaxed counts can be negative; clamp only for the returned state.
    let clamped: Vec<f64> = last_counts.iter().map(|x| x.max(0.0)).collect();
    Ok(RunOutcome {
        final_cloud: CloudState::new(clamped, scenario.target.clone())?,
        metrics,
    })
}
