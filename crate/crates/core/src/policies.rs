//! The five upload policies and the cooperative best-response loop.
//!
//! Uniform splits the budget evenly. Greedy solves each robot's program
//! against the raw deficit. Oracle solves the joint program over the whole
//! fleet at once. Interactive starts from Greedy and runs best-response
//! sweeps, each robot re-solving with the other robots' shared contributions
//! held fixed, until a sweep moves nobody; its fixed point matches Oracle's
//! summed contribution. LowerBound is not a playable policy but the analytic
//! optimum of the relaxation that drops nonnegativity, reported as the
//! unbeatable reference curve.

use crate::error::Error;
use crate::message::{CommMode, MessageTransport, PhaseTag};
use crate::model::{Action, CloudState, FeasibleAction, FeasibleDataMatrix};
use crate::solver::{solve_single, solve_single_warm, solve_stacked, SolverConfig};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Uniform,
    Greedy,
    Oracle,
    Interactive,
    LowerBound,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Uniform,
        PolicyKind::Greedy,
        PolicyKind::Oracle,
        PolicyKind::Interactive,
        PolicyKind::LowerBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Uniform => "uniform",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Oracle => "oracle",
            PolicyKind::Interactive => "interactive",
            PolicyKind::LowerBound => "lower-bound",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        PolicyKind::ALL.iter().copied().find(|p| p.name() == name)
    }
}

/// What a policy needs to know about one robot for one round: the current
/// posterior matrix and the upload budget.
#[derive(Debug, Clone)]
pub struct FleetMember {
    pub matrix: FeasibleDataMatrix,
    pub budget: f64,
}

/// Diagnostics from one interactive run.
///
/// `sweeps` counts substantive sweeps: sweeps in which some robot moved its
/// contribution by more than the threshold and therefore re-shared. The final
/// verification sweep that detects convergence is executed but not counted
/// and shares nothing; `per_sweep_max_change` has one entry for every
/// executed sweep including that last one.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractiveTrace {
    pub sweeps: usize,
    pub per_sweep_max_change: Vec<f64>,
    pub messages: u64,
    /// Joint objective after the greedy initialization and then after every
    /// individual best-response step, in execution order.
    pub step_objectives: Vec<f64>,
}

/// Spend the budget evenly across classes regardless of the cloud state.
pub fn uniform_action(n_class: usize, budget: f64) -> Result<Action> {
    if n_class == 0 {
        return Err(Error::ZeroClasses);
    }
    Action::new(vec![budget / n_class as f64; n_class], budget)
}

/// One robot optimizing alone against the raw deficit.
pub fn greedy_action(
    member: &FleetMember,
    cloud: &CloudState,
    cfg: &SolverConfig,
) -> Result<Action> {
    let res = solve_single(&member.matrix, cloud, member.budget, cfg)?;
    Ok(res.actions.into_iter().next().unwrap())
}

/// The omniscient joint optimum over the whole fleet.
pub fn oracle_actions(
    fleet: &[FleetMember],
    cloud: &CloudState,
    cfg: &SolverConfig,
) -> Result<Vec<Action>> {
    if fleet.is_empty() {
        return Err(Error::EmptyFleet);
    }
    let matrices: Vec<&FeasibleDataMatrix> = fleet.iter().map(|m| &m.matrix).collect();
    let budgets: Vec<f64> = fleet.iter().map(|m| m.budget).collect();
    let res = solve_stacked(&matrices, cloud, &budgets, cfg)?;
    Ok(res.actions)
}

/// Best-response loop over the fleet in ascending id order.
pub fn interactive_actions(
    fleet: &[FleetMember],
    cloud: &CloudState,
    transport: &mut MessageTransport,
    cfg: &SolverConfig,
    sweep_threshold: f64,
    max_sweeps: usize,
) -> Result<(Vec<Action>, InteractiveTrace)> {
    let order: Vec<usize> = (0..fleet.len()).collect();
    interactive_actions_with_order(fleet, cloud, transport, cfg, sweep_threshold, max_sweeps, &order)
}

/// As [`interactive_actions`] with an explicit sweep order. The converged
/// summed contribution is order-independent; the per-robot split need not be.
#[allow(clippy::too_many_arguments)]
pub fn interactive_actions_with_order(
    fleet: &[FleetMember],
    cloud: &CloudState,
    transport: &mut MessageTransport,
    cfg: &SolverConfig,
    sweep_threshold: f64,
    max_sweeps: usize,
    order: &[usize],
) -> Result<(Vec<Action>, InteractiveTrace)> {
    let n_robot = fleet.len();
    if n_robot == 0 {
        return Err(Error::EmptyFleet);
    }
    if transport.n_robot() != n_robot {
        return Err(Error::DimensionMismatch {
            context: "transport fleet size",
            expected: n_robot,
            actual: transport.n_robot(),
        });
    }
    check_permutation(order, n_robot)?;
    if !(sweep_threshold > 0.0 && sweep_threshold.is_finite()) {
        return Err(Error::InvalidState(format!(
            "sweep threshold must be positive and finite, got {sweep_threshold}"
        )));
    }
    if max_sweeps == 0 {
        return Err(Error::InvalidState("max_sweeps must be at least 1".into()));
    }

    let n_class = cloud.n_class();
    // The ring topology is fixed by id regardless of sweep order.
    let ring_order: Vec<usize> = (0..n_robot).collect();
    let messages_before = transport.sent_total();

    // Greedy initialization, then one share so every robot knows the field.
    let mut actions = Vec::with_capacity(n_robot);
    let mut contributions = Vec::with_capacity(n_robot);
    for member in fleet {
        let action = greedy_action(member, cloud, cfg)?;
        contributions.push(member.matrix.apply(action.counts())?);
        actions.push(action);
    }
    match transport.mode() {
        CommMode::Broadcast => {
            transport.broadcast_actions(&contributions, PhaseTag::InitShare)?;
        }
        CommMode::Ring => {
            transport.ring_init_collect(&ring_order, &contributions)?;
        }
    }

    let mut step_objectives = vec![joint_loss(cloud, &contributions)];
    let mut per_sweep_max_change = Vec::new();
    let mut substantive = 0usize;

    loop {
        let mut max_change = 0.0f64;
        for &i in order {
            // Everyone else's contribution, summed in ascending id order so
            // both comm modes feed the solver bit-identical numbers.
            let mut counts = cloud.counts().to_vec();
            for (k, v) in contributions.iter().enumerate() {
                if k != i {
                    for (c, x) in counts.iter_mut().zip(v) {
                        *c += x;
                    }
                }
            }
            let effective = CloudState::new(counts, cloud.target().to_vec())?;
            let res = solve_single_warm(
                &fleet[i].matrix,
                &effective,
                fleet[i].budget,
                cfg,
                &actions[i],
            )?;
            let action = res.actions.into_iter().next().unwrap();
            let v_new = fleet[i].matrix.apply(action.counts())?;
            let change = l2_diff(&v_new, &contributions[i]);
            if change > max_change {
                max_change = change;
            }
            actions[i] = action;
            contributions[i] = v_new;
            step_objectives.push(joint_loss(cloud, &contributions));
        }
        per_sweep_max_change.push(max_change);

        if max_change <= sweep_threshold {
            // Verification sweep: nothing moved, nothing new to share.
            break;
        }
        substantive += 1;
        match transport.mode() {
            CommMode::Broadcast => {
                transport.broadcast_actions(&contributions, PhaseTag::SweepShare)?;
            }
            CommMode::Ring => {
                transport.ring_pass_sum(&ring_order, &contributions)?;
            }
        }
        if substantive == max_sweeps {
            return Err(Error::NotConverged {
                max_sweeps,
                last_change: max_change,
                trace: InteractiveTrace {
                    sweeps: substantive,
                    per_sweep_max_change,
                    messages: transport.sent_total() - messages_before,
                    step_objectives,
                },
            });
        }
        debug_assert_eq!(n_class, cloud.n_class());
    }

    let trace = InteractiveTrace {
        sweeps: substantive,
        per_sweep_max_change,
        messages: transport.sent_total() - messages_before,
        step_objectives,
    };
    Ok((actions, trace))
}

/// Distance from the deficit to the halfspace {v : 1ᵀv ≤ capacity}: the
/// optimum of the relaxation that keeps the mass cap but drops a ≥ 0. The
/// residual of that projection is ((1ᵀd − capacity)/n)·1, so the distance
/// divides by √n. No playable policy can end a round below this.
pub fn lower_bound_for_capacity(cloud: &CloudState, capacity: f64) -> f64 {
    let d = cloud.deficit();
    let excess: f64 = d.iter().sum::<f64>() - capacity;
    if excess <= 0.0 {
        0.0
    } else {
        excess / (d.len() as f64).sqrt()
    }
}

/// [`lower_bound_for_capacity`] for a fleet of equal budgets.
pub fn lower_bound(cloud: &CloudState, n_robot: usize, budget: f64) -> Result<f64> {
    if n_robot == 0 {
        return Err(Error::EmptyFleet);
    }
    if !budget.is_finite() || budget < 0.0 {
        return Err(Error::NegativeBudget(budget));
    }
    Ok(lower_bound_for_capacity(cloud, n_robot as f64 * budget))
}

/// ‖Σ(v_oracle − v_greedy)‖₂: a certified cap on how far Greedy's loss can
/// sit above Oracle's (triangle inequality on the shared objective).
pub fn greedy_oracle_gap_bound(
    greedy: &[FeasibleAction],
    oracle: &[FeasibleAction],
) -> Result<f64> {
    if greedy.len() != oracle.len() {
        return Err(Error::DimensionMismatch {
            context: "gap bound fleet size",
            expected: greedy.len(),
            actual: oracle.len(),
        });
    }
    let n_class = greedy
        .first()
        .map(|v| v.expected_true_counts().len())
        .unwrap_or(0);
    let mut diff = vec![0.0; n_class];
    for (g, o) in greedy.iter().zip(oracle) {
        let (gv, ov) = (g.expected_true_counts(), o.expected_true_counts());
        if gv.len() != n_class || ov.len() != n_class {
            return Err(Error::DimensionMismatch {
                context: "gap bound class count",
                expected: n_class,
                actual: gv.len().max(ov.len()),
            });
        }
        for (d, (x, y)) in diff.iter_mut().zip(ov.iter().zip(gv)) {
            *d += x - y;
        }
    }
    Ok(diff.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// ‖deficit − Σ contributions‖₂: the objective every policy is scored on.
pub fn joint_loss(cloud: &CloudState, contributions: &[Vec<f64>]) -> f64 {
    let mut r = cloud.deficit();
    for v in contributions {
        for (res, x) in r.iter_mut().zip(v) {
            *res -= x;
        }
    }
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_permutation(order: &[usize], n_robot: usize) -> Result<()> {
    if order.len() != n_robot {
        return Err(Error::InvalidState(format!(
            "sweep order has {} entries for {} robots",
            order.len(),
            n_robot
        )));
    }
    let mut seen = vec![false; n_robot];
    for &i in order {
        if i >= n_robot || seen[i] {
            return Err(Error::InvalidState(format!(
                "sweep order is not a permutation: id {i}"
            )));
        }
        seen[i] = true;
    }
    Ok(())
}
