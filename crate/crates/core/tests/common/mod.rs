//! Seeded instance generators shared by the integration tests.
//!
//! Everything routes through the library's own substream scheme, with one
//! lane per generator family, so a failing seed reproduces exactly and
//! adding a generator never shifts another one's draws.

use fleet_sampling::model::{
    build_feasible_matrix, Action, ClassDistribution, CloudState, ConfusionMatrix,
};
use fleet_sampling::policies::FleetMember;
use fleet_sampling::rng::{substream, StreamPurpose};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

pub fn aux_rng(seed: u64, lane: u64) -> ChaCha12Rng {
    substream(seed, lane, 0, StreamPurpose::Auxiliary)
}

/// Flat Dirichlet via normalized exponentials, floored at 0.005 so no class
/// degenerates and the posterior stays comfortably conditioned.
pub fn random_dist(rng: &mut ChaCha12Rng, n_class: usize) -> ClassDistribution {
    let raw: Vec<f64> = (0..n_class)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let sum: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|x| (x / sum).max(0.005)).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    ClassDistribution::new(probs).unwrap()
}

/// Row-stochastic confusion with every diagonal at least 0.5.
pub fn random_confusion(rng: &mut ChaCha12Rng, n_class: usize) -> ConfusionMatrix {
    if n_class == 1 {
        return ConfusionMatrix::identity(1).unwrap();
    }
    let mut rows = Vec::with_capacity(n_class);
    for i in 0..n_class {
        let diag = 0.5 + 0.45 * rng.gen::<f64>();
        let weights: Vec<f64> = (0..n_class - 1).map(|_| 0.05 + rng.gen::<f64>()).collect();
        let weight_sum: f64 = weights.iter().sum();
        let mut row = vec![0.0; n_class];
        let mut k = 0;
        for (j, cell) in row.iter_mut().enumerate() {
            if j != i {
                *cell = weights[k] / weight_sum * (1.0 - diag);
                k += 1;
            }
        }
        let off_sum: f64 = row.iter().sum();
        row[i] = 1.0 - off_sum;
        rows.push(row);
    }
    ConfusionMatrix::from_rows(rows).unwrap()
}

pub struct Instance {
    pub fleet: Vec<FleetMember>,
    pub cloud: CloudState,
}

impl Instance {
    pub fn capacity(&self) -> f64 {
        self.fleet.iter().map(|m| m.budget).sum()
    }
}

/// A mixed fleet (random channels, random budgets) against a partially
/// filled cloud: the general one-round allocation problem.
pub fn mixed_instance(seed: u64) -> Instance {
    let mut rng = aux_rng(seed, 0);
    let n_class = rng.gen_range(2..=6);
    let n_robot = rng.gen_range(1..=10);
    let fleet: Vec<FleetMember> = (0..n_robot)
        .map(|_| {
            let dist = random_dist(&mut rng, n_class);
            let confusion = random_confusion(&mut rng, n_class);
            FleetMember {
                matrix: build_feasible_matrix(&confusion, &dist).unwrap(),
                budget: 1.0 + 29.0 * rng.gen::<f64>(),
            }
        })
        .collect();
    let target: Vec<f64> = (0..n_class)
        .map(|_| 20.0 + 180.0 * rng.gen::<f64>())
        .collect();
    let counts: Vec<f64> = target.iter().map(|t| 0.5 * t * rng.gen::<f64>()).collect();
    Instance {
        fleet,
        cloud: CloudState::new(counts, target).unwrap(),
    }
}

/// Identity channels, equal budgets, and two deficit classes that dwarf the
/// fleet's combined budget. The joint water-fill touches only those two
/// classes, its residual sits on a level every other class lies below, and
/// so any feasible split of it is an equilibrium: the sweep after the greedy
/// start repairs the whole fleet in one pass, and the next sweep moves
/// nobody. Returns the instance and the per-robot budget.
pub fn heavy_deficit_instance(seed: u64) -> (Instance, f64) {
    let mut rng = aux_rng(seed, 1);
    let n_robot = rng.gen_range(2..=8);
    heavy_deficit_from(rng, n_robot)
}

/// As [`heavy_deficit_instance`] with the fleet size pinned.
pub fn heavy_deficit_instance_with(seed: u64, n_robot: usize) -> (Instance, f64) {
    let rng = aux_rng(seed, 1);
    heavy_deficit_from(rng, n_robot)
}

fn heavy_deficit_from(mut rng: ChaCha12Rng, n_robot: usize) -> (Instance, f64) {
    let n_class = rng.gen_range(3..=7);
    let budget = 5.0 + 25.0 * rng.gen::<f64>();
    let joint = n_robot as f64 * budget;
    // Class gap under one budget keeps every best response interior enough;
    // tails stay strictly below both the per-robot and the joint water level.
    let delta = budget * (0.25 + 0.5 * rng.gen::<f64>());
    let mut target = vec![0.0; n_class];
    target[1] = 1.1 * joint;
    target[0] = target[1] + delta;
    for t in target.iter_mut().skip(2) {
        *t = 0.5 + (0.3 * joint - 0.5) * rng.gen::<f64>();
    }
    let matrix = build_feasible_matrix(
        &ConfusionMatrix::identity(n_class).unwrap(),
        &ClassDistribution::uniform(n_class).unwrap(),
    )
    .unwrap();
    let fleet = (0..n_robot)
        .map(|_| FleetMember {
            matrix: matrix.clone(),
            budget,
        })
        .collect();
    let cloud = CloudState::new(vec![0.0; n_class], target).unwrap();
    (Instance { fleet, cloud }, budget)
}

/// Interchangeable robots: identical symmetric channels, identical budgets,
/// a uniform target, and a combined budget below the total deficit. The
/// unique optimum at every budget is the uniform action, so independent
/// planning already lands on the joint optimum.
pub fn interchangeable_instance(seed: u64) -> Instance {
    let mut rng = aux_rng(seed, 2);
    let n_class = rng.gen_range(2..=6);
    let n_robot = rng.gen_range(2..=8);
    let accuracy = 0.55 + 0.4 * rng.gen::<f64>();
    let budget = 2.0 + 18.0 * rng.gen::<f64>();
    let total = n_robot as f64 * budget * (1.2 + 0.8 * rng.gen::<f64>());
    let matrix = build_feasible_matrix(
        &ConfusionMatrix::noisy_symmetric(n_class, accuracy).unwrap(),
        &ClassDistribution::uniform(n_class).unwrap(),
    )
    .unwrap();
    let fleet = (0..n_robot)
        .map(|_| FleetMember {
            matrix: matrix.clone(),
            budget,
        })
        .collect();
    let target = vec![total / n_class as f64; n_class];
    Instance {
        fleet,
        cloud: CloudState::new(vec![0.0; n_class], target).unwrap(),
    }
}

/// Expected per-robot contributions v = P·a for a joint action profile.
pub fn contributions(fleet: &[FleetMember], actions: &[Action]) -> Vec<Vec<f64>> {
    fleet
        .iter()
        .zip(actions)
        .map(|(m, a)| m.matrix.apply(a.counts()).unwrap())
        .collect()
}
