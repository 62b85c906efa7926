//! Release gate: ten end-to-end checks, one per shipped guarantee, each
//! printing a single PASS line (run with --nocapture to see them stream).
//! A failure panics with the offending seed so it can be replayed directly.

mod common;

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use fleet_sampling::config::load_scenario;
use fleet_sampling::message::{CommMode, MessageTransport};
use fleet_sampling::model::{
    build_feasible_matrix, ClassDistribution, CloudState, ConfusionMatrix, FeasibleAction,
};
use fleet_sampling::policies::{
    greedy_action, greedy_oracle_gap_bound, interactive_actions, joint_loss,
    lower_bound_for_capacity, oracle_actions, FleetMember, PolicyKind,
};
use fleet_sampling::sim::{run_scenario, RealizationMode};
use fleet_sampling::solver::{solve_single, SolverConfig};
use rand::Rng;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn gate_01_interactive_matches_joint_optimum() {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    for seed in 0..100u64 {
        let inst = common::mixed_instance(seed);
        let oracle = oracle_actions(&inst.fleet, &inst.cloud, &cfg).unwrap();
        let l_oracle = joint_loss(&inst.cloud, &common::contributions(&inst.fleet, &oracle));
        let mut transport = MessageTransport::new(CommMode::Broadcast, inst.fleet.len()).unwrap();
        let (actions, _) =
            interactive_actions(&inst.fleet, &inst.cloud, &mut transport, &cfg, 1e-7, 20_000)
                .unwrap();
        let l_inter = joint_loss(&inst.cloud, &common::contributions(&inst.fleet, &actions));
        assert!(
            (l_inter - l_oracle).abs() <= 1e-5,
            "seed {seed}: interactive loss {l_inter} vs joint loss {l_oracle}"
        );
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs <= 60.0, "took {secs:.1} s, budget is 60 s");
    println!("gate 01 interactive matches the joint optimum on 100 random fleets: PASS");
}

#[test]
fn gate_02_heavy_deficit_settles_in_one_substantive_sweep() {
    let cfg = SolverConfig::default();
    for seed in 0..100u64 {
        let (inst, budget) = common::heavy_deficit_instance(seed);
        let deficit: f64 = inst.cloud.deficit().iter().sum();
        let floor = 2.0 * inst.fleet.len() as f64 * budget;
        assert!(
            deficit >= floor - 1e-9,
            "seed {seed}: generator violated its own deficit floor"
        );
        let mut transport = MessageTransport::new(CommMode::Broadcast, inst.fleet.len()).unwrap();
        let (_, trace) =
            interactive_actions(&inst.fleet, &inst.cloud, &mut transport, &cfg, 1e-6, 1000)
                .unwrap();
        assert_eq!(
            trace.sweeps, 1,
            "seed {seed}: {} substantive sweeps, per-sweep changes {:?}",
            trace.sweeps, trace.per_sweep_max_change
        );
        let last = *trace.per_sweep_max_change.last().unwrap();
        assert!(
            last <= 1e-6,
            "seed {seed}: verification sweep still moved a contribution by {last:.3e}"
        );
    }
    println!("gate 02 heavy-deficit rounds settle in one substantive sweep, 100/100: PASS");
}

#[test]
fn gate_03_bound_chain_orders_every_policy() {
    let cfg = SolverConfig::default();
    let check = |label: &str, inst: &common::Instance| {
        let greedy: Vec<_> = inst
            .fleet
            .iter()
            .map(|m| greedy_action(m, &inst.cloud, &cfg).unwrap())
            .collect();
        let oracle = oracle_actions(&inst.fleet, &inst.cloud, &cfg).unwrap();
        let l_greedy = joint_loss(&inst.cloud, &common::contributions(&inst.fleet, &greedy));
        let l_oracle = joint_loss(&inst.cloud, &common::contributions(&inst.fleet, &oracle));
        let bound = lower_bound_for_capacity(&inst.cloud, inst.capacity());
        assert!(
            bound - 1e-6 <= l_oracle,
            "{label}: analytic bound {bound} exceeds joint loss {l_oracle}"
        );
        // The joint solve can only tie independent planning; the slack is
        // float noise for single-robot fleets where the two solves coincide.
        assert!(
            l_oracle <= l_greedy + 1e-9,
            "{label}: joint loss {l_oracle} exceeds greedy loss {l_greedy}"
        );
        let to_feasible = |actions: &[fleet_sampling::model::Action]| -> Vec<FeasibleAction> {
            inst.fleet
                .iter()
                .zip(actions)
                .map(|(m, a)| m.matrix.expected_contribution(a).unwrap())
                .collect()
        };
        let cap = greedy_oracle_gap_bound(&to_feasible(&greedy), &to_feasible(&oracle)).unwrap();
        assert!(
            l_greedy - l_oracle <= cap + 1e-6,
            "{label}: greedy-joint gap {} exceeds its certified cap {cap}",
            l_greedy - l_oracle
        );
    };
    for seed in 0..100u64 {
        check(&format!("mixed seed {seed}"), &common::mixed_instance(seed));
    }
    for seed in 0..100u64 {
        let (inst, _) = common::heavy_deficit_instance(seed);
        check(&format!("heavy-deficit seed {seed}"), &inst);
    }
    println!("gate 03 bound <= oracle <= greedy <= oracle + certified cap on 200 fleets: PASS");
}

#[test]
fn gate_04_interchangeable_fleets_need_no_coordination() {
    let cfg = SolverConfig::default();
    for seed in 0..20u64 {
        let inst = common::interchangeable_instance(seed);
        let greedy: Vec<_> = inst
            .fleet
            .iter()
            .map(|m| greedy_action(m, &inst.cloud, &cfg).unwrap())
            .collect();
        let oracle = oracle_actions(&inst.fleet, &inst.cloud, &cfg).unwrap();
        let l_greedy = joint_loss(&inst.cloud, &common::contributions(&inst.fleet, &greedy));
        let l_oracle = joint_loss(&inst.cloud, &common::contributions(&inst.fleet, &oracle));
        assert!(
            (l_greedy - l_oracle).abs() <= 1e-6,
            "seed {seed}: greedy {l_greedy} vs joint {l_oracle} on an interchangeable fleet"
        );
    }
    println!("gate 04 interchangeable fleets: greedy ties the joint optimum on 20 seeds: PASS");
}

#[test]
fn gate_05_message_counts_are_exact_for_twenty_robots() {
    let cfg = SolverConfig::default();
    let n_robot = 20usize;

    // A fleet that is already settled after its greedy start: one starved
    // class swallows every budget, so the verifying sweep moves nobody.
    let settled = {
        let matrix = build_feasible_matrix(
            &ConfusionMatrix::identity(3).unwrap(),
            &ClassDistribution::uniform(3).unwrap(),
        )
        .unwrap();
        let fleet: Vec<FleetMember> = (0..n_robot)
            .map(|_| FleetMember {
                matrix: matrix.clone(),
                budget: 10.0,
            })
            .collect();
        common::Instance {
            fleet,
            cloud: CloudState::new(vec![0.0; 3], vec![500.0, 0.0, 0.0]).unwrap(),
        }
    };

    let (one_sweep, _) = common::heavy_deficit_instance_with(7, n_robot);

    // Identical noisy channels couple the fleet, so this one takes however
    // many sweeps it takes; only the count formula is asserted.
    let coupled = {
        let mut rng = common::aux_rng(11, 3);
        let matrix = build_feasible_matrix(
            &ConfusionMatrix::noisy_symmetric(5, 0.8).unwrap(),
            &ClassDistribution::uniform(5).unwrap(),
        )
        .unwrap();
        let fleet: Vec<FleetMember> = (0..n_robot)
            .map(|_| FleetMember {
                matrix: matrix.clone(),
                budget: 3.0,
            })
            .collect();
        let target: Vec<f64> = (0..5).map(|_| 40.0 + 160.0 * rng.gen::<f64>()).collect();
        common::Instance {
            fleet,
            cloud: CloudState::new(vec![0.0; 5], target).unwrap(),
        }
    };

    let run = |inst: &common::Instance, mode: CommMode| -> (usize, u64) {
        let mut transport = MessageTransport::new(mode, n_robot).unwrap();
        let (_, trace) =
            interactive_actions(&inst.fleet, &inst.cloud, &mut transport, &cfg, 1e-7, 20_000)
                .unwrap();
        assert_eq!(
            transport.sent_total(),
            trace.messages,
            "transport ledger disagrees with the trace"
        );
        (trace.sweeps, trace.messages)
    };

    for (label, inst, expect_sweeps) in [
        ("settled", &settled, Some(0usize)),
        ("one-sweep", &one_sweep, Some(1)),
        ("coupled", &coupled, None),
    ] {
        let (s_bc, m_bc) = run(inst, CommMode::Broadcast);
        assert_eq!(
            m_bc,
            (s_bc as u64 + 1) * 380,
            "{label}: broadcast count off at {s_bc} sweeps"
        );
        let (s_ring, m_ring) = run(inst, CommMode::Ring);
        assert_eq!(
            m_ring,
            19 + 38 * s_ring as u64,
            "{label}: ring count off at {s_ring} sweeps"
        );
        assert_eq!(s_bc, s_ring, "{label}: sweep count depends on transport");
        if let Some(s) = expect_sweeps {
            assert_eq!(s_bc, s, "{label}: unexpected sweep count");
        }
    }
    println!("gate 05 broadcast (S+1)*380 and ring 19+38*S hold exactly for 20 robots: PASS");
}

#[test]
fn gate_06_solver_tracks_exhaustive_grid_search() {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    let step = 0.02f64;

    let check = |seed: u64, n_class: usize| {
        let mut rng = common::aux_rng(seed, 4 + n_class as u64);
        let dist = common::random_dist(&mut rng, n_class);
        let confusion = common::random_confusion(&mut rng, n_class);
        let matrix = build_feasible_matrix(&confusion, &dist).unwrap();
        let budget = 0.5 + 4.5 * rng.gen::<f64>();
        let target: Vec<f64> = (0..n_class).map(|_| 12.0 * rng.gen::<f64>()).collect();
        let cloud = CloudState::new(vec![0.0; n_class], target).unwrap();

        let res = solve_single(&matrix, &cloud, budget, &cfg).unwrap();
        assert!(res.converged, "seed {seed} ({n_class} classes): solver hit its cap");
        assert!(
            res.kkt_residual <= 1e-6,
            "seed {seed} ({n_class} classes): stationarity residual {:.3e}",
            res.kkt_residual
        );

        let d = cloud.deficit();
        let objective = |a: &[f64]| -> f64 {
            (0..n_class)
                .map(|k| {
                    let got: f64 = (0..n_class).map(|j| matrix.column(j)[k] * a[j]).sum();
                    let r = d[k] - got;
                    r * r
                })
                .sum::<f64>()
                .sqrt()
        };
        let levels = (budget / step).floor() as usize;
        let mut best = f64::INFINITY;
        match n_class {
            2 => {
                for i in 0..=levels {
                    for j in 0..=(levels - i) {
                        best = best.min(objective(&[i as f64 * step, j as f64 * step]));
                    }
                }
            }
            3 => {
                for i in 0..=levels {
                    for j in 0..=(levels - i) {
                        for k in 0..=(levels - i - j) {
                            best = best.min(objective(&[
                                i as f64 * step,
                                j as f64 * step,
                                k as f64 * step,
                            ]));
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        assert!(
            (res.objective - best).abs() <= 2e-2,
            "seed {seed} ({n_class} classes): solver {} vs grid {best}",
            res.objective
        );
    };

    for seed in 0..30u64 {
        check(seed, 2);
    }
    for seed in 0..12u64 {
        check(seed, 3);
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs <= 120.0, "took {secs:.1} s, budget is 120 s");
    println!("gate 06 solver objective within 2e-2 of a 0.02-step grid, residuals <= 1e-6: PASS");
}

#[test]
fn gate_07_interactive_beats_greedy_on_the_shipped_fleet() {
    let base = load_scenario(&scenario_path("adverse_weather_synth.toml")).unwrap();
    let final_l2 = |policy: PolicyKind, seed: u64| -> f64 {
        let mut scenario = base.clone();
        scenario.policy = policy;
        scenario.seed = seed;
        let outcome = run_scenario(&scenario).unwrap();
        outcome.metrics.last().unwrap().l2_distance
    };
    let mut greedy_sum = 0.0;
    let mut interactive_sum = 0.0;
    for seed in 0..10u64 {
        let g = final_l2(PolicyKind::Greedy, seed);
        let i = final_l2(PolicyKind::Interactive, seed);
        assert!(i < g, "seed {seed}: interactive {i} not strictly below greedy {g}");
        greedy_sum += g;
        interactive_sum += i;
    }
    let improvement = 100.0 * (greedy_sum - interactive_sum) / greedy_sum;
    assert!(
        improvement >= 10.0,
        "mean improvement {improvement:.1}% is below 10%"
    );
    println!(
        "gate 07 interactive beats greedy on every seed, mean improvement {improvement:.1}%: PASS"
    );
}

#[test]
fn gate_08_skewed_target_is_reached_in_expected_mode() {
    let scenario = load_scenario(&scenario_path("skewed_target.toml")).unwrap();
    assert_eq!(
        scenario.realization,
        RealizationMode::Expected,
        "shipped scenario must pin expected-value realization"
    );
    let outcome = run_scenario(&scenario).unwrap();
    for pair in outcome.metrics.windows(2) {
        assert!(
            pair[1].l2_distance <= pair[0].l2_distance + 1e-9,
            "distance rose between rounds {} and {}: {} -> {}",
            pair[0].round,
            pair[1].round,
            pair[0].l2_distance,
            pair[1].l2_distance
        );
    }
    let last = outcome.metrics.last().unwrap();
    assert!(
        last.l2_distance <= last.lower_bound + 1e-3,
        "final distance {} misses the reachable bound {}",
        last.l2_distance,
        last.lower_bound
    );
    println!("gate 08 skewed target approached monotonically and reached exactly: PASS");
}

#[test]
fn gate_09_identical_runs_write_identical_bytes() {
    let bin = env!("CARGO_BIN_EXE_fleet-sampling");
    let scenario = scenario_path("adverse_weather_synth.toml");
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for sub in ["first", "second"] {
        let out = dir.path().join(sub);
        let output = Command::new(bin)
            .args(["run", "--scenario"])
            .arg(&scenario)
            .args(["--seed", "4", "--out-dir"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{sub} run failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        files.push(std::fs::read(out.join("interactive/metrics.csv")).unwrap());
    }
    assert!(
        files[0] == files[1],
        "two runs with one seed wrote different metrics bytes"
    );
    assert!(!files[0].is_empty());
    println!("gate 09 identical config and seed reproduce byte-identical metrics: PASS");
}

#[test]
fn gate_10_every_best_response_step_improves_or_holds() {
    let cfg = SolverConfig::default();
    for seed in 0..100u64 {
        let inst = common::mixed_instance(seed);
        let mut transport = MessageTransport::new(CommMode::Broadcast, inst.fleet.len()).unwrap();
        let (_, trace) =
            interactive_actions(&inst.fleet, &inst.cloud, &mut transport, &cfg, 1e-7, 20_000)
                .unwrap();
        for (k, pair) in trace.step_objectives.windows(2).enumerate() {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "seed {seed}: objective rose at step {k}: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }
    println!("gate 10 the shared objective never rises across best-response steps: PASS");
}
