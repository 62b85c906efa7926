//! Command-line front end: run one scenario, compare all policies, or check
//! the coordination guarantees. Exit codes: 0 success, 2 bad configuration,
//! 3 convergence failure, 4 property violation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fleet_sampling::config::{self, ConfigError};
use fleet_sampling::error::Error;
use fleet_sampling::message::CommMode;
use fleet_sampling::metrics::{self, ComparisonSummary};
use fleet_sampling::policies::PolicyKind;
use fleet_sampling::sim::{run_scenario, Scenario};
use fleet_sampling::verify::run_property_checks;

#[derive(Parser)]
#[command(
    name = "fleet-sampling",
    version,
    about = "Cooperative data sampling for robot fleets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its metrics CSV.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's policy.
        #[arg(long)]
        policy: Option<String>,
        /// Override the communication topology (broadcast or ring).
        #[arg(long)]
        comm_mode: Option<String>,
        /// Directory for metrics output.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run every policy over a block of seeds and write a comparison report.
    Compare {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// How many consecutive seeds to run, starting at the scenario's.
        #[arg(long)]
        seeds: u64,
        /// Directory for metrics and summary output.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Check the coordination guarantees round by round.
    Verify {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            policy,
            comm_mode,
            out_dir,
        } => cmd_run(&scenario, seed, policy, comm_mode, &out_dir),
        Command::Compare {
            scenario,
            seeds,
            out_dir,
        } => cmd_compare(&scenario, seeds, &out_dir),
        Command::Verify { scenario } => cmd_verify(&scenario),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::NotConverged { .. } => 3,
        Error::SimulationRound { source, .. } => exit_code_for(source),
        _ => 1,
    }
}

/// Load a scenario, folding unreadable files into configuration errors.
fn load(path: &Path) -> Result<Scenario, Error> {
    config::load_scenario(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(ConfigError::Invalid(format!(
            "cannot read {}: {io}",
            path.display()
        ))),
        other => other,
    })
}

fn cmd_run(
    scenario_path: &Path,
    seed: Option<u64>,
    policy: Option<String>,
    comm_mode: Option<String>,
    out_dir: &Path,
) -> Result<ExitCode, Error> {
    let mut scenario = load(scenario_path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(name) = policy {
        scenario.policy =
            PolicyKind::from_name(&name).ok_or(ConfigError::UnknownPolicy(name))?;
    }
    if let Some(name) = comm_mode {
        scenario.comm_mode =
            CommMode::from_name(&name).ok_or_else(|| ConfigError::UnknownValue {
                field: "--comm-mode".into(),
                value: name.clone(),
                expected: "\"broadcast\" or \"ring\"",
            })?;
    }

    let outcome = run_scenario(&scenario)?;
    let path = out_dir.join(scenario.policy.name()).join("metrics.csv");
    metrics::write_metrics_file(&path, &outcome.metrics, scenario.policy, scenario.seed)?;

    let last = outcome.metrics.last().expect("run produces rounds+1 rows");
    println!("wrote {}", path.display());
    println!(
        "policy {} seed {}: final l2 {:.6} after {} rounds, {} messages",
        scenario.policy.name(),
        scenario.seed,
        last.l2_distance,
        scenario.rounds,
        last.cumulative_messages
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(scenario_path: &Path, seeds: u64, out_dir: &Path) -> Result<ExitCode, Error> {
    if seeds == 0 {
        return Err(ConfigError::Invalid("--seeds must be at least 1".into()).into());
    }
    let base = load(scenario_path)?;

    let mut final_l2 = BTreeMap::new();
    let mut total_messages = BTreeMap::new();
    for policy in PolicyKind::ALL {
        let mut buffer = Vec::new();
        writeln!(buffer, "{}", metrics::metrics_header(base.n_class))?;
        let mut final_sum = 0.0;
        let mut messages = 0u64;
        for offset in 0..seeds {
            let mut scenario = base.clone();
            scenario.policy = policy;
            scenario.seed = base.seed.wrapping_add(offset);
            let outcome = run_scenario(&scenario)?;
            metrics::append_metrics_rows(&outcome.metrics, policy, scenario.seed, &mut buffer)?;
            let last = outcome.metrics.last().expect("run produces rounds+1 rows");
            final_sum += last.l2_distance;
            messages += last.cumulative_messages;
        }
        let path = out_dir.join(policy.name()).join("metrics.csv");
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, buffer)?;
        println!("wrote {}", path.display());
        final_l2.insert(policy.name().to_string(), final_sum / seeds as f64);
        total_messages.insert(policy.name().to_string(), messages);
    }

    let report = run_property_checks(&base)?;
    let summary = ComparisonSummary {
        improvement_pct: metrics::improvement_pct(
            final_l2[PolicyKind::Greedy.name()],
            final_l2[PolicyKind::Interactive.name()],
        ),
        final_l2,
        total_messages,
        verify_verdicts: report.verdicts,
    };
    std::fs::create_dir_all(out_dir)?;
    let summary_path = out_dir.join("summary.json");
    std::fs::write(&summary_path, summary.to_json())?;
    println!("wrote {}", summary_path.display());
    println!(
        "interactive improves on greedy by {:.1}% (mean final l2 {:.6} vs {:.6} over {} seeds)",
        summary.improvement_pct,
        summary.final_l2[PolicyKind::Interactive.name()],
        summary.final_l2[PolicyKind::Greedy.name()],
        seeds
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(scenario_path: &Path) -> Result<ExitCode, Error> {
    let scenario = load(scenario_path)?;
    let report = run_property_checks(&scenario)?;
    for note in &report.notes {
        println!("{note}");
    }
    for (name, ok) in &report.verdicts {
        println!("{name}: {}", if *ok { "ok" } else { "VIOLATION" });
    }
    if report.all_passed() {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(4))
    }
}
