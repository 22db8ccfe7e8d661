use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use faro_harness::{
    bench_solver, compare, run_ablation, run_scenario_file, validation_sweep, AggregateReport,
    PolicyName, RunOptions, ScenarioConfig,
};

#[derive(Parser)]
#[command(
    name = "faro",
    about = "Trace-driven autoscaling experiments for multi-tenant inference clusters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: every listed policy, `trials` seeds each.
    Run {
        /// Scenario JSON path.
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
        /// Output directory for reports.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Run only this policy.
        #[arg(long)]
        policy: Option<String>,
        /// Concurrent trials.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Skip per-minute CSV timelines.
        #[arg(long)]
        no_timelines: bool,
    },
    /// Rank aggregate reports by mean lost cluster utility.
    Compare {
        /// aggregate.json files produced by `run`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Reference ranking (comma-separated policy names) for the
        /// Kendall-Tau distance.
        #[arg(long)]
        reference: Option<String>,
    },
    /// Validate the analytic M/M/c waiting quantiles against an
    /// independent discrete-event simulation.
    ValidateQueueing {
        /// Measured arrivals per cell.
        #[arg(long, default_value_t = 1_000_000)]
        arrivals: usize,
        #[arg(long, default_value_t = 0x51ee)]
        seed: u64,
        /// Maximum tolerated relative error.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Solver scaling: wall-clock and objective value per group count.
    BenchSolver {
        /// Job counts to sweep.
        #[arg(long, value_delimiter = ',', default_value = "20,50,100")]
        jobs: Vec<usize>,
        /// Group counts to sweep (0 means one group per job).
        #[arg(long, value_delimiter = ',', default_value = "1,10,0")]
        groups: Vec<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Run a scenario once fully featured, then once per disabled feature.
    Ablate {
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            out,
            seed,
            trials,
            policy,
            parallel,
            no_timelines,
        } => {
            let mut opts = RunOptions::new(out);
            opts.seed = seed;
            opts.trials = trials;
            opts.policy = policy.as_deref().map(PolicyName::parse).transpose()?;
            opts.parallel = parallel;
            opts.skip_timelines = no_timelines;
            let aggregates = run_scenario_file(&scenario, &opts)?;
            for a in &aggregates {
                println!(
                    "{:<22} lost_utility {:.4} (sd {:.4})  violation_rate {:.4}",
                    a.policy, a.mean_lost_utility, a.sd_lost_utility, a.mean_violation_rate
                );
            }
            Ok(())
        }
        Command::Compare { reports, reference } => {
            let loaded: Vec<AggregateReport> = reports
                .iter()
                .map(|p| AggregateReport::from_path(p))
                .collect::<Result<_>>()?;
            let reference: Option<Vec<String>> = reference
                .map(|r| r.split(',').map(|s| s.trim().to_string()).collect());
            let table = compare(&loaded, reference.as_deref())?;
            print!("{}", table.render());
            Ok(())
        }
        Command::ValidateQueueing {
            arrivals,
            seed,
            tolerance,
        } => {
            let cells = validation_sweep(arrivals, seed);
            let mut worst = 0.0f64;
            println!(
                "{:>2} {:>5} {:>5} {:>12} {:>12} {:>8}",
                "c", "rho", "k", "simulated", "analytic", "err"
            );
            for cell in &cells {
                worst = worst.max(cell.relative_error);
                println!(
                    "{:>2} {:>5.2} {:>5.2} {:>12.6} {:>12.6} {:>7.2}%",
                    cell.servers,
                    cell.rho,
                    cell.percentile,
                    cell.simulated,
                    cell.analytic,
                    cell.relative_error * 100.0
                );
            }
            if worst > tolerance {
                bail!(
                    "worst relative error {:.2}% exceeds {:.2}%",
                    worst * 100.0,
                    tolerance * 100.0
                );
            }
            println!("all cells within {:.1}%", tolerance * 100.0);
            Ok(())
        }
        Command::BenchSolver { jobs, groups, seed } => {
            println!("jobs,group_count,wall_ms,objective,evaluations");
            for &n in &jobs {
                let resolved: Vec<usize> =
                    groups.iter().map(|&g| if g == 0 { n } else { g }).collect();
                for row in bench_solver(&[n], &resolved, seed) {
                    println!(
                        "{},{},{:.2},{:.6},{}",
                        row.jobs, row.group_count, row.wall_ms, row.objective, row.evaluations
                    );
                }
            }
            Ok(())
        }
        Command::Ablate {
            scenario,
            out,
            seed,
            trials,
            parallel,
        } => {
            let mut config = ScenarioConfig::from_path(&scenario)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(trials) = trials {
                config.trials = trials;
            }
            if config.policies.len() != 1 {
                bail!("ablation needs a scenario with exactly one policy");
            }
            let mut opts = RunOptions::new(out);
            opts.parallel = parallel;
            opts.skip_timelines = true;
            let rows = run_ablation(&config, &opts)?;
            println!(
                "{:<18} {:>12} {:>8} {:>10}",
                "variant", "lost_util", "sd", "viol_rate"
            );
            for row in &rows {
                println!(
                    "{:<18} {:>12.4} {:>8.4} {:>10.4}",
                    row.variant, row.mean_lost_utility, row.sd_lost_utility, row.mean_violation_rate
                );
            }
            Ok(())
        }
    }
}
