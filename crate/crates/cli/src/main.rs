//! Command-line front end: generate preset clusters, compute rebalancing
//! plans, simulate them, and report the resulting metrics.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use equilibrium_core::balance::{
    balance_count_with_times, balance_with_times, BalanceConfig, CountBalanceConfig, Plan,
};
use equilibrium_core::cluster::ClusterState;
use equilibrium_core::generator::{generate_preset, Preset, PresetSpec};
use equilibrium_core::io::{
    parse_metrics_csv, parse_plan, parse_state, serialize_state, write_metrics_csv, write_plan,
};
use equilibrium_core::sim::{simulate_plan_timed, summarize, TrajectoryRecord};

#[derive(Parser)]
#[command(name = "equilibrium", version, about = "Storage-cluster balancing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cluster state from one of the presets A-F.
    Generate {
        /// Preset label (A-F).
        #[arg(long)]
        preset: String,
        /// Proportional shrink factor in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output state file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a rebalancing plan for a cluster state.
    Balance {
        /// Input state file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Algorithm::Equilibrium)]
        algorithm: Algorithm,
        /// How many of the fullest OSDs to try before giving up
        /// (equilibrium only).
        #[arg(long, default_value_t = 25)]
        max_attempts: usize,
        /// Cap on plan length (defaults to unlimited for equilibrium,
        /// 10000 for count).
        #[arg(long)]
        max_moves: Option<usize>,
        /// Output plan file.
        #[arg(long)]
        plan: PathBuf,
        /// Output metrics CSV with the per-move trajectory.
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Replay a plan file against a state and write the metric trajectory.
    Simulate {
        /// Input state file (must match the plan's fingerprint).
        #[arg(long)]
        input: PathBuf,
        /// Plan file to replay.
        #[arg(long)]
        plan: PathBuf,
        /// Output metrics CSV.
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Print a summary table from a metrics CSV.
    Report {
        #[arg(long)]
        metrics: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Equilibrium,
    Count,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { preset, scale, seed, out } => {
            let preset: Preset = preset.parse()?;
            let state = generate_preset(&PresetSpec { preset, scale, seed })?;
            fs::write(&out, serialize_state(&state))
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "generated preset {preset} at scale {scale}: {} OSDs, {} pools, {} PGs -> {}",
                state.osds.len(),
                state.pools.len(),
                state.pools.values().map(|p| p.pg_count).sum::<u32>(),
                out.display()
            );
            Ok(())
        }
        Command::Balance { input, algorithm, max_attempts, max_moves, plan, metrics } => {
            let state = load_state(&input)?;
            let (generated, times) = match algorithm {
                Algorithm::Equilibrium => {
                    let config = BalanceConfig { max_attempts, max_moves };
                    balance_with_times(&state, &config)?
                }
                Algorithm::Count => {
                    let config = CountBalanceConfig {
                        max_moves: max_moves.unwrap_or(10_000),
                        ..Default::default()
                    };
                    balance_count_with_times(&state, &config)?
                }
            };
            fs::write(&plan, write_plan(&generated))
                .with_context(|| format!("writing {}", plan.display()))?;
            let (final_state, records) = simulate_plan_timed(&state, &generated, &times)?;
            fs::write(&metrics, write_metrics_csv(&records))
                .with_context(|| format!("writing {}", metrics.display()))?;
            let summary = summarize(&state, &final_state, &records);
            println!(
                "{} moves, {} moved, summed gained space {}",
                summary.move_count,
                human_bytes(summary.total_moved_bytes as i64),
                human_bytes(summary.total_gained_bytes)
            );
            Ok(())
        }
        Command::Simulate { input, plan, metrics } => {
            let state = load_state(&input)?;
            let text = fs::read_to_string(&plan)
                .with_context(|| format!("reading {}", plan.display()))?;
            let parsed: Plan = parse_plan(&text, &state)?;
            let (final_state, records) = simulate_plan_timed(&state, &parsed, &[])?;
            fs::write(&metrics, write_metrics_csv(&records))
                .with_context(|| format!("writing {}", metrics.display()))?;
            let summary = summarize(&state, &final_state, &records);
            println!(
                "replayed {} moves, {} moved, summed gained space {}",
                summary.move_count,
                human_bytes(summary.total_moved_bytes as i64),
                human_bytes(summary.total_gained_bytes)
            );
            Ok(())
        }
        Command::Report { metrics } => {
            let text = fs::read_to_string(&metrics)
                .with_context(|| format!("reading {}", metrics.display()))?;
            let records = parse_metrics_csv(&text)?;
            report(&records)
        }
    }
}

fn load_state(path: &Path) -> Result<ClusterState> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_state(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn report(records: &[TrajectoryRecord]) -> Result<()> {
    if records.is_empty() {
        bail!("metrics file contains no records");
    }
    let first = &records[0];
    let last = records.last().unwrap();

    println!("moves:        {}", last.move_index);
    println!("moved bytes:  {}", human_bytes(last.cumulative_moved_bytes as i64));
    println!();
    println!("{:<10} {:>14} {:>14} {:>14}", "pool", "free before", "free after", "gained");
    let mut total_gained = 0i64;
    for (&pool, &before) in &first.pool_free_bytes {
        let after = last.pool_free_bytes.get(&pool).copied().unwrap_or(0);
        let gained = after as i64 - before as i64;
        total_gained += gained;
        println!(
            "{:<10} {:>14} {:>14} {:>14}",
            pool,
            human_bytes(before as i64),
            human_bytes(after as i64),
            human_bytes(gained)
        );
    }
    println!("{:<10} {:>44}", "sum", human_bytes(total_gained));
    println!();
    println!("{:<10} {:>16} {:>16}", "class", "variance before", "variance after");
    for (&class, &before) in &first.class_variance {
        let after = last.class_variance.get(&class).copied().unwrap_or(f64::NAN);
        println!("{:<10} {:>16.3e} {:>16.3e}", class.to_string(), before, after);
    }
    Ok(())
}

fn human_bytes(bytes: i64) -> String {
    const UNITS: [(&str, f64); 4] = [
        ("TiB", (1u64 << 40) as f64),
        ("GiB", (1u64 << 30) as f64),
        ("MiB", (1u64 << 20) as f64),
        ("KiB", (1u64 << 10) as f64),
    ];
    let magnitude = bytes.unsigned_abs() as f64;
    for (unit, size) in UNITS {
        if magnitude >= size {
            return format!("{:.2} {unit}", bytes as f64 / size);
        }
    }
    format!("{bytes} B")
}
