//! Run both balancers on the scaled presets and compare gained user-pool
//! free space, movement, and final variance.
//!
//! Usage: `cargo run --release --example compare_presets [scale_overrides...]`

use std::time::Instant;

use equilibrium_core::balance::{balance_count, balance_with_times, BalanceConfig, CountBalanceConfig};
use equilibrium_core::cluster::ClusterState;
use equilibrium_core::generator::{generate_preset, Preset, PresetSpec};
use equilibrium_core::sim::{simulate_plan, summarize};

const TIB: f64 = (1u64 << 40) as f64;

/// (preset, scale) pairs sized so each run finishes quickly.
pub const DEFAULT_SCALES: [(Preset, f64); 6] = [
    (Preset::A, 1.0),
    (Preset::B, 0.04),
    (Preset::C, 0.4),
    (Preset::D, 0.08),
    (Preset::E, 0.28),
    (Preset::F, 1.0),
];

fn user_pool_gain(initial: &ClusterState, summary: &equilibrium_core::sim::Summary) -> i64 {
    initial
        .pools
        .values()
        .filter(|p| p.name.starts_with("data-"))
        .map(|p| summary.pool_gained_bytes[&p.id])
        .sum()
}

fn main() {
    let mut eq_wins = 0;
    for (preset, scale) in DEFAULT_SCALES {
        let state = generate_preset(&PresetSpec { preset, scale, seed: 42 }).unwrap();
        let started = Instant::now();
        let (eq_plan, _) = balance_with_times(&state, &BalanceConfig::default()).unwrap();
        let eq_elapsed = started.elapsed();
        let (eq_final, eq_records) = simulate_plan(&state, &eq_plan).unwrap();
        let eq_summary = summarize(&state, &eq_final, &eq_records);

        let started = Instant::now();
        let count_plan = balance_count(&state, &CountBalanceConfig::default()).unwrap();
        let count_elapsed = started.elapsed();
        let (count_final, count_records) = simulate_plan(&state, &count_plan).unwrap();
        let count_summary = summarize(&state, &count_final, &count_records);

        let eq_gain = user_pool_gain(&state, &eq_summary);
        let count_gain = user_pool_gain(&state, &count_summary);
        if eq_gain >= count_gain {
            eq_wins += 1;
        }
        println!(
            "preset {preset} scale {scale}: {} osds, {} pgs",
            state.osds.len(),
            state.pools.values().map(|p| p.pg_count).sum::<u32>()
        );
        println!(
            "  size-aware: {:>5} moves, {:>8.2} TiB moved, user gain {:>8.2} TiB, max var {:.2e}  ({:.1?})",
            eq_summary.move_count,
            eq_summary.total_moved_bytes as f64 / TIB,
            eq_gain as f64 / TIB,
            eq_summary.final_class_variance.values().cloned().fold(0.0, f64::max),
            eq_elapsed,
        );
        println!(
            "  count:      {:>5} moves, {:>8.2} TiB moved, user gain {:>8.2} TiB, max var {:.2e}  ({:.1?})",
            count_summary.move_count,
            count_summary.total_moved_bytes as f64 / TIB,
            count_gain as f64 / TIB,
            count_summary.final_class_variance.values().cloned().fold(0.0, f64::max),
            count_elapsed,
        );
    }
    println!("size-aware wins or ties {eq_wins} of 6");
}
