//! Acceptance suite: one test per headline criterion, each printing a
//! `[PASS]` line with its measurements (run with `--nocapture` to see them).
//!
//! Every run that applies moves also re-validates the full state after each
//! move; see `crush_compliance` for the dedicated sweep.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::{oracle_next_move, oracle_pool_free_space, random_cluster, FuzzConfig, GIB};
use equilibrium_core::balance::{
    balance_count, balance_count_with_times, balance_with_times, BalanceConfig,
    CountBalanceConfig,
};
use equilibrium_core::cluster::{
    validate_state, ClusterState, CrushLevel, CrushNode, DeviceClass, Osd, PgShardMap,
    PlacementRule, Pool, PoolId, PoolScheme,
};
use equilibrium_core::generator::{generate_preset, Preset, PresetSpec};
use equilibrium_core::io::{
    parse_metrics_csv, parse_plan, parse_state, serialize_state, write_metrics_csv, write_plan,
};
use equilibrium_core::placement::place_all;
use equilibrium_core::sim::{apply_move, simulate_plan, simulate_plan_timed};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// (preset, scale) pairs sized so every balancer run stays well under a
/// minute.
const PRESET_SCALES: [(Preset, f64); 6] = [
    (Preset::A, 1.0),
    (Preset::B, 0.04),
    (Preset::C, 0.4),
    (Preset::D, 0.08),
    (Preset::E, 0.28),
    (Preset::F, 1.0),
];

fn pass(criterion: &str, details: impl std::fmt::Display) {
    println!("[PASS] {criterion}: {details}");
}

/// Replay a plan, asserting full validity and returning the per-move scope
/// variance pairs (before, after) measured at each generation state.
fn replay_validated(
    state: &ClusterState,
    moves: &[equilibrium_core::Move],
    context: &str,
) -> ClusterState {
    let mut working = state.clone();
    for (i, mv) in moves.iter().enumerate() {
        apply_move(&mut working, mv)
            .unwrap_or_else(|e| panic!("{context}: move {i} failed to apply: {e}"));
        let violations = validate_state(&working);
        assert!(
            violations.is_empty(),
            "{context}: move {i} left an invalid state: {violations:?}"
        );
    }
    working
}

/// Variance monotonicity: on 100 fuzzed clusters every size-aware move
/// strictly decreases its device class's utilization variance. Zero
/// violations, under two minutes total.
#[test]
fn variance_monotonicity() {
    let started = Instant::now();
    let mut total_moves = 0usize;
    for seed in 0..100 {
        let state = random_cluster(seed, &FuzzConfig::standard());
        let (plan, _) = balance_with_times(&state, &BalanceConfig::default()).unwrap();
        let mut working = state.clone();
        for (i, mv) in plan.moves.iter().enumerate() {
            let scope = working.rule_of_pool(mv.pool).unwrap().device_class_filter;
            let before = working.utilization_variance(scope).unwrap();
            apply_move(&mut working, mv).unwrap();
            let after = working.utilization_variance(scope).unwrap();
            assert!(
                after < before,
                "seed {seed}: move {i} did not decrease class {scope:?} variance \
                 ({before} -> {after})"
            );
            let violations = validate_state(&working);
            assert!(violations.is_empty(), "seed {seed}: move {i}: {violations:?}");
        }
        total_moves += plan.len();
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(120),
        "monotonicity sweep took {elapsed:?}, budget is 2 minutes"
    );
    pass(
        "variance monotonicity",
        format!("100 clusters, {total_moves} moves, zero violations, {elapsed:.1?}"),
    );
}

/// Homogeneous cluster, single replicated(1) pool, equal shard sizes,
/// shard count divisible by OSD count.
fn homogeneous_state(n_osds: u32, pgs_per_osd: u32, seed: u64) -> ClusterState {
    let root = 0;
    let mut interior = vec![CrushNode::interior(root, "root", CrushLevel::Root)];
    let mut osds = BTreeMap::new();
    for i in 0..n_osds {
        let host = 1 + i;
        interior.push(CrushNode::interior(host, format!("host-{i}"), CrushLevel::Host));
        interior[0].children.push(host);
        osds.insert(
            i,
            Osd {
                id: i,
                capacity_bytes: 64 * GIB,
                used_bytes: 0,
                overhead_bytes: 0,
                device_class: DeviceClass::Hdd,
                crush_parent: host,
            },
        );
    }
    let rule = PlacementRule {
        id: 0,
        device_class_filter: Some(DeviceClass::Hdd),
        failure_domain_level: CrushLevel::Host,
        shard_count: 1,
        root,
    };
    let pg_count = n_osds * pgs_per_osd;
    let pool = Pool {
        id: 1,
        name: "data-01".into(),
        rule: 0,
        scheme: PoolScheme::Replicated { size: 1 },
        pg_count,
        stored_bytes_per_pg: vec![GIB / 4; pg_count as usize],
    };
    let state = ClusterState::assemble(
        osds,
        interior,
        root,
        BTreeMap::from([(0, rule)]),
        BTreeMap::from([(1, pool)]),
        PgShardMap::default(),
    )
    .unwrap();
    let map = place_all(&state, seed).unwrap();
    state.with_placement(map).unwrap()
}

/// Near-zero convergence: on feasible homogeneous clusters the final
/// variance is below 1e-6, over 20 seeded instances.
#[test]
fn near_zero_convergence() {
    for seed in 0..20u64 {
        let n_osds = [4u32, 8, 16, 8, 4][seed as usize % 5];
        let pgs_per_osd = [4u32, 8, 4, 16, 32][(seed as usize / 5) % 5];
        let state = homogeneous_state(n_osds, pgs_per_osd, seed);
        let (plan, _) = balance_with_times(&state, &BalanceConfig::default()).unwrap();
        let final_state = replay_validated(&state, &plan.moves, "convergence");
        let variance = final_state.utilization_variance(Some(DeviceClass::Hdd)).unwrap();
        assert!(
            variance < 1e-6,
            "seed {seed} ({n_osds} OSDs, {} PGs): final variance {variance}",
            n_osds * pgs_per_osd
        );
    }
    pass("near-zero convergence", "20 homogeneous instances, final variance < 1e-6");
}

fn user_pool_gain(initial: &ClusterState, final_state: &ClusterState) -> i64 {
    initial
        .pools
        .values()
        .filter(|p| p.name.starts_with("data-"))
        .map(|p| {
            final_state.pool_free_space(p.id).unwrap() as i64
                - initial.pool_free_space(p.id).unwrap() as i64
        })
        .sum()
}

/// Comparative space gain: summed user-data-pool gain of the size-aware
/// balancer beats or matches the count baseline on at least 5 of the 6
/// scaled presets, each run finishing inside a minute.
#[test]
fn comparative_space_gain() {
    let mut wins = 0;
    let mut lines = Vec::new();
    for (preset, scale) in PRESET_SCALES {
        let state = generate_preset(&PresetSpec { preset, scale, seed: 42 }).unwrap();

        let started = Instant::now();
        let (eq_plan, _) = balance_with_times(&state, &BalanceConfig::default()).unwrap();
        let eq_elapsed = started.elapsed();
        assert!(eq_elapsed < Duration::from_secs(60), "preset {preset} took {eq_elapsed:?}");
        let eq_final = replay_validated(&state, &eq_plan.moves, &format!("preset {preset}"));
        let eq_gain = user_pool_gain(&state, &eq_final);

        let started = Instant::now();
        let count_plan = balance_count(&state, &CountBalanceConfig::default()).unwrap();
        let count_elapsed = started.elapsed();
        assert!(count_elapsed < Duration::from_secs(60));
        let count_final =
            replay_validated(&state, &count_plan.moves, &format!("preset {preset} baseline"));
        let count_gain = user_pool_gain(&state, &count_final);

        if eq_gain >= count_gain {
            wins += 1;
        }
        lines.push(format!(
            "{preset}: {:.2} vs {:.2} TiB",
            eq_gain as f64 / (1u64 << 40) as f64,
            count_gain as f64 / (1u64 << 40) as f64
        ));
    }
    assert!(wins >= 5, "size-aware won only {wins} of 6 presets ({})", lines.join(", "));
    pass("comparative space gain", format!("{wins} of 6 presets ({})", lines.join(", ")));
}

/// CRUSH compliance: a dedicated sweep re-validating every intermediate
/// state across fuzzed clusters and two full presets, for both balancers.
#[test]
fn crush_compliance() {
    let mut states_checked = 0usize;
    for seed in 100..120 {
        let state = random_cluster(seed, &FuzzConfig::standard());
        let (plan, _) = balance_with_times(&state, &BalanceConfig::default()).unwrap();
        replay_validated(&state, &plan.moves, "compliance fuzz");
        states_checked += plan.len();
        let count_plan = balance_count(&state, &CountBalanceConfig::default()).unwrap();
        replay_validated(&state, &count_plan.moves, "compliance fuzz baseline");
        states_checked += count_plan.len();
    }
    for preset in [Preset::A, Preset::F] {
        let state = generate_preset(&PresetSpec { preset, scale: 1.0, seed: 7 }).unwrap();
        let (plan, _) = balance_with_times(&state, &BalanceConfig::default()).unwrap();
        replay_validated(&state, &plan.moves, "compliance preset");
        states_checked += plan.len();
    }
    pass("CRUSH compliance", format!("{states_checked} intermediate states validated"));
}

/// Oracle equivalence: on 50 tiny clusters, every emitted move matches the
/// exhaustive oracle (fullest movable source, largest feasible shard,
/// argmin-utilization destination), and termination points agree.
#[test]
fn oracle_equivalence() {
    let config = BalanceConfig::default();
    let mut moves_checked = 0usize;
    for seed in 0..50 {
        let mut state = random_cluster(seed, &FuzzConfig::tiny());
        // CRUSH placement starts near-proportional; pile shards up on odd
        // seeds so the balancer has real work for the oracle to check.
        common::unbalance(&mut state, 4 + (seed as usize % 9));
        let (plan, _) = balance_with_times(&state, &config).unwrap();
        let mut working = state.clone();
        for (i, mv) in plan.moves.iter().enumerate() {
            let expected = oracle_next_move(&working, config.max_attempts)
                .unwrap_or_else(|| panic!("seed {seed}: oracle terminated before move {i}"));
            assert_eq!(
                (expected.pool, expected.pg, expected.slot, expected.from, expected.to, expected.bytes),
                (mv.pool, mv.pg, mv.slot, mv.from, mv.to, mv.bytes),
                "seed {seed}: move {i} diverged from the oracle"
            );
            apply_move(&mut working, mv).unwrap();
            let violations = validate_state(&working);
            assert!(violations.is_empty(), "seed {seed}: move {i}: {violations:?}");
            moves_checked += 1;
        }
        assert_eq!(
            oracle_next_move(&working, config.max_attempts),
            None,
            "seed {seed}: oracle found a move after termination"
        );
    }
    pass("oracle equivalence", format!("50 tiny clusters, {moves_checked} moves, 0 mismatches"));
}

/// Count-baseline contract: counts end within max_deviation + 1 of ideal (or
/// the move budget is exhausted), and the plan ignores shard sizes.
#[test]
fn count_baseline_contract() {
    let config = CountBalanceConfig::default();
    let fuzz = FuzzConfig {
        // Spare failure domains so count equalization is never boxed in.
        min_osds: 8,
        max_osds: 32,
        min_pools: 1,
        max_pools: 4,
        max_pg_per_pool: 64,
        multi_class: false,
        max_fill: 0.55,
    };
    for seed in 0..20u64 {
        let state = random_cluster(seed.wrapping_mul(977), &fuzz);
        let (plan, _) = balance_count_with_times(&state, &config).unwrap();
        let final_state = replay_validated(&state, &plan.moves, "count contract");
        if plan.len() < config.max_moves {
            for pool in final_state.pools.values() {
                let counts = final_state.pool_shard_counts(pool.id).unwrap();
                for osd in final_state.eligible_osds(pool.id).unwrap() {
                    let count = counts.get(&osd).copied().unwrap_or(0) as f64;
                    let ideal = final_state.ideal_shard_count(pool.id, osd).unwrap();
                    assert!(
                        (count - ideal).abs() <= config.max_deviation as f64 + 1.0,
                        "seed {seed} pool {} osd {osd}: count {count} vs ideal {ideal}",
                        pool.id
                    );
                }
            }
        }

        // Size-blindness: permuting per-PG bytes within each pool (and
        // rescaling if the permutation overfills an OSD, which is still a
        // pure size change) leaves the (pg, from, to) sequence unchanged.
        let mut permuted = state.clone();
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xfeed);
        for pool in permuted.pools.values_mut() {
            // Fisher-Yates over the PG byte list.
            for i in (1..pool.stored_bytes_per_pg.len()).rev() {
                let j = rng.random_range(0..=i);
                pool.stored_bytes_per_pg.swap(i, j);
            }
        }
        permuted.recompute_usage().unwrap();
        let max_util =
            permuted.osds.values().map(Osd::utilization).fold(0.0f64, f64::max);
        if max_util > 0.85 {
            let factor = 0.85 / max_util;
            for pool in permuted.pools.values_mut() {
                for bytes in &mut pool.stored_bytes_per_pg {
                    *bytes = (*bytes as f64 * factor) as u64;
                }
            }
            permuted.recompute_usage().unwrap();
        }
        assert!(validate_state(&permuted).is_empty(), "permuted state must stay valid");
        let (permuted_plan, _) = balance_count_with_times(&permuted, &config).unwrap();
        let key = |p: &equilibrium_core::Plan| {
            p.moves.iter().map(|m| (m.pool, m.pg, m.from, m.to)).collect::<Vec<_>>()
        };
        assert_eq!(
            key(&plan),
            key(&permuted_plan),
            "seed {seed}: plan depends on shard sizes"
        );
    }
    pass("count-baseline contract", "20 instances: deviation bound and size-blindness hold");
}

/// Free-space formula vs the incremental-fill oracle, within 1%.
#[test]
fn free_space_formula_oracle() {
    let mut pools_checked = 0usize;
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let state = random_cluster(seed.wrapping_mul(31) + 5, &FuzzConfig::free_space());
        for pool in state.pools.keys().copied().collect::<Vec<_>>() {
            let formula = state.pool_free_space(pool).unwrap();
            let oracle = oracle_pool_free_space(&state, pool);
            let denom = formula.max(oracle).max(1) as f64;
            let relative = (formula as f64 - oracle as f64).abs() / denom;
            worst = worst.max(relative);
            assert!(
                relative <= 0.01,
                "seed {seed} pool {pool}: formula {formula} vs oracle {oracle} ({relative:.4})"
            );
            pools_checked += 1;
        }
    }
    pass(
        "free-space formula oracle",
        format!("{pools_checked} pools, worst relative error {worst:.5}"),
    );
}

/// Determinism and lossless round-trips for all three file formats,
/// excluding calc-time columns.
#[test]
fn determinism_and_round_trips() {
    let spec = PresetSpec { preset: Preset::A, scale: 1.0, seed: 9 };
    let state_a = generate_preset(&spec).unwrap();
    let state_b = generate_preset(&spec).unwrap();
    let text_a = serialize_state(&state_a);
    assert_eq!(text_a, serialize_state(&state_b), "state generation must be byte-identical");
    let reparsed = parse_state(&text_a).unwrap();
    assert_eq!(reparsed, state_a);
    assert_eq!(serialize_state(&reparsed), text_a);

    let (plan_a, times) = balance_with_times(&state_a, &BalanceConfig::default()).unwrap();
    let (plan_b, _) = balance_with_times(&state_b, &BalanceConfig::default()).unwrap();
    let plan_text = write_plan(&plan_a);
    assert_eq!(plan_text, write_plan(&plan_b), "plans must be byte-identical");
    assert_eq!(parse_plan(&plan_text, &state_a).unwrap(), plan_a);

    let (_, records_timed) = simulate_plan_timed(&state_a, &plan_a, &times).unwrap();
    let (_, records_a) = simulate_plan(&state_a, &plan_a).unwrap();
    let (_, records_b) = simulate_plan(&state_b, &plan_b).unwrap();
    let csv_a = write_metrics_csv(&records_a);
    assert_eq!(csv_a, write_metrics_csv(&records_b), "metrics must be byte-identical");
    let reparsed_records = parse_metrics_csv(&csv_a).unwrap();
    assert_eq!(reparsed_records, records_a);
    assert_eq!(write_metrics_csv(&reparsed_records), csv_a);

    // Replayed metrics equal balancing-time metrics once the calc_time
    // column is ignored.
    let strip = |csv: &str| {
        csv.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(2);
                f.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&write_metrics_csv(&records_timed)), strip(&csv_a));

    pass("determinism & round-trips", "state/plan/metrics byte-identical and lossless");
}

/// Performance envelope: a 100-OSD / 2000-PG cluster balances end to end in
/// under a minute, and per-move generation time grows toward termination.
#[test]
fn performance_envelope() {
    let started = Instant::now();

    // 20 hosts x 5 OSDs, two drive generations, six pools totaling 2000 PGs.
    let root = 0;
    let mut interior = vec![CrushNode::interior(root, "root", CrushLevel::Root)];
    let mut osds = BTreeMap::new();
    for i in 0..100u32 {
        let host = 1 + i / 5;
        if i % 5 == 0 {
            interior.push(CrushNode::interior(host, format!("host-{}", i / 5), CrushLevel::Host));
            interior[0].children.push(host);
        }
        osds.insert(
            i,
            Osd {
                id: i,
                capacity_bytes: if i % 3 == 0 { 8192 * GIB } else { 4096 * GIB },
                used_bytes: 0,
                overhead_bytes: 0,
                device_class: DeviceClass::Hdd,
                crush_parent: host,
            },
        );
    }
    let rule = PlacementRule {
        id: 0,
        device_class_filter: Some(DeviceClass::Hdd),
        failure_domain_level: CrushLevel::Host,
        shard_count: 3,
        root,
    };
    let mut pools = BTreeMap::new();
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    for (i, pg_count) in [1024u32, 512, 256, 128, 64, 16].into_iter().enumerate() {
        let id = 1 + i as PoolId;
        let mean = (400.0 / (pg_count as f64).powf(0.3)) * GIB as f64 / 3.0;
        pools.insert(
            id,
            Pool {
                id,
                name: format!("data-{id:02}"),
                rule: 0,
                scheme: PoolScheme::Replicated { size: 3 },
                pg_count,
                stored_bytes_per_pg: (0..pg_count)
                    .map(|_| (mean * rng.random_range(0.9..1.15)) as u64)
                    .collect(),
            },
        );
    }
    let state = ClusterState::assemble(
        osds,
        interior,
        root,
        BTreeMap::from([(0, rule)]),
        pools,
        PgShardMap::default(),
    )
    .unwrap();
    let map = place_all(&state, 2024).unwrap();
    let state = state.with_placement(map).unwrap();
    assert!(validate_state(&state).is_empty());

    let (plan, times) = balance_with_times(&state, &BalanceConfig::default()).unwrap();
    let (_, records) = simulate_plan_timed(&state, &plan, &times).unwrap();
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(60),
        "end-to-end took {elapsed:?} for {} moves",
        plan.len()
    );

    // Late moves scan more sources before succeeding.
    assert!(times.len() >= 40, "expected a meaningful plan, got {} moves", times.len());
    let decile = times.len() / 10;
    let mean = |s: &[u64]| s.iter().sum::<u64>() as f64 / s.len() as f64;
    let first = mean(&times[..decile]);
    let last = mean(&times[times.len() - decile..]);
    assert!(
        last > first,
        "per-move time did not grow toward termination ({first:.0} ns -> {last:.0} ns)"
    );
    let _ = records;
    pass(
        "performance envelope",
        format!(
            "{} moves in {elapsed:.1?}; per-move time {:.2} us -> {:.2} us",
            plan.len(),
            first / 1000.0,
            last / 1000.0
        ),
    );
}
