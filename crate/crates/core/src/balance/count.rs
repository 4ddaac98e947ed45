//! Count-based baseline balancer: equalizes per-pool shard counts toward the
//! capacity-proportional ideal, one pool at a time, without ever consulting
//! shard sizes or byte utilization.

use std::time::Instant;

use super::{BalanceError, Move, Plan};
use crate::cluster::{ideal_from_sum, validate_state, ClusterState, OsdId, PoolId};
use crate::placement::candidate_destinations;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountBalanceConfig {
    /// Hard cap on total moves across all pools.
    pub max_moves: usize,
    /// A pool is settled once every eligible OSD's count is within this many
    /// shards of its rounded ideal.
    pub max_deviation: u32,
}

impl Default for CountBalanceConfig {
    fn default() -> Self {
        CountBalanceConfig { max_moves: 10_000, max_deviation: 1 }
    }
}

/// Per-pool count equalization, pools in ascending id order. While any
/// eligible OSD's shard count is more than `max_deviation` away from its
/// rounded ideal, move one shard from the most-overfull OSD to the
/// most-underfull rule-compliant OSD. A move is only taken when it shrinks
/// the pair's count imbalance, which makes the squared-deviation total
/// strictly decrease and guarantees termination.
pub fn balance_count(
    state: &ClusterState,
    config: &CountBalanceConfig,
) -> Result<Plan, BalanceError> {
    balance_count_with_times(state, config).map(|(plan, _)| plan)
}

/// Like [`balance_count`], also reporting per-move generation times.
pub fn balance_count_with_times(
    state: &ClusterState,
    config: &CountBalanceConfig,
) -> Result<(Plan, Vec<u64>), BalanceError> {
    let violations = validate_state(state);
    if !violations.is_empty() {
        return Err(BalanceError::InvalidState(violations));
    }
    let fingerprint = crate::io::state::fingerprint(state);
    let mut working = state.clone();
    let mut moves: Vec<Move> = Vec::new();
    let mut times = Vec::new();

    let pool_ids: Vec<PoolId> = working.pools.keys().copied().collect();
    'pools: for pool in pool_ids {
        loop {
            if moves.len() >= config.max_moves {
                break 'pools;
            }
            let started = Instant::now();
            let Some(mv) = next_count_move(&working, pool, config) else { break };
            times.push(started.elapsed().as_nanos() as u64);
            crate::sim::apply_move(&mut working, &mv)
                .expect("generated moves always apply to the state they were derived from");
            moves.push(mv);
        }
    }
    Ok((Plan { fingerprint, moves }, times))
}

fn next_count_move(
    state: &ClusterState,
    pool: PoolId,
    config: &CountBalanceConfig,
) -> Option<Move> {
    let rule = state.rule_of_pool(pool).ok()?;
    let eligible: Vec<OsdId> = state
        .osds
        .values()
        .filter(|o| state.is_eligible(rule, o))
        .map(|o| o.id)
        .collect();
    if eligible.is_empty() {
        return None;
    }
    let counts = state.pool_shard_counts(pool).ok()?;
    let eligible_sum: u64 = eligible.iter().map(|o| state.osds[o].capacity_bytes).sum();
    let total = state.pools[&pool].total_shard_count();
    let ideal = |osd: OsdId| ideal_from_sum(total, state.osds[&osd].capacity_bytes, eligible_sum);
    let count_of = |osd: OsdId| counts.get(&osd).copied().unwrap_or(0);

    // Settled once every eligible OSD sits within max_deviation of its
    // rounded ideal, on both the overfull and the underfull side.
    let unsettled = eligible.iter().any(|&osd| {
        let gap = count_of(osd) as i64 - ideal(osd).round() as i64;
        gap.unsigned_abs() > config.max_deviation as u64
    });
    if !unsettled {
        return None;
    }

    // Sources: most overfull first (signed deviation descending, id ascending).
    let mut sources: Vec<(f64, OsdId)> = eligible
        .iter()
        .map(|&osd| (count_of(osd) as f64 - ideal(osd), osd))
        .collect();
    sources.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

    let pgs = state.pg_map.pool(pool)?;
    for &(source_dev, source) in &sources {
        if count_of(source) == 0 {
            continue;
        }
        // Shards of this pool on the source, ascending (pg, slot).
        for (pg, slots) in pgs.iter().enumerate() {
            for (slot, &holder) in slots.iter().enumerate() {
                if holder != source {
                    continue;
                }
                let pg = pg as u32;
                let slot = slot as u32;
                let mut best: Option<(f64, OsdId)> = None;
                for dest in candidate_destinations(state, pool, pg, slot, source) {
                    let dest_dev = count_of(dest) as f64 - ideal(dest);
                    // Require a strict imbalance reduction so the loop cannot
                    // ping-pong a shard between two equally placed OSDs.
                    if !(source_dev - dest_dev > 1.0) {
                        continue;
                    }
                    // Count decisions never read shard sizes; this capacity
                    // guard exists only so emitted plans replay without
                    // overflow, and cannot fire on states with headroom.
                    let bytes = state.pools[&pool].shard_size_bytes(pg).ok()?;
                    let dest_osd = &state.osds[&dest];
                    if dest_osd.used_bytes + bytes > dest_osd.capacity_bytes {
                        continue;
                    }
                    match best {
                        Some((d, id)) if (d, id) <= (dest_dev, dest) => {}
                        _ => best = Some((dest_dev, dest)),
                    }
                }
                if let Some((_, dest)) = best {
                    let bytes = state.pools[&pool].shard_size_bytes(pg).ok()?;
                    return Some(Move { pool, pg, slot, from: source, to: dest, bytes });
                }
            }
        }
    }
    None
}
