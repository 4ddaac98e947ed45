//! Size-aware balancer: iteratively moves the largest movable shard from the
//! fullest OSDs to the emptiest rule-compliant destination that improves both
//! per-pool shard counts and utilization variance.

use std::collections::BTreeMap;
use std::time::Instant;

use super::{BalanceError, Move, Plan};
use crate::cluster::{
    ideal_from_sum, validate_state, ClusterState, DeviceClass, ModelError, OsdId, PoolId,
};
use crate::placement::candidate_destinations;

/// Minimum absolute variance decrease for a move to count as an improvement.
/// Guards termination against floating-point no-op moves.
pub const VARIANCE_EPSILON: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceConfig {
    /// How many of the fullest OSDs to try as sources before terminating.
    pub max_attempts: usize,
    /// Optional cap on plan length.
    pub max_moves: Option<usize>,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig { max_attempts: 25, max_moves: None }
    }
}

/// One resident shard, as enumerated from a source OSD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardInfo {
    pub pool: PoolId,
    pub pg: u32,
    pub slot: u32,
    pub bytes: u64,
}

/// All OSD ids, descending by utilization; ties broken by ascending id.
pub fn sort_sources(state: &ClusterState) -> Vec<OsdId> {
    let mut ids: Vec<(f64, OsdId)> =
        state.osds.values().map(|o| (o.utilization(), o.id)).collect();
    ids.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    ids.into_iter().map(|(_, id)| id).collect()
}

/// Every shard resident on `osd`, descending by size; ties broken by
/// ascending (pool, pg).
pub fn shards_by_size_desc(state: &ClusterState, osd: OsdId) -> Vec<ShardInfo> {
    let mut shards = Vec::new();
    for (pool_id, pgs) in state.pg_map.pools() {
        let pool = &state.pools[&pool_id];
        for (pg, slots) in pgs.iter().enumerate() {
            for (slot, &holder) in slots.iter().enumerate() {
                if holder == osd {
                    shards.push(ShardInfo {
                        pool: pool_id,
                        pg: pg as u32,
                        slot: slot as u32,
                        bytes: pool.shard_size_bytes(pg as u32).unwrap(),
                    });
                }
            }
        }
    }
    shards.sort_by(|a, b| b.bytes.cmp(&a.bytes).then(a.pool.cmp(&b.pool)).then(a.pg.cmp(&b.pg)));
    shards
}

/// Device-class scope for variance decisions about a pool's moves: the rule's
/// class filter, or the whole cluster for unfiltered rules. A move can only
/// change utilizations inside this scope.
pub fn variance_scope(state: &ClusterState, pool: PoolId) -> Result<Option<DeviceClass>, ModelError> {
    Ok(state.rule_of_pool(pool)?.device_class_filter)
}

/// True iff moving one shard of `pool` from `from` to `to` shrinks the pair's
/// count imbalance: `(count(from) - ideal(from)) - (count(to) - ideal(to)) >= 1`.
pub fn move_improves_counts(
    state: &ClusterState,
    pool: PoolId,
    from: OsdId,
    to: OsdId,
) -> Result<bool, ModelError> {
    let rule = state.rule_of_pool(pool)?;
    for osd in [from, to] {
        if !state.is_eligible(rule, state.osd(osd)?) {
            return Err(ModelError::OsdNotEligible { osd, pool });
        }
    }
    let counts = state.pool_shard_counts(pool)?;
    let eligible_sum = eligible_capacity_sum(state, pool)?;
    let total = state.pool(pool)?.total_shard_count();
    Ok(improves_counts_inner(state, &counts, eligible_sum, total, from, to))
}

fn eligible_capacity_sum(state: &ClusterState, pool: PoolId) -> Result<u64, ModelError> {
    let rule = state.rule_of_pool(pool)?;
    Ok(state
        .osds
        .values()
        .filter(|o| state.is_eligible(rule, o))
        .map(|o| o.capacity_bytes)
        .sum())
}

fn improves_counts_inner(
    state: &ClusterState,
    counts: &BTreeMap<OsdId, u32>,
    eligible_sum: u64,
    pool_shard_count: u64,
    from: OsdId,
    to: OsdId,
) -> bool {
    let deviation = |osd: OsdId| -> f64 {
        let count = counts.get(&osd).copied().unwrap_or(0) as f64;
        let ideal =
            ideal_from_sum(pool_shard_count, state.osds[&osd].capacity_bytes, eligible_sum);
        count - ideal
    };
    deviation(from) - deviation(to) >= 1.0
}

/// True iff hypothetically applying the move strictly decreases utilization
/// variance over the move's scope (decrease greater than [`VARIANCE_EPSILON`]).
///
/// The move must be rule-compliant and its source must hold the shard.
pub fn move_reduces_variance(state: &ClusterState, mv: &Move) -> bool {
    let scope = variance_scope(state, mv.pool).expect("move references a known pool");
    let before = state.utilization_variance(scope).expect("scope is non-empty");
    let after = variance_after(state, scope, mv);
    before - after > VARIANCE_EPSILON
}

fn variance_after(state: &ClusterState, scope: Option<DeviceClass>, mv: &Move) -> f64 {
    let from_used = state.osds[&mv.from]
        .used_bytes
        .checked_sub(mv.bytes)
        .expect("source accounts the shard it holds");
    let to_used = state.osds[&mv.to].used_bytes + mv.bytes;
    state
        .utilization_variance_with_overrides(scope, &[(mv.from, from_used), (mv.to, to_used)])
        .expect("scope is non-empty")
}

/// Pick the destination for one shard: among rule-compliant candidates with
/// room for the shard, keep those that improve counts and reduce variance,
/// then take the least-utilized (ties by ascending id). `None` when no
/// candidate qualifies.
pub fn select_destination(
    state: &ClusterState,
    pool: PoolId,
    pg: u32,
    slot: u32,
    source: OsdId,
) -> Option<OsdId> {
    let counts = state.pool_shard_counts(pool).ok()?;
    let eligible_sum = eligible_capacity_sum(state, pool).ok()?;
    let scope = variance_scope(state, pool).ok()?;
    let before = state.utilization_variance(scope).ok()?;
    select_destination_inner(state, pool, pg, slot, source, &counts, eligible_sum, before, scope)
}

#[allow(clippy::too_many_arguments)]
fn select_destination_inner(
    state: &ClusterState,
    pool: PoolId,
    pg: u32,
    slot: u32,
    source: OsdId,
    counts: &BTreeMap<OsdId, u32>,
    eligible_sum: u64,
    variance_before: f64,
    scope: Option<DeviceClass>,
) -> Option<OsdId> {
    let p = &state.pools[&pool];
    let bytes = p.shard_size_bytes(pg).ok()?;
    let total = p.total_shard_count();
    let mut best: Option<(f64, OsdId)> = None;
    for dest in candidate_destinations(state, pool, pg, slot, source) {
        let dest_osd = &state.osds[&dest];
        // Plans must replay without overflowing the destination.
        if dest_osd.used_bytes + bytes > dest_osd.capacity_bytes {
            continue;
        }
        if !improves_counts_inner(state, counts, eligible_sum, total, source, dest) {
            continue;
        }
        let mv = Move { pool, pg, slot, from: source, to: dest, bytes };
        let after = variance_after(state, scope, &mv);
        if !(variance_before - after > VARIANCE_EPSILON) {
            continue;
        }
        let util = dest_osd.utilization();
        match best {
            Some((u, id)) if (u, id) <= (util, dest) => {}
            _ => best = Some((util, dest)),
        }
    }
    best.map(|(_, id)| id)
}

/// Generate the next move, or `None` when the `max_attempts` fullest OSDs all
/// fail to yield one: walk sources in [`sort_sources`] order and, per source,
/// shards in [`shards_by_size_desc`] order, returning the first shard with a
/// viable destination.
pub fn next_move(state: &ClusterState, config: &BalanceConfig) -> Option<Move> {
    // Per-call caches; every cached value is exactly what the standalone
    // operations would recompute.
    let mut counts_cache: BTreeMap<PoolId, (BTreeMap<OsdId, u32>, u64)> = BTreeMap::new();
    let mut variance_cache: BTreeMap<Option<DeviceClass>, f64> = BTreeMap::new();

    for &source in sort_sources(state).iter().take(config.max_attempts) {
        for shard in shards_by_size_desc(state, source) {
            let (counts, eligible_sum) = counts_cache.entry(shard.pool).or_insert_with(|| {
                (
                    state.pool_shard_counts(shard.pool).unwrap(),
                    eligible_capacity_sum(state, shard.pool).unwrap(),
                )
            });
            let scope = variance_scope(state, shard.pool).unwrap();
            let before = *variance_cache
                .entry(scope)
                .or_insert_with(|| state.utilization_variance(scope).unwrap());
            if let Some(dest) = select_destination_inner(
                state,
                shard.pool,
                shard.pg,
                shard.slot,
                source,
                counts,
                *eligible_sum,
                before,
                scope,
            ) {
                return Some(Move {
                    pool: shard.pool,
                    pg: shard.pg,
                    slot: shard.slot,
                    from: source,
                    to: dest,
                    bytes: shard.bytes,
                });
            }
        }
    }
    None
}

/// Run the balancer to termination (or `max_moves`), applying each move to a
/// working copy so the next move sees the updated cluster.
pub fn balance(state: &ClusterState, config: &BalanceConfig) -> Result<Plan, BalanceError> {
    balance_with_times(state, config).map(|(plan, _)| plan)
}

/// Like [`balance`], also reporting the wall-clock nanoseconds spent
/// generating each move (fed into trajectory records; replaying a plan later
/// cannot measure generation cost).
pub fn balance_with_times(
    state: &ClusterState,
    config: &BalanceConfig,
) -> Result<(Plan, Vec<u64>), BalanceError> {
    let violations = validate_state(state);
    if !violations.is_empty() {
        return Err(BalanceError::InvalidState(violations));
    }
    let fingerprint = crate::io::state::fingerprint(state);
    let mut working = state.clone();
    let mut moves = Vec::new();
    let mut times = Vec::new();
    loop {
        if let Some(cap) = config.max_moves {
            if moves.len() >= cap {
                break;
            }
        }
        let started = Instant::now();
        let Some(mv) = next_move(&working, config) else { break };
        times.push(started.elapsed().as_nanos() as u64);
        crate::sim::apply_move(&mut working, &mv)
            .expect("generated moves always apply to the state they were derived from");
        moves.push(mv);
    }
    Ok((Plan { fingerprint, moves }, times))
}
