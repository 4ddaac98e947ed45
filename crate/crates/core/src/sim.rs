//! Plan execution against a cluster state, with per-move metric trajectories:
//! pool free space, per-class utilization variance, and cumulative movement.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::balance::{Move, Plan};
use crate::cluster::{ClusterState, DeviceClass, ModelError, OsdId, PoolId};
use crate::placement::replacement_is_rule_compliant;

/// Metrics snapshot after one applied move (index 0 is the pre-plan baseline).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub move_index: usize,
    /// Free space per pool, ascending by pool id.
    pub pool_free_bytes: BTreeMap<PoolId, u64>,
    /// Utilization variance per device class present in the cluster.
    pub class_variance: BTreeMap<DeviceClass, f64>,
    pub cumulative_moved_bytes: u64,
    /// Wall-clock cost of generating this move; zero when unknown (for
    /// example when replaying a plan from a file).
    pub calc_time_ns: u64,
}

/// End-of-run totals in the shape of the balancer comparison tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Final minus initial free space per pool. Negative values are possible:
    /// a move helping one pool can cost another that shares the OSDs.
    pub pool_gained_bytes: BTreeMap<PoolId, i64>,
    /// Sum of the per-pool gains. Pools share OSDs, so the summed gain is not
    /// physically additive; it is reported alongside the per-pool values.
    pub total_gained_bytes: i64,
    pub total_moved_bytes: u64,
    pub final_class_variance: BTreeMap<DeviceClass, f64>,
    pub move_count: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ApplyError {
    #[error("stale move: shard {pool}.{pg:x} slot {slot} is on OSD {actual}, not {expected}")]
    ShardNotOnSource { pool: PoolId, pg: u32, slot: u32, expected: OsdId, actual: OsdId },
    #[error("stale move: shard {pool}.{pg:x} is {actual} bytes, move says {recorded}")]
    ByteMismatch { pool: PoolId, pg: u32, recorded: u64, actual: u64 },
    #[error("rule violation: OSD {to} is not a legal destination for {pool}.{pg:x} slot {slot}")]
    RuleViolation { pool: PoolId, pg: u32, slot: u32, to: OsdId },
    #[error("destination overflow: OSD {osd} has {free} bytes free, move needs {needed}")]
    DestinationOverflow { osd: OsdId, needed: u64, free: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("plan fingerprint {expected} does not match state fingerprint {actual}")]
    FingerprintMismatch { expected: String, actual: String },
    #[error("move {index} failed: {source}")]
    MoveFailed { index: usize, source: ApplyError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Apply one move to the state: update the shard map and shift the shard's
/// bytes from source to destination. Rejects stale moves, rule violations,
/// and destination overflow before touching anything.
pub fn apply_move(state: &mut ClusterState, mv: &Move) -> Result<(), ApplyError> {
    let pool = state.pool(mv.pool)?;
    let size = pool.shard_size_bytes(mv.pg)?;
    if size != mv.bytes {
        return Err(ApplyError::ByteMismatch {
            pool: mv.pool,
            pg: mv.pg,
            recorded: mv.bytes,
            actual: size,
        });
    }
    let shards = state
        .pg_map
        .shards(mv.pool, mv.pg)
        .ok_or(ModelError::UnknownPool(mv.pool))?;
    let actual = shards.get(mv.slot as usize).copied().ok_or(ModelError::PgOutOfRange {
        pool: mv.pool,
        pg: mv.pg,
        pg_count: pool.pg_count,
    })?;
    if actual != mv.from {
        return Err(ApplyError::ShardNotOnSource {
            pool: mv.pool,
            pg: mv.pg,
            slot: mv.slot,
            expected: mv.from,
            actual,
        });
    }
    if !replacement_is_rule_compliant(state, mv.pool, mv.pg, mv.slot, mv.to) {
        return Err(ApplyError::RuleViolation {
            pool: mv.pool,
            pg: mv.pg,
            slot: mv.slot,
            to: mv.to,
        });
    }
    let dest = state.osd(mv.to)?;
    if dest.used_bytes + size > dest.capacity_bytes {
        return Err(ApplyError::DestinationOverflow {
            osd: mv.to,
            needed: size,
            free: dest.free_bytes(),
        });
    }
    state.relocate_shard(mv.pool, mv.pg, mv.slot, mv.to);
    Ok(())
}

fn snapshot(
    state: &ClusterState,
    classes: &[DeviceClass],
    move_index: usize,
    cumulative: u64,
    calc_time_ns: u64,
) -> Result<TrajectoryRecord, ModelError> {
    let mut pool_free_bytes = BTreeMap::new();
    for &pool in state.pools.keys() {
        pool_free_bytes.insert(pool, state.pool_free_space(pool)?);
    }
    let mut class_variance = BTreeMap::new();
    for &class in classes {
        class_variance.insert(class, state.utilization_variance(Some(class))?);
    }
    Ok(TrajectoryRecord {
        move_index,
        pool_free_bytes,
        class_variance,
        cumulative_moved_bytes: cumulative,
        calc_time_ns,
    })
}

/// Apply a plan in order, emitting a baseline record plus one record per
/// move. Fails if the plan's fingerprint does not match the state or any move
/// cannot be applied.
pub fn simulate_plan(
    state: &ClusterState,
    plan: &Plan,
) -> Result<(ClusterState, Vec<TrajectoryRecord>), SimError> {
    simulate_plan_timed(state, plan, &[])
}

/// [`simulate_plan`] with per-move generation times to carry into the records
/// (missing entries become zero).
pub fn simulate_plan_timed(
    state: &ClusterState,
    plan: &Plan,
    move_times_ns: &[u64],
) -> Result<(ClusterState, Vec<TrajectoryRecord>), SimError> {
    let actual = crate::io::state::fingerprint(state);
    if actual != plan.fingerprint {
        return Err(SimError::FingerprintMismatch {
            expected: plan.fingerprint.clone(),
            actual,
        });
    }
    let classes = state.device_classes();
    let mut working = state.clone();
    let mut records = Vec::with_capacity(plan.len() + 1);
    records.push(snapshot(&working, &classes, 0, 0, 0)?);
    let mut cumulative = 0u64;
    for (i, mv) in plan.moves.iter().enumerate() {
        apply_move(&mut working, mv).map_err(|source| SimError::MoveFailed { index: i, source })?;
        cumulative += mv.bytes;
        let t = move_times_ns.get(i).copied().unwrap_or(0);
        records.push(snapshot(&working, &classes, i + 1, cumulative, t)?);
    }
    Ok((working, records))
}

/// Fold a run into end-of-run totals. `records` must be non-empty (the
/// baseline record always exists).
pub fn summarize(
    initial: &ClusterState,
    final_state: &ClusterState,
    records: &[TrajectoryRecord],
) -> Summary {
    assert!(!records.is_empty(), "records must contain at least the baseline");
    let mut pool_gained_bytes = BTreeMap::new();
    for &pool in initial.pools.keys() {
        let before = initial.pool_free_space(pool).unwrap_or(0) as i64;
        let after = final_state.pool_free_space(pool).unwrap_or(0) as i64;
        pool_gained_bytes.insert(pool, after - before);
    }
    let total_gained_bytes = pool_gained_bytes.values().sum();
    let last = records.last().unwrap();
    Summary {
        pool_gained_bytes,
        total_gained_bytes,
        total_moved_bytes: last.cumulative_moved_bytes,
        final_class_variance: last.class_variance.clone(),
        move_count: records.len() - 1,
    }
}
