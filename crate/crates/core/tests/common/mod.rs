//! Shared test support: seeded random cluster construction and independent
//! brute-force oracles. Oracles deliberately reimplement their logic from
//! scratch (own sorts, own variance formula, own tree walks) so they stay
//! decoupled from the implementation paths they check.

use std::collections::BTreeMap;

use rand::prelude::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use equilibrium_core::cluster::{
    ClusterState, CrushLevel, CrushNode, DeviceClass, NodeId, Osd, OsdId, PgShardMap,
    PlacementRule, Pool, PoolId, PoolScheme,
};
use equilibrium_core::placement::place_all;

pub const GIB: u64 = 1 << 30;
pub const MIB: u64 = 1 << 20;

pub struct FuzzConfig {
    pub min_osds: u32,
    pub max_osds: u32,
    pub min_pools: u32,
    pub max_pools: u32,
    pub max_pg_per_pool: u32,
    /// Allow a second device class on larger clusters.
    pub multi_class: bool,
    /// Cap on the initial fill level.
    pub max_fill: f64,
}

impl FuzzConfig {
    pub fn standard() -> Self {
        FuzzConfig {
            min_osds: 4,
            max_osds: 64,
            min_pools: 1,
            max_pools: 8,
            max_pg_per_pool: 64,
            multi_class: true,
            max_fill: 0.7,
        }
    }

    pub fn tiny() -> Self {
        FuzzConfig {
            min_osds: 4,
            max_osds: 6,
            min_pools: 1,
            max_pools: 2,
            max_pg_per_pool: 8,
            multi_class: false,
            max_fill: 0.6,
        }
    }

    pub fn free_space() -> Self {
        FuzzConfig {
            min_osds: 2,
            max_osds: 8,
            min_pools: 1,
            max_pools: 3,
            max_pg_per_pool: 8,
            multi_class: false,
            max_fill: 0.6,
        }
    }
}

/// Build a random valid cluster: hosts (sometimes under racks), one or two
/// device classes, class-filtered rules, CRUSH-placed shards, log-normal-ish
/// PG sizes, fill normalized under `max_fill`. Deterministic in the seed.
pub fn random_cluster(seed: u64, cfg: &FuzzConfig) -> ClusterState {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n_osds = rng.random_range(cfg.min_osds..=cfg.max_osds);
    let classes: Vec<DeviceClass> = if cfg.multi_class && n_osds >= 8 && rng.random_bool(0.4) {
        vec![DeviceClass::Hdd, DeviceClass::Ssd]
    } else {
        vec![*[DeviceClass::Hdd, DeviceClass::Ssd, DeviceClass::Nvme]
            .choose(&mut rng)
            .unwrap()]
    };

    // Split OSDs across classes, at least 3 per class.
    let mut class_counts = vec![0u32; classes.len()];
    if classes.len() == 2 {
        let first = rng.random_range(3..=(n_osds - 3));
        class_counts[0] = first;
        class_counts[1] = n_osds - first;
    } else {
        class_counts[0] = n_osds;
    }

    let use_racks = rng.random_bool(0.3);
    let osds_per_host = if rng.random_bool(0.7) { 1 } else { 2 };

    let root: NodeId = 0;
    let mut interior = vec![CrushNode::interior(root, "root", CrushLevel::Root)];
    let rack_count = if use_racks { rng.random_range(2..=4u32) } else { 0 };
    for r in 0..rack_count {
        interior.push(CrushNode::interior(1 + r, format!("rack-{r}"), CrushLevel::Rack));
        interior[0].children.push(1 + r);
    }
    let host_base = 1 + rack_count;

    let mut osds: BTreeMap<OsdId, Osd> = BTreeMap::new();
    let mut hosts_per_class = Vec::new();
    let mut next_osd: OsdId = 0;
    let mut next_host = 0u32;
    for (ci, &class) in classes.iter().enumerate() {
        let count = class_counts[ci];
        let hosts = count.div_ceil(osds_per_host).max(1);
        hosts_per_class.push(hosts);
        let host_ids: Vec<NodeId> = (0..hosts)
            .map(|h| {
                let global = next_host + h;
                let id = host_base + global;
                interior.push(CrushNode::interior(id, format!("host-{global}"), CrushLevel::Host));
                if rack_count > 0 {
                    let rack_slot = 1 + (global % rack_count) as usize;
                    interior[rack_slot].children.push(id);
                } else {
                    interior[0].children.push(id);
                }
                id
            })
            .collect();
        next_host += hosts;
        for i in 0..count {
            let capacity = rng.random_range(32..=256) * GIB;
            osds.insert(
                next_osd,
                Osd {
                    id: next_osd,
                    capacity_bytes: capacity,
                    used_bytes: 0,
                    overhead_bytes: 0,
                    device_class: class,
                    crush_parent: host_ids[(i % hosts) as usize],
                },
            );
            next_osd += 1;
        }
    }

    // Pools with class-filtered host-domain rules; shard counts stay
    // feasible for the class's host count.
    let n_pools = rng.random_range(cfg.min_pools..=cfg.max_pools);
    let mut rules = BTreeMap::new();
    let mut pools = BTreeMap::new();
    for p in 0..n_pools {
        let ci = rng.random_range(0..classes.len());
        let class = classes[ci];
        let hosts = hosts_per_class[ci];
        let scheme = if hosts >= 4 && rng.random_bool(0.25) {
            let k = rng.random_range(2..=3u32).min(hosts - 1);
            PoolScheme::Erasure { k, m: 1 }
        } else {
            PoolScheme::Replicated { size: rng.random_range(1..=3u32).min(hosts) }
        };
        let rule_id = p;
        rules.insert(
            rule_id,
            PlacementRule {
                id: rule_id,
                device_class_filter: Some(class),
                failure_domain_level: CrushLevel::Host,
                shard_count: scheme.shard_count(),
                root,
            },
        );
        let pg_count = 1 << rng.random_range(0..=cfg.max_pg_per_pool.ilog2());
        let pool_id = 1 + p;
        pools.insert(
            pool_id,
            Pool {
                id: pool_id,
                name: format!("pool-{pool_id}"),
                rule: rule_id,
                scheme,
                pg_count,
                stored_bytes_per_pg: Vec::new(),
            },
        );
    }

    // Byte budgets per class, split across that class's pools.
    let fill = rng.random_range(0.3..cfg.max_fill);
    let mut class_capacity: BTreeMap<DeviceClass, f64> = BTreeMap::new();
    for osd in osds.values() {
        *class_capacity.entry(osd.device_class).or_insert(0.0) += osd.capacity_bytes as f64;
    }
    let pool_ids: Vec<PoolId> = pools.keys().copied().collect();
    let mut weights: BTreeMap<PoolId, f64> = BTreeMap::new();
    for &id in &pool_ids {
        weights.insert(id, rng.random_range(0.2..1.0));
    }
    let pool_class: BTreeMap<PoolId, DeviceClass> = pools
        .values()
        .map(|p| (p.id, rules[&p.rule].device_class_filter.unwrap()))
        .collect();
    for &id in &pool_ids {
        let class = pool_class[&id];
        let class_weight: f64 =
            pool_ids.iter().filter(|p| pool_class[p] == class).map(|p| weights[p]).sum();
        let pool = pools.get_mut(&id).unwrap();
        let redundancy = match pool.scheme {
            PoolScheme::Replicated { size } => size as f64,
            PoolScheme::Erasure { k, m } => (k + m) as f64 / k as f64,
        };
        let physical = class_capacity[&class] * fill * weights[&id] / class_weight;
        let mean_pg = (physical / redundancy / pool.pg_count as f64).max(64.0 * MIB as f64);
        pool.stored_bytes_per_pg = (0..pool.pg_count)
            .map(|_| {
                let jitter = rng.random_range(0.8..1.25);
                (mean_pg * jitter) as u64
            })
            .collect();
    }

    let state =
        ClusterState::assemble(osds, interior, root, rules, pools, PgShardMap::default())
            .expect("fuzz topology assembles");
    let map = place_all(&state, seed).expect("fuzz placement is feasible");
    let mut state = state.with_placement(map).expect("placement installs");

    // Normalize overfull draws, as the preset generator does.
    let max_util =
        state.osds.values().map(|o| o.used_bytes as f64 / o.capacity_bytes as f64).fold(0.0, f64::max);
    if max_util > 0.85 {
        let factor = 0.85 / max_util;
        for pool in state.pools.values_mut() {
            for bytes in &mut pool.stored_bytes_per_pg {
                *bytes = (*bytes as f64 * factor) as u64;
            }
        }
        state.recompute_usage().expect("normalized state recomputes");
    }
    assert_eq!(equilibrium_core::cluster::validate_state(&state), Vec::new());
    state
}

/// Deliberately unbalance a valid state by applying rule-compliant moves
/// toward the fullest destinations. Keeps validity (apply_move enforces it)
/// while giving balancers real work to do.
pub fn unbalance(state: &mut ClusterState, steps: usize) {
    for _ in 0..steps {
        let mut sources: Vec<OsdId> = state.osds.keys().copied().collect();
        sources.sort_by(|a, b| {
            let ua = state.osds[a].utilization();
            let ub = state.osds[b].utilization();
            ua.partial_cmp(&ub).unwrap().then(a.cmp(b))
        });
        let mut chosen: Option<equilibrium_core::Move> = None;
        'outer: for &src in &sources {
            for (pool_id, pgs) in state.pg_map.pools() {
                for (pg, slots) in pgs.iter().enumerate() {
                    for (slot, &holder) in slots.iter().enumerate() {
                        if holder != src {
                            continue;
                        }
                        let bytes =
                            state.pools[&pool_id].shard_size_bytes(pg as u32).unwrap();
                        let mut dests = equilibrium_core::placement::candidate_destinations(
                            state,
                            pool_id,
                            pg as u32,
                            slot as u32,
                            src,
                        );
                        dests.sort_by(|a, b| {
                            let ua = state.osds[a].utilization();
                            let ub = state.osds[b].utilization();
                            ub.partial_cmp(&ua).unwrap().then(a.cmp(b))
                        });
                        for dest in dests {
                            let osd = &state.osds[&dest];
                            if osd.used_bytes + bytes <= osd.capacity_bytes {
                                chosen = Some(equilibrium_core::Move {
                                    pool: pool_id,
                                    pg: pg as u32,
                                    slot: slot as u32,
                                    from: src,
                                    to: dest,
                                    bytes,
                                });
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
        let Some(mv) = chosen else { break };
        equilibrium_core::sim::apply_move(state, &mv).unwrap();
    }
}

// ---------------------------------------------------------------------------
// Exhaustive next-move oracle
// ---------------------------------------------------------------------------

/// A move as the oracle sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleMove {
    pub pool: PoolId,
    pub pg: u32,
    pub slot: u32,
    pub from: OsdId,
    pub to: OsdId,
    pub bytes: u64,
}

fn oracle_domain(state: &ClusterState, osd: OsdId, level: CrushLevel) -> Option<NodeId> {
    let mut cur = state.tree.leaf_of(osd)?;
    loop {
        let node = state.tree.node(cur)?;
        if node.level == level {
            return Some(cur);
        }
        cur = state.tree.parent(cur)?;
    }
}

fn oracle_under(state: &ClusterState, osd: OsdId, root: NodeId) -> bool {
    let mut cur = state.tree.leaf_of(osd);
    while let Some(id) = cur {
        if id == root {
            return true;
        }
        cur = state.tree.parent(id);
    }
    false
}

fn oracle_variance(state: &ClusterState, class: Option<DeviceClass>, overrides: &[(OsdId, u64)]) -> f64 {
    // One-pass E[u^2] - E[u]^2, a different formula than the implementation.
    let mut n = 0.0;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for osd in state.osds.values() {
        if class.is_some() && class != Some(osd.device_class) {
            continue;
        }
        let used = overrides
            .iter()
            .find(|(id, _)| *id == osd.id)
            .map(|(_, u)| *u)
            .unwrap_or(osd.used_bytes);
        let u = used as f64 / osd.capacity_bytes as f64;
        n += 1.0;
        sum += u;
        sum_sq += u * u;
    }
    sum_sq / n - (sum / n) * (sum / n)
}

/// Brute-force reimplementation of one balancer step: fullest movable source,
/// its largest shard admitting any valid destination, argmin-utilization
/// destination.
pub fn oracle_next_move(state: &ClusterState, max_attempts: usize) -> Option<OracleMove> {
    let mut sources: Vec<(f64, OsdId)> = state
        .osds
        .values()
        .map(|o| (o.used_bytes as f64 / o.capacity_bytes as f64, o.id))
        .collect();
    sources.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

    for &(_, src) in sources.iter().take(max_attempts) {
        // Shards on this OSD, largest first, ties by (pool, pg).
        let mut shards: Vec<(u64, PoolId, u32, u32)> = Vec::new();
        for (pool_id, pgs) in state.pg_map.pools() {
            let pool = &state.pools[&pool_id];
            for (pg, slots) in pgs.iter().enumerate() {
                for (slot, &holder) in slots.iter().enumerate() {
                    if holder == src {
                        let bytes = pool.shard_size_bytes(pg as u32).unwrap();
                        shards.push((bytes, pool_id, pg as u32, slot as u32));
                    }
                }
            }
        }
        shards.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        for &(bytes, pool_id, pg, slot) in &shards {
            let pool = &state.pools[&pool_id];
            let rule = &state.rules[&pool.rule];
            let scope = rule.device_class_filter;
            let shard_holders = state.pg_map.shards(pool_id, pg).unwrap();

            // Counts and ideals, recomputed from scratch.
            let mut counts: BTreeMap<OsdId, u32> = BTreeMap::new();
            for slots in state.pg_map.pool(pool_id).unwrap() {
                for &o in slots {
                    *counts.entry(o).or_insert(0) += 1;
                }
            }
            let eligible: Vec<&Osd> = state
                .osds
                .values()
                .filter(|o| {
                    rule.device_class_filter.is_none_or(|c| c == o.device_class)
                        && oracle_under(state, o.id, rule.root)
                })
                .collect();
            let cap_sum: u64 = eligible.iter().map(|o| o.capacity_bytes).sum();
            let total_shards = pool.pg_count as u64 * rule.shard_count as u64;
            let ideal = |osd: &Osd| total_shards as f64 * (osd.capacity_bytes as f64 / cap_sum as f64);

            let src_osd = &state.osds[&src];
            let var_before = oracle_variance(state, scope, &[]);
            let src_domains: Vec<Option<NodeId>> = shard_holders
                .iter()
                .enumerate()
                .filter(|(i, _)| *i as u32 != slot)
                .map(|(_, &o)| oracle_domain(state, o, rule.failure_domain_level))
                .collect();

            let mut best: Option<(f64, OsdId)> = None;
            for dest in state.osds.values() {
                if dest.id == src
                    || shard_holders.contains(&dest.id)
                    || rule.device_class_filter.is_some_and(|c| c != dest.device_class)
                    || !oracle_under(state, dest.id, rule.root)
                {
                    continue;
                }
                let dest_domain = oracle_domain(state, dest.id, rule.failure_domain_level);
                if dest_domain.is_none() || src_domains.contains(&dest_domain) {
                    continue;
                }
                if dest.used_bytes + bytes > dest.capacity_bytes {
                    continue;
                }
                let dev_src = counts.get(&src).copied().unwrap_or(0) as f64 - ideal(src_osd);
                let dev_dst = counts.get(&dest.id).copied().unwrap_or(0) as f64 - ideal(dest);
                if !(dev_src - dev_dst >= 1.0) {
                    continue;
                }
                let var_after = oracle_variance(
                    state,
                    scope,
                    &[(src, src_osd.used_bytes - bytes), (dest.id, dest.used_bytes + bytes)],
                );
                if !(var_before - var_after > 1e-15) {
                    continue;
                }
                let util = dest.used_bytes as f64 / dest.capacity_bytes as f64;
                match best {
                    Some((u, id)) if (u, id) <= (util, dest.id) => {}
                    _ => best = Some((util, dest.id)),
                }
            }
            if let Some((_, to)) = best {
                return Some(OracleMove { pool: pool_id, pg, slot, from: src, to, bytes });
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Incremental-fill free-space oracle
// ---------------------------------------------------------------------------

/// Simulate writing fixed-size objects spread uniformly over the pool's PGs
/// until some OSD would overflow; returns the bytes written before that.
pub fn oracle_pool_free_space(state: &ClusterState, pool_id: PoolId) -> u64 {
    let pool = &state.pools[&pool_id];
    let pgs = state.pg_map.pool(pool_id).unwrap();
    let k = match pool.scheme {
        PoolScheme::Replicated { .. } => 1u64,
        PoolScheme::Erasure { k, .. } => k as u64,
    };

    let mut used: BTreeMap<OsdId, u64> =
        state.osds.iter().map(|(&id, o)| (id, o.used_bytes)).collect();
    let mut stored = pool.stored_bytes_per_pg.clone();

    let participant_free: u64 = {
        let mut ids: Vec<OsdId> = pgs.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids.iter().map(|id| state.osds[id].free_bytes()).sum()
    };
    let object = (participant_free / 100_000).clamp(64 * (1 << 10), 16 * MIB);

    let mut written = 0u64;
    let mut next_pg = 0usize;
    loop {
        let pg = next_pg % pool.pg_count as usize;
        next_pg += 1;
        let before = stored[pg];
        let after = before + object;
        let delta = after.div_ceil(k) - before.div_ceil(k);
        for &osd in &pgs[pg] {
            if used[&osd] + delta > state.osds[&osd].capacity_bytes {
                return written;
            }
        }
        for &osd in &pgs[pg] {
            *used.get_mut(&osd).unwrap() += delta;
        }
        stored[pg] = after;
        written += object;
    }
}
