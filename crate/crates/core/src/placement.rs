//! Simplified CRUSH engine: straw2-style weighted selection over the
//! hierarchy, full-PG placement, and legal-destination enumeration for moves.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::cluster::{ClusterState, CrushLevel, CrushTree, DeviceClass, NodeId, OsdId, PgShardMap, PoolId};

/// Retries per shard slot before a placement attempt is abandoned. Bounded so
/// pathological topologies turn into clear errors instead of spinning.
pub const RETRY_BUDGET: u32 = 50;

/// Everything that feeds one deterministic selection draw. Identical contexts
/// always select the same child.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionContext {
    pub pool: PoolId,
    pub pg: u32,
    pub slot: u32,
    pub retry: u32,
    pub seed: u64,
}

impl SelectionContext {
    /// Keyed 64-bit hash of (context, item): chained splitmix64 finalizers.
    /// Fixed by the implementation; determinism, not Ceph compatibility, is
    /// the contract.
    pub fn hash_item(&self, item: NodeId) -> u64 {
        let mut h = splitmix64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        h = splitmix64(h ^ self.pool as u64);
        h = splitmix64(h ^ self.pg as u64);
        h = splitmix64(h ^ self.slot as u64);
        h = splitmix64(h ^ self.retry as u64);
        splitmix64(h ^ item as u64)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PlacementError {
    #[error("node {0} has no positively weighted children for the requested class")]
    NoEligibleChildren(NodeId),
    #[error("pool {pool} pg {pg:x}: only {available} failure domains for {needed} shards")]
    Infeasible { pool: PoolId, pg: u32, needed: u32, available: usize },
    #[error("pool {pool} pg {pg:x} slot {slot}: retry budget exhausted")]
    RetriesExhausted { pool: PoolId, pg: u32, slot: u32 },
    #[error("pool {pool} pg {pg:x}: no failure-domain node on the path to OSD {osd}")]
    DomainMissing { pool: PoolId, pg: u32, osd: OsdId },
    #[error(transparent)]
    Model(#[from] crate::cluster::ModelError),
}

/// Straw2-style draw: every positively weighted child gets an exponential
/// "straw" `ln(u) / weight` from its own uniform hash, and the longest straw
/// (maximum value) wins. Selection frequency is proportional to child weight;
/// the draw is deterministic in (node, context). Weights are restricted to
/// `class` when given, mirroring Ceph's per-class shadow trees.
pub fn straw2_select(
    tree: &CrushTree,
    node: NodeId,
    class: Option<DeviceClass>,
    ctx: &SelectionContext,
) -> Result<NodeId, PlacementError> {
    let n = tree.node(node).ok_or(crate::cluster::ModelError::UnknownNode(node))?;
    let mut best: Option<(f64, NodeId)> = None;
    for &child in &n.children {
        let weight = tree.class_weight(child, class);
        if weight == 0 {
            continue;
        }
        let h = ctx.hash_item(child);
        // Map the hash to u in (0, 1), then draw ln(u) / weight.
        let u = ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        let straw = u.ln() / weight as f64;
        match best {
            Some((b, _)) if straw <= b => {}
            _ => best = Some((straw, child)),
        }
    }
    best.map(|(_, id)| id).ok_or(PlacementError::NoEligibleChildren(node))
}

/// Count the failure domains under `root` that hold at least one eligible OSD.
fn eligible_domains(
    state: &ClusterState,
    root: NodeId,
    level: CrushLevel,
    class: Option<DeviceClass>,
) -> Vec<NodeId> {
    state
        .tree
        .nodes_at_level_under(root, level)
        .into_iter()
        .filter(|&d| state.tree.class_weight(d, class) > 0)
        .collect()
}

/// Place one PG: select `shard_count` OSDs in distinct failure domains under
/// the pool rule's root, honoring the device class filter. Deterministic in
/// (topology, pool, pg, seed). A draw that lands in an already-used failure
/// domain increments the retry counter and redraws, up to [`RETRY_BUDGET`]
/// retries per slot.
pub fn place_pg(
    state: &ClusterState,
    pool: PoolId,
    pg: u32,
    seed: u64,
) -> Result<Vec<OsdId>, PlacementError> {
    let p = state.pool(pool)?;
    if pg >= p.pg_count {
        return Err(crate::cluster::ModelError::PgOutOfRange {
            pool,
            pg,
            pg_count: p.pg_count,
        }
        .into());
    }
    let rule = state.rule_of_pool(pool)?;
    let class = rule.device_class_filter;

    let domains = eligible_domains(state, rule.root, rule.failure_domain_level, class);
    if domains.len() < rule.shard_count as usize {
        return Err(PlacementError::Infeasible {
            pool,
            pg,
            needed: rule.shard_count,
            available: domains.len(),
        });
    }

    let mut chosen_domains: BTreeSet<NodeId> = BTreeSet::new();
    let mut shards = Vec::with_capacity(rule.shard_count as usize);
    for slot in 0..rule.shard_count {
        let mut retry = 0u32;
        'draw: loop {
            let ctx = SelectionContext { pool, pg, slot, retry, seed };
            let mut node = rule.root;
            let mut domain = None;
            loop {
                let n = state.tree.node(node).expect("walk stays inside the tree");
                if let Some(osd) = n.osd {
                    let Some(d) = domain else {
                        return Err(PlacementError::DomainMissing { pool, pg, osd });
                    };
                    chosen_domains.insert(d);
                    shards.push(osd);
                    break 'draw;
                }
                node = straw2_select(&state.tree, node, class, &ctx)?;
                let level = state.tree.node(node).expect("child exists").level;
                if level == rule.failure_domain_level {
                    if chosen_domains.contains(&node) {
                        retry += 1;
                        if retry > RETRY_BUDGET {
                            return Err(PlacementError::RetriesExhausted { pool, pg, slot });
                        }
                        continue 'draw;
                    }
                    domain = Some(node);
                }
            }
        }
    }
    Ok(shards)
}

/// Place every PG of every pool, returning a fresh shard map. Used by the
/// preset generator and test fixtures.
pub fn place_all(state: &ClusterState, seed: u64) -> Result<PgShardMap, PlacementError> {
    let mut map = PgShardMap::default();
    for pool in state.pools.values() {
        let mut pgs = Vec::with_capacity(pool.pg_count as usize);
        for pg in 0..pool.pg_count {
            pgs.push(place_pg(state, pool.id, pg, seed)?);
        }
        map.insert_pool(pool.id, pgs);
    }
    Ok(map)
}

/// True if replacing the shard at `slot` with `dest` keeps the PG's placement
/// rule-compliant: under the rule root, matching device class, no shard of
/// this PG already on `dest`, and `dest`'s failure domain distinct from every
/// other shard's domain.
pub fn replacement_is_rule_compliant(
    state: &ClusterState,
    pool: PoolId,
    pg: u32,
    slot: u32,
    dest: OsdId,
) -> bool {
    let Some(shards) = state.pg_map.shards(pool, pg) else { return false };
    let Ok(rule) = state.rule_of_pool(pool) else { return false };
    let Ok(dest_osd) = state.osd(dest) else { return false };
    if !state.is_eligible(rule, dest_osd) {
        return false;
    }
    let Some(dest_domain) = state.tree.domain_of_osd(dest, rule.failure_domain_level) else {
        return false;
    };
    for (i, &other) in shards.iter().enumerate() {
        if i as u32 == slot {
            continue;
        }
        if other == dest {
            return false;
        }
        if state.tree.domain_of_osd(other, rule.failure_domain_level) == Some(dest_domain) {
            return false;
        }
    }
    true
}

/// All OSDs the shard at (pool, pg, slot) could legally move to, ascending by
/// id. An empty result is valid: the shard is pinned where it is.
///
/// Panics if `source` does not currently hold that shard.
pub fn candidate_destinations(
    state: &ClusterState,
    pool: PoolId,
    pg: u32,
    slot: u32,
    source: OsdId,
) -> Vec<OsdId> {
    let shards = state.pg_map.shards(pool, pg).expect("pg exists");
    assert_eq!(
        shards.get(slot as usize).copied(),
        Some(source),
        "source OSD {source} does not hold {pool}.{pg:x} slot {slot}"
    );
    state
        .osds
        .keys()
        .copied()
        .filter(|&d| d != source && replacement_is_rule_compliant(state, pool, pg, slot, d))
        .collect()
}
