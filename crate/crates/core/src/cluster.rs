//! Cluster data model: OSDs, the CRUSH hierarchy, pools, the PG-shard map,
//! and the capacity/utilization arithmetic everything else builds on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type OsdId = u32;
pub type NodeId = u32;
pub type PoolId = u32;
pub type RuleId = u32;

/// Storage media tag carried by every OSD; placement rules may filter on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceClass {
    Hdd,
    Ssd,
    Nvme,
}

impl DeviceClass {
    pub const ALL: [DeviceClass; 3] = [DeviceClass::Hdd, DeviceClass::Ssd, DeviceClass::Nvme];

    pub fn name(self) -> &'static str {
        match self {
            DeviceClass::Hdd => "hdd",
            DeviceClass::Ssd => "ssd",
            DeviceClass::Nvme => "nvme",
        }
    }
}

impl fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeviceClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s {
            "hdd" => Ok(DeviceClass::Hdd),
            "ssd" => Ok(DeviceClass::Ssd),
            "nvme" => Ok(DeviceClass::Nvme),
            other => Err(ModelError::UnknownDeviceClass(other.to_string())),
        }
    }
}

/// Level of a node in the CRUSH hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrushLevel {
    Root,
    Datacenter,
    Rack,
    Host,
    Osd,
}

impl CrushLevel {
    /// Height above the leaves: osd = 0, host = 1, rack = 2, datacenter = 3, root = 4.
    pub fn rank(self) -> u8 {
        match self {
            CrushLevel::Root => 4,
            CrushLevel::Datacenter => 3,
            CrushLevel::Rack => 2,
            CrushLevel::Host => 1,
            CrushLevel::Osd => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CrushLevel::Root => "root",
            CrushLevel::Datacenter => "datacenter",
            CrushLevel::Rack => "rack",
            CrushLevel::Host => "host",
            CrushLevel::Osd => "osd",
        }
    }
}

impl fmt::Display for CrushLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One object storage device: the leaf unit of capacity and placement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Osd {
    pub id: OsdId,
    pub capacity_bytes: u64,
    /// Bytes in use. Always equals `overhead_bytes` plus the sizes of all
    /// resident shards; maintained by state mutation and checked by
    /// [`validate_state`].
    pub used_bytes: u64,
    /// Fixed per-device overhead counted into `used_bytes`.
    pub overhead_bytes: u64,
    pub device_class: DeviceClass,
    /// Host node this OSD's leaf hangs under in the CRUSH tree.
    pub crush_parent: NodeId,
}

impl Osd {
    pub fn free_bytes(&self) -> u64 {
        self.capacity_bytes.saturating_sub(self.used_bytes)
    }

    /// Fill fraction `used_bytes / capacity_bytes`.
    pub fn utilization(&self) -> f64 {
        self.used_bytes as f64 / self.capacity_bytes as f64
    }
}

/// A node in the CRUSH hierarchy. Leaves carry `level == Osd` and an `osd` id;
/// all other nodes are interior.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrushNode {
    pub id: NodeId,
    pub name: String,
    pub level: CrushLevel,
    /// Sum of descendant OSD capacities in bytes; recomputed at assembly.
    pub weight: u64,
    pub children: Vec<NodeId>,
    pub osd: Option<OsdId>,
}

impl CrushNode {
    pub fn interior(id: NodeId, name: impl Into<String>, level: CrushLevel) -> Self {
        CrushNode { id, name: name.into(), level, weight: 0, children: Vec::new(), osd: None }
    }
}

/// The weighted failure-domain hierarchy, with per-device-class shadow
/// weights so selection can skip subtrees that hold no eligible OSDs.
#[derive(Debug, Clone, PartialEq)]
pub struct CrushTree {
    nodes: BTreeMap<NodeId, CrushNode>,
    root: NodeId,
    parents: BTreeMap<NodeId, NodeId>,
    leaves: BTreeMap<OsdId, NodeId>,
    class_weights: BTreeMap<NodeId, BTreeMap<DeviceClass, u64>>,
}

impl CrushTree {
    /// Assemble a tree from interior nodes and one auto-generated leaf per OSD,
    /// attached under the OSD's `crush_parent` host. Leaf node ids start right
    /// after the largest interior id; weights are recomputed bottom-up.
    pub fn assemble(
        interior: Vec<CrushNode>,
        root: NodeId,
        osds: &BTreeMap<OsdId, Osd>,
    ) -> Result<Self, ModelError> {
        let mut nodes: BTreeMap<NodeId, CrushNode> = BTreeMap::new();
        for node in interior {
            if node.level == CrushLevel::Osd {
                return Err(ModelError::Topology(format!(
                    "interior node {} declared at osd level",
                    node.id
                )));
            }
            if nodes.insert(node.id, node.clone()).is_some() {
                return Err(ModelError::Topology(format!("duplicate node id {}", node.id)));
            }
        }
        if !nodes.contains_key(&root) {
            return Err(ModelError::UnknownNode(root));
        }

        let leaf_base = nodes.keys().max().copied().unwrap_or(0) + 1;
        let mut leaves = BTreeMap::new();
        for osd in osds.values() {
            let parent = nodes
                .get_mut(&osd.crush_parent)
                .ok_or(ModelError::UnknownNode(osd.crush_parent))?;
            if parent.level != CrushLevel::Host {
                return Err(ModelError::Topology(format!(
                    "osd {} attached to non-host node {}",
                    osd.id, osd.crush_parent
                )));
            }
            let leaf_id = leaf_base + osd.id;
            parent.children.push(leaf_id);
            leaves.insert(osd.id, leaf_id);
            nodes.insert(
                leaf_id,
                CrushNode {
                    id: leaf_id,
                    name: format!("osd.{}", osd.id),
                    level: CrushLevel::Osd,
                    weight: osd.capacity_bytes,
                    children: Vec::new(),
                    osd: Some(osd.id),
                },
            );
        }

        // Canonical child order so straw2 tie-breaks are stable.
        for node in nodes.values_mut() {
            node.children.sort_unstable();
        }

        let mut parents = BTreeMap::new();
        for node in nodes.values() {
            for &child in &node.children {
                if !nodes.contains_key(&child) {
                    return Err(ModelError::UnknownNode(child));
                }
                if parents.insert(child, node.id).is_some() {
                    return Err(ModelError::Topology(format!(
                        "node {child} has more than one parent"
                    )));
                }
            }
        }

        let mut tree = CrushTree { nodes, root, parents, leaves, class_weights: BTreeMap::new() };
        tree.recompute_weights(osds)?;
        Ok(tree)
    }

    fn recompute_weights(&mut self, osds: &BTreeMap<OsdId, Osd>) -> Result<(), ModelError> {
        self.class_weights.clear();
        let order = self.postorder(self.root)?;
        for id in order {
            let node = &self.nodes[&id];
            let mut per_class: BTreeMap<DeviceClass, u64> = BTreeMap::new();
            let total = if let Some(osd_id) = node.osd {
                let osd = osds.get(&osd_id).ok_or(ModelError::UnknownOsd(osd_id))?;
                per_class.insert(osd.device_class, osd.capacity_bytes);
                osd.capacity_bytes
            } else {
                let mut total = 0u64;
                for child in node.children.clone() {
                    total += self.nodes[&child].weight;
                    for (class, w) in self.class_weights[&child].clone() {
                        *per_class.entry(class).or_insert(0) += w;
                    }
                }
                total
            };
            self.nodes.get_mut(&id).unwrap().weight = total;
            self.class_weights.insert(id, per_class);
        }
        Ok(())
    }

    /// Children-before-parent traversal; errors on cycles.
    fn postorder(&self, start: NodeId) -> Result<Vec<NodeId>, ModelError> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(start, false)];
        let mut visiting = BTreeSet::new();
        let mut done = BTreeSet::new();
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                visiting.remove(&id);
                done.insert(id);
                order.push(id);
                continue;
            }
            if done.contains(&id) {
                continue;
            }
            if !visiting.insert(id) {
                return Err(ModelError::Topology(format!("cycle through node {id}")));
            }
            stack.push((id, true));
            let node = self.nodes.get(&id).ok_or(ModelError::UnknownNode(id))?;
            for &child in &node.children {
                stack.push((child, false));
            }
        }
        Ok(order)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> Option<&CrushNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CrushNode> {
        self.nodes.values()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents.get(&id).copied()
    }

    pub fn leaf_of(&self, osd: OsdId) -> Option<NodeId> {
        self.leaves.get(&osd).copied()
    }

    /// Subtree weight restricted to one device class; `None` means all classes.
    pub fn class_weight(&self, node: NodeId, class: Option<DeviceClass>) -> u64 {
        match class {
            None => self.nodes.get(&node).map_or(0, |n| n.weight),
            Some(c) => {
                self.class_weights.get(&node).and_then(|m| m.get(&c)).copied().unwrap_or(0)
            }
        }
    }

    /// Walk up from `start` (inclusive) to the root, returning the first node
    /// at `level`.
    pub fn ancestor_at_level(&self, start: NodeId, level: CrushLevel) -> Option<NodeId> {
        let mut cur = Some(start);
        while let Some(id) = cur {
            if self.nodes.get(&id)?.level == level {
                return Some(id);
            }
            cur = self.parent(id);
        }
        None
    }

    /// The failure domain of an OSD at the given level, if any.
    pub fn domain_of_osd(&self, osd: OsdId, level: CrushLevel) -> Option<NodeId> {
        self.ancestor_at_level(self.leaf_of(osd)?, level)
    }

    /// True if `node` lies in the subtree rooted at `subtree_root`.
    pub fn is_under(&self, node: NodeId, subtree_root: NodeId) -> bool {
        let mut cur = Some(node);
        while let Some(id) = cur {
            if id == subtree_root {
                return true;
            }
            cur = self.parent(id);
        }
        false
    }

    /// All nodes at `level` in the subtree of `subtree_root`, ascending by id.
    pub fn nodes_at_level_under(&self, subtree_root: NodeId, level: CrushLevel) -> Vec<NodeId> {
        let mut found = Vec::new();
        let mut stack = vec![subtree_root];
        while let Some(id) = stack.pop() {
            if let Some(node) = self.nodes.get(&id) {
                if node.level == level {
                    found.push(id);
                } else if node.level.rank() > level.rank() {
                    stack.extend(node.children.iter().copied());
                }
            }
        }
        found.sort_unstable();
        found
    }
}

/// Per-pool placement constraint: N shards in N distinct failure domains,
/// optionally restricted to one device class, within one subtree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementRule {
    pub id: RuleId,
    pub device_class_filter: Option<DeviceClass>,
    pub failure_domain_level: CrushLevel,
    pub shard_count: u32,
    pub root: NodeId,
}

/// Redundancy scheme of a pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolScheme {
    Replicated { size: u32 },
    Erasure { k: u32, m: u32 },
}

impl PoolScheme {
    pub fn shard_count(self) -> u32 {
        match self {
            PoolScheme::Replicated { size } => size,
            PoolScheme::Erasure { k, m } => k + m,
        }
    }

    /// Number of ways user bytes are split across shards: 1 for replication,
    /// k for erasure coding.
    pub fn data_width(self) -> u32 {
        match self {
            PoolScheme::Replicated { .. } => 1,
            PoolScheme::Erasure { k, .. } => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    pub id: PoolId,
    pub name: String,
    pub rule: RuleId,
    pub scheme: PoolScheme,
    pub pg_count: u32,
    /// User bytes stored per PG, indexed by PG.
    pub stored_bytes_per_pg: Vec<u64>,
}

impl Pool {
    /// Total shards this pool places: `pg_count * shard_count`.
    pub fn total_shard_count(&self) -> u64 {
        self.pg_count as u64 * self.scheme.shard_count() as u64
    }

    /// Size of one shard of the given PG. Every shard of a PG has the same
    /// size: the full PG bytes when replicated, `ceil(bytes / k)` when
    /// erasure-coded (rounded up so accounting never undercounts).
    pub fn shard_size_bytes(&self, pg_index: u32) -> Result<u64, ModelError> {
        let bytes = *self
            .stored_bytes_per_pg
            .get(pg_index as usize)
            .ok_or(ModelError::PgOutOfRange { pool: self.id, pg: pg_index, pg_count: self.pg_count })?;
        Ok(match self.scheme {
            PoolScheme::Replicated { .. } => bytes,
            PoolScheme::Erasure { k, .. } => bytes.div_ceil(k as u64),
        })
    }
}

/// Mapping from (pool, PG) to the ordered OSDs holding that PG's shards.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PgShardMap {
    per_pool: BTreeMap<PoolId, Vec<Vec<OsdId>>>,
}

impl PgShardMap {
    pub fn insert_pool(&mut self, pool: PoolId, placements: Vec<Vec<OsdId>>) {
        self.per_pool.insert(pool, placements);
    }

    pub fn pool(&self, pool: PoolId) -> Option<&[Vec<OsdId>]> {
        self.per_pool.get(&pool).map(|v| v.as_slice())
    }

    pub fn shards(&self, pool: PoolId, pg: u32) -> Option<&[OsdId]> {
        self.per_pool.get(&pool)?.get(pg as usize).map(|v| v.as_slice())
    }

    pub fn pools(&self) -> impl Iterator<Item = (PoolId, &Vec<Vec<OsdId>>)> {
        self.per_pool.iter().map(|(id, pgs)| (*id, pgs))
    }

    pub(crate) fn set_slot(&mut self, pool: PoolId, pg: u32, slot: u32, osd: OsdId) {
        self.per_pool.get_mut(&pool).unwrap()[pg as usize][slot as usize] = osd;
    }
}

/// The whole cluster: single source of truth mutated only through
/// [`crate::sim::apply_move`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub osds: BTreeMap<OsdId, Osd>,
    pub tree: CrushTree,
    pub rules: BTreeMap<RuleId, PlacementRule>,
    pub pools: BTreeMap<PoolId, Pool>,
    pub pg_map: PgShardMap,
}

impl ClusterState {
    /// Build a state from parts. Attaches CRUSH leaves, recomputes node
    /// weights, and recomputes every OSD's `used_bytes` as overhead plus
    /// resident shard sizes. Semantic validity is checked separately by
    /// [`validate_state`].
    pub fn assemble(
        osds: BTreeMap<OsdId, Osd>,
        interior_nodes: Vec<CrushNode>,
        root: NodeId,
        rules: BTreeMap<RuleId, PlacementRule>,
        pools: BTreeMap<PoolId, Pool>,
        pg_map: PgShardMap,
    ) -> Result<Self, ModelError> {
        let tree = CrushTree::assemble(interior_nodes, root, &osds)?;
        let mut state = ClusterState { osds, tree, rules, pools, pg_map };
        state.recompute_used_bytes()?;
        Ok(state)
    }

    /// Replace the shard map and re-derive per-OSD usage.
    pub fn with_placement(mut self, pg_map: PgShardMap) -> Result<Self, ModelError> {
        self.pg_map = pg_map;
        self.recompute_used_bytes()?;
        Ok(self)
    }

    /// Re-derive every OSD's `used_bytes` from the current pools and shard
    /// map, after direct edits to per-PG bytes.
    pub fn recompute_usage(&mut self) -> Result<(), ModelError> {
        self.recompute_used_bytes()
    }

    fn recompute_used_bytes(&mut self) -> Result<(), ModelError> {
        for osd in self.osds.values_mut() {
            osd.used_bytes = osd.overhead_bytes;
        }
        for (pool_id, pgs) in self.pg_map.pools() {
            let pool = self.pools.get(&pool_id).ok_or(ModelError::UnknownPool(pool_id))?;
            for (pg, shards) in pgs.iter().enumerate() {
                let size = pool.shard_size_bytes(pg as u32)?;
                for &osd_id in shards {
                    let osd =
                        self.osds.get_mut(&osd_id).ok_or(ModelError::UnknownOsd(osd_id))?;
                    osd.used_bytes += size;
                }
            }
        }
        Ok(())
    }

    pub fn osd(&self, id: OsdId) -> Result<&Osd, ModelError> {
        self.osds.get(&id).ok_or(ModelError::UnknownOsd(id))
    }

    pub fn pool(&self, id: PoolId) -> Result<&Pool, ModelError> {
        self.pools.get(&id).ok_or(ModelError::UnknownPool(id))
    }

    pub fn rule(&self, id: RuleId) -> Result<&PlacementRule, ModelError> {
        self.rules.get(&id).ok_or(ModelError::UnknownRule(id))
    }

    pub fn rule_of_pool(&self, pool: PoolId) -> Result<&PlacementRule, ModelError> {
        self.rule(self.pool(pool)?.rule)
    }

    /// Fill fraction of one OSD.
    pub fn osd_utilization(&self, id: OsdId) -> Result<f64, ModelError> {
        Ok(self.osd(id)?.utilization())
    }

    /// True if the OSD may hold shards of pools using `rule`: matching device
    /// class and located under the rule's root.
    pub fn is_eligible(&self, rule: &PlacementRule, osd: &Osd) -> bool {
        if let Some(class) = rule.device_class_filter {
            if osd.device_class != class {
                return false;
            }
        }
        match self.tree.leaf_of(osd.id) {
            Some(leaf) => self.tree.is_under(leaf, rule.root),
            None => false,
        }
    }

    /// OSDs eligible for the pool's rule, ascending by id.
    pub fn eligible_osds(&self, pool: PoolId) -> Result<Vec<OsdId>, ModelError> {
        let rule = self.rule_of_pool(pool)?;
        Ok(self
            .osds
            .values()
            .filter(|osd| self.is_eligible(rule, osd))
            .map(|osd| osd.id)
            .collect())
    }

    /// Capacity-proportional fair share of the pool's shards on one OSD:
    /// `pool_shard_count * (capacity / sum of eligible capacities)`.
    pub fn ideal_shard_count(&self, pool: PoolId, osd: OsdId) -> Result<f64, ModelError> {
        let rule = self.rule_of_pool(pool)?;
        let target = self.osd(osd)?;
        if !self.is_eligible(rule, target) {
            return Err(ModelError::OsdNotEligible { osd, pool });
        }
        let eligible_sum: u64 = self
            .osds
            .values()
            .filter(|o| self.is_eligible(rule, o))
            .map(|o| o.capacity_bytes)
            .sum();
        let total = self.pool(pool)?.total_shard_count();
        Ok(ideal_from_sum(total, target.capacity_bytes, eligible_sum))
    }

    /// Number of this pool's shards resident on each OSD (absent = zero).
    pub fn pool_shard_counts(&self, pool: PoolId) -> Result<BTreeMap<OsdId, u32>, ModelError> {
        let pgs = self.pg_map.pool(pool).ok_or(ModelError::UnknownPool(pool))?;
        let mut counts = BTreeMap::new();
        for shards in pgs {
            for &osd in shards {
                *counts.entry(osd).or_insert(0) += 1;
            }
        }
        Ok(counts)
    }

    /// Maximum additional user bytes the pool can absorb before some
    /// participating OSD overflows, assuming uniform object hashing: each PG
    /// receives an equal share of new bytes and each shard grows by that share
    /// (replicated) or 1/k of it (erasure-coded). The binding constraint is
    /// `min over OSDs o of free(o) * pg_count * d / n_o` with d = 1 or k and
    /// n_o the pool's shard count on o.
    pub fn pool_free_space(&self, pool: PoolId) -> Result<u64, ModelError> {
        let p = self.pool(pool)?;
        let counts = self.pool_shard_counts(pool)?;
        if counts.is_empty() {
            return Err(ModelError::PoolHasNoShards(pool));
        }
        let d = p.scheme.data_width() as u128;
        let pg_count = p.pg_count as u128;
        let mut limit = u64::MAX;
        for (&osd, &n) in &counts {
            let free = self.osd(osd)?.free_bytes() as u128;
            let cap = (free * pg_count * d / n as u128).min(u64::MAX as u128) as u64;
            limit = limit.min(cap);
        }
        Ok(limit)
    }

    /// Unweighted population variance of OSD utilization over the OSDs of one
    /// device class (or over all OSDs when `class` is `None`).
    pub fn utilization_variance(&self, class: Option<DeviceClass>) -> Result<f64, ModelError> {
        self.utilization_variance_with_overrides(class, &[])
    }

    /// Same computation as [`Self::utilization_variance`], with the used-bytes
    /// of a few OSDs hypothetically overridden. Sharing one code path keeps
    /// "variance after a candidate move" bit-identical to recomputing on a
    /// mutated copy of the state.
    pub fn utilization_variance_with_overrides(
        &self,
        class: Option<DeviceClass>,
        overrides: &[(OsdId, u64)],
    ) -> Result<f64, ModelError> {
        let used_of = |osd: &Osd| -> u64 {
            overrides
                .iter()
                .find(|(id, _)| *id == osd.id)
                .map(|(_, used)| *used)
                .unwrap_or(osd.used_bytes)
        };
        let mut utils = Vec::new();
        for osd in self.osds.values() {
            if class.is_none() || class == Some(osd.device_class) {
                utils.push(used_of(osd) as f64 / osd.capacity_bytes as f64);
            }
        }
        if utils.is_empty() {
            return Err(ModelError::NoOsdsInClass(class));
        }
        let n = utils.len() as f64;
        let mean = utils.iter().sum::<f64>() / n;
        Ok(utils.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / n)
    }

    /// Device classes present in the cluster, ascending.
    pub fn device_classes(&self) -> Vec<DeviceClass> {
        let set: BTreeSet<DeviceClass> = self.osds.values().map(|o| o.device_class).collect();
        set.into_iter().collect()
    }

    /// Relocate one shard and adjust byte accounting. Callers must have
    /// validated the move (see [`crate::sim::apply_move`]).
    pub(crate) fn relocate_shard(&mut self, pool: PoolId, pg: u32, slot: u32, to: OsdId) {
        let from = self.pg_map.shards(pool, pg).unwrap()[slot as usize];
        let size = self.pools[&pool].shard_size_bytes(pg).unwrap();
        self.pg_map.set_slot(pool, pg, slot, to);
        let from_osd = self.osds.get_mut(&from).unwrap();
        from_osd.used_bytes -= size;
        let to_osd = self.osds.get_mut(&to).unwrap();
        to_osd.used_bytes += size;
    }
}

/// Shared ideal-count formula so cached and uncached paths produce identical
/// floating-point results.
pub(crate) fn ideal_from_sum(pool_shard_count: u64, capacity: u64, eligible_sum: u64) -> f64 {
    pool_shard_count as f64 * (capacity as f64 / eligible_sum as f64)
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown OSD id {0}")]
    UnknownOsd(OsdId),
    #[error("unknown pool id {0}")]
    UnknownPool(PoolId),
    #[error("unknown rule id {0}")]
    UnknownRule(RuleId),
    #[error("unknown CRUSH node id {0}")]
    UnknownNode(NodeId),
    #[error("unknown device class '{0}'")]
    UnknownDeviceClass(String),
    #[error("pg index {pg} out of range for pool {pool} with {pg_count} PGs")]
    PgOutOfRange { pool: PoolId, pg: u32, pg_count: u32 },
    #[error("OSD {osd} is not eligible for pool {pool}")]
    OsdNotEligible { osd: OsdId, pool: PoolId },
    #[error("pool {0} has no placed shards")]
    PoolHasNoShards(PoolId),
    #[error("no OSDs match device class filter {0:?}")]
    NoOsdsInClass(Option<DeviceClass>),
    #[error("invalid topology: {0}")]
    Topology(String),
}

/// One broken invariant found by [`validate_state`]. Violations are data, not
/// errors: an empty list means the state is valid.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Violation {
    #[error("osd {osd}: used {used} exceeds capacity {capacity}")]
    CapacityExceeded { osd: OsdId, used: u64, capacity: u64 },
    #[error("osd {osd}: capacity must be positive")]
    ZeroCapacity { osd: OsdId },
    #[error("osd {osd}: used_bytes {recorded} != overhead + shard sizes {expected}")]
    UsedBytesMismatch { osd: OsdId, recorded: u64, expected: u64 },
    #[error("node {node}: recorded weight {recorded} != sum of leaf capacities {expected}")]
    WeightMismatch { node: NodeId, recorded: u64, expected: u64 },
    #[error("node {node}: child {child} at level {child_level} not below {level}")]
    LevelOrder { node: NodeId, child: NodeId, level: CrushLevel, child_level: CrushLevel },
    #[error("osd {osd} has no leaf in the CRUSH tree")]
    MissingLeaf { osd: OsdId },
    #[error("node {node} is unreachable from the root")]
    UnreachableNode { node: NodeId },
    #[error("rule {rule}: shard_count must be >= 1")]
    EmptyRule { rule: RuleId },
    #[error("rule {rule}: failure domain {domain} not strictly below root level {root_level}")]
    RuleLevelInvalid { rule: RuleId, domain: CrushLevel, root_level: CrushLevel },
    #[error("rule {rule}: references unknown node {node}")]
    RuleRootMissing { rule: RuleId, node: NodeId },
    #[error("pool {pool}: references unknown rule {rule}")]
    PoolRuleMissing { pool: PoolId, rule: RuleId },
    #[error("pool {pool}: scheme shard count {scheme} != rule shard count {rule}")]
    SchemeShardMismatch { pool: PoolId, scheme: u32, rule: u32 },
    #[error("pool {pool}: pg_count must be >= 1")]
    EmptyPool { pool: PoolId },
    #[error("pool {pool}: {got} per-PG byte entries for {pg_count} PGs")]
    PgBytesLength { pool: PoolId, got: usize, pg_count: u32 },
    #[error("pool {pool}: shard map missing or wrong length")]
    UnplacedPool { pool: PoolId },
    #[error("shard map references unknown pool {pool}")]
    MapUnknownPool { pool: PoolId },
    #[error("pg {pool}.{pg:x}: {got} shards, rule wants {expected}")]
    ShardCountMismatch { pool: PoolId, pg: u32, got: usize, expected: u32 },
    #[error("pg {pool}.{pg:x}: references unknown OSD {osd}")]
    ShardUnknownOsd { pool: PoolId, pg: u32, osd: OsdId },
    #[error("pg {pool}.{pg:x}: OSD {osd} holds more than one shard")]
    DuplicateShardOsd { pool: PoolId, pg: u32, osd: OsdId },
    #[error("pg {pool}.{pg:x}: shards share failure domain node {domain}")]
    FailureDomainCollision { pool: PoolId, pg: u32, domain: NodeId },
    #[error("pg {pool}.{pg:x}: OSD {osd} has no ancestor at the rule's failure domain level")]
    NoFailureDomain { pool: PoolId, pg: u32, osd: OsdId },
    #[error("pg {pool}.{pg:x}: OSD {osd} violates device class filter {class}")]
    ClassMismatch { pool: PoolId, pg: u32, osd: OsdId, class: DeviceClass },
    #[error("pg {pool}.{pg:x}: OSD {osd} is outside the rule root subtree")]
    NotUnderRoot { pool: PoolId, pg: u32, osd: OsdId },
}

/// Check every model invariant and report all violations found.
pub fn validate_state(state: &ClusterState) -> Vec<Violation> {
    let mut violations = Vec::new();

    for osd in state.osds.values() {
        if osd.capacity_bytes == 0 {
            violations.push(Violation::ZeroCapacity { osd: osd.id });
        }
        if osd.used_bytes > osd.capacity_bytes {
            violations.push(Violation::CapacityExceeded {
                osd: osd.id,
                used: osd.used_bytes,
                capacity: osd.capacity_bytes,
            });
        }
        if state.tree.leaf_of(osd.id).is_none() {
            violations.push(Violation::MissingLeaf { osd: osd.id });
        }
    }

    // Byte accounting: used = overhead + resident shard sizes.
    let mut expected_used: BTreeMap<OsdId, u64> =
        state.osds.values().map(|o| (o.id, o.overhead_bytes)).collect();
    for (pool_id, pgs) in state.pg_map.pools() {
        let Some(pool) = state.pools.get(&pool_id) else { continue };
        for (pg, shards) in pgs.iter().enumerate() {
            let Ok(size) = pool.shard_size_bytes(pg as u32) else { continue };
            for osd in shards {
                if let Some(total) = expected_used.get_mut(osd) {
                    *total += size;
                }
            }
        }
    }
    for osd in state.osds.values() {
        let expected = expected_used[&osd.id];
        if osd.used_bytes != expected {
            violations.push(Violation::UsedBytesMismatch {
                osd: osd.id,
                recorded: osd.used_bytes,
                expected,
            });
        }
    }

    // Tree shape, reachability, and recorded weights.
    let mut reachable = BTreeSet::new();
    let mut stack = vec![state.tree.root()];
    while let Some(id) = stack.pop() {
        if !reachable.insert(id) {
            continue;
        }
        let Some(node) = state.tree.node(id) else { continue };
        for &child in &node.children {
            if let Some(c) = state.tree.node(child) {
                if c.level.rank() >= node.level.rank() {
                    violations.push(Violation::LevelOrder {
                        node: id,
                        child,
                        level: node.level,
                        child_level: c.level,
                    });
                }
            }
            stack.push(child);
        }
    }
    for node in state.tree.nodes() {
        if !reachable.contains(&node.id) {
            violations.push(Violation::UnreachableNode { node: node.id });
        }
        let expected = subtree_capacity(state, node.id);
        if node.weight != expected {
            violations.push(Violation::WeightMismatch {
                node: node.id,
                recorded: node.weight,
                expected,
            });
        }
    }

    for rule in state.rules.values() {
        if rule.shard_count == 0 {
            violations.push(Violation::EmptyRule { rule: rule.id });
        }
        match state.tree.node(rule.root) {
            None => violations.push(Violation::RuleRootMissing { rule: rule.id, node: rule.root }),
            Some(root) => {
                if rule.failure_domain_level.rank() >= root.level.rank() {
                    violations.push(Violation::RuleLevelInvalid {
                        rule: rule.id,
                        domain: rule.failure_domain_level,
                        root_level: root.level,
                    });
                }
            }
        }
    }

    for pool in state.pools.values() {
        if pool.pg_count == 0 {
            violations.push(Violation::EmptyPool { pool: pool.id });
        }
        if pool.stored_bytes_per_pg.len() != pool.pg_count as usize {
            violations.push(Violation::PgBytesLength {
                pool: pool.id,
                got: pool.stored_bytes_per_pg.len(),
                pg_count: pool.pg_count,
            });
        }
        let Some(rule) = state.rules.get(&pool.rule) else {
            violations.push(Violation::PoolRuleMissing { pool: pool.id, rule: pool.rule });
            continue;
        };
        if pool.scheme.shard_count() != rule.shard_count {
            violations.push(Violation::SchemeShardMismatch {
                pool: pool.id,
                scheme: pool.scheme.shard_count(),
                rule: rule.shard_count,
            });
        }
        match state.pg_map.pool(pool.id) {
            Some(pgs) if pgs.len() == pool.pg_count as usize => {}
            _ => violations.push(Violation::UnplacedPool { pool: pool.id }),
        }
    }

    for (pool_id, pgs) in state.pg_map.pools() {
        let Some(pool) = state.pools.get(&pool_id) else {
            violations.push(Violation::MapUnknownPool { pool: pool_id });
            continue;
        };
        let Some(rule) = state.rules.get(&pool.rule) else { continue };
        for (pg_idx, shards) in pgs.iter().enumerate() {
            let pg = pg_idx as u32;
            if shards.len() != rule.shard_count as usize {
                violations.push(Violation::ShardCountMismatch {
                    pool: pool_id,
                    pg,
                    got: shards.len(),
                    expected: rule.shard_count,
                });
            }
            let mut seen_osds = BTreeSet::new();
            let mut seen_domains = BTreeSet::new();
            for &osd_id in shards {
                let Some(osd) = state.osds.get(&osd_id) else {
                    violations.push(Violation::ShardUnknownOsd { pool: pool_id, pg, osd: osd_id });
                    continue;
                };
                if !seen_osds.insert(osd_id) {
                    violations.push(Violation::DuplicateShardOsd {
                        pool: pool_id,
                        pg,
                        osd: osd_id,
                    });
                }
                if let Some(class) = rule.device_class_filter {
                    if osd.device_class != class {
                        violations.push(Violation::ClassMismatch {
                            pool: pool_id,
                            pg,
                            osd: osd_id,
                            class,
                        });
                    }
                }
                match state.tree.leaf_of(osd_id) {
                    Some(leaf) if state.tree.is_under(leaf, rule.root) => {}
                    _ => {
                        violations.push(Violation::NotUnderRoot { pool: pool_id, pg, osd: osd_id })
                    }
                }
                match state.tree.domain_of_osd(osd_id, rule.failure_domain_level) {
                    Some(domain) => {
                        if !seen_domains.insert(domain) {
                            violations.push(Violation::FailureDomainCollision {
                                pool: pool_id,
                                pg,
                                domain,
                            });
                        }
                    }
                    None => violations.push(Violation::NoFailureDomain {
                        pool: pool_id,
                        pg,
                        osd: osd_id,
                    }),
                }
            }
        }
    }

    violations
}

fn subtree_capacity(state: &ClusterState, node: NodeId) -> u64 {
    let Some(n) = state.tree.node(node) else { return 0 };
    if let Some(osd) = n.osd {
        return state.osds.get(&osd).map_or(0, |o| o.capacity_bytes);
    }
    n.children.iter().map(|&c| subtree_capacity(state, c)).sum()
}
