//! Cluster-state document: versioned, human-readable JSON. Serialization is
//! canonical (stable key order and formatting), so parse → serialize → parse
//! is the identity and the serialized bytes can be fingerprinted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cluster::{
    validate_state, ClusterState, CrushLevel, CrushNode, DeviceClass, NodeId, Osd, OsdId,
    PgShardMap, PlacementRule, Pool, PoolId, PoolScheme, RuleId,
};

pub const STATE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    version: u32,
    osds: Vec<OsdDoc>,
    crush: NodeDoc,
    rules: Vec<RuleDoc>,
    pools: Vec<PoolDoc>,
    pg_map: Vec<PoolMapDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OsdDoc {
    id: OsdId,
    capacity_bytes: u64,
    overhead_bytes: u64,
    class: DeviceClass,
    /// Name of the host node this OSD hangs under.
    host: String,
}

/// Interior CRUSH nodes only; OSD leaves are regenerated from the osds
/// section on parse.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: NodeId,
    name: String,
    level: CrushLevel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<NodeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    id: RuleId,
    device_class: Option<DeviceClass>,
    failure_domain: CrushLevel,
    shard_count: u32,
    root: NodeId,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum SchemeDoc {
    Replicated { size: u32 },
    Erasure { k: u32, m: u32 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolDoc {
    id: PoolId,
    name: String,
    rule: RuleId,
    scheme: SchemeDoc,
    pg_count: u32,
    pg_bytes: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolMapDoc {
    pool: PoolId,
    /// One OSD list per PG, indexed by PG.
    pgs: Vec<Vec<OsdId>>,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error("unsupported format version {0} (expected {STATE_FORMAT_VERSION})")]
    Version(u32),
    #[error("semantic error(s):\n{}", .0.join("\n"))]
    Semantic(Vec<String>),
}

impl From<serde_json::Error> for ParseError {
    fn from(err: serde_json::Error) -> Self {
        let (line, column) = (err.line(), err.column());
        let message = err.to_string();
        match err.classify() {
            serde_json::error::Category::Data => ParseError::Schema { line, column, message },
            _ => ParseError::Syntax { line, column, message },
        }
    }
}

/// Parse a state document. The returned state always passes
/// [`validate_state`]; anything else is reported as an error with its
/// location (syntax/schema) or the offending entity (semantic).
pub fn parse_state(text: &str) -> Result<ClusterState, ParseError> {
    let doc: StateDoc = serde_json::from_str(text)?;
    if doc.version != STATE_FORMAT_VERSION {
        return Err(ParseError::Version(doc.version));
    }

    let mut semantic = Vec::new();

    let mut interior = Vec::new();
    let mut hosts_by_name: BTreeMap<String, NodeId> = BTreeMap::new();
    flatten_nodes(&doc.crush, &mut interior, &mut hosts_by_name, &mut semantic);
    let root = doc.crush.id;

    let mut osds: BTreeMap<OsdId, Osd> = BTreeMap::new();
    for o in &doc.osds {
        let Some(&host) = hosts_by_name.get(&o.host) else {
            semantic.push(format!("osd {}: unknown host '{}'", o.id, o.host));
            continue;
        };
        let osd = Osd {
            id: o.id,
            capacity_bytes: o.capacity_bytes,
            used_bytes: 0,
            overhead_bytes: o.overhead_bytes,
            device_class: o.class,
            crush_parent: host,
        };
        if osds.insert(o.id, osd).is_some() {
            semantic.push(format!("duplicate OSD id {}", o.id));
        }
    }

    let mut rules = BTreeMap::new();
    for r in &doc.rules {
        let rule = PlacementRule {
            id: r.id,
            device_class_filter: r.device_class,
            failure_domain_level: r.failure_domain,
            shard_count: r.shard_count,
            root: r.root,
        };
        if rules.insert(r.id, rule).is_some() {
            semantic.push(format!("duplicate rule id {}", r.id));
        }
    }

    let mut pools = BTreeMap::new();
    for p in &doc.pools {
        let scheme = match p.scheme {
            SchemeDoc::Replicated { size } => PoolScheme::Replicated { size },
            SchemeDoc::Erasure { k, m } => PoolScheme::Erasure { k, m },
        };
        let pool = Pool {
            id: p.id,
            name: p.name.clone(),
            rule: p.rule,
            scheme,
            pg_count: p.pg_count,
            stored_bytes_per_pg: p.pg_bytes.clone(),
        };
        if pools.insert(p.id, pool).is_some() {
            semantic.push(format!("duplicate pool id {}", p.id));
        }
    }

    let mut pg_map = PgShardMap::default();
    for m in &doc.pg_map {
        if pg_map.pool(m.pool).is_some() {
            semantic.push(format!("duplicate pg_map entry for pool {}", m.pool));
            continue;
        }
        for (pg, shards) in m.pgs.iter().enumerate() {
            for osd in shards {
                if !osds.contains_key(osd) {
                    semantic.push(format!(
                        "pg {}.{:x}: shard on unknown OSD {}",
                        m.pool, pg, osd
                    ));
                }
            }
        }
        pg_map.insert_pool(m.pool, m.pgs.clone());
    }

    if !semantic.is_empty() {
        return Err(ParseError::Semantic(semantic));
    }

    let state = ClusterState::assemble(osds, interior, root, rules, pools, pg_map)
        .map_err(|e| ParseError::Semantic(vec![e.to_string()]))?;
    let violations = validate_state(&state);
    if !violations.is_empty() {
        return Err(ParseError::Semantic(
            violations.iter().map(|v| v.to_string()).collect(),
        ));
    }
    Ok(state)
}

fn flatten_nodes(
    doc: &NodeDoc,
    out: &mut Vec<CrushNode>,
    hosts: &mut BTreeMap<String, NodeId>,
    semantic: &mut Vec<String>,
) {
    let mut node = CrushNode::interior(doc.id, doc.name.clone(), doc.level);
    node.children = doc.children.iter().map(|c| c.id).collect();
    if doc.level == CrushLevel::Host && hosts.insert(doc.name.clone(), doc.id).is_some() {
        semantic.push(format!("duplicate host name '{}'", doc.name));
    }
    out.push(node);
    for child in &doc.children {
        flatten_nodes(child, out, hosts, semantic);
    }
}

/// Serialize to the canonical form: entities ascending by id, two-space
/// indentation, trailing newline. Identical states produce identical bytes.
pub fn serialize_state(state: &ClusterState) -> String {
    let osds: Vec<OsdDoc> = state
        .osds
        .values()
        .map(|o| OsdDoc {
            id: o.id,
            capacity_bytes: o.capacity_bytes,
            overhead_bytes: o.overhead_bytes,
            class: o.device_class,
            host: state
                .tree
                .node(o.crush_parent)
                .map(|n| n.name.clone())
                .unwrap_or_default(),
        })
        .collect();
    let crush = node_doc(state, state.tree.root());
    let rules: Vec<RuleDoc> = state
        .rules
        .values()
        .map(|r| RuleDoc {
            id: r.id,
            device_class: r.device_class_filter,
            failure_domain: r.failure_domain_level,
            shard_count: r.shard_count,
            root: r.root,
        })
        .collect();
    let pools: Vec<PoolDoc> = state
        .pools
        .values()
        .map(|p| PoolDoc {
            id: p.id,
            name: p.name.clone(),
            rule: p.rule,
            scheme: match p.scheme {
                PoolScheme::Replicated { size } => SchemeDoc::Replicated { size },
                PoolScheme::Erasure { k, m } => SchemeDoc::Erasure { k, m },
            },
            pg_count: p.pg_count,
            pg_bytes: p.stored_bytes_per_pg.clone(),
        })
        .collect();
    let pg_map: Vec<PoolMapDoc> = state
        .pg_map
        .pools()
        .map(|(pool, pgs)| PoolMapDoc { pool, pgs: pgs.clone() })
        .collect();
    let doc = StateDoc { version: STATE_FORMAT_VERSION, osds, crush, rules, pools, pg_map };
    let mut text = serde_json::to_string_pretty(&doc).expect("state documents always serialize");
    text.push('\n');
    text
}

fn node_doc(state: &ClusterState, id: NodeId) -> NodeDoc {
    let node = state.tree.node(id).expect("serializing a node that exists");
    NodeDoc {
        id,
        name: node.name.clone(),
        level: node.level,
        children: node
            .children
            .iter()
            .filter(|&&c| state.tree.node(c).is_some_and(|n| n.osd.is_none()))
            .map(|&c| node_doc(state, c))
            .collect(),
    }
}

/// SHA-256 of the canonical serialization, as lowercase hex. Plans carry this
/// to pin the state they were generated from.
pub fn fingerprint(state: &ClusterState) -> String {
    let digest = Sha256::digest(serialize_state(state).as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}
