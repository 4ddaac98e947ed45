//! Synthetic cluster presets A-F: topologies, pool layouts, and per-PG byte
//! distributions modeled on six real production clusters, scalable down for
//! fast experiments and fully deterministic in the seed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

use crate::cluster::{
    validate_state, ClusterState, CrushLevel, CrushNode, DeviceClass, NodeId, Osd, OsdId,
    PlacementRule, Pool, PoolId, PoolScheme, RuleId, Violation,
};
use crate::placement::{place_all, PlacementError};

const TIB: f64 = (1u64 << 40) as f64;

/// Utilization ceiling after generation; per-PG bytes are scaled down if the
/// initial placement pushes any OSD above it.
const MAX_INITIAL_UTILIZATION: f64 = 0.92;

/// Share of a device class's byte budget that goes to user-data pools when
/// the class also hosts metadata pools.
const USER_DATA_SHARE: f64 = 0.95;

/// Pools receive bytes proportionally to `pg_count` raised to this exponent.
/// Sublinear, so pools with few PGs end up with disproportionately large PGs,
/// as on real clusters where PG counts lag data growth.
const POOL_BYTES_EXPONENT: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Preset {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Preset {
    pub const ALL: [Preset; 6] = [Preset::A, Preset::B, Preset::C, Preset::D, Preset::E, Preset::F];

    pub fn name(self) -> &'static str {
        match self {
            Preset::A => "A",
            Preset::B => "B",
            Preset::C => "C",
            Preset::D => "D",
            Preset::E => "E",
            Preset::F => "F",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = GeneratorError;

    fn from_str(s: &str) -> Result<Self, GeneratorError> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Preset::A),
            "B" => Ok(Preset::B),
            "C" => Ok(Preset::C),
            "D" => Ok(Preset::D),
            "E" => Ok(Preset::E),
            "F" => Ok(Preset::F),
            other => Err(GeneratorError::UnknownPreset(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetSpec {
    pub preset: Preset,
    /// Proportional shrink factor in (0, 1]: OSD counts, aggregate
    /// capacities, and PG counts all scale with it.
    pub scale: f64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("unknown preset '{0}' (expected A-F)")]
    UnknownPreset(String),
    #[error("scale {0} outside (0, 1]")]
    InvalidScale(f64),
    #[error("scale {scale} infeasible: {class} group needs {needed} failure domains, has {available}")]
    InfeasibleScale { scale: f64, class: DeviceClass, needed: u32, available: u32 },
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Model(#[from] crate::cluster::ModelError),
    #[error("generated state failed validation: {0:?}")]
    Invalid(Vec<Violation>),
}

/// One device group of a preset: how many OSDs of a class, their combined
/// capacity, and how they spread over hosts.
struct GroupDef {
    class: DeviceClass,
    count: u32,
    aggregate_tib: f64,
    osds_per_host: u32,
    /// Relative per-OSD capacity pattern, cycled over the group.
    size_mix: &'static [f64],
}

#[derive(Clone, Copy)]
enum SchemeDef {
    Repl(u32),
    Ec(u32, u32),
}

impl SchemeDef {
    fn to_scheme(self) -> PoolScheme {
        match self {
            SchemeDef::Repl(size) => PoolScheme::Replicated { size },
            SchemeDef::Ec(k, m) => PoolScheme::Erasure { k, m },
        }
    }

    fn shard_count(self) -> u32 {
        self.to_scheme().shard_count()
    }

    /// Physical bytes stored per user byte.
    fn redundancy_factor(self) -> f64 {
        match self {
            SchemeDef::Repl(size) => size as f64,
            SchemeDef::Ec(k, m) => (k + m) as f64 / k as f64,
        }
    }
}

struct PoolDef {
    user_data: bool,
    class: DeviceClass,
    pg_count: u32,
    scheme: SchemeDef,
    domain: CrushLevel,
}

impl PoolDef {
    fn user(class: DeviceClass, pg_count: u32, scheme: SchemeDef, domain: CrushLevel) -> Self {
        PoolDef { user_data: true, class, pg_count, scheme, domain }
    }

    fn meta(class: DeviceClass, pg_count: u32, scheme: SchemeDef, domain: CrushLevel) -> Self {
        PoolDef { user_data: false, class, pg_count, scheme, domain }
    }
}

struct PresetDef {
    groups: Vec<GroupDef>,
    pools: Vec<PoolDef>,
    rack_count: u32,
    target_fill: f64,
    pg_size_sigma: f64,
}

fn preset_def(preset: Preset) -> PresetDef {
    use CrushLevel::{Host, Rack};
    use DeviceClass::{Hdd, Nvme, Ssd};
    use SchemeDef::{Ec, Repl};

    match preset {
        // 225 PGs, 14x HDD totaling 68 TiB, 7 pools, 2 with user data;
        // drives of two generations, the newer twice the size.
        Preset::A => PresetDef {
            groups: vec![GroupDef {
                class: Hdd,
                count: 14,
                aggregate_tib: 68.0,
                osds_per_host: 2,
                size_mix: &[1.0, 1.0, 2.0, 2.0],
            }],
            pools: vec![
                PoolDef::user(Hdd, 128, Repl(3), Host),
                PoolDef::user(Hdd, 64, Repl(3), Host),
                PoolDef::meta(Hdd, 16, Repl(3), Host),
                PoolDef::meta(Hdd, 8, Repl(3), Host),
                PoolDef::meta(Hdd, 4, Repl(3), Host),
                PoolDef::meta(Hdd, 4, Repl(3), Host),
                PoolDef::meta(Hdd, 1, Repl(3), Host),
            ],
            rack_count: 0,
            target_fill: 0.62,
            pg_size_sigma: 0.05,
        },
        // 8731 PGs, 810x HDD (5 PiB) + 185x SSD (1 PiB), 94 pools: 55 user
        // data (3 big ones carrying most bytes), 39 metadata.
        Preset::B => {
            let mut pools = vec![
                PoolDef::user(Hdd, 2048, Repl(3), Rack),
                PoolDef::user(Hdd, 2048, Repl(3), Rack),
                PoolDef::user(Hdd, 1024, Repl(3), Rack),
            ];
            for _ in 0..50 {
                pools.push(PoolDef::user(Hdd, 64, Repl(3), Host));
            }
            pools.push(PoolDef::user(Hdd, 128, Repl(3), Host));
            pools.push(PoolDef::user(Hdd, 32, Repl(3), Host));
            for _ in 0..6 {
                pools.push(PoolDef::meta(Ssd, 32, Repl(3), Host));
            }
            for pg in [16, 8, 4, 2] {
                pools.push(PoolDef::meta(Ssd, pg, Repl(3), Host));
            }
            for _ in 0..29 {
                pools.push(PoolDef::meta(Ssd, 1, Repl(3), Host));
            }
            PresetDef {
                groups: vec![
                    GroupDef {
                        class: Hdd,
                        count: 810,
                        aggregate_tib: 5120.0,
                        osds_per_host: 18,
                        size_mix: &[1.0, 1.0, 1.5],
                    },
                    GroupDef {
                        class: Ssd,
                        count: 185,
                        aggregate_tib: 1024.0,
                        osds_per_host: 5,
                        size_mix: &[1.0],
                    },
                ],
                pools,
                rack_count: 9,
                target_fill: 0.60,
                pg_size_sigma: 0.12,
            }
        }
        // 1249 PGs, 40x HDD (164 TiB) + 10x NVMe (9 TiB), 10 pools, 3 user.
        Preset::C => PresetDef {
            groups: vec![
                GroupDef {
                    class: Hdd,
                    count: 40,
                    aggregate_tib: 164.0,
                    osds_per_host: 5,
                    size_mix: &[1.0, 1.5],
                },
                GroupDef {
                    class: Nvme,
                    count: 10,
                    aggregate_tib: 9.0,
                    osds_per_host: 2,
                    size_mix: &[1.0],
                },
            ],
            pools: vec![
                PoolDef::user(Hdd, 512, Repl(3), Host),
                PoolDef::user(Hdd, 256, Repl(3), Host),
                PoolDef::user(Nvme, 128, Repl(3), Host),
                PoolDef::meta(Hdd, 256, Repl(3), Host),
                PoolDef::meta(Hdd, 64, Repl(3), Host),
                PoolDef::meta(Nvme, 16, Repl(3), Host),
                PoolDef::meta(Nvme, 8, Repl(3), Host),
                PoolDef::meta(Hdd, 4, Repl(3), Host),
                PoolDef::meta(Nvme, 4, Repl(3), Host),
                PoolDef::meta(Hdd, 1, Repl(3), Host),
            ],
            rack_count: 0,
            target_fill: 0.58,
            pg_size_sigma: 0.05,
        },
        // 4181 PGs, 246x HDD (621 TiB) + 60x SSD (105 TiB), 11 pools, 6 user;
        // heterogeneous HDD sizes.
        Preset::D => PresetDef {
            groups: vec![
                GroupDef {
                    class: Hdd,
                    count: 246,
                    aggregate_tib: 621.0,
                    osds_per_host: 6,
                    size_mix: &[1.0, 1.0, 2.0],
                },
                GroupDef {
                    class: Ssd,
                    count: 60,
                    aggregate_tib: 105.0,
                    osds_per_host: 5,
                    size_mix: &[1.0],
                },
            ],
            pools: vec![
                PoolDef::user(Hdd, 2048, Repl(3), Host),
                PoolDef::user(Hdd, 1024, Repl(3), Host),
                PoolDef::user(Hdd, 512, Repl(3), Host),
                PoolDef::user(Ssd, 256, Repl(3), Host),
                PoolDef::user(Hdd, 128, Repl(3), Host),
                PoolDef::user(Ssd, 64, Repl(3), Host),
                PoolDef::meta(Ssd, 64, Repl(3), Host),
                PoolDef::meta(Hdd, 64, Repl(3), Host),
                PoolDef::meta(Ssd, 16, Repl(3), Host),
                PoolDef::meta(Hdd, 4, Repl(3), Host),
                PoolDef::meta(Ssd, 1, Repl(3), Host),
            ],
            rack_count: 6,
            target_fill: 0.55,
            pg_size_sigma: 0.12,
        },
        // 8321 PGs, 608x HDD (8.04 PiB) + 9x SSD (4 TiB), 3 pools, 1 user
        // (erasure-coded archive).
        Preset::E => PresetDef {
            groups: vec![
                GroupDef {
                    class: Hdd,
                    count: 608,
                    aggregate_tib: 8232.96,
                    osds_per_host: 16,
                    size_mix: &[1.0, 1.75],
                },
                GroupDef {
                    class: Ssd,
                    count: 9,
                    aggregate_tib: 4.0,
                    osds_per_host: 3,
                    size_mix: &[1.0],
                },
            ],
            pools: vec![
                PoolDef::user(Hdd, 8192, Ec(6, 2), Host),
                PoolDef::meta(Ssd, 128, Repl(3), Host),
                PoolDef::meta(Ssd, 1, Repl(3), Host),
            ],
            rack_count: 8,
            target_fill: 0.60,
            pg_size_sigma: 0.05,
        },
        // 577 PGs, 78x HDD (425 TiB), 3 pools, 1 user (erasure-coded).
        Preset::F => PresetDef {
            groups: vec![GroupDef {
                class: Hdd,
                count: 78,
                aggregate_tib: 425.0,
                osds_per_host: 6,
                size_mix: &[1.0, 1.25],
            }],
            pools: vec![
                PoolDef::user(Hdd, 512, Ec(4, 2), Host),
                PoolDef::meta(Hdd, 64, Repl(3), Host),
                PoolDef::meta(Hdd, 1, Repl(3), Host),
            ],
            rack_count: 0,
            target_fill: 0.65,
            pg_size_sigma: 0.05,
        },
    }
}

/// Nearest power of two to `n` in log space, at least 1.
fn round_pow2(n: f64) -> u32 {
    if n <= 1.0 {
        return 1;
    }
    let exp = n.log2().round() as u32;
    1u32 << exp.min(31)
}

/// Generate a cluster state for the preset: scaled topology, CRUSH-placed
/// shards, and log-normally distributed per-PG bytes, deterministic in the
/// seed.
pub fn generate_preset(spec: &PresetSpec) -> Result<ClusterState, GeneratorError> {
    if !(spec.scale > 0.0 && spec.scale <= 1.0) {
        return Err(GeneratorError::InvalidScale(spec.scale));
    }
    let def = preset_def(spec.preset);

    // Scale each device group and work out its host requirement.
    let mut scaled_groups = Vec::new();
    for group in &def.groups {
        let count = ((group.count as f64 * spec.scale).round() as u32).max(1);
        let min_domains = def
            .pools
            .iter()
            .filter(|p| p.class == group.class)
            .map(|p| p.scheme.shard_count())
            .max()
            .unwrap_or(1);
        if count < min_domains {
            return Err(GeneratorError::InfeasibleScale {
                scale: spec.scale,
                class: group.class,
                needed: min_domains,
                available: count,
            });
        }
        let natural_hosts = (count as f64 / group.osds_per_host as f64).round() as u32;
        let hosts = natural_hosts.clamp(min_domains, count);
        scaled_groups.push((group, count, hosts));
    }

    // Rack layer (when the preset has one): hosts assigned round-robin.
    let total_hosts: u32 = scaled_groups.iter().map(|(_, _, h)| h).sum();
    let min_racks = def
        .pools
        .iter()
        .filter(|p| p.domain == CrushLevel::Rack)
        .map(|p| p.scheme.shard_count())
        .max()
        .unwrap_or(0);
    let rack_count = if def.rack_count == 0 {
        0
    } else {
        def.rack_count.min(total_hosts).max(min_racks)
    };
    if min_racks > 0 && (rack_count < min_racks || total_hosts < min_racks) {
        return Err(GeneratorError::InfeasibleScale {
            scale: spec.scale,
            class: DeviceClass::Hdd,
            needed: min_racks,
            available: rack_count.min(total_hosts),
        });
    }

    // Interior nodes: root 0, racks 1..=rack_count, hosts after.
    let root: NodeId = 0;
    let mut interior = vec![CrushNode::interior(root, "root", CrushLevel::Root)];
    for r in 0..rack_count {
        let id = 1 + r;
        interior.push(CrushNode::interior(id, format!("rack-{r}"), CrushLevel::Rack));
        interior[0].children.push(id);
    }

    let host_base: NodeId = 1 + rack_count;
    let mut osds: BTreeMap<OsdId, Osd> = BTreeMap::new();
    let mut next_osd: OsdId = 0;
    let mut next_host: u32 = 0;
    for (group, count, hosts) in &scaled_groups {
        let aggregate_bytes = (group.aggregate_tib * TIB * spec.scale) as u128;
        let mix = group.size_mix;
        let mix_total: f64 = (0..*count).map(|i| mix[i as usize % mix.len()]).sum();
        let host_ids: Vec<NodeId> = (0..*hosts)
            .map(|h| {
                let global = next_host + h;
                let id = host_base + global;
                interior.push(CrushNode::interior(
                    id,
                    format!("host-{global}"),
                    CrushLevel::Host,
                ));
                if rack_count > 0 {
                    let rack = 1 + (global % rack_count);
                    interior[rack as usize].children.push(id);
                } else {
                    interior[0].children.push(id);
                }
                id
            })
            .collect();
        next_host += hosts;

        for i in 0..*count {
            let share = mix[i as usize % mix.len()] / mix_total;
            let capacity = (aggregate_bytes as f64 * share) as u64;
            osds.insert(
                next_osd,
                Osd {
                    id: next_osd,
                    capacity_bytes: capacity,
                    used_bytes: 0,
                    overhead_bytes: 0,
                    device_class: group.class,
                    crush_parent: host_ids[(i % *hosts) as usize],
                },
            );
            next_osd += 1;
        }
    }

    // Rules deduplicated over (class, failure domain, shard count).
    let mut rules: BTreeMap<RuleId, PlacementRule> = BTreeMap::new();
    let mut rule_index: BTreeMap<(DeviceClass, CrushLevel, u32), RuleId> = BTreeMap::new();
    let mut pools: BTreeMap<PoolId, Pool> = BTreeMap::new();
    let mut user_seq = 0u32;
    let mut meta_seq = 0u32;
    for (i, pool_def) in def.pools.iter().enumerate() {
        let key = (pool_def.class, pool_def.domain, pool_def.scheme.shard_count());
        let rule_id = *rule_index.entry(key).or_insert_with(|| {
            let id = rules.len() as RuleId;
            rules.insert(
                id,
                PlacementRule {
                    id,
                    device_class_filter: Some(pool_def.class),
                    failure_domain_level: pool_def.domain,
                    shard_count: pool_def.scheme.shard_count(),
                    root,
                },
            );
            id
        });
        let name = if pool_def.user_data {
            user_seq += 1;
            format!("data-{:02}", user_seq)
        } else {
            meta_seq += 1;
            format!("meta-{:02}", meta_seq)
        };
        let pool_id = 1 + i as PoolId;
        pools.insert(
            pool_id,
            Pool {
                id: pool_id,
                name,
                rule: rule_id,
                scheme: pool_def.scheme.to_scheme(),
                pg_count: round_pow2(pool_def.pg_count as f64 * spec.scale),
                stored_bytes_per_pg: Vec::new(),
            },
        );
    }

    // Byte budgets: per class, user pools split USER_DATA_SHARE of the
    // physical budget proportionally to PG count, metadata pools the rest.
    let mut class_capacity: BTreeMap<DeviceClass, f64> = BTreeMap::new();
    for osd in osds.values() {
        *class_capacity.entry(osd.device_class).or_insert(0.0) += osd.capacity_bytes as f64;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let size_noise = LogNormal::new(0.0, def.pg_size_sigma).expect("sigma is finite");
    let pool_ids: Vec<PoolId> = pools.keys().copied().collect();
    for &pool_id in &pool_ids {
        let pool_def = &def.pools[(pool_id - 1) as usize];
        let same_class =
            |p: &&PoolDef| p.class == pool_def.class && p.user_data == pool_def.user_data;
        let kind_weight: f64 = def
            .pools
            .iter()
            .filter(same_class)
            .map(|p| (round_pow2(p.pg_count as f64 * spec.scale) as f64).powf(POOL_BYTES_EXPONENT))
            .sum();
        let class_has_both = def.pools.iter().any(|p| p.class == pool_def.class && p.user_data)
            && def.pools.iter().any(|p| p.class == pool_def.class && !p.user_data);
        let kind_share = if !class_has_both {
            1.0
        } else if pool_def.user_data {
            USER_DATA_SHARE
        } else {
            1.0 - USER_DATA_SHARE
        };
        let physical_budget = class_capacity[&pool_def.class] * def.target_fill * kind_share;
        let pool = pools.get_mut(&pool_id).unwrap();
        let pool_physical =
            physical_budget * (pool.pg_count as f64).powf(POOL_BYTES_EXPONENT) / kind_weight;
        let pool_user_bytes = pool_physical / pool_def.scheme.redundancy_factor();
        let mean_pg = pool_user_bytes / pool.pg_count as f64;
        pool.stored_bytes_per_pg = (0..pool.pg_count)
            .map(|_| (mean_pg * size_noise.sample(&mut rng)) as u64)
            .collect();
    }

    let state = ClusterState::assemble(
        osds,
        interior,
        root,
        rules,
        pools,
        crate::cluster::PgShardMap::default(),
    )?;
    let map = place_all(&state, spec.seed)?;
    let mut state = state.with_placement(map)?;

    // CRUSH placement is multinomial, so an unlucky draw can overfill an OSD;
    // shrink all PG bytes proportionally to restore headroom.
    let max_util = state
        .osds
        .values()
        .map(Osd::utilization)
        .fold(0.0f64, f64::max);
    if max_util > MAX_INITIAL_UTILIZATION {
        let factor = MAX_INITIAL_UTILIZATION / max_util;
        for pool in state.pools.values_mut() {
            for bytes in &mut pool.stored_bytes_per_pg {
                *bytes = (*bytes as f64 * factor) as u64;
            }
        }
        state.recompute_usage()?;
    }

    let violations = validate_state(&state);
    if !violations.is_empty() {
        return Err(GeneratorError::Invalid(violations));
    }
    Ok(state)
}
