//! Storage-cluster balancing toolkit.
//!
//! Models a Ceph-like cluster (OSDs, a CRUSH hierarchy, pools, PG shards),
//! generates rule-compliant initial placements with a simplified CRUSH
//! engine, computes rebalancing plans with a size-aware balancer and a
//! count-based baseline, and simulates plan execution to report gained free
//! space, utilization variance, and movement cost.

pub mod balance;
pub mod cluster;
pub mod generator;
pub mod io;
pub mod placement;
pub mod sim;

pub use balance::{
    balance, balance_count, balance_count_with_times, balance_with_times, BalanceConfig,
    CountBalanceConfig, Move, Plan,
};
pub use cluster::{
    validate_state, ClusterState, CrushLevel, CrushNode, CrushTree, DeviceClass, ModelError,
    NodeId, Osd, OsdId, PgShardMap, PlacementRule, Pool, PoolId, PoolScheme, RuleId, Violation,
};
pub use generator::{generate_preset, GeneratorError, Preset, PresetSpec};
pub use placement::{candidate_destinations, place_pg, straw2_select, PlacementError, SelectionContext};
pub use sim::{apply_move, simulate_plan, simulate_plan_timed, summarize, Summary, TrajectoryRecord};
