//! Rebalancing plan generation: the size-aware balancer and the count-based
//! baseline, both emitting ordered move lists bound to their source state.

mod count;
mod equilibrium;

pub use count::{balance_count, balance_count_with_times, CountBalanceConfig};
pub use equilibrium::{
    balance, balance_with_times, move_improves_counts, move_reduces_variance, next_move,
    select_destination, shards_by_size_desc, sort_sources, variance_scope, BalanceConfig,
    ShardInfo, VARIANCE_EPSILON,
};

use thiserror::Error;

use crate::cluster::{OsdId, PoolId, Violation};

/// One shard relocation: move the shard of `pool`/`pg` at `slot` from `from`
/// to `to`. `bytes` is the shard size at the time the move was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub pool: PoolId,
    pub pg: u32,
    pub slot: u32,
    pub from: OsdId,
    pub to: OsdId,
    pub bytes: u64,
}

/// An ordered list of moves plus the fingerprint of the state they were
/// generated from. Replaying the plan from that state is valid at every step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub fingerprint: String,
    pub moves: Vec<Move>,
}

impl Plan {
    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    /// Total bytes the plan would move.
    pub fn total_bytes(&self) -> u64 {
        self.moves.iter().map(|m| m.bytes).sum()
    }
}

#[derive(Debug, Clone, Error)]
pub enum BalanceError {
    #[error("initial state is invalid: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidState(Vec<Violation>),
}
