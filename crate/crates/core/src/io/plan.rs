//! Plan text format, mirroring Ceph's upmap command style: a fingerprint
//! header followed by one `pg-upmap-items <pool>.<pg-hex> <from> <to> <bytes>`
//! line per move.
//!
//! The wire format carries no shard slot (a PG holds each OSD at most once,
//! so the slot is implied); parsing therefore resolves slots by replaying the
//! moves against the originating state, which also verifies the plan applies
//! cleanly.

use thiserror::Error;

use crate::balance::{Move, Plan};
use crate::cluster::ClusterState;
use crate::sim::ApplyError;

#[derive(Debug, Error)]
pub enum PlanParseError {
    #[error("missing or malformed fingerprint header")]
    MissingHeader,
    #[error("plan fingerprint {expected} does not match state fingerprint {actual}")]
    FingerprintMismatch { expected: String, actual: String },
    #[error("line {line}: malformed move: {text}")]
    MalformedMove { line: usize, text: String },
    #[error("line {line}: OSD {osd} holds no shard of pg {pool}.{pg:x} at that point in the plan")]
    Unresolvable { line: usize, pool: u32, pg: u32, osd: u32 },
    #[error("line {line}: {source}")]
    InvalidMove { line: usize, source: ApplyError },
}

/// Render a plan: header line with the state fingerprint, then one move per
/// line, e.g. `pg-upmap-items 1.a 3 7 4294967296`.
pub fn write_plan(plan: &Plan) -> String {
    let mut out = format!("# fingerprint {}\n", plan.fingerprint);
    for m in &plan.moves {
        out.push_str(&format!(
            "pg-upmap-items {}.{:x} {} {} {}\n",
            m.pool, m.pg, m.from, m.to, m.bytes
        ));
    }
    out
}

/// Parse a plan against the state it was generated from. Verifies the
/// fingerprint, resolves each move's shard slot, and replays the moves on a
/// scratch copy so a returned plan is known to apply cleanly.
pub fn parse_plan(text: &str, state: &ClusterState) -> Result<Plan, PlanParseError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(PlanParseError::MissingHeader)?;
    let expected = header
        .strip_prefix("# fingerprint ")
        .map(str::trim)
        .filter(|fp| !fp.is_empty())
        .ok_or(PlanParseError::MissingHeader)?;
    let actual = super::state::fingerprint(state);
    if expected != actual {
        return Err(PlanParseError::FingerprintMismatch {
            expected: expected.to_string(),
            actual,
        });
    }

    let mut working = state.clone();
    let mut moves = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = || PlanParseError::MalformedMove { line: line_no, text: line.to_string() };
        let mut fields = line.split_ascii_whitespace();
        if fields.next() != Some("pg-upmap-items") {
            return Err(malformed());
        }
        let pgid = fields.next().ok_or_else(malformed)?;
        let (pool_s, pg_s) = pgid.split_once('.').ok_or_else(malformed)?;
        let pool = pool_s.parse::<u32>().map_err(|_| malformed())?;
        let pg = u32::from_str_radix(pg_s, 16).map_err(|_| malformed())?;
        let from = fields.next().ok_or_else(malformed)?.parse::<u32>().map_err(|_| malformed())?;
        let to = fields.next().ok_or_else(malformed)?.parse::<u32>().map_err(|_| malformed())?;
        let bytes = fields.next().ok_or_else(malformed)?.parse::<u64>().map_err(|_| malformed())?;
        if fields.next().is_some() {
            return Err(malformed());
        }

        let slot = working
            .pg_map
            .shards(pool, pg)
            .and_then(|shards| shards.iter().position(|&o| o == from))
            .ok_or(PlanParseError::Unresolvable { line: line_no, pool, pg, osd: from })?
            as u32;
        let mv = Move { pool, pg, slot, from, to, bytes };
        crate::sim::apply_move(&mut working, &mv)
            .map_err(|source| PlanParseError::InvalidMove { line: line_no, source })?;
        moves.push(mv);
    }
    Ok(Plan { fingerprint: actual, moves })
}
