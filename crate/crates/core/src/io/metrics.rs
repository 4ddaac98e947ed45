//! Metrics CSV: one row per trajectory record, with stable column order
//! (device classes, then pools, ascending). Floats are written in Rust's
//! shortest round-trip form, so re-parsing recovers full precision.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use crate::cluster::{DeviceClass, PoolId};
use crate::sim::TrajectoryRecord;

#[derive(Debug, Error)]
pub enum MetricsParseError {
    #[error("empty document")]
    Empty,
    #[error("malformed header column '{0}'")]
    Header(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: malformed value '{value}'")]
    Value { line: usize, value: String },
}

/// Render records as CSV with header
/// `move_index,cumulative_moved_bytes,calc_time_ns,variance_<class>...,free_<pool>...`.
pub fn write_metrics_csv(records: &[TrajectoryRecord]) -> String {
    assert!(!records.is_empty(), "records must contain at least the baseline");
    let classes: Vec<DeviceClass> = records[0].class_variance.keys().copied().collect();
    let pools: Vec<PoolId> = records[0].pool_free_bytes.keys().copied().collect();

    let mut out = String::from("move_index,cumulative_moved_bytes,calc_time_ns");
    for class in &classes {
        out.push_str(&format!(",variance_{class}"));
    }
    for pool in &pools {
        out.push_str(&format!(",free_{pool}"));
    }
    out.push('\n');

    for record in records {
        out.push_str(&format!(
            "{},{},{}",
            record.move_index, record.cumulative_moved_bytes, record.calc_time_ns
        ));
        for class in &classes {
            out.push_str(&format!(",{}", record.class_variance[class]));
        }
        for pool in &pools {
            out.push_str(&format!(",{}", record.pool_free_bytes[pool]));
        }
        out.push('\n');
    }
    out
}

/// Parse a metrics CSV back into records, inverting [`write_metrics_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<TrajectoryRecord>, MetricsParseError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(MetricsParseError::Empty)?;
    let mut columns = header.split(',');
    for expected in ["move_index", "cumulative_moved_bytes", "calc_time_ns"] {
        let got = columns.next().ok_or(MetricsParseError::Empty)?;
        if got != expected {
            return Err(MetricsParseError::Header(got.to_string()));
        }
    }
    let mut classes = Vec::new();
    let mut pools = Vec::new();
    for column in columns {
        if let Some(name) = column.strip_prefix("variance_") {
            let class = DeviceClass::from_str(name)
                .map_err(|_| MetricsParseError::Header(column.to_string()))?;
            classes.push(class);
        } else if let Some(id) = column.strip_prefix("free_") {
            let pool =
                id.parse::<PoolId>().map_err(|_| MetricsParseError::Header(column.to_string()))?;
            pools.push(pool);
        } else {
            return Err(MetricsParseError::Header(column.to_string()));
        }
    }

    let expected_fields = 3 + classes.len() + pools.len();
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_fields {
            return Err(MetricsParseError::FieldCount {
                line: line_no,
                expected: expected_fields,
                found: fields.len(),
            });
        }
        let value_err =
            |value: &str| MetricsParseError::Value { line: line_no, value: value.to_string() };
        let move_index = fields[0].parse::<usize>().map_err(|_| value_err(fields[0]))?;
        let cumulative = fields[1].parse::<u64>().map_err(|_| value_err(fields[1]))?;
        let calc_time_ns = fields[2].parse::<u64>().map_err(|_| value_err(fields[2]))?;
        let mut class_variance = BTreeMap::new();
        for (i, &class) in classes.iter().enumerate() {
            let raw = fields[3 + i];
            class_variance.insert(class, raw.parse::<f64>().map_err(|_| value_err(raw))?);
        }
        let mut pool_free_bytes = BTreeMap::new();
        for (i, &pool) in pools.iter().enumerate() {
            let raw = fields[3 + classes.len() + i];
            pool_free_bytes.insert(pool, raw.parse::<u64>().map_err(|_| value_err(raw))?);
        }
        records.push(TrajectoryRecord {
            move_index,
            pool_free_bytes,
            class_variance,
            cumulative_moved_bytes: cumulative,
            calc_time_ns,
        });
    }
    Ok(records)
}
