//! File formats: the versioned cluster-state document, the plan text format,
//! and the metrics CSV. All three round-trip losslessly.

pub mod metrics;
pub mod plan;
pub mod state;

pub use metrics::{parse_metrics_csv, write_metrics_csv, MetricsParseError};
pub use plan::{parse_plan, write_plan, PlanParseError};
pub use state::{fingerprint, parse_state, serialize_state, ParseError, STATE_FORMAT_VERSION};
