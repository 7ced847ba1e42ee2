//! ISO-8601 timestamps at one-second resolution, in UTC.
//!
//! Every timestamp the pipeline reads or writes is a whole second; files
//! carry `2024-03-01T07:35:00Z` and the core carries epoch seconds.

use arterial_core::time::Timestamp;
use chrono::{DateTime, NaiveDateTime, Utc};

/// Formats a timestamp as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_ts(t: Timestamp) -> String {
    let dt = DateTime::<Utc>::from_timestamp(t.0, 0).expect("timestamp within chrono's range");
    dt.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses an ISO-8601 timestamp. Accepts any RFC 3339 form (offsets are
/// converted to UTC) as well as the bare `YYYY-MM-DDTHH:MM:SS`, which is
/// taken to be UTC. Sub-second digits are rejected: the pipeline works in
/// whole seconds.
pub fn parse_ts(s: &str) -> Result<Timestamp, String> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        if dt.timestamp_subsec_nanos() != 0 {
            return Err(format!("timestamp {s:?} has sub-second precision"));
        }
        return Ok(Timestamp(dt.timestamp()));
    }
    if let Ok(naive) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(Timestamp(naive.and_utc().timestamp()));
    }
    Err(format!("invalid ISO-8601 timestamp {s:?}"))
}
