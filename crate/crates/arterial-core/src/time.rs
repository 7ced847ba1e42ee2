//! Timestamps at one-second resolution.
//!
//! The whole pipeline runs in a single timezone with no daylight-saving
//! logic, so a timestamp is just a count of seconds from an epoch. Day-of-week
//! arithmetic follows the standard civil calendar (day zero of the epoch,
//! 1970-01-01, is a Thursday); parsing and formatting of calendar dates is
//! the companion crate's job.

use core::fmt;
use core::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Seconds in one minute.
pub const MINUTE: i64 = 60;
/// Seconds in one hour.
pub const HOUR: i64 = 3600;
/// Seconds in one day.
pub const DAY: i64 = 86_400;
/// Seconds in one week.
pub const WEEK: i64 = 7 * DAY;

/// A point in time, stored as whole seconds from the epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    /// Seconds from the epoch.
    #[inline]
    pub fn seconds(self) -> i64 {
        self.0
    }

    /// Day of week with Monday = 0 through Sunday = 6.
    pub fn day_of_week(self) -> u8 {
        let days = self.0.div_euclid(DAY);
        // 1970-01-01 is a Thursday, i.e. weekday index 3.
        ((days + 3).rem_euclid(7)) as u8
    }

    /// Seconds elapsed since local midnight, in `0..86_400`.
    pub fn seconds_of_day(self) -> u32 {
        self.0.rem_euclid(DAY) as u32
    }

    /// Hour of day in `0..24`.
    pub fn hour_of_day(self) -> u32 {
        self.seconds_of_day() / HOUR as u32
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;

    fn add(self, rhs: i64) -> Timestamp {
        Timestamp(self.0 + rhs)
    }
}

impl Sub<i64> for Timestamp {
    type Output = Timestamp;

    fn sub(self, rhs: i64) -> Timestamp {
        Timestamp(self.0 - rhs)
    }
}

impl Sub<Timestamp> for Timestamp {
    type Output = i64;

    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

/// A half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    /// Inclusive start.
    pub start: Timestamp,
    /// Exclusive end.
    pub end: Timestamp,
}

impl TimeWindow {
    /// Builds a window; `start` must not exceed `end`.
    pub fn new(start: Timestamp, end: Timestamp) -> TimeWindow {
        debug_assert!(start <= end, "window start after end");
        TimeWindow { start, end }
    }

    /// Window length in seconds.
    pub fn duration(self) -> i64 {
        self.end - self.start
    }

    /// Whether `t` lies in `[start, end)`.
    pub fn contains(self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }

    /// Length of the overlap with `[s, e)`, in seconds (never negative).
    pub fn overlap(self, s: Timestamp, e: Timestamp) -> i64 {
        let lo = self.start.0.max(s.0);
        let hi = self.end.0.min(e.0);
        (hi - lo).max(0)
    }
}
