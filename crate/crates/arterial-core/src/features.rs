//! Multi-source feature extraction for arterial segments.
//!
//! An *event* is a (segment, timestamp) pair — either a crash or a matched
//! non-crash control. For each event this module computes one covariate
//! vector per 5-minute slice over the 20 minutes preceding the event: slice
//! `k` covers `[t - 5k, t - 5(k-1))` minutes, so slice 1 is nearest the
//! event.
//!
//! Four independent sources feed the covariates:
//!
//! * **Bluetooth traversals** — each matched detection yields a segment
//!   travel time, converted to a space-mean speed (`length / travel time`).
//!   Raw speeds are cleaned by a rolling interquartile-range filter before
//!   any aggregation.
//! * **Turning-movement volumes** — 15-minute approach counts, apportioned
//!   to 5-minute slices by linear overlap.
//! * **Signal phases** — green intervals per movement, reduced to green
//!   ratios and an upstream/downstream coordination measure.
//! * **Weather** — sparse event-driven records, sampled as the most recent
//!   record at or before the event.
//!
//! Any source that cannot fully cover a slice yields a gap instead of a
//! silently biased value; gap handling (rejecting or replacing events) is
//! the caller's decision.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::time::{TimeWindow, Timestamp, HOUR, MINUTE};

/// Width of one covariate slice, in seconds.
pub const SLICE_SECONDS: i64 = 5 * MINUTE;
/// Number of slices preceding each event.
pub const SLICE_COUNT: usize = 4;
/// Width of a turning-movement volume bin, in seconds.
pub const VOLUME_BIN_SECONDS: i64 = 15 * MINUTE;
/// Age beyond which a weather record is considered stale.
pub const WEATHER_STALE_AFTER: i64 = 2 * HOUR;

/// Covariate names, in the canonical column order used everywhere a feature
/// vector is flattened (datasets, model specifications, reports).
pub const COVARIATE_NAMES: [&str; 11] = [
    "avg_speed",
    "std_speed",
    "up_vol",
    "down_vol",
    "up_vol_lt",
    "down_vol_lt",
    "up_green_ratio",
    "down_green_ratio",
    "signal_coordination",
    "rainy",
    "visibility",
];

/// A turning movement at an intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Movement {
    /// Through traffic along the arterial.
    Through,
    /// Left-turn traffic entering or leaving the arterial.
    Left,
}

impl Movement {
    /// Canonical lowercase name.
    pub fn name(self) -> &'static str {
        match self {
            Movement::Through => "through",
            Movement::Left => "left",
        }
    }

    /// Parses the canonical name.
    pub fn parse(s: &str) -> Option<Movement> {
        match s {
            "through" => Some(Movement::Through),
            "left" => Some(Movement::Left),
            _ => None,
        }
    }
}

/// A directed arterial segment between two signalized intersections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Unique segment identifier.
    pub id: String,
    /// Segment length in miles.
    pub length_mi: f64,
    /// Posted speed limit in miles per hour.
    pub speed_limit_mph: f64,
    /// Identifier of the intersection traffic enters from.
    pub upstream: String,
    /// Identifier of the intersection traffic exits to.
    pub downstream: String,
}

/// One matched Bluetooth traversal of a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalSample {
    /// Segment traversed.
    pub segment: String,
    /// Time the vehicle left the segment.
    pub exit_time: Timestamp,
    /// Traversal time in seconds.
    pub travel_time_s: f64,
}

/// A green interval for one movement at one intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseInterval {
    /// Intersection the phase belongs to.
    pub intersection: String,
    /// Movement served by the green.
    pub movement: Movement,
    /// Green onset.
    pub start: Timestamp,
    /// Green end (exclusive).
    pub end: Timestamp,
}

/// A 15-minute turning-movement count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecord {
    /// Intersection the count was taken at.
    pub intersection: String,
    /// Movement counted.
    pub movement: Movement,
    /// Start of the 15-minute bin.
    pub bin_start: Timestamp,
    /// Vehicles counted in the bin.
    pub count: u32,
}

/// One weather observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    /// Observation time.
    pub timestamp: Timestamp,
    /// Whether precipitation was occurring.
    pub rainy: bool,
    /// Visibility in miles.
    pub visibility_mi: f64,
}

/// The raw detector logs a study corridor produces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawLogs {
    /// Segment inventory.
    pub segments: Vec<Segment>,
    /// Bluetooth traversal samples.
    pub bluetooth: Vec<TraversalSample>,
    /// Signal phase intervals.
    pub phases: Vec<PhaseInterval>,
    /// Turning-movement volume bins.
    pub volumes: Vec<VolumeRecord>,
    /// Weather observations.
    pub weather: Vec<WeatherRecord>,
}

/// Covariates describing one 5-minute slice before an event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Mean space-mean speed of retained traversals, mph.
    pub avg_speed: f64,
    /// Sample standard deviation of those speeds (zero for one sample).
    pub std_speed: f64,
    /// Vehicles entering from the upstream intersection (through + left).
    pub up_vol: f64,
    /// Vehicles approaching the downstream intersection (through + left).
    pub down_vol: f64,
    /// Left-turn vehicles entering from the upstream cross street.
    pub up_vol_lt: f64,
    /// Left-turn vehicles approaching the downstream intersection.
    pub down_vol_lt: f64,
    /// Percent of the slice the upstream through movement had green.
    pub up_green_ratio: f64,
    /// Percent of the slice the downstream through movement had green.
    pub down_green_ratio: f64,
    /// Fraction of upstream green usable downstream at the ideal offset.
    pub signal_coordination: f64,
    /// Precipitation indicator (0 or 1).
    pub rainy: f64,
    /// Visibility in miles.
    pub visibility: f64,
    /// Number of retained Bluetooth samples in the slice.
    pub sample_count: u32,
}

impl FeatureVector {
    /// The covariate value for a canonical name, or `None` for an unknown
    /// name. `sample_count` is not a covariate.
    pub fn get(&self, name: &str) -> Option<f64> {
        let v = match name {
            "avg_speed" => self.avg_speed,
            "std_speed" => self.std_speed,
            "up_vol" => self.up_vol,
            "down_vol" => self.down_vol,
            "up_vol_lt" => self.up_vol_lt,
            "down_vol_lt" => self.down_vol_lt,
            "up_green_ratio" => self.up_green_ratio,
            "down_green_ratio" => self.down_green_ratio,
            "signal_coordination" => self.signal_coordination,
            "rainy" => self.rainy,
            "visibility" => self.visibility,
            _ => return None,
        };
        Some(v)
    }

    /// All covariates in canonical order.
    pub fn values(&self) -> [f64; 11] {
        [
            self.avg_speed,
            self.std_speed,
            self.up_vol,
            self.down_vol,
            self.up_vol_lt,
            self.down_vol_lt,
            self.up_green_ratio,
            self.down_green_ratio,
            self.signal_coordination,
            self.rainy,
            self.visibility,
        ]
    }
}

/// The four slice vectors for one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFeatures {
    /// Slice vectors, index 0 = slice 1 (nearest the event).
    pub slices: [FeatureVector; 4],
    /// True when the weather record used was older than two hours.
    pub weather_stale: bool,
}

impl EventFeatures {
    /// Smallest Bluetooth sample count across the four slices.
    pub fn min_sample_count(&self) -> u32 {
        self.slices.iter().map(|s| s.sample_count).min().unwrap_or(0)
    }
}

/// Why a slice could not be resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceGap {
    /// No retained Bluetooth sample fell in the slice.
    NoSpeedSamples,
    /// Volume bins did not fully cover the slice for a required movement.
    MissingVolume,
    /// Phase logs did not cover the slice at one of the intersections.
    MissingPhase,
    /// No weather record at or before the event time.
    MissingWeather,
}

/// Feature extraction outcome for one event.
#[derive(Debug, Clone, PartialEq)]
pub enum EventOutcome {
    /// All four slices resolved.
    Features(EventFeatures),
    /// Extraction stopped at a gap. `slice` is 1-based; 0 marks the
    /// event-level weather lookup.
    Gap {
        /// Slice the gap occurred in.
        slice: u8,
        /// Kind of gap.
        gap: SliceGap,
    },
}

/// Hard errors in the input logs.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureError {
    /// A segment with non-positive or non-finite geometry.
    InvalidSegment(String),
    /// Two volume records for the same (intersection, movement, bin).
    DuplicateVolumeBin(String, Movement, Timestamp),
    /// A travel-time sample with a non-positive or non-finite value.
    RejectedSample(String, Timestamp),
    /// A phase interval whose end precedes its start.
    InvalidPhaseInterval(String, Timestamp),
    /// An event references a segment missing from the inventory.
    UnknownSegment(String),
    /// A weather record with non-finite visibility.
    InvalidWeather(Timestamp),
}

impl fmt::Display for FeatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureError::InvalidSegment(id) => {
                write!(f, "segment {id} has non-positive length or speed limit")
            }
            FeatureError::DuplicateVolumeBin(i, m, t) => {
                write!(f, "duplicate volume bin at {i}/{} starting {t}", m.name())
            }
            FeatureError::RejectedSample(s, t) => {
                write!(f, "non-positive travel time on {s} at {t}")
            }
            FeatureError::InvalidPhaseInterval(i, t) => {
                write!(f, "phase interval at {i} starting {t} ends before it starts")
            }
            FeatureError::UnknownSegment(id) => write!(f, "unknown segment {id}"),
            FeatureError::InvalidWeather(t) => write!(f, "non-finite visibility at {t}"),
        }
    }
}

impl core::error::Error for FeatureError {}

/// Space-mean speed (mph) from a segment length (miles) and a traversal
/// time (seconds). Rejects non-positive and non-finite travel times.
pub fn space_mean_speed(length_mi: f64, travel_time_s: f64) -> Option<f64> {
    if !(travel_time_s > 0.0) || !travel_time_s.is_finite() {
        return None;
    }
    Some(length_mi / (travel_time_s / 3600.0))
}

/// Ideal signal offset between the two ends of a segment: the free-flow
/// traversal time at the speed limit, in seconds.
pub fn ideal_offset_s(length_mi: f64, speed_limit_mph: f64) -> f64 {
    length_mi / speed_limit_mph * 3600.0
}

/// Configuration of the rolling speed filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedFilterConfig {
    /// Number of preceding retained samples forming the reference window.
    pub window: usize,
    /// Half-width of the acceptance band, as a multiple of the window IQR.
    pub band_iqr_multiplier: f64,
}

impl Default for SpeedFilterConfig {
    fn default() -> Self {
        SpeedFilterConfig { window: 15, band_iqr_multiplier: 0.75 }
    }
}

/// Marks which chronologically ordered speed samples survive the rolling
/// IQR filter.
///
/// The first `window` samples are retained unconditionally (cold start).
/// Afterwards a sample is retained iff its absolute deviation from the
/// median of the `window` most recent *retained* samples is at most
/// `band_iqr_multiplier` times their interquartile range. Quartiles use
/// linear interpolation between order statistics.
///
/// Filtering an already filtered stream retains everything: each survivor
/// was accepted against exactly the retained samples that precede it.
pub fn retained_mask(speeds: &[f64], cfg: &SpeedFilterConfig) -> Vec<bool> {
    let mut mask = Vec::with_capacity(speeds.len());
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(cfg.window + 1);
    let mut sorted: Vec<f64> = Vec::with_capacity(cfg.window);
    for &s in speeds {
        let keep = if recent.len() < cfg.window {
            true
        } else {
            sorted.clear();
            sorted.extend(recent.iter().copied());
            sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite speeds"));
            let (median, iqr) = math::median_iqr_sorted(&sorted);
            math::abs(s - median) <= cfg.band_iqr_multiplier * iqr
        };
        if keep {
            recent.push_back(s);
            if recent.len() > cfg.window {
                recent.pop_front();
            }
        }
        mask.push(keep);
    }
    mask
}

/// Retained Bluetooth speeds for one segment, sorted by exit time.
#[derive(Debug, Clone, Default)]
struct SegmentSpeeds {
    times: Vec<i64>,
    speeds: Vec<f64>,
}

impl SegmentSpeeds {
    /// Mean, sample standard deviation, and count over a window.
    fn stats_in(&self, w: TimeWindow) -> (f64, f64, u32) {
        let lo = self.times.partition_point(|&t| t < w.start.seconds());
        let hi = self.times.partition_point(|&t| t < w.end.seconds());
        if lo == hi {
            return (f64::NAN, f64::NAN, 0);
        }
        let (mean, sd) = math::mean_sd(&self.speeds[lo..hi]);
        (mean, sd, (hi - lo) as u32)
    }
}

/// Sorted, disjoint green intervals for one movement.
#[derive(Debug, Clone, Default)]
struct GreenIntervals {
    spans: Vec<(i64, i64)>,
}

impl GreenIntervals {
    fn from_unsorted(mut spans: Vec<(i64, i64)>) -> GreenIntervals {
        spans.sort_unstable();
        let mut merged: Vec<(i64, i64)> = Vec::with_capacity(spans.len());
        for (s, e) in spans {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        GreenIntervals { spans: merged }
    }

    /// Total green seconds inside `w`.
    fn seconds_in(&self, w: TimeWindow) -> i64 {
        let start = self.spans.partition_point(|&(_, e)| e <= w.start.seconds());
        let mut total = 0;
        for &(s, e) in &self.spans[start..] {
            if s >= w.end.seconds() {
                break;
            }
            total += w.overlap(Timestamp(s), Timestamp(e));
        }
        total
    }

    /// Intervals overlapping `[lo, hi)` after a forward shift of `offset`
    /// seconds (i.e. raw intervals overlapping `[lo - offset, hi - offset)`).
    fn overlapping_shifted(&self, lo: f64, hi: f64, offset: f64) -> &[(i64, i64)] {
        let from = self.spans.partition_point(|&(_, e)| (e as f64) + offset <= lo);
        let mut to = from;
        while to < self.spans.len() && (self.spans[to].0 as f64) + offset < hi {
            to += 1;
        }
        &self.spans[from..to]
    }
}

/// Phase data for one intersection.
#[derive(Debug, Clone, Default)]
struct IntersectionPhases {
    through: GreenIntervals,
    #[cfg_attr(not(test), allow(dead_code))]
    left: GreenIntervals,
    /// Overall extent of logged phase data, any movement.
    extent: Option<(i64, i64)>,
}

impl IntersectionPhases {
    fn covers(&self, w: TimeWindow) -> bool {
        match self.extent {
            Some((s, e)) => s <= w.start.seconds() && w.end.seconds() <= e,
            None => false,
        }
    }
}

/// Sorted 15-minute volume bins for one (intersection, movement).
#[derive(Debug, Clone, Default)]
struct VolumeSeries {
    starts: Vec<i64>,
    counts: Vec<u32>,
}

impl VolumeSeries {
    /// Apportioned vehicle count over `w`: each overlapping bin contributes
    /// `count * overlap / 15 min`. Returns `None` unless the bins fully
    /// cover the window — a partially covered window would silently
    /// undercount.
    fn sum_in(&self, w: TimeWindow) -> Option<f64> {
        let from = self
            .starts
            .partition_point(|&s| s + VOLUME_BIN_SECONDS <= w.start.seconds());
        let mut covered_to = w.start.seconds();
        let mut total = 0.0;
        for i in from..self.starts.len() {
            let s = self.starts[i];
            if s >= w.end.seconds() {
                break;
            }
            if s > covered_to {
                return None; // gap inside the window
            }
            let e = s + VOLUME_BIN_SECONDS;
            total +=
                f64::from(self.counts[i]) * w.overlap(Timestamp(s), Timestamp(e)) as f64 / 900.0;
            covered_to = covered_to.max(e);
        }
        (covered_to >= w.end.seconds()).then_some(total)
    }
}

/// Indexed, cleaned view of a corridor's logs, ready for per-event feature
/// queries.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    segments: BTreeMap<String, Segment>,
    speeds: BTreeMap<String, SegmentSpeeds>,
    phases: BTreeMap<String, IntersectionPhases>,
    volumes: BTreeMap<(String, Movement), VolumeSeries>,
    weather_times: Vec<i64>,
    weather: Vec<WeatherRecord>,
    /// Bluetooth samples dropped for non-positive travel times.
    pub rejected_samples: usize,
    /// Bluetooth samples dropped by the rolling IQR filter.
    pub filtered_samples: usize,
}

impl FeatureContext {
    /// Indexes raw logs: validates the inventory, converts travel times to
    /// speeds, applies the rolling filter per segment, merges phase
    /// intervals, and sorts volume and weather series.
    pub fn build(logs: &RawLogs, filter: &SpeedFilterConfig) -> Result<FeatureContext, FeatureError> {
        let mut segments = BTreeMap::new();
        for seg in &logs.segments {
            let ok = seg.length_mi > 0.0
                && seg.length_mi.is_finite()
                && seg.speed_limit_mph > 0.0
                && seg.speed_limit_mph.is_finite();
            if !ok {
                return Err(FeatureError::InvalidSegment(seg.id.clone()));
            }
            segments.insert(seg.id.clone(), seg.clone());
        }

        // Per-segment chronological speed streams.
        let mut rejected = 0usize;
        let mut by_segment: BTreeMap<String, Vec<(i64, f64)>> = BTreeMap::new();
        for s in &logs.bluetooth {
            let seg = segments
                .get(&s.segment)
                .ok_or_else(|| FeatureError::UnknownSegment(s.segment.clone()))?;
            match space_mean_speed(seg.length_mi, s.travel_time_s) {
                Some(speed) => by_segment
                    .entry(s.segment.clone())
                    .or_default()
                    .push((s.exit_time.seconds(), speed)),
                None => rejected += 1,
            }
        }
        let mut speeds = BTreeMap::new();
        let mut filtered = 0usize;
        for (seg, mut stream) in by_segment {
            stream.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite speeds"));
            let raw: Vec<f64> = stream.iter().map(|&(_, v)| v).collect();
            let mask = retained_mask(&raw, filter);
            let mut kept = SegmentSpeeds::default();
            for (i, &(t, v)) in stream.iter().enumerate() {
                if mask[i] {
                    kept.times.push(t);
                    kept.speeds.push(v);
                } else {
                    filtered += 1;
                }
            }
            speeds.insert(seg, kept);
        }

        // Phase intervals, merged per (intersection, movement).
        let mut phase_spans: BTreeMap<String, (Vec<(i64, i64)>, Vec<(i64, i64)>)> = BTreeMap::new();
        for p in &logs.phases {
            if p.end < p.start {
                return Err(FeatureError::InvalidPhaseInterval(p.intersection.clone(), p.start));
            }
            let entry = phase_spans.entry(p.intersection.clone()).or_default();
            let span = (p.start.seconds(), p.end.seconds());
            match p.movement {
                Movement::Through => entry.0.push(span),
                Movement::Left => entry.1.push(span),
            }
        }
        let mut phases = BTreeMap::new();
        for (intersection, (through, left)) in phase_spans {
            let extent = through
                .iter()
                .chain(left.iter())
                .fold(None, |acc: Option<(i64, i64)>, &(s, e)| match acc {
                    Some((lo, hi)) => Some((lo.min(s), hi.max(e))),
                    None => Some((s, e)),
                });
            phases.insert(
                intersection,
                IntersectionPhases {
                    through: GreenIntervals::from_unsorted(through),
                    left: GreenIntervals::from_unsorted(left),
                    extent,
                },
            );
        }

        // Volume bins, sorted per (intersection, movement).
        let mut volume_map: BTreeMap<(String, Movement), Vec<(i64, u32)>> = BTreeMap::new();
        for v in &logs.volumes {
            volume_map
                .entry((v.intersection.clone(), v.movement))
                .or_default()
                .push((v.bin_start.seconds(), v.count));
        }
        let mut volumes = BTreeMap::new();
        for ((intersection, movement), mut bins) in volume_map {
            bins.sort_unstable();
            for pair in bins.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(FeatureError::DuplicateVolumeBin(
                        intersection,
                        movement,
                        Timestamp(pair[0].0),
                    ));
                }
            }
            let series = VolumeSeries {
                starts: bins.iter().map(|&(s, _)| s).collect(),
                counts: bins.iter().map(|&(_, c)| c).collect(),
            };
            volumes.insert((intersection, movement), series);
        }

        // Weather, sorted by time; equal timestamps keep input order so the
        // later record wins.
        let mut weather = logs.weather.clone();
        for w in &weather {
            if !w.visibility_mi.is_finite() {
                return Err(FeatureError::InvalidWeather(w.timestamp));
            }
        }
        weather.sort_by_key(|w| w.timestamp);
        let weather_times = weather.iter().map(|w| w.timestamp.seconds()).collect();

        Ok(FeatureContext {
            segments,
            speeds,
            phases,
            volumes,
            weather_times,
            weather,
            rejected_samples: rejected,
            filtered_samples: filtered,
        })
    }

    /// The segment inventory.
    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.values()
    }

    /// Looks up a segment.
    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.get(id)
    }

    /// The most recent weather record at or before `t`, with its age.
    pub fn weather_at(&self, t: Timestamp) -> Option<(&WeatherRecord, i64)> {
        let idx = self.weather_times.partition_point(|&w| w <= t.seconds());
        idx.checked_sub(1).map(|i| (&self.weather[i], t.seconds() - self.weather_times[i]))
    }

    /// Apportioned volume over `w` for a set of movements at one
    /// intersection. Every requested movement must fully cover the window.
    fn volume(&self, intersection: &str, movements: &[Movement], w: TimeWindow) -> Option<f64> {
        let mut total = 0.0;
        for &m in movements {
            let series = self.volumes.get(&(String::from(intersection), m))?;
            total += series.sum_in(w)?;
        }
        Some(total)
    }

    /// Percent of `w` during which the through movement at `intersection`
    /// had green. `None` when the intersection's phase log does not cover
    /// the window.
    pub fn green_ratio(&self, intersection: &str, w: TimeWindow) -> Option<f64> {
        let phases = self.phases.get(intersection)?;
        if !phases.covers(w) {
            return None;
        }
        Some(100.0 * phases.through.seconds_in(w) as f64 / w.duration() as f64)
    }

    /// Fraction of upstream through-green usable at the downstream signal
    /// when platoons travel at the ideal offset.
    ///
    /// Upstream green intervals are shifted forward by `offset_s`; the
    /// bandwidth is the duration of (shifted upstream green ∩ downstream
    /// green ∩ window), divided by the unshifted upstream green in the
    /// window and clamped to `[0, 1]`. Zero upstream green yields 0.
    pub fn signal_coordination(
        &self,
        upstream: &str,
        downstream: &str,
        offset_s: f64,
        w: TimeWindow,
    ) -> Option<f64> {
        let up = self.phases.get(upstream)?;
        let down = self.phases.get(downstream)?;
        if !up.covers(w) || !down.covers(w) {
            return None;
        }
        let denom = up.through.seconds_in(w) as f64;
        if denom == 0.0 {
            return Some(0.0);
        }
        let (ws, we) = (w.start.seconds() as f64, w.end.seconds() as f64);
        let mut bandwidth = 0.0;
        for &(us, ue) in up.through.overlapping_shifted(ws, we, offset_s) {
            for &(ds, de) in &down.through.spans {
                let lo = (us as f64 + offset_s).max(ds as f64).max(ws);
                let hi = (ue as f64 + offset_s).min(de as f64).min(we);
                if hi > lo {
                    bandwidth += hi - lo;
                }
            }
        }
        Some((bandwidth / denom).clamp(0.0, 1.0))
    }

    /// Extracts the four slice vectors for an event at `t` on `segment_id`.
    ///
    /// Slices are checked nearest-first; within a slice the Bluetooth stream
    /// is checked before volumes and phases, so an empty slice reports
    /// [`SliceGap::NoSpeedSamples`] even when other sources are also absent.
    /// The weather lookup happens once at the event time and is shared by
    /// all four slices.
    pub fn event_features(
        &self,
        segment_id: &str,
        t: Timestamp,
    ) -> Result<EventOutcome, FeatureError> {
        let seg = self
            .segments
            .get(segment_id)
            .ok_or_else(|| FeatureError::UnknownSegment(String::from(segment_id)))?;
        let offset = ideal_offset_s(seg.length_mi, seg.speed_limit_mph);
        let empty = SegmentSpeeds::default();
        let speeds = self.speeds.get(segment_id).unwrap_or(&empty);

        let mut slices: [Option<FeatureVector>; SLICE_COUNT] = [None; SLICE_COUNT];
        for k in 0..SLICE_COUNT {
            let gap = |g| EventOutcome::Gap { slice: (k + 1) as u8, gap: g };
            let w = TimeWindow::new(
                t - (k as i64 + 1) * SLICE_SECONDS,
                t - k as i64 * SLICE_SECONDS,
            );
            let (avg_speed, std_speed, sample_count) = speeds.stats_in(w);
            if sample_count == 0 {
                return Ok(gap(SliceGap::NoSpeedSamples));
            }
            let both = [Movement::Through, Movement::Left];
            let left = [Movement::Left];
            let Some(up_vol) = self.volume(&seg.upstream, &both, w) else {
                return Ok(gap(SliceGap::MissingVolume));
            };
            let Some(up_vol_lt) = self.volume(&seg.upstream, &left, w) else {
                return Ok(gap(SliceGap::MissingVolume));
            };
            let Some(down_vol) = self.volume(&seg.downstream, &both, w) else {
                return Ok(gap(SliceGap::MissingVolume));
            };
            let Some(down_vol_lt) = self.volume(&seg.downstream, &left, w) else {
                return Ok(gap(SliceGap::MissingVolume));
            };
            let Some(up_green_ratio) = self.green_ratio(&seg.upstream, w) else {
                return Ok(gap(SliceGap::MissingPhase));
            };
            let Some(down_green_ratio) = self.green_ratio(&seg.downstream, w) else {
                return Ok(gap(SliceGap::MissingPhase));
            };
            let Some(coordination) =
                self.signal_coordination(&seg.upstream, &seg.downstream, offset, w)
            else {
                return Ok(gap(SliceGap::MissingPhase));
            };
            slices[k] = Some(FeatureVector {
                avg_speed,
                std_speed,
                up_vol,
                down_vol,
                up_vol_lt,
                down_vol_lt,
                up_green_ratio,
                down_green_ratio,
                signal_coordination: coordination,
                rainy: 0.0,
                visibility: 0.0,
                sample_count,
            });
        }

        let Some((weather, age)) = self.weather_at(t) else {
            return Ok(EventOutcome::Gap { slice: 0, gap: SliceGap::MissingWeather });
        };
        let mut out = slices.map(|s| s.expect("all slices resolved"));
        for s in &mut out {
            s.rainy = if weather.rainy { 1.0 } else { 0.0 };
            s.visibility = weather.visibility_mi;
        }
        Ok(EventOutcome::Features(EventFeatures {
            slices: out,
            weather_stale: age > WEATHER_STALE_AFTER,
        }))
    }
}
