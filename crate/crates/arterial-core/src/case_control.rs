//! Matched case-control dataset construction.
//!
//! Every crash becomes the case of one stratum. Its controls are non-crash
//! moments on the *same segment, same clock time, same day of week* in
//! other weeks of the study period — the matching absorbs segment geometry
//! and daily/weekly traffic rhythms, so the model sees only what differed
//! in the traffic state itself. Candidate moments within three hours of any
//! crash on the segment are excluded (they are not clean non-crash
//! exposure), and events whose Bluetooth coverage is too thin to trust
//! (fewer than 2 retained samples in any slice) or whose source data has
//! gaps are dropped: bad controls are replaced from the remaining
//! candidates, and the stratum itself is rejected when candidates run out
//! or the case is unusable. Rejections are tallied by reason so dataset
//! attrition is auditable.
//!
//! The train/validation split assigns whole strata — a matched set is
//! never divided.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::features::{EventOutcome, FeatureContext, FeatureError, FeatureVector, SliceGap};
use crate::likelihoods::{Family, ModelSpec, PooledDesign, StratifiedDesign};
use crate::math;
use crate::mcmc::FitData;
use crate::rng::{fnv1a, mix, stream};
use crate::time::{TimeWindow, Timestamp, HOUR, MINUTE, WEEK};

/// Minimum retained Bluetooth samples per slice for an event to be usable.
pub const MIN_SAMPLES_PER_SLICE: u32 = 2;

/// Default exclusion half-window around crashes, in seconds (3 hours).
pub const DEFAULT_EXCLUSION_S: i64 = 3 * HOUR;

/// A crash occurrence: the unit that seeds a stratum.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrashRecord {
    /// Segment the crash occurred on.
    pub segment: String,
    /// Crash time.
    pub timestamp: Timestamp,
}

/// How candidate control moments match the crash's time of day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchGranularity {
    /// Same clock time exactly, shifted by whole weeks.
    #[default]
    Exact,
    /// Any 5-minute grid point within the same clock hour, any week.
    Hour,
}

/// Matching parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    /// Controls per case.
    pub m: usize,
    /// Half-width of the crash exclusion window, seconds.
    pub exclusion_s: i64,
    /// Time-of-day matching granularity.
    pub granularity: MatchGranularity,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            m: 4,
            exclusion_s: DEFAULT_EXCLUSION_S,
            granularity: MatchGranularity::Exact,
        }
    }
}

/// The key every member of a stratum shares.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchKey {
    /// Segment identifier.
    pub segment: String,
    /// Seconds since midnight (hour-start seconds under hour granularity).
    pub time_of_day: i64,
    /// Day of week, Monday = 0.
    pub day_of_week: u8,
}

/// Computes the matching key of a moment under the given granularity.
pub fn match_key(segment: &str, t: Timestamp, granularity: MatchGranularity) -> MatchKey {
    let sod = i64::from(t.seconds_of_day());
    let time_of_day = match granularity {
        MatchGranularity::Exact => sod,
        MatchGranularity::Hour => (sod / HOUR) * HOUR,
    };
    MatchKey { segment: String::from(segment), time_of_day, day_of_week: t.day_of_week() }
}

/// One event (crash or control) with its extracted covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Index of the stratum this event belongs to.
    pub stratum_id: usize,
    /// Whether this is the crash row (`y = 1`).
    pub is_crash: bool,
    /// Segment identifier.
    pub segment_id: String,
    /// Event time.
    pub timestamp: Timestamp,
    /// Covariates for the four 5-minute slices preceding the event,
    /// nearest first.
    pub slices: [FeatureVector; 4],
    /// Whether the weather reading attached to this event was stale.
    pub weather_stale: bool,
}

/// One matched set: a case and its `m` controls, all sharing the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    /// Stratum index within the dataset.
    pub id: usize,
    /// The crash event.
    pub case: Event,
    /// The matched non-crash events.
    pub controls: Vec<Event>,
    /// The shared matching key.
    pub matching_key: MatchKey,
}

impl Stratum {
    /// Case followed by controls.
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        core::iter::once(&self.case).chain(self.controls.iter())
    }
}

/// Train/validation assignment of a stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Used for fitting.
    Train,
    /// Held out for scoring.
    Validation,
}

/// The matched dataset: strata plus (once assigned) per-stratum split
/// labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Controls per case.
    pub m: usize,
    /// All assembled strata.
    pub strata: Vec<Stratum>,
    /// Per-stratum split labels, parallel to `strata`; empty until
    /// [`split_dataset`] runs.
    pub split: Vec<Split>,
}

/// Why a stratum could not be assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Fewer than `m` usable candidate controls.
    TooFewCandidates,
    /// The case had a slice with fewer than 2 retained Bluetooth samples.
    LowBluetoothSampling,
    /// The case had a slice missing volume, phase, or weather data.
    MissingSource,
}

/// Attrition accounting: how many crashes survived into strata, and why
/// the rest were rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Attrition {
    /// Crashes considered.
    pub crashes: usize,
    /// Strata successfully assembled.
    pub built: usize,
    /// Rejected: not enough usable candidates.
    pub too_few_candidates: usize,
    /// Rejected: case under-sampled by Bluetooth.
    pub low_bluetooth_sampling: usize,
    /// Rejected: case missing a source stream.
    pub missing_source: usize,
    /// Events (cases or controls) carrying a stale weather reading.
    pub stale_weather_events: usize,
}

impl Attrition {
    /// Whether every crash is accounted for exactly once.
    pub fn balances(&self) -> bool {
        self.built
            + self.too_few_candidates
            + self.low_bluetooth_sampling
            + self.missing_source
            == self.crashes
    }

    fn count(&mut self, reason: RejectReason) {
        match reason {
            RejectReason::TooFewCandidates => self.too_few_candidates += 1,
            RejectReason::LowBluetoothSampling => self.low_bluetooth_sampling += 1,
            RejectReason::MissingSource => self.missing_source += 1,
        }
    }
}

/// Dataset-level failures.
#[derive(Debug, Clone, PartialEq)]
pub enum CaseControlError {
    /// No strata to work with.
    EmptyDataset,
    /// Split fraction outside (0, 1).
    BadFraction,
    /// A model covariate name is not an extracted feature.
    UnknownCovariate(String),
    /// A split-filtered view was requested before the split was assigned.
    NotSplit,
    /// Feature extraction failed structurally (bad logs).
    Feature(FeatureError),
}

impl fmt::Display for CaseControlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseControlError::EmptyDataset => write!(f, "dataset has no strata"),
            CaseControlError::BadFraction => write!(f, "split fraction must be in (0, 1)"),
            CaseControlError::UnknownCovariate(n) => write!(f, "unknown covariate {n}"),
            CaseControlError::NotSplit => write!(f, "dataset has no split labels yet"),
            CaseControlError::Feature(e) => write!(f, "feature extraction failed: {e}"),
        }
    }
}

impl core::error::Error for CaseControlError {}

impl From<FeatureError> for CaseControlError {
    fn from(e: FeatureError) -> Self {
        CaseControlError::Feature(e)
    }
}

/// All candidate control moments for a crash: same segment, same matching
/// time of day and day of week, anywhere in the study period, excluding
/// moments within `exclusion_s` (inclusive) of any crash on the segment.
/// The crash's own moment is excluded by that same rule.
pub fn candidate_controls(
    segment: &str,
    t: Timestamp,
    period: TimeWindow,
    crashes: &[CrashRecord],
    cfg: &MatchConfig,
) -> Vec<Timestamp> {
    let segment_crashes: Vec<Timestamp> = crashes
        .iter()
        .filter(|c| c.segment == segment)
        .map(|c| c.timestamp)
        .collect();
    let excluded = |cand: Timestamp| {
        segment_crashes.iter().any(|&c| (c.0 - cand.0).abs() <= cfg.exclusion_s)
    };

    // Walk week-aligned repetitions of the matched moment(s) across the
    // whole study period.
    let grid: Vec<Timestamp> = match cfg.granularity {
        MatchGranularity::Exact => alloc::vec![t],
        MatchGranularity::Hour => {
            let hour_start = t.0 - i64::from(t.seconds_of_day()) % HOUR;
            (0..12).map(|j| Timestamp(hour_start + j * 5 * MINUTE)).collect()
        }
    };
    let mut out = Vec::new();
    for &g in &grid {
        // First aligned moment at or after the period start.
        let k0 = (period.start.0 - g.0).div_euclid(WEEK);
        let mut cand = Timestamp(g.0 + k0 * WEEK);
        if cand.0 < period.start.0 {
            cand.0 += WEEK;
        }
        while cand.0 < period.end.0 {
            if !excluded(cand) {
                out.push(cand);
            }
            cand.0 += WEEK;
        }
    }
    out.sort_unstable();
    out
}

enum EventCheck {
    Ok(Event),
    Thin,
    Missing,
    /// The event window extends outside any loaded data at all; treated as
    /// a missing source.
    Unusable,
}

fn extract_event(
    ctx: &FeatureContext,
    segment: &str,
    t: Timestamp,
    is_crash: bool,
) -> Result<EventCheck, CaseControlError> {
    match ctx.event_features(segment, t) {
        Ok(EventOutcome::Features(ef)) => {
            if ef.min_sample_count() < MIN_SAMPLES_PER_SLICE {
                return Ok(EventCheck::Thin);
            }
            Ok(EventCheck::Ok(Event {
                stratum_id: 0,
                is_crash,
                segment_id: String::from(segment),
                timestamp: t,
                slices: ef.slices,
                weather_stale: ef.weather_stale,
            }))
        }
        Ok(EventOutcome::Gap { gap: SliceGap::NoSpeedSamples, .. }) => Ok(EventCheck::Thin),
        Ok(EventOutcome::Gap { .. }) => Ok(EventCheck::Missing),
        Err(FeatureError::UnknownSegment(_)) => Ok(EventCheck::Unusable),
        Err(e) => Err(e.into()),
    }
}

/// Assembles one stratum: extracts the case, shuffles the candidates with
/// the provided stream, and scans them until `m` usable controls are found
/// (thin or gappy candidates are skipped — replaced from the remainder).
pub fn assemble_stratum(
    ctx: &FeatureContext,
    crash: &CrashRecord,
    candidates: &[Timestamp],
    cfg: &MatchConfig,
    rng: &mut impl rand::Rng,
) -> Result<(Event, Vec<Event>), RejectOrError> {
    let case = match extract_event(ctx, &crash.segment, crash.timestamp, true)
        .map_err(RejectOrError::Error)?
    {
        EventCheck::Ok(e) => e,
        EventCheck::Thin => {
            return Err(RejectOrError::Reject(RejectReason::LowBluetoothSampling))
        }
        EventCheck::Missing | EventCheck::Unusable => {
            return Err(RejectOrError::Reject(RejectReason::MissingSource))
        }
    };

    let mut pool: Vec<Timestamp> = candidates.to_vec();
    pool.shuffle(rng);
    let mut controls = Vec::with_capacity(cfg.m);
    for &cand in &pool {
        if controls.len() == cfg.m {
            break;
        }
        match extract_event(ctx, &crash.segment, cand, false).map_err(RejectOrError::Error)? {
            EventCheck::Ok(e) => controls.push(e),
            EventCheck::Thin | EventCheck::Missing | EventCheck::Unusable => {}
        }
    }
    if controls.len() < cfg.m {
        return Err(RejectOrError::Reject(RejectReason::TooFewCandidates));
    }
    Ok((case, controls))
}

/// Either a per-stratum rejection (normal attrition) or a structural error.
#[derive(Debug, Clone, PartialEq)]
pub enum RejectOrError {
    /// The stratum was rejected for a tallied reason.
    Reject(RejectReason),
    /// The inputs themselves are unusable.
    Error(CaseControlError),
}

/// Builds the full matched dataset from a crash log. Crashes are processed
/// in sorted order and each stratum draws from its own RNG stream derived
/// from `(seed, segment, timestamp)`, so assembly is order- and
/// parallelism-independent.
pub fn build_dataset(
    ctx: &FeatureContext,
    crashes: &[CrashRecord],
    period: TimeWindow,
    cfg: &MatchConfig,
    seed: u64,
) -> Result<(Dataset, Attrition), CaseControlError> {
    assert!(cfg.m >= 1, "at least one control per case");
    let mut ordered: Vec<&CrashRecord> = crashes.iter().collect();
    ordered.sort_unstable();

    let mut attrition = Attrition { crashes: crashes.len(), ..Attrition::default() };
    let mut strata = Vec::new();
    for crash in ordered {
        let candidates = candidate_controls(&crash.segment, crash.timestamp, period, crashes, cfg);
        let index = mix(&[fnv1a(crash.segment.as_bytes()), crash.timestamp.0 as u64]);
        let mut rng = stream(seed, "stratum", index);
        match assemble_stratum(ctx, crash, &candidates, cfg, &mut rng) {
            Ok((mut case, mut controls)) => {
                let id = strata.len();
                case.stratum_id = id;
                for c in &mut controls {
                    c.stratum_id = id;
                }
                attrition.stale_weather_events += usize::from(case.weather_stale)
                    + controls.iter().filter(|c| c.weather_stale).count();
                let matching_key = match_key(&crash.segment, crash.timestamp, cfg.granularity);
                strata.push(Stratum { id, case, controls, matching_key });
                attrition.built += 1;
            }
            Err(RejectOrError::Reject(reason)) => attrition.count(reason),
            Err(RejectOrError::Error(e)) => return Err(e),
        }
    }
    Ok((Dataset { m: cfg.m, strata, split: Vec::new() }, attrition))
}

/// Assigns whole-stratum train/validation labels: exactly
/// `round(fraction × N)` strata train, chosen uniformly with the seeded
/// stream.
pub fn split_dataset(
    dataset: &mut Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(), CaseControlError> {
    if dataset.strata.is_empty() {
        return Err(CaseControlError::EmptyDataset);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CaseControlError::BadFraction);
    }
    let n = dataset.strata.len();
    let n_train = math::round(fraction * n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream(seed, "split", 0);
    order.shuffle(&mut rng);
    let mut split = alloc::vec![Split::Validation; n];
    for &i in order.iter().take(n_train) {
        split[i] = Split::Train;
    }
    dataset.split = split;
    Ok(())
}

impl Dataset {
    /// Strata selected by split label (`None` = every stratum).
    pub fn select(&self, split: Option<Split>) -> Result<Vec<&Stratum>, CaseControlError> {
        match split {
            None => Ok(self.strata.iter().collect()),
            Some(want) => {
                if self.split.len() != self.strata.len() {
                    return Err(CaseControlError::NotSplit);
                }
                Ok(self
                    .strata
                    .iter()
                    .zip(&self.split)
                    .filter(|(_, &s)| s == want)
                    .map(|(st, _)| st)
                    .collect())
            }
        }
    }

    /// Number of strata carrying a label.
    pub fn count(&self, want: Split) -> usize {
        self.split.iter().filter(|&&s| s == want).count()
    }

    fn covariate_row(
        event: &Event,
        spec: &ModelSpec,
        out: &mut Vec<f64>,
    ) -> Result<(), CaseControlError> {
        let fv = &event.slices[usize::from(spec.slice) - 1];
        for name in &spec.covariates {
            match fv.get(name) {
                Some(v) => out.push(v),
                None => return Err(CaseControlError::UnknownCovariate(name.clone())),
            }
        }
        Ok(())
    }

    /// Builds the matched design for a conditional-family fit: rows are
    /// stratum-major with the case first in each stratum.
    pub fn stratified_design(
        &self,
        spec: &ModelSpec,
        split: Option<Split>,
    ) -> Result<StratifiedDesign, CaseControlError> {
        let strata = self.select(split)?;
        let size = self.m + 1;
        let mut x = Vec::with_capacity(strata.len() * size * spec.covariates.len());
        for stratum in &strata {
            for event in stratum.events() {
                Self::covariate_row(event, spec, &mut x)?;
            }
        }
        Ok(StratifiedDesign::new(
            strata.len(),
            size,
            spec.covariates.len(),
            x,
            alloc::vec![0; strata.len()],
        ))
    }

    /// Builds the pooled design for the unconditional family: one row per
    /// event with an intercept column, labeled by crash status.
    pub fn pooled_design(
        &self,
        spec: &ModelSpec,
        split: Option<Split>,
    ) -> Result<PooledDesign, CaseControlError> {
        let strata = self.select(split)?;
        let n_coef = spec.covariates.len() + 1;
        let n_obs = strata.len() * (self.m + 1);
        let mut x = Vec::with_capacity(n_obs * n_coef);
        let mut y = Vec::with_capacity(n_obs);
        for stratum in &strata {
            for event in stratum.events() {
                x.push(1.0);
                Self::covariate_row(event, spec, &mut x)?;
                y.push(event.is_crash);
            }
        }
        Ok(PooledDesign::new(n_obs, n_coef, x, y))
    }

    /// Builds whichever design the model family needs.
    pub fn design(
        &self,
        spec: &ModelSpec,
        split: Option<Split>,
    ) -> Result<FitData, CaseControlError> {
        if spec.family == Family::RpLogistic {
            Ok(FitData::Pooled(self.pooled_design(spec, split)?))
        } else {
            Ok(FitData::Stratified(self.stratified_design(spec, split)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{
        Movement, PhaseInterval, RawLogs, Segment, SpeedFilterConfig, TraversalSample,
        VolumeRecord, WeatherRecord,
    };
    use crate::likelihoods::PriorSpec;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    /// A ten-week world on one segment with complete coverage, dense enough
    /// that every 5-minute slice holds 5 Bluetooth samples.
    fn dense_logs(weeks: i64) -> RawLogs {
        let seg = Segment {
            id: "s1".to_string(),
            length_mi: 0.5,
            speed_limit_mph: 40.0,
            upstream: "i1".to_string(),
            downstream: "i2".to_string(),
        };
        let end = Timestamp(weeks * WEEK);
        let mut bluetooth = Vec::new();
        let mut t = 0;
        while t < end.0 {
            bluetooth.push(TraversalSample {
                segment: "s1".to_string(),
                exit_time: Timestamp(t),
                travel_time_s: 60.0,
            });
            t += MINUTE;
        }
        let mut phases = Vec::new();
        let mut c = 0;
        while c < end.0 {
            for int in ["i1", "i2"] {
                phases.push(PhaseInterval {
                    intersection: int.to_string(),
                    movement: Movement::Through,
                    start: Timestamp(c),
                    end: Timestamp(c + 30),
                });
                phases.push(PhaseInterval {
                    intersection: int.to_string(),
                    movement: Movement::Left,
                    start: Timestamp(c + 30),
                    end: Timestamp(c + 40),
                });
            }
            c += MINUTE;
        }
        let mut volumes = Vec::new();
        let mut b = 0;
        while b < end.0 {
            for int in ["i1", "i2"] {
                for mv in [Movement::Through, Movement::Left] {
                    volumes.push(VolumeRecord {
                        intersection: int.to_string(),
                        movement: mv,
                        bin_start: Timestamp(b),
                        count: 90,
                    });
                }
            }
            b += 15 * MINUTE;
        }
        let mut weather = Vec::new();
        let mut w = 0;
        while w < end.0 {
            weather.push(WeatherRecord {
                timestamp: Timestamp(w),
                rainy: false,
                visibility_mi: 10.0,
            });
            w += 30 * MINUTE;
        }
        RawLogs { segments: vec![seg], bluetooth, phases, volumes, weather }
    }

    fn ten_week_ctx() -> FeatureContext {
        FeatureContext::build(&dense_logs(10), &SpeedFilterConfig::default()).unwrap()
    }

    fn period(weeks: i64) -> TimeWindow {
        TimeWindow { start: Timestamp(0), end: Timestamp(weeks * WEEK) }
    }

    // Tuesday 15:00 of week 2 (epoch day zero is a Thursday).
    fn tue_1500_week(week: i64) -> Timestamp {
        Timestamp(week * WEEK + 5 * 24 * HOUR + 15 * HOUR)
    }

    #[test]
    fn candidates_come_from_other_weeks() {
        let t = tue_1500_week(2);
        let crashes = vec![CrashRecord { segment: "s1".to_string(), timestamp: t }];
        let cfg = MatchConfig::default();
        let cands = candidate_controls("s1", t, period(10), &crashes, &cfg);
        assert_eq!(cands.len(), 9);
        assert!(!cands.contains(&t));
        for c in &cands {
            assert_eq!(c.seconds_of_day(), t.seconds_of_day());
            assert_eq!(c.day_of_week(), t.day_of_week());
        }
    }

    #[test]
    fn nearby_crashes_exclude_candidates() {
        let t = tue_1500_week(2);
        // A second crash at 14:00 of week 7 knocks out week 7's 15:00.
        let other = Timestamp(tue_1500_week(7).0 - HOUR);
        let crashes = vec![
            CrashRecord { segment: "s1".to_string(), timestamp: t },
            CrashRecord { segment: "s1".to_string(), timestamp: other },
        ];
        let cfg = MatchConfig::default();
        let cands = candidate_controls("s1", t, period(10), &crashes, &cfg);
        assert_eq!(cands.len(), 8);
        assert!(!cands.contains(&tue_1500_week(7)));

        // A crash on a different segment does not exclude anything.
        let crashes2 = vec![
            CrashRecord { segment: "s1".to_string(), timestamp: t },
            CrashRecord { segment: "s9".to_string(), timestamp: other },
        ];
        assert_eq!(candidate_controls("s1", t, period(10), &crashes2, &cfg).len(), 9);

        // Exactly at the 3 h boundary still excludes (inclusive window).
        let boundary = Timestamp(tue_1500_week(7).0 - 3 * HOUR);
        let crashes3 = vec![
            CrashRecord { segment: "s1".to_string(), timestamp: t },
            CrashRecord { segment: "s1".to_string(), timestamp: boundary },
        ];
        assert_eq!(candidate_controls("s1", t, period(10), &crashes3, &cfg).len(), 8);
    }

    #[test]
    fn one_week_study_has_no_candidates() {
        let t = Timestamp(5 * 24 * HOUR + 15 * HOUR);
        let crashes = vec![CrashRecord { segment: "s1".to_string(), timestamp: t }];
        let cands =
            candidate_controls("s1", t, period(1), &crashes, &MatchConfig::default());
        assert!(cands.is_empty());
    }

    #[test]
    fn hour_granularity_matches_on_the_grid() {
        let t = tue_1500_week(2);
        let crashes = vec![CrashRecord { segment: "s1".to_string(), timestamp: t }];
        let cfg = MatchConfig { granularity: MatchGranularity::Hour, ..MatchConfig::default() };
        let cands = candidate_controls("s1", t, period(10), &crashes, &cfg);
        // 12 grid points × 10 weeks, minus the crash's own week (all 12
        // fall within the ±3 h exclusion).
        assert_eq!(cands.len(), 12 * 9);
        for c in &cands {
            let key = match_key("s1", *c, MatchGranularity::Hour);
            assert_eq!(key, match_key("s1", t, MatchGranularity::Hour));
        }
    }

    #[test]
    fn dataset_builds_and_balances() {
        let ctx = ten_week_ctx();
        let crashes = vec![
            CrashRecord { segment: "s1".to_string(), timestamp: tue_1500_week(2) },
            CrashRecord { segment: "s1".to_string(), timestamp: tue_1500_week(5) - 30 * HOUR },
        ];
        let cfg = MatchConfig::default();
        let (dataset, attrition) =
            build_dataset(&ctx, &crashes, period(10), &cfg, 77).unwrap();
        assert_eq!(attrition.crashes, 2);
        assert_eq!(attrition.built, 2);
        assert!(attrition.balances());
        assert_eq!(dataset.strata.len(), 2);
        for stratum in &dataset.strata {
            assert_eq!(stratum.controls.len(), 4);
            assert!(stratum.case.is_crash);
            assert!(stratum.controls.iter().all(|c| !c.is_crash));
            // All events share the matching key.
            for e in stratum.events() {
                assert_eq!(
                    match_key(&e.segment_id, e.timestamp, cfg.granularity),
                    stratum.matching_key
                );
                assert_eq!(e.stratum_id, stratum.id);
            }
            // No control lies within 3 h of any crash on its segment.
            for c in &stratum.controls {
                for crash in &crashes {
                    assert!((crash.timestamp.0 - c.timestamp.0).abs() > DEFAULT_EXCLUSION_S);
                }
            }
        }

        // Determinism: same seed, same dataset; different seed, different
        // control draw.
        let (again, _) = build_dataset(&ctx, &crashes, period(10), &cfg, 77).unwrap();
        assert_eq!(dataset, again);
        let (other, _) = build_dataset(&ctx, &crashes, period(10), &cfg, 78).unwrap();
        assert_ne!(dataset, other);
    }

    #[test]
    fn scarce_candidates_reject_the_stratum() {
        let ctx = ten_week_ctx();
        // Crash in a 4-week period: only 3 other weeks exist, m=4.
        let crashes =
            vec![CrashRecord { segment: "s1".to_string(), timestamp: tue_1500_week(2) }];
        let (dataset, attrition) =
            build_dataset(&ctx, &crashes, period(4), &MatchConfig::default(), 1).unwrap();
        assert!(dataset.strata.is_empty());
        assert_eq!(attrition.too_few_candidates, 1);
        assert!(attrition.balances());
    }

    #[test]
    fn thin_case_sampling_is_tallied() {
        // Bluetooth every 4 minutes: some 5-minute slices hold just one
        // sample, so the case is under-sampled.
        let mut logs = dense_logs(10);
        logs.bluetooth = {
            let mut v = Vec::new();
            let mut t = 0;
            while t < 10 * WEEK {
                v.push(TraversalSample {
                    segment: "s1".to_string(),
                    exit_time: Timestamp(t),
                    travel_time_s: 60.0,
                });
                t += 4 * MINUTE;
            }
            v
        };
        let ctx = FeatureContext::build(&logs, &SpeedFilterConfig::default()).unwrap();
        let crashes =
            vec![CrashRecord { segment: "s1".to_string(), timestamp: tue_1500_week(2) }];
        let (_, attrition) =
            build_dataset(&ctx, &crashes, period(10), &MatchConfig::default(), 1).unwrap();
        assert_eq!(attrition.low_bluetooth_sampling, 1);
        assert!(attrition.balances());
    }

    #[test]
    fn missing_volumes_are_tallied_as_missing_source() {
        let mut logs = dense_logs(10);
        // Drop every volume bin in week 2: the case's slices lose coverage.
        logs.volumes.retain(|v| !(v.bin_start.0 >= 2 * WEEK && v.bin_start.0 < 3 * WEEK));
        let ctx = FeatureContext::build(&logs, &SpeedFilterConfig::default()).unwrap();
        let crashes =
            vec![CrashRecord { segment: "s1".to_string(), timestamp: tue_1500_week(2) }];
        let (_, attrition) =
            build_dataset(&ctx, &crashes, period(10), &MatchConfig::default(), 1).unwrap();
        assert_eq!(attrition.missing_source, 1);
        assert!(attrition.balances());
    }

    #[test]
    fn bad_controls_are_replaced_before_rejecting() {
        let mut logs = dense_logs(10);
        // Starve week 6's matched hour of Bluetooth: that candidate becomes
        // thin, but 8 other weeks remain for m=4.
        let dead_start = tue_1500_week(6).0 - 30 * MINUTE;
        let dead_end = tue_1500_week(6).0 + 5 * MINUTE;
        logs.bluetooth.retain(|s| !(s.exit_time.0 >= dead_start && s.exit_time.0 < dead_end));
        let ctx = FeatureContext::build(&logs, &SpeedFilterConfig::default()).unwrap();
        let crashes =
            vec![CrashRecord { segment: "s1".to_string(), timestamp: tue_1500_week(2) }];
        let (dataset, attrition) =
            build_dataset(&ctx, &crashes, period(10), &MatchConfig::default(), 5).unwrap();
        assert_eq!(attrition.built, 1);
        let stratum = &dataset.strata[0];
        assert_eq!(stratum.controls.len(), 4);
        assert!(stratum.controls.iter().all(|c| c.timestamp != tue_1500_week(6)));
    }

    #[test]
    fn split_is_whole_stratum_and_sized_by_rounding() {
        let ctx = ten_week_ctx();
        // Ten crashes on distinct days/hours.
        let crashes: Vec<CrashRecord> = (0..10)
            .map(|i| CrashRecord {
                segment: "s1".to_string(),
                timestamp: Timestamp(2 * WEEK + i * (25 * HOUR) + 9 * HOUR),
            })
            .collect();
        let cfg = MatchConfig::default();
        let (mut dataset, attrition) =
            build_dataset(&ctx, &crashes, period(10), &cfg, 3).unwrap();
        assert_eq!(attrition.built, 10);

        split_dataset(&mut dataset, 0.8, 11).unwrap();
        assert_eq!(dataset.count(Split::Train), 8);
        assert_eq!(dataset.count(Split::Validation), 2);

        // Same seed → identical labels; the labels cover whole strata by
        // construction (one label per stratum).
        let mut again = Dataset { split: Vec::new(), ..dataset.clone() };
        split_dataset(&mut again, 0.8, 11).unwrap();
        assert_eq!(dataset.split, again.split);

        // Errors.
        assert_eq!(
            split_dataset(&mut dataset.clone(), 1.0, 1),
            Err(CaseControlError::BadFraction)
        );
        let mut empty = Dataset { m: 4, strata: Vec::new(), split: Vec::new() };
        assert_eq!(split_dataset(&mut empty, 0.8, 1), Err(CaseControlError::EmptyDataset));
    }

    #[test]
    fn designs_extract_the_requested_slice() {
        let ctx = ten_week_ctx();
        let crashes =
            vec![CrashRecord { segment: "s1".to_string(), timestamp: tue_1500_week(2) }];
        let cfg = MatchConfig::default();
        let (mut dataset, _) = build_dataset(&ctx, &crashes, period(10), &cfg, 9).unwrap();
        split_dataset(&mut dataset, 0.8, 2).unwrap();

        let spec = ModelSpec {
            family: Family::ConditionalLogistic,
            covariates: vec!["avg_speed".to_string(), "up_green_ratio".to_string()],
            random: vec![],
            slice: 2,
            priors: PriorSpec::default(),
            standardize: false,
        };
        let design = dataset.stratified_design(&spec, None).unwrap();
        assert_eq!(design.n_strata(), 1);
        assert_eq!(design.stratum_size(), 5);
        assert_eq!(design.case_index(0), 0);
        let case = &dataset.strata[0].case;
        assert_eq!(design.row(0, 0)[0], case.slices[1].avg_speed);
        assert_eq!(design.row(0, 0)[1], case.slices[1].up_green_ratio);

        // Pooled design gets an intercept and labels.
        let mut spec_p = spec.clone();
        spec_p.family = Family::RpLogistic;
        spec_p.random = vec!["intercept".to_string()];
        let pooled = dataset.pooled_design(&spec_p, None).unwrap();
        assert_eq!(pooled.n_obs(), 5);
        assert_eq!(pooled.n_coef(), 3);
        assert_eq!(pooled.row(0)[0], 1.0);
        assert!(pooled.label(0));
        assert!(!pooled.label(1));

        // Unknown covariate is refused.
        let bad = ModelSpec { covariates: vec!["nope".to_string()], ..spec.clone() };
        assert_eq!(
            dataset.stratified_design(&bad, None).unwrap_err(),
            CaseControlError::UnknownCovariate("nope".to_string())
        );

        // Split filters and the not-yet-split guard.
        let train = dataset.stratified_design(&spec, Some(Split::Train)).unwrap();
        let val = dataset.stratified_design(&spec, Some(Split::Validation)).unwrap();
        assert_eq!(train.n_strata() + val.n_strata(), 1);
        let mut unsplit = dataset.clone();
        unsplit.split.clear();
        assert_eq!(
            unsplit.stratified_design(&spec, Some(Split::Train)).unwrap_err(),
            CaseControlError::NotSplit
        );
    }

    #[test]
    fn stratum_ids_are_dense_and_ordered() {
        let ctx = ten_week_ctx();
        let crashes: Vec<CrashRecord> = (0..4)
            .map(|i| CrashRecord {
                segment: "s1".to_string(),
                timestamp: Timestamp(2 * WEEK + i * (30 * HOUR) + 8 * HOUR),
            })
            .collect();
        let (dataset, _) =
            build_dataset(&ctx, &crashes, period(10), &MatchConfig::default(), 13).unwrap();
        for (i, s) in dataset.strata.iter().enumerate() {
            assert_eq!(s.id, i);
        }
        // Sorted by crash time regardless of input order.
        let mut shuffled = crashes.clone();
        shuffled.reverse();
        let (dataset2, _) =
            build_dataset(&ctx, &shuffled, period(10), &MatchConfig::default(), 13).unwrap();
        assert_eq!(dataset, dataset2);
        let _ = format!("{:?}", dataset.strata[0].matching_key);
    }
}
