//! Synthetic corridor generator with known ground truth.
//!
//! Real crash and detector archives are proprietary, so the pipeline is
//! validated on invented corridors whose risk model is known exactly. The
//! generator writes the same five log streams the feature pipeline
//! consumes — Bluetooth traversals, signal phases, turning volumes,
//! weather — plus a crash log produced *from* a chosen coefficient vector,
//! and a manifest recording that ground truth for later comparison.
//!
//! Crashes are labeled in one of two modes:
//!
//! * **Conditional** — strata are drawn first (a segment, a clock moment,
//!   and `m + 1` week-shifted member moments) and the crash member is
//!   selected with probability proportional to `exp(xᵀβ)`. This inverts
//!   the matched conditional likelihood exactly, so fits on rebuilt strata
//!   estimate the generating coefficients.
//! * **Marginal** — every 5-minute window is an independent Bernoulli
//!   trial with `p = logit⁻¹(α + xᵀβ)`, exercising the full case-control
//!   sampling path including its intercept elimination.
//!
//! There is no microscopic traffic model here: processes are simple
//! parametric curves, tuned so slice covariates stay inside plausible
//! urban-arterial envelopes (speeds 4–60 mph, green ratios 4–100 %,
//! five-minute approach volumes under ~350 vehicles).
//!
//! Speeds deserve a note. The feature pipeline's rolling IQR filter keeps
//! a sample only when it sits near the median of the most recent
//! *retained* samples, so a stream of independent per-vehicle noise is
//! self-destructive: each acceptance narrows the retained spread, the
//! band ratchets toward zero, and the filter ends up rejecting everything
//! (the only fixed point of that truncation is zero spread). Real
//! Bluetooth streams survive because successive traversals are serially
//! dependent. The generator reproduces that with a speed process built
//! from three parts: a slow congestion/regime *center* that is quantized
//! and slew-rate limited (at most one quantum step per filter window of
//! emitted samples, so any fifteen consecutive samples straddle at most
//! one step), a three-point dither cycle around the center (period 3
//! divides the window, keeping every window's composition balanced), and
//! occasional *inserted* slow outliers that the filter provably rejects
//! without ever entering its reference window. Every clean sample then
//! passes the filter by construction, while outliers never do.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::case_control::{CrashRecord, DEFAULT_EXCLUSION_S};
use crate::features::{
    EventOutcome, FeatureError, FeatureVector, Movement, PhaseInterval, RawLogs, Segment,
    SpeedFilterConfig, TraversalSample, VolumeRecord, WeatherRecord, COVARIATE_NAMES,
    FeatureContext,
};
use crate::likelihoods::{StratifiedDesign, INTERCEPT_NAME};
use crate::math;
use crate::rng::stream;
use crate::time::{TimeWindow, Timestamp, DAY, MINUTE, WEEK};

/// Minimum retained Bluetooth samples per slice for a moment to host a
/// generated crash (mirrors the dataset builder's usability rule).
const MIN_CRASH_SAMPLES: u32 = 2;

/// Attempts to place one stratum or crash moment before giving up.
const MAX_PLACEMENT_ATTEMPTS: usize = 500;

/// Dither cycle around the speed center. The period (3) divides the speed
/// filter's window (15), so every window of consecutive clean samples
/// holds a balanced five-of-each composition whatever its alignment.
const DITHER_PATTERN: [f64; 3] = [0.0, 1.0, -1.0];

/// Minimum emitted samples between center steps; equals the speed
/// filter's default window so at most one step can fall inside any
/// window of consecutive samples. With a balanced dither that bounds
/// every clean deviation strictly inside the acceptance band.
const STEP_SPACING: usize = 15;

/// Traffic process parameters: volumes, Bluetooth penetration, speeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    /// Mean through vehicles per 15-minute bin at the daily peak.
    pub day_through_15min: f64,
    /// Mean through vehicles per 15-minute bin overnight.
    pub night_through_15min: f64,
    /// Mean left-turn vehicles per 15-minute bin at the daily peak.
    pub day_left_15min: f64,
    /// Mean left-turn vehicles per 15-minute bin overnight.
    pub night_left_15min: f64,
    /// Fraction of through vehicles matched by the Bluetooth detectors.
    pub bt_penetration: f64,
    /// Uncongested speed, mph.
    pub free_speed_mph: f64,
    /// Speed drop at the morning peak (8:00), mph.
    pub am_dip_mph: f64,
    /// Speed drop at the evening peak (17:30), mph.
    pub pm_dip_mph: f64,
    /// Standard deviation of the weekly traffic regime levels, mph.
    /// Regimes are drawn per week boundary and linearly interpolated, so
    /// matched moments in different weeks see genuinely different speeds
    /// while the within-week motion stays slow.
    pub week_speed_sd_mph: f64,
    /// Half-spread of the three-point speed dither around the regime
    /// center, mph. This is the within-window speed variability the
    /// rolling filter sees; the center's step quantum is a quarter of it.
    pub dither_mph: f64,
    /// Probability a traversal spawns an extra outlier detection
    /// (parked, detoured, queued) alongside it.
    pub outlier_prob: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            day_through_15min: 500.0,
            night_through_15min: 250.0,
            day_left_15min: 45.0,
            night_left_15min: 18.0,
            bt_penetration: 0.0605,
            free_speed_mph: 44.0,
            am_dip_mph: 8.0,
            pm_dip_mph: 9.0,
            week_speed_sd_mph: 3.0,
            dither_mph: 3.0,
            outlier_prob: 0.005,
        }
    }
}

/// Signal controller parameters. Plans use a fixed cycle whose through
/// split is re-drawn at every re-plan, a cheap stand-in for adaptive
/// control that still sweeps the whole observed green-ratio range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    /// Cycle length, seconds.
    pub cycle_s: i64,
    /// Re-plan interval, seconds.
    pub replan_s: i64,
    /// Smallest through green per cycle, seconds.
    pub min_through_green_s: i64,
    /// Largest through green per cycle, seconds.
    pub max_through_green_s: i64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            cycle_s: 120,
            replan_s: 300,
            min_through_green_s: 15,
            max_through_green_s: 112,
        }
    }
}

/// Rain renewal-process parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeatherConfig {
    /// Rain process intensity: 0 disables rain entirely; 1 gives the
    /// baseline dry-spell length; larger values rain more often.
    pub rain_intensity: f64,
    /// Mean dry spell at intensity 1, hours.
    pub mean_dry_h: f64,
    /// Mean wet spell, hours.
    pub mean_wet_h: f64,
    /// Seconds between weather station readings.
    pub reading_interval_s: i64,
}

impl Default for WeatherConfig {
    fn default() -> Self {
        WeatherConfig {
            rain_intensity: 1.0,
            mean_dry_h: 50.0,
            mean_wet_h: 5.0,
            reading_interval_s: 30 * MINUTE,
        }
    }
}

/// The generating risk model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundTruth {
    /// Covariates entering the linear predictor, by feature name.
    pub covariates: Vec<String>,
    /// Their true coefficients (raw covariate scale).
    pub beta: Vec<f64>,
    /// Covariates whose coefficients scatter across units (may include
    /// `intercept` in marginal mode only).
    pub random: Vec<String>,
    /// Scatter standard deviations, parallel to `random`.
    pub sigma: Vec<f64>,
    /// Which 5-minute slice the truth model reads (1 = nearest).
    pub slice: u8,
}

impl Default for GroundTruth {
    fn default() -> Self {
        GroundTruth {
            covariates: alloc::vec![String::from("avg_speed"), String::from("std_speed")],
            beta: alloc::vec![-0.06, 0.09],
            random: Vec::new(),
            sigma: Vec::new(),
            slice: 2,
        }
    }
}

/// How crash labels are drawn from the truth model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GenerationMode {
    /// Draw strata and pick each case by softmax over its members.
    Conditional {
        /// Number of strata to place.
        n_strata: usize,
        /// Controls per case.
        m: usize,
    },
    /// Independent Bernoulli crash per segment per 5-minute window.
    Marginal {
        /// Log-odds intercept.
        alpha: f64,
    },
}

impl Default for GenerationMode {
    fn default() -> Self {
        GenerationMode::Conditional { n_strata: 220, m: 4 }
    }
}

/// Full description of a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    /// Number of arterial segments in the corridor.
    pub n_segments: usize,
    /// Study length in whole weeks.
    pub weeks: u32,
    /// Master seed; every stream derives from it.
    pub seed: u64,
    /// Traffic processes.
    pub traffic: TrafficConfig,
    /// Signal controller behavior.
    pub signal: SignalConfig,
    /// Rain process.
    pub weather: WeatherConfig,
    /// Generating risk model.
    pub truth: GroundTruth,
    /// Crash labeling mode.
    pub mode: GenerationMode,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_segments: 4,
            weeks: 10,
            seed: 0,
            traffic: TrafficConfig::default(),
            signal: SignalConfig::default(),
            weather: WeatherConfig::default(),
            truth: GroundTruth::default(),
            mode: GenerationMode::default(),
        }
    }
}

/// Ground truth persisted alongside every synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    /// Labeling mode and its parameters.
    #[serde(flatten)]
    pub mode: GenerationMode,
    /// Truth covariate names.
    pub covariates: Vec<String>,
    /// True coefficients.
    pub beta: Vec<f64>,
    /// Random-coefficient names.
    pub random: Vec<String>,
    /// Their scatter standard deviations.
    pub sigma: Vec<f64>,
    /// Slice the truth model read.
    pub slice: u8,
    /// Master seed.
    pub seed: u64,
}

/// A generated world: logs, crash labels, truth, and the study period.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    /// The five detector log streams.
    pub logs: RawLogs,
    /// Labeled crashes.
    pub crashes: Vec<CrashRecord>,
    /// Persisted ground truth.
    pub manifest: TruthManifest,
    /// Study period covered by the logs.
    pub period: TimeWindow,
}

/// Generation failures.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldError {
    /// A configuration invariant is violated.
    BadConfig(&'static str),
    /// The generated logs failed to index (generator bug surfaced).
    Feature(FeatureError),
    /// Could not place a stratum after many attempts — the world is too
    /// small or too sparse for the requested crash count.
    Exhausted {
        /// Index of the stratum that failed to place.
        stratum: usize,
    },
}

impl core::fmt::Display for WorldError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            WorldError::BadConfig(msg) => write!(f, "invalid world config: {msg}"),
            WorldError::Feature(e) => write!(f, "generated logs failed to index: {e}"),
            WorldError::Exhausted { stratum } => {
                write!(f, "could not place stratum {stratum}; enlarge the world")
            }
        }
    }
}

impl core::error::Error for WorldError {}

impl From<FeatureError> for WorldError {
    fn from(e: FeatureError) -> Self {
        WorldError::Feature(e)
    }
}

impl WorldConfig {
    /// The study period implied by the configuration.
    pub fn period(&self) -> TimeWindow {
        TimeWindow::new(Timestamp(0), Timestamp(i64::from(self.weeks) * WEEK))
    }

    /// Checks every configuration invariant.
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = WorldError::BadConfig;
        if self.n_segments == 0 {
            return Err(bad("n_segments must be at least 1"));
        }
        if self.weeks == 0 {
            return Err(bad("weeks must be at least 1"));
        }
        let t = &self.traffic;
        if !(t.bt_penetration > 0.0 && t.bt_penetration <= 1.0) {
            return Err(bad("bt_penetration must lie in (0, 1]"));
        }
        if t.day_through_15min <= 0.0
            || t.night_through_15min <= 0.0
            || t.day_left_15min <= 0.0
            || t.night_left_15min <= 0.0
        {
            return Err(bad("volume means must be positive"));
        }
        if t.free_speed_mph - t.am_dip_mph <= 5.0 || t.free_speed_mph - t.pm_dip_mph <= 5.0 {
            return Err(bad("peak speed dips must leave speeds above 5 mph"));
        }
        if !(t.dither_mph > 0.0) || !t.dither_mph.is_finite() || t.dither_mph > 8.0 {
            return Err(bad("dither_mph must lie in (0, 8]"));
        }
        if t.week_speed_sd_mph < 0.0 || !t.week_speed_sd_mph.is_finite() || t.week_speed_sd_mph > 10.0 {
            return Err(bad("week_speed_sd_mph must lie in [0, 10]"));
        }
        if !(t.outlier_prob >= 0.0 && t.outlier_prob < 1.0) {
            return Err(bad("outlier_prob must lie in [0, 1)"));
        }
        let s = &self.signal;
        if s.cycle_s <= 0 || s.replan_s < s.cycle_s {
            return Err(bad("cycle must be positive and no longer than the re-plan interval"));
        }
        if !(0 < s.min_through_green_s
            && s.min_through_green_s <= s.max_through_green_s
            && s.max_through_green_s <= s.cycle_s - 8)
        {
            return Err(bad("through green bounds must fit inside the cycle"));
        }
        let w = &self.weather;
        if w.rain_intensity < 0.0 || w.mean_dry_h <= 0.0 || w.mean_wet_h <= 0.0 {
            return Err(bad("weather durations must be positive and intensity nonnegative"));
        }
        if w.reading_interval_s <= 0 {
            return Err(bad("weather reading interval must be positive"));
        }
        let g = &self.truth;
        if g.covariates.is_empty() {
            return Err(bad("truth needs at least one covariate"));
        }
        if g.beta.len() != g.covariates.len() {
            return Err(bad("beta must be parallel to covariates"));
        }
        if g.beta.iter().any(|b| !b.is_finite()) {
            return Err(bad("beta must be finite"));
        }
        for (i, name) in g.covariates.iter().enumerate() {
            if !COVARIATE_NAMES.contains(&name.as_str()) {
                return Err(bad("unknown truth covariate"));
            }
            if g.covariates[..i].contains(name) {
                return Err(bad("duplicate truth covariate"));
            }
        }
        if g.sigma.len() != g.random.len() {
            return Err(bad("sigma must be parallel to random"));
        }
        if g.sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(bad("sigma must be positive and finite"));
        }
        let marginal = matches!(self.mode, GenerationMode::Marginal { .. });
        for name in &g.random {
            let intercept_ok = marginal && name == INTERCEPT_NAME;
            if !g.covariates.contains(name) && !intercept_ok {
                return Err(bad("random names must be truth covariates (or the marginal intercept)"));
            }
        }
        if !(1..=4).contains(&g.slice) {
            return Err(bad("truth slice must lie in 1..=4"));
        }
        match self.mode {
            GenerationMode::Conditional { n_strata, m } => {
                if n_strata == 0 || m == 0 {
                    return Err(bad("conditional mode needs n_strata and m of at least 1"));
                }
                if (m as u64) + 1 > u64::from(self.weeks) {
                    return Err(bad("conditional mode needs more weeks than controls per case"));
                }
            }
            GenerationMode::Marginal { alpha } => {
                if alpha.is_nan() {
                    return Err(bad("marginal alpha must not be NaN"));
                }
            }
        }
        Ok(())
    }
}

/// Segment id for index `k` (0-based).
fn segment_id(k: usize) -> String {
    format!("seg{:02}", k + 1)
}

/// Intersection id for index `k` (0-based; segment `k` runs from
/// intersection `k` to `k + 1`).
fn intersection_id(k: usize) -> String {
    format!("int{k:02}")
}

/// Smooth daytime activity factor in [0, 1], peaking at 14:00.
fn daylight(seconds_of_day: f64) -> f64 {
    let z = (seconds_of_day - 14.0 * 3600.0) / (6.5 * 3600.0);
    math::exp(-z * z)
}

/// Congestion target speed at a moment: free speed with wide, gentle
/// peak-hour dips. Slopes are kept shallow (under ~3 mph per hour) so the
/// slew-rate-limited regime center can track the curve at any plausible
/// detection density.
fn speed_curve(traffic: &TrafficConfig, seconds_of_day: f64) -> f64 {
    let am = (seconds_of_day - 8.0 * 3600.0) / (1.8 * 3600.0);
    let pm = (seconds_of_day - 17.5 * 3600.0) / (2.2 * 3600.0);
    traffic.free_speed_mph
        - traffic.am_dip_mph * math::exp(-0.5 * am * am)
        - traffic.pm_dip_mph * math::exp(-0.5 * pm * pm)
}

/// Generates the five raw log streams for a configuration.
///
/// All randomness derives from the master seed through per-process
/// streams, so regeneration is bit-identical regardless of call order.
pub fn generate_logs(config: &WorldConfig) -> Result<RawLogs, WorldError> {
    config.validate()?;
    let period = config.period();
    let n_int = config.n_segments + 1;
    let traffic = &config.traffic;

    // Inventory: segment lengths cycle through a fixed menu so corridors
    // of any size stay heterogeneous but deterministic.
    let lengths = [0.35, 0.45, 0.6, 0.5];
    let segments: Vec<Segment> = (0..config.n_segments)
        .map(|k| Segment {
            id: segment_id(k),
            length_mi: lengths[k % lengths.len()],
            speed_limit_mph: 45.0,
            upstream: intersection_id(k),
            downstream: intersection_id(k + 1),
        })
        .collect();

    // Volumes: Poisson 15-minute bins around a day/night curve.
    // Counts are capped so apportioned 5-minute approach volumes stay
    // below observed urban maxima even in the far Poisson tail.
    let n_bins = (period.duration() / (15 * MINUTE)) as usize;
    let mut volumes = Vec::with_capacity(n_int * 2 * n_bins);
    let mut through_counts: Vec<Vec<u32>> = Vec::with_capacity(n_int);
    for i in 0..n_int {
        let mut rng = stream(config.seed, "volume", i as u64);
        let mut through = Vec::with_capacity(n_bins);
        for b in 0..n_bins {
            let start = Timestamp(b as i64 * 15 * MINUTE);
            let mid = (start.0 + 450) % DAY;
            let f = daylight(mid as f64);
            let mean_thr = traffic.night_through_15min
                + (traffic.day_through_15min - traffic.night_through_15min) * f;
            let mean_left =
                traffic.night_left_15min + (traffic.day_left_15min - traffic.night_left_15min) * f;
            let thr = Poisson::new(mean_thr).expect("validated mean").sample(&mut rng);
            let left = Poisson::new(mean_left).expect("validated mean").sample(&mut rng);
            let thr = (thr as u32).min(700);
            let left = (left as u32).min(150);
            through.push(thr);
            volumes.push(VolumeRecord {
                intersection: intersection_id(i),
                movement: Movement::Through,
                bin_start: start,
                count: thr,
            });
            volumes.push(VolumeRecord {
                intersection: intersection_id(i),
                movement: Movement::Left,
                bin_start: start,
                count: left,
            });
        }
        through_counts.push(through);
    }

    // Signal phases: per re-plan block, a random cycle offset and through
    // split; the left phase follows the through phase each cycle.
    let mut phases = Vec::new();
    for i in 0..n_int {
        let mut rng = stream(config.seed, "signal", i as u64);
        let mut block_start = period.start.0;
        while block_start < period.end.0 {
            let block_end = (block_start + config.signal.replan_s).min(period.end.0);
            let offset = rng.gen_range(0..config.signal.cycle_s);
            // The very first plan starts its green at the period start so
            // the logged extent covers the earliest possible slice.
            let offset = if block_start == period.start.0 { 0 } else { offset };
            let green = rng
                .gen_range(config.signal.min_through_green_s..=config.signal.max_through_green_s);
            let left = (config.signal.cycle_s - 4 - green).clamp(4, 20);
            let mut cycle = block_start + offset - config.signal.cycle_s;
            while cycle < block_end {
                let clip = |a: i64, b: i64| -> Option<(i64, i64)> {
                    let lo = a.max(block_start);
                    let hi = b.min(block_end);
                    (hi > lo).then_some((lo, hi))
                };
                if let Some((s, e)) = clip(cycle, cycle + green) {
                    phases.push(PhaseInterval {
                        intersection: intersection_id(i),
                        movement: Movement::Through,
                        start: Timestamp(s),
                        end: Timestamp(e),
                    });
                }
                if let Some((s, e)) = clip(cycle + green + 2, cycle + green + 2 + left) {
                    phases.push(PhaseInterval {
                        intersection: intersection_id(i),
                        movement: Movement::Left,
                        start: Timestamp(s),
                        end: Timestamp(e),
                    });
                }
                cycle += config.signal.cycle_s;
            }
            block_start = block_end;
        }
    }

    // Bluetooth traversals: a penetration-rate thinning of each segment's
    // upstream through volume. Speeds follow the filter-stable process
    // described in the module docs: a quantized, slew-rate-limited center
    // tracking the congestion curve plus interpolated weekly regimes, a
    // period-3 dither around it, and inserted outlier detections.
    let mut bluetooth = Vec::new();
    for (k, seg) in segments.iter().enumerate() {
        let mut rng = stream(config.seed, "bluetooth", k as u64);
        let seg_factor = 0.94 + 0.04 * ((k % 4) as f64);
        let regimes: Vec<f64> = (0..=config.weeks)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                traffic.week_speed_sd_mph * z
            })
            .collect();
        let regime_at = |t: i64| -> f64 {
            let off = t - period.start.0;
            let w = off.div_euclid(WEEK) as usize;
            let f = off.rem_euclid(WEEK) as f64 / WEEK as f64;
            regimes[w] * (1.0 - f) + regimes[w + 1] * f
        };
        let quantum = traffic.dither_mph / 4.0;
        let mut center = f64::NAN;
        let mut since_step = STEP_SPACING;
        let mut phase = 0usize;
        for (b, &count) in through_counts[k].iter().enumerate() {
            let bin_start = b as i64 * 15 * MINUTE;
            let n = Binomial::new(u64::from(count), traffic.bt_penetration)
                .expect("validated penetration")
                .sample(&mut rng);
            // Distinct detection seconds: repeated timestamps would let
            // the chronological sort reorder same-second samples by speed
            // and unbalance the dither cycle the filter relies on.
            let n = (n as usize).min(15 * MINUTE as usize);
            let mut times: Vec<i64> = rand::seq::index::sample(&mut rng, 15 * MINUTE as usize, n)
                .into_iter()
                .map(|off| bin_start + off as i64)
                .collect();
            times.sort_unstable();
            for t in times {
                let target = (speed_curve(traffic, (t % DAY) as f64) * seg_factor
                    + regime_at(t))
                .clamp(7.0, 55.0);
                if center.is_nan() {
                    center = math::round(target / quantum) * quantum;
                } else if since_step >= STEP_SPACING {
                    let delta = (target - center) / quantum;
                    if math::abs(delta) >= 0.5 {
                        center += quantum * if delta > 0.0 { 1.0 } else { -1.0 };
                        since_step = 0;
                    }
                }
                let speed = center + traffic.dither_mph * DITHER_PATTERN[phase % 3];
                phase += 1;
                since_step += 1;
                bluetooth.push(TraversalSample {
                    segment: seg.id.clone(),
                    exit_time: Timestamp(t),
                    travel_time_s: 3600.0 * seg.length_mi / speed,
                });
                if rng.gen::<f64>() < traffic.outlier_prob {
                    // An extra implausibly slow detection at the same
                    // moment. Bounding it at least 2.5 dithers below the
                    // center keeps it outside any achievable acceptance
                    // band, so it can never poison the filter window.
                    let slow = center / rng.gen_range(1.8..2.6);
                    let out = slow.min(center - 2.5 * traffic.dither_mph).max(4.5);
                    bluetooth.push(TraversalSample {
                        segment: seg.id.clone(),
                        exit_time: Timestamp(t),
                        travel_time_s: 3600.0 * seg.length_mi / out,
                    });
                }
            }
        }
    }

    // Weather: alternating dry/wet spells; readings on a fixed interval
    // beginning exactly at the period start so every event has coverage.
    let mut weather = Vec::new();
    {
        let mut rng = stream(config.seed, "weather", 0);
        let w = &config.weather;
        // The wet spell that ends soonest after the clock; spells are
        // generated in order as readings advance past them.
        let mut wet_start = i64::MAX;
        let mut wet_until = i64::MIN;
        let mut clock = period.start.0;
        let mut reading = period.start.0;
        while reading < period.end.0 {
            while w.rain_intensity > 0.0 && wet_until <= reading {
                let dry_mean_s = w.mean_dry_h * 3600.0 / w.rain_intensity;
                let dry: f64 = Exp::new(1.0 / dry_mean_s).expect("positive rate").sample(&mut rng);
                let wet: f64 = Exp::new(1.0 / (w.mean_wet_h * 3600.0))
                    .expect("positive rate")
                    .sample(&mut rng);
                wet_start = clock + dry as i64;
                wet_until = wet_start + (wet as i64).max(MINUTE);
                clock = wet_until;
            }
            let rainy = w.rain_intensity > 0.0 && reading >= wet_start && reading < wet_until;
            let visibility = if rainy { 1.0 + 8.5 * rng.gen::<f64>() } else { 10.0 };
            weather.push(WeatherRecord {
                timestamp: Timestamp(reading),
                rainy,
                visibility_mi: visibility,
            });
            reading += w.reading_interval_s;
        }
    }

    Ok(RawLogs { segments, bluetooth, phases, volumes, weather })
}

/// Selects the case position from member linear predictors, with
/// probability proportional to `exp(eta_j)`.
pub fn select_case(etas: &[f64], rng: &mut impl Rng) -> usize {
    assert!(!etas.is_empty(), "a stratum needs members");
    let total = math::log_sum_exp(etas);
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (j, &eta) in etas.iter().enumerate() {
        cum += math::exp(eta - total);
        if u < cum {
            return j;
        }
    }
    etas.len() - 1
}

/// The truth model's covariate vector for an event, if the moment is
/// usable (all slices resolved, enough Bluetooth samples).
fn truth_x(
    ctx: &FeatureContext,
    truth: &GroundTruth,
    segment: &str,
    t: Timestamp,
) -> Result<Option<Vec<f64>>, WorldError> {
    match ctx.event_features(segment, t)? {
        EventOutcome::Features(ef) => {
            if ef.min_sample_count() < MIN_CRASH_SAMPLES {
                return Ok(None);
            }
            let fv: &FeatureVector = &ef.slices[usize::from(truth.slice) - 1];
            let x = truth
                .covariates
                .iter()
                .map(|name| fv.get(name).expect("validated covariate name"))
                .collect();
            Ok(Some(x))
        }
        EventOutcome::Gap { .. } => Ok(None),
    }
}

/// Labels crashes on generated logs according to the configured mode.
///
/// Both modes only place crashes at moments whose features fully resolve,
/// so every emitted crash survives feature extraction downstream.
pub fn label_crashes(logs: &RawLogs, config: &WorldConfig) -> Result<Vec<CrashRecord>, WorldError> {
    config.validate()?;
    let ctx = FeatureContext::build(logs, &SpeedFilterConfig::default())?;
    let period = config.period();
    let truth = &config.truth;
    let slots_per_day = (DAY / (5 * MINUTE)) as i64;

    let mut crashes: Vec<CrashRecord> = Vec::new();
    match config.mode {
        GenerationMode::Conditional { n_strata, m } => {
            let weeks = config.weeks as usize;
            for i in 0..n_strata {
                let mut rng = stream(config.seed, "label", i as u64);
                let mut placed = false;
                'attempt: for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                    let seg = segment_id(rng.gen_range(0..config.n_segments));
                    let dow = rng.gen_range(0..7i64);
                    // Slot 4 onward keeps all four look-back slices inside
                    // the study period even in week zero.
                    let slot = rng.gen_range(4..slots_per_day);
                    // A distinct week for each member.
                    let mut week_pool: Vec<i64> = (0..weeks as i64).collect();
                    for j in 0..=m {
                        let pick = rng.gen_range(j..weeks);
                        week_pool.swap(j, pick);
                    }
                    let members: Vec<Timestamp> = week_pool[..=m]
                        .iter()
                        .map(|&w| Timestamp(w * WEEK + dow * DAY + slot * 5 * MINUTE))
                        .collect();
                    // Keep strata clear of already-placed crashes so the
                    // downstream exclusion window rarely starves matching.
                    for t in &members {
                        let near = crashes.iter().any(|c| {
                            c.segment == seg && (c.timestamp.0 - t.0).abs() <= DEFAULT_EXCLUSION_S + 5 * MINUTE
                        });
                        if near {
                            continue 'attempt;
                        }
                    }
                    let mut etas = Vec::with_capacity(m + 1);
                    let mut xs = Vec::with_capacity(m + 1);
                    for t in &members {
                        match truth_x(&ctx, truth, &seg, *t)? {
                            Some(x) => xs.push(x),
                            None => continue 'attempt,
                        }
                    }
                    // Stratum-level coefficient scatter for random terms.
                    let mut beta_eff = truth.beta.clone();
                    for (r, name) in truth.random.iter().enumerate() {
                        let k = truth
                            .covariates
                            .iter()
                            .position(|c| c == name)
                            .expect("validated random name");
                        let z: f64 = StandardNormal.sample(&mut rng);
                        beta_eff[k] += truth.sigma[r] * z;
                    }
                    for x in &xs {
                        let eta: f64 = x.iter().zip(&beta_eff).map(|(a, b)| a * b).sum();
                        etas.push(eta);
                    }
                    let case = select_case(&etas, &mut rng);
                    crashes.push(CrashRecord { segment: seg, timestamp: members[case] });
                    placed = true;
                    break;
                }
                if !placed {
                    return Err(WorldError::Exhausted { stratum: i });
                }
            }
        }
        GenerationMode::Marginal { alpha } => {
            for k in 0..config.n_segments {
                let seg = segment_id(k);
                let mut rng = stream(config.seed, "marginal", k as u64);
                let mut t = period.start.0 + 4 * 5 * MINUTE;
                while t < period.end.0 {
                    let moment = Timestamp(t);
                    if let Some(x) = truth_x(&ctx, truth, &seg, moment)? {
                        let mut eta = alpha;
                        for (r, name) in truth.random.iter().enumerate() {
                            if name == INTERCEPT_NAME {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                eta += truth.sigma[r] * z;
                            }
                        }
                        for (j, name) in truth.covariates.iter().enumerate() {
                            let mut b = truth.beta[j];
                            if let Some(r) = truth.random.iter().position(|n| n == name) {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                b += truth.sigma[r] * z;
                            }
                            eta += b * x[j];
                        }
                        if rng.gen::<f64>() < math::logistic(eta) {
                            crashes.push(CrashRecord { segment: seg.clone(), timestamp: moment });
                        }
                    }
                    t += 5 * MINUTE;
                }
            }
        }
    }
    crashes.sort_unstable();
    Ok(crashes)
}

/// Generates a complete synthetic world: logs, crash labels, and the
/// truth manifest.
pub fn generate(config: &WorldConfig) -> Result<SyntheticWorld, WorldError> {
    let logs = generate_logs(config)?;
    let crashes = label_crashes(&logs, config)?;
    let manifest = TruthManifest {
        mode: config.mode,
        covariates: config.truth.covariates.clone(),
        beta: config.truth.beta.clone(),
        random: config.truth.random.clone(),
        sigma: config.truth.sigma.clone(),
        slice: config.truth.slice,
        seed: config.seed,
    };
    Ok(SyntheticWorld { logs, crashes, manifest, period: config.period() })
}

/// Draws matched strata directly on standard-normal covariates with the
/// case selected by softmax — the exact generative inverse of the matched
/// conditional likelihood, with no traffic simulation in between. Used for
/// coefficient-recovery studies where the likelihood must align exactly.
///
/// `random` lists `(coefficient index, scatter standard deviation)` pairs;
/// each stratum draws its own coefficient offsets.
pub fn conditional_strata(
    n_strata: usize,
    stratum_size: usize,
    beta: &[f64],
    random: &[(usize, f64)],
    seed: u64,
) -> StratifiedDesign {
    assert!(stratum_size >= 2, "a stratum needs a case and at least one control");
    assert!(random.iter().all(|&(k, s)| k < beta.len() && s > 0.0), "valid random terms");
    let n_coef = beta.len();
    let mut x = Vec::with_capacity(n_strata * stratum_size * n_coef);
    let mut case = Vec::with_capacity(n_strata);
    for i in 0..n_strata {
        let mut rng = stream(seed, "toy-strata", i as u64);
        let start = x.len();
        for _ in 0..stratum_size * n_coef {
            let z: f64 = StandardNormal.sample(&mut rng);
            x.push(z);
        }
        let mut beta_eff: Vec<f64> = beta.to_vec();
        for &(k, sigma) in random {
            let z: f64 = StandardNormal.sample(&mut rng);
            beta_eff[k] += sigma * z;
        }
        let etas: Vec<f64> = (0..stratum_size)
            .map(|j| {
                let row = &x[start + j * n_coef..start + (j + 1) * n_coef];
                row.iter().zip(&beta_eff).map(|(a, b)| a * b).sum()
            })
            .collect();
        case.push(select_case(&etas, &mut rng));
    }
    StratifiedDesign::new(n_strata, stratum_size, n_coef, x, case)
}
