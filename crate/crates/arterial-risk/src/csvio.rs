//! CSV readers and writers for every tabular artifact.
//!
//! All files carry a header row and are UTF-8. Readers check the header
//! against the documented schema and report the offending row on parse
//! failures; writers emit fields in a fixed order with floats in Rust's
//! shortest round-trip notation, so a rerun of the same command produces
//! byte-identical files.

use std::path::Path;

use arterial_core::case_control::CrashRecord;
use arterial_core::features::{
    Movement, PhaseInterval, RawLogs, Segment, TraversalSample, VolumeRecord, WeatherRecord,
};
use arterial_core::likelihoods::ModelSpec;
use arterial_core::mcmc::ChainSet;
use arterial_core::time::Timestamp;
use csv::{ReaderBuilder, StringRecord, Writer};

use crate::error::CliError;
use crate::iso::{format_ts, parse_ts};

/// Opens a CSV file and checks its header is exactly `expected`.
fn open_checked(path: &Path, expected: &[&str]) -> Result<csv::Reader<std::fs::File>, CliError> {
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(CliError::runtime(format!(
            "{}: expected header {}, found {}",
            path.display(),
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(reader)
}

/// One parse-error constructor with file/row context.
fn row_err(path: &Path, row: usize, msg: impl std::fmt::Display) -> CliError {
    // +2: data rows start after the header, and people count from 1.
    CliError::runtime(format!("{} line {}: {msg}", path.display(), row + 2))
}

fn field<'r>(rec: &'r StringRecord, idx: usize) -> &'r str {
    rec.get(idx).unwrap_or("")
}

fn parse_f64(path: &Path, row: usize, name: &str, s: &str) -> Result<f64, CliError> {
    s.parse::<f64>().map_err(|_| row_err(path, row, format!("bad {name} {s:?}")))
}

fn parse_bool(path: &Path, row: usize, name: &str, s: &str) -> Result<bool, CliError> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(row_err(path, row, format!("bad {name} {s:?} (expected true/false)"))),
    }
}

fn parse_time(path: &Path, row: usize, s: &str) -> Result<Timestamp, CliError> {
    parse_ts(s).map_err(|e| row_err(path, row, e))
}

fn parse_movement(path: &Path, row: usize, s: &str) -> Result<Movement, CliError> {
    Movement::parse(s).ok_or_else(|| row_err(path, row, format!("unknown movement {s:?}")))
}

/// Collects the records of `reader`, applying `parse` with row context.
fn read_rows<T>(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
    mut parse: impl FnMut(usize, &StringRecord) -> Result<T, CliError>,
) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| row_err(path, row, e))?;
        out.push(parse(row, &rec)?);
    }
    Ok(out)
}

fn writer(path: &Path) -> Result<Writer<std::fs::File>, CliError> {
    Writer::from_path(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn finish(mut w: Writer<std::fs::File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- segments

pub const SEGMENTS_HEADER: [&str; 5] = ["id", "length_mi", "speed_limit_mph", "up_int", "down_int"];

pub fn read_segments(path: &Path) -> Result<Vec<Segment>, CliError> {
    let mut r = open_checked(path, &SEGMENTS_HEADER)?;
    read_rows(path, &mut r, |row, rec| {
        Ok(Segment {
            id: field(rec, 0).to_string(),
            length_mi: parse_f64(path, row, "length_mi", field(rec, 1))?,
            speed_limit_mph: parse_f64(path, row, "speed_limit_mph", field(rec, 2))?,
            upstream: field(rec, 3).to_string(),
            downstream: field(rec, 4).to_string(),
        })
    })
}

pub fn write_segments(path: &Path, segments: &[Segment]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(SEGMENTS_HEADER)?;
    for s in segments {
        w.write_record([
            s.id.as_str(),
            &s.length_mi.to_string(),
            &s.speed_limit_mph.to_string(),
            &s.upstream,
            &s.downstream,
        ])?;
    }
    finish(w, path)
}

// --------------------------------------------------------------- bluetooth

pub const BLUETOOTH_HEADER: [&str; 3] = ["segment_id", "exit_time", "travel_time_s"];

pub fn read_bluetooth(path: &Path) -> Result<Vec<TraversalSample>, CliError> {
    let mut r = open_checked(path, &BLUETOOTH_HEADER)?;
    read_rows(path, &mut r, |row, rec| {
        Ok(TraversalSample {
            segment: field(rec, 0).to_string(),
            exit_time: parse_time(path, row, field(rec, 1))?,
            travel_time_s: parse_f64(path, row, "travel_time_s", field(rec, 2))?,
        })
    })
}

pub fn write_bluetooth(path: &Path, samples: &[TraversalSample]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(BLUETOOTH_HEADER)?;
    for s in samples {
        w.write_record([
            s.segment.as_str(),
            &format_ts(s.exit_time),
            &s.travel_time_s.to_string(),
        ])?;
    }
    finish(w, path)
}

// ------------------------------------------------------------------ phases

pub const PHASES_HEADER: [&str; 4] = ["intersection_id", "movement", "start", "end"];

pub fn read_phases(path: &Path) -> Result<Vec<PhaseInterval>, CliError> {
    let mut r = open_checked(path, &PHASES_HEADER)?;
    read_rows(path, &mut r, |row, rec| {
        Ok(PhaseInterval {
            intersection: field(rec, 0).to_string(),
            movement: parse_movement(path, row, field(rec, 1))?,
            start: parse_time(path, row, field(rec, 2))?,
            end: parse_time(path, row, field(rec, 3))?,
        })
    })
}

pub fn write_phases(path: &Path, phases: &[PhaseInterval]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(PHASES_HEADER)?;
    for p in phases {
        w.write_record([
            p.intersection.as_str(),
            p.movement.name(),
            &format_ts(p.start),
            &format_ts(p.end),
        ])?;
    }
    finish(w, path)
}

// ----------------------------------------------------------------- volumes

pub const VOLUMES_HEADER: [&str; 4] = ["intersection_id", "movement", "bin_start", "count"];

pub fn read_volumes(path: &Path) -> Result<Vec<VolumeRecord>, CliError> {
    let mut r = open_checked(path, &VOLUMES_HEADER)?;
    read_rows(path, &mut r, |row, rec| {
        let count: u32 = field(rec, 3)
            .parse()
            .map_err(|_| row_err(path, row, format!("bad count {:?}", field(rec, 3))))?;
        Ok(VolumeRecord {
            intersection: field(rec, 0).to_string(),
            movement: parse_movement(path, row, field(rec, 1))?,
            bin_start: parse_time(path, row, field(rec, 2))?,
            count,
        })
    })
}

pub fn write_volumes(path: &Path, volumes: &[VolumeRecord]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(VOLUMES_HEADER)?;
    for v in volumes {
        w.write_record([
            v.intersection.as_str(),
            v.movement.name(),
            &format_ts(v.bin_start),
            &v.count.to_string(),
        ])?;
    }
    finish(w, path)
}

// ----------------------------------------------------------------- weather

pub const WEATHER_HEADER: [&str; 3] = ["timestamp", "rainy", "visibility_mi"];

pub fn read_weather(path: &Path) -> Result<Vec<WeatherRecord>, CliError> {
    let mut r = open_checked(path, &WEATHER_HEADER)?;
    read_rows(path, &mut r, |row, rec| {
        Ok(WeatherRecord {
            timestamp: parse_time(path, row, field(rec, 0))?,
            rainy: parse_bool(path, row, "rainy", field(rec, 1))?,
            visibility_mi: parse_f64(path, row, "visibility_mi", field(rec, 2))?,
        })
    })
}

pub fn write_weather(path: &Path, weather: &[WeatherRecord]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(WEATHER_HEADER)?;
    for rec in weather {
        w.write_record([
            format_ts(rec.timestamp).as_str(),
            if rec.rainy { "true" } else { "false" },
            &rec.visibility_mi.to_string(),
        ])?;
    }
    finish(w, path)
}

// ----------------------------------------------------------------- crashes

pub const CRASHES_HEADER: [&str; 2] = ["segment_id", "timestamp"];

pub fn read_crashes(path: &Path) -> Result<Vec<CrashRecord>, CliError> {
    let mut r = open_checked(path, &CRASHES_HEADER)?;
    read_rows(path, &mut r, |row, rec| {
        Ok(CrashRecord {
            segment: field(rec, 0).to_string(),
            timestamp: parse_time(path, row, field(rec, 1))?,
        })
    })
}

pub fn write_crashes(path: &Path, crashes: &[CrashRecord]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(CRASHES_HEADER)?;
    for c in crashes {
        w.write_record([c.segment.as_str(), &format_ts(c.timestamp)])?;
    }
    finish(w, path)
}

/// Reads all five detector log files into one [`RawLogs`].
pub fn read_logs(
    segments: &Path,
    bluetooth: &Path,
    phases: &Path,
    volumes: &Path,
    weather: &Path,
) -> Result<RawLogs, CliError> {
    Ok(RawLogs {
        segments: read_segments(segments)?,
        bluetooth: read_bluetooth(bluetooth)?,
        phases: read_phases(phases)?,
        volumes: read_volumes(volumes)?,
        weather: read_weather(weather)?,
    })
}

// ------------------------------------------------------------------ chains

/// Writes the retained draws: one row per stored iteration, one column per
/// sampled scalar, with `chain` and `draw` (1-based within chain) leading.
pub fn write_chains(path: &Path, spec: &ModelSpec, set: &ChainSet) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(spec.coef_names());
    header.extend(spec.random.iter().map(|n| format!("sigma2_{n}")));
    header.push("deviance".to_string());
    w.write_record(&header)?;

    for (c, chain) in set.chains.iter().enumerate() {
        for d in 0..chain.n_draws {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(c.to_string());
            rec.push((d + 1).to_string());
            for k in 0..set.n_coef {
                rec.push(chain.beta[d * set.n_coef + k].to_string());
            }
            for k in 0..set.n_random {
                rec.push(chain.sigma2[d * set.n_random + k].to_string());
            }
            rec.push(chain.deviance[d].to_string());
            w.write_record(&rec)?;
        }
    }
    finish(w, path)
}

// --------------------------------------------------------------------- roc

/// Writes both ROC curves, labeled by split, as threshold-sweep points.
pub fn write_roc(
    path: &Path,
    training: &[(f64, f64)],
    validation: &[(f64, f64)],
) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["split", "false_positive_rate", "true_positive_rate"])?;
    for (split, points) in [("training", training), ("validation", validation)] {
        for &(fpr, tpr) in points {
            w.write_record([split, &fpr.to_string(), &tpr.to_string()])?;
        }
    }
    finish(w, path)
}
