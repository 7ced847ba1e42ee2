//! The prepared dataset as a flat table — `dataset.csv` in memory.
//!
//! One row per event, strata contiguous with the case row first. The fixed
//! columns are `stratum_id`, `is_crash`, `split`, `segment_id`, and
//! `timestamp`; every remaining column is a covariate named `<var>_s<k>`
//! for slice `k` in 1–4, slice-major. `fit`, `evaluate`, and `sweep` read
//! this table back and build model designs from it by column name.

use std::path::Path;

use arterial_core::case_control::{Dataset, Split};
use arterial_core::features::{COVARIATE_NAMES, SLICE_COUNT};
use arterial_core::likelihoods::{ModelSpec, PooledDesign, StratifiedDesign};
use arterial_core::mcmc::FitData;
use arterial_core::time::Timestamp;

use crate::error::CliError;
use crate::iso::{format_ts, parse_ts};

/// One event row.
#[derive(Debug, Clone)]
pub struct EventRow {
    /// Stratum the event belongs to.
    pub stratum_id: usize,
    /// Whether this is the case row.
    pub is_crash: bool,
    /// Train/validation assignment of the whole stratum.
    pub split: Split,
    /// Segment the stratum is matched on.
    pub segment_id: String,
    /// Event moment.
    pub timestamp: Timestamp,
    /// Covariate values, parallel to the table's covariate columns.
    pub values: Vec<f64>,
}

/// The whole table: covariate column names plus rows in stratum-major
/// order.
#[derive(Debug, Clone)]
pub struct DatasetTable {
    /// Covariate column names (`<var>_s<k>`).
    pub columns: Vec<String>,
    /// Event rows, strata contiguous.
    pub rows: Vec<EventRow>,
}

/// The covariate column names in file order: slice-major, variables in
/// their canonical order within each slice.
pub fn covariate_columns() -> Vec<String> {
    let mut cols = Vec::with_capacity(SLICE_COUNT * COVARIATE_NAMES.len());
    for slice in 1..=SLICE_COUNT {
        for name in COVARIATE_NAMES {
            cols.push(format!("{name}_s{slice}"));
        }
    }
    cols
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Validation => "validation",
    }
}

fn parse_split(s: &str) -> Option<Split> {
    match s {
        "train" => Some(Split::Train),
        "validation" => Some(Split::Validation),
        _ => None,
    }
}

/// Writes a prepared, split dataset as `dataset.csv`.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), CliError> {
    assert_eq!(dataset.split.len(), dataset.strata.len(), "dataset must be split before writing");
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;

    let mut header =
        vec!["stratum_id".to_string(), "is_crash".to_string(), "split".to_string(),
             "segment_id".to_string(), "timestamp".to_string()];
    header.extend(covariate_columns());
    w.write_record(&header)?;

    for (stratum, &split) in dataset.strata.iter().zip(&dataset.split) {
        for event in stratum.events() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(stratum.id.to_string());
            rec.push(if event.is_crash { "true" } else { "false" }.to_string());
            rec.push(split_name(split).to_string());
            rec.push(event.segment_id.clone());
            rec.push(format_ts(event.timestamp));
            for slice in &event.slices {
                for v in slice.values() {
                    rec.push(v.to_string());
                }
            }
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Reads `dataset.csv` back. Checks the fixed columns, that strata are
/// contiguous blocks of uniform size, and that each has exactly one case.
pub fn read_dataset(path: &Path) -> Result<DatasetTable, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;

    const FIXED: [&str; 5] = ["stratum_id", "is_crash", "split", "segment_id", "timestamp"];
    let header = reader
        .headers()
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?
        .clone();
    let got: Vec<&str> = header.iter().take(FIXED.len()).collect();
    if got != FIXED {
        return Err(CliError::runtime(format!(
            "{}: expected leading columns {}, found {}",
            path.display(),
            FIXED.join(","),
            got.join(",")
        )));
    }
    let columns: Vec<String> = header.iter().skip(FIXED.len()).map(String::from).collect();

    let err = |row: usize, msg: String| {
        CliError::runtime(format!("{} line {}: {msg}", path.display(), row + 2))
    };
    let mut rows = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(row, e.to_string()))?;
        if rec.len() != FIXED.len() + columns.len() {
            return Err(err(row, format!("expected {} fields", FIXED.len() + columns.len())));
        }
        let stratum_id: usize = rec[0]
            .parse()
            .map_err(|_| err(row, format!("bad stratum_id {:?}", &rec[0])))?;
        let is_crash = match &rec[1] {
            "true" => true,
            "false" => false,
            other => return Err(err(row, format!("bad is_crash {other:?}"))),
        };
        let split = parse_split(&rec[2])
            .ok_or_else(|| err(row, format!("bad split {:?}", &rec[2])))?;
        let timestamp = parse_ts(&rec[4]).map_err(|e| err(row, e))?;
        let mut values = Vec::with_capacity(columns.len());
        for (j, name) in columns.iter().enumerate() {
            let raw = &rec[FIXED.len() + j];
            let v: f64 =
                raw.parse().map_err(|_| err(row, format!("bad {name} {raw:?}")))?;
            values.push(v);
        }
        rows.push(EventRow {
            stratum_id,
            is_crash,
            split,
            segment_id: rec[3].to_string(),
            timestamp,
            values,
        });
    }

    let table = DatasetTable { columns, rows };
    table.check_strata(path)?;
    Ok(table)
}

/// Per-stratum views of the table, in row order.
pub struct StratumRows<'a> {
    /// Original stratum identifier.
    pub id: usize,
    /// Split label shared by the whole stratum.
    pub split: Split,
    /// The stratum's rows, case included.
    pub rows: &'a [EventRow],
}

impl DatasetTable {
    /// Contiguous stratum blocks.
    pub fn strata(&self) -> Vec<StratumRows<'_>> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.rows.len() {
            let id = self.rows[start].stratum_id;
            let mut end = start + 1;
            while end < self.rows.len() && self.rows[end].stratum_id == id {
                end += 1;
            }
            out.push(StratumRows { id, split: self.rows[start].split, rows: &self.rows[start..end] });
            start = end;
        }
        out
    }

    /// Structural checks done once at read time.
    fn check_strata(&self, path: &Path) -> Result<(), CliError> {
        let strata = self.strata();
        let mut seen = std::collections::HashSet::new();
        let mut size = None;
        for s in &strata {
            if !seen.insert(s.id) {
                return Err(CliError::runtime(format!(
                    "{}: stratum {} appears in non-contiguous blocks",
                    path.display(),
                    s.id
                )));
            }
            match size {
                None => size = Some(s.rows.len()),
                Some(n) if n != s.rows.len() => {
                    return Err(CliError::runtime(format!(
                        "{}: stratum {} has {} rows, expected {n}",
                        path.display(),
                        s.id,
                        s.rows.len()
                    )));
                }
                _ => {}
            }
            let cases = s.rows.iter().filter(|r| r.is_crash).count();
            if cases != 1 {
                return Err(CliError::runtime(format!(
                    "{}: stratum {} has {cases} case rows, expected exactly 1",
                    path.display(),
                    s.id
                )));
            }
            if s.rows.iter().any(|r| r.split != s.split) {
                return Err(CliError::runtime(format!(
                    "{}: stratum {} mixes split labels",
                    path.display(),
                    s.id
                )));
            }
        }
        Ok(())
    }

    /// Index of each model covariate's column at the model's slice.
    fn column_indices(&self, spec: &ModelSpec) -> Result<Vec<usize>, CliError> {
        spec.covariates
            .iter()
            .map(|name| {
                let col = format!("{name}_s{}", spec.slice);
                self.columns.iter().position(|c| *c == col).ok_or_else(|| {
                    CliError::config(format!("dataset has no column {col:?} for model covariate {name:?}"))
                })
            })
            .collect()
    }

    /// Builds the design the model family needs from the rows with the
    /// given split label (`None` = every row).
    pub fn design(&self, spec: &ModelSpec, split: Option<Split>) -> Result<FitData, CliError> {
        let idx = self.column_indices(spec)?;
        let strata: Vec<StratumRows<'_>> =
            self.strata().into_iter().filter(|s| split.is_none_or(|w| s.split == w)).collect();

        if spec.family.is_conditional() {
            let stratum_size = strata.first().map_or(0, |s| s.rows.len());
            let mut x = Vec::with_capacity(strata.len() * stratum_size * idx.len());
            let mut case = Vec::with_capacity(strata.len());
            for s in &strata {
                let case_pos = s.rows.iter().position(|r| r.is_crash).expect("checked at read");
                case.push(case_pos);
                for r in s.rows {
                    for &j in &idx {
                        x.push(r.values[j]);
                    }
                }
            }
            Ok(FitData::Stratified(StratifiedDesign::new(
                strata.len(),
                stratum_size,
                idx.len(),
                x,
                case,
            )))
        } else {
            let n_obs: usize = strata.iter().map(|s| s.rows.len()).sum();
            let mut x = Vec::with_capacity(n_obs * (idx.len() + 1));
            let mut y = Vec::with_capacity(n_obs);
            for s in &strata {
                for r in s.rows {
                    x.push(1.0);
                    for &j in &idx {
                        x.push(r.values[j]);
                    }
                    y.push(r.is_crash);
                }
            }
            Ok(FitData::Pooled(PooledDesign::new(n_obs, idx.len() + 1, x, y)))
        }
    }

    /// Number of strata with the given split label (`None` = all).
    pub fn stratum_count(&self, split: Option<Split>) -> usize {
        self.strata().iter().filter(|s| split.is_none_or(|w| s.split == w)).count()
    }
}
