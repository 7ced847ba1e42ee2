//! `prepare`: detector logs + crash log → matched case-control dataset.
//!
//! Builds covariates from the raw logs, matches each crash to `m` controls
//! from the same segment, clock time, and day of week in other weeks,
//! assigns whole strata to training or validation, and writes
//! `dataset.csv` plus an `attrition.json` audit of every rejected crash.

use std::path::Path;

use arterial_core::case_control::{build_dataset, split_dataset, Attrition, Split};
use arterial_core::features::FeatureContext;
use serde::{Deserialize, Serialize};

use crate::commands::write_json;
use crate::config::{from_value, load_json, resolve_seed, PrepareConfig};
use crate::csvio;
use crate::error::CliError;
use crate::table::write_dataset;

/// `attrition.json`: where every input crash went.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttritionReport {
    /// Crashes in the input log.
    pub crashes: usize,
    /// Strata built.
    pub built: usize,
    /// Rejected: fewer control candidates than `m`.
    pub too_few_candidates: usize,
    /// Rejected: a slice with fewer than the minimum speed samples.
    pub low_bluetooth_sampling: usize,
    /// Rejected: a slice with no volume, phase, or weather coverage.
    pub missing_source: usize,
    /// Events kept despite stale weather (staleness is not a rejection).
    pub stale_weather_events: usize,
    /// Controls per case in every stratum.
    pub controls_per_case: usize,
    /// Strata assigned to training.
    pub train_strata: usize,
    /// Strata assigned to validation.
    pub validation_strata: usize,
}

impl AttritionReport {
    fn new(attrition: &Attrition, m: usize, train: usize, validation: usize) -> AttritionReport {
        AttritionReport {
            crashes: attrition.crashes,
            built: attrition.built,
            too_few_candidates: attrition.too_few_candidates,
            low_bluetooth_sampling: attrition.low_bluetooth_sampling,
            missing_source: attrition.missing_source,
            stale_weather_events: attrition.stale_weather_events,
            controls_per_case: m,
            train_strata: train,
            validation_strata: validation,
        }
    }
}

/// Runs the command.
pub fn run(config_path: &Path, out: &Path, seed_flag: Option<u64>) -> Result<(), CliError> {
    let raw = load_json(config_path)?;
    let seed = resolve_seed(&raw, "/seed", seed_flag)?;
    let mut cfg: PrepareConfig = from_value(config_path, raw)?;
    cfg.validate()?;
    cfg.resolve_inputs(config_path)?;
    let period = cfg.period.to_window()?;

    let logs =
        csvio::read_logs(&cfg.segments, &cfg.bluetooth, &cfg.phases, &cfg.volumes, &cfg.weather)?;
    let crashes = csvio::read_crashes(&cfg.crashes)?;

    let ctx = FeatureContext::build(&logs, &cfg.filter)?;
    let (mut dataset, attrition) = build_dataset(&ctx, &crashes, period, &cfg.matching, seed)?;

    std::fs::create_dir_all(out)?;
    if dataset.strata.is_empty() {
        // Write the audit trail anyway, then fail: nothing downstream can
        // use an empty dataset.
        write_dataset(&out.join("dataset.csv"), &dataset)?;
        write_json(
            &out.join("attrition.json"),
            &AttritionReport::new(&attrition, cfg.matching.m, 0, 0),
        )?;
        return Err(CliError::runtime(
            "no stratum survived matching; attrition.json has the breakdown",
        ));
    }

    split_dataset(&mut dataset, cfg.split_fraction, seed)?;
    write_dataset(&out.join("dataset.csv"), &dataset)?;
    write_json(
        &out.join("attrition.json"),
        &AttritionReport::new(
            &attrition,
            cfg.matching.m,
            dataset.count(Split::Train),
            dataset.count(Split::Validation),
        ),
    )?;
    Ok(())
}
