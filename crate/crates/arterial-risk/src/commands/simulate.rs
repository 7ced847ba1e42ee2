//! `simulate`: generate a synthetic corridor.
//!
//! The config file is a world description (segment count, study weeks,
//! traffic/signal/weather processes, the generating risk model, and the
//! crash labeling mode). Outputs: the five detector log CSVs, the crash
//! log, and `truth.json` recording the generating coefficients so a later
//! fit can be checked against them.

use std::path::Path;

use arterial_core::synthetic_world::{generate, WorldConfig};

use crate::commands::write_json;
use crate::config::{from_value, load_json, resolve_seed};
use crate::csvio;
use crate::error::CliError;

/// Runs the command.
pub fn run(config_path: &Path, out: &Path, seed_flag: Option<u64>) -> Result<(), CliError> {
    let raw = load_json(config_path)?;
    let seed = resolve_seed(&raw, "/seed", seed_flag)?;
    let mut config: WorldConfig = from_value(config_path, raw)?;
    config.seed = seed;
    config.validate()?;

    let world = generate(&config)?;

    std::fs::create_dir_all(out)?;
    csvio::write_segments(&out.join("segments.csv"), &world.logs.segments)?;
    csvio::write_bluetooth(&out.join("bluetooth.csv"), &world.logs.bluetooth)?;
    csvio::write_phases(&out.join("phases.csv"), &world.logs.phases)?;
    csvio::write_volumes(&out.join("volumes.csv"), &world.logs.volumes)?;
    csvio::write_weather(&out.join("weather.csv"), &world.logs.weather)?;
    csvio::write_crashes(&out.join("crashes.csv"), &world.crashes)?;
    write_json(&out.join("truth.json"), &world.manifest)?;
    Ok(())
}
