//! `fit`: prepared dataset + model + sampler → chains and posterior summary.
//!
//! Runs the adaptive Metropolis-within-Gibbs chains on the selected rows
//! (training strata by default) and writes every retained draw to
//! `chains.csv` plus a `summary.json` holding the posterior summary table,
//! the pooled posterior mean, and the information criterion.

use std::path::Path;

use arterial_core::evaluation::{deviance, dic_from};
use arterial_core::mcmc::{fit_with, summarize, FitData};

use crate::artifacts::FitSummary;
use crate::commands::write_json;
use crate::config::{from_value, load_json, require_file, resolve_path, resolve_seed, FitConfig};
use crate::csvio;
use crate::error::CliError;
use crate::runner::ThreadedRunner;
use crate::table::read_dataset;

/// Runs the command.
pub fn run(
    config_path: &Path,
    out: &Path,
    seed_flag: Option<u64>,
    slice_flag: Option<u8>,
    threads: usize,
) -> Result<(), CliError> {
    let raw = load_json(config_path)?;
    let seed = resolve_seed(&raw, "/sampler/seed", seed_flag)?;
    let mut cfg: FitConfig = from_value(config_path, raw)?;
    cfg.sampler.seed = seed;
    if let Some(slice) = slice_flag {
        cfg.model.slice = slice;
    }
    cfg.model.validate()?;
    cfg.sampler.validate()?;

    let dataset_path = resolve_path(config_path, &cfg.dataset);
    require_file(&dataset_path)?;
    let table = read_dataset(&dataset_path)?;
    let data = table.design(&cfg.model, cfg.split.to_option())?;
    let n_units = match &data {
        FitData::Stratified(d) => d.n_strata(),
        FitData::Pooled(d) => d.n_obs(),
    };
    if n_units == 0 {
        return Err(CliError::runtime("no rows selected for fitting"));
    }

    let set = fit_with(&cfg.model, &data, &cfg.sampler, &ThreadedRunner::new(threads))?;
    let parameters = summarize(&cfg.model, &set);
    let posterior_mean = set.posterior_mean();
    let d_bar = set.mean_deviance();
    let dic = dic_from(d_bar, deviance(&cfg.model, &data, &posterior_mean)?);

    std::fs::create_dir_all(out)?;
    csvio::write_chains(&out.join("chains.csv"), &cfg.model, &set)?;
    let summary = FitSummary {
        model: cfg.model,
        sampler: cfg.sampler,
        split: cfg.split,
        n_units,
        n_draws_per_chain: set.n_draws(),
        parameters,
        posterior_mean,
        d_bar,
        dic,
        accept_beta: set.chains.iter().map(|c| c.accept_beta.clone()).collect(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(())
}
