//! `sweep`: fit a list of fixed/random covariate combinations and rank
//! them by validation AUC.
//!
//! Each combination is fitted on the training strata with the shared
//! sampler settings; a combination with an empty `random` list uses the
//! fixed-coefficient conditional family, any other the random-parameter
//! one. Rows are sorted by validation AUC descending (ties: DIC ascending,
//! then name) and written as `sweep.csv` and `sweep.json`.

use std::path::Path;

use arterial_core::case_control::Split;
use arterial_core::evaluation::{auc, deviance, dic_from, score_events};
use arterial_core::likelihoods::{Family, ModelSpec};
use arterial_core::mcmc::fit_with;

use crate::artifacts::SweepRow;
use crate::commands::write_json;
use crate::config::{from_value, load_json, require_file, resolve_path, resolve_seed, SweepConfig};
use crate::error::CliError;
use crate::runner::ThreadedRunner;
use crate::table::read_dataset;

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    w.write_record([
        "covariates",
        "random",
        "family",
        "d_bar",
        "p_d",
        "dic",
        "training_auc",
        "validation_auc",
    ])?;
    for r in rows {
        w.write_record([
            r.covariates.join("+").as_str(),
            &r.random.join("+"),
            &r.family,
            &r.d_bar.to_string(),
            &r.p_d.to_string(),
            &r.dic.to_string(),
            &r.training_auc.to_string(),
            &r.validation_auc.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

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
    let mut cfg: SweepConfig = from_value(config_path, raw)?;
    cfg.sampler.seed = seed;
    if let Some(slice) = slice_flag {
        cfg.slice = slice;
    }
    if cfg.combinations.is_empty() {
        return Err(CliError::config("combinations must list at least one model"));
    }
    cfg.sampler.validate()?;

    let dataset_path = resolve_path(config_path, &cfg.dataset);
    require_file(&dataset_path)?;
    let table = read_dataset(&dataset_path)?;
    let runner = ThreadedRunner::new(threads);

    let mut rows = Vec::with_capacity(cfg.combinations.len());
    for combo in &cfg.combinations {
        let family = if combo.random.is_empty() {
            Family::ConditionalLogistic
        } else {
            Family::RpConditionalLogistic
        };
        let model = ModelSpec {
            family,
            covariates: combo.covariates.clone(),
            random: combo.random.clone(),
            slice: cfg.slice,
            priors: cfg.priors,
            standardize: cfg.standardize,
        };
        model.validate()?;

        let train = table.design(&model, Some(Split::Train))?;
        let valid = table.design(&model, Some(Split::Validation))?;
        let set = fit_with(&model, &train, &cfg.sampler, &runner)?;
        let post = set.posterior_mean();
        let dic = dic_from(set.mean_deviance(), deviance(&model, &train, &post)?);
        let train_scored = score_events(&model, &post.beta, &train, cfg.score_mode)?;
        let valid_scored = score_events(&model, &post.beta, &valid, cfg.score_mode)?;
        rows.push(SweepRow {
            covariates: combo.covariates.clone(),
            random: combo.random.clone(),
            family: family.name().to_string(),
            d_bar: dic.d_bar,
            p_d: dic.p_d,
            dic: dic.dic,
            training_auc: auc(&train_scored.scores, &train_scored.labels)?,
            validation_auc: auc(&valid_scored.scores, &valid_scored.labels)?,
        });
    }

    rows.sort_by(|a, b| {
        b.validation_auc
            .total_cmp(&a.validation_auc)
            .then(a.dic.total_cmp(&b.dic))
            .then_with(|| a.covariates.cmp(&b.covariates))
            .then_with(|| a.random.cmp(&b.random))
    });

    std::fs::create_dir_all(out)?;
    write_sweep_csv(&out.join("sweep.csv"), &rows)?;
    write_json(&out.join("sweep.json"), &rows)?;
    Ok(())
}
