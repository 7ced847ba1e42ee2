//! `evaluate`: fitted summary + dataset → DIC, ROC/AUC, report tables.
//!
//! Recomputes the plug-in deviance on the rows the fit used, scores every
//! training and validation event at the posterior-mean coefficients
//! (adjusted odds ratios for the conditional families, predicted
//! probabilities for the pooled one), and writes `report.json`,
//! `report.md`, and `roc.csv`.

use std::path::Path;

use arterial_core::case_control::Split;
use arterial_core::evaluation::{auc, deviance, dic_from, roc_points, score_events};

use crate::artifacts::{report_md, EvaluationReport, FitSummary};
use crate::commands::write_json;
use crate::config::{from_value, load_json, require_file, resolve_path, EvaluateConfig};
use crate::csvio;
use crate::error::CliError;
use crate::table::read_dataset;

/// Runs the command.
pub fn run(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let raw = load_json(config_path)?;
    let cfg: EvaluateConfig = from_value(config_path, raw)?;
    let dataset_path = resolve_path(config_path, &cfg.dataset);
    let summary_path = resolve_path(config_path, &cfg.summary);
    require_file(&dataset_path)?;
    require_file(&summary_path)?;

    let text = std::fs::read_to_string(&summary_path)?;
    let summary: FitSummary = serde_json::from_str(&text)
        .map_err(|e| CliError::runtime(format!("{}: {e}", summary_path.display())))?;
    // The artifact was written by `fit`, so an invalid model in it is a
    // damaged input, not a configuration mistake.
    summary
        .model
        .validate()
        .map_err(|e| CliError::runtime(format!("{}: {e}", summary_path.display())))?;

    let table = read_dataset(&dataset_path)?;
    let fitted = table.design(&summary.model, summary.split.to_option())?;
    let dic = dic_from(summary.d_bar, deviance(&summary.model, &fitted, &summary.posterior_mean)?);

    let beta = &summary.posterior_mean.beta;
    let train = table.design(&summary.model, Some(Split::Train))?;
    let valid = table.design(&summary.model, Some(Split::Validation))?;
    let train_scored = score_events(&summary.model, beta, &train, cfg.score_mode)?;
    let valid_scored = score_events(&summary.model, beta, &valid, cfg.score_mode)?;
    let training_auc = auc(&train_scored.scores, &train_scored.labels)?;
    let validation_auc = auc(&valid_scored.scores, &valid_scored.labels)?;
    let train_roc = roc_points(&train_scored.scores, &train_scored.labels)?;
    let valid_roc = roc_points(&valid_scored.scores, &valid_scored.labels)?;

    let report = EvaluationReport {
        dic: dic.dic,
        d_bar: dic.d_bar,
        p_d: dic.p_d,
        training_auc,
        validation_auc,
        roc: valid_roc.clone(),
        parameters: summary.parameters.clone(),
    };

    std::fs::create_dir_all(out)?;
    write_json(&out.join("report.json"), &report)?;
    std::fs::write(out.join("report.md"), report_md(&summary.model, &report))?;
    csvio::write_roc(&out.join("roc.csv"), &train_roc, &valid_roc)?;
    Ok(())
}
