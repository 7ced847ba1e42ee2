//! JSON artifact schemas shared between commands, and the markdown report.
//!
//! `fit` writes a [`FitSummary`] that carries everything `evaluate` needs:
//! the model, the posterior summary table, the pooled posterior mean (the
//! plug-in point for the information criterion and for scoring), and the
//! posterior mean deviance. `evaluate` turns that plus the dataset into an
//! [`EvaluationReport`]; `sweep` emits one [`SweepRow`] per fitted
//! combination.

use arterial_core::case_control::Split;
use arterial_core::evaluation::DicReport;
use arterial_core::likelihoods::{ModelSpec, ParameterState};
use arterial_core::mcmc::{ParameterSummary, SamplerConfig};
use serde::{Deserialize, Serialize};

/// Which rows of the dataset a fit used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitChoice {
    /// Training strata only (the default).
    #[default]
    Train,
    /// Validation strata only.
    Validation,
    /// Every stratum.
    All,
}

impl SplitChoice {
    /// The core-side filter this choice maps to.
    pub fn to_option(self) -> Option<Split> {
        match self {
            SplitChoice::Train => Some(Split::Train),
            SplitChoice::Validation => Some(Split::Validation),
            SplitChoice::All => None,
        }
    }
}

/// `summary.json`: the posterior in reporting form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    /// The fitted model.
    pub model: ModelSpec,
    /// Sampler settings the chains ran with.
    pub sampler: SamplerConfig,
    /// Which dataset rows were fitted.
    pub split: SplitChoice,
    /// Number of likelihood units (strata or observations) fitted.
    pub n_units: usize,
    /// Retained draws per chain.
    pub n_draws_per_chain: usize,
    /// Per-parameter posterior summaries: mean, sd, 95% interval bounds,
    /// hazard ratio for coefficients, and the between-chain diagnostic.
    pub parameters: Vec<ParameterSummary>,
    /// Pooled posterior mean of every sampled quantity (the plug-in point).
    pub posterior_mean: ParameterState,
    /// Posterior mean deviance over all retained draws.
    pub d_bar: f64,
    /// Information criterion on the fitted rows.
    pub dic: DicReport,
    /// Post-burn-in acceptance rate per chain per coefficient.
    pub accept_beta: Vec<Vec<f64>>,
}

/// `report.json`: fit quality and classification performance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Information criterion (`d_bar + p_d`).
    pub dic: f64,
    /// Posterior mean deviance.
    pub d_bar: f64,
    /// Effective number of parameters.
    pub p_d: f64,
    /// Area under the ROC curve on the training strata.
    pub training_auc: f64,
    /// Area under the ROC curve on the validation strata.
    pub validation_auc: f64,
    /// Validation ROC points as `(false positive rate, true positive rate)`,
    /// swept from `(0,0)` to `(1,1)`.
    pub roc: Vec<(f64, f64)>,
    /// The fitted model's posterior summary table.
    pub parameters: Vec<ParameterSummary>,
}

/// One fitted combination in a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    /// Covariates in the model.
    pub covariates: Vec<String>,
    /// The subset with random (unit-level) coefficients.
    pub random: Vec<String>,
    /// Model family fitted.
    pub family: String,
    /// Posterior mean deviance.
    pub d_bar: f64,
    /// Effective number of parameters.
    pub p_d: f64,
    /// Information criterion.
    pub dic: f64,
    /// Training AUC.
    pub training_auc: f64,
    /// Validation AUC.
    pub validation_auc: f64,
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn fmt_opt3(v: Option<f64>) -> String {
    v.map_or_else(|| "—".to_string(), fmt3)
}

/// Renders the markdown parameter table used by both `summary`-style and
/// `report`-style outputs.
pub fn parameter_table_md(parameters: &[ParameterSummary]) -> String {
    let mut out = String::new();
    out.push_str("| Parameter | Mean | SD | 2.5% | 97.5% | Hazard ratio | R-hat |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for p in parameters {
        let name = if p.significant { format!("{}*", p.name) } else { p.name.clone() };
        out.push_str(&format!(
            "| {name} | {} | {} | {} | {} | {} | {} |\n",
            fmt3(p.mean),
            fmt3(p.sd),
            fmt3(p.lower),
            fmt3(p.upper),
            fmt_opt3(p.hazard_ratio),
            fmt_opt3(p.rhat),
        ));
    }
    out.push_str("\n\\* 95% credible interval excludes zero.\n");
    out
}

/// Renders `report.md`.
pub fn report_md(model: &ModelSpec, report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str("# Model evaluation\n\n");
    out.push_str(&format!(
        "Family `{}`, slice {}, covariates: {}.\n\n",
        model.family.name(),
        model.slice,
        model
            .covariates
            .iter()
            .map(|c| format!("`{c}`"))
            .collect::<Vec<_>>()
            .join(", ")
    ));

    out.push_str("## Posterior summary\n\n");
    out.push_str(&parameter_table_md(&report.parameters));

    out.push_str("\n## Model fit\n\n");
    out.push_str("| D-bar | pD | DIC |\n|---|---|---|\n");
    out.push_str(&format!(
        "| {} | {} | {} |\n",
        fmt3(report.d_bar),
        fmt3(report.p_d),
        fmt3(report.dic)
    ));

    out.push_str("\n## Classification\n\n");
    out.push_str("| Split | AUC |\n|---|---|\n");
    out.push_str(&format!("| Training | {} |\n", fmt3(report.training_auc)));
    out.push_str(&format!("| Validation | {} |\n", fmt3(report.validation_auc)));
    out
}
