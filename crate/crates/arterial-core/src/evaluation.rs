//! Model evaluation: deviance and DIC, event scoring, and ROC/AUC.
//!
//! Scores follow the plug-in convention: events are scored at the posterior
//! mean. For the conditional families each event is contrasted against its
//! stratum's control mean (leave-one-out for controls, so a control never
//! anchors its own reference), producing an odds ratio per event; the odds
//! ratios within a scored set are then divided by the set's maximum so the
//! final scores live in (0, 1]. The pooled family scores events by their
//! predicted probability directly, with deviations set to zero (new events
//! belong to units the fit never saw).
//!
//! The AUC is pairwise concordance with ties counted a half. ROC points are
//! emitted by sweeping every distinct score threshold; the trapezoidal area
//! under the counted curve reduces to exactly the same half-integer sum,
//! so the two routes agree bit for bit.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::likelihoods::{
    self, Family, ModelSpec, ParameterState, PooledDesign, StratifiedDesign,
};
use crate::math;
use crate::mcmc::{ChainSet, FitData};

/// Evaluation failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    /// AUC needs both a positive and a negative example.
    SingleClass,
    /// Scores were empty or their maximum was not a positive finite number.
    DegenerateScores,
    /// A score or label went non-finite.
    BadScore,
    /// Parameter state does not match the model/design shapes.
    ShapeMismatch(&'static str),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::SingleClass => write!(f, "scoring needs both classes present"),
            EvalError::DegenerateScores => write!(f, "no positive finite score to adjust by"),
            EvalError::BadScore => write!(f, "non-finite score"),
            EvalError::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
        }
    }
}

impl core::error::Error for EvalError {}

/// Deviance `−2 × log-likelihood` of a parameter state (prior excluded).
/// The conditional families use the matched likelihood; the pooled family
/// uses the Bernoulli likelihood. Deviations enter exactly as sampled.
pub fn deviance(
    spec: &ModelSpec,
    data: &FitData,
    state: &ParameterState,
) -> Result<f64, EvalError> {
    if state.beta.len() != spec.n_coef() {
        return Err(EvalError::ShapeMismatch("coefficient count"));
    }
    if state.phi.len() != spec.random.len() {
        return Err(EvalError::ShapeMismatch("random-block count"));
    }
    let random_idx = spec.random_indices();
    let ll = match (data, spec.family) {
        (FitData::Stratified(design), Family::ConditionalLogistic) => {
            likelihoods::conditional_loglik(design, &state.beta)
        }
        (FitData::Stratified(design), Family::RpConditionalLogistic) => {
            if state.phi.iter().any(|p| p.len() != design.n_strata()) {
                return Err(EvalError::ShapeMismatch("deviations per stratum"));
            }
            likelihoods::conditional_loglik_random(design, &state.beta, &random_idx, &state.phi)
        }
        (FitData::Pooled(design), Family::RpLogistic) => {
            if state.phi.iter().any(|p| p.len() != design.n_obs()) {
                return Err(EvalError::ShapeMismatch("deviations per observation"));
            }
            likelihoods::bernoulli_loglik_random(design, &state.beta, &random_idx, &state.phi)
        }
        _ => return Err(EvalError::ShapeMismatch("family/design kind")),
    };
    Ok(-2.0 * ll)
}

/// Deviance information criterion pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    /// Posterior mean deviance.
    pub d_bar: f64,
    /// Effective number of parameters `pD = D̄ − D(θ̄)`.
    pub p_d: f64,
    /// `DIC = D̄ + pD`.
    pub dic: f64,
}

/// Assembles the criterion from the mean deviance and the deviance at the
/// posterior mean.
pub fn dic_from(d_bar: f64, d_at_mean: f64) -> DicReport {
    let p_d = d_bar - d_at_mean;
    DicReport { d_bar, p_d, dic: d_bar + p_d }
}

/// DIC of a finished run: the stored per-draw deviances give `D̄`, and the
/// pooled posterior mean (coefficients, variances, and deviation means) is
/// plugged back into the likelihood for `D(θ̄)`.
pub fn dic(spec: &ModelSpec, data: &FitData, chains: &ChainSet) -> Result<DicReport, EvalError> {
    let d_bar = chains.mean_deviance();
    let d_at_mean = deviance(spec, data, &chains.posterior_mean())?;
    Ok(dic_from(d_bar, d_at_mean))
}

/// How a control's within-stratum reference mean is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Exclude the control being scored from its own reference (default);
    /// falls back to the full control mean when no other control exists.
    LeaveOneOut,
    /// Use the full control mean for every event.
    IncludeAll,
}

/// Scores with their case/control labels, in design order (stratum-major
/// for the conditional families).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEvents {
    /// One score per event; conditional scores are max-adjusted into (0, 1],
    /// pooled scores are predicted probabilities.
    pub scores: Vec<f64>,
    /// `true` for the case/crash rows.
    pub labels: Vec<bool>,
}

/// Divides every score by the maximum in place and returns that maximum.
/// Fails when the set is empty or the maximum is not a positive finite
/// number — an all-zero score set cannot be normalized.
pub fn adjust_by_max(scores: &mut [f64]) -> Result<f64, EvalError> {
    let mut max = f64::NEG_INFINITY;
    for &s in scores.iter() {
        if s.is_nan() {
            return Err(EvalError::BadScore);
        }
        if s > max {
            max = s;
        }
    }
    if !(max > 0.0) || !max.is_finite() {
        return Err(EvalError::DegenerateScores);
    }
    for s in scores.iter_mut() {
        *s /= max;
    }
    Ok(max)
}

fn score_stratified(
    design: &StratifiedDesign,
    beta: &[f64],
    mode: ScoreMode,
) -> Result<ScoredEvents, EvalError> {
    let size = design.stratum_size();
    let k = design.n_coef();
    let n_events = design.n_strata() * size;
    let mut scores = Vec::with_capacity(n_events);
    let mut labels = Vec::with_capacity(n_events);
    let mut mean = vec![0.0; k];
    for i in 0..design.n_strata() {
        let case = design.case_index(i);
        for j in 0..size {
            let exclude = match mode {
                ScoreMode::LeaveOneOut if j != case && size > 2 => Some(j),
                _ => None,
            };
            mean.fill(0.0);
            let mut count = 0.0;
            for c in 0..size {
                if c == case || Some(c) == exclude {
                    continue;
                }
                for (slot, &v) in mean.iter_mut().zip(design.row(i, c)) {
                    *slot += v;
                }
                count += 1.0;
            }
            for slot in mean.iter_mut() {
                *slot /= count;
            }
            scores.push(likelihoods::odds_ratio_vs_stratum_mean(beta, design.row(i, j), &mean));
            labels.push(j == case);
        }
    }
    adjust_by_max(&mut scores)?;
    Ok(ScoredEvents { scores, labels })
}

fn score_pooled(design: &PooledDesign, beta: &[f64]) -> ScoredEvents {
    let mut scores = Vec::with_capacity(design.n_obs());
    let mut labels = Vec::with_capacity(design.n_obs());
    for i in 0..design.n_obs() {
        scores.push(math::logistic(likelihoods::linear_predictor(beta, design.row(i))));
        labels.push(design.label(i));
    }
    ScoredEvents { scores, labels }
}

/// Scores every event in a design at the plug-in coefficients `beta`
/// (deviations are not used: scored events are treated as new units).
pub fn score_events(
    spec: &ModelSpec,
    beta: &[f64],
    data: &FitData,
    mode: ScoreMode,
) -> Result<ScoredEvents, EvalError> {
    if beta.len() != spec.n_coef() {
        return Err(EvalError::ShapeMismatch("coefficient count"));
    }
    match (data, spec.family.is_conditional()) {
        (FitData::Stratified(design), true) => {
            if design.n_coef() != beta.len() {
                return Err(EvalError::ShapeMismatch("design coefficient count"));
            }
            score_stratified(design, beta, mode)
        }
        (FitData::Pooled(design), false) => {
            if design.n_coef() != beta.len() {
                return Err(EvalError::ShapeMismatch("design coefficient count"));
            }
            Ok(score_pooled(design, beta))
        }
        _ => Err(EvalError::ShapeMismatch("family/design kind")),
    }
}

/// Average 1-based ranks with ties shared; `None` on non-finite scores.
fn tied_ranks(scores: &[f64]) -> Option<Vec<f64>> {
    if scores.iter().any(|s| !s.is_finite()) {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| f64::total_cmp(&scores[a], &scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut lo = 0;
    while lo < idx.len() {
        let mut hi = lo;
        while hi + 1 < idx.len() && scores[idx[hi + 1]] == scores[idx[lo]] {
            hi += 1;
        }
        // Ranks lo+1 ..= hi+1 share their average, a half-integer.
        let shared = (lo + hi) as f64 / 2.0 + 1.0;
        for &i in &idx[lo..=hi] {
            ranks[i] = shared;
        }
        lo = hi + 1;
    }
    Some(ranks)
}

/// Concordance AUC: the probability a random case outscores a random
/// control, ties counting one half. Computed from rank sums, which equals
/// the explicit pairwise count exactly (both are the same half-integer).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::ShapeMismatch("scores vs labels"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let ranks = tied_ranks(scores).ok_or(EvalError::BadScore)?;
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let n_pos = n_pos as f64;
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

/// Cumulative `(false positives, true positives)` at each distinct score
/// threshold, in count space, starting from `(0, 0)`.
fn roc_counts(scores: &[f64], labels: &[bool]) -> Result<(Vec<(u64, u64)>, u64, u64), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::ShapeMismatch("scores vs labels"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::BadScore);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| f64::total_cmp(&scores[b], &scores[a]));
    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push((0, 0));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < idx.len() {
        let threshold = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == threshold {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp, tp));
    }
    Ok((points, n_pos, n_neg))
}

/// ROC points `(false positive rate, true positive rate)`, starting at
/// `(0, 0)` and sweeping each distinct score threshold downward to `(1, 1)`.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, EvalError> {
    let (counts, n_pos, n_neg) = roc_counts(scores, labels)?;
    Ok(counts
        .into_iter()
        .map(|(fp, tp)| (fp as f64 / n_neg as f64, tp as f64 / n_pos as f64))
        .collect())
}

/// Trapezoidal area under the ROC, computed in count space (every term a
/// half-integer) so that it agrees with [`auc`] exactly.
pub fn roc_trapezoid_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (counts, n_pos, n_neg) = roc_counts(scores, labels)?;
    let mut area_counts = 0.0;
    for w in counts.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        area_counts += (x1 - x0) as f64 * (y0 + y1) as f64 / 2.0;
    }
    Ok(area_counts / (n_pos as f64 * n_neg as f64))
}
