//! Likelihood, prior, and odds-ratio kernels for the three model families.
//!
//! All three families model the log-odds of a crash as a linear function of
//! slice covariates:
//!
//! * **Conditional logistic** — matched strata of one case and `m` controls;
//!   the per-stratum baseline hazard cancels out of the likelihood. The
//!   contribution of stratum `i` with linear predictors `η_ij` is
//!   `η_case − log Σ_j exp(η_ij)`.
//! * **Random-parameter logistic** — an unconditional Bernoulli likelihood
//!   over pooled observations, with an intercept; each coefficient in the
//!   random set gains an observation-level Gaussian deviation
//!   `φ_ki ~ N(0, σ_k²)`.
//! * **Random-parameter conditional logistic** — the conditional likelihood
//!   with stratum-level coefficient deviations.
//!
//! Coefficients carry `Normal(0, variance)` priors (near-flat by default);
//! deviation variances carry `InverseGamma(shape, rate)` priors. Everything
//! here is deterministic, allocation-light, and stabilized with log-sum-exp
//! so that extreme linear predictors degrade gracefully instead of
//! overflowing.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;

/// Pseudo-covariate name for the intercept of the pooled logistic family.
pub const INTERCEPT_NAME: &str = "intercept";

/// The supported model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Matched conditional logistic regression with fixed coefficients.
    ConditionalLogistic,
    /// Pooled logistic regression with observation-level random parameters.
    RpLogistic,
    /// Conditional logistic regression with stratum-level random parameters.
    RpConditionalLogistic,
}

impl Family {
    /// Whether the family conditions on matched strata.
    pub fn is_conditional(self) -> bool {
        matches!(self, Family::ConditionalLogistic | Family::RpConditionalLogistic)
    }

    /// Whether the coefficient vector includes an intercept.
    pub fn has_intercept(self) -> bool {
        matches!(self, Family::RpLogistic)
    }

    /// Whether the family carries random parameters.
    pub fn is_random_parameter(self) -> bool {
        matches!(self, Family::RpLogistic | Family::RpConditionalLogistic)
    }

    /// Canonical snake_case name.
    pub fn name(self) -> &'static str {
        match self {
            Family::ConditionalLogistic => "conditional_logistic",
            Family::RpLogistic => "rp_logistic",
            Family::RpConditionalLogistic => "rp_conditional_logistic",
        }
    }
}

/// Prior hyperparameters shared by every model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    /// Variance of the `Normal(0, ·)` prior on each coefficient.
    pub coef_variance: f64,
    /// Shape of the `InverseGamma(·, rate)` prior on deviation variances.
    pub variance_shape: f64,
    /// Rate of the `InverseGamma(shape, ·)` prior on deviation variances.
    pub variance_rate: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { coef_variance: 1e6, variance_shape: 0.001, variance_rate: 0.001 }
    }
}

/// A full model specification: family, covariates, random set, slice, and
/// priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Model family.
    pub family: Family,
    /// Ordered covariate names (single-slice).
    pub covariates: Vec<String>,
    /// Covariates with random parameters; may include `"intercept"` for the
    /// pooled logistic family. Empty for the fixed conditional family.
    #[serde(default)]
    pub random: Vec<String>,
    /// Which 5-minute slice (1–4) supplies the covariates.
    pub slice: u8,
    /// Prior hyperparameters.
    #[serde(default)]
    pub priors: PriorSpec,
    /// Whether to z-score covariates before sampling (summaries are always
    /// reported on the raw scale).
    #[serde(default)]
    pub standardize: bool,
}

/// Specification errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    /// Slice index outside 1–4.
    BadSlice(u8),
    /// No covariates in a family that has no intercept.
    NoCovariates,
    /// A name appears twice in `covariates` or `random`.
    DuplicateName(String),
    /// A random name is not a covariate (or a disallowed intercept).
    UnknownRandom(String),
    /// A random-parameter family with an empty random set, or vice versa.
    RandomSetMismatch,
    /// Non-positive prior hyperparameters.
    BadPriors,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::BadSlice(s) => write!(f, "slice {s} out of range 1..=4"),
            ModelError::NoCovariates => write!(f, "model needs at least one covariate"),
            ModelError::DuplicateName(n) => write!(f, "duplicate name {n}"),
            ModelError::UnknownRandom(n) => write!(f, "random name {n} is not a covariate"),
            ModelError::RandomSetMismatch => {
                write!(f, "random set must be empty exactly when the family is fixed")
            }
            ModelError::BadPriors => write!(f, "prior hyperparameters must be positive"),
        }
    }
}

impl core::error::Error for ModelError {}

impl ModelSpec {
    /// Validates internal consistency.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(1..=4).contains(&self.slice) {
            return Err(ModelError::BadSlice(self.slice));
        }
        if self.covariates.is_empty() && !self.family.has_intercept() {
            return Err(ModelError::NoCovariates);
        }
        for (i, c) in self.covariates.iter().enumerate() {
            if self.covariates[..i].contains(c) {
                return Err(ModelError::DuplicateName(c.clone()));
            }
        }
        for (i, r) in self.random.iter().enumerate() {
            if self.random[..i].contains(r) {
                return Err(ModelError::DuplicateName(r.clone()));
            }
            let allowed = self.covariates.contains(r)
                || (r == INTERCEPT_NAME && self.family.has_intercept());
            if !allowed {
                return Err(ModelError::UnknownRandom(r.clone()));
            }
        }
        if self.random.is_empty() == self.family.is_random_parameter() {
            return Err(ModelError::RandomSetMismatch);
        }
        let p = &self.priors;
        let priors_ok = p.coef_variance > 0.0
            && p.coef_variance.is_finite()
            && p.variance_shape > 0.0
            && p.variance_rate > 0.0;
        if !priors_ok {
            return Err(ModelError::BadPriors);
        }
        Ok(())
    }

    /// Names of all sampled coefficients, intercept first when present.
    pub fn coef_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.covariates.len() + 1);
        if self.family.has_intercept() {
            names.push(String::from(INTERCEPT_NAME));
        }
        names.extend(self.covariates.iter().cloned());
        names
    }

    /// Number of coefficients (including any intercept).
    pub fn n_coef(&self) -> usize {
        self.covariates.len() + usize::from(self.family.has_intercept())
    }

    /// Indices of the random set within the coefficient vector.
    pub fn random_indices(&self) -> Vec<usize> {
        let names = self.coef_names();
        self.random
            .iter()
            .map(|r| names.iter().position(|n| n == r).expect("validated random name"))
            .collect()
    }
}

/// Sampled parameters for any family: coefficients, per-unit deviations for
/// each random coefficient, and deviation variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    /// Coefficients, ordered as [`ModelSpec::coef_names`].
    pub beta: Vec<f64>,
    /// Deviations: `phi[k][unit]` for the `k`-th random coefficient.
    pub phi: Vec<Vec<f64>>,
    /// Deviation variances, one per random coefficient.
    pub sigma2: Vec<f64>,
}

impl ParameterState {
    /// A zero-deviation state.
    pub fn zeroed(n_coef: usize, n_random: usize, n_units: usize) -> ParameterState {
        ParameterState {
            beta: vec![0.0; n_coef],
            phi: vec![vec![0.0; n_units]; n_random],
            sigma2: vec![1.0; n_random],
        }
    }
}

/// Covariate rows for matched strata, flattened row-major:
/// stratum → event → coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedDesign {
    n_strata: usize,
    stratum_size: usize,
    n_coef: usize,
    x: Vec<f64>,
    case: Vec<usize>,
}

impl StratifiedDesign {
    /// Builds a design; `x.len()` must equal
    /// `n_strata * stratum_size * n_coef` and every case index must be below
    /// `stratum_size`.
    pub fn new(
        n_strata: usize,
        stratum_size: usize,
        n_coef: usize,
        x: Vec<f64>,
        case: Vec<usize>,
    ) -> StratifiedDesign {
        assert_eq!(x.len(), n_strata * stratum_size * n_coef, "design shape mismatch");
        assert_eq!(case.len(), n_strata, "one case index per stratum");
        assert!(case.iter().all(|&c| c < stratum_size), "case index in range");
        StratifiedDesign { n_strata, stratum_size, n_coef, x, case }
    }

    /// Number of strata.
    pub fn n_strata(&self) -> usize {
        self.n_strata
    }

    /// Events per stratum (1 case + m controls).
    pub fn stratum_size(&self) -> usize {
        self.stratum_size
    }

    /// Number of coefficients.
    pub fn n_coef(&self) -> usize {
        self.n_coef
    }

    /// Case position within stratum `i`.
    pub fn case_index(&self, i: usize) -> usize {
        self.case[i]
    }

    /// Covariate row of event `j` in stratum `i`.
    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.stratum_size + j) * self.n_coef;
        &self.x[start..start + self.n_coef]
    }

    /// Z-scores every column over all events; constant columns are left
    /// unscaled. Returns the transformed design and the transform.
    pub fn standardized(&self) -> (StratifiedDesign, Standardization) {
        let std = Standardization::fit(&self.x, self.n_coef, 0);
        let mut out = self.clone();
        std.apply(&mut out.x);
        (out, std)
    }
}

/// Pooled observation rows for the unconditional logistic family. Column 0
/// is the intercept (constant 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDesign {
    n_obs: usize,
    n_coef: usize,
    x: Vec<f64>,
    y: Vec<bool>,
}

impl PooledDesign {
    /// Builds a design; `x.len()` must equal `n_obs * n_coef`.
    pub fn new(n_obs: usize, n_coef: usize, x: Vec<f64>, y: Vec<bool>) -> PooledDesign {
        assert_eq!(x.len(), n_obs * n_coef, "design shape mismatch");
        assert_eq!(y.len(), n_obs, "one label per observation");
        PooledDesign { n_obs, n_coef, x, y }
    }

    /// Number of observations.
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    /// Number of coefficients including the intercept.
    pub fn n_coef(&self) -> usize {
        self.n_coef
    }

    /// Covariate row of observation `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_coef..(i + 1) * self.n_coef]
    }

    /// Label of observation `i`.
    pub fn label(&self, i: usize) -> bool {
        self.y[i]
    }

    /// Z-scores every column except the intercept; see
    /// [`StratifiedDesign::standardized`].
    pub fn standardized(&self) -> (PooledDesign, Standardization) {
        let std = Standardization::fit(&self.x, self.n_coef, 1);
        let mut out = self.clone();
        std.apply(&mut out.x);
        (out, std)
    }
}

/// Column means and scales of a z-scoring transform, with the inverse maps
/// used to report sampled parameters on the raw covariate scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    /// Per-column means (zero for skipped columns).
    pub means: Vec<f64>,
    /// Per-column scales (one for skipped and constant columns).
    pub sds: Vec<f64>,
    skip: usize,
}

impl Standardization {
    fn fit(x: &[f64], n_coef: usize, skip: usize) -> Standardization {
        let n_rows = if n_coef == 0 { 0 } else { x.len() / n_coef };
        let mut means = vec![0.0; n_coef];
        let mut sds = vec![1.0; n_coef];
        for k in skip..n_coef {
            let col: Vec<f64> = (0..n_rows).map(|r| x[r * n_coef + k]).collect();
            if col.is_empty() {
                continue;
            }
            let (mean, sd) = math::mean_sd(&col);
            means[k] = mean;
            sds[k] = if sd > 0.0 { sd } else { 1.0 };
        }
        Standardization { means, sds, skip }
    }

    fn apply(&self, x: &mut [f64]) {
        let n_coef = self.means.len();
        for row in x.chunks_exact_mut(n_coef) {
            for k in self.skip..n_coef {
                row[k] = (row[k] - self.means[k]) / self.sds[k];
            }
        }
    }

    /// Maps a coefficient draw from the standardized to the raw scale,
    /// folding mean shifts into the intercept when one exists.
    pub fn raw_beta(&self, std_beta: &[f64]) -> Vec<f64> {
        let mut raw: Vec<f64> =
            std_beta.iter().zip(&self.sds).map(|(&b, &s)| b / s).collect();
        if self.skip == 1 {
            let shift: f64 = (1..std_beta.len())
                .map(|k| std_beta[k] * self.means[k] / self.sds[k])
                .sum();
            raw[0] = std_beta[0] - shift;
        }
        raw
    }

    /// Maps a deviation variance draw to the raw scale of coefficient `k`.
    pub fn raw_sigma2(&self, k: usize, std_sigma2: f64) -> f64 {
        std_sigma2 / (self.sds[k] * self.sds[k])
    }
}

/// Linear predictor `βᵀx`.
#[inline]
pub fn linear_predictor(beta: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(beta.len(), x.len());
    let mut eta = 0.0;
    for (b, v) in beta.iter().zip(x) {
        eta += b * v;
    }
    eta
}

/// Log-likelihood contribution of stratum `i` under effective coefficients
/// `beta_eff` (population coefficients plus any stratum deviation):
/// `η_case − log Σ_j exp(η_j)`.
pub fn conditional_loglik_stratum(design: &StratifiedDesign, i: usize, beta_eff: &[f64]) -> f64 {
    let mut etas = [0.0; 64];
    let size = design.stratum_size();
    debug_assert!(size <= etas.len(), "stratum larger than scratch buffer");
    for j in 0..size {
        etas[j] = linear_predictor(beta_eff, design.row(i, j));
    }
    etas[design.case_index(i)] - math::log_sum_exp(&etas[..size])
}

/// Total conditional log-likelihood with fixed coefficients.
pub fn conditional_loglik(design: &StratifiedDesign, beta: &[f64]) -> f64 {
    (0..design.n_strata()).map(|i| conditional_loglik_stratum(design, i, beta)).sum()
}

/// Total conditional log-likelihood with stratum-level deviations
/// `phi[k][i]` applied to coefficients `random_idx[k]`.
pub fn conditional_loglik_random(
    design: &StratifiedDesign,
    beta: &[f64],
    random_idx: &[usize],
    phi: &[Vec<f64>],
) -> f64 {
    debug_assert_eq!(random_idx.len(), phi.len());
    let mut beta_eff = beta.to_vec();
    let mut total = 0.0;
    for i in 0..design.n_strata() {
        beta_eff.copy_from_slice(beta);
        for (k, &idx) in random_idx.iter().enumerate() {
            beta_eff[idx] += phi[k][i];
        }
        total += conditional_loglik_stratum(design, i, &beta_eff);
    }
    total
}

/// Gradient of [`conditional_loglik`] with respect to `beta`. The sampler
/// is gradient-free; this exists to cross-check the likelihood.
pub fn conditional_loglik_grad(design: &StratifiedDesign, beta: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; design.n_coef()];
    let size = design.stratum_size();
    let mut etas = vec![0.0; size];
    let mut probs = vec![0.0; size];
    for i in 0..design.n_strata() {
        for j in 0..size {
            etas[j] = linear_predictor(beta, design.row(i, j));
        }
        let lse = math::log_sum_exp(&etas);
        for j in 0..size {
            probs[j] = math::exp(etas[j] - lse);
        }
        let case = design.case_index(i);
        for k in 0..design.n_coef() {
            let mut expected = 0.0;
            for j in 0..size {
                expected += probs[j] * design.row(i, j)[k];
            }
            grad[k] += design.row(i, case)[k] - expected;
        }
    }
    grad
}

/// Bernoulli log-likelihood of one observation with linear predictor `eta`.
#[inline]
pub fn bernoulli_loglik_obs(eta: f64, y: bool) -> f64 {
    if y {
        -math::log1p_exp(-eta)
    } else {
        -math::log1p_exp(eta)
    }
}

/// Total pooled Bernoulli log-likelihood with fixed coefficients.
pub fn bernoulli_loglik(design: &PooledDesign, beta: &[f64]) -> f64 {
    (0..design.n_obs())
        .map(|i| bernoulli_loglik_obs(linear_predictor(beta, design.row(i)), design.label(i)))
        .sum()
}

/// Total pooled Bernoulli log-likelihood with observation-level deviations
/// `phi[k][i]` applied to coefficients `random_idx[k]`.
pub fn bernoulli_loglik_random(
    design: &PooledDesign,
    beta: &[f64],
    random_idx: &[usize],
    phi: &[Vec<f64>],
) -> f64 {
    debug_assert_eq!(random_idx.len(), phi.len());
    let mut beta_eff = beta.to_vec();
    let mut total = 0.0;
    for i in 0..design.n_obs() {
        beta_eff.copy_from_slice(beta);
        for (k, &idx) in random_idx.iter().enumerate() {
            beta_eff[idx] += phi[k][i];
        }
        let eta = linear_predictor(&beta_eff, design.row(i));
        total += bernoulli_loglik_obs(eta, design.label(i));
    }
    total
}

/// Joint log-prior of a parameter state: `Normal(0, coef_variance)` on each
/// coefficient, `InverseGamma(shape, rate)` on each deviation variance, and
/// `Normal(0, σ_k²)` on each deviation.
pub fn log_prior(state: &ParameterState, priors: &PriorSpec) -> f64 {
    let mut lp = 0.0;
    for &b in &state.beta {
        lp += math::normal_logpdf(b, 0.0, priors.coef_variance);
    }
    for (k, phis) in state.phi.iter().enumerate() {
        let s2 = state.sigma2[k];
        lp += math::inv_gamma_logpdf(s2, priors.variance_shape, priors.variance_rate);
        if s2 <= 0.0 {
            return f64::NEG_INFINITY;
        }
        for &p in phis {
            lp += math::normal_logpdf(p, 0.0, s2);
        }
    }
    lp
}

/// Odds ratio between two covariate rows: `exp(βᵀ(x_a − x_b))`.
pub fn odds_ratio_pair(beta: &[f64], x_a: &[f64], x_b: &[f64]) -> f64 {
    debug_assert_eq!(x_a.len(), x_b.len());
    let mut d = 0.0;
    for ((b, a), c) in beta.iter().zip(x_a).zip(x_b) {
        d += b * (a - c);
    }
    math::exp(d)
}

/// Odds ratio of an event against a within-stratum reference mean.
pub fn odds_ratio_vs_stratum_mean(beta: &[f64], x_event: &[f64], control_mean: &[f64]) -> f64 {
    odds_ratio_pair(beta, x_event, control_mean)
}

/// Hazard ratio for a one-unit covariate increase: `exp(coef)`.
pub fn hazard_ratio(coef: f64) -> f64 {
    math::exp(coef)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(family: Family) -> ModelSpec {
        ModelSpec {
            family,
            covariates: vec!["avg_speed".to_string(), "rainy".to_string()],
            random: if family.is_random_parameter() {
                vec!["avg_speed".to_string()]
            } else {
                vec![]
            },
            slice: 2,
            priors: PriorSpec::default(),
            standardize: false,
        }
    }

    #[test]
    fn linear_predictor_dot_product() {
        assert_relative_eq!(linear_predictor(&[-0.025], &[30.0]), -0.75);
        assert_relative_eq!(linear_predictor(&[0.5, -1.0], &[2.0, 3.0]), -2.0);
    }

    #[test]
    fn spec_validation_catches_mistakes() {
        assert!(spec(Family::ConditionalLogistic).validate().is_ok());
        assert!(spec(Family::RpConditionalLogistic).validate().is_ok());

        let mut s = spec(Family::ConditionalLogistic);
        s.slice = 5;
        assert_eq!(s.validate(), Err(ModelError::BadSlice(5)));

        let mut s = spec(Family::ConditionalLogistic);
        s.covariates.clear();
        assert_eq!(s.validate(), Err(ModelError::NoCovariates));

        let mut s = spec(Family::ConditionalLogistic);
        s.random = vec!["avg_speed".to_string()];
        assert_eq!(s.validate(), Err(ModelError::RandomSetMismatch));

        let mut s = spec(Family::RpConditionalLogistic);
        s.random = vec![INTERCEPT_NAME.to_string()];
        assert_eq!(s.validate(), Err(ModelError::UnknownRandom(INTERCEPT_NAME.to_string())));

        let mut s = spec(Family::RpLogistic);
        s.random = vec![INTERCEPT_NAME.to_string()];
        assert!(s.validate().is_ok());
        assert_eq!(s.coef_names()[0], INTERCEPT_NAME);
        assert_eq!(s.random_indices(), vec![0]);

        let mut s = spec(Family::RpConditionalLogistic);
        s.priors.coef_variance = 0.0;
        assert_eq!(s.validate(), Err(ModelError::BadPriors));
    }

    /// Identical covariate rows make every member equally likely: each
    /// stratum contributes −log(m + 1).
    #[test]
    fn equal_rows_give_uniform_loglik() {
        let row = [1.3, -0.4];
        let x: Vec<f64> = row.iter().copied().cycle().take(2 * 5).collect();
        let design = StratifiedDesign::new(1, 5, 2, x, vec![0]);
        let ll = conditional_loglik(&design, &[0.7, 2.0]);
        assert_relative_eq!(ll, -math::ln(5.0), epsilon = 1e-12);
    }

    /// One elevated member: case probability e^0.5 / (e^0.5 + 4).
    #[test]
    fn single_elevated_member() {
        let mut x = vec![0.0; 5];
        x[0] = 1.0;
        let design = StratifiedDesign::new(1, 5, 1, x, vec![0]);
        let ll = conditional_loglik(&design, &[0.5]);
        let expected = math::ln(math::exp(0.5) / (math::exp(0.5) + 4.0));
        assert_relative_eq!(ll, expected, epsilon = 1e-12);
        assert_relative_eq!(ll, -1.2314, epsilon = 5e-5);
    }

    /// Brute-force check without the log-sum-exp rearrangement.
    #[test]
    fn matches_brute_force_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let k = rng.gen_range(1..=5);
            let size = rng.gen_range(2..=6);
            let x: Vec<f64> = (0..size * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let case = rng.gen_range(0..size);
            let design = StratifiedDesign::new(1, size, k, x.clone(), vec![case]);
            let ll = conditional_loglik(&design, &beta);
            let etas: Vec<f64> = (0..size)
                .map(|j| beta.iter().zip(&x[j * k..(j + 1) * k]).map(|(b, v)| b * v).sum())
                .collect();
            let brute =
                math::ln(math::exp(etas[case]) / etas.iter().map(|&e| math::exp(e)).sum::<f64>());
            assert_relative_eq!(ll, brute, epsilon = 1e-12);
        }
    }

    /// Per-stratum constants in the linear predictor cancel exactly, which
    /// is what eliminates the matched baseline hazard.
    #[test]
    fn stratum_constants_cancel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 30;
        let size = 5;
        let k = 3;
        let x: Vec<f64> = (0..n * size * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let beta = [0.4, -0.9, 0.15];
        let design = StratifiedDesign::new(n, size, k, x.clone(), vec![0; n]);
        let base = conditional_loglik(&design, &beta);

        // Augment with an indicator column carrying a per-stratum constant.
        let mut x2 = Vec::with_capacity(n * size * (k + 1));
        for i in 0..n {
            let c = rng.gen_range(-50.0..50.0);
            for j in 0..size {
                x2.extend_from_slice(&x[(i * size + j) * k..(i * size + j + 1) * k]);
                x2.push(c);
            }
        }
        let design2 = StratifiedDesign::new(n, size, k + 1, x2, vec![0; n]);
        let shifted = conditional_loglik(&design2, &[0.4, -0.9, 0.15, 1.0]);
        assert_relative_eq!(base, shifted, epsilon = 1e-9);
    }

    #[test]
    fn extreme_predictors_stay_finite() {
        let x = vec![1.0, 0.0, 0.0, 0.0, 0.0];
        let design = StratifiedDesign::new(1, 5, 1, x, vec![0]);
        assert!(conditional_loglik(&design, &[900.0]).is_finite());
        let ll = conditional_loglik(&design, &[-900.0]);
        assert!(ll < -800.0 && !ll.is_nan());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, size, k) = (20, 5, 3);
        let x: Vec<f64> = (0..n * size * k).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let cases: Vec<usize> = (0..n).map(|_| rng.gen_range(0..size)).collect();
        let design = StratifiedDesign::new(n, size, k, x, cases);
        let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad = conditional_loglik_grad(&design, &beta);
        let h = 1e-5;
        for j in 0..k {
            let mut hi = beta.clone();
            let mut lo = beta.clone();
            hi[j] += h;
            lo[j] -= h;
            let fd = (conditional_loglik(&design, &hi) - conditional_loglik(&design, &lo))
                / (2.0 * h);
            assert_relative_eq!(grad[j], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn zero_deviations_reduce_to_fixed_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, size, k) = (12, 5, 2);
        let x: Vec<f64> = (0..n * size * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let design = StratifiedDesign::new(n, size, k, x, vec![0; n]);
        let beta = [0.3, -0.2];
        let phi = vec![vec![0.0; n]];
        assert_eq!(
            conditional_loglik_random(&design, &beta, &[1], &phi),
            conditional_loglik(&design, &beta),
        );

        // Nonzero deviations move the likelihood when covariates differ.
        let mut phi2 = phi.clone();
        phi2[0][3] = 0.8;
        assert_ne!(
            conditional_loglik_random(&design, &beta, &[1], &phi2),
            conditional_loglik(&design, &beta),
        );
    }

    #[test]
    fn bernoulli_loglik_known_values() {
        assert_relative_eq!(bernoulli_loglik_obs(0.0, true), math::ln(0.5));
        // logit(0.7) ≈ 0.8473: loglik of a hit is ln 0.7.
        let eta = math::ln(0.7 / 0.3);
        assert_relative_eq!(bernoulli_loglik_obs(eta, true), math::ln(0.7), epsilon = 1e-12);
        assert_relative_eq!(bernoulli_loglik_obs(eta, false), math::ln(0.3), epsilon = 1e-12);
        assert_eq!(bernoulli_loglik_obs(f64::INFINITY, true), 0.0);
        assert_eq!(bernoulli_loglik_obs(f64::INFINITY, false), f64::NEG_INFINITY);
    }

    #[test]
    fn pooled_random_deviations_shift_observations() {
        let x = vec![1.0, 2.0, 1.0, -1.0];
        let design = PooledDesign::new(2, 2, x, vec![true, false]);
        let beta = [0.1, 0.4];
        let fixed = bernoulli_loglik(&design, &beta);
        assert_eq!(bernoulli_loglik_random(&design, &beta, &[0], &[vec![0.0, 0.0]]), fixed);
        let eta0 = 0.1 + 0.5 + 0.4 * 2.0;
        let eta1 = 0.1 - 0.3 - 0.4;
        let expected = bernoulli_loglik_obs(eta0, true) + bernoulli_loglik_obs(eta1, false);
        let moved = bernoulli_loglik_random(&design, &beta, &[0], &[vec![0.5, -0.3]]);
        assert_relative_eq!(moved, expected, epsilon = 1e-12);
    }

    #[test]
    fn prior_at_zero_matches_closed_form() {
        let priors = PriorSpec::default();
        let state = ParameterState::zeroed(4, 0, 0);
        let expected = -4.0 * 0.5 * (math::LN_2PI + math::ln(1e6));
        assert_relative_eq!(log_prior(&state, &priors), expected, epsilon = 1e-10);
    }

    #[test]
    fn prior_includes_deviation_terms() {
        let priors = PriorSpec::default();
        let mut state = ParameterState::zeroed(1, 1, 2);
        state.phi[0] = vec![0.3, -0.1];
        state.sigma2[0] = 0.25;
        let expected = math::normal_logpdf(0.0, 0.0, 1e6)
            + math::inv_gamma_logpdf(0.25, 0.001, 0.001)
            + math::normal_logpdf(0.3, 0.0, 0.25)
            + math::normal_logpdf(-0.1, 0.0, 0.25);
        assert_relative_eq!(log_prior(&state, &priors), expected, epsilon = 1e-12);

        state.sigma2[0] = -1.0;
        assert_eq!(log_prior(&state, &priors), f64::NEG_INFINITY);
    }

    #[test]
    fn odds_ratios_exponentiate_contrasts() {
        assert_relative_eq!(hazard_ratio(0.24), 1.2712, epsilon = 5e-5);
        assert_relative_eq!(odds_ratio_pair(&[0.24], &[1.0], &[0.0]), hazard_ratio(0.24));
        assert_relative_eq!(
            odds_ratio_vs_stratum_mean(&[0.5, -1.0], &[2.0, 1.0], &[1.0, 1.0]),
            math::exp(0.5),
            epsilon = 1e-12,
        );
        // Identical rows: ratio 1 regardless of coefficients.
        assert_relative_eq!(odds_ratio_pair(&[3.0, -7.0], &[1.1, 2.2], &[1.1, 2.2]), 1.0);
    }

    #[test]
    fn standardization_round_trips_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let (n, size, k) = (8, 3, 2);
        let x: Vec<f64> = (0..n * size * k).map(|_| rng.gen_range(5.0..60.0)).collect();
        let design = StratifiedDesign::new(n, size, k, x, vec![0; n]);
        let (std_design, tr) = design.standardized();
        // The conditional likelihood is invariant under the affine map once
        // coefficients are transformed back.
        let std_beta = [0.8, -0.45];
        let raw_beta = tr.raw_beta(&std_beta);
        assert_relative_eq!(
            conditional_loglik(&std_design, &std_beta),
            conditional_loglik(&design, &raw_beta),
            epsilon = 1e-9,
        );

        // Pooled design: intercept absorbs the centering.
        let xp: Vec<f64> = (0..6)
            .flat_map(|i| [1.0, 20.0 + i as f64, (i % 2) as f64])
            .collect();
        let pooled = PooledDesign::new(6, 3, xp, vec![true, false, true, false, true, false]);
        let (std_pooled, trp) = pooled.standardized();
        let std_b = [-1.2, 0.6, 0.3];
        let raw_b = trp.raw_beta(&std_b);
        assert_relative_eq!(
            bernoulli_loglik(&std_pooled, &std_b),
            bernoulli_loglik(&pooled, &raw_b),
            epsilon = 1e-9,
        );
        assert_relative_eq!(trp.raw_sigma2(1, 4.0), 4.0 / trp.sds[1].powi(2), epsilon = 1e-12);
    }
}
