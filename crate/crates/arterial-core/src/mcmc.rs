//! Adaptive Metropolis-within-Gibbs sampling, convergence diagnostics, and
//! posterior summaries.
//!
//! The sampler is a component-wise Gaussian random-walk Metropolis scheme:
//! each coefficient `β_k` and each deviation `φ_ki` gets its own proposal
//! scale, adapted toward a 0.44 acceptance rate during burn-in (multiplying
//! the scale by `e^{±0.05}` after every 50-proposal window) and frozen
//! afterwards, which keeps the chain a valid time-homogeneous kernel over
//! the retained draws. Deviation variances `σ_k²` are conjugate and drawn
//! exactly by Gibbs. Chains are independent given RNG streams derived from
//! the run seed, so results are bit-reproducible and chain-order
//! independent.
//!
//! Memory note: coefficient, variance, and deviance draws are retained in
//! full; per-unit deviations are summarized as running means (enough for
//! information criteria and scoring, and orders of magnitude smaller than
//! the full trace).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::likelihoods::{
    self, ModelError, ModelSpec, ParameterState, PooledDesign, PriorSpec, StratifiedDesign,
};
use crate::math::{self, RunningMean};
use crate::rng::chain_stream;

/// Largest supported coefficient vector (stack scratch size).
pub const MAX_COEF: usize = 64;

/// Adaptation settings for the random-walk proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptSpec {
    /// Component-wise acceptance rate the adaptation steers toward.
    pub target_accept: f64,
    /// Number of proposals per adaptation window.
    pub window: u32,
    /// Log-scale step applied after each window (`scale ×= e^{±step}`).
    pub log_step: f64,
}

impl Default for AdaptSpec {
    fn default() -> Self {
        AdaptSpec { target_accept: 0.44, window: 50, log_step: 0.05 }
    }
}

/// Sampler run settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Number of independent chains.
    pub n_chains: usize,
    /// Total iterations per chain (including burn-in).
    pub n_iter: usize,
    /// Iterations discarded before storage; adaptation happens here.
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in iteration.
    pub thin: usize,
    /// Run seed; chain `c` draws from a stream derived as `seed ⊕ c`.
    pub seed: u64,
    /// Initial proposal scale for every component.
    pub initial_scale: f64,
    /// Magnitude of the overdispersed initialization: chain `c` starts every
    /// coefficient at `{0, +1, −1}[c mod 3] × init_jitter`.
    pub init_jitter: f64,
    /// Adaptation settings.
    pub adapt: AdaptSpec,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 3,
            n_iter: 20_000,
            burn_in: 5_000,
            thin: 1,
            seed: 0,
            initial_scale: 0.1,
            init_jitter: 0.5,
            adapt: AdaptSpec::default(),
        }
    }
}

impl SamplerConfig {
    /// Validates run settings.
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_chains == 0 {
            return Err(SamplerError::Config("n_chains must be at least 1"));
        }
        if self.burn_in >= self.n_iter {
            return Err(SamplerError::Config("burn_in must be below n_iter"));
        }
        if self.thin == 0 {
            return Err(SamplerError::Config("thin must be at least 1"));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(SamplerError::Config("initial_scale must be positive"));
        }
        if !self.init_jitter.is_finite() || self.init_jitter < 0.0 {
            return Err(SamplerError::Config("init_jitter must be nonnegative"));
        }
        let a = &self.adapt;
        if a.window == 0 || !(a.target_accept > 0.0 && a.target_accept < 1.0) || a.log_step < 0.0 {
            return Err(SamplerError::Config("bad adaptation settings"));
        }
        Ok(())
    }

    /// Number of draws each chain retains.
    pub fn draws_per_chain(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

/// Sampler failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SamplerError {
    /// Invalid run settings.
    Config(&'static str),
    /// Invalid model specification.
    Model(ModelError),
    /// Model and design shapes disagree.
    DataMismatch(&'static str),
    /// The log-posterior is not finite at a chain's initial state.
    NonFiniteInit {
        /// Offending chain index.
        chain: usize,
    },
}

impl fmt::Display for SamplerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerError::Config(m) => write!(f, "bad sampler config: {m}"),
            SamplerError::Model(e) => write!(f, "bad model: {e}"),
            SamplerError::DataMismatch(m) => write!(f, "model/data mismatch: {m}"),
            SamplerError::NonFiniteInit { chain } => {
                write!(f, "non-finite log-posterior at initialization of chain {chain}")
            }
        }
    }
}

impl core::error::Error for SamplerError {}

impl From<ModelError> for SamplerError {
    fn from(e: ModelError) -> Self {
        SamplerError::Model(e)
    }
}

/// A posterior target the sampler can explore: a likelihood factored over
/// units (strata or observations), plus coefficient priors.
///
/// Deviations enter through `phi_unit`, one value per random coefficient
/// for the given unit; their `Normal(0, σ_k²)` priors and the `σ_k²` Gibbs
/// step are handled by the sampler itself using [`Target::priors`].
pub trait Target {
    /// Number of coefficients.
    fn n_coef(&self) -> usize;
    /// Number of random coefficients (deviation blocks).
    fn n_random(&self) -> usize;
    /// Number of likelihood units (strata or observations).
    fn n_units(&self) -> usize;
    /// Log-likelihood of one unit.
    fn unit_loglik(&self, unit: usize, beta: &[f64], phi_unit: &[f64]) -> f64;
    /// Prior hyperparameters.
    fn priors(&self) -> &PriorSpec;
    /// Log-prior density of coefficient `k`; defaults to the
    /// `Normal(0, coef_variance)` implied by [`Target::priors`].
    fn log_prior_coef(&self, _k: usize, value: f64) -> f64 {
        math::normal_logpdf(value, 0.0, self.priors().coef_variance)
    }
}

/// [`Target`] adapter for the conditional families over matched strata.
pub struct ConditionalTarget<'a> {
    design: &'a StratifiedDesign,
    random_idx: Vec<usize>,
    priors: PriorSpec,
}

impl<'a> ConditionalTarget<'a> {
    /// Wraps a stratified design; `random_idx` lists the coefficients that
    /// carry stratum-level deviations (empty for the fixed family).
    pub fn new(
        design: &'a StratifiedDesign,
        random_idx: Vec<usize>,
        priors: PriorSpec,
    ) -> ConditionalTarget<'a> {
        assert!(design.n_coef() <= MAX_COEF, "too many coefficients");
        assert!(design.stratum_size() <= MAX_COEF, "stratum too large");
        assert!(random_idx.iter().all(|&i| i < design.n_coef()), "random index in range");
        ConditionalTarget { design, random_idx, priors }
    }
}

impl Target for ConditionalTarget<'_> {
    fn n_coef(&self) -> usize {
        self.design.n_coef()
    }

    fn n_random(&self) -> usize {
        self.random_idx.len()
    }

    fn n_units(&self) -> usize {
        self.design.n_strata()
    }

    fn unit_loglik(&self, unit: usize, beta: &[f64], phi_unit: &[f64]) -> f64 {
        if phi_unit.is_empty() {
            return likelihoods::conditional_loglik_stratum(self.design, unit, beta);
        }
        let mut eff = [0.0; MAX_COEF];
        eff[..beta.len()].copy_from_slice(beta);
        for (k, &idx) in self.random_idx.iter().enumerate() {
            eff[idx] += phi_unit[k];
        }
        likelihoods::conditional_loglik_stratum(self.design, unit, &eff[..beta.len()])
    }

    fn priors(&self) -> &PriorSpec {
        &self.priors
    }
}

/// [`Target`] adapter for the pooled Bernoulli family.
pub struct PooledTarget<'a> {
    design: &'a PooledDesign,
    random_idx: Vec<usize>,
    priors: PriorSpec,
}

impl<'a> PooledTarget<'a> {
    /// Wraps a pooled design; `random_idx` lists the coefficients that carry
    /// observation-level deviations.
    pub fn new(
        design: &'a PooledDesign,
        random_idx: Vec<usize>,
        priors: PriorSpec,
    ) -> PooledTarget<'a> {
        assert!(design.n_coef() <= MAX_COEF, "too many coefficients");
        assert!(random_idx.iter().all(|&i| i < design.n_coef()), "random index in range");
        PooledTarget { design, random_idx, priors }
    }
}

impl Target for PooledTarget<'_> {
    fn n_coef(&self) -> usize {
        self.design.n_coef()
    }

    fn n_random(&self) -> usize {
        self.random_idx.len()
    }

    fn n_units(&self) -> usize {
        self.design.n_obs()
    }

    fn unit_loglik(&self, unit: usize, beta: &[f64], phi_unit: &[f64]) -> f64 {
        let row = self.design.row(unit);
        let eta = if phi_unit.is_empty() {
            likelihoods::linear_predictor(beta, row)
        } else {
            let mut eff = [0.0; MAX_COEF];
            eff[..beta.len()].copy_from_slice(beta);
            for (k, &idx) in self.random_idx.iter().enumerate() {
                eff[idx] += phi_unit[k];
            }
            likelihoods::linear_predictor(&eff[..beta.len()], row)
        };
        likelihoods::bernoulli_loglik_obs(eta, self.design.label(unit))
    }

    fn priors(&self) -> &PriorSpec {
        &self.priors
    }
}

/// Retained output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    /// Number of retained draws.
    pub n_draws: usize,
    /// Coefficient draws, row-major `n_draws × n_coef`.
    pub beta: Vec<f64>,
    /// Deviation-variance draws, row-major `n_draws × n_random`.
    pub sigma2: Vec<f64>,
    /// Deviance `−2·loglik` at each retained draw.
    pub deviance: Vec<f64>,
    /// Running mean of each deviation over retained draws: `[k][unit]`.
    pub phi_mean: Vec<Vec<f64>>,
    /// Post-burn-in acceptance rate per coefficient.
    pub accept_beta: Vec<f64>,
    /// Post-burn-in acceptance rate per deviation: `[k][unit]`.
    pub accept_phi: Vec<Vec<f64>>,
    /// Proposal scales per coefficient at the burn-in freeze.
    pub scales_beta_frozen: Vec<f64>,
    /// Proposal scales per coefficient at the end of the run.
    pub scales_beta: Vec<f64>,
    /// Proposal scales per deviation at the burn-in freeze: `[k][unit]`.
    pub scales_phi_frozen: Vec<Vec<f64>>,
    /// Proposal scales per deviation at the end of the run: `[k][unit]`.
    pub scales_phi: Vec<Vec<f64>>,
}

impl ChainDraws {
    /// Coefficient `k` across all retained draws.
    pub fn beta_column(&self, k: usize, n_coef: usize) -> Vec<f64> {
        (0..self.n_draws).map(|d| self.beta[d * n_coef + k]).collect()
    }

    /// Variance `k` across all retained draws.
    pub fn sigma2_column(&self, k: usize, n_random: usize) -> Vec<f64> {
        (0..self.n_draws).map(|d| self.sigma2[d * n_random + k]).collect()
    }
}

/// Output of a multi-chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    /// Number of coefficients.
    pub n_coef: usize,
    /// Number of random coefficients.
    pub n_random: usize,
    /// Number of likelihood units.
    pub n_units: usize,
    /// Per-chain retained draws, in chain order.
    pub chains: Vec<ChainDraws>,
}

impl ChainSet {
    /// Retained draws per chain (equal across chains).
    pub fn n_draws(&self) -> usize {
        self.chains.first().map_or(0, |c| c.n_draws)
    }

    /// Pooled posterior mean of every sampled quantity. Means are streaming
    /// (Welford), so a degenerate posterior reproduces its point exactly.
    pub fn posterior_mean(&self) -> ParameterState {
        let mut beta = vec![RunningMean::default(); self.n_coef];
        let mut sigma2 = vec![RunningMean::default(); self.n_random];
        for chain in &self.chains {
            for d in 0..chain.n_draws {
                for k in 0..self.n_coef {
                    beta[k].push(chain.beta[d * self.n_coef + k]);
                }
                for k in 0..self.n_random {
                    sigma2[k].push(chain.sigma2[d * self.n_random + k]);
                }
            }
        }
        let mut phi = vec![vec![0.0; self.n_units]; self.n_random];
        for (k, units) in phi.iter_mut().enumerate() {
            for (i, slot) in units.iter_mut().enumerate() {
                let mut m = RunningMean::default();
                for chain in &self.chains {
                    m.push(chain.phi_mean[k][i]);
                }
                *slot = m.mean();
            }
        }
        ParameterState {
            beta: beta.iter().map(RunningMean::mean).collect(),
            phi,
            sigma2: sigma2.iter().map(RunningMean::mean).collect(),
        }
    }

    /// Pooled mean deviance across all retained draws.
    pub fn mean_deviance(&self) -> f64 {
        let mut m = RunningMean::default();
        for chain in &self.chains {
            for &d in &chain.deviance {
                m.push(d);
            }
        }
        m.mean()
    }

    /// Per-chain copies of one coefficient's draws.
    pub fn beta_chains(&self, k: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.beta_column(k, self.n_coef)).collect()
    }

    /// Per-chain copies of one variance's draws.
    pub fn sigma2_chains(&self, k: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.sigma2_column(k, self.n_random)).collect()
    }
}

/// Accept/reject decision for a log acceptance ratio. Always consumes one
/// uniform draw so the stream position does not depend on the outcome; a
/// NaN ratio (from a pathological proposal) rejects.
#[inline]
fn mh_accept<R: Rng>(rng: &mut R, log_ratio: f64) -> bool {
    let u: f64 = rng.gen();
    math::ln(u) < log_ratio
}

/// Draws `InvGamma(shape, rate)` as the reciprocal of a Gamma draw,
/// resampling on the (measure-zero, underflow-induced) non-finite results.
fn inv_gamma_draw<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let gamma = Gamma::new(shape, 1.0 / rate).expect("positive shape and rate");
    loop {
        let g: f64 = gamma.sample(rng);
        let x = 1.0 / g;
        if x.is_finite() && x > 0.0 {
            return x;
        }
    }
}

/// Conjugate Gibbs draw for a deviation variance:
/// `InvGamma(shape + n/2, rate + ½Σφ²)`. With no units this is a draw from
/// the prior.
pub fn gibbs_sigma<R: Rng>(phi_k: &[f64], priors: &PriorSpec, rng: &mut R) -> f64 {
    let shape = priors.variance_shape + phi_k.len() as f64 / 2.0;
    let rate = priors.variance_rate + 0.5 * phi_k.iter().map(|p| p * p).sum::<f64>();
    inv_gamma_draw(shape, rate, rng)
}

struct AdaptBank {
    scales: Vec<f64>,
    window_hits: Vec<u32>,
    window_len: Vec<u32>,
    post_hits: Vec<u64>,
}

impl AdaptBank {
    fn new(n: usize, initial_scale: f64) -> AdaptBank {
        AdaptBank {
            scales: vec![initial_scale; n],
            window_hits: vec![0; n],
            window_len: vec![0; n],
            post_hits: vec![0; n],
        }
    }

    #[inline]
    fn record(&mut self, c: usize, accepted: bool, adapting: bool, spec: &AdaptSpec) {
        if adapting {
            self.window_len[c] += 1;
            self.window_hits[c] += u32::from(accepted);
            if self.window_len[c] == spec.window {
                let rate = f64::from(self.window_hits[c]) / f64::from(spec.window);
                if rate > spec.target_accept {
                    self.scales[c] *= math::exp(spec.log_step);
                } else if rate < spec.target_accept {
                    self.scales[c] *= math::exp(-spec.log_step);
                }
                self.window_len[c] = 0;
                self.window_hits[c] = 0;
            }
        } else {
            self.post_hits[c] += u64::from(accepted);
        }
    }

    fn post_rates(&self, post_iters: usize) -> Vec<f64> {
        self.post_hits.iter().map(|&h| h as f64 / post_iters as f64).collect()
    }
}

fn split_by_unit(flat: &[f64], n_random: usize, n_units: usize) -> Vec<Vec<f64>> {
    // Flat buffers are unit-major; outputs are [k][unit].
    (0..n_random)
        .map(|k| (0..n_units).map(|i| flat[i * n_random + k]).collect())
        .collect()
}

/// Runs a single chain to completion. Chains are independent, so
/// [`run_chains`] is exactly a loop over this function; callers that manage
/// their own threads can invoke it per chain and assemble the same
/// [`ChainSet`].
pub fn run_chain<T: Target>(
    target: &T,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainDraws, SamplerError> {
    config.validate()?;
    let n_coef = target.n_coef();
    let n_random = target.n_random();
    let n_units = target.n_units();
    assert!(n_coef <= MAX_COEF, "too many coefficients");
    let priors = *target.priors();

    let mut rng: ChaCha8Rng = chain_stream(config.seed, chain as u32);

    // Overdispersed initialization: ±{0, 1, −1}×jitter per coefficient.
    let offset = [0.0, 1.0, -1.0][chain % 3] * config.init_jitter;
    let mut beta = vec![offset; n_coef];
    let mut phi = vec![0.0; n_units * n_random]; // unit-major
    let mut sigma2 = vec![1.0; n_random];

    let mut unit_ll = vec![0.0; n_units];
    let mut scratch_ll = vec![0.0; n_units];
    let mut total_ll = 0.0;
    for i in 0..n_units {
        unit_ll[i] = target.unit_loglik(i, &beta, &phi[i * n_random..(i + 1) * n_random]);
        total_ll += unit_ll[i];
    }
    let mut init_post = total_ll;
    for (k, &b) in beta.iter().enumerate() {
        init_post += target.log_prior_coef(k, b);
    }
    for &s2 in &sigma2 {
        init_post += math::inv_gamma_logpdf(s2, priors.variance_shape, priors.variance_rate);
    }
    if !init_post.is_finite() {
        return Err(SamplerError::NonFiniteInit { chain });
    }

    let mut bank_beta = AdaptBank::new(n_coef, config.initial_scale);
    let mut bank_phi = AdaptBank::new(n_units * n_random, config.initial_scale);
    let mut scales_beta_frozen = bank_beta.scales.clone();
    let mut scales_phi_frozen = bank_phi.scales.clone();

    let n_draws = config.draws_per_chain();
    let mut out_beta = Vec::with_capacity(n_draws * n_coef);
    let mut out_sigma2 = Vec::with_capacity(n_draws * n_random);
    let mut out_deviance = Vec::with_capacity(n_draws);
    let mut phi_means = vec![RunningMean::default(); n_units * n_random];

    for it in 0..config.n_iter {
        let adapting = it < config.burn_in;
        if it == config.burn_in {
            scales_beta_frozen.copy_from_slice(&bank_beta.scales);
            scales_phi_frozen.copy_from_slice(&bank_phi.scales);
        }

        // Coefficient sweep: each update re-evaluates every unit.
        for k in 0..n_coef {
            let old = beta[k];
            let z: f64 = StandardNormal.sample(&mut rng);
            let prop = old + bank_beta.scales[k] * z;
            let d_prior = target.log_prior_coef(k, prop) - target.log_prior_coef(k, old);
            beta[k] = prop;
            let mut new_total = 0.0;
            for i in 0..n_units {
                scratch_ll[i] =
                    target.unit_loglik(i, &beta, &phi[i * n_random..(i + 1) * n_random]);
                new_total += scratch_ll[i];
            }
            let accepted = mh_accept(&mut rng, new_total - total_ll + d_prior);
            if accepted {
                core::mem::swap(&mut unit_ll, &mut scratch_ll);
                total_ll = new_total;
            } else {
                beta[k] = old;
            }
            bank_beta.record(k, accepted, adapting, &config.adapt);
        }

        if n_random > 0 {
            // Deviation sweep: each update touches a single unit.
            for i in 0..n_units {
                for k in 0..n_random {
                    let c = i * n_random + k;
                    let old = phi[c];
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let prop = old + bank_phi.scales[c] * z;
                    // Normal(0, σ²) prior ratio; the ln σ² terms cancel.
                    let d_prior = 0.5 * (old * old - prop * prop) / sigma2[k];
                    phi[c] = prop;
                    let new_ll =
                        target.unit_loglik(i, &beta, &phi[i * n_random..(i + 1) * n_random]);
                    let accepted = mh_accept(&mut rng, new_ll - unit_ll[i] + d_prior);
                    if accepted {
                        unit_ll[i] = new_ll;
                    } else {
                        phi[c] = old;
                    }
                    bank_phi.record(c, accepted, adapting, &config.adapt);
                }
            }
            // Refresh the cached total so incremental updates cannot drift.
            total_ll = unit_ll.iter().sum();

            // Conjugate Gibbs step for each deviation variance.
            for (k, s2) in sigma2.iter_mut().enumerate() {
                let mut sumsq = 0.0;
                for i in 0..n_units {
                    let p = phi[i * n_random + k];
                    sumsq += p * p;
                }
                let shape = priors.variance_shape + n_units as f64 / 2.0;
                let rate = priors.variance_rate + 0.5 * sumsq;
                *s2 = inv_gamma_draw(shape, rate, &mut rng);
            }
        }

        if it >= config.burn_in && (it - config.burn_in) % config.thin == 0 {
            out_beta.extend_from_slice(&beta);
            for &s2 in &sigma2 {
                assert!(s2 > 0.0, "variance draws must stay positive");
            }
            out_sigma2.extend_from_slice(&sigma2);
            out_deviance.push(-2.0 * total_ll);
            for (m, &p) in phi_means.iter_mut().zip(&phi) {
                m.push(p);
            }
        }
    }

    let post_iters = config.n_iter - config.burn_in;
    let flat_means: Vec<f64> = phi_means.iter().map(RunningMean::mean).collect();
    Ok(ChainDraws {
        n_draws,
        beta: out_beta,
        sigma2: out_sigma2,
        deviance: out_deviance,
        phi_mean: split_by_unit(&flat_means, n_random, n_units),
        accept_beta: bank_beta.post_rates(post_iters),
        accept_phi: split_by_unit(&bank_phi.post_rates(post_iters), n_random, n_units),
        scales_beta_frozen,
        scales_beta: bank_beta.scales,
        scales_phi_frozen: split_by_unit(&scales_phi_frozen, n_random, n_units),
        scales_phi: split_by_unit(&bank_phi.scales, n_random, n_units),
    })
}

/// Strategy for executing the chains of a run. Chains are fully
/// independent given their index, so any runner that produces chain `c`
/// with [`run_chain`]`(target, config, c)` and returns them in index order
/// yields results identical to the sequential runner — callers with an OS
/// underneath can substitute one that spreads chains over threads.
pub trait ChainRunner {
    /// Runs chains `0..config.n_chains` and returns them in chain order.
    fn run<T: Target + Sync>(
        &self,
        target: &T,
        config: &SamplerConfig,
    ) -> Result<Vec<ChainDraws>, SamplerError>;
}

/// Runs every chain on the calling thread, in index order.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialRunner;

impl ChainRunner for SequentialRunner {
    fn run<T: Target + Sync>(
        &self,
        target: &T,
        config: &SamplerConfig,
    ) -> Result<Vec<ChainDraws>, SamplerError> {
        (0..config.n_chains).map(|c| run_chain(target, config, c)).collect()
    }
}

/// Runs all chains with the given runner and assembles the set.
pub fn run_chains_with<T: Target + Sync, R: ChainRunner>(
    target: &T,
    config: &SamplerConfig,
    runner: &R,
) -> Result<ChainSet, SamplerError> {
    config.validate()?;
    Ok(ChainSet {
        n_coef: target.n_coef(),
        n_random: target.n_random(),
        n_units: target.n_units(),
        chains: runner.run(target, config)?,
    })
}

/// Runs all chains sequentially and assembles the set.
pub fn run_chains<T: Target + Sync>(
    target: &T,
    config: &SamplerConfig,
) -> Result<ChainSet, SamplerError> {
    run_chains_with(target, config, &SequentialRunner)
}

/// Design data for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub enum FitData {
    /// Matched strata (conditional families).
    Stratified(StratifiedDesign),
    /// Pooled labeled observations (unconditional family).
    Pooled(PooledDesign),
}

/// Fits a model specification to a design: validates shapes, optionally
/// z-scores covariates for sampling, runs the chains, and returns draws on
/// the raw covariate scale.
pub fn fit(
    spec: &ModelSpec,
    data: &FitData,
    config: &SamplerConfig,
) -> Result<ChainSet, SamplerError> {
    fit_with(spec, data, config, &SequentialRunner)
}

/// [`fit`] with the chain execution strategy chosen by the caller; every
/// runner produces the same result (see [`ChainRunner`]).
pub fn fit_with<R: ChainRunner>(
    spec: &ModelSpec,
    data: &FitData,
    config: &SamplerConfig,
    runner: &R,
) -> Result<ChainSet, SamplerError> {
    spec.validate()?;
    config.validate()?;
    let random_idx = spec.random_indices();

    let mut set = match (data, spec.family.is_conditional()) {
        (FitData::Stratified(design), true) => {
            if design.n_coef() != spec.n_coef() {
                return Err(SamplerError::DataMismatch("covariate count"));
            }
            let (std_design, tr);
            let design = if spec.standardize {
                (std_design, tr) = design.standardized();
                let target = ConditionalTarget::new(&std_design, random_idx.clone(), spec.priors);
                let set = run_chains_with(&target, config, runner)?;
                return Ok(unstandardize(set, &tr, &random_idx));
            } else {
                design
            };
            let target = ConditionalTarget::new(design, random_idx, spec.priors);
            run_chains_with(&target, config, runner)?
        }
        (FitData::Pooled(design), false) => {
            if design.n_coef() != spec.n_coef() {
                return Err(SamplerError::DataMismatch("covariate count"));
            }
            if spec.standardize {
                let (std_design, tr) = design.standardized();
                let target = PooledTarget::new(&std_design, random_idx.clone(), spec.priors);
                let set = run_chains_with(&target, config, runner)?;
                return Ok(unstandardize(set, &tr, &random_idx));
            }
            let target = PooledTarget::new(design, random_idx, spec.priors);
            run_chains_with(&target, config, runner)?
        }
        _ => return Err(SamplerError::DataMismatch("family/design kind")),
    };
    set.n_units = match data {
        FitData::Stratified(d) => d.n_strata(),
        FitData::Pooled(d) => d.n_obs(),
    };
    Ok(set)
}

/// Maps a chain set sampled on the standardized scale back to raw
/// coefficients; the likelihood (hence stored deviance) is invariant.
fn unstandardize(
    mut set: ChainSet,
    tr: &likelihoods::Standardization,
    random_idx: &[usize],
) -> ChainSet {
    for chain in &mut set.chains {
        for d in 0..chain.n_draws {
            let row = &mut chain.beta[d * set.n_coef..(d + 1) * set.n_coef];
            let raw = tr.raw_beta(row);
            row.copy_from_slice(&raw);
            for (k, &idx) in random_idx.iter().enumerate() {
                let v = &mut chain.sigma2[d * set.n_random + k];
                *v = tr.raw_sigma2(idx, *v);
            }
        }
        for (k, &idx) in random_idx.iter().enumerate() {
            for m in &mut chain.phi_mean[k] {
                *m /= tr.sds[idx];
            }
        }
    }
    set
}

/// Potential scale reduction `R̂ = sqrt(((n−1)/n·W + B/n)/W)` for one
/// scalar across chains; `None` when the within-chain variance is zero
/// (degenerate chains make the statistic undefined).
pub fn bgr(chains: &[&[f64]]) -> Option<f64> {
    let m = chains.len();
    assert!(m >= 2, "BGR needs at least two chains");
    let n = chains[0].len();
    assert!(n >= 2, "BGR needs at least two draws per chain");
    assert!(chains.iter().all(|c| c.len() == n), "equal chain lengths");

    let mut means = Vec::with_capacity(m);
    let mut w = 0.0;
    for c in chains {
        let (mean, sd) = math::mean_sd(c);
        means.push(mean);
        w += sd * sd;
    }
    let w = w / m as f64;
    let (_, sd_means) = math::mean_sd(&means);
    let b_over_n = sd_means * sd_means;
    if w == 0.0 {
        return None;
    }
    let n = n as f64;
    Some(math::sqrt((n - 1.0) / n + b_over_n / w))
}

/// Monte Carlo standard error of a pooled posterior mean by batch means:
/// each chain is cut into consecutive batches of `batch` draws (remainder
/// dropped) and the spread of batch means estimates the error.
pub fn mcse_batch_means(chains: &[&[f64]], batch: usize) -> f64 {
    assert!(batch >= 2, "batch size must be at least 2");
    let mut batch_means = Vec::new();
    for c in chains {
        for chunk in c.chunks_exact(batch) {
            batch_means.push(chunk.iter().sum::<f64>() / batch as f64);
        }
    }
    assert!(batch_means.len() >= 2, "need at least two batches");
    let (_, sd) = math::mean_sd(&batch_means);
    sd / math::sqrt(batch_means.len() as f64)
}

/// Posterior summary of one sampled scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    /// Coefficient name, or `sigma2_<name>` for a deviation variance.
    pub name: String,
    /// Posterior mean (pooled across chains).
    pub mean: f64,
    /// Posterior standard deviation.
    pub sd: f64,
    /// 2.5% quantile (lower end of the 95% BCI).
    pub lower: f64,
    /// 97.5% quantile (upper end of the 95% BCI).
    pub upper: f64,
    /// `exp(mean)` for coefficients; absent for variances.
    pub hazard_ratio: Option<f64>,
    /// Potential scale reduction; absent when undefined (single chain or
    /// degenerate draws).
    pub rhat: Option<f64>,
    /// Whether the 95% BCI excludes zero (the significance convention used
    /// in the summary tables; trivially true for variances).
    pub significant: bool,
}

fn summarize_scalar(name: String, chains: &[Vec<f64>], hazard: bool) -> ParameterSummary {
    let pooled_n: usize = chains.iter().map(Vec::len).sum();
    let mut pooled = Vec::with_capacity(pooled_n);
    for c in chains {
        pooled.extend_from_slice(c);
    }
    let (mean, sd) = math::mean_sd(&pooled);
    pooled.sort_unstable_by(f64::total_cmp);
    let lower = math::quantile_sorted(&pooled, 0.025);
    let upper = math::quantile_sorted(&pooled, 0.975);
    let rhat = if chains.len() >= 2 && chains[0].len() >= 2 {
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        bgr(&refs)
    } else {
        None
    };
    ParameterSummary {
        name,
        mean,
        sd,
        lower,
        upper,
        hazard_ratio: hazard.then(|| math::exp(mean)),
        rhat,
        significant: lower > 0.0 || upper < 0.0,
    }
}

/// Posterior summaries for every sampled scalar: coefficients first (in
/// specification order), then deviation variances.
pub fn summarize(spec: &ModelSpec, set: &ChainSet) -> Vec<ParameterSummary> {
    assert_eq!(spec.n_coef(), set.n_coef, "spec/chain shape mismatch");
    assert_eq!(spec.random.len(), set.n_random, "spec/chain shape mismatch");
    let mut rows = Vec::with_capacity(set.n_coef + set.n_random);
    for (k, name) in spec.coef_names().into_iter().enumerate() {
        rows.push(summarize_scalar(name, &set.beta_chains(k), true));
    }
    for (k, name) in spec.random.iter().enumerate() {
        rows.push(summarize_scalar(format!("sigma2_{name}"), &set.sigma2_chains(k), false));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihoods::Family;
    use alloc::string::ToString;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    /// Bernoulli-counts posterior over a single intercept, with a pluggable
    /// coefficient prior. With the standard-logistic prior the implied
    /// success probability is exactly Beta(successes+1, failures+1).
    struct BinomialIntercept {
        successes: f64,
        failures: f64,
        priors: PriorSpec,
        logistic_prior: bool,
    }

    impl Target for BinomialIntercept {
        fn n_coef(&self) -> usize {
            1
        }
        fn n_random(&self) -> usize {
            0
        }
        fn n_units(&self) -> usize {
            1
        }
        fn unit_loglik(&self, _unit: usize, beta: &[f64], _phi: &[f64]) -> f64 {
            let b = beta[0];
            -self.successes * math::log1p_exp(-b) - self.failures * math::log1p_exp(b)
        }
        fn priors(&self) -> &PriorSpec {
            &self.priors
        }
        fn log_prior_coef(&self, _k: usize, value: f64) -> f64 {
            if self.logistic_prior {
                -math::log1p_exp(-value) - math::log1p_exp(value)
            } else {
                math::normal_logpdf(value, 0.0, self.priors.coef_variance)
            }
        }
    }

    fn toy() -> BinomialIntercept {
        BinomialIntercept {
            successes: 70.0,
            failures: 30.0,
            priors: PriorSpec::default(),
            logistic_prior: true,
        }
    }

    fn quick_config(seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_chains: 3,
            n_iter: 1200,
            burn_in: 400,
            seed,
            initial_scale: 0.3,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let ok = SamplerConfig::default();
        assert!(ok.validate().is_ok());
        assert_eq!(ok.draws_per_chain(), 15_000);

        let bad = SamplerConfig { burn_in: 20_000, ..ok };
        assert!(matches!(bad.validate(), Err(SamplerError::Config(_))));
        let bad = SamplerConfig { thin: 0, ..ok };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig { initial_scale: 0.0, ..ok };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            adapt: AdaptSpec { target_accept: 1.5, ..AdaptSpec::default() },
            ..ok
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let target = toy();
        let config = quick_config(42);
        let a = run_chains(&target, &config).unwrap();
        let b = run_chains(&target, &config).unwrap();
        assert_eq!(a, b);
        let c = run_chains(&target, &SamplerConfig { seed: 43, ..config }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chains_start_overdispersed() {
        // With an empty likelihood, a near-flat prior, and a microscopic
        // frozen proposal scale, the first retained draw sits at the
        // initialization point.
        struct Flat(PriorSpec);
        impl Target for Flat {
            fn n_coef(&self) -> usize {
                2
            }
            fn n_random(&self) -> usize {
                0
            }
            fn n_units(&self) -> usize {
                0
            }
            fn unit_loglik(&self, _: usize, _: &[f64], _: &[f64]) -> f64 {
                0.0
            }
            fn priors(&self) -> &PriorSpec {
                &self.0
            }
        }
        let config = SamplerConfig {
            n_chains: 3,
            n_iter: 1,
            burn_in: 0,
            initial_scale: 1e-12,
            ..SamplerConfig::default()
        };
        let set = run_chains(&Flat(PriorSpec::default()), &config).unwrap();
        for (chain, want) in [(0, 0.0), (1, 0.5), (2, -0.5)] {
            for k in 0..2 {
                assert_relative_eq!(
                    set.chains[chain].beta[k],
                    want,
                    epsilon = 1e-6,
                    max_relative = 1e-6
                );
            }
        }
    }

    #[test]
    fn non_finite_initialization_is_reported() {
        struct Broken(PriorSpec);
        impl Target for Broken {
            fn n_coef(&self) -> usize {
                1
            }
            fn n_random(&self) -> usize {
                0
            }
            fn n_units(&self) -> usize {
                1
            }
            fn unit_loglik(&self, _: usize, _: &[f64], _: &[f64]) -> f64 {
                f64::NEG_INFINITY
            }
            fn priors(&self) -> &PriorSpec {
                &self.0
            }
        }
        let err = run_chains(&Broken(PriorSpec::default()), &quick_config(1)).unwrap_err();
        assert_eq!(err, SamplerError::NonFiniteInit { chain: 0 });
    }

    /// The Metropolis rule itself, checked for detailed balance on a
    /// two-point target: always propose the other state, accept with the
    /// posterior ratio; long-run occupancy must match the target mass.
    #[test]
    fn accept_rule_preserves_two_point_target() {
        let p = [0.3, 0.7];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut state = 0usize;
        let mut visits = [0u64; 2];
        let steps = 1_000_000;
        for _ in 0..steps {
            let other = 1 - state;
            if mh_accept(&mut rng, math::ln(p[other]) - math::ln(p[state])) {
                state = other;
            }
            visits[state] += 1;
        }
        let freq = visits[1] as f64 / steps as f64;
        assert!((freq - 0.7).abs() < 0.01, "occupancy {freq} too far from 0.7");
    }

    #[test]
    fn gibbs_sigma_matches_conjugate_form() {
        let priors = PriorSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);

        // All-zero deviations leave only the prior rate; the implied
        // InvGamma(50.001, 0.001) concentrates near zero.
        let zeros = vec![0.0; 100];
        let draws: Vec<f64> =
            (0..2000).map(|_| gibbs_sigma(&zeros, &priors, &mut rng)).collect();
        assert!(draws.iter().all(|&d| d > 0.0 && d.is_finite()));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        // Closed-form mean: rate/(shape−1) = 0.001/49.001 ≈ 2.04e-5.
        assert_relative_eq!(mean, 0.001 / 49.001, max_relative = 0.2);

        // Monte Carlo mean against rate/(shape−1) on a better-conditioned
        // case: shape 3.0 via 5.998 pseudo-units, rate 2.0 via sum of
        // squares. Easier to pin with an explicit draw helper:
        let mut total = 0.0;
        let n = 100_000;
        for _ in 0..n {
            total += inv_gamma_draw(3.0, 2.0, &mut rng);
        }
        assert_relative_eq!(total / n as f64, 2.0 / (3.0 - 1.0), max_relative = 0.02);

        // No units: a draw from the prior, positive and finite.
        let d = gibbs_sigma(&[], &priors, &mut rng);
        assert!(d > 0.0 && d.is_finite());
    }

    #[test]
    fn proposal_scales_freeze_at_burn_in() {
        let target = toy();
        let config = quick_config(7);
        let set = run_chains(&target, &config).unwrap();
        for chain in &set.chains {
            assert_eq!(chain.scales_beta_frozen, chain.scales_beta);
            assert_eq!(chain.scales_phi_frozen, chain.scales_phi);
            // Adaptation actually moved the scale off its initial value.
            assert_ne!(chain.scales_beta[0], config.initial_scale);
            // And acceptance ended up in a sane band around the target.
            assert!(chain.accept_beta[0] > 0.15 && chain.accept_beta[0] < 0.8);
        }
    }

    #[test]
    fn bgr_flags_and_limits() {
        // Identical chains: B = 0, so R̂ = sqrt((n−1)/n) exactly.
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let r = bgr(&[&a, &a]).unwrap();
        assert_eq!(r, math::sqrt(99.0 / 100.0));

        // Constant chains: W = 0 → undefined.
        let z = vec![0.0; 50];
        let o = vec![1.0; 50];
        assert_eq!(bgr(&[&z, &o]), None);

        // Far-apart chains: R̂ well above 1.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c1: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let c2: Vec<f64> = (0..2000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                3.0 + z
            })
            .collect();
        assert!(bgr(&[&c1, &c2]).unwrap() > 1.5);
    }

    #[test]
    fn mcse_shrinks_with_sample_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let short: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let long: Vec<f64> = (0..64000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e_short = mcse_batch_means(&[&short], 50);
        let e_long = mcse_batch_means(&[&long], 50);
        assert!(e_long < e_short);
        // For iid draws the truth is sd/sqrt(n) ≈ 0.00395 at n = 64000.
        assert_relative_eq!(e_long, 1.0 / math::sqrt(64000.0), max_relative = 0.35);
    }

    #[test]
    fn summaries_pool_chains_and_flag_significance() {
        let spec = ModelSpec {
            family: Family::ConditionalLogistic,
            covariates: vec!["x".to_string()],
            random: vec![],
            slice: 1,
            priors: PriorSpec::default(),
            standardize: false,
        };
        // Hand-built degenerate chain set: every draw equals −0.025.
        let chain = ChainDraws {
            n_draws: 4,
            beta: vec![-0.025; 4],
            sigma2: vec![],
            deviance: vec![10.0; 4],
            phi_mean: vec![],
            accept_beta: vec![0.44],
            accept_phi: vec![],
            scales_beta_frozen: vec![0.1],
            scales_beta: vec![0.1],
            scales_phi_frozen: vec![],
            scales_phi: vec![],
        };
        let set =
            ChainSet { n_coef: 1, n_random: 0, n_units: 0, chains: vec![chain.clone(), chain] };
        let rows = summarize(&spec, &set);
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.mean, -0.025);
        assert_eq!(row.sd, 0.0);
        assert_eq!((row.lower, row.upper), (-0.025, -0.025));
        assert_relative_eq!(row.hazard_ratio.unwrap(), 0.975, epsilon = 5e-4);
        assert!(row.significant);
        assert_eq!(row.rhat, None); // degenerate chains: W = 0

        let state = set.posterior_mean();
        assert_eq!(state.beta, vec![-0.025]);
        assert_eq!(set.mean_deviance(), 10.0);
    }

    #[test]
    fn fit_wires_designs_and_rejects_mismatches() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, size, k) = (40, 5, 2);
        let x: Vec<f64> = (0..n * size * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cases: Vec<usize> = (0..n).map(|_| rng.gen_range(0..size)).collect();
        let design = StratifiedDesign::new(n, size, k, x, cases);
        let spec = ModelSpec {
            family: Family::ConditionalLogistic,
            covariates: vec!["a".to_string(), "b".to_string()],
            random: vec![],
            slice: 1,
            priors: PriorSpec::default(),
            standardize: false,
        };
        let config = SamplerConfig {
            n_chains: 2,
            n_iter: 400,
            burn_in: 100,
            ..SamplerConfig::default()
        };
        let set = fit(&spec, &FitData::Stratified(design.clone()), &config).unwrap();
        assert_eq!(set.n_coef, 2);
        assert_eq!(set.n_draws(), 300);
        assert_eq!(set.n_units, n);
        assert!(set.chains[0].beta.iter().all(|b| b.is_finite()));

        // Family/design kind mismatch.
        let pooled = PooledDesign::new(1, 2, vec![1.0, 0.0], vec![true]);
        assert_eq!(
            fit(&spec, &FitData::Pooled(pooled), &config).unwrap_err(),
            SamplerError::DataMismatch("family/design kind"),
        );

        // Covariate-count mismatch.
        let spec3 = ModelSpec { covariates: vec!["a".to_string()], ..spec.clone() };
        assert_eq!(
            fit(&spec3, &FitData::Stratified(design), &config).unwrap_err(),
            SamplerError::DataMismatch("covariate count"),
        );
    }

    #[test]
    fn standardized_fits_report_raw_scale() {
        // Covariates on wildly different scales; the stored deviance must
        // match a recomputation from the back-transformed coefficients.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (n, size) = (30, 5);
        let mut x = Vec::new();
        for _ in 0..n * size {
            x.push(rng.gen_range(20.0..60.0)); // speed-like
            x.push(rng.gen_range(0.0..1.0)); // indicator-like
        }
        let design = StratifiedDesign::new(n, size, 2, x, vec![0; n]);
        let spec = ModelSpec {
            family: Family::ConditionalLogistic,
            covariates: vec!["speed".to_string(), "flag".to_string()],
            random: vec![],
            slice: 1,
            priors: PriorSpec::default(),
            standardize: true,
        };
        let config = SamplerConfig {
            n_chains: 2,
            n_iter: 300,
            burn_in: 100,
            seed: 9,
            ..SamplerConfig::default()
        };
        let set = fit(&spec, &FitData::Stratified(design.clone()), &config).unwrap();
        for chain in &set.chains {
            for d in (0..chain.n_draws).step_by(37) {
                let beta = &chain.beta[d * 2..d * 2 + 2];
                let dev = -2.0 * likelihoods::conditional_loglik(&design, beta);
                assert_relative_eq!(chain.deviance[d], dev, epsilon = 1e-8, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn rp_conditional_smoke_run_keeps_variances_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (n, size, k) = (25, 5, 2);
        let x: Vec<f64> = (0..n * size * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let design = StratifiedDesign::new(n, size, k, x, vec![0; n]);
        let spec = ModelSpec {
            family: Family::RpConditionalLogistic,
            covariates: vec!["a".to_string(), "b".to_string()],
            random: vec!["b".to_string()],
            slice: 1,
            priors: PriorSpec::default(),
            standardize: false,
        };
        let config = SamplerConfig {
            n_chains: 2,
            n_iter: 500,
            burn_in: 200,
            seed: 3,
            ..SamplerConfig::default()
        };
        let set = fit(&spec, &FitData::Stratified(design), &config).unwrap();
        assert_eq!(set.n_random, 1);
        for chain in &set.chains {
            assert!(chain.sigma2.iter().all(|&s| s > 0.0));
            assert_eq!(chain.phi_mean[0].len(), n);
            assert!(chain.phi_mean[0].iter().all(|p| p.is_finite()));
        }
        let rows = summarize(&spec, &set);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].name, "sigma2_b");
        assert_eq!(rows[2].hazard_ratio, None);
        assert!(rows[2].significant); // variances are positive by definition
    }

    /// Short-run version of the conjugate-toy calibration: with the
    /// standard-logistic intercept prior the implied success probability is
    /// Beta(71, 31), mean 71/102.
    #[test]
    fn binomial_toy_tracks_conjugate_posterior() {
        let target = toy();
        let config = SamplerConfig {
            n_chains: 3,
            n_iter: 4000,
            burn_in: 1000,
            seed: 12,
            initial_scale: 0.3,
            ..SamplerConfig::default()
        };
        let set = run_chains(&target, &config).unwrap();
        let mut mean_p = RunningMean::default();
        for chain in &set.chains {
            for d in 0..chain.n_draws {
                mean_p.push(math::logistic(chain.beta[d]));
            }
        }
        assert_relative_eq!(mean_p.mean(), 71.0 / 102.0, epsilon = 0.01);
    }
}
