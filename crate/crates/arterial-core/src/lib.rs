//! Real-time crash risk estimation for signalized urban arterials.
//!
//! This crate implements the full modelling core for a matched case-control
//! study of crash risk on arterial road segments instrumented with Bluetooth
//! travel-time detectors and adaptive signal controllers:
//!
//! * [`features`] — turns raw detector logs (traversal times, signal phases,
//!   turning-movement volumes, weather records) into per-event covariate
//!   vectors over four 5-minute slices preceding the event.
//! * [`case_control`] — builds matched strata (one crash case plus `m`
//!   non-crash controls drawn from the same segment, clock time, and day of
//!   week in different weeks) and splits them into training and validation
//!   sets.
//! * [`likelihoods`] — exact log-likelihood, prior, and odds-ratio kernels
//!   for three Bayesian model families: conditional logistic regression and
//!   its random-parameter extensions.
//! * [`mcmc`] — an adaptive Metropolis-within-Gibbs sampler with multiple
//!   chains, convergence diagnostics, and posterior summaries.
//! * [`evaluation`] — DIC model comparison, event scoring, and ROC/AUC.
//! * [`synthetic_world`] — a generator for synthetic corridors with known
//!   ground-truth risk coefficients, used for end-to-end validation.
//!
//! The crate is `no_std` (with `alloc`); all floating-point transcendentals
//! go through `libm` so results are reproducible across platforms. File
//! formats, CSV/JSON handling, and the command-line interface live in the
//! companion `arterial-risk` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod case_control;
pub mod evaluation;
pub mod features;
pub mod likelihoods;
pub mod mcmc;
pub mod rng;
pub mod synthetic_world;
pub mod time;

mod math;
