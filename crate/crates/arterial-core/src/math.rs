//! Scalar math helpers shared across the crate.
//!
//! All transcendental functions are routed through `libm` rather than the
//! `std` float methods: the crate is `no_std`, and `libm` is pure Rust, so
//! identical inputs produce identical bits on every platform.

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_6;

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `log(1 + exp(x))` without overflow for large `|x|`.
#[inline]
pub(crate) fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + ln_1p(exp(-x))
    } else {
        ln_1p(exp(x))
    }
}

/// Numerically stable logistic function `1 / (1 + exp(-x))`.
#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `log(sum(exp(xs)))` stabilized by subtracting the maximum.
///
/// Returns negative infinity for an empty slice or when every entry is
/// negative infinity.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for &x in xs {
        sum += exp(x - max);
    }
    max + ln(sum)
}

/// Log-density of `Normal(mean, variance)` at `x`.
#[inline]
pub(crate) fn normal_logpdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + ln(variance) + d * d / variance)
}

/// Log-density of `InverseGamma(shape, rate)` at `x`.
///
/// Parameterized so that if `G ~ Gamma(shape, rate)` then `1/G` follows this
/// distribution; the density is
/// `rate^shape / Γ(shape) · x^(-shape-1) · exp(-rate/x)` for `x > 0`.
pub(crate) fn inv_gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * ln(rate) - ln_gamma(shape) - (shape + 1.0) * ln(x) - rate / x
}

/// Quantile of a sorted slice by linear interpolation between order
/// statistics (the convention where the `q`-quantile sits at fractional
/// index `(n - 1) * q`).
///
/// Panics if the slice is empty or `q` is outside `[0, 1]`.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = floor(h) as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 == sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Median and interquartile range of a sorted slice.
pub(crate) fn median_iqr_sorted(sorted: &[f64]) -> (f64, f64) {
    let median = quantile_sorted(sorted, 0.5);
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    (median, iqr)
}

/// Streaming mean that is exact for constant input sequences.
#[derive(Debug, Clone, Default)]
pub(crate) struct RunningMean {
    n: u64,
    mean: f64,
}

impl RunningMean {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        self.mean += (x - self.mean) / self.n as f64;
    }

    pub(crate) fn mean(&self) -> f64 {
        self.mean
    }

    #[cfg(test)]
    pub(crate) fn count(&self) -> u64 {
        self.n
    }
}

/// Sample mean and standard deviation (the `n - 1` denominator); a single
/// observation has standard deviation zero.
pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    assert!(!xs.is_empty(), "mean of empty slice");
    // Welford's update: exact for constant input (mean = the constant,
    // sd = 0), which downstream summary invariants rely on.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    (mean, sqrt(m2 / (xs.len() as f64 - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{Continuous, InverseGamma, Normal};

    #[test]
    fn log_sum_exp_matches_naive_on_small_values() {
        let xs = [0.3, -1.2, 0.9, 0.0];
        let naive = ln(xs.iter().map(|&x| exp(x)).sum::<f64>());
        assert_relative_eq!(log_sum_exp(&xs), naive, max_relative = 1e-14);
    }

    #[test]
    fn log_sum_exp_survives_large_shifts() {
        let xs = [0.3, -1.2, 0.9, 0.0];
        let base = log_sum_exp(&xs);
        let shifted: alloc::vec::Vec<f64> = xs.iter().map(|&x| x + 1000.0).collect();
        assert_relative_eq!(log_sum_exp(&shifted) - 1000.0, base, epsilon = 1e-9);
    }

    #[test]
    fn log_sum_exp_of_empty_is_neg_infinity() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn log1p_exp_is_stable_in_both_tails() {
        assert_relative_eq!(log1p_exp(0.0), ln(2.0), max_relative = 1e-15);
        assert_relative_eq!(log1p_exp(800.0), 800.0, max_relative = 1e-12);
        assert_relative_eq!(log1p_exp(-30.0), exp(-30.0), max_relative = 1e-12);
        assert_eq!(log1p_exp(-800.0), 0.0); // exp underflows cleanly
        assert_eq!(log1p_exp(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn logistic_edges() {
        assert_relative_eq!(logistic(0.0), 0.5, max_relative = 1e-15);
        assert_eq!(logistic(f64::INFINITY), 1.0);
        assert_eq!(logistic(f64::NEG_INFINITY), 0.0);
        assert_relative_eq!(logistic(2.0) + logistic(-2.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn normal_logpdf_matches_reference_implementation() {
        let cases = [(0.0, 0.0, 1e6), (1.5, -0.3, 2.25), (-4.0, 1.0, 0.04)];
        for (x, mean, var) in cases {
            let reference = Normal::new(mean, sqrt(var)).unwrap().ln_pdf(x);
            assert_relative_eq!(normal_logpdf(x, mean, var), reference, max_relative = 1e-12);
        }
    }

    #[test]
    fn inv_gamma_logpdf_matches_reference_implementation() {
        // statrs parameterizes InverseGamma(shape, rate) identically.
        let cases = [(1.0, 0.001, 0.001), (0.5, 2.0, 3.0), (4.2, 50.001, 0.001)];
        for (x, shape, rate) in cases {
            let reference = InverseGamma::new(shape, rate).unwrap().ln_pdf(x);
            assert_relative_eq!(inv_gamma_logpdf(x, shape, rate), reference, max_relative = 1e-10);
        }
        assert_eq!(inv_gamma_logpdf(0.0, 0.001, 0.001), f64::NEG_INFINITY);
        assert_eq!(inv_gamma_logpdf(-1.0, 0.001, 0.001), f64::NEG_INFINITY);
    }

    #[test]
    fn quantiles_interpolate_between_order_statistics() {
        // 15 consecutive integers 20..=34: median 27, Q1 23.5, Q3 30.5.
        let xs: alloc::vec::Vec<f64> = (20..=34).map(f64::from).collect();
        let (median, iqr) = median_iqr_sorted(&xs);
        assert_eq!(median, 27.0);
        assert_eq!(quantile_sorted(&xs, 0.25), 23.5);
        assert_eq!(quantile_sorted(&xs, 0.75), 30.5);
        assert_eq!(iqr, 7.0);
    }

    #[test]
    fn quantile_endpoints_are_min_and_max() {
        let xs = [1.0, 2.0, 10.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 10.0);
        assert_eq!(quantile_sorted(&[5.0], 0.5), 5.0);
    }

    #[test]
    fn running_mean_is_exact_for_constant_input() {
        let mut rm = RunningMean::default();
        for _ in 0..1000 {
            rm.push(0.1);
        }
        assert_eq!(rm.mean(), 0.1);
        assert_eq!(rm.count(), 1000);
    }

    #[test]
    fn mean_sd_uses_sample_denominator() {
        let (mean, sd) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_relative_eq!(mean, 5.0, max_relative = 1e-15);
        assert_relative_eq!(sd, sqrt(32.0 / 7.0), max_relative = 1e-15);
        let (m1, s1) = mean_sd(&[42.0]);
        assert_eq!(m1, 42.0);
        assert_eq!(s1, 0.0);
    }
}
