use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

use super::{DistSpec, MIN_FIT_SAMPLES};

/// Goodness-of-fit statistics of a sample against a model. Raw statistics,
/// no p-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofReport<T = f64> {
    /// Kolmogorov-Smirnov sup-distance, in `[0, 1]`.
    pub ks: T,
    /// Anderson-Darling A².
    pub ad: T,
    /// Chi-squared over equal-probability bins.
    pub chi2: T,
    pub chi2_bins: usize,
}

fn sorted<T: Scalar>(samples: &[T]) -> Vec<T> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    v
}

/// Runs all three tests.
pub fn gof<T: Scalar>(samples: &[T], spec: &DistSpec<T>) -> Result<GofReport<T>> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData { needed: MIN_FIT_SAMPLES, got: samples.len() });
    }
    let (chi2, chi2_bins) = chi_squared(samples, spec);
    Ok(GofReport { ks: ks_statistic(samples, spec), ad: anderson_darling(samples, spec), chi2, chi2_bins })
}

/// `sup |F_n(x) - F(x)|` with the step empirical CDF.
pub fn ks_statistic<T: Scalar>(samples: &[T], spec: &DistSpec<T>) -> T {
    let xs = sorted(samples);
    let n = T::of(xs.len() as f64);
    let mut d = T::zero();
    for (i, &x) in xs.iter().enumerate() {
        let f = spec.cdf(x);
        let above = T::of((i + 1) as f64) / n - f;
        let below = f - T::of(i as f64) / n;
        d = d.max(above).max(below);
    }
    d
}

/// Anderson-Darling `A² = -n - (1/n) Σ (2i-1) [ln F(x_i) + ln(1 - F(x_{n+1-i}))]`.
///
/// Model CDF values are clamped away from 0 and 1 so that samples in the
/// extreme tails give a large finite statistic.
pub fn anderson_darling<T: Scalar>(samples: &[T], spec: &DistSpec<T>) -> T {
    let xs = sorted(samples);
    let n = xs.len();
    let eps = T::epsilon();
    let f: Vec<T> = xs.iter().map(|&x| spec.cdf(x).max(eps).min(T::one() - eps)).collect();
    let mut acc = T::zero();
    for i in 0..n {
        let weight = T::of((2 * i + 1) as f64);
        acc = acc + weight * (f[i].ln() + (-f[n - 1 - i]).ln_1p());
    }
    let nt = T::of(n as f64);
    (-nt - acc / nt).max(T::zero())
}

/// Number of equal-probability bins used for `n` samples: `ceil(2 n^(2/5))`.
pub fn chi_squared_bins(n: usize) -> usize {
    (2.0 * (n as f64).powf(0.4)).ceil() as usize
}

/// Chi-squared statistic over equal-probability bins, with the bin count.
pub fn chi_squared<T: Scalar>(samples: &[T], spec: &DistSpec<T>) -> (T, usize) {
    let n = samples.len();
    let k = chi_squared_bins(n).max(1);
    let mut observed = vec![0usize; k];
    for &x in samples {
        let f = spec.cdf(x).as_f64();
        let bin = ((f * k as f64).floor() as usize).min(k - 1);
        observed[bin] += 1;
    }
    let expected = n as f64 / k as f64;
    let chi2 = observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum::<f64>();
    (T::of(chi2), k)
}

/// P-P plot points `((i - 0.5)/n, F(x_(i)))` over the sorted sample.
pub fn pp_points<T: Scalar>(samples: &[T], spec: &DistSpec<T>) -> Result<Vec<(T, T)>> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let xs = sorted(samples);
    let n = T::of(xs.len() as f64);
    Ok(xs.iter().enumerate().map(|(i, &x)| ((T::of(i as f64) + T::of(0.5)) / n, spec.cdf(x))).collect())
}
