use crate::{Error, Result, Scalar};

use super::{DistSpec, Family};

/// Fewest samples accepted by [`fit`] and [`super::gof`].
pub const MIN_FIT_SAMPLES: usize = 30;

/// Fits `family` to `samples`.
///
/// - Lognormal: mean and population standard deviation of the log-samples.
/// - Weibull: maximum likelihood, shape solved numerically.
/// - Generalized Pareto: location fixed to the sample minimum, shape and
///   scale by maximum likelihood on the excesses over it.
pub fn fit<T: Scalar>(family: Family, samples: &[T]) -> Result<DistSpec<T>> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData { needed: MIN_FIT_SAMPLES, got: samples.len() });
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite sample {bad}")));
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(Error::DegenerateFit(format!("all {} samples equal {first}", samples.len())));
    }
    match family {
        Family::Lognormal => fit_lognormal(samples),
        Family::Weibull => fit_weibull(samples),
        Family::GeneralizedPareto => fit_generalized_pareto(samples),
    }
}

fn require_positive<T: Scalar>(family: Family, samples: &[T]) -> Result<()> {
    match samples.iter().find(|&&x| x <= T::zero()) {
        Some(x) => Err(Error::Domain(format!("{family} requires positive samples, found {x}"))),
        None => Ok(()),
    }
}

fn fit_lognormal<T: Scalar>(samples: &[T]) -> Result<DistSpec<T>> {
    require_positive(Family::Lognormal, samples)?;
    let n = T::of(samples.len() as f64);
    let mu = samples.iter().map(|x| x.ln()).fold(T::zero(), |a, b| a + b) / n;
    let var = samples
        .iter()
        .map(|x| {
            let d = x.ln() - mu;
            d * d
        })
        .fold(T::zero(), |a, b| a + b)
        / n;
    DistSpec::lognormal(mu, var.sqrt())
}

/// Weibull shape score `1/a + mean(ln y) - Σ y^a ln y / Σ y^a` and its
/// derivative, for samples normalized to `y <= 1`.
fn weibull_score<T: Scalar>(shape: T, log_y: &[T], mean_log: T) -> (T, T) {
    let mut s0 = T::zero();
    let mut s1 = T::zero();
    let mut s2 = T::zero();
    for &l in log_y {
        let w = (shape * l).exp();
        s0 = s0 + w;
        s1 = s1 + w * l;
        s2 = s2 + w * l * l;
    }
    let r1 = s1 / s0;
    let r2 = s2 / s0;
    let g = shape.recip() + mean_log - r1;
    let dg = -(shape * shape).recip() - (r2 - r1 * r1);
    (g, dg)
}

fn fit_weibull<T: Scalar>(samples: &[T]) -> Result<DistSpec<T>> {
    require_positive(Family::Weibull, samples)?;
    let n = T::of(samples.len() as f64);
    let max = samples.iter().copied().fold(T::zero(), T::max);
    let log_y: Vec<T> = samples.iter().map(|&x| (x / max).ln()).collect();
    let mean_log = log_y.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let var_log = log_y.iter().map(|&l| (l - mean_log) * (l - mean_log)).fold(T::zero(), |a, b| a + b) / n;

    // Moment start: sd(ln X) = pi / (shape sqrt 6).
    let guess = T::PI() / (T::of(6.0).sqrt() * var_log.sqrt());
    let score = |a: T| weibull_score(a, &log_y, mean_log);

    // The score is strictly decreasing in the shape; bracket its root.
    let mut lo = guess;
    let mut hi = guess;
    for _ in 0..200 {
        if score(lo).0 > T::zero() {
            break;
        }
        lo = lo / T::of(2.0);
    }
    for _ in 0..200 {
        if score(hi).0 < T::zero() {
            break;
        }
        hi = hi * T::of(2.0);
    }
    if !(score(lo).0 > T::zero() && score(hi).0 < T::zero()) {
        return Err(Error::DegenerateFit("could not bracket the Weibull shape".into()));
    }

    // Safeguarded Newton.
    let tol = T::epsilon().sqrt() * T::of(1e-2);
    let mut shape = guess.max(lo).min(hi);
    for _ in 0..200 {
        let (g, dg) = score(shape);
        if g > T::zero() {
            lo = shape;
        } else {
            hi = shape;
        }
        let mut next = shape - g / dg;
        if !(next > lo && next < hi) {
            next = (lo + hi) / T::of(2.0);
        }
        let step = (next - shape).abs();
        shape = next;
        if step <= tol * shape || hi - lo <= tol * shape {
            break;
        }
    }

    let mean_pow = log_y.iter().map(|&l| (shape * l).exp()).fold(T::zero(), |a, b| a + b) / n;
    let scale = max * mean_pow.powf(shape.recip());
    DistSpec::weibull(shape, scale)
}

/// Profile log-likelihood of the generalized Pareto excesses at
/// `theta = shape / scale`, returning `(loglik, shape)`.
fn gpd_profile<T: Scalar>(theta: T, excess: &[T]) -> Option<(T, T)> {
    let n = T::of(excess.len() as f64);
    let mut sum = T::zero();
    for &y in excess {
        let t = theta * y;
        if t <= -T::one() {
            return None;
        }
        sum = sum + t.ln_1p();
    }
    let shape = sum / n;
    if shape == T::zero() {
        return None;
    }
    let scale = shape / theta;
    if !(scale > T::zero()) {
        return None;
    }
    Some((-n * scale.ln() - n * (T::one() + shape), shape))
}

fn golden_max<T: Scalar, F: Fn(T) -> T>(f: F, mut a: T, mut b: T, iters: usize) -> T {
    let ratio = T::of((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    (a + b) / T::of(2.0)
}

fn fit_generalized_pareto<T: Scalar>(samples: &[T]) -> Result<DistSpec<T>> {
    let location = samples.iter().copied().fold(T::infinity(), T::min);
    let excess: Vec<T> = samples.iter().map(|&x| x - location).collect();
    let n = T::of(excess.len() as f64);
    let mean = excess.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let max = excess.iter().copied().fold(T::zero(), T::max);

    // Exponential limit (shape -> 0).
    let best_ll = -n * mean.ln() - n;
    let mut best = (T::zero(), mean);

    let neg_inf = T::neg_infinity();
    let ll_at = |theta: T| gpd_profile(theta, &excess).map_or(neg_inf, |(ll, _)| ll);

    // theta > 0 on a log grid in units of 1/mean; theta < 0 on (-1/max, 0).
    let pos = |t: T| t.exp() / mean;
    let neg = |s: T| -s / max;
    const GRID: usize = 160;

    let mut candidates: Vec<(T, T, bool)> = Vec::with_capacity(2 * GRID);
    for i in 0..GRID {
        let t = T::of(-16.0 + 32.0 * i as f64 / (GRID - 1) as f64);
        candidates.push((t, ll_at(pos(t)), true));
        let s = T::of((i as f64 + 0.5) / GRID as f64 * (1.0 - 1e-6));
        candidates.push((s, ll_at(neg(s)), false));
    }

    let (arg, _, positive) =
        candidates.iter().copied().fold((T::zero(), neg_inf, true), |acc, c| if c.1 > acc.1 { c } else { acc });
    if positive {
        let step = T::of(32.0 / (GRID - 1) as f64);
        let t = golden_max(|t| ll_at(pos(t)), arg - step, arg + step, 80);
        if let Some((ll, shape)) = gpd_profile(pos(t), &excess) {
            if ll > best_ll {
                best = (shape, shape / pos(t));
            }
        }
    } else {
        let step = T::of(1.0 / GRID as f64);
        let lo = (arg - step).max(T::of(1e-12));
        let hi = (arg + step).min(T::of(1.0 - 1e-9));
        let s = golden_max(|s| ll_at(neg(s)), lo, hi, 80);
        if let Some((ll, shape)) = gpd_profile(neg(s), &excess) {
            if ll > best_ll {
                best = (shape, shape / neg(s));
            }
        }
    }

    DistSpec::generalized_pareto(best.0, best.1, location)
}
