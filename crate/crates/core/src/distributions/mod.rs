//! Weibull, generalized Pareto and lognormal models of guest-user flows.
//!
//! Inter-arrival times are Weibull, flow sizes generalized Pareto and flow
//! durations lognormal. The four measured guest-user parameterizations are in
//! [`GUEST_PROFILE_PARAMS`].

mod fit;
mod gof;
pub mod special;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

pub use fit::{fit, MIN_FIT_SAMPLES};
pub use gof::{anderson_darling, chi_squared, chi_squared_bins, gof, ks_statistic, pp_points, GofReport};

/// Distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Weibull,
    GeneralizedPareto,
    Lognormal,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Weibull, Family::GeneralizedPareto, Family::Lognormal];

    pub fn name(self) -> &'static str {
        match self {
            Family::Weibull => "weibull",
            Family::GeneralizedPareto => "generalized-pareto",
            Family::Lognormal => "lognormal",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weibull" => Ok(Family::Weibull),
            "generalized-pareto" | "genpareto" | "gpd" | "gen-pareto" => Ok(Family::GeneralizedPareto),
            "lognormal" | "log-normal" => Ok(Family::Lognormal),
            _ => Err(Error::InvalidParams(format!(
                "unknown distribution family {s:?} (expected weibull, generalized-pareto or lognormal)"
            ))),
        }
    }
}

/// A parameterized distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DistSpec<T = f64> {
    /// `F(x) = 1 - exp(-(x/scale)^shape)` for `x >= 0`.
    Weibull { shape: T, scale: T },
    /// `F(x) = 1 - (1 + shape (x - location)/scale)^(-1/shape)` for `x >= location`.
    GeneralizedPareto { shape: T, scale: T, location: T },
    /// `ln X ~ N(mu, sigma²)`.
    Lognormal { mu: T, sigma: T },
}

impl<T: Scalar> DistSpec<T> {
    pub fn weibull(shape: T, scale: T) -> Result<Self> {
        let spec = DistSpec::Weibull { shape, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn generalized_pareto(shape: T, scale: T, location: T) -> Result<Self> {
        let spec = DistSpec::GeneralizedPareto { shape, scale, location };
        spec.validate()?;
        Ok(spec)
    }

    pub fn lognormal(mu: T, sigma: T) -> Result<Self> {
        let spec = DistSpec::Lognormal { mu, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn family(&self) -> Family {
        match self {
            DistSpec::Weibull { .. } => Family::Weibull,
            DistSpec::GeneralizedPareto { .. } => Family::GeneralizedPareto,
            DistSpec::Lognormal { .. } => Family::Lognormal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistSpec::Weibull { shape, scale } => {
                shape.is_finite() && scale.is_finite() && shape > T::zero() && scale > T::zero()
            }
            DistSpec::GeneralizedPareto { shape, scale, location } => {
                shape.is_finite() && location.is_finite() && scale.is_finite() && scale > T::zero()
            }
            DistSpec::Lognormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= T::zero(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{self:?}")))
        }
    }

    /// Parameter names and values in a fixed order, for reporting.
    pub fn params(&self) -> Vec<(&'static str, T)> {
        match *self {
            DistSpec::Weibull { shape, scale } => vec![("shape", shape), ("scale", scale)],
            DistSpec::GeneralizedPareto { shape, scale, location } => {
                vec![("shape", shape), ("scale", scale), ("location", location)]
            }
            DistSpec::Lognormal { mu, sigma } => vec![("mu", mu), ("sigma", sigma)],
        }
    }

    /// Inverse CDF for `u` in `[0, 1)`.
    pub fn quantile(&self, u: T) -> Result<T> {
        if !(u >= T::zero() && u < T::one()) {
            return Err(Error::Domain(format!("quantile probability {u} outside [0, 1)")));
        }
        // ln(1 - u), accurate for small u
        let log_survival = (-u).ln_1p();
        let x = match *self {
            DistSpec::Weibull { shape, scale } => scale * (-log_survival).powf(shape.recip()),
            DistSpec::GeneralizedPareto { shape, scale, location } => {
                if shape.abs() < T::of(1e-12) {
                    location - scale * log_survival
                } else {
                    location + scale * (-shape * log_survival).exp_m1() / shape
                }
            }
            DistSpec::Lognormal { mu, sigma } => {
                let z = T::of(special::norm_ppf(u.as_f64()));
                if sigma == T::zero() {
                    mu.exp()
                } else {
                    (mu + sigma * z).exp()
                }
            }
        };
        Ok(x)
    }

    /// Analytic CDF. Values below the support return 0.
    pub fn cdf(&self, x: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match *self {
            DistSpec::Weibull { shape, scale } => {
                if x <= zero {
                    zero
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            DistSpec::GeneralizedPareto { shape, scale, location } => {
                let z = (x - location) / scale;
                if z <= zero {
                    zero
                } else if shape.abs() < T::of(1e-12) {
                    -(-z).exp_m1()
                } else if shape < zero && z >= -shape.recip() {
                    one
                } else {
                    -(-(shape * z).ln_1p() / shape).exp_m1()
                }
            }
            DistSpec::Lognormal { mu, sigma } => {
                if x <= zero {
                    zero
                } else if sigma == zero {
                    if x.ln() >= mu {
                        one
                    } else {
                        zero
                    }
                } else {
                    T::of(special::norm_cdf(((x.ln() - mu) / sigma).as_f64()))
                }
            }
        }
    }

    /// Analytic mean, or `None` when it is infinite.
    pub fn mean(&self) -> Option<T> {
        match *self {
            DistSpec::Weibull { shape, scale } => Some(scale * T::of(libm::tgamma(1.0 + 1.0 / shape.as_f64()))),
            DistSpec::GeneralizedPareto { shape, scale, location } => {
                (shape < T::one()).then(|| location + scale / (T::one() - shape))
            }
            DistSpec::Lognormal { mu, sigma } => Some((mu + sigma * sigma / T::of(2.0)).exp()),
        }
    }

    /// Inverse-transform sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.gen();
        // u in [0, 1) by construction, but f32 rounding can reach 1
        let u = T::of(u).min(T::one() - T::epsilon());
        self.quantile(u).expect("validated spec and u in [0, 1)")
    }
}

/// Parameters of one measured guest-user profile: Weibull inter-arrival
/// times (s), generalized Pareto flow sizes (bytes) and lognormal flow
/// durations (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams<T = f64> {
    pub id: u8,
    pub inter_arrival: DistSpec<T>,
    pub size: DistSpec<T>,
    pub duration: DistSpec<T>,
}

/// The four measured guest-user profiles.
pub const GUEST_PROFILE_PARAMS: [ProfileParams<f64>; 4] = [
    ProfileParams {
        id: 1,
        inter_arrival: DistSpec::Weibull { shape: 0.27, scale: 0.4 },
        size: DistSpec::GeneralizedPareto { shape: 0.59, scale: 544.0, location: 353.0 },
        duration: DistSpec::Lognormal { mu: 1.03, sigma: 2.62 },
    },
    ProfileParams {
        id: 2,
        inter_arrival: DistSpec::Weibull { shape: 0.31, scale: 0.53 },
        size: DistSpec::GeneralizedPareto { shape: 0.77, scale: 1108.0, location: 203.0 },
        duration: DistSpec::Lognormal { mu: 1.0, sigma: 1.83 },
    },
    ProfileParams {
        id: 3,
        inter_arrival: DistSpec::Weibull { shape: 0.4, scale: 0.19 },
        size: DistSpec::GeneralizedPareto { shape: 0.12, scale: 1473.0, location: 471.0 },
        duration: DistSpec::Lognormal { mu: 0.9, sigma: 1.18 },
    },
    ProfileParams {
        id: 4,
        inter_arrival: DistSpec::Weibull { shape: 0.38, scale: 9.58 },
        size: DistSpec::GeneralizedPareto { shape: 0.59, scale: 620.0, location: 42.0 },
        duration: DistSpec::Lognormal { mu: 1.97, sigma: 2.45 },
    },
];

/// Looks up a measured profile by its 1-based id.
pub fn guest_profile_params(id: u8) -> Result<ProfileParams<f64>> {
    GUEST_PROFILE_PARAMS
        .iter()
        .find(|p| p.id == id)
        .copied()
        .ok_or_else(|| Error::InvalidParams(format!("guest profile {id} does not exist (valid: 1-4)")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_specs() -> Vec<DistSpec> {
        GUEST_PROFILE_PARAMS.iter().flat_map(|p| [p.inter_arrival, p.size, p.duration]).collect()
    }

    #[test]
    fn quantile_examples() {
        let w = DistSpec::weibull(0.27, 0.4).unwrap();
        let u = 1.0 - (-1.0f64).exp();
        assert!((w.quantile(u).unwrap() - 0.4).abs() < 1e-12);

        let g = DistSpec::generalized_pareto(0.59, 544.0, 353.0).unwrap();
        assert_eq!(g.quantile(0.0).unwrap(), 353.0);

        let l = DistSpec::lognormal(1.03, 2.62).unwrap();
        assert!((l.quantile(0.5).unwrap() - 1.03f64.exp()).abs() < 1e-12);
        assert!((l.quantile(0.5).unwrap() - 2.801).abs() < 1e-3);
    }

    #[test]
    fn quantile_rejects_out_of_domain() {
        let w = DistSpec::weibull(1.0, 1.0).unwrap();
        for u in [1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(w.quantile(u), Err(Error::Domain(_))), "u = {u}");
        }
    }

    #[test]
    fn cdf_examples() {
        for &(shape, scale) in &[(0.27, 0.4), (2.0, 7.0), (1.0, 0.1)] {
            let w = DistSpec::weibull(shape, scale).unwrap();
            assert!((w.cdf(scale) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        }
        let g = DistSpec::generalized_pareto(0.12, 1473.0, 471.0).unwrap();
        assert_eq!(g.cdf(471.0), 0.0);
        assert_eq!(g.cdf(100.0), 0.0);
        let l = DistSpec::lognormal(1.97, 2.45).unwrap();
        assert!((l.cdf(1.97f64.exp()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn negative_shape_pareto_has_upper_bound() {
        let g = DistSpec::generalized_pareto(-0.5, 2.0, 1.0).unwrap();
        // support ends at location - scale/shape = 5
        assert_eq!(g.cdf(5.0), 1.0);
        assert_eq!(g.cdf(9.0), 1.0);
        assert!(g.quantile(0.999_999).unwrap() < 5.0);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(DistSpec::weibull(0.0, 1.0).is_err());
        assert!(DistSpec::weibull(1.0, -1.0).is_err());
        assert!(DistSpec::generalized_pareto(0.1, 0.0, 0.0).is_err());
        assert!(DistSpec::lognormal(0.0, -1.0).is_err());
        assert!(DistSpec::lognormal(0.0, 0.0).is_ok());
    }

    #[test]
    fn quantile_and_cdf_are_inverse() {
        for spec in all_specs() {
            for i in 0..2000 {
                let u = i as f64 / 2000.0;
                let x = spec.quantile(u).unwrap();
                let back = spec.cdf(x);
                assert!((back - u).abs() < 1e-9, "{spec:?} u={u} back={back}");
            }
        }
    }

    #[test]
    fn quantile_is_monotone() {
        for spec in all_specs() {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..5000 {
                let x = spec.quantile(i as f64 / 5000.0).unwrap();
                assert!(x >= prev, "{spec:?}");
                prev = x;
            }
        }
    }

    #[test]
    fn single_precision_agrees() {
        let w64 = DistSpec::weibull(0.4f64, 0.19).unwrap();
        let w32 = DistSpec::weibull(0.4f32, 0.19).unwrap();
        for i in 1..100 {
            let u = i as f64 / 100.0;
            let a = w64.quantile(u).unwrap();
            let b = w32.quantile(u as f32).unwrap() as f64;
            assert!((a - b).abs() <= 1e-4 * a.max(1.0), "u = {u}");
        }
        let l = DistSpec::lognormal(1.0f32, 1.83).unwrap();
        assert!((l.cdf(1.0f32.exp()) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = GUEST_PROFILE_PARAMS[2].size;
        let a: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..100).map(|_| spec.sample(&mut rng)).collect()
        };
        let b: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..100).map(|_| spec.sample(&mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn analytic_means() {
        let g = DistSpec::<f64>::generalized_pareto(0.59, 544.0, 353.0).unwrap();
        assert!((g.mean().unwrap() - (353.0 + 544.0 / 0.41)).abs() < 1e-9);
        assert!(DistSpec::generalized_pareto(1.2, 1.0, 0.0).unwrap().mean().is_none());
        let w = DistSpec::<f64>::weibull(1.0, 3.0).unwrap();
        assert!((w.mean().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn family_parsing() {
        assert_eq!("Weibull".parse::<Family>().unwrap(), Family::Weibull);
        assert_eq!("gpd".parse::<Family>().unwrap(), Family::GeneralizedPareto);
        assert_eq!("lognormal".parse::<Family>().unwrap(), Family::Lognormal);
        assert!("burr".parse::<Family>().is_err());
    }

    #[test]
    fn profile_lookup() {
        assert_eq!(guest_profile_params(4).unwrap().size.params()[2].1, 42.0);
        assert!(guest_profile_params(5).is_err());
        assert!(guest_profile_params(0).is_err());
    }
}
