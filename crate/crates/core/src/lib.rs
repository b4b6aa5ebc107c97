//! Discrete-event simulation of guest traffic on shared domestic broadband
//! uplinks.
//!
//! The crate is organised around the uplink of a home access point:
//!
//! - [`distributions`]: Weibull, generalized Pareto and lognormal models with
//!   sampling, maximum-likelihood fitting and goodness-of-fit statistics.
//! - [`apmodel`]: access-point capacity/queue profiles and the buffering
//!   effect computation.
//! - [`schedulers`]: the eight uplink queueing policies behind one
//!   enqueue/dequeue interface.
//! - [`traffic`]: guest-user flow generators, home applications and a
//!   Reno-style reliable transport.
//! - [`engine`]: the deterministic event loop wiring sources, scheduler and
//!   sinks together.
//! - [`metrics`]: per-run reports and baseline-vs-treatment impact figures.
//! - [`scenario`] and [`experiment`]: scenario files, experiment sweeps, the
//!   generator validation harness and the trace fitting pipeline.
//!
//! The statistical code is generic over the floating-point type through
//! [`Scalar`]; the simulator itself runs in `f64` seconds.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apmodel;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod scenario;
pub mod schedulers;
pub mod traffic;

mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Distribution parameters in double precision.
pub type DistSpec64 = distributions::DistSpec<f64>;
/// Distribution parameters in single precision.
pub type DistSpec32 = distributions::DistSpec<f32>;
/// Goodness-of-fit statistics in double precision.
pub type GofReport64 = distributions::GofReport<f64>;
/// Goodness-of-fit statistics in single precision.
pub type GofReport32 = distributions::GofReport<f32>;
/// Latency measurement in double precision.
pub type LatencyMeasurement64 = apmodel::LatencyMeasurement<f64>;
/// Latency measurement in single precision.
pub type LatencyMeasurement32 = apmodel::LatencyMeasurement<f32>;
