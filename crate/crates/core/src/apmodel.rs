//! Access-point profiles and the buffering effect.
//!
//! Units: capacities in Mbps (10⁶ bit/s), queue sizes in KB (1000 bytes),
//! latencies in milliseconds.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Traffic direction on the access link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Down,
    Up,
}

/// Last-mile round-trip times in milliseconds: unloaded, and under
/// saturating downstream/upstream load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyMeasurement<T = f64> {
    pub lmrtt: T,
    pub ulrttdw: T,
    pub ulrttup: T,
}

impl<T: Scalar> LatencyMeasurement<T> {
    pub fn new(lmrtt: T, ulrttdw: T, ulrttup: T) -> Result<Self> {
        let m = Self { lmrtt, ulrttdw, ulrttup };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        if !(self.lmrtt > zero && self.ulrttdw > zero && self.ulrttup > zero) {
            return Err(Error::InvalidParams(format!("latencies must be positive: {self:?}")));
        }
        if self.ulrttdw < self.lmrtt || self.ulrttup < self.lmrtt {
            return Err(Error::InvalidParams(format!("loaded RTT below unloaded RTT: {self:?}")));
        }
        Ok(())
    }
}

/// Queue capacity in KB implied by the loaded-minus-unloaded RTT in the
/// given direction at `capacity_mbps`.
pub fn buffering_effect<T: Scalar>(meas: &LatencyMeasurement<T>, capacity_mbps: T, direction: Direction) -> Result<T> {
    meas.validate()?;
    if !(capacity_mbps > T::zero()) {
        return Err(Error::InvalidParams(format!("capacity must be positive, got {capacity_mbps}")));
    }
    let loaded = match direction {
        Direction::Down => meas.ulrttdw,
        Direction::Up => meas.ulrttup,
    };
    // ms * Mbps = 10^3 bit; / 8 -> 10^3 bytes = KB
    Ok((loaded - meas.lmrtt) * capacity_mbps / T::of(8.0))
}

/// Capacity and queue size of one gateway in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPointProfile {
    pub name: String,
    pub capacity_dw: f64,
    pub capacity_up: f64,
    pub queue_dw: f64,
    pub queue_up: f64,
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 2] = ["AP1", "AP8"];

/// Built-in profiles: AP1 (fiber) and AP8 (ADSL).
pub fn preset(name: &str) -> Result<AccessPointProfile> {
    let (capacity_dw, capacity_up, queue_dw, queue_up) = match name.to_ascii_uppercase().as_str() {
        "AP1" => (50.0, 6.3, 1300.0, 120.0),
        "AP8" => (8.0, 1.0, 90.0, 60.0),
        _ => return Err(Error::UnknownPreset { name: name.to_string(), available: PRESET_NAMES.join(", ") }),
    };
    Ok(AccessPointProfile { name: name.to_ascii_uppercase(), capacity_dw, capacity_up, queue_dw, queue_up })
}

impl AccessPointProfile {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("capacity_dw", self.capacity_dw),
            ("capacity_up", self.capacity_up),
            ("queue_dw", self.queue_dw),
            ("queue_up", self.queue_up),
        ];
        for (key, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("access point {key} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Uplink rate in bytes per second.
    pub fn uplink_bytes_per_sec(&self) -> f64 {
        self.capacity_up * 1e6 / 8.0
    }

    /// Uplink queue capacity in bytes.
    pub fn uplink_queue_bytes(&self) -> u64 {
        (self.queue_up * 1000.0).round() as u64
    }
}
