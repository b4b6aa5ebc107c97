//! Hybrid scheduling: class-based WFQ on fast uplinks, delay-regulated
//! priority queueing on slow ones.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HpssMode {
    /// Regulated non-preemptive priority queueing.
    Pq,
    /// Class-based weighted fair queueing with a reserved guest share.
    Wfq,
}

/// WFQ mode at or above the capacity threshold, PQ mode below it.
pub fn hpss_select_mode(capacity_up_mbps: f64, threshold_mbps: f64) -> Result<HpssMode> {
    if !(threshold_mbps > 0.0) {
        return Err(Error::Config(format!("HPSS capacity threshold must be positive, got {threshold_mbps}")));
    }
    Ok(if capacity_up_mbps >= threshold_mbps { HpssMode::Wfq } else { HpssMode::Pq })
}

/// Guest share of the uplink in percent: `pct_per_mbps * capacity`.
/// Only defined in WFQ mode.
pub fn hpss_guest_share(capacity_up_mbps: f64, threshold_mbps: f64, pct_per_mbps: f64) -> Result<f64> {
    if hpss_select_mode(capacity_up_mbps, threshold_mbps)? == HpssMode::Pq {
        return Err(Error::Logic(format!(
            "guest share requested in PQ mode ({capacity_up_mbps} Mbps < {threshold_mbps} Mbps)"
        )));
    }
    let share = pct_per_mbps * capacity_up_mbps;
    if !(share > 0.0 && share < 100.0) {
        return Err(Error::Config(format!("HPSS guest share {share}% outside (0, 100)")));
    }
    Ok(share)
}

/// Rolling record of home-packet queueing delays and the part of each delay
/// spent waiting behind guest transmissions.
#[derive(Debug, Clone)]
pub struct DelayTracker {
    window: f64,
    // (dequeue time, delay, guest-induced delay)
    samples: VecDeque<(f64, f64, f64)>,
    sum_delay: f64,
    sum_induced: f64,
    burden: f64,
}

impl DelayTracker {
    pub fn new(window: f64) -> Self {
        Self { window, samples: VecDeque::new(), sum_delay: 0.0, sum_induced: 0.0, burden: 0.0 }
    }

    fn expire(&mut self, now: f64) {
        while let Some(&(t, d, g)) = self.samples.front() {
            if t > now - self.window {
                break;
            }
            self.samples.pop_front();
            self.sum_delay -= d;
            self.sum_induced -= g;
        }
        if self.samples.is_empty() {
            self.sum_delay = 0.0;
            self.sum_induced = 0.0;
        }
    }

    pub fn record_home(&mut self, now: f64, delay: f64, guest_induced: f64) {
        self.expire(now);
        self.samples.push_back((now, delay, guest_induced));
        self.sum_delay += delay;
        self.sum_induced += guest_induced;
    }

    pub fn home_samples(&self) -> usize {
        self.samples.len()
    }

    /// Mean home queueing delay over the window.
    pub fn mean_with_guest(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.sum_delay / self.samples.len() as f64
        }
    }

    /// Mean home queueing delay with guest service time removed.
    pub fn mean_without_guest(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            (self.sum_delay - self.sum_induced) / self.samples.len() as f64
        }
    }

    /// Transmission time of admitted guest packets not yet served.
    pub fn pending_burden(&self) -> f64 {
        self.burden
    }

    pub fn add_burden(&mut self, tx_time: f64) {
        self.burden += tx_time;
    }

    pub fn remove_burden(&mut self, tx_time: f64) {
        self.burden = (self.burden - tx_time).max(0.0);
    }

    /// Projected added mean home delay if `extra` seconds of guest service
    /// join the pending burden; `None` with no home packets in the window.
    pub fn projected_impact(&self, extra: f64) -> Option<f64> {
        let n = self.samples.len();
        (n > 0).then(|| {
            let measured = self.mean_with_guest() - self.mean_without_guest();
            measured + (self.burden + extra) / n as f64
        })
    }

    /// Admission test for a guest packet taking `tx_time` seconds to send.
    pub fn admit(&mut self, now: f64, tx_time: f64, target_impact: f64) -> bool {
        self.expire(now);
        match self.projected_impact(tx_time) {
            None => true,
            Some(impact) => impact <= target_impact,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_selection() {
        assert_eq!(hpss_select_mode(6.3, 2.0).unwrap(), HpssMode::Wfq);
        assert_eq!(hpss_select_mode(1.0, 2.0).unwrap(), HpssMode::Pq);
        assert_eq!(hpss_select_mode(2.0, 2.0).unwrap(), HpssMode::Wfq);
        assert!(hpss_select_mode(2.0, 0.0).is_err());
    }

    #[test]
    fn guest_share() {
        assert!((hpss_guest_share(6.3, 2.0, 0.5).unwrap() - 3.15).abs() < 1e-12);
        assert!((hpss_guest_share(2.0, 2.0, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((hpss_guest_share(10.0, 2.0, 0.5).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(hpss_guest_share(1.0, 2.0, 0.5), Err(Error::Logic(_))));
    }

    #[test]
    fn empty_window_admits() {
        let mut t = DelayTracker::new(1.0);
        assert!(t.admit(0.0, 10.0, 0.003));
        assert!(t.projected_impact(0.0).is_none());
    }

    #[test]
    fn burden_over_target_drops() {
        let mut t = DelayTracker::new(1.0);
        for i in 0..10 {
            t.record_home(0.1 * i as f64, 0.010, 0.0);
        }
        // 31 ms of pending guest service spread over 10 home packets
        t.add_burden(0.031);
        assert!((t.projected_impact(0.0).unwrap() - 0.0031).abs() < 1e-12);
        assert!(!t.admit(0.95, 0.0, 0.003));
    }

    #[test]
    fn three_packet_trace() {
        // Home delays 4, 6, 8 ms, of which 1, 0, 2 ms were spent behind guests.
        let mut t = DelayTracker::new(1.0);
        t.record_home(0.10, 0.004, 0.001);
        t.record_home(0.20, 0.006, 0.000);
        t.record_home(0.30, 0.008, 0.002);
        assert!((t.mean_with_guest() - 0.006).abs() < 1e-15);
        assert!((t.mean_without_guest() - 0.005).abs() < 1e-15);
        // measured impact 1 ms; pending 3 ms over 3 packets adds 1 ms
        t.add_burden(0.003);
        // a 3 ms guest packet adds another 1 ms: exactly 3 ms, admitted
        assert!(t.admit(0.35, 0.003, 0.003 + 1e-12));
        // one more microsecond of service tips it over
        assert!(!t.admit(0.35, 0.003 + 3e-6, 0.003 + 1e-12));
    }

    #[test]
    fn window_expiry() {
        let mut t = DelayTracker::new(1.0);
        t.record_home(0.0, 0.05, 0.05);
        assert!(!t.admit(0.5, 0.0, 0.003));
        assert!(t.admit(1.5, 0.0, 0.003));
        assert_eq!(t.home_samples(), 0);
    }
}
