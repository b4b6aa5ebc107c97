//! Run reports and the baseline-versus-treatment impact figures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::schedulers::{Class, ClassStats, DropReason, Policy, SchedStats};
use crate::traffic::FlowSpec;
use crate::{Error, Result};

/// Throughput series resolution, seconds.
pub const BIN_S: f64 = 0.1;

/// Scheduler counters of one class at the end of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub offered_bytes: u64,
    pub served_bytes: u64,
    pub dropped_bytes: u64,
    pub resident_bytes: u64,
    pub offered_packets: u64,
    pub served_packets: u64,
    pub dropped_packets: u64,
    pub drops_by_reason: BTreeMap<DropReason, u64>,
    pub mean_qdelay_ms: f64,
}

impl From<&ClassStats> for ClassSummary {
    fn from(s: &ClassStats) -> Self {
        Self {
            offered_bytes: s.offered_bytes,
            served_bytes: s.served_bytes,
            dropped_bytes: s.dropped_bytes,
            resident_bytes: s.resident_bytes(),
            offered_packets: s.offered_packets,
            served_packets: s.served_packets,
            dropped_packets: s.dropped_packets,
            drops_by_reason: s.drops_by_reason.clone(),
            mean_qdelay_ms: s.mean_queueing_delay() * 1e3,
        }
    }
}

/// Sink-side figures used to compare generator runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub generated_packets: u64,
    pub received_packets: u64,
    /// Received wire bytes over the run, KBps.
    pub avg_throughput_kbps: f64,
    /// Highest received rate over aligned 1 s windows, KBps.
    pub max_throughput_kbps: f64,
    /// Mean creation-to-delivery time of received packets, ms.
    pub mean_delay_ms: f64,
}

impl ValidationMetrics {
    pub const NAMES: [&'static str; 5] =
        ["generated_packets", "received_packets", "avg_throughput_kbps", "max_throughput_kbps", "mean_delay_ms"];

    pub fn values(&self) -> [f64; 5] {
        [
            self.generated_packets as f64,
            self.received_packets as f64,
            self.avg_throughput_kbps,
            self.max_throughput_kbps,
            self.mean_delay_ms,
        ]
    }
}

/// Outcome of one flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow_id: u64,
    pub class: Class,
    /// Home application kind, for home flows.
    pub app: Option<String>,
    pub profile_id: Option<u8>,
    pub start: f64,
    /// Payload bytes; `None` for open-ended sources.
    pub size: Option<u64>,
    pub duration: Option<f64>,
    pub completed_at: Option<f64>,
    pub delivered_bytes: u64,
    /// Loss events of reliable flows.
    pub timeouts: u32,
    pub fast_retransmits: u32,
}

/// Measurements of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub duration_s: f64,
    pub policy: Policy,
    pub ap_profile: String,
    /// Arrival-rate multiplier applied to the guest profiles, if any ran.
    pub guest_gamma: Option<f64>,
    pub bin_s: f64,
    /// Served bytes per bin at the uplink, KBps.
    pub home_series_kbps: Vec<f64>,
    pub guest_series_kbps: Vec<f64>,
    pub home: ClassSummary,
    pub guest: ClassSummary,
    /// Served uplink bytes of each home application, keyed `index:kind`.
    pub home_served_by_app: BTreeMap<String, u64>,
    pub flows: Vec<FlowRecord>,
    pub validation: ValidationMetrics,
    /// Full scheduler counters including every queueing-delay sample.
    #[serde(skip)]
    pub sched: SchedStats,
}

impl RunReport {
    pub fn class(&self, class: Class) -> &ClassSummary {
        match class {
            Class::Home => &self.home,
            Class::Guest => &self.guest,
        }
    }

    /// Mean served rate of `class` at the uplink, KBps.
    pub fn avg_throughput_kbps(&self, class: Class) -> f64 {
        self.class(class).served_bytes as f64 / self.duration_s / 1000.0
    }

    pub fn dropped_kb(&self, class: Class) -> f64 {
        self.class(class).dropped_bytes as f64 / 1000.0
    }

    /// Canonical serialization; equal reports give equal strings.
    /// Guest flows in arrival order, ready for a flow-trace export.
    pub fn guest_trace(&self) -> Vec<FlowSpec> {
        self.flows
            .iter()
            .filter(|f| f.class == Class::Guest)
            .filter_map(|f| {
                Some(FlowSpec {
                    start: f.start,
                    size: f.size?,
                    duration: f.duration?,
                    class: f.class,
                    profile_id: f.profile_id,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Percent drop of the home throughput relative to the baseline. Negative
/// when the treatment is faster.
pub fn throughput_impact(baseline_kbps: f64, treatment_kbps: f64) -> Result<f64> {
    if !(baseline_kbps > 0.0) {
        return Err(Error::UndefinedImpact(format!("baseline throughput is {baseline_kbps} KBps")));
    }
    Ok(100.0 * (baseline_kbps - treatment_kbps) / baseline_kbps)
}

/// Added home queueing delay, ms.
pub fn delay_impact(baseline_ms: f64, treatment_ms: f64) -> f64 {
    treatment_ms - baseline_ms
}

/// Guest-traffic effect of one matched pair of runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub guest_avg_throughput_kbps: f64,
    pub home_throughput_impact_pct: f64,
    pub guest_dropped_kb: f64,
    pub home_qdelay_impact_ms: f64,
}

impl ImpactReport {
    pub fn from_runs(baseline: &RunReport, treatment: &RunReport) -> Result<Self> {
        if baseline.seed != treatment.seed || baseline.duration_s != treatment.duration_s {
            return Err(Error::Logic("baseline and treatment runs are not matched".into()));
        }
        Ok(Self {
            guest_avg_throughput_kbps: treatment.avg_throughput_kbps(Class::Guest),
            home_throughput_impact_pct: throughput_impact(
                baseline.avg_throughput_kbps(Class::Home),
                treatment.avg_throughput_kbps(Class::Home),
            )?,
            guest_dropped_kb: treatment.dropped_kb(Class::Guest),
            home_qdelay_impact_ms: delay_impact(baseline.home.mean_qdelay_ms, treatment.home.mean_qdelay_ms),
        })
    }

    fn fields(&self) -> [f64; 4] {
        [
            self.guest_avg_throughput_kbps,
            self.home_throughput_impact_pct,
            self.guest_dropped_kb,
            self.home_qdelay_impact_ms,
        ]
    }

    fn from_fields(f: [f64; 4]) -> Self {
        Self {
            guest_avg_throughput_kbps: f[0],
            home_throughput_impact_pct: f[1],
            guest_dropped_kb: f[2],
            home_qdelay_impact_ms: f[3],
        }
    }
}

/// Per-field mean and 95% confidence half-width over several runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactSummary {
    pub runs: usize,
    pub mean: ImpactReport,
    pub ci95: ImpactReport,
}

/// Sample mean and normal-approximation interval `1.96 s / sqrt(n)`.
pub fn aggregate(reports: &[ImpactReport]) -> Result<ImpactSummary> {
    let n = reports.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let nf = n as f64;
    let mut mean = [0.0; 4];
    for r in reports {
        for (m, v) in mean.iter_mut().zip(r.fields()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut ss = [0.0; 4];
    for r in reports {
        for ((s, v), m) in ss.iter_mut().zip(r.fields()).zip(mean) {
            *s += (v - m) * (v - m);
        }
    }
    let ci = ss.map(|s| 1.96 * (s / (nf - 1.0)).sqrt() / nf.sqrt());
    Ok(ImpactSummary { runs: n, mean: ImpactReport::from_fields(mean), ci95: ImpactReport::from_fields(ci) })
}
