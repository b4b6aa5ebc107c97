//! Uplink queueing policies behind a common enqueue/dequeue interface.
//!
//! Queue capacity is accounted in bytes. Policies that separate the two
//! traffic classes (PQ, UPNQ, HPSS, CBQ) keep one FIFO per class, each
//! holding up to the configured capacity; the others share a single buffer.

mod codel;
mod fifo;
mod hpss;
mod prio;
mod red;
mod srr;
mod wfq;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::RngStream;
use crate::{Error, Result};

pub use codel::{CodelAction, CodelControl, CodelQueue, CODEL_MTU};
pub use fifo::DropTail;
pub use hpss::{hpss_guest_share, hpss_select_mode, DelayTracker, HpssMode};
pub use prio::{upnq_admit, PriorityQueue, Regulation};
pub use red::{red_admit, Red, RedParams};
pub use srr::{RoundRobin, Srr};
pub use wfq::{Wfq, WfqSelector};

pub type FlowId = u64;

/// Traffic class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Home,
    Guest,
}

impl Class {
    pub const ALL: [Class; 2] = [Class::Home, Class::Guest];

    pub fn index(self) -> usize {
        match self {
            Class::Home => 0,
            Class::Guest => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Home => "home",
            Class::Guest => "guest",
        }
    }
}

/// A packet on the uplink. Times are simulated seconds, size is bytes on the
/// wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub flow_id: FlowId,
    pub class: Class,
    pub size: u32,
    /// Transport segment index, or a running counter for datagrams.
    pub seq: u64,
    pub created: f64,
    pub enqueued: f64,
    pub dequeued: f64,
}

impl Packet {
    pub fn new(flow_id: FlowId, class: Class, size: u32, seq: u64, created: f64) -> Self {
        assert!(size > 0, "packet size must be positive");
        Self { flow_id, class, size, seq, created, enqueued: created, dequeued: created }
    }

    pub fn queueing_delay(&self) -> f64 {
        self.dequeued - self.enqueued
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    QueueFull,
    RedProbabilistic,
    UpnqThreshold,
    HpssRegulation,
    CodelHeadDrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    Dropped(DropReason),
}

impl Admission {
    pub fn is_admitted(self) -> bool {
        matches!(self, Admission::Admitted)
    }
}

/// Counters of one traffic class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub offered_bytes: u64,
    pub offered_packets: u64,
    pub served_bytes: u64,
    pub served_packets: u64,
    pub dropped_bytes: u64,
    pub dropped_packets: u64,
    pub drops_by_reason: BTreeMap<DropReason, u64>,
    /// Queueing delay (dequeue - enqueue) of every served packet, seconds.
    #[serde(skip)]
    pub queueing_delays: Vec<f64>,
}

impl ClassStats {
    /// Bytes admitted and not yet served or dropped.
    pub fn resident_bytes(&self) -> u64 {
        self.offered_bytes - self.served_bytes - self.dropped_bytes
    }

    pub fn mean_queueing_delay(&self) -> f64 {
        if self.queueing_delays.is_empty() {
            0.0
        } else {
            self.queueing_delays.iter().sum::<f64>() / self.queueing_delays.len() as f64
        }
    }
}

/// Per-class scheduler counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchedStats {
    pub home: ClassStats,
    pub guest: ClassStats,
}

impl SchedStats {
    pub fn class(&self, class: Class) -> &ClassStats {
        match class {
            Class::Home => &self.home,
            Class::Guest => &self.guest,
        }
    }

    fn class_mut(&mut self, class: Class) -> &mut ClassStats {
        match class {
            Class::Home => &mut self.home,
            Class::Guest => &mut self.guest,
        }
    }

    pub(crate) fn offer(&mut self, pkt: &Packet) {
        let c = self.class_mut(pkt.class);
        c.offered_bytes += u64::from(pkt.size);
        c.offered_packets += 1;
    }

    pub(crate) fn drop(&mut self, pkt: &Packet, reason: DropReason) {
        let c = self.class_mut(pkt.class);
        c.dropped_bytes += u64::from(pkt.size);
        c.dropped_packets += 1;
        *c.drops_by_reason.entry(reason).or_default() += 1;
    }

    pub(crate) fn serve(&mut self, pkt: &mut Packet, now: f64) {
        pkt.dequeued = now;
        let c = self.class_mut(pkt.class);
        c.served_bytes += u64::from(pkt.size);
        c.served_packets += 1;
        c.queueing_delays.push(pkt.queueing_delay());
    }
}

/// The eight uplink configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Policy {
    DropTail,
    #[serde(rename = "RED")]
    Red,
    #[serde(rename = "CoDel")]
    Codel,
    #[serde(rename = "SRR")]
    Srr,
    #[serde(rename = "PQ")]
    Pq,
    #[serde(rename = "UPNQ")]
    Upnq,
    #[serde(rename = "HPSS")]
    Hpss,
    #[serde(rename = "CBQ")]
    Cbq,
}

impl Policy {
    pub const ALL: [Policy; 8] = [
        Policy::DropTail,
        Policy::Red,
        Policy::Codel,
        Policy::Srr,
        Policy::Pq,
        Policy::Upnq,
        Policy::Hpss,
        Policy::Cbq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::DropTail => "DropTail",
            Policy::Red => "RED",
            Policy::Codel => "CoDel",
            Policy::Srr => "SRR",
            Policy::Pq => "PQ",
            Policy::Upnq => "UPNQ",
            Policy::Hpss => "HPSS",
            Policy::Cbq => "CBQ",
        }
    }

    /// Whether the policy treats home and guest traffic differently.
    pub fn is_class_aware(self) -> bool {
        matches!(self, Policy::Pq | Policy::Upnq | Policy::Hpss | Policy::Cbq)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let names: Vec<_> = Policy::ALL.iter().map(|p| p.name()).collect();
            Error::Config(format!("unknown policy {s:?} (valid: {})", names.join(", ")))
        })
    }
}

/// Policy selection and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub policy: Policy,
    /// Per-queue capacity in bytes.
    pub queue_cap: u64,
    /// RED and CoDel delay target.
    pub target_delay_ms: f64,
    pub red_w_q: f64,
    pub red_max_p: f64,
    pub codel_interval_ms: f64,
    /// Fraction of `queue_cap` held by home packets above which guests are dropped.
    pub upnq_threshold: f64,
    pub hpss_target_impact_ms: f64,
    pub hpss_capacity_threshold_mbps: f64,
    /// Guest share in percent per Mbps of uplink, in WFQ mode.
    pub hpss_share_pct_per_mbps: f64,
    /// Window of the home delay tracker, in PQ mode.
    pub hpss_window_s: f64,
    pub cbq_home_weight: f64,
}

impl SchedulerConfig {
    pub fn new(policy: Policy, queue_cap: u64) -> Self {
        Self {
            policy,
            queue_cap,
            target_delay_ms: 5.0,
            red_w_q: 0.002,
            red_max_p: 0.1,
            codel_interval_ms: 100.0,
            upnq_threshold: 0.80,
            hpss_target_impact_ms: 3.0,
            hpss_capacity_threshold_mbps: 2.0,
            hpss_share_pct_per_mbps: 0.5,
            hpss_window_s: 1.0,
            cbq_home_weight: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("target_delay_ms", self.target_delay_ms),
            ("codel_interval_ms", self.codel_interval_ms),
            ("hpss_target_impact_ms", self.hpss_target_impact_ms),
            ("hpss_capacity_threshold_mbps", self.hpss_capacity_threshold_mbps),
            ("hpss_share_pct_per_mbps", self.hpss_share_pct_per_mbps),
            ("hpss_window_s", self.hpss_window_s),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        let unit = [("red_w_q", self.red_w_q), ("red_max_p", self.red_max_p), ("upnq_threshold", self.upnq_threshold)];
        for (key, v) in unit {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{key} must be in (0, 1], got {v}")));
            }
        }
        if !(self.cbq_home_weight > 0.0 && self.cbq_home_weight < 1.0) {
            return Err(Error::Config(format!("cbq_home_weight must be in (0, 1), got {}", self.cbq_home_weight)));
        }
        if self.queue_cap == 0 {
            return Err(Error::Config("queue capacity must be positive".into()));
        }
        Ok(())
    }
}

/// A queueing discipline guarding the uplink.
///
/// `dequeue` is called whenever the link goes idle and returns the next
/// packet to transmit; the link never preempts a packet once returned.
pub trait Qdisc: Send {
    fn policy(&self) -> Policy;

    /// Offers a packet arriving at `now`.
    fn enqueue(&mut self, pkt: Packet, now: f64) -> Admission;

    /// Selects the next packet for transmission, or `None` if every queue is
    /// empty.
    fn dequeue(&mut self, now: f64) -> Option<Packet>;

    /// Bytes of `class` currently queued.
    fn backlog_bytes(&self, class: Class) -> u64;

    fn is_empty(&self) -> bool {
        self.backlog_bytes(Class::Home) == 0 && self.backlog_bytes(Class::Guest) == 0
    }

    fn stats(&self) -> &SchedStats;

    /// Moves the accumulated statistics out, leaving empty ones.
    fn take_stats(&mut self) -> SchedStats;
}

/// Builds the configured scheduler for an uplink of `capacity_up_mbps`.
pub fn build(config: &SchedulerConfig, capacity_up_mbps: f64, rng: RngStream) -> Result<Box<dyn Qdisc>> {
    config.validate()?;
    if !(capacity_up_mbps > 0.0) {
        return Err(Error::Config(format!("uplink capacity must be positive, got {capacity_up_mbps}")));
    }
    let rate = capacity_up_mbps * 1e6 / 8.0;
    let cap = config.queue_cap;
    Ok(match config.policy {
        Policy::DropTail => Box::new(DropTail::new(cap)),
        Policy::Red => {
            let params = RedParams::from_delay_target(config.target_delay_ms / 1e3, rate, config.red_max_p);
            Box::new(Red::new(cap, params, config.red_w_q, rate, rng))
        }
        Policy::Codel => Box::new(CodelQueue::new(cap, config.target_delay_ms / 1e3, config.codel_interval_ms / 1e3)),
        Policy::Srr => Box::new(Srr::new(cap)),
        Policy::Pq => Box::new(PriorityQueue::new(Policy::Pq, cap, Regulation::None)),
        Policy::Upnq => {
            Box::new(PriorityQueue::new(Policy::Upnq, cap, Regulation::Upnq { threshold: config.upnq_threshold }))
        }
        Policy::Hpss => match hpss_select_mode(capacity_up_mbps, config.hpss_capacity_threshold_mbps)? {
            HpssMode::Wfq => {
                let guest = hpss_guest_share(
                    capacity_up_mbps,
                    config.hpss_capacity_threshold_mbps,
                    config.hpss_share_pct_per_mbps,
                )? / 100.0;
                Box::new(Wfq::new(Policy::Hpss, cap, 1.0 - guest))
            }
            HpssMode::Pq => Box::new(PriorityQueue::new(
                Policy::Hpss,
                cap,
                Regulation::Hpss {
                    tracker: DelayTracker::new(config.hpss_window_s),
                    target_impact: config.hpss_target_impact_ms / 1e3,
                    rate,
                },
            )),
        },
        Policy::Cbq => Box::new(Wfq::new(Policy::Cbq, cap, config.cbq_home_weight)),
    })
}
