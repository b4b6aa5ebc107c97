//! Non-preemptive strict priority of home over guest traffic, optionally
//! with guest admission control (UPNQ, HPSS in PQ mode).

use std::collections::VecDeque;

use super::fifo::ByteFifo;
use super::{Admission, Class, DelayTracker, DropReason, Packet, Policy, Qdisc, SchedStats};

/// UPNQ guest admission: a guest packet is refused once home packets fill
/// more than `threshold` of the home queue capacity.
pub fn upnq_admit(home_bytes: u64, queue_cap: u64, threshold: f64) -> bool {
    home_bytes as f64 <= threshold * queue_cap as f64
}

/// Guest admission control layered on top of the priority queue.
#[derive(Debug, Clone)]
pub enum Regulation {
    None,
    Upnq {
        threshold: f64,
    },
    /// Admit guests only while the projected home delay impact stays within
    /// `target_impact` seconds. `rate` is the link rate in bytes/s.
    Hpss {
        tracker: DelayTracker,
        target_impact: f64,
        rate: f64,
    },
}

/// Cumulative guest transmission time on the link, including the packet
/// currently being sent.
#[derive(Debug, Clone, Default)]
struct GuestClock {
    done: f64,
    start: f64,
    dur: f64,
}

impl GuestClock {
    fn at(&self, t: f64) -> f64 {
        self.done + (t - self.start).clamp(0.0, self.dur)
    }

    fn begin(&mut self, now: f64, dur: f64) {
        self.done += self.dur;
        self.start = now;
        self.dur = dur;
    }
}

#[derive(Debug)]
pub struct PriorityQueue {
    policy: Policy,
    cap: u64,
    queues: [ByteFifo; 2],
    regulation: Regulation,
    clock: GuestClock,
    // guest clock reading when each queued home packet arrived
    home_marks: VecDeque<f64>,
    stats: SchedStats,
}

impl PriorityQueue {
    pub fn new(policy: Policy, cap: u64, regulation: Regulation) -> Self {
        Self {
            policy,
            cap,
            queues: [ByteFifo::default(), ByteFifo::default()],
            regulation,
            clock: GuestClock::default(),
            home_marks: VecDeque::new(),
            stats: SchedStats::default(),
        }
    }

    pub fn regulation(&self) -> &Regulation {
        &self.regulation
    }

    fn refuse(&mut self, pkt: &Packet, reason: DropReason) -> Admission {
        self.stats.drop(pkt, reason);
        Admission::Dropped(reason)
    }
}

impl Qdisc for PriorityQueue {
    fn policy(&self) -> Policy {
        self.policy
    }

    fn enqueue(&mut self, mut pkt: Packet, now: f64) -> Admission {
        self.stats.offer(&pkt);
        let idx = pkt.class.index();
        if pkt.class == Class::Guest {
            let home_bytes = self.queues[0].total_bytes();
            match &mut self.regulation {
                Regulation::None => {}
                Regulation::Upnq { threshold } => {
                    if !upnq_admit(home_bytes, self.cap, *threshold) {
                        return self.refuse(&pkt, DropReason::UpnqThreshold);
                    }
                }
                Regulation::Hpss { tracker, target_impact, rate } => {
                    let tx = f64::from(pkt.size) / *rate;
                    if !tracker.admit(now, tx, *target_impact) {
                        return self.refuse(&pkt, DropReason::HpssRegulation);
                    }
                }
            }
        }
        if !self.queues[idx].fits(&pkt, self.cap) {
            return self.refuse(&pkt, DropReason::QueueFull);
        }
        match (&mut self.regulation, pkt.class) {
            (Regulation::Hpss { tracker, rate, .. }, Class::Guest) => {
                tracker.add_burden(f64::from(pkt.size) / *rate);
            }
            (Regulation::Hpss { .. }, Class::Home) => self.home_marks.push_back(self.clock.at(now)),
            _ => {}
        }
        pkt.enqueued = now;
        self.queues[idx].push(pkt);
        Admission::Admitted
    }

    fn dequeue(&mut self, now: f64) -> Option<Packet> {
        let mut pkt = match self.queues[0].pop() {
            Some(p) => p,
            None => self.queues[1].pop()?,
        };
        self.stats.serve(&mut pkt, now);
        if let Regulation::Hpss { tracker, rate, .. } = &mut self.regulation {
            match pkt.class {
                Class::Home => {
                    let mark = self.home_marks.pop_front().unwrap_or(0.0);
                    let induced = (self.clock.at(now) - mark).max(0.0);
                    tracker.record_home(now, pkt.queueing_delay(), induced);
                }
                Class::Guest => {
                    let tx = f64::from(pkt.size) / *rate;
                    tracker.remove_burden(tx);
                    self.clock.begin(now, tx);
                }
            }
        }
        Some(pkt)
    }

    fn backlog_bytes(&self, class: Class) -> u64 {
        self.queues[class.index()].total_bytes()
    }

    fn stats(&self) -> &SchedStats {
        &self.stats
    }

    fn take_stats(&mut self) -> SchedStats {
        std::mem::take(&mut self.stats)
    }
}
