//! Two-class weighted fair queueing with self-clocked finish tags.

use std::collections::VecDeque;

use super::fifo::ByteFifo;
use super::{Admission, Class, DropReason, Packet, Policy, Qdisc, SchedStats};

/// Finish-tag bookkeeping for the home and guest classes.
#[derive(Debug, Clone)]
pub struct WfqSelector {
    weights: [f64; 2],
    last_finish: [f64; 2],
    vtime: f64,
}

impl WfqSelector {
    /// `home_weight` in (0, 1); the guest weight is the complement.
    pub fn new(home_weight: f64) -> Self {
        assert!(home_weight > 0.0 && home_weight < 1.0, "home weight must be in (0, 1)");
        Self { weights: [home_weight, 1.0 - home_weight], last_finish: [0.0; 2], vtime: 0.0 }
    }

    pub fn weight(&self, class: Class) -> f64 {
        self.weights[class.index()]
    }

    /// Finish tag of a newly arrived packet.
    pub fn tag(&mut self, class: Class, size: u32) -> f64 {
        let i = class.index();
        let f = self.last_finish[i].max(self.vtime) + f64::from(size) / self.weights[i];
        self.last_finish[i] = f;
        f
    }

    /// Class whose head tag is smaller; ties go to home.
    pub fn pick(home_head: Option<f64>, guest_head: Option<f64>) -> Option<Class> {
        match (home_head, guest_head) {
            (Some(h), Some(g)) => Some(if h <= g { Class::Home } else { Class::Guest }),
            (Some(_), None) => Some(Class::Home),
            (None, Some(_)) => Some(Class::Guest),
            (None, None) => None,
        }
    }

    pub fn served(&mut self, tag: f64) {
        self.vtime = tag;
    }

    /// Restarts the virtual clock once the system is idle.
    pub fn reset(&mut self) {
        self.last_finish = [0.0; 2];
        self.vtime = 0.0;
    }
}

#[derive(Debug)]
pub struct Wfq {
    policy: Policy,
    cap: u64,
    queues: [ByteFifo; 2],
    tags: [VecDeque<f64>; 2],
    selector: WfqSelector,
    stats: SchedStats,
}

impl Wfq {
    pub fn new(policy: Policy, cap: u64, home_weight: f64) -> Self {
        Self {
            policy,
            cap,
            queues: [ByteFifo::default(), ByteFifo::default()],
            tags: [VecDeque::new(), VecDeque::new()],
            selector: WfqSelector::new(home_weight),
            stats: SchedStats::default(),
        }
    }

    pub fn selector(&self) -> &WfqSelector {
        &self.selector
    }
}

impl Qdisc for Wfq {
    fn policy(&self) -> Policy {
        self.policy
    }

    fn enqueue(&mut self, mut pkt: Packet, now: f64) -> Admission {
        self.stats.offer(&pkt);
        let i = pkt.class.index();
        if !self.queues[i].fits(&pkt, self.cap) {
            self.stats.drop(&pkt, DropReason::QueueFull);
            return Admission::Dropped(DropReason::QueueFull);
        }
        let tag = self.selector.tag(pkt.class, pkt.size);
        self.tags[i].push_back(tag);
        pkt.enqueued = now;
        self.queues[i].push(pkt);
        Admission::Admitted
    }

    fn dequeue(&mut self, now: f64) -> Option<Packet> {
        let class = WfqSelector::pick(self.tags[0].front().copied(), self.tags[1].front().copied())?;
        let i = class.index();
        let tag = self.tags[i].pop_front().expect("tag per packet");
        let mut pkt = self.queues[i].pop().expect("packet per tag");
        self.selector.served(tag);
        if self.queues.iter().all(ByteFifo::is_empty) {
            self.selector.reset();
        }
        self.stats.serve(&mut pkt, now);
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
