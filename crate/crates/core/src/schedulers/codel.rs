//! Controlled-delay AQM (RFC 8289), without the flow-queue variant.

use super::fifo::ByteFifo;
use super::{Admission, Class, DropReason, Packet, Policy, Qdisc, SchedStats};

/// Backlog (bytes) at or below which CoDel never drops.
pub const CODEL_MTU: u64 = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodelAction {
    Serve,
    DropHead,
}

/// CoDel control-law state.
#[derive(Debug, Clone)]
pub struct CodelControl {
    target: f64,
    interval: f64,
    first_above_time: Option<f64>,
    drop_next: f64,
    count: u32,
    lastcount: u32,
    dropping: bool,
}

impl CodelControl {
    pub fn new(target: f64, interval: f64) -> Self {
        Self { target, interval, first_above_time: None, drop_next: 0.0, count: 0, lastcount: 0, dropping: false }
    }

    pub fn is_dropping(&self) -> bool {
        self.dropping
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn drop_next(&self) -> f64 {
        self.drop_next
    }

    /// `t + interval / sqrt(count)`.
    pub fn control_law(&self, t: f64, count: u32) -> f64 {
        t + self.interval / f64::from(count.max(1)).sqrt()
    }

    fn ok_to_drop(&mut self, sojourn: f64, now: f64, backlog: u64) -> bool {
        if sojourn < self.target || backlog <= CODEL_MTU {
            self.first_above_time = None;
            return false;
        }
        match self.first_above_time {
            None => {
                self.first_above_time = Some(now + self.interval);
                false
            }
            Some(t) => now >= t,
        }
    }

    /// Called when the queue is found empty.
    pub fn on_empty(&mut self) {
        self.first_above_time = None;
        self.dropping = false;
    }

    /// Decides the fate of the head packet with the given sojourn time;
    /// `backlog` is the byte backlog left behind it.
    pub fn decide(&mut self, sojourn: f64, now: f64, backlog: u64) -> CodelAction {
        let ok = self.ok_to_drop(sojourn, now, backlog);
        if self.dropping {
            if !ok {
                self.dropping = false;
                return CodelAction::Serve;
            }
            if now >= self.drop_next {
                self.count += 1;
                self.drop_next = self.control_law(self.drop_next, self.count);
                return CodelAction::DropHead;
            }
            CodelAction::Serve
        } else if ok {
            self.dropping = true;
            let delta = self.count.saturating_sub(self.lastcount);
            self.count = if delta > 1 && now - self.drop_next < 16.0 * self.interval { delta } else { 1 };
            self.drop_next = self.control_law(now, self.count);
            self.lastcount = self.count;
            CodelAction::DropHead
        } else {
            CodelAction::Serve
        }
    }
}

/// FIFO governed by CoDel head drops, with tail drop at capacity.
#[derive(Debug)]
pub struct CodelQueue {
    cap: u64,
    fifo: ByteFifo,
    control: CodelControl,
    stats: SchedStats,
}

impl CodelQueue {
    pub fn new(cap: u64, target: f64, interval: f64) -> Self {
        Self {
            cap,
            fifo: ByteFifo::default(),
            control: CodelControl::new(target, interval),
            stats: SchedStats::default(),
        }
    }

    pub fn control(&self) -> &CodelControl {
        &self.control
    }
}

impl Qdisc for CodelQueue {
    fn policy(&self) -> Policy {
        Policy::Codel
    }

    fn enqueue(&mut self, mut pkt: Packet, now: f64) -> Admission {
        self.stats.offer(&pkt);
        if !self.fifo.fits(&pkt, self.cap) {
            self.stats.drop(&pkt, DropReason::QueueFull);
            return Admission::Dropped(DropReason::QueueFull);
        }
        pkt.enqueued = now;
        self.fifo.push(pkt);
        Admission::Admitted
    }

    fn dequeue(&mut self, now: f64) -> Option<Packet> {
        loop {
            let Some(mut pkt) = self.fifo.pop() else {
                self.control.on_empty();
                return None;
            };
            let sojourn = now - pkt.enqueued;
            match self.control.decide(sojourn, now, self.fifo.total_bytes()) {
                CodelAction::Serve => {
                    self.stats.serve(&mut pkt, now);
                    return Some(pkt);
                }
                CodelAction::DropHead => self.stats.drop(&pkt, DropReason::CodelHeadDrop),
            }
        }
    }

    fn backlog_bytes(&self, class: Class) -> u64 {
        self.fifo.class_bytes(class)
    }

    fn stats(&self) -> &SchedStats {
        &self.stats
    }

    fn take_stats(&mut self) -> SchedStats {
        std::mem::take(&mut self.stats)
    }
}
