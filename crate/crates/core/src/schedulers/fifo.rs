use std::collections::VecDeque;

use super::{Admission, Class, DropReason, Packet, Policy, Qdisc, SchedStats};

/// Byte-bounded FIFO with per-class byte counts.
#[derive(Debug, Clone, Default)]
pub(crate) struct ByteFifo {
    packets: VecDeque<Packet>,
    bytes: [u64; 2],
}

impl ByteFifo {
    pub(crate) fn total_bytes(&self) -> u64 {
        self.bytes[0] + self.bytes[1]
    }

    pub(crate) fn class_bytes(&self, class: Class) -> u64 {
        self.bytes[class.index()]
    }

    pub(crate) fn fits(&self, pkt: &Packet, cap: u64) -> bool {
        self.total_bytes() + u64::from(pkt.size) <= cap
    }

    pub(crate) fn push(&mut self, pkt: Packet) {
        self.bytes[pkt.class.index()] += u64::from(pkt.size);
        self.packets.push_back(pkt);
    }

    pub(crate) fn pop(&mut self) -> Option<Packet> {
        let pkt = self.packets.pop_front()?;
        self.bytes[pkt.class.index()] -= u64::from(pkt.size);
        Some(pkt)
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}

/// Single FIFO with tail drop.
#[derive(Debug)]
pub struct DropTail {
    cap: u64,
    fifo: ByteFifo,
    stats: SchedStats,
}

impl DropTail {
    pub fn new(cap: u64) -> Self {
        Self { cap, fifo: ByteFifo::default(), stats: SchedStats::default() }
    }
}

impl Qdisc for DropTail {
    fn policy(&self) -> Policy {
        Policy::DropTail
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
        let mut pkt = self.fifo.pop()?;
        self.stats.serve(&mut pkt, now);
        Some(pkt)
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
