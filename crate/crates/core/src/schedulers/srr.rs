use std::collections::{HashMap, VecDeque};

use super::{Admission, Class, DropReason, FlowId, Packet, Policy, Qdisc, SchedStats};

/// Equal-weight round robin over active flows, one packet per turn.
///
/// With every weight equal, smoothed round robin's weight spread sequence
/// visits each active flow once per round, so the schedule is plain round
/// robin over the flows that currently have packets.
#[derive(Debug, Default, Clone)]
pub struct RoundRobin {
    active: VecDeque<FlowId>,
}

impl RoundRobin {
    /// Adds a flow that just became backlogged to the end of the round.
    pub fn activate(&mut self, flow: FlowId) {
        self.active.push_back(flow);
    }

    /// Picks the flow to serve next and rotates it to the back if it stays
    /// backlogged.
    pub fn next(&mut self, still_backlogged: impl FnOnce(FlowId) -> bool) -> Option<FlowId> {
        let flow = self.active.pop_front()?;
        if still_backlogged(flow) {
            self.active.push_back(flow);
        }
        Some(flow)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

/// Per-flow queues served round robin, sharing one byte-bounded buffer.
#[derive(Debug)]
pub struct Srr {
    cap: u64,
    queues: HashMap<FlowId, VecDeque<Packet>>,
    round: RoundRobin,
    bytes: [u64; 2],
    stats: SchedStats,
}

impl Srr {
    pub fn new(cap: u64) -> Self {
        Self { cap, queues: HashMap::new(), round: RoundRobin::default(), bytes: [0; 2], stats: SchedStats::default() }
    }

    pub fn active_flows(&self) -> usize {
        self.round.len()
    }
}

impl Qdisc for Srr {
    fn policy(&self) -> Policy {
        Policy::Srr
    }

    fn enqueue(&mut self, mut pkt: Packet, now: f64) -> Admission {
        self.stats.offer(&pkt);
        if self.bytes[0] + self.bytes[1] + u64::from(pkt.size) > self.cap {
            self.stats.drop(&pkt, DropReason::QueueFull);
            return Admission::Dropped(DropReason::QueueFull);
        }
        pkt.enqueued = now;
        self.bytes[pkt.class.index()] += u64::from(pkt.size);
        let queue = self.queues.entry(pkt.flow_id).or_default();
        if queue.is_empty() {
            self.round.activate(pkt.flow_id);
        }
        queue.push_back(pkt);
        Admission::Admitted
    }

    fn dequeue(&mut self, now: f64) -> Option<Packet> {
        let queues = &mut self.queues;
        let mut taken = None;
        self.round.next(|flow| {
            let q = queues.get_mut(&flow).expect("active flow has a queue");
            taken = q.pop_front();
            !q.is_empty()
        })?;
        let mut pkt = taken.expect("active flow is backlogged");
        if self.queues.get(&pkt.flow_id).is_some_and(VecDeque::is_empty) {
            self.queues.remove(&pkt.flow_id);
        }
        self.bytes[pkt.class.index()] -= u64::from(pkt.size);
        self.stats.serve(&mut pkt, now);
        Some(pkt)
    }

    fn backlog_bytes(&self, class: Class) -> u64 {
        self.bytes[class.index()]
    }

    fn stats(&self) -> &SchedStats {
        &self.stats
    }

    fn take_stats(&mut self) -> SchedStats {
        std::mem::take(&mut self.stats)
    }
}
