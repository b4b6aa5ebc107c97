use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::engine::RngStream;

use super::fifo::ByteFifo;
use super::{Admission, Class, DropReason, Packet, Policy, Qdisc, SchedStats};

/// Average packet size assumed when decaying the average over idle periods.
const IDLE_PACKET_BYTES: f64 = 1500.0;

/// RED thresholds in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedParams {
    pub min_th: f64,
    pub max_th: f64,
    pub max_p: f64,
}

impl RedParams {
    /// `min_th` is the backlog drained in `delay` seconds at `rate` bytes/s;
    /// `max_th = 3 min_th`.
    pub fn from_delay_target(delay: f64, rate: f64, max_p: f64) -> Self {
        let min_th = delay * rate;
        Self { min_th, max_th: 3.0 * min_th, max_p }
    }

    /// Drop probability at average backlog `avg` (bytes): zero below
    /// `min_th`, linear up to `max_p` at `max_th`, one above.
    pub fn drop_probability(&self, avg: f64) -> f64 {
        if avg < self.min_th {
            0.0
        } else if avg >= self.max_th {
            1.0
        } else {
            self.max_p * (avg - self.min_th) / (self.max_th - self.min_th)
        }
    }
}

/// Returns `true` to admit a packet given the average backlog.
pub fn red_admit<R: RngCore + ?Sized>(avg_queue: f64, params: &RedParams, rng: &mut R) -> bool {
    let p = params.drop_probability(avg_queue);
    if p <= 0.0 {
        true
    } else if p >= 1.0 {
        false
    } else {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        u >= p
    }
}

/// FIFO with random early detection on an EWMA of the byte backlog.
#[derive(Debug)]
pub struct Red {
    cap: u64,
    params: RedParams,
    w_q: f64,
    rate: f64,
    avg: f64,
    idle_since: Option<f64>,
    fifo: ByteFifo,
    rng: RngStream,
    stats: SchedStats,
}

impl Red {
    pub fn new(cap: u64, params: RedParams, w_q: f64, rate: f64, rng: RngStream) -> Self {
        Self {
            cap,
            params,
            w_q,
            rate,
            avg: 0.0,
            idle_since: Some(0.0),
            fifo: ByteFifo::default(),
            rng,
            stats: SchedStats::default(),
        }
    }

    pub fn params(&self) -> &RedParams {
        &self.params
    }

    pub fn average_backlog(&self) -> f64 {
        self.avg
    }

    fn update_average(&mut self, now: f64) {
        if let Some(since) = self.idle_since.take() {
            // decay as if small packets had been served while idle
            let m = (now - since).max(0.0) * self.rate / IDLE_PACKET_BYTES;
            self.avg *= (1.0 - self.w_q).powf(m);
        }
        self.avg = (1.0 - self.w_q) * self.avg + self.w_q * self.fifo.total_bytes() as f64;
    }
}

impl Qdisc for Red {
    fn policy(&self) -> Policy {
        Policy::Red
    }

    fn enqueue(&mut self, mut pkt: Packet, now: f64) -> Admission {
        self.stats.offer(&pkt);
        self.update_average(now);
        let reason = if !red_admit(self.avg, &self.params, &mut self.rng) {
            Some(DropReason::RedProbabilistic)
        } else if !self.fifo.fits(&pkt, self.cap) {
            Some(DropReason::QueueFull)
        } else {
            None
        };
        if let Some(reason) = reason {
            if self.fifo.is_empty() && self.idle_since.is_none() {
                self.idle_since = Some(now);
            }
            self.stats.drop(&pkt, reason);
            return Admission::Dropped(reason);
        }
        pkt.enqueued = now;
        self.fifo.push(pkt);
        Admission::Admitted
    }

    fn dequeue(&mut self, now: f64) -> Option<Packet> {
        let mut pkt = self.fifo.pop()?;
        if self.fifo.is_empty() {
            self.idle_since = Some(now);
        }
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
