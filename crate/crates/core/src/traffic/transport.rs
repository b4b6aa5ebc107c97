//! Reno-style reliable transport: window arithmetic, a segment-level sender
//! and a cumulative-ACK receiver.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Maximum segment payload, bytes.
pub const MSS: u32 = 1460;
/// Per-segment header overhead, bytes (a full segment is 1500 B on the wire).
pub const HEADER: u32 = 40;
pub const INITIAL_CWND: f64 = 2.0 * MSS as f64;
pub const INITIAL_SSTHRESH: f64 = 64_000.0;
pub const INITIAL_RTO: f64 = 1.0;
pub const MIN_RTO: f64 = 0.2;
pub const MAX_RTO: f64 = 60.0;

const MSS_F: f64 = MSS as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMode {
    SlowStart,
    CongestionAvoidance,
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    TripleDupack,
    Timeout,
}

/// Congestion and RTT estimator state of one sender. Windows in bytes,
/// times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportState {
    pub cwnd: f64,
    pub ssthresh: f64,
    pub srtt: Option<f64>,
    pub rttvar: f64,
    pub rto: f64,
    pub mode: TransportMode,
}

impl Default for TransportState {
    fn default() -> Self {
        Self {
            cwnd: INITIAL_CWND,
            ssthresh: INITIAL_SSTHRESH,
            srtt: None,
            rttvar: 0.0,
            rto: INITIAL_RTO,
            mode: TransportMode::SlowStart,
        }
    }
}

impl TransportState {
    /// Window growth for `acked` newly acknowledged bytes, plus an optional
    /// RTT sample. No growth while recovering.
    pub fn on_ack(&mut self, acked: u64, rtt_sample: Option<f64>) {
        if let Some(r) = rtt_sample {
            self.update_rtt(r);
        }
        if acked == 0 {
            return;
        }
        match self.mode {
            TransportMode::SlowStart => {
                self.cwnd += acked as f64;
                if self.cwnd >= self.ssthresh {
                    self.mode = TransportMode::CongestionAvoidance;
                }
            }
            TransportMode::CongestionAvoidance => self.cwnd += MSS_F * MSS_F / self.cwnd,
            TransportMode::Recovery => {}
        }
    }

    fn update_rtt(&mut self, r: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(r);
                self.rttvar = r / 2.0;
            }
            Some(s) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (s - r).abs();
                self.srtt = Some(0.875 * s + 0.125 * r);
            }
        }
        let s = self.srtt.unwrap_or(r);
        self.rto = (s + 4.0 * self.rttvar).clamp(MIN_RTO, MAX_RTO);
    }

    pub fn on_loss(&mut self, kind: LossKind) {
        self.ssthresh = (self.cwnd / 2.0).max(2.0 * MSS_F);
        match kind {
            LossKind::TripleDupack => {
                self.cwnd = self.ssthresh;
                self.mode = TransportMode::Recovery;
            }
            LossKind::Timeout => {
                self.cwnd = MSS_F;
                self.mode = TransportMode::SlowStart;
                self.rto = (2.0 * self.rto).min(MAX_RTO);
            }
        }
    }

    /// Leaves recovery once everything outstanding at the loss is acked.
    pub fn exit_recovery(&mut self) {
        if self.mode == TransportMode::Recovery {
            self.mode = TransportMode::CongestionAvoidance;
        }
    }

    /// Congestion window in whole segments, at least one.
    pub fn window_segments(&self) -> u64 {
        ((self.cwnd / MSS_F).floor() as u64).max(1)
    }
}

/// What the owner of a sender must do after an ACK.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AckOutcome {
    /// Segment to retransmit immediately.
    pub retransmit: Option<u64>,
    pub newly_acked: u64,
    pub completed: bool,
}

/// Segment bookkeeping of one reliable flow. Segments are indexed from 0;
/// ACKs carry the index of the next segment the receiver expects.
#[derive(Debug, Clone)]
pub struct ReliableSender {
    /// Total payload bytes; `None` for an infinitely backlogged flow.
    size: Option<u64>,
    segments: u64,
    released: u64,
    next_seq: u64,
    snd_una: u64,
    dupacks: u32,
    recover: u64,
    // extra segments allowed in flight while recovering: one per duplicate
    // ACK, deflated by partial ACKs
    inflation: u64,
    rwnd_segments: u64,
    pub tcp: TransportState,
    pub timeouts: u32,
    pub fast_retransmits: u32,
}

impl ReliableSender {
    pub fn new(size: Option<u64>, rwnd_bytes: u64) -> Self {
        let segments = match size {
            Some(s) => s.max(1).div_ceil(u64::from(MSS)),
            None => u64::MAX,
        };
        Self {
            size,
            segments,
            released: if size.is_some() { 0 } else { u64::MAX },
            next_seq: 0,
            snd_una: 0,
            dupacks: 0,
            recover: 0,
            inflation: 0,
            rwnd_segments: (rwnd_bytes / u64::from(MSS)).max(1),
            tcp: TransportState::default(),
            timeouts: 0,
            fast_retransmits: 0,
        }
    }

    pub fn segments(&self) -> u64 {
        self.segments
    }

    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn outstanding(&self) -> u64 {
        self.next_seq - self.snd_una
    }

    pub fn is_complete(&self) -> bool {
        self.snd_una >= self.segments
    }

    /// Payload bytes of segment `k`.
    pub fn payload(&self, k: u64) -> u32 {
        match self.size {
            None => MSS,
            Some(s) => {
                let s = s.max(1);
                let start = k * u64::from(MSS);
                (s - start).min(u64::from(MSS)) as u32
            }
        }
    }

    /// Cumulative payload bytes up to and including segment `k`.
    pub fn end_byte(&self, k: u64) -> u64 {
        match self.size {
            None => (k + 1) * u64::from(MSS),
            Some(s) => ((k + 1) * u64::from(MSS)).min(s.max(1)),
        }
    }

    /// Allows the application to hand over segments `0..n`.
    pub fn release(&mut self, n: u64) {
        self.released = self.released.max(n.min(self.segments));
    }

    pub fn released(&self) -> u64 {
        self.released
    }

    /// New segments the window and the application allow right now.
    pub fn take_sendable(&mut self) -> std::ops::Range<u64> {
        let window = (self.tcp.window_segments() + self.inflation).min(self.rwnd_segments);
        let limit = (self.snd_una + window).min(self.released).min(self.segments);
        let from = self.next_seq;
        if limit > from {
            self.next_seq = limit;
            from..limit
        } else {
            from..from
        }
    }

    pub fn on_ack(&mut self, ack: u64, rtt_sample: Option<f64>) -> AckOutcome {
        let mut out = AckOutcome::default();
        if ack > self.snd_una {
            let acked_bytes =
                self.end_byte(ack - 1) - if self.snd_una == 0 { 0 } else { self.end_byte(self.snd_una - 1) };
            out.newly_acked = ack - self.snd_una;
            self.snd_una = ack;
            self.next_seq = self.next_seq.max(ack);
            self.dupacks = 0;
            if self.tcp.mode == TransportMode::Recovery {
                if ack >= self.recover {
                    self.tcp.exit_recovery();
                    self.inflation = 0;
                } else {
                    self.inflation = self.inflation.saturating_sub(out.newly_acked) + 1;
                    out.retransmit = Some(ack);
                }
            }
            self.tcp.on_ack(acked_bytes, rtt_sample);
            out.completed = self.is_complete();
        } else if ack == self.snd_una && self.outstanding() > 0 {
            self.dupacks += 1;
            if self.tcp.mode == TransportMode::Recovery {
                self.inflation += 1;
            } else if self.dupacks == 3 {
                self.tcp.on_loss(LossKind::TripleDupack);
                self.recover = self.next_seq;
                self.inflation = 3;
                self.fast_retransmits += 1;
                out.retransmit = Some(self.snd_una);
            }
        }
        out
    }

    /// Retransmission timeout: collapse the window and go back to the first
    /// unacknowledged segment.
    pub fn on_timeout(&mut self) {
        self.tcp.on_loss(LossKind::Timeout);
        self.timeouts += 1;
        self.next_seq = self.snd_una;
        self.dupacks = 0;
        self.inflation = 0;
    }
}

/// In-order delivery with out-of-order buffering.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    expected: u64,
    buffered: BTreeSet<u64>,
}

impl Receiver {
    /// Accepts segment `k`; returns the cumulative ACK and the number of
    /// segments newly delivered in order.
    pub fn on_segment(&mut self, k: u64) -> (u64, u64) {
        let before = self.expected;
        if k == self.expected {
            self.expected += 1;
            while self.buffered.remove(&self.expected) {
                self.expected += 1;
            }
        } else if k > self.expected {
            self.buffered.insert(k);
        }
        (self.expected, self.expected - before)
    }

    pub fn expected(&self) -> u64 {
        self.expected
    }
}
