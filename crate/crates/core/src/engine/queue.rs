use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// A scheduled event. `seq` is the insertion counter that breaks time ties
/// in FIFO order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<K> {
    pub time: f64,
    pub seq: u64,
    pub kind: K,
}

impl<K: PartialEq> Eq for SimEvent<K> {}

impl<K: PartialEq> Ord for SimEvent<K> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl<K: PartialEq> PartialOrd for SimEvent<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending events ordered by `(time, seq)`, with the simulated clock.
#[derive(Debug)]
pub struct EventQueue<K> {
    heap: BinaryHeap<SimEvent<K>>,
    next_seq: u64,
    now: f64,
}

impl<K: PartialEq> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: PartialEq> EventQueue<K> {
    pub fn new() -> Self {
        Self { heap: BinaryHeap::new(), next_seq: 0, now: 0.0 }
    }

    /// Current simulated time: the time of the last dispatched event.
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Stores an event and returns its sequence number.
    pub fn schedule(&mut self, time: f64, kind: K) -> Result<u64> {
        if !(time >= self.now) {
            return Err(Error::Logic(format!("event scheduled at {time} s, before the clock at {} s", self.now)));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { time, seq, kind });
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<SimEvent<K>> {
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }
}
