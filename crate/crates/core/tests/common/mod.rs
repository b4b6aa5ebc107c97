//! Shared scheduler harness: a packet-level link driver plus property checks
//! used by the property suite and the acceptance target.
#![allow(dead_code)]

use std::collections::HashSet;

use fairshare::engine::RngStream;
use fairshare::schedulers::{build, Class, Packet, Policy, Qdisc, SchedulerConfig};
use proptest::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub class: Class,
    pub size: u32,
}

#[derive(Debug, Clone)]
pub struct Served {
    pub pkt: Packet,
    pub start: f64,
    pub end: f64,
    /// Home bytes queued just before this packet was selected.
    pub home_backlog: u64,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub served: Vec<Served>,
    /// Instants at which the link idled with packets still queued.
    pub idle_with_backlog: Vec<f64>,
}

pub fn scheduler(policy: Policy, cap: u64, mbps: f64) -> Box<dyn Qdisc> {
    build(&SchedulerConfig::new(policy, cap), mbps, RngStream::new(7, "scheduler")).unwrap()
}

/// Feeds `arrivals` through `q` onto a link of `rate` bytes/s until every
/// queue is empty. Packets are flow-numbered by arrival index.
pub fn drive(q: &mut dyn Qdisc, arrivals: &[Arrival], rate: f64) -> Outcome {
    let mut out = Outcome::default();
    let mut busy: Option<Served> = None;
    let mut i = 0;
    let start_next = |q: &mut dyn Qdisc, now: f64, out: &mut Outcome| -> Option<Served> {
        let home_backlog = q.backlog_bytes(Class::Home);
        match q.dequeue(now) {
            Some(pkt) => {
                let end = now + f64::from(pkt.size) / rate;
                Some(Served { pkt, start: now, end, home_backlog })
            }
            None => {
                if !q.is_empty() {
                    out.idle_with_backlog.push(now);
                }
                None
            }
        }
    };
    loop {
        let next_arrival = arrivals.get(i).map(|a| a.time);
        let next_done = busy.as_ref().map(|s| s.end);
        let arrival_first = match (next_arrival, next_done) {
            (None, None) => break,
            (Some(t), Some(d)) => t < d,
            (a, _) => a.is_some(),
        };
        if arrival_first {
            let a = &arrivals[i];
            q.enqueue(Packet::new(i as u64, a.class, a.size, 0, a.time), a.time);
            i += 1;
            if busy.is_none() {
                busy = start_next(q, a.time, &mut out);
            }
        } else {
            let d = next_done.expect("in service");
            out.served.push(busy.take().expect("in service"));
            busy = start_next(q, d, &mut out);
        }
    }
    out
}

/// Serves both classes from permanently backlogged sources for `horizon`
/// seconds and returns the bytes served per class.
pub fn saturate(q: &mut dyn Qdisc, sizes: &[u32], rate: f64, horizon: f64) -> [u64; 2] {
    let mut served = [0u64; 2];
    let mut now = 0.0;
    let mut next_id = 0u64;
    let mut k = 0usize;
    while now < horizon {
        for class in Class::ALL {
            while q.backlog_bytes(class) < 20_000 {
                let size = sizes[k % sizes.len()];
                k += 1;
                q.enqueue(Packet::new(next_id, class, size, 0, now), now);
                next_id += 1;
            }
        }
        let pkt = q.dequeue(now).expect("backlogged");
        served[pkt.class.index()] += u64::from(pkt.size);
        now += f64::from(pkt.size) / rate;
    }
    served
}

#[derive(Debug, Clone)]
pub struct Case {
    pub policy: Policy,
    pub cap: u64,
    pub mbps: f64,
    pub arrivals: Vec<Arrival>,
}

fn arrivals(home_only: bool) -> impl Strategy<Value = Vec<Arrival>> {
    prop::collection::vec((0.0..0.01f64, any::<bool>(), 40u32..=1500), 1..300).prop_map(move |raw| {
        let mut t = 0.0;
        raw.into_iter()
            .map(|(gap, guest, size)| {
                t += gap;
                let class = if guest && !home_only { Class::Guest } else { Class::Home };
                Arrival { time: t, class, size }
            })
            .collect()
    })
}

pub fn any_policy() -> impl Strategy<Value = Policy> {
    prop::sample::select(Policy::ALL.to_vec())
}

pub fn case() -> impl Strategy<Value = Case> {
    (any_policy(), 3_000u64..120_000, 0.5..10.0f64, arrivals(false)).prop_map(|(policy, cap, mbps, arrivals)| Case {
        policy,
        cap,
        mbps,
        arrivals,
    })
}

pub fn home_only_case() -> impl Strategy<Value = Case> {
    let policies = vec![Policy::Pq, Policy::Upnq, Policy::Hpss, Policy::Cbq];
    (prop::sample::select(policies), 3_000u64..120_000, 0.5..10.0f64, arrivals(true))
        .prop_map(|(policy, cap, mbps, arrivals)| Case { policy, cap, mbps, arrivals })
}

/// Priority cases: PQ, UPNQ, or HPSS below its capacity threshold.
pub fn priority_case() -> impl Strategy<Value = Case> {
    let policies = vec![Policy::Pq, Policy::Upnq, Policy::Hpss];
    (prop::sample::select(policies), 3_000u64..120_000, 0.5..1.99f64, arrivals(false))
        .prop_map(|(policy, cap, mbps, arrivals)| Case { policy, cap, mbps, arrivals })
}

pub fn saturation_case() -> impl Strategy<Value = (Vec<u32>, f64)> {
    (prop::collection::vec(40u32..=1500, 1..20), 0.5..2.0f64)
}

fn rate(mbps: f64) -> f64 {
    mbps * 1e6 / 8.0
}

pub fn check_work_conservation(c: &Case) -> Result<(), String> {
    let mut q = scheduler(c.policy, c.cap, c.mbps);
    let out = drive(q.as_mut(), &c.arrivals, rate(c.mbps));
    match out.idle_with_backlog.first() {
        Some(t) => Err(format!("{}: link idle at {t} with packets queued", c.policy)),
        None => Ok(()),
    }
}

pub fn check_non_preemption(c: &Case) -> Result<(), String> {
    let mut q = scheduler(c.policy, c.cap, c.mbps);
    let r = rate(c.mbps);
    let out = drive(q.as_mut(), &c.arrivals, r);
    let mut seen = HashSet::new();
    let mut prev_end = f64::NEG_INFINITY;
    for s in &out.served {
        if !seen.insert(s.pkt.flow_id) {
            return Err(format!("{}: packet {} transmitted twice", c.policy, s.pkt.flow_id));
        }
        if s.start < prev_end - 1e-12 {
            return Err(format!("{}: packet {} started before the previous one finished", c.policy, s.pkt.flow_id));
        }
        if ((s.end - s.start) - f64::from(s.pkt.size) / r).abs() > 1e-9 {
            return Err(format!("{}: packet {} service was interrupted", c.policy, s.pkt.flow_id));
        }
        prev_end = s.end;
    }
    Ok(())
}

pub fn check_strict_priority(c: &Case) -> Result<(), String> {
    let mut q = scheduler(c.policy, c.cap, c.mbps);
    let out = drive(q.as_mut(), &c.arrivals, rate(c.mbps));
    match out.served.iter().find(|s| s.pkt.class == Class::Guest && s.home_backlog > 0) {
        Some(s) => Err(format!("{}: guest {} served over {} home bytes", c.policy, s.pkt.flow_id, s.home_backlog)),
        None => Ok(()),
    }
}

pub fn check_byte_conservation(c: &Case) -> Result<(), String> {
    let mut q = scheduler(c.policy, c.cap, c.mbps);
    let out = drive(q.as_mut(), &c.arrivals, rate(c.mbps));
    let stats = q.stats();
    for class in Class::ALL {
        let s = stats.class(class);
        let offered: u64 = c.arrivals.iter().filter(|a| a.class == class).map(|a| u64::from(a.size)).sum();
        let served: u64 = out.served.iter().filter(|x| x.pkt.class == class).map(|x| u64::from(x.pkt.size)).sum();
        if s.offered_bytes != offered || s.served_bytes != served || offered != served + s.dropped_bytes {
            return Err(format!(
                "{} {class:?}: offered {offered} (counted {}), served {served} (counted {}), dropped {}",
                c.policy, s.offered_bytes, s.served_bytes, s.dropped_bytes
            ));
        }
    }
    Ok(())
}

pub fn check_fifo_equivalence(c: &Case) -> Result<(), String> {
    let r = rate(c.mbps);
    let order = |policy| {
        let mut q = scheduler(policy, c.cap, c.mbps);
        drive(q.as_mut(), &c.arrivals, r).served.iter().map(|s| (s.pkt.flow_id, s.start)).collect::<Vec<_>>()
    };
    if order(c.policy) == order(Policy::DropTail) {
        Ok(())
    } else {
        Err(format!("{} departs from FIFO order on home-only traffic", c.policy))
    }
}

pub fn check_cbq_share(sizes: &[u32], mbps: f64) -> Result<(), String> {
    let mut q = scheduler(Policy::Cbq, 120_000, mbps);
    let served = saturate(q.as_mut(), sizes, rate(mbps), 60.0);
    let home = served[0] as f64 / (served[0] + served[1]) as f64;
    if (home - 0.95).abs() <= 0.01 {
        Ok(())
    } else {
        Err(format!("home share {home:.4} with sizes {sizes:?}"))
    }
}
