use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::apmodel::AccessPointProfile;
use crate::metrics::{ClassSummary, FlowRecord, RunReport, ValidationMetrics, BIN_S};
use crate::schedulers::{self, Class, FlowId, Packet, Policy, Qdisc, SchedulerConfig};
use crate::traffic::transport::{Receiver, ReliableSender, HEADER};
use crate::traffic::{self, app_emit, FlowSpec, GuestProfile, HomeAppConfig};
use crate::{Error, Result};

use super::{EventQueue, RngStream};

/// One-way propagation delays around the uplink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Host to access point.
    pub lan_delay_s: f64,
    /// Access point to the far end; the return path adds both delays.
    pub wan_delay_s: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { lan_delay_s: 0.001, wan_delay_s: 0.020 }
    }
}

/// How much guest traffic to offer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum GuestLoad {
    Disabled,
    /// Calibrate the arrival rate so the offered load lands in
    /// `[lo_kbps, hi_kbps]`.
    Band {
        lo_kbps: f64,
        hi_kbps: f64,
    },
    /// Fixed arrival-rate multiplier.
    Scale {
        gamma: f64,
    },
}

impl GuestLoad {
    /// Band label such as `1-3`, `off` or `x2.5`.
    pub fn label(&self) -> String {
        match *self {
            GuestLoad::Disabled => "off".into(),
            GuestLoad::Band { lo_kbps, hi_kbps } => format!("{lo_kbps}-{hi_kbps}"),
            GuestLoad::Scale { gamma } => format!("x{gamma}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuestTraffic {
    /// Profiles running in parallel, one source each.
    pub profiles: Vec<GuestProfile>,
    pub load: GuestLoad,
    /// Receive window of guest flows, bytes.
    pub rwnd_bytes: u64,
}

impl Default for GuestTraffic {
    fn default() -> Self {
        Self {
            profiles: (1..=4).map(|id| GuestProfile::measured(id).expect("measured profile")).collect(),
            load: GuestLoad::Disabled,
            rwnd_bytes: 64_000,
        }
    }
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub ap: AccessPointProfile,
    pub scheduler: SchedulerConfig,
    pub home_apps: Vec<HomeAppConfig>,
    pub guest: GuestTraffic,
    pub network: NetworkConfig,
    pub duration_s: f64,
    pub seed: u64,
}

impl Scenario {
    /// Ten minutes of the four default home applications on `ap` under
    /// `policy`, without guests. The scheduler queue takes the uplink queue
    /// size of the profile.
    pub fn new(ap: AccessPointProfile, policy: Policy) -> Self {
        let scheduler = SchedulerConfig::new(policy, ap.uplink_queue_bytes());
        Self {
            ap,
            scheduler,
            home_apps: HomeAppConfig::default_set(),
            guest: GuestTraffic::default(),
            network: NetworkConfig::default(),
            duration_s: 600.0,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ap.validate()?;
        self.scheduler.validate()?;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Config(format!("duration must be positive, got {}", self.duration_s)));
        }
        let NetworkConfig { lan_delay_s, wan_delay_s } = self.network;
        if !(lan_delay_s >= 0.0 && wan_delay_s >= 0.0 && lan_delay_s.is_finite() && wan_delay_s.is_finite()) {
            return Err(Error::Config("propagation delays must be finite and non-negative".into()));
        }
        for app in &self.home_apps {
            app.validate()?;
        }
        for p in &self.guest.profiles {
            p.validate()?;
        }
        if self.guest.rwnd_bytes < u64::from(traffic::transport::MSS) {
            return Err(Error::Config(format!("guest rwnd_bytes too small: {}", self.guest.rwnd_bytes)));
        }
        match self.guest.load {
            GuestLoad::Disabled => {}
            GuestLoad::Band { lo_kbps, hi_kbps } => {
                if !(lo_kbps > 0.0 && hi_kbps > lo_kbps && hi_kbps.is_finite()) {
                    return Err(Error::Config(format!(
                        "guest load band [{lo_kbps}, {hi_kbps}] is not a positive range"
                    )));
                }
            }
            GuestLoad::Scale { gamma } => {
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(Error::Config(format!("guest gamma must be positive, got {gamma}")));
                }
            }
        }
        if self.guest.load != GuestLoad::Disabled && self.guest.profiles.is_empty() {
            return Err(Error::Config("guest load set but no guest profiles".into()));
        }
        Ok(())
    }

    /// The matched baseline: identical except that guests are switched off.
    pub fn without_guests(&self) -> Self {
        let mut s = self.clone();
        s.guest.load = GuestLoad::Disabled;
        s
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    fn guests_enabled(&self) -> bool {
        self.guest.load != GuestLoad::Disabled && !self.guest.profiles.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Ev {
    /// Packet reaches the access point.
    Arrival(Packet),
    ServiceDone,
    /// Packet reaches the far end.
    Deliver(Packet),
    Ack {
        flow: FlowId,
        ack: u64,
        echo: f64,
    },
    AppTimer(usize),
    FlowStart(usize),
    Release(FlowId),
    Rto(FlowId),
    Tick,
}

struct ReliableFlow {
    sender: ReliableSender,
    receiver: Receiver,
    rto_deadline: Option<f64>,
    rto_pending: bool,
}

enum FlowKind {
    Datagram { next_seq: u64 },
    Reliable(Box<ReliableFlow>),
}

struct Flow {
    class: Class,
    app: Option<usize>,
    profile_id: Option<u8>,
    start: f64,
    size: Option<u64>,
    duration: Option<f64>,
    completed_at: Option<f64>,
    delivered_bytes: u64,
    kind: FlowKind,
}

struct GuestSource {
    profile: GuestProfile,
    rng: RngStream,
    pending: Option<FlowSpec>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    q: EventQueue<Ev>,
    qdisc: Box<dyn Qdisc>,
    rate: f64,
    in_service: Option<Packet>,
    flows: Vec<Flow>,
    apps: Vec<(RngStream, FlowId)>,
    guests: Vec<GuestSource>,
    bin_bytes: [u64; 2],
    series: [Vec<f64>; 2],
    next_tick: u64,
    ticks: u64,
    served_by_app: Vec<u64>,
    generated_packets: u64,
    received_packets: u64,
    received_bytes: u64,
    delay_sum: f64,
    window_bytes: Vec<u64>,
}

/// Runs a scenario to its end time. Identical scenarios give identical
/// reports.
pub fn run(scenario: &Scenario) -> Result<RunReport> {
    scenario.validate()?;
    let qdisc =
        schedulers::build(&scenario.scheduler, scenario.ap.capacity_up, RngStream::new(scenario.seed, "scheduler"))?;
    let gamma = if scenario.guests_enabled() {
        Some(match scenario.guest.load {
            GuestLoad::Band { lo_kbps, hi_kbps } => {
                traffic::calibrate_load(
                    &scenario.guest.profiles,
                    (lo_kbps, hi_kbps),
                    scenario.seed,
                    scenario.duration_s,
                )?
                .gamma
            }
            GuestLoad::Scale { gamma } => gamma,
            GuestLoad::Disabled => unreachable!(),
        })
    } else {
        None
    };
    let mut sim = Sim::new(scenario, qdisc, gamma)?;
    sim.execute()?;
    Ok(sim.report(gamma))
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario, qdisc: Box<dyn Qdisc>, gamma: Option<f64>) -> Result<Self> {
        let windows = sc.duration_s.ceil().max(1.0) as usize;
        let ticks = (sc.duration_s / BIN_S - 1e-9).ceil().max(1.0) as u64;
        let mut sim = Sim {
            sc,
            q: EventQueue::new(),
            qdisc,
            rate: sc.ap.uplink_bytes_per_sec(),
            in_service: None,
            flows: Vec::new(),
            apps: Vec::new(),
            guests: Vec::new(),
            bin_bytes: [0; 2],
            series: [Vec::with_capacity(ticks as usize), Vec::with_capacity(ticks as usize)],
            next_tick: 1,
            ticks,
            served_by_app: vec![0; sc.home_apps.len()],
            generated_packets: 0,
            received_packets: 0,
            received_bytes: 0,
            delay_sum: 0.0,
            window_bytes: vec![0; windows],
        };
        for (i, app) in sc.home_apps.iter().enumerate() {
            let kind = match *app {
                HomeAppConfig::FtpElephant { rwnd_bytes } => {
                    let mut sender = ReliableSender::new(None, rwnd_bytes);
                    sender.release(u64::MAX);
                    FlowKind::Reliable(Box::new(ReliableFlow {
                        sender,
                        receiver: Receiver::default(),
                        rto_deadline: None,
                        rto_pending: false,
                    }))
                }
                _ => FlowKind::Datagram { next_seq: 0 },
            };
            let id = sim.flows.len() as FlowId;
            sim.flows.push(Flow {
                class: Class::Home,
                app: Some(i),
                profile_id: None,
                start: 0.0,
                size: None,
                duration: None,
                completed_at: None,
                delivered_bytes: 0,
                kind,
            });
            sim.apps.push((RngStream::new(sc.seed, format!("home-{i}-{}", app.kind())), id));
            if app.is_reliable() {
                sim.try_send(id, 0.0)?;
            } else {
                sim.q.schedule(0.0, Ev::AppTimer(i))?;
            }
        }
        if let Some(gamma) = gamma {
            for (i, p) in sc.guest.profiles.iter().enumerate() {
                let profile = p.scaled(gamma)?;
                let mut rng = RngStream::new(sc.seed, traffic::guest_stream_label(i, p.profile_id));
                let first = traffic::next_guest_flow(&profile, &mut rng, 0.0);
                if first.start <= sc.duration_s {
                    sim.q.schedule(first.start, Ev::FlowStart(i))?;
                }
                sim.guests.push(GuestSource { profile, rng, pending: Some(first) });
            }
        }
        sim.q.schedule(sim.tick_time(1), Ev::Tick)?;
        Ok(sim)
    }

    fn tick_time(&self, k: u64) -> f64 {
        (k as f64 * BIN_S).min(self.sc.duration_s)
    }

    fn execute(&mut self) -> Result<()> {
        while let Some(t) = self.q.peek_time() {
            if t > self.sc.duration_s {
                break;
            }
            let ev = self.q.pop().expect("peeked");
            let now = ev.time;
            match ev.kind {
                Ev::Arrival(pkt) => {
                    self.qdisc.enqueue(pkt, now);
                    if self.in_service.is_none() {
                        self.start_service(now)?;
                    }
                }
                Ev::ServiceDone => {
                    let pkt = self.in_service.take().expect("packet in service");
                    self.q.schedule(now + self.sc.network.wan_delay_s, Ev::Deliver(pkt))?;
                    self.start_service(now)?;
                }
                Ev::Deliver(pkt) => self.deliver(pkt, now)?,
                Ev::Ack { flow, ack, echo } => self.on_ack(flow, ack, echo, now)?,
                Ev::AppTimer(i) => self.app_timer(i, now)?,
                Ev::FlowStart(i) => self.flow_start(i, now)?,
                Ev::Release(flow) => self.release(flow, now)?,
                Ev::Rto(flow) => self.rto(flow, now)?,
                Ev::Tick => {
                    let start = self.tick_time(self.next_tick - 1);
                    let width = now - start;
                    for c in 0..2 {
                        let kbps = if width > 0.0 { self.bin_bytes[c] as f64 / width / 1000.0 } else { 0.0 };
                        self.series[c].push(kbps);
                    }
                    self.bin_bytes = [0; 2];
                    if self.next_tick < self.ticks {
                        self.next_tick += 1;
                        self.q.schedule(self.tick_time(self.next_tick), Ev::Tick)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn start_service(&mut self, now: f64) -> Result<()> {
        if let Some(pkt) = self.qdisc.dequeue(now) {
            let size = u64::from(pkt.size);
            self.bin_bytes[pkt.class.index()] += size;
            if let Some(app) = self.flows[pkt.flow_id as usize].app {
                self.served_by_app[app] += size;
            }
            self.q.schedule(now + size as f64 / self.rate, Ev::ServiceDone)?;
            self.in_service = Some(pkt);
        }
        Ok(())
    }

    fn emit(&mut self, pkt: Packet, now: f64) -> Result<()> {
        self.generated_packets += 1;
        self.q.schedule(now + self.sc.network.lan_delay_s, Ev::Arrival(pkt))?;
        Ok(())
    }

    fn deliver(&mut self, pkt: Packet, now: f64) -> Result<()> {
        self.received_packets += 1;
        self.received_bytes += u64::from(pkt.size);
        self.delay_sum += now - pkt.created;
        let w = (now.floor() as usize).min(self.window_bytes.len() - 1);
        self.window_bytes[w] += u64::from(pkt.size);
        let flow = &mut self.flows[pkt.flow_id as usize];
        match &mut flow.kind {
            FlowKind::Datagram { .. } => flow.delivered_bytes += u64::from(pkt.size),
            FlowKind::Reliable(r) => {
                let before = r.receiver.expected();
                let (ack, _) = r.receiver.on_segment(pkt.seq);
                if ack > before {
                    let lo = if before == 0 { 0 } else { r.sender.end_byte(before - 1) };
                    flow.delivered_bytes += r.sender.end_byte(ack - 1) - lo;
                }
                let back = self.sc.network.wan_delay_s + self.sc.network.lan_delay_s;
                self.q.schedule(now + back, Ev::Ack { flow: pkt.flow_id, ack, echo: pkt.created })?;
            }
        }
        Ok(())
    }

    fn send_segment(&mut self, id: FlowId, k: u64, now: f64) -> Result<()> {
        let flow = &mut self.flows[id as usize];
        let FlowKind::Reliable(r) = &mut flow.kind else {
            return Err(Error::Logic("segment sent on a datagram flow".into()));
        };
        let size = r.sender.payload(k) + HEADER;
        let pkt = Packet::new(id, flow.class, size, k, now);
        if r.rto_deadline.is_none() {
            let deadline = now + r.sender.tcp.rto;
            r.rto_deadline = Some(deadline);
            if !r.rto_pending {
                r.rto_pending = true;
                self.q.schedule(deadline, Ev::Rto(id))?;
            }
        }
        self.emit(pkt, now)
    }

    fn try_send(&mut self, id: FlowId, now: f64) -> Result<()> {
        let range = match &mut self.flows[id as usize].kind {
            FlowKind::Reliable(r) => r.sender.take_sendable(),
            FlowKind::Datagram { .. } => return Ok(()),
        };
        for k in range {
            self.send_segment(id, k, now)?;
        }
        Ok(())
    }

    fn on_ack(&mut self, id: FlowId, ack: u64, echo: f64, now: f64) -> Result<()> {
        let flow = &mut self.flows[id as usize];
        let FlowKind::Reliable(r) = &mut flow.kind else {
            return Ok(());
        };
        if flow.completed_at.is_some() {
            return Ok(());
        }
        let out = r.sender.on_ack(ack, Some(now - echo));
        if out.newly_acked > 0 {
            r.rto_deadline = (r.sender.outstanding() > 0).then_some(now + r.sender.tcp.rto);
        }
        if out.completed {
            flow.completed_at = Some(now);
            r.rto_deadline = None;
            return Ok(());
        }
        if let Some(k) = out.retransmit {
            // the retransmission queues behind a full buffer, so time it afresh
            r.rto_deadline = Some(now + r.sender.tcp.rto);
            self.send_segment(id, k, now)?;
        }
        self.try_send(id, now)
    }

    fn rto(&mut self, id: FlowId, now: f64) -> Result<()> {
        let flow = &mut self.flows[id as usize];
        let FlowKind::Reliable(r) = &mut flow.kind else {
            return Ok(());
        };
        r.rto_pending = false;
        let Some(deadline) = r.rto_deadline else {
            return Ok(());
        };
        if flow.completed_at.is_some() {
            return Ok(());
        }
        if now < deadline {
            r.rto_pending = true;
            self.q.schedule(deadline, Ev::Rto(id))?;
            return Ok(());
        }
        r.sender.on_timeout();
        r.rto_deadline = None;
        self.try_send(id, now)
    }

    fn app_timer(&mut self, i: usize, now: f64) -> Result<()> {
        let (rng, id) = &mut self.apps[i];
        let id = *id;
        let emission = app_emit(&self.sc.home_apps[i], now, rng);
        for size in emission.packets {
            let FlowKind::Datagram { next_seq } = &mut self.flows[id as usize].kind else {
                return Err(Error::Logic("datagram emitted on a reliable flow".into()));
            };
            let pkt = Packet::new(id, Class::Home, size, *next_seq, now);
            *next_seq += 1;
            self.emit(pkt, now)?;
        }
        if let Some(next) = emission.next {
            if next <= self.sc.duration_s {
                self.q.schedule(next, Ev::AppTimer(i))?;
            }
        }
        Ok(())
    }

    fn flow_start(&mut self, i: usize, now: f64) -> Result<()> {
        let src = &mut self.guests[i];
        let spec = src.pending.take().expect("pending guest flow");
        let next = traffic::next_guest_flow(&src.profile, &mut src.rng, spec.start);
        if next.start <= self.sc.duration_s {
            self.q.schedule(next.start, Ev::FlowStart(i))?;
        }
        src.pending = Some(next);

        let id = self.flows.len() as FlowId;
        self.flows.push(Flow {
            class: Class::Guest,
            app: None,
            profile_id: spec.profile_id,
            start: now,
            size: Some(spec.size),
            duration: Some(spec.duration),
            completed_at: None,
            delivered_bytes: 0,
            kind: FlowKind::Reliable(Box::new(ReliableFlow {
                sender: ReliableSender::new(Some(spec.size), self.sc.guest.rwnd_bytes),
                receiver: Receiver::default(),
                rto_deadline: None,
                rto_pending: false,
            })),
        });
        self.release(id, now)
    }

    /// Paces a guest flow at size/duration: segment `k` becomes available
    /// once the application has produced its last byte.
    fn release(&mut self, id: FlowId, now: f64) -> Result<()> {
        let flow = &mut self.flows[id as usize];
        let (Some(size), Some(duration)) = (flow.size, flow.duration) else {
            return Ok(());
        };
        let FlowKind::Reliable(r) = &mut flow.kind else {
            return Ok(());
        };
        let size = size.max(1) as f64;
        let start = flow.start;
        let at = |s: &ReliableSender, k: u64| start + duration * s.end_byte(k) as f64 / size;
        let mut n = r.sender.released();
        while n < r.sender.segments() && at(&r.sender, n) <= now {
            n += 1;
        }
        r.sender.release(n);
        if n < r.sender.segments() {
            let t = at(&r.sender, n);
            self.q.schedule(t, Ev::Release(id))?;
        }
        self.try_send(id, now)
    }

    fn report(mut self, gamma: Option<f64>) -> RunReport {
        let sched = self.qdisc.take_stats();
        let d = self.sc.duration_s;
        let mut max_window: f64 = 0.0;
        for (w, &bytes) in self.window_bytes.iter().enumerate() {
            let width = (d - w as f64).min(1.0);
            if width > 0.0 {
                max_window = max_window.max(bytes as f64 / width / 1000.0);
            }
        }
        let validation = ValidationMetrics {
            generated_packets: self.generated_packets,
            received_packets: self.received_packets,
            avg_throughput_kbps: self.received_bytes as f64 / d / 1000.0,
            max_throughput_kbps: max_window,
            mean_delay_ms: if self.received_packets > 0 {
                self.delay_sum / self.received_packets as f64 * 1e3
            } else {
                0.0
            },
        };
        let home_served_by_app: BTreeMap<String, u64> = self
            .sc
            .home_apps
            .iter()
            .enumerate()
            .map(|(i, app)| (format!("{i}:{}", app.kind()), self.served_by_app[i]))
            .collect();
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let (timeouts, fast_retransmits) = match &f.kind {
                    FlowKind::Reliable(r) => (r.sender.timeouts, r.sender.fast_retransmits),
                    FlowKind::Datagram { .. } => (0, 0),
                };
                FlowRecord {
                    flow_id: i as u64,
                    class: f.class,
                    app: f.app.map(|a| self.sc.home_apps[a].kind().to_string()),
                    profile_id: f.profile_id,
                    start: f.start,
                    size: f.size,
                    duration: f.duration,
                    completed_at: f.completed_at,
                    delivered_bytes: f.delivered_bytes,
                    timeouts,
                    fast_retransmits,
                }
            })
            .collect();
        let [home_series_kbps, guest_series_kbps] = std::mem::take(&mut self.series);
        RunReport {
            seed: self.sc.seed,
            duration_s: d,
            policy: self.sc.scheduler.policy,
            ap_profile: self.sc.ap.name.clone(),
            guest_gamma: gamma,
            bin_s: BIN_S,
            home_series_kbps,
            guest_series_kbps,
            home: ClassSummary::from(&sched.home),
            guest: ClassSummary::from(&sched.guest),
            home_served_by_app,
            flows,
            validation,
            sched,
        }
    }
}
