//! Traffic sources: guest-user flow generators with load calibration, the
//! home applications, and the reliable transport they ride on.

pub mod transport;

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{guest_profile_params, DistSpec, Family};
use crate::engine::RngStream;
use crate::schedulers::Class;
use crate::{Error, Result};

pub use transport::{AckOutcome, LossKind, Receiver, ReliableSender, TransportMode, TransportState};

/// Shortest flow duration a generator emits, seconds.
pub const MIN_FLOW_DURATION: f64 = 1e-3;

/// A guest-user profile: Weibull inter-arrival times (s), generalized
/// Pareto flow sizes (bytes) and lognormal flow durations (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuestProfile {
    pub profile_id: u8,
    pub inter_arrival: DistSpec,
    pub size: DistSpec,
    pub duration: DistSpec,
}

impl GuestProfile {
    /// One of the four measured profiles, `1..=4`.
    pub fn measured(id: u8) -> Result<Self> {
        let p = guest_profile_params(id)?;
        Ok(Self { profile_id: p.id, inter_arrival: p.inter_arrival, size: p.size, duration: p.duration })
    }

    pub fn validate(&self) -> Result<()> {
        let expected = [
            ("inter_arrival", &self.inter_arrival, Family::Weibull),
            ("size", &self.size, Family::GeneralizedPareto),
            ("duration", &self.duration, Family::Lognormal),
        ];
        for (what, spec, family) in expected {
            spec.validate()?;
            if spec.family() != family {
                return Err(Error::InvalidParams(format!("guest {what} must be {family}, got {}", spec.family())));
            }
        }
        Ok(())
    }

    /// The same profile with arrivals `gamma` times as frequent.
    pub fn scaled(&self, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParams(format!("arrival scale must be positive, got {gamma}")));
        }
        let inter_arrival = match self.inter_arrival {
            DistSpec::Weibull { shape, scale } => DistSpec::weibull(shape, scale / gamma)?,
            other => {
                return Err(Error::InvalidParams(format!("inter-arrival must be Weibull, got {}", other.family())))
            }
        };
        Ok(Self { inter_arrival, ..*self })
    }

    /// Long-run offered payload rate in bytes/s, `E[size] / E[gap]`.
    pub fn mean_offered_rate(&self) -> Option<f64> {
        Some(self.size.mean()? / self.inter_arrival.mean()?)
    }
}

/// One flow to be carried by the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub start: f64,
    pub size: u64,
    pub duration: f64,
    pub class: Class,
    pub profile_id: Option<u8>,
}

/// Builds a guest flow from three given uniforms (gap, size, duration).
pub fn guest_flow_from_uniforms(profile: &GuestProfile, now: f64, u: [f64; 3]) -> Result<FlowSpec> {
    let gap = profile.inter_arrival.quantile(u[0])?;
    let size = profile.size.quantile(u[1])?.round().max(1.0);
    let duration = profile.duration.quantile(u[2])?.max(MIN_FLOW_DURATION);
    Ok(FlowSpec {
        start: now + gap,
        size: size as u64,
        duration,
        class: Class::Guest,
        profile_id: Some(profile.profile_id),
    })
}

/// Draws the next guest flow after `now`.
pub fn next_guest_flow<R: Rng + ?Sized>(profile: &GuestProfile, rng: &mut R, now: f64) -> FlowSpec {
    let u = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
    guest_flow_from_uniforms(profile, now, u).expect("validated profile and uniforms in [0, 1)")
}

/// Random stream label of the `index`-th guest source.
pub fn guest_stream_label(index: usize, profile_id: u8) -> String {
    format!("guest-{index}-p{profile_id}")
}

/// Flows of all `profiles` running in parallel that start in `[0, horizon)`,
/// ordered by start time.
pub fn generate_guest_flows(profiles: &[GuestProfile], seed: u64, horizon: f64) -> Vec<FlowSpec> {
    let mut flows = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        let mut rng = RngStream::new(seed, guest_stream_label(i, p.profile_id));
        let mut now = 0.0;
        loop {
            let f = next_guest_flow(p, &mut rng, now);
            if f.start >= horizon {
                break;
            }
            now = f.start;
            flows.push(f);
        }
    }
    flows.sort_by(|a, b| a.start.total_cmp(&b.start));
    flows
}

/// Mean offered guest payload over `[0, horizon)` in KBps, counting each
/// flow's full size at its start.
pub fn offered_load_kbps(profiles: &[GuestProfile], gamma: f64, seed: u64, horizon: f64) -> Result<f64> {
    let scaled = profiles.iter().map(|p| p.scaled(gamma)).collect::<Result<Vec<_>>>()?;
    let mut bytes = 0u64;
    for (i, p) in scaled.iter().enumerate() {
        let mut rng = RngStream::new(seed, guest_stream_label(i, p.profile_id));
        let mut now = 0.0;
        loop {
            let f = next_guest_flow(p, &mut rng, now);
            if f.start >= horizon {
                break;
            }
            now = f.start;
            bytes += f.size;
        }
    }
    Ok(bytes as f64 / horizon / 1000.0)
}

/// Outcome of load calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Arrival-rate multiplier.
    pub gamma: f64,
    /// Offered load of the calibrated dry run, KBps.
    pub offered_kbps: f64,
    /// Offered load of a dry run with an independent seed, KBps.
    pub verify_kbps: f64,
    pub iterations: u32,
}

const GAMMA_LOG2_RANGE: f64 = 10.0;
const MAX_CALIBRATION_STEPS: u32 = 30;

/// Finds the arrival-rate multiplier γ that puts the mean offered load of
/// a dry run over `[0, horizon)` inside `band` (KBps). γ = 1 is kept if it
/// already qualifies; otherwise log γ is bisected towards the band middle.
pub fn calibrate_load(profiles: &[GuestProfile], band: (f64, f64), seed: u64, horizon: f64) -> Result<Calibration> {
    let (lo, hi) = band;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Calibration(format!("load band [{lo}, {hi}] KBps is empty or not positive")));
    }
    if profiles.is_empty() {
        return Err(Error::Calibration("no guest profiles to calibrate".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Calibration(format!("dry-run horizon must be positive, got {horizon}")));
    }
    let load = |log2g: f64| offered_load_kbps(profiles, log2g.exp2(), seed, horizon);
    let in_band = |l: f64| l >= lo && l <= hi;
    let finish = |gamma: f64, offered: f64, iterations: u32| -> Result<Calibration> {
        let verify_kbps = offered_load_kbps(profiles, gamma, seed ^ 0x9e37_79b9_7f4a_7c15, horizon)?;
        log::debug!("calibrated gamma {gamma:.4}: {offered:.3} KBps, fresh seed {verify_kbps:.3} KBps");
        Ok(Calibration { gamma, offered_kbps: offered, verify_kbps, iterations })
    };

    let natural = load(0.0)?;
    if in_band(natural) {
        return finish(1.0, natural, 0);
    }
    let unreachable = || {
        Error::Calibration(format!(
            "band [{lo}, {hi}] KBps not reachable with arrival scaling in [2^-10, 2^10] (natural load {natural:.3} KBps)"
        ))
    };
    if load(-GAMMA_LOG2_RANGE)? > hi || load(GAMMA_LOG2_RANGE)? < lo {
        return Err(unreachable());
    }
    let mid = 0.5 * (lo + hi);
    let quarter = 0.25 * (hi - lo);
    let (mut a, mut b) = (-GAMMA_LOG2_RANGE, GAMMA_LOG2_RANGE);
    let mut best: Option<(f64, f64)> = None;
    for step in 1..=MAX_CALIBRATION_STEPS {
        let m = 0.5 * (a + b);
        let l = load(m)?;
        if in_band(l) && best.is_none_or(|(_, bl)| (l - mid).abs() < (bl - mid).abs()) {
            best = Some((m, l));
        }
        if (l - mid).abs() <= quarter {
            return finish(m.exp2(), l, step);
        }
        if l < mid {
            a = m;
        } else {
            b = m;
        }
    }
    match best {
        Some((m, l)) => finish(m.exp2(), l, MAX_CALIBRATION_STEPS),
        None => Err(unreachable()),
    }
}

/// One of the four home applications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HomeAppConfig {
    /// Infinitely backlogged reliable upload.
    FtpElephant { rwnd_bytes: u64 },
    /// Constant-bit-rate datagrams.
    CbrVideo { packet_bytes: u32, interval_s: f64 },
    /// Small periodic datagrams, sent during the first `duty_cycle` of every
    /// `period_s`.
    GameOnoff { packet_bytes: u32, interval_s: f64, duty_cycle: f64, period_s: f64 },
    /// One request datagram per `gap`-distributed interval.
    WebBrowsing { request_bytes: u32, gap: DistSpec },
}

impl HomeAppConfig {
    pub fn ftp_elephant() -> Self {
        HomeAppConfig::FtpElephant { rwnd_bytes: 1_000_000 }
    }

    /// 500 Kbps as 1250 B every 20 ms.
    pub fn cbr_video() -> Self {
        HomeAppConfig::CbrVideo { packet_bytes: 1250, interval_s: 0.020 }
    }

    /// 12.8 Kbps as 80 B every 50 ms, always on.
    pub fn game_onoff() -> Self {
        HomeAppConfig::GameOnoff { packet_bytes: 80, interval_s: 0.050, duty_cycle: 1.0, period_s: 1.0 }
    }

    /// 350 B requests with lognormal gaps of median 4 s.
    pub fn web_browsing() -> Self {
        HomeAppConfig::WebBrowsing { request_bytes: 350, gap: DistSpec::Lognormal { mu: 4f64.ln(), sigma: 1.0 } }
    }

    /// Two elephants and two mice.
    pub fn default_set() -> Vec<Self> {
        vec![Self::ftp_elephant(), Self::cbr_video(), Self::game_onoff(), Self::web_browsing()]
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HomeAppConfig::FtpElephant { .. } => "ftp-elephant",
            HomeAppConfig::CbrVideo { .. } => "cbr-video",
            HomeAppConfig::GameOnoff { .. } => "game-onoff",
            HomeAppConfig::WebBrowsing { .. } => "web-browsing",
        }
    }

    pub fn is_reliable(&self) -> bool {
        matches!(self, HomeAppConfig::FtpElephant { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{}: {m}", self.kind())));
        match *self {
            HomeAppConfig::FtpElephant { rwnd_bytes } => {
                if rwnd_bytes < u64::from(transport::MSS) {
                    return bad(format!("rwnd_bytes must be at least one segment, got {rwnd_bytes}"));
                }
            }
            HomeAppConfig::CbrVideo { packet_bytes, interval_s } => {
                if packet_bytes == 0 || !(interval_s > 0.0) {
                    return bad("packet size and interval must be positive".into());
                }
            }
            HomeAppConfig::GameOnoff { packet_bytes, interval_s, duty_cycle, period_s } => {
                if packet_bytes == 0 || !(interval_s > 0.0) || !(period_s > 0.0) {
                    return bad("packet size, interval and period must be positive".into());
                }
                if !(duty_cycle > 0.0 && duty_cycle <= 1.0) {
                    return bad(format!("duty_cycle must be in (0, 1], got {duty_cycle}"));
                }
            }
            HomeAppConfig::WebBrowsing { request_bytes, gap } => {
                if request_bytes == 0 {
                    return bad("request size must be positive".into());
                }
                gap.validate()?;
            }
        }
        Ok(())
    }
}

/// Datagrams an application hands to the network at one timer, and when
/// its timer fires next.
#[derive(Debug, Clone, PartialEq)]
pub struct AppEmission {
    pub packets: Vec<u32>,
    pub next: Option<f64>,
}

/// Fires the timer of a datagram application at `now`. The reliable FTP
/// upload is driven by its transport and never emits here.
pub fn app_emit<R: Rng + ?Sized>(app: &HomeAppConfig, now: f64, rng: &mut R) -> AppEmission {
    match *app {
        HomeAppConfig::FtpElephant { .. } => AppEmission { packets: vec![], next: None },
        HomeAppConfig::CbrVideo { packet_bytes, interval_s } => {
            AppEmission { packets: vec![packet_bytes], next: Some(now + interval_s) }
        }
        HomeAppConfig::GameOnoff { packet_bytes, interval_s, duty_cycle, period_s } => {
            let phase = now.rem_euclid(period_s);
            // tolerance absorbs the drift of accumulated timer increments
            let on = duty_cycle >= 1.0 || phase < duty_cycle * period_s - 1e-9;
            AppEmission { packets: if on { vec![packet_bytes] } else { vec![] }, next: Some(now + interval_s) }
        }
        HomeAppConfig::WebBrowsing { request_bytes, gap } => {
            AppEmission { packets: vec![request_bytes], next: Some(now + gap.sample(rng)) }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    start_s: f64,
    bytes: u64,
    duration_s: f64,
    #[serde(default)]
    class: Option<Class>,
    #[serde(default)]
    profile_id: Option<u8>,
}

/// Writes flows as CSV with columns `start_s,bytes,duration_s,class,profile_id`.
pub fn write_flow_trace<W: Write>(flows: &[FlowSpec], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for f in flows {
        out.serialize(TraceRow {
            start_s: f.start,
            bytes: f.size,
            duration_s: f.duration,
            class: Some(f.class),
            profile_id: f.profile_id,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a flow trace; `class` and `profile_id` columns are optional and
/// a missing class means guest.
pub fn read_flow_trace<R: Read>(r: R) -> Result<Vec<FlowSpec>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut flows = Vec::new();
    for row in rdr.deserialize::<TraceRow>() {
        let row = row?;
        if !(row.start_s.is_finite() && row.duration_s.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite value in trace row {}", flows.len() + 1)));
        }
        flows.push(FlowSpec {
            start: row.start_s,
            size: row.bytes,
            duration: row.duration_s,
            class: row.class.unwrap_or(Class::Guest),
            profile_id: row.profile_id,
        });
    }
    Ok(flows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ks_statistic;

    fn profile(id: u8) -> GuestProfile {
        GuestProfile::measured(id).unwrap()
    }

    #[test]
    fn forced_draws_profile_1() {
        let u1 = 1.0 - (-1.0f64).exp();
        let f = guest_flow_from_uniforms(&profile(1), 10.0, [u1, 0.0, 0.5]).unwrap();
        assert!((f.start - 10.4).abs() < 1e-12);
        assert_eq!(f.size, 353);
        assert!((f.duration - 1.03f64.exp()).abs() < 1e-12);
        assert!((f.duration - 2.801).abs() < 1e-3);
        assert_eq!(f.class, Class::Guest);
        assert_eq!(f.profile_id, Some(1));
    }

    #[test]
    fn profile_4_minimum_size() {
        let f = guest_flow_from_uniforms(&profile(4), 0.0, [0.3, 0.0, 0.3]).unwrap();
        assert_eq!(f.size, 42);
    }

    #[test]
    fn scaling_divides_the_weibull_scale() {
        let p = profile(1).scaled(4.0).unwrap();
        assert_eq!(p.inter_arrival, DistSpec::Weibull { shape: 0.27, scale: 0.1 });
        assert!(profile(1).scaled(0.0).is_err());
    }

    #[test]
    fn generated_flows_follow_their_distributions() {
        for id in 1..=4 {
            let p = profile(id);
            let mut rng = RngStream::new(3, "ks");
            let mut now = 0.0;
            let (mut gaps, mut sizes, mut durs) = (vec![], vec![], vec![]);
            for _ in 0..10_000 {
                let f = next_guest_flow(&p, &mut rng, now);
                gaps.push(f.start - now);
                sizes.push(f.size as f64);
                durs.push(f.duration);
                now = f.start;
            }
            assert!(ks_statistic(&gaps, &p.inter_arrival) < 0.02);
            // integer rounding of sizes moves the ECDF by well under 1%
            assert!(ks_statistic(&sizes, &p.size) < 0.02);
            assert!(ks_statistic(&durs, &p.duration) < 0.02);
        }
    }

    #[test]
    fn mice_dominate() {
        for id in 1..=4 {
            let p = profile(id);
            let median = p.size.quantile(0.5).unwrap();
            assert!(median < 5000.0, "profile {id} median {median}");
            let mut rng = RngStream::new(9, "mice");
            let mut sizes: Vec<u64> = (0..10_001).map(|_| next_guest_flow(&p, &mut rng, 0.0).size).collect();
            sizes.sort_unstable();
            let m = sizes[5000] as f64;
            assert!(m < 5000.0);
            assert!((m - median).abs() / median < 0.05, "profile {id}: {m} vs {median}");
        }
    }

    #[test]
    fn offered_rates_match_the_analytic_ratio() {
        // E[size]/E[gap] per profile, checked on 10^4 flows within 50%
        let mut combined = 0.0;
        for id in 1..=4 {
            let p = profile(id);
            let analytic = p.mean_offered_rate().unwrap();
            combined += analytic;
            let mut rng = RngStream::new(17, "rate");
            let mut now = 0.0;
            let mut bytes = 0u64;
            for _ in 0..10_000 {
                let f = next_guest_flow(&p, &mut rng, now);
                bytes += f.size;
                now = f.start;
            }
            let measured = bytes as f64 / now;
            assert!((measured / analytic - 1.0).abs() < 0.5, "profile {id}: {measured} vs {analytic}");
        }
        // the four profiles together sit in the 1-5 KBps range
        assert!((1000.0..=5000.0).contains(&combined), "{combined}");
    }

    #[test]
    fn calibration_noop_when_in_band() {
        let ps: Vec<_> = (1..=4).map(profile).collect();
        let natural = offered_load_kbps(&ps, 1.0, 42, 600.0).unwrap();
        let c = calibrate_load(&ps, (natural * 0.9, natural * 1.1), 42, 600.0).unwrap();
        assert_eq!(c.gamma, 1.0);
        assert_eq!(c.iterations, 0);
        assert_eq!(c.offered_kbps, natural);
    }

    #[test]
    fn calibration_doubles_for_a_doubled_band() {
        let ps = vec![profile(3)];
        let horizon = 20_000.0;
        let natural = offered_load_kbps(&ps, 1.0, 42, horizon).unwrap();
        let c = calibrate_load(&ps, (1.9 * natural, 2.1 * natural), 42, horizon).unwrap();
        assert!((c.gamma - 2.0).abs() < 0.2, "{c:?}");
        assert!(c.offered_kbps >= 1.9 * natural && c.offered_kbps <= 2.1 * natural);
        assert!(c.iterations <= 30);
    }

    #[test]
    fn calibration_errors() {
        let ps = vec![profile(1)];
        assert!(matches!(calibrate_load(&ps, (0.0, 0.0), 1, 600.0), Err(Error::Calibration(_))));
        assert!(matches!(calibrate_load(&ps, (3.0, 1.0), 1, 600.0), Err(Error::Calibration(_))));
        assert!(matches!(calibrate_load(&ps, (1e9, 2e9), 1, 600.0), Err(Error::Calibration(_))));
    }

    #[test]
    fn load_is_monotone_in_gamma() {
        let ps: Vec<_> = (1..=4).map(profile).collect();
        let mut last = 0.0;
        for k in -4..=4 {
            let l = offered_load_kbps(&ps, 2f64.powi(k), 5, 600.0).unwrap();
            assert!(l >= last);
            last = l;
        }
    }

    #[test]
    fn app_emissions() {
        let mut rng = RngStream::new(1, "app");
        let mut bytes = 0;
        let mut t = 0.0;
        let cbr = HomeAppConfig::cbr_video();
        let mut n = 0;
        while t < 1.0 - 1e-9 {
            let e = app_emit(&cbr, t, &mut rng);
            bytes += e.packets.iter().sum::<u32>();
            n += e.packets.len();
            t = e.next.unwrap();
        }
        assert_eq!((n, bytes), (50, 62_500));

        let game = HomeAppConfig::game_onoff();
        let (mut t, mut bytes, mut n) = (0.0, 0, 0);
        while t < 1.0 - 1e-9 {
            let e = app_emit(&game, t, &mut rng);
            bytes += e.packets.iter().sum::<u32>();
            n += e.packets.len();
            t = e.next.unwrap();
        }
        assert_eq!((n, bytes), (20, 1600));
        assert_eq!(bytes as f64 * 8.0, 12_800.0);

        let web = HomeAppConfig::web_browsing();
        let mut t = 0.0;
        for _ in 0..100 {
            let e = app_emit(&web, t, &mut rng);
            assert_eq!(e.packets, vec![350]);
            assert!(e.next.unwrap() > t);
            t = e.next.unwrap();
        }

        assert_eq!(app_emit(&HomeAppConfig::ftp_elephant(), 0.0, &mut rng).next, None);
    }

    #[test]
    fn half_duty_cycle() {
        let game = HomeAppConfig::GameOnoff { packet_bytes: 80, interval_s: 0.05, duty_cycle: 0.5, period_s: 1.0 };
        let mut rng = RngStream::new(1, "g");
        let mut t = 0.0;
        let mut n = 0;
        for _ in 0..40 {
            let e = app_emit(&game, t, &mut rng);
            n += e.packets.len();
            t = e.next.unwrap();
        }
        assert_eq!(n, 20);
    }

    #[test]
    fn trace_round_trip() {
        let flows = generate_guest_flows(&[profile(2), profile(3)], 4, 300.0);
        assert!(flows.windows(2).all(|w| w[0].start <= w[1].start));
        let mut buf = Vec::new();
        write_flow_trace(&flows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("start_s,bytes,duration_s,class,profile_id\n"));
        assert_eq!(read_flow_trace(buf.as_slice()).unwrap(), flows);
        let minimal = "start_s,bytes,duration_s\n0,100,1.5\n1,200,2\n";
        let back = read_flow_trace(minimal.as_bytes()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].class, Class::Guest);
        assert_eq!(back[1].profile_id, None);
    }

    #[test]
    fn app_validation() {
        for app in HomeAppConfig::default_set() {
            app.validate().unwrap();
        }
        let bad = HomeAppConfig::GameOnoff { packet_bytes: 80, interval_s: 0.05, duty_cycle: 0.0, period_s: 1.0 };
        assert!(bad.validate().is_err());
        assert!(HomeAppConfig::FtpElephant { rwnd_bytes: 10 }.validate().is_err());
    }
}
