//! TOML scenario files.
//!
//! ```toml
//! [access_point]
//! preset = "AP8"
//!
//! [scheduler]
//! policy = "HPSS"
//!
//! [guest_traffic]
//! load_band_kBps = [1, 3]
//! ```
//!
//! Every section is optional except that a preset (or all four capacity and
//! queue fields) and a policy must be given. Omitted keys take the defaults of
//! [`Scenario::new`].

use std::path::Path;

use serde::Deserialize;

use crate::apmodel::{preset, AccessPointProfile};
use crate::engine::{GuestLoad, NetworkConfig, Scenario};
use crate::schedulers::{Policy, SchedulerConfig};
use crate::traffic::{GuestProfile, HomeAppConfig};
use crate::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    access_point: Option<ApSection>,
    scheduler: Option<SchedulerSection>,
    home_traffic: Option<HomeSection>,
    guest_traffic: Option<GuestSection>,
    run: Option<RunSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApSection {
    preset: Option<String>,
    name: Option<String>,
    capacity_dw: Option<f64>,
    capacity_up: Option<f64>,
    queue_dw: Option<f64>,
    queue_up: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchedulerSection {
    policy: Option<String>,
    queue_cap: Option<u64>,
    target_delay_ms: Option<f64>,
    red_w_q: Option<f64>,
    red_max_p: Option<f64>,
    codel_interval_ms: Option<f64>,
    upnq_threshold: Option<f64>,
    hpss_target_impact_ms: Option<f64>,
    hpss_capacity_threshold_mbps: Option<f64>,
    hpss_share_pct_per_mbps: Option<f64>,
    hpss_window_s: Option<f64>,
    cbq_home_weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HomeSection {
    apps: Option<Vec<AppEntry>>,
}

/// A bare kind name takes that application's defaults.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AppEntry {
    Kind(String),
    Full(HomeAppConfig),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GuestSection {
    #[serde(rename = "load_band_kBps")]
    load_band_kbps: Option<[f64; 2]>,
    gamma: Option<f64>,
    profiles: Option<Vec<ProfileEntry>>,
    rwnd_bytes: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ProfileEntry {
    Id(u8),
    Custom(GuestProfile),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    duration_s: Option<f64>,
    seed: Option<u64>,
    lan_delay_s: Option<f64>,
    wan_delay_s: Option<f64>,
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

/// Parses and validates scenario text. Errors carry the 1-based line of the
/// offending key where one can be identified.
pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| line_at(text, s.start));
        Error::Scenario { line, message: e.message().trim().to_string() }
    })?;
    let at = |section: &str, err: Error| locate(text, section, err);

    let ap_sec = file.access_point.unwrap_or_default();
    let ap = build_ap(&ap_sec).map_err(|e| at("access_point", e))?;
    ap.validate().map_err(|e| at("access_point", e))?;

    let sch = file.scheduler.unwrap_or_default();
    let policy: Policy = match &sch.policy {
        Some(p) => p.parse().map_err(|e| at("scheduler", e))?,
        None => return Err(at("scheduler", Error::Config("policy is required".into()))),
    };
    let mut scenario = Scenario::new(ap, policy);
    apply_scheduler(&mut scenario.scheduler, &sch);
    scenario.scheduler.validate().map_err(|e| at("scheduler", e))?;

    if let Some(apps) = file.home_traffic.and_then(|h| h.apps) {
        scenario.home_apps = apps
            .into_iter()
            .map(|a| match a {
                AppEntry::Full(app) => Ok(app),
                AppEntry::Kind(kind) => default_app(&kind),
            })
            .collect::<Result<_>>()
            .map_err(|e| at("home_traffic", e))?;
    }
    for app in &scenario.home_apps {
        app.validate().map_err(|e| at("home_traffic", e))?;
    }

    let guest = file.guest_traffic.unwrap_or_default();
    scenario.guest.load = guest_load(&guest).map_err(|e| at("guest_traffic", e))?;
    if let Some(profiles) = guest.profiles {
        scenario.guest.profiles = profiles
            .into_iter()
            .map(|p| match p {
                ProfileEntry::Id(id) => GuestProfile::measured(id),
                ProfileEntry::Custom(p) => Ok(p),
            })
            .collect::<Result<_>>()
            .map_err(|e| at("guest_traffic", e))?;
    }
    if let Some(r) = guest.rwnd_bytes {
        scenario.guest.rwnd_bytes = r;
    }

    let run = file.run.unwrap_or_default();
    if let Some(d) = run.duration_s {
        scenario.duration_s = d;
    }
    if let Some(s) = run.seed {
        scenario.seed = s;
    }
    let defaults = NetworkConfig::default();
    scenario.network = NetworkConfig {
        lan_delay_s: run.lan_delay_s.unwrap_or(defaults.lan_delay_s),
        wan_delay_s: run.wan_delay_s.unwrap_or(defaults.wan_delay_s),
    };

    scenario.validate().map_err(|e| at("", e))?;
    Ok(scenario)
}

fn build_ap(sec: &ApSection) -> Result<AccessPointProfile> {
    let mut ap = match &sec.preset {
        Some(name) => preset(name)?,
        None => {
            let (Some(capacity_dw), Some(capacity_up), Some(queue_dw), Some(queue_up)) =
                (sec.capacity_dw, sec.capacity_up, sec.queue_dw, sec.queue_up)
            else {
                return Err(Error::Config(
                    "access_point needs a preset or all of capacity_dw, capacity_up, queue_dw, queue_up".into(),
                ));
            };
            AccessPointProfile {
                name: sec.name.clone().unwrap_or_else(|| "custom".into()),
                capacity_dw,
                capacity_up,
                queue_dw,
                queue_up,
            }
        }
    };
    if let Some(n) = &sec.name {
        ap.name = n.clone();
    }
    if let Some(v) = sec.capacity_dw {
        ap.capacity_dw = v;
    }
    if let Some(v) = sec.capacity_up {
        ap.capacity_up = v;
    }
    if let Some(v) = sec.queue_dw {
        ap.queue_dw = v;
    }
    if let Some(v) = sec.queue_up {
        ap.queue_up = v;
    }
    Ok(ap)
}

fn apply_scheduler(cfg: &mut SchedulerConfig, sec: &SchedulerSection) {
    fn set<T: Copy>(dst: &mut T, v: Option<T>) {
        if let Some(v) = v {
            *dst = v;
        }
    }
    set(&mut cfg.queue_cap, sec.queue_cap);
    set(&mut cfg.target_delay_ms, sec.target_delay_ms);
    set(&mut cfg.red_w_q, sec.red_w_q);
    set(&mut cfg.red_max_p, sec.red_max_p);
    set(&mut cfg.codel_interval_ms, sec.codel_interval_ms);
    set(&mut cfg.upnq_threshold, sec.upnq_threshold);
    set(&mut cfg.hpss_target_impact_ms, sec.hpss_target_impact_ms);
    set(&mut cfg.hpss_capacity_threshold_mbps, sec.hpss_capacity_threshold_mbps);
    set(&mut cfg.hpss_share_pct_per_mbps, sec.hpss_share_pct_per_mbps);
    set(&mut cfg.hpss_window_s, sec.hpss_window_s);
    set(&mut cfg.cbq_home_weight, sec.cbq_home_weight);
}

fn default_app(kind: &str) -> Result<HomeAppConfig> {
    HomeAppConfig::default_set().into_iter().find(|a| a.kind() == kind).ok_or_else(|| {
        let kinds: Vec<_> = HomeAppConfig::default_set().iter().map(|a| a.kind()).collect();
        Error::Config(format!("unknown home application {kind:?} (valid: {})", kinds.join(", ")))
    })
}

fn guest_load(sec: &GuestSection) -> Result<GuestLoad> {
    match (sec.load_band_kbps, sec.gamma) {
        (Some(_), Some(_)) => Err(Error::Config("load_band_kBps and gamma are mutually exclusive".into())),
        (Some([lo, hi]), None) if lo == 0.0 && hi == 0.0 => Ok(GuestLoad::Disabled),
        (Some([lo, hi]), None) => Ok(GuestLoad::Band { lo_kbps: lo, hi_kbps: hi }),
        (None, Some(gamma)) => Ok(GuestLoad::Scale { gamma }),
        (None, None) => Ok(GuestLoad::Disabled),
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Attaches a line number to `err`: the line of a key in `section` named in
/// the message, else the section header, else line 1.
fn locate(text: &str, section: &str, err: Error) -> Error {
    if let Error::Scenario { .. } = err {
        return err;
    }
    let message = err.to_string();
    let mut current = String::new();
    let mut header = None;
    let mut key_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[') {
            current = name.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section {
                header.get_or_insert(i + 1);
            }
            continue;
        }
        if !section.is_empty() && current != section {
            continue;
        }
        if let Some((key, _)) = line.split_once('=') {
            let key = key.trim();
            if !key.is_empty() && message.contains(key) && key_line.is_none() {
                key_line = Some(i + 1);
            }
        }
    }
    Error::Scenario { line: key_line.or(header).unwrap_or(1), message }
}
