//! Experiments over scenarios: matched baseline/treatment runs, the full
//! policy × access point × load sweep, the generator validation harness and
//! the trace fitting pipeline.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::apmodel::{preset, AccessPointProfile};
use crate::distributions::{fit, gof, pp_points, DistSpec, Family, GofReport};
use crate::engine::{run, GuestLoad, Scenario};
use crate::metrics::{aggregate, ImpactReport, RunReport, ValidationMetrics};
use crate::schedulers::Policy;
use crate::traffic::{FlowSpec, GuestProfile};
use crate::{Error, Result};

/// The guest load bands of the sweep, KBps.
pub const LOAD_BANDS: [(f64, f64); 4] = [(1.0, 3.0), (6.0, 8.0), (13.0, 15.0), (44.0, 46.0)];

/// The access point presets of the sweep.
pub const SWEEP_PRESETS: [&str; 2] = ["AP1", "AP8"];

/// One baseline/treatment pair.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub baseline: RunReport,
    pub treatment: RunReport,
    pub impact: ImpactReport,
}

/// Runs `scenario` with and without guests under the same seed.
pub fn run_pair(scenario: &Scenario) -> Result<PairOutcome> {
    let baseline = run(&scenario.without_guests())?;
    let treatment = run(scenario)?;
    let impact = ImpactReport::from_runs(&baseline, &treatment)?;
    Ok(PairOutcome { baseline, treatment, impact })
}

/// A row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    /// Run index, or `mean` for the aggregate row.
    pub run_id: String,
    pub policy: String,
    pub ap_profile: String,
    pub load_band: String,
    #[serde(rename = "guest_thr_kBps")]
    pub guest_thr_kbps: f64,
    pub home_thr_impact_pct: f64,
    #[serde(rename = "guest_dropped_kB")]
    pub guest_dropped_kb: f64,
    pub home_qdelay_impact_ms: f64,
}

impl ResultRow {
    fn new(run_id: String, scenario: &Scenario, impact: &ImpactReport) -> Self {
        Self {
            run_id,
            policy: scenario.scheduler.policy.name().to_string(),
            ap_profile: scenario.ap.name.clone(),
            load_band: scenario.guest.load.label(),
            guest_thr_kbps: impact.guest_avg_throughput_kbps,
            home_thr_impact_pct: impact.home_throughput_impact_pct,
            guest_dropped_kb: impact.guest_dropped_kb,
            home_qdelay_impact_ms: impact.home_qdelay_impact_ms,
        }
    }
}

/// Per-run impacts of one scenario plus their aggregate.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub scenario: Scenario,
    pub impacts: Vec<ImpactReport>,
    pub rows: Vec<ResultRow>,
}

fn mean_row(scenario: &Scenario, impacts: &[ImpactReport]) -> Result<ResultRow> {
    let mean = if impacts.len() == 1 { impacts[0] } else { aggregate(impacts)?.mean };
    Ok(ResultRow::new("mean".into(), scenario, &mean))
}

/// Runs `runs` matched pairs with seeds `seed`, `seed + 1`, ... in parallel.
/// Rows come out in run order followed by the `mean` row.
pub fn run_experiment(scenario: &Scenario, runs: usize, seed: u64) -> Result<ExperimentResult> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let impacts = (0..runs)
        .into_par_iter()
        .map(|r| run_pair(&scenario.with_seed(seed.wrapping_add(r as u64))).map(|p| p.impact))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ResultRow> =
        impacts.iter().enumerate().map(|(r, i)| ResultRow::new(r.to_string(), scenario, i)).collect();
    rows.push(mean_row(scenario, &impacts)?);
    Ok(ExperimentResult { scenario: scenario.clone(), impacts, rows })
}

/// The 64 sweep scenarios ordered by policy, preset, then load band.
/// Everything other than these three settings comes from `base`.
pub fn sweep_scenarios(base: &Scenario) -> Result<Vec<Scenario>> {
    let mut out = Vec::with_capacity(64);
    for policy in Policy::ALL {
        for name in SWEEP_PRESETS {
            let ap = preset(name)?;
            for (lo, hi) in LOAD_BANDS {
                out.push(with_setting(base, &ap, policy, GuestLoad::Band { lo_kbps: lo, hi_kbps: hi }));
            }
        }
    }
    Ok(out)
}

fn with_setting(base: &Scenario, ap: &AccessPointProfile, policy: Policy, load: GuestLoad) -> Scenario {
    let mut s = base.clone();
    s.ap = ap.clone();
    s.scheduler.policy = policy;
    s.scheduler.queue_cap = ap.uplink_queue_bytes();
    s.guest.load = load;
    s
}

/// Runs the full sweep. Returns per-run rows of every configuration
/// followed by its `mean` row, in sweep order.
pub fn run_sweep(base: &Scenario, runs: usize, seed: u64) -> Result<Vec<ExperimentResult>> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let scenarios = sweep_scenarios(base)?;
    let jobs: Vec<(usize, usize)> = (0..scenarios.len()).flat_map(|c| (0..runs).map(move |r| (c, r))).collect();
    let impacts = jobs
        .par_iter()
        .map(|&(c, r)| run_pair(&scenarios[c].with_seed(seed.wrapping_add(r as u64))).map(|p| p.impact))
        .collect::<Result<Vec<_>>>()?;
    scenarios
        .into_iter()
        .zip(impacts.chunks(runs))
        .map(|(scenario, chunk)| {
            let mut rows: Vec<ResultRow> =
                chunk.iter().enumerate().map(|(r, i)| ResultRow::new(r.to_string(), &scenario, i)).collect();
            rows.push(mean_row(&scenario, chunk)?);
            Ok(ExperimentResult { scenario, impacts: chunk.to_vec(), rows })
        })
        .collect()
}

/// Writes result rows as CSV with a header.
pub fn write_results_csv<'a, W: Write>(rows: impl IntoIterator<Item = &'a ResultRow>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Length of one validation run, seconds.
pub const VALIDATION_DURATION_S: f64 = 3600.0;

// Offsets the independent-seed runs away from the reference seeds.
const INDEPENDENT_SEED_OFFSET: u64 = 0x5eed_0000_0000;

/// Two-node topology for one profile: the guest source alone behind a
/// tail-drop FIFO with the AP1 uplink's rate and buffer.
pub fn validation_scenario(profile_id: u8, seed: u64) -> Result<Scenario> {
    let profile = GuestProfile::measured(profile_id)?;
    let mut s = Scenario::new(preset("AP1")?, Policy::DropTail);
    s.home_apps.clear();
    s.guest.profiles = vec![profile];
    s.guest.load = GuestLoad::Scale { gamma: 1.0 };
    s.duration_s = VALIDATION_DURATION_S;
    s.seed = seed;
    Ok(s)
}

/// Reference-versus-independent comparison of one profile's generator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationResult {
    pub profile_id: u8,
    pub runs: usize,
    /// Mean of each metric over the reference-seed runs.
    pub reference: [f64; 5],
    /// Mean of each metric over the independent-seed runs.
    pub independent: [f64; 5],
    /// `100 |independent - reference| / reference` per metric.
    pub difference_pct: [f64; 5],
}

/// Runs `runs` reference-seed and `runs` independent-seed one-hour
/// simulations of `profile_id` and compares the means of the five sink
/// metrics. With one run the single-run values are compared.
pub fn validate(profile_id: u8, runs: usize, seed: u64) -> Result<ValidationResult> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    GuestProfile::measured(profile_id)?;
    let seeds: Vec<u64> = (0..runs as u64)
        .flat_map(|r| {
            let s = seed.wrapping_add(r);
            [s, s.wrapping_add(INDEPENDENT_SEED_OFFSET)]
        })
        .collect();
    let metrics = seeds
        .par_iter()
        .map(|&s| run(&validation_scenario(profile_id, s)?).map(|r| r.validation))
        .collect::<Result<Vec<ValidationMetrics>>>()?;
    let mut reference = [0.0; 5];
    let mut independent = [0.0; 5];
    for pair in metrics.chunks(2) {
        for k in 0..5 {
            reference[k] += pair[0].values()[k] / runs as f64;
            independent[k] += pair[1].values()[k] / runs as f64;
        }
    }
    let mut difference_pct = [0.0; 5];
    for k in 0..5 {
        difference_pct[k] = if reference[k] == 0.0 {
            if independent[k] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            100.0 * (independent[k] - reference[k]).abs() / reference[k]
        };
    }
    Ok(ValidationResult { profile_id, runs, reference, independent, difference_pct })
}

/// Writes validation results, one row per profile and metric.
pub fn write_validation_csv<W: Write>(results: &[ValidationResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["profile_id", "runs", "metric", "reference", "independent", "difference_pct"])?;
    for r in results {
        for (k, name) in ValidationMetrics::NAMES.iter().enumerate() {
            out.write_record([
                r.profile_id.to_string(),
                r.runs.to_string(),
                name.to_string(),
                r.reference[k].to_string(),
                r.independent[k].to_string(),
                r.difference_pct[k].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Flow characteristic fitted by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Characteristic {
    InterArrival,
    Size,
    Duration,
}

impl Characteristic {
    pub const ALL: [Characteristic; 3] = [Characteristic::InterArrival, Characteristic::Size, Characteristic::Duration];

    pub fn name(self) -> &'static str {
        match self {
            Characteristic::InterArrival => "inter_arrival",
            Characteristic::Size => "size",
            Characteristic::Duration => "duration",
        }
    }

    /// The family chosen for this characteristic when none is requested.
    pub fn default_family(self) -> Family {
        match self {
            Characteristic::InterArrival => Family::Weibull,
            Characteristic::Size => Family::GeneralizedPareto,
            Characteristic::Duration => Family::Lognormal,
        }
    }
}

/// Inter-arrival gaps, sizes and durations of a trace. Gaps come from the
/// flows sorted by start time.
pub fn trace_samples(flows: &[FlowSpec]) -> [Vec<f64>; 3] {
    let mut starts: Vec<f64> = flows.iter().map(|f| f.start).collect();
    starts.sort_by(f64::total_cmp);
    let gaps = starts.windows(2).map(|w| w[1] - w[0]).collect();
    [gaps, flows.iter().map(|f| f.size as f64).collect(), flows.iter().map(|f| f.duration).collect()]
}

/// Fit of one characteristic.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicFit {
    pub characteristic: Characteristic,
    pub spec: DistSpec,
    pub gof: GofReport,
    pub pp: Vec<(f64, f64)>,
}

/// Fits `family` (or each characteristic's default family) to the three
/// flow characteristics of a trace. Zero inter-arrival gaps are skipped.
pub fn fit_trace(flows: &[FlowSpec], family: Option<Family>) -> Result<Vec<CharacteristicFit>> {
    if flows.is_empty() {
        return Err(Error::InsufficientData { needed: crate::distributions::MIN_FIT_SAMPLES, got: 0 });
    }
    let mut samples = trace_samples(flows);
    // flows sharing a timestamp carry no inter-arrival information
    let ties = samples[0].len();
    samples[0].retain(|&g| g > 0.0);
    if ties != samples[0].len() {
        log::debug!("dropped {} zero inter-arrival gaps", ties - samples[0].len());
    }
    Characteristic::ALL
        .iter()
        .zip(samples.iter())
        .map(|(&c, xs)| {
            let spec = fit(family.unwrap_or(c.default_family()), xs)?;
            Ok(CharacteristicFit { characteristic: c, spec, gof: gof(xs, &spec)?, pp: pp_points(xs, &spec)? })
        })
        .collect()
}

/// Parameter and statistic table: one row per characteristic.
pub fn write_fit_csv<W: Write>(fits: &[CharacteristicFit], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["characteristic", "family", "param", "value", "ks", "ad", "chi2", "chi2_bins"])?;
    for f in fits {
        for (name, value) in f.spec.params() {
            out.write_record([
                f.characteristic.name().to_string(),
                f.spec.family().to_string(),
                name.to_string(),
                value.to_string(),
                f.gof.ks.to_string(),
                f.gof.ad.to_string(),
                f.gof.chi2.to_string(),
                f.gof.chi2_bins.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// P-P points of every characteristic.
pub fn write_pp_csv<W: Write>(fits: &[CharacteristicFit], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["characteristic", "empirical", "model"])?;
    for f in fits {
        for &(e, m) in &f.pp {
            out.write_record([f.characteristic.name().to_string(), e.to_string(), m.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}
