//! Scenario configuration, delay sweeps and CSV output.
//!
//! A scenario file is a flat TOML document:
//!
//! ```toml
//! name = "case2"
//! duty_cycles = [0.5, 0.125, 0.375]
//! slot_time_ms = 12.5
//! delay_start_ms = 0
//! delay_stop_ms = 200
//! delay_step_ms = 5
//! delay_offsets_ms = [0, 20, 40]
//! algorithms = ["nopolicy", "minmax", "eq2"]
//! seed = 7
//! ```
//!
//! Either `delays_ms` (explicit list) or the three `delay_*_ms` range keys give
//! the sweep; the range includes its stop value. Optional keys: `loss_p` (one
//! value, or one per VSTA), `mss`, `samples`, `mean_fraction`,
//! `enumeration_budget`, `collapse_rotations`. Unknown keys are rejected.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::allocation::{
    blind_allocate, minmax_allocate, upper_bound_allocate, BlindObjective, EnumerationOptions,
    DEFAULT_ENUMERATION_BUDGET,
};
use crate::error::{Error, Result};
use crate::par::map_collect;
use crate::rtt::{
    estimate_throughput, PathParams, RttSamplerConfig, ThroughputEstimate, DEFAULT_LOSS,
    DEFAULT_MEAN_FRACTION, DEFAULT_MSS, DEFAULT_SAMPLES,
};
use crate::schedule::{DutyCycleSet, SlotPlan, SlotSchedule};

pub const DEFAULT_SEED: u64 = 1;

pub const CSV_HEADER: &str = "scenario,algorithm,base_delay_ms,vsta,mean_rtt_ms,throughput_bps,aggregate_bps,ratio_vs_nopolicy,seed";

/// Names accepted by [`builtin_scenarios`].
pub const BUILTIN_SCENARIOS: [&str; 4] = ["case1", "case2", "case3", "fig5"];

/// Slot-allocation strategies. The derived order is the CSV sort order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Eq1,
    Eq2,
    MinMax,
    NoPolicy,
    UpperBound,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Eq1,
        Algorithm::Eq2,
        Algorithm::MinMax,
        Algorithm::NoPolicy,
        Algorithm::UpperBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Eq1 => "eq1",
            Algorithm::Eq2 => "eq2",
            Algorithm::MinMax => "minmax",
            Algorithm::NoPolicy => "nopolicy",
            Algorithm::UpperBound => "upperbound",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| {
                Error::config(
                    "algorithms",
                    format!("unknown algorithm `{s}` (expected eq1, eq2, minmax, nopolicy or upperbound)"),
                )
            })
    }
}

/// Parses a comma-separated algorithm list.
pub fn parse_algorithms(list: &str) -> Result<Vec<Algorithm>> {
    let mut algs = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if algs.is_empty() {
        return Err(Error::config(
            "algorithms",
            "at least one algorithm is required",
        ));
    }
    algs.sort();
    algs.dedup();
    Ok(algs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duty: DutyCycleSet,
    pub slot_time: f64,
    /// Swept base delays `x` in ms.
    pub delays: Vec<f64>,
    /// Per-VSTA offsets added to the base delay; VSTA `i` sees `x + offset_i`.
    pub delay_offsets: Vec<f64>,
    pub loss: Vec<f64>,
    pub mss: u32,
    pub sampler: RttSamplerConfig,
    pub algorithms: Vec<Algorithm>,
    pub enumeration: EnumerationOptions,
}

impl Scenario {
    fn base(name: &str, fractions: Vec<f64>, slot_time: f64) -> Self {
        let duty = DutyCycleSet::new(fractions).expect("built-in duty cycles are valid");
        let n = duty.len();
        Self {
            name: name.to_string(),
            duty,
            slot_time,
            delays: sweep(0.0, 200.0, 5.0).expect("built-in sweep is valid"),
            delay_offsets: vec![0.0; n],
            loss: vec![DEFAULT_LOSS; n],
            mss: DEFAULT_MSS,
            sampler: RttSamplerConfig {
                seed: DEFAULT_SEED,
                ..RttSamplerConfig::default()
            },
            algorithms: Algorithm::ALL.to_vec(),
            enumeration: EnumerationOptions::default(),
        }
    }

    pub fn num_vstas(&self) -> usize {
        self.duty.len()
    }

    pub fn plan(&self) -> Result<SlotPlan> {
        SlotPlan::derive(&self.duty, self.slot_time)
    }

    /// Path parameters of every VSTA at base delay `x`.
    pub fn paths_at(&self, base_delay: f64) -> Result<Vec<PathParams>> {
        (0..self.num_vstas())
            .map(|i| PathParams::new(base_delay + self.delay_offsets[i], self.loss[i], self.mss))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vstas();
        if self.delays.is_empty() {
            return Err(Error::config("delays_ms", "sweep is empty"));
        }
        if let Some(d) = self.delays.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::config(
                "delays_ms",
                format!("delay {d} must be non-negative"),
            ));
        }
        if self.delay_offsets.len() != n {
            return Err(Error::config(
                "delay_offsets_ms",
                format!("expected {n} offsets, got {}", self.delay_offsets.len()),
            ));
        }
        if let Some(o) = self
            .delay_offsets
            .iter()
            .find(|o| !(o.is_finite() && **o >= 0.0))
        {
            return Err(Error::config(
                "delay_offsets_ms",
                format!("offset {o} must be non-negative"),
            ));
        }
        if self.loss.len() != n {
            return Err(Error::config(
                "loss_p",
                format!("expected {n} values, got {}", self.loss.len()),
            ));
        }
        for &p in &self.loss {
            if !(p > 0.0 && p < crate::rtt::MATHIS_MAX_LOSS) {
                return Err(Error::config("loss_p", format!("{p} is outside (0, 0.02)")));
            }
        }
        if self.mss == 0 {
            return Err(Error::config("mss", "must be positive"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config(
                "algorithms",
                "at least one algorithm is required",
            ));
        }
        self.sampler
            .validate()
            .map_err(|e| Error::config("samples/mean_fraction", e.to_string()))?;
        self.plan()
            .map_err(|e| Error::config("duty_cycles/slot_time_ms", e.to_string()))?;
        Ok(())
    }
}

/// Inclusive arithmetic sweep `start, start + step, …, ≤ stop`.
pub fn sweep(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::config("delay_step_ms", "must be positive"));
    }
    if !(start.is_finite() && stop.is_finite()) || stop < start {
        return Err(Error::config(
            "delay_stop_ms",
            "must not be below delay_start_ms",
        ));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

/// Parameter sets used in the evaluation: `case1`..`case3` are single
/// scenarios, `fig5` expands to one scenario per disconnection time.
pub fn builtin_scenarios(name: &str) -> Option<Vec<Scenario>> {
    match name {
        "case1" => Some(vec![Scenario::base(
            "case1",
            vec![0.5, 0.125, 0.125, 0.125, 0.125],
            15.0,
        )]),
        "case2" => {
            let mut s = Scenario::base("case2", vec![0.5, 0.125, 0.375], 12.5);
            s.delay_offsets = vec![0.0, 20.0, 40.0];
            Some(vec![s])
        }
        "case3" => Some(vec![Scenario::base("case3", vec![0.65, 0.25, 0.10], 10.0)]),
        "fig5" => Some(
            [0.0, 15.0, 25.0, 50.0, 75.0]
                .into_iter()
                .map(fig5_scenario)
                .collect(),
        ),
        _ => None,
    }
}

/// Half duty cycle with a given disconnection time `(1 − f) T`; VSTA 0 is the
/// measured station, VSTA 1 stands in for the other AP.
fn fig5_scenario(disconnection: f64) -> Scenario {
    let name = format!("fig5-disc{disconnection}");
    let mut s = if disconnection == 0.0 {
        Scenario::base(&name, vec![1.0], 100.0)
    } else {
        Scenario::base(&name, vec![0.5, 0.5], disconnection)
    };
    s.algorithms = vec![Algorithm::NoPolicy];
    s
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    duty_cycles: Vec<f64>,
    slot_time_ms: f64,
    delays_ms: Option<Vec<f64>>,
    delay_start_ms: Option<f64>,
    delay_stop_ms: Option<f64>,
    delay_step_ms: Option<f64>,
    #[serde(default)]
    delay_offsets_ms: Vec<f64>,
    #[serde(default)]
    loss_p: Vec<f64>,
    mss: Option<u32>,
    samples: Option<usize>,
    mean_fraction: Option<f64>,
    seed: Option<u64>,
    algorithms: Option<Vec<String>>,
    enumeration_budget: Option<u64>,
    collapse_rotations: Option<bool>,
}

/// Parses a scenario document. `default_name` is used when it has no `name`.
pub fn parse_scenario(text: &str, default_name: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let field = message.split('`').nth(1).unwrap_or("scenario").to_string();
        Error::Config { field, message }
    })?;

    let duty = DutyCycleSet::new(file.duty_cycles)
        .map_err(|e| Error::config("duty_cycles", e.to_string()))?;
    let n = duty.len();
    if !(file.slot_time_ms.is_finite() && file.slot_time_ms > 0.0) {
        return Err(Error::config("slot_time_ms", "must be positive"));
    }

    let range = (file.delay_start_ms, file.delay_stop_ms, file.delay_step_ms);
    let delays = match (file.delays_ms, range) {
        (Some(_), (Some(_), _, _) | (_, Some(_), _) | (_, _, Some(_))) => {
            return Err(Error::config(
                "delays_ms",
                "give either delays_ms or the delay_*_ms range, not both",
            ))
        }
        (Some(list), _) => list,
        (None, (Some(start), Some(stop), Some(step))) => sweep(start, stop, step)?,
        (None, (None, None, None)) => sweep(0.0, 200.0, 5.0)?,
        (None, _) => {
            return Err(Error::config(
                "delay_start_ms",
                "delay_start_ms, delay_stop_ms and delay_step_ms must be given together",
            ))
        }
    };

    let delay_offsets = if file.delay_offsets_ms.is_empty() {
        vec![0.0; n]
    } else {
        file.delay_offsets_ms
    };
    let loss = match file.loss_p.len() {
        0 => vec![DEFAULT_LOSS; n],
        1 => vec![file.loss_p[0]; n],
        _ => file.loss_p,
    };
    let algorithms = match file.algorithms {
        Some(list) => parse_algorithms(&list.join(","))?,
        None => Algorithm::ALL.to_vec(),
    };

    let scenario = Scenario {
        name: file.name.unwrap_or_else(|| default_name.to_string()),
        duty,
        slot_time: file.slot_time_ms,
        delays,
        delay_offsets,
        loss,
        mss: file.mss.unwrap_or(DEFAULT_MSS),
        sampler: RttSamplerConfig {
            n_samples: file.samples.unwrap_or(DEFAULT_SAMPLES),
            mean_fraction: file.mean_fraction.unwrap_or(DEFAULT_MEAN_FRACTION),
            seed: file.seed.unwrap_or(DEFAULT_SEED),
        },
        algorithms,
        enumeration: EnumerationOptions {
            budget: file
                .enumeration_budget
                .map_or(DEFAULT_ENUMERATION_BUDGET, u128::from),
            collapse_rotations: file.collapse_rotations.unwrap_or(false),
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Resolves a built-in scenario name or reads a scenario file.
pub fn load_scenarios(source: &str) -> Result<Vec<Scenario>> {
    if let Some(builtin) = builtin_scenarios(source) {
        return Ok(builtin);
    }
    let path = Path::new(source);
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: source.to_string(),
        message: format!("{e} (built-in scenarios: {})", BUILTIN_SCENARIOS.join(", ")),
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario");
    Ok(vec![parse_scenario(&text, stem)?])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub base_delay: f64,
    /// `None` for the aggregate row.
    pub vsta: Option<usize>,
    pub mean_rtt: Option<f64>,
    pub throughput: f64,
    pub aggregate: f64,
    pub ratio_vs_nopolicy: f64,
    pub seed: u64,
}

impl ResultRow {
    fn sort_key(&self) -> (&str, f64, Algorithm, usize) {
        (
            &self.scenario,
            self.base_delay,
            self.algorithm,
            self.vsta.unwrap_or(usize::MAX),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    pub fn aggregate_rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.vsta.is_none())
    }

    /// Aggregate throughput of `algorithm` at `base_delay`, if present.
    pub fn aggregate(&self, algorithm: Algorithm, base_delay: f64) -> Option<f64> {
        self.aggregate_rows()
            .find(|r| r.algorithm == algorithm && r.base_delay == base_delay)
            .map(|r| r.aggregate)
    }

    fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            let (sa, da, aa, va) = a.sort_key();
            let (sb, db, ab, vb) = b.sort_key();
            sa.cmp(sb)
                .then(da.partial_cmp(&db).unwrap_or(Ordering::Equal))
                .then(aa.cmp(&ab))
                .then(va.cmp(&vb))
        });
    }
}

/// Schedules that do not depend on the swept delay.
struct FixedSchedules {
    nopolicy: SlotSchedule,
    minmax: SlotSchedule,
    eq2: Option<SlotSchedule>,
}

fn tag(algorithm: Algorithm) -> impl Fn(Error) -> Error {
    move |e| Error::Algorithm {
        algorithm: algorithm.name().to_string(),
        source: Box::new(e),
    }
}

fn schedule_for(
    scenario: &Scenario,
    plan: &SlotPlan,
    fixed: &FixedSchedules,
    algorithm: Algorithm,
    paths: &[PathParams],
) -> Result<SlotSchedule> {
    Ok(match algorithm {
        Algorithm::NoPolicy => fixed.nopolicy.clone(),
        Algorithm::MinMax => fixed.minmax.clone(),
        Algorithm::Eq2 => fixed
            .eq2
            .clone()
            .expect("eq2 schedule computed when requested"),
        Algorithm::Eq1 => {
            blind_allocate(plan, BlindObjective::Eq1(paths), scenario.enumeration)
                .map_err(tag(algorithm))?
                .schedule
        }
        Algorithm::UpperBound => {
            upper_bound_allocate(plan, paths, &scenario.sampler, scenario.enumeration)
                .map_err(tag(algorithm))?
                .schedule
        }
    })
}

fn ratio(value: f64, reference: f64) -> f64 {
    value / reference
}

fn rows_at_delay(
    scenario: &Scenario,
    plan: &SlotPlan,
    fixed: &FixedSchedules,
    base_delay: f64,
) -> Result<Vec<ResultRow>> {
    let paths = scenario.paths_at(base_delay)?;
    let reference = estimate_throughput(&fixed.nopolicy, &paths, &scenario.sampler)?;
    let mut rows = Vec::new();
    for &algorithm in &scenario.algorithms {
        let estimate: ThroughputEstimate = if algorithm == Algorithm::NoPolicy {
            reference.clone()
        } else {
            let schedule = schedule_for(scenario, plan, fixed, algorithm, &paths)?;
            estimate_throughput(&schedule, &paths, &scenario.sampler)?
        };
        let is_reference = algorithm == Algorithm::NoPolicy;
        for (i, v) in estimate.per_vsta.iter().enumerate() {
            rows.push(ResultRow {
                scenario: scenario.name.clone(),
                algorithm,
                base_delay,
                vsta: Some(i),
                mean_rtt: Some(v.rtt.mean),
                throughput: v.throughput,
                aggregate: estimate.aggregate,
                ratio_vs_nopolicy: if is_reference {
                    1.0
                } else {
                    ratio(v.throughput, reference.per_vsta[i].throughput)
                },
                seed: scenario.sampler.seed,
            });
        }
        rows.push(ResultRow {
            scenario: scenario.name.clone(),
            algorithm,
            base_delay,
            vsta: None,
            mean_rtt: None,
            throughput: estimate.aggregate,
            aggregate: estimate.aggregate,
            ratio_vs_nopolicy: if is_reference {
                1.0
            } else {
                ratio(estimate.aggregate, reference.aggregate)
            },
            seed: scenario.sampler.seed,
        });
    }
    Ok(rows)
}

/// Runs every requested algorithm at every swept delay. Per-VSTA rows carry
/// the VSTA's throughput ratio, the aggregate row (`vsta = None`) the
/// aggregate ratio, both against the contiguous schedule at the same delay.
pub fn run_scenario(scenario: &Scenario) -> Result<ResultTable> {
    scenario.validate()?;
    let plan = scenario.plan()?;
    let eq2 = if scenario.algorithms.contains(&Algorithm::Eq2) {
        Some(
            blind_allocate(&plan, BlindObjective::Eq2, scenario.enumeration)
                .map_err(tag(Algorithm::Eq2))?
                .schedule,
        )
    } else {
        None
    };
    let fixed = FixedSchedules {
        nopolicy: SlotSchedule::contiguous(&plan),
        minmax: minmax_allocate(&plan).schedule,
        eq2,
    };
    let per_delay = map_collect(&scenario.delays, |&d| {
        rows_at_delay(scenario, &plan, &fixed, d)
    });
    let mut table = ResultTable::default();
    for rows in per_delay {
        table.rows.extend(rows?);
    }
    table.sort();
    Ok(table)
}

/// `%g`-style formatting with six significant digits, independent of locale.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Renders the table as CSV, sorted by (scenario, base delay, algorithm,
/// VSTA) with the aggregate row (`vsta = all`) last in each group.
pub fn emit_csv(table: &ResultTable) -> String {
    let mut sorted = table.clone();
    sorted.sort();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &sorted.rows {
        let vsta = r.vsta.map_or_else(|| "all".to_string(), |v| v.to_string());
        let rtt = r.mean_rtt.map(format_sig6).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.algorithm,
            format_sig6(r.base_delay),
            vsta,
            rtt,
            format_sig6(r.throughput),
            format_sig6(r.aggregate),
            format_sig6(r.ratio_vs_nopolicy),
            r.seed
        )
        .expect("writing to a String");
    }
    out
}
