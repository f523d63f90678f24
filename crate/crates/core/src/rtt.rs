//! TCP RTT under a periodic multi-AP schedule, and the Mathis throughput
//! mapping.
//!
//! A segment sent at `t` while the VSTA is connected has its ACK back at the AP
//! at `t + d`. If the VSTA is connected at that instant the RTT is `d`,
//! otherwise the AP buffers the ACK until the VSTA's next connected slot.
//! Connected intervals are half-open: an ACK landing exactly on a slot start is
//! delivered at once, one landing exactly on a slot end waits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

use crate::error::{Error, Result};
use crate::schedule::{SlotSchedule, TIME_EPS};

pub const DEFAULT_MSS: u32 = 1460;
/// Congestion-signal rate measured on a single AP (0.32%).
pub const DEFAULT_LOSS: f64 = 0.0032;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_MEAN_FRACTION: f64 = 0.25;
/// Upper bound on the loss rate for which the Mathis model holds.
pub const MATHIS_MAX_LOSS: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// End-to-end wired delay in ms.
    pub delay: f64,
    /// Congestion-signal rate per acknowledged packet.
    pub loss: f64,
    /// Maximum segment size in bytes.
    pub mss: u32,
}

impl PathParams {
    pub fn new(delay: f64, loss: f64, mss: u32) -> Result<Self> {
        let path = Self { delay, loss, mss };
        path.validate()?;
        Ok(path)
    }

    pub fn with_delay(delay: f64) -> Result<Self> {
        Self::new(delay, DEFAULT_LOSS, DEFAULT_MSS)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay.is_finite() && self.delay >= 0.0) {
            return Err(Error::InvalidPath(format!(
                "delay must be non-negative, got {} ms",
                self.delay
            )));
        }
        check_loss(self.loss)?;
        if self.mss == 0 {
            return Err(Error::InvalidPath("mss must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttSamplerConfig {
    pub n_samples: usize,
    /// Mean of the exponential send offset, as a fraction of the VSTA's
    /// connected time per period.
    pub mean_fraction: f64,
    pub seed: u64,
}

impl Default for RttSamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_SAMPLES,
            mean_fraction: DEFAULT_MEAN_FRACTION,
            seed: 0,
        }
    }
}

impl RttSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidSampler("n_samples must be at least 1".into()));
        }
        if !(self.mean_fraction > 0.0 && self.mean_fraction <= 1.0) {
            return Err(Error::InvalidSampler(format!(
                "mean_fraction must be in (0, 1], got {}",
                self.mean_fraction
            )));
        }
        Ok(())
    }

    /// Configuration used for VSTA `vsta` when sampling a whole schedule.
    pub fn for_vsta(&self, vsta: usize) -> Self {
        Self {
            seed: self.seed ^ vsta as u64,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Sample standard deviation (0 for a single sample).
    pub std_dev: f64,
    pub n: usize,
}

impl RttStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty(), "RttStats needs at least one sample");
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let (min, max) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        let std_dev = if n > 1 {
            let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        // Clamp away summation rounding so that min <= mean <= max holds.
        let mean = mean.clamp(min, max);
        Self {
            mean,
            min,
            max,
            std_dev,
            n,
        }
    }

    pub fn std_error(&self) -> f64 {
        self.std_dev / (self.n as f64).sqrt()
    }
}

/// Half-open wall-clock interval `[start, end)` in ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    fn contains(&self, t: f64) -> bool {
        t >= self.start - TIME_EPS && t < self.end - TIME_EPS
    }
}

/// The connected intervals of one VSTA, repeated every `period` ms.
#[derive(Debug, Clone, PartialEq)]
pub struct Connectivity {
    intervals: Vec<Interval>,
    period: f64,
}

impl Connectivity {
    pub fn new(schedule: &SlotSchedule, vsta: usize) -> Result<Self> {
        schedule.check_vsta(vsta)?;
        let mut intervals: Vec<Interval> = Vec::new();
        for ((&owner, &start), &dur) in schedule
            .owners()
            .iter()
            .zip(schedule.start_times())
            .zip(schedule.durations())
        {
            if owner != vsta {
                continue;
            }
            let end = start + dur;
            match intervals.last_mut() {
                Some(last) if (last.end - start).abs() <= TIME_EPS => last.end = end,
                _ => intervals.push(Interval { start, end }),
            }
        }
        if intervals.is_empty() {
            return Err(Error::InvalidSchedule(format!("VSTA {vsta} owns no slot")));
        }
        Ok(Self {
            intervals,
            period: schedule.period(),
        })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn connected_time(&self) -> f64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    /// Splits an absolute time into (whole periods, phase in `[0, T)`).
    fn split(&self, t: f64) -> (f64, f64) {
        let mut k = (t / self.period).floor();
        let mut phase = t - k * self.period;
        if phase >= self.period - TIME_EPS {
            k += 1.0;
            phase -= self.period;
        }
        (k, phase.max(0.0))
    }

    pub fn is_connected(&self, t: f64) -> bool {
        let (_, phase) = self.split(t);
        self.intervals.iter().any(|iv| iv.contains(phase))
    }

    /// Earliest instant at or after `t` at which the VSTA is connected.
    pub fn next_connected(&self, t: f64) -> f64 {
        let (k, phase) = self.split(t);
        let base = k * self.period;
        for iv in &self.intervals {
            if iv.contains(phase) {
                return t;
            }
            if iv.start > phase {
                return base + iv.start;
            }
        }
        base + self.period + self.intervals[0].start
    }

    /// RTT of a segment sent at `send_t` (inside a connected interval) over a
    /// path with wired delay `delay`.
    pub fn rtt(&self, send_t: f64, delay: f64) -> f64 {
        let landing = send_t + delay;
        if self.is_connected(landing) {
            return delay;
        }
        // Buffered at the AP; never report less than the wired delay.
        (self.next_connected(landing) - send_t).max(delay)
    }

    /// Maps an offset in connected time (the owned slots laid end to end) to
    /// wall-clock time within the period.
    pub fn wall_clock(&self, offset: f64) -> f64 {
        let mut acc = 0.0;
        for iv in &self.intervals {
            let len = iv.len();
            if offset < acc + len {
                return iv.start + (offset - acc).max(0.0);
            }
            acc += len;
        }
        // Offsets equal to the total connected time only arise from rounding.
        let last = self.intervals[self.intervals.len() - 1];
        last.start + (offset - (acc - last.len())).min(last.len()).max(0.0)
    }

    /// Draws `cfg.n_samples` RTTs.
    ///
    /// Each send offset is exponential in connected time with mean
    /// `mean_fraction · f_i T`, counted from the start of a reconnection picked
    /// uniformly among the VSTA's connected intervals (one wrapping across the
    /// period boundary counts once) and wrapped modulo `f_i T`. Picking the reconnection keeps the distribution independent of
    /// where the period happens to begin.
    pub fn sample(&self, delay: f64, cfg: &RttSamplerConfig) -> Vec<f64> {
        let connected = self.connected_time();
        let mean = cfg.mean_fraction * connected;
        let exp = Exp::new(1.0 / mean).expect("mean is positive");
        let mut anchors: Vec<f64> = self
            .intervals
            .iter()
            .scan(0.0, |acc, iv| {
                let start = *acc;
                *acc += iv.len();
                Some(start)
            })
            .collect();
        // An interval at time 0 that continues one ending at T is not a reconnection.
        if let (Some(first), Some(last)) = (self.intervals.first(), self.intervals.last()) {
            if anchors.len() > 1 && first.start <= TIME_EPS && last.end >= self.period - TIME_EPS {
                anchors.remove(0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..cfg.n_samples)
            .map(|_| {
                let anchor = if anchors.len() == 1 {
                    0.0
                } else {
                    anchors[rng.gen_range(0..anchors.len())]
                };
                let offset = (anchor + rng.sample(exp)) % connected;
                let send_t = self.wall_clock(offset);
                self.rtt(send_t, delay)
            })
            .collect()
    }
}

/// Connected wall-clock intervals of `vsta` within one period, with adjacent
/// owned slots merged.
pub fn connected_intervals(schedule: &SlotSchedule, vsta: usize) -> Result<Vec<Interval>> {
    Ok(Connectivity::new(schedule, vsta)?.intervals)
}

pub fn rtt_for_send_time(
    schedule: &SlotSchedule,
    vsta: usize,
    send_t: f64,
    delay: f64,
) -> Result<f64> {
    let conn = Connectivity::new(schedule, vsta)?;
    if !(delay.is_finite() && delay >= 0.0) {
        return Err(Error::InvalidPath(format!(
            "delay must be non-negative, got {delay} ms"
        )));
    }
    let in_period = send_t >= 0.0 && send_t < schedule.period();
    if !in_period || !conn.is_connected(send_t) {
        return Err(Error::NotConnected { vsta, send_t });
    }
    Ok(conn.rtt(send_t, delay))
}

/// Monte-Carlo RTT samples for one VSTA, deterministic in `cfg.seed`.
pub fn sample_rtt_values(
    schedule: &SlotSchedule,
    vsta: usize,
    path: &PathParams,
    cfg: &RttSamplerConfig,
) -> Result<Vec<f64>> {
    path.validate()?;
    cfg.validate()?;
    Ok(Connectivity::new(schedule, vsta)?.sample(path.delay, cfg))
}

pub fn sample_rtts(
    schedule: &SlotSchedule,
    vsta: usize,
    path: &PathParams,
    cfg: &RttSamplerConfig,
) -> Result<RttStats> {
    sample_rtt_values(schedule, vsta, path, cfg).map(|s| RttStats::from_samples(&s))
}

fn check_loss(loss: f64) -> Result<()> {
    if loss > 0.0 && loss < MATHIS_MAX_LOSS {
        Ok(())
    } else {
        Err(Error::InvalidLoss(loss))
    }
}

/// Mathis bound `MSS / (RTT · √p)` in bits per second, `rtt` in ms.
pub fn mathis_throughput(mss: u32, rtt: f64, loss: f64) -> Result<f64> {
    check_loss(loss)?;
    if rtt.is_nan() || rtt <= 0.0 {
        return Err(Error::NonPositiveRtt(rtt));
    }
    Ok(f64::from(mss) * 8.0 / (rtt / 1000.0 * loss.sqrt()))
}

/// Like [`mathis_throughput`] but maps a zero RTT to an unbounded rate.
pub(crate) fn mathis_or_unbounded(mss: u32, rtt: f64, loss: f64) -> Result<f64> {
    if rtt == 0.0 {
        check_loss(loss)?;
        return Ok(f64::INFINITY);
    }
    mathis_throughput(mss, rtt, loss)
}

/// `d + max_l c_{i,l}`: the RTT of the worst-placed segment.
pub fn worst_case_rtt(schedule: &SlotSchedule, vsta: usize, delay: f64) -> Result<f64> {
    Ok(delay + schedule.max_disconnection(vsta)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VstaEstimate {
    pub rtt: RttStats,
    /// Mathis throughput at the mean RTT, bits/s. Infinite if the mean RTT is 0.
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputEstimate {
    pub per_vsta: Vec<VstaEstimate>,
    pub aggregate: f64,
}

pub(crate) fn check_paths(schedule: &SlotSchedule, paths: &[PathParams]) -> Result<()> {
    if paths.len() != schedule.num_vstas() {
        return Err(Error::MissingPaths {
            expected: schedule.num_vstas(),
            got: paths.len(),
        });
    }
    paths.iter().try_for_each(PathParams::validate)
}

pub(crate) fn estimate_vsta(
    conn: &Connectivity,
    vsta: usize,
    path: &PathParams,
    cfg: &RttSamplerConfig,
) -> Result<VstaEstimate> {
    let samples = conn.sample(path.delay, &cfg.for_vsta(vsta));
    let rtt = RttStats::from_samples(&samples);
    let throughput = mathis_or_unbounded(path.mss, rtt.mean, path.loss)?;
    Ok(VstaEstimate { rtt, throughput })
}

/// Per-VSTA mean RTT and Mathis throughput, plus their sum. VSTA `i` samples
/// with seed `cfg.seed ^ i`.
pub fn estimate_throughput(
    schedule: &SlotSchedule,
    paths: &[PathParams],
    cfg: &RttSamplerConfig,
) -> Result<ThroughputEstimate> {
    check_paths(schedule, paths)?;
    cfg.validate()?;
    let per_vsta = paths
        .iter()
        .enumerate()
        .map(|(i, path)| estimate_vsta(&Connectivity::new(schedule, i)?, i, path, cfg))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = per_vsta.iter().map(|v| v.throughput).sum();
    Ok(ThroughputEstimate {
        per_vsta,
        aggregate,
    })
}

pub fn aggregate_throughput(
    schedule: &SlotSchedule,
    paths: &[PathParams],
    cfg: &RttSamplerConfig,
) -> Result<f64> {
    estimate_throughput(schedule, paths, cfg).map(|e| e.aggregate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{DutyCycleSet, SlotPlan};

    fn plan(f: &[f64], slot_time: f64) -> SlotPlan {
        SlotPlan::derive(&DutyCycleSet::new(f.to_vec()).unwrap(), slot_time).unwrap()
    }

    /// VSTA 0 connected on [0, 50) of a 100 ms period.
    fn half_duty() -> SlotSchedule {
        SlotSchedule::contiguous(&plan(&[0.5, 0.5], 50.0))
    }

    fn case2_minmax() -> SlotSchedule {
        SlotSchedule::from_plan(
            &plan(&[0.5, 0.125, 0.375], 12.5),
            vec![0, 2, 0, 2, 0, 2, 0, 1],
        )
        .unwrap()
    }

    fn iv(start: f64, end: f64) -> Interval {
        Interval { start, end }
    }

    #[test]
    fn intervals_of_interleaved_schedule() {
        assert_eq!(
            connected_intervals(&case2_minmax(), 0).unwrap(),
            vec![
                iv(0.0, 12.5),
                iv(25.0, 37.5),
                iv(50.0, 62.5),
                iv(75.0, 87.5)
            ]
        );
    }

    #[test]
    fn adjacent_slots_merge() {
        assert_eq!(
            connected_intervals(&half_duty(), 0).unwrap(),
            vec![iv(0.0, 50.0)]
        );
        let s = SlotSchedule::contiguous(&plan(&[0.8, 0.2], 20.0));
        assert_eq!(s.owners(), &[0, 0, 0, 0, 1]);
        assert_eq!(connected_intervals(&s, 0).unwrap(), vec![iv(0.0, 80.0)]);
        let single = SlotSchedule::contiguous(&plan(&[1.0], 15.0));
        assert_eq!(
            connected_intervals(&single, 0).unwrap(),
            vec![iv(0.0, 15.0)]
        );
        assert!(connected_intervals(&single, 1).is_err());
    }

    #[test]
    fn rtt_cases() {
        let s = half_duty();
        assert_eq!(rtt_for_send_time(&s, 0, 10.0, 30.0).unwrap(), 30.0);
        assert_eq!(rtt_for_send_time(&s, 0, 10.0, 60.0).unwrap(), 90.0);
        assert_eq!(rtt_for_send_time(&s, 0, 0.0, 100.0).unwrap(), 100.0);
        // Landing exactly on the end of the window waits for the next period.
        assert_eq!(rtt_for_send_time(&s, 0, 10.0, 40.0).unwrap(), 90.0);
        assert_eq!(
            rtt_for_send_time(&case2_minmax(), 0, 5.0, 20.0).unwrap(),
            20.0
        );
        // Lands at 17.5, in VSTA 2's slot; next owned slot starts at 25.
        assert_eq!(
            rtt_for_send_time(&case2_minmax(), 0, 5.0, 12.5).unwrap(),
            20.0
        );
    }

    #[test]
    fn rtt_rejects_disconnected_send() {
        let s = half_duty();
        assert_eq!(
            rtt_for_send_time(&s, 0, 60.0, 10.0),
            Err(Error::NotConnected {
                vsta: 0,
                send_t: 60.0
            })
        );
        assert!(rtt_for_send_time(&s, 0, 50.0, 10.0).is_err());
        assert!(rtt_for_send_time(&s, 0, -1.0, 10.0).is_err());
        assert!(rtt_for_send_time(&s, 0, 100.0, 10.0).is_err());
        assert!(rtt_for_send_time(&s, 2, 10.0, 10.0).is_err());
    }

    #[test]
    fn wall_clock_mapping_skips_foreign_slots() {
        let conn = Connectivity::new(&case2_minmax(), 0).unwrap();
        assert_eq!(conn.wall_clock(0.0), 0.0);
        assert_eq!(conn.wall_clock(12.5), 25.0);
        assert_eq!(conn.wall_clock(30.0), 55.0);
        assert_eq!(conn.wall_clock(49.9), 87.4);
    }

    #[test]
    fn always_connected_rtt_equals_delay() {
        let s = SlotSchedule::contiguous(&plan(&[1.0], 15.0));
        let cfg = RttSamplerConfig {
            n_samples: 500,
            ..Default::default()
        };
        for d in [0.0, 7.0, 100.0, 333.0] {
            let stats = sample_rtts(&s, 0, &PathParams::with_delay(d).unwrap(), &cfg).unwrap();
            assert_eq!((stats.mean, stats.min, stats.max), (d, d, d));
        }
    }

    #[test]
    fn delay_of_one_period_is_exact() {
        let cfg = RttSamplerConfig {
            n_samples: 2000,
            seed: 99,
            ..Default::default()
        };
        let path = PathParams::with_delay(100.0).unwrap();
        for v in sample_rtt_values(&half_duty(), 0, &path, &cfg).unwrap() {
            assert_eq!(v, 100.0);
        }
    }

    #[test]
    fn half_period_delay_waits_for_next_period() {
        let cfg = RttSamplerConfig::default();
        let path = PathParams::with_delay(50.0).unwrap();
        let stats = sample_rtts(&half_duty(), 0, &path, &cfg).unwrap();
        assert!(stats.min > 50.0 && stats.max <= 100.0);
        assert!((stats.mean - 100.0).abs() / 100.0 <= 0.15);
    }

    #[test]
    fn sampler_config_validation() {
        let s = half_duty();
        let path = PathParams::with_delay(10.0).unwrap();
        let zero = RttSamplerConfig {
            n_samples: 0,
            ..Default::default()
        };
        assert!(sample_rtts(&s, 0, &path, &zero).is_err());
        for mean_fraction in [0.0, -0.5, 1.5, f64::NAN] {
            let cfg = RttSamplerConfig {
                mean_fraction,
                ..Default::default()
            };
            assert!(sample_rtts(&s, 0, &path, &cfg).is_err());
        }
    }

    #[test]
    fn path_validation() {
        assert!(PathParams::new(-1.0, 0.01, 1460).is_err());
        assert!(PathParams::new(1.0, 0.0, 1460).is_err());
        assert!(PathParams::new(1.0, 0.02, 1460).is_err());
        assert!(PathParams::new(1.0, 0.01, 0).is_err());
        assert!(PathParams::new(0.0, 0.019, 1).is_ok());
    }

    #[test]
    fn mathis_reference_value() {
        let bw = mathis_throughput(1460, 100.0, 0.0032).unwrap();
        let expected = 11680.0 / (0.1 * 0.0032f64.sqrt());
        assert!((bw - expected).abs() < 1e-6);
        assert!((bw / 1e6 - 2.0647).abs() < 1e-4);
    }

    #[test]
    fn mathis_scaling_and_errors() {
        let base = mathis_throughput(1460, 80.0, 0.001).unwrap();
        let quad_p = mathis_throughput(1460, 80.0, 0.004).unwrap();
        let double_rtt = mathis_throughput(1460, 160.0, 0.001).unwrap();
        assert!((quad_p * 2.0 - base).abs() < 1e-6);
        assert!((double_rtt * 2.0 - base).abs() < 1e-6);
        assert_eq!(
            mathis_throughput(1460, 10.0, 0.02),
            Err(Error::InvalidLoss(0.02))
        );
        assert_eq!(
            mathis_throughput(1460, 10.0, 0.0),
            Err(Error::InvalidLoss(0.0))
        );
        assert_eq!(
            mathis_throughput(1460, 0.0, 0.01),
            Err(Error::NonPositiveRtt(0.0))
        );
    }

    #[test]
    fn worst_case_examples() {
        let contiguous = SlotSchedule::contiguous(&plan(&[0.5, 0.125, 0.375], 12.5));
        assert!((worst_case_rtt(&contiguous, 1, 20.0).unwrap() - 107.5).abs() < 1e-9);
        let single = SlotSchedule::contiguous(&plan(&[1.0], 15.0));
        assert_eq!(worst_case_rtt(&single, 0, 30.0).unwrap(), 30.0);
        let example =
            SlotSchedule::from_slot_sizes(vec![0, 1, 2, 0, 1, 0], vec![12.0, 15.0, 10.0]).unwrap();
        assert_eq!(worst_case_rtt(&example, 0, 0.0).unwrap(), 25.0);
        assert!(worst_case_rtt(&example, 3, 0.0).is_err());
    }

    #[test]
    fn aggregate_single_vsta_matches_mathis() {
        let s = SlotSchedule::contiguous(&plan(&[1.0], 15.0));
        let paths = [PathParams::new(100.0, 0.0032, 1460).unwrap()];
        let bw = aggregate_throughput(&s, &paths, &RttSamplerConfig::default()).unwrap();
        assert!((bw - mathis_throughput(1460, 100.0, 0.0032).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn aggregate_checks_path_count() {
        let s = half_duty();
        let paths = [PathParams::with_delay(10.0).unwrap()];
        assert_eq!(
            aggregate_throughput(&s, &paths, &RttSamplerConfig::default()),
            Err(Error::MissingPaths {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn zero_delay_is_unbounded() {
        let s = half_duty();
        let paths = [PathParams::with_delay(0.0).unwrap(); 2];
        let est = estimate_throughput(&s, &paths, &RttSamplerConfig::default()).unwrap();
        assert_eq!(est.per_vsta[0].rtt.mean, 0.0);
        assert!(est.aggregate.is_infinite());
    }
}
