//! Slot-plan arithmetic and the periodic slot schedule.
//!
//! VSTAs and slot positions are 0-based throughout the crate. A schedule
//! owns its wireless period `T`; slot `j` occupies
//! `[start_times[j], start_times[j] + durations[j])` inside that period.
//!
//! Start times are computed from per-VSTA slot counts (`Σ_i k_i · SlotTime_i`)
//! rather than by accumulating rounded durations, so a non-terminating size
//! such as 65/6 ms never drifts across the period.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Comparison tolerance for times in milliseconds.
pub const TIME_EPS: f64 = 1e-9;

/// Duty cycles within this distance of 1 are renormalised, anything further off
/// is rejected.
pub const DUTY_SUM_TOLERANCE: f64 = 1e-6;

/// Fractions of the wireless period given to each VSTA.
#[derive(Debug, Clone, PartialEq)]
pub struct DutyCycleSet {
    fractions: Vec<f64>,
}

impl DutyCycleSet {
    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::InvalidDutyCycle(
                "at least one VSTA is required".into(),
            ));
        }
        if let Some((i, f)) = fractions
            .iter()
            .enumerate()
            .find(|(_, f)| !(f.is_finite() && **f > 0.0))
        {
            return Err(Error::InvalidDutyCycle(format!(
                "fraction {i} must be positive, got {f}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > DUTY_SUM_TOLERANCE {
            return Err(Error::InvalidDutyCycle(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        let fractions = if (sum - 1.0).abs() > TIME_EPS {
            fractions.into_iter().map(|f| f / sum).collect()
        } else {
            fractions
        };
        Ok(Self { fractions })
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.fractions.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Period, slot counts and slot sizes derived from a duty-cycle set.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotPlan {
    duty: DutyCycleSet,
    period: f64,
    slot_time: f64,
    slot_counts: Vec<usize>,
    slot_sizes: Vec<f64>,
}

impl SlotPlan {
    /// `T = SlotTime / min f`, `g_i = ⌊f_i T / SlotTime⌋`, `SlotTime_i = f_i T / g_i`.
    pub fn derive(duty: &DutyCycleSet, slot_time: f64) -> Result<Self> {
        if !(slot_time.is_finite() && slot_time > 0.0) {
            return Err(Error::InvalidSlotTime(slot_time));
        }
        let min_f = duty.min();
        let period = slot_time / min_f;
        let mut slot_counts = Vec::with_capacity(duty.len());
        let mut slot_sizes = Vec::with_capacity(duty.len());
        for &f in duty.fractions() {
            // f / min_f is the exact ratio f T / SlotTime; the epsilon absorbs
            // quotients like 0.3 / 0.1 = 2.9999999999999996.
            let ratio = f / min_f;
            let g = (ratio + 1e-9).floor() as usize;
            debug_assert!(g >= 1, "f / min f is always at least 1");
            let g = g.max(1);
            slot_counts.push(g);
            slot_sizes.push(f * period / g as f64);
        }
        Ok(Self {
            duty: duty.clone(),
            period,
            slot_time,
            slot_counts,
            slot_sizes,
        })
    }

    pub fn duty(&self) -> &DutyCycleSet {
        &self.duty
    }

    /// Wireless period `T` in ms.
    pub fn period(&self) -> f64 {
        self.period
    }

    /// Global minimum slot duration in ms.
    pub fn slot_time(&self) -> f64 {
        self.slot_time
    }

    pub fn slot_counts(&self) -> &[usize] {
        &self.slot_counts
    }

    /// Per-VSTA slot durations in ms.
    pub fn slot_sizes(&self) -> &[f64] {
        &self.slot_sizes
    }

    pub fn num_vstas(&self) -> usize {
        self.slot_counts.len()
    }

    /// `G`, the number of slots per period.
    pub fn total_slots(&self) -> usize {
        self.slot_counts.iter().sum()
    }
}

pub fn derive_slot_plan(duty: &DutyCycleSet, slot_time: f64) -> Result<SlotPlan> {
    SlotPlan::derive(duty, slot_time)
}

/// Assignment of every slot position in one period to a VSTA.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSchedule {
    owners: Vec<usize>,
    slot_sizes: Vec<f64>,
    durations: Vec<f64>,
    start_times: Vec<f64>,
    period: f64,
}

impl SlotSchedule {
    /// Builds a schedule from an owner vector and per-VSTA slot sizes. Every
    /// VSTA in `0..slot_sizes.len()` must own at least one slot.
    pub fn from_slot_sizes(owners: Vec<usize>, slot_sizes: Vec<f64>) -> Result<Self> {
        if owners.is_empty() {
            return Err(Error::InvalidSchedule("schedule has no slots".into()));
        }
        if let Some(s) = slot_sizes.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidSchedule(format!(
                "slot sizes must be positive, got {s}"
            )));
        }
        let n = slot_sizes.len();
        let mut counts = vec![0usize; n];
        for &o in &owners {
            if o >= n {
                return Err(Error::InvalidSchedule(format!(
                    "owner {o} has no slot size ({n} VSTAs)"
                )));
            }
            counts[o] += 1;
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidSchedule(format!("VSTA {i} owns no slot")));
        }

        let durations: Vec<f64> = owners.iter().map(|&o| slot_sizes[o]).collect();
        let mut start_times = Vec::with_capacity(owners.len());
        let mut seen = vec![0usize; n];
        for &o in &owners {
            start_times.push(weighted_sum(&seen, &slot_sizes));
            seen[o] += 1;
        }
        let period = weighted_sum(&counts, &slot_sizes);
        Ok(Self {
            owners,
            slot_sizes,
            durations,
            start_times,
            period,
        })
    }

    /// Builds a schedule for `plan`; each VSTA must own exactly `g_i` slots.
    pub fn from_plan(plan: &SlotPlan, owners: Vec<usize>) -> Result<Self> {
        if owners.len() != plan.total_slots() {
            return Err(Error::InvalidSchedule(format!(
                "expected {} slots, got {}",
                plan.total_slots(),
                owners.len()
            )));
        }
        let mut counts = vec![0usize; plan.num_vstas()];
        for &o in &owners {
            if o >= counts.len() {
                return Err(Error::InvalidSchedule(format!("unknown owner {o}")));
            }
            counts[o] += 1;
        }
        if counts != plan.slot_counts() {
            return Err(Error::InvalidSchedule(format!(
                "slot counts {counts:?} do not match plan {:?}",
                plan.slot_counts()
            )));
        }
        let mut schedule = Self::from_slot_sizes(owners, plan.slot_sizes().to_vec())?;
        // Σ g_i SlotTime_i equals T up to rounding; pin it to the plan's value.
        schedule.period = plan.period();
        Ok(schedule)
    }

    /// Each VSTA's slots back to back, in VSTA index order.
    pub fn contiguous(plan: &SlotPlan) -> Self {
        let owners = plan
            .slot_counts()
            .iter()
            .enumerate()
            .flat_map(|(i, &g)| std::iter::repeat_n(i, g))
            .collect();
        Self::from_plan(plan, owners).expect("contiguous owners always match the plan")
    }

    pub fn owners(&self) -> &[usize] {
        &self.owners
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn start_times(&self) -> &[f64] {
        &self.start_times
    }

    pub fn slot_sizes(&self) -> &[f64] {
        &self.slot_sizes
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn num_slots(&self) -> usize {
        self.owners.len()
    }

    pub fn num_vstas(&self) -> usize {
        self.slot_sizes.len()
    }

    pub(crate) fn check_vsta(&self, vsta: usize) -> Result<()> {
        if vsta < self.num_vstas() {
            Ok(())
        } else {
            Err(Error::UnknownVsta {
                index: vsta,
                count: self.num_vstas(),
            })
        }
    }

    /// Ascending slot positions owned by `vsta`.
    pub fn positions(&self, vsta: usize) -> Result<Vec<usize>> {
        self.check_vsta(vsta)?;
        Ok(self
            .owners
            .iter()
            .enumerate()
            .filter(|(_, &o)| o == vsta)
            .map(|(j, _)| j)
            .collect())
    }

    /// Total connected time of `vsta` per period.
    pub fn connected_time(&self, vsta: usize) -> Result<f64> {
        self.check_vsta(vsta)?;
        let g = self.owners.iter().filter(|&&o| o == vsta).count();
        Ok(g as f64 * self.slot_sizes[vsta])
    }

    /// `c_{i,l}`: summed duration of the slots strictly between owned position
    /// `l` and the next owned position, wrapping around the period.
    pub fn disconnection_costs(&self, vsta: usize) -> Result<Vec<f64>> {
        let positions = self.positions(vsta)?;
        let g_total = self.num_slots();
        let costs = positions
            .iter()
            .enumerate()
            .map(|(l, &from)| {
                let to = positions[(l + 1) % positions.len()];
                let mut cost = 0.0;
                let mut j = (from + 1) % g_total;
                while j != to {
                    cost += self.durations[j];
                    j = (j + 1) % g_total;
                }
                cost
            })
            .collect();
        Ok(costs)
    }

    /// Largest disconnection cost of `vsta`; 0 if it owns every slot.
    pub fn max_disconnection(&self, vsta: usize) -> Result<f64> {
        Ok(self
            .disconnection_costs(vsta)?
            .into_iter()
            .fold(0.0, f64::max))
    }

    /// The same cyclic schedule started `k` positions later.
    pub fn rotated(&self, k: usize) -> Self {
        let mut owners = self.owners.clone();
        let len = owners.len();
        owners.rotate_left(k % len);
        let mut rotated = Self::from_slot_sizes(owners, self.slot_sizes.clone())
            .expect("rotation preserves ownership");
        rotated.period = self.period;
        rotated
    }

    /// Text record: a header line followed by one `owner,duration_ms,start_ms`
    /// line per slot, in slot order, owners 0-based.
    pub fn to_record(&self) -> String {
        let mut out = String::from("owner,duration_ms,start_ms\n");
        for ((o, d), s) in self
            .owners
            .iter()
            .zip(&self.durations)
            .zip(&self.start_times)
        {
            writeln!(out, "{o},{d},{s}").expect("writing to a String");
        }
        out
    }

    /// Parses the output of [`SlotSchedule::to_record`].
    pub fn from_record(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "owner,duration_ms,start_ms" => {}
            _ => return Err(Error::InvalidSchedule("missing record header".into())),
        }
        let mut owners = Vec::new();
        let mut sizes: Vec<Option<f64>> = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = || Error::InvalidSchedule(format!("malformed record line {}", n + 2));
            let mut fields = line.split(',').map(str::trim);
            let owner: usize = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let duration: f64 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let _start: f64 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if fields.next().is_some() {
                return Err(bad());
            }
            if sizes.len() <= owner {
                sizes.resize(owner + 1, None);
            }
            match sizes[owner] {
                Some(s) if (s - duration).abs() > TIME_EPS => {
                    return Err(Error::InvalidSchedule(format!(
                        "VSTA {owner} has slots of different durations"
                    )))
                }
                _ => sizes[owner] = Some(duration),
            }
            owners.push(owner);
        }
        let sizes = sizes
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| Error::InvalidSchedule(format!("VSTA {i} owns no slot"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_slot_sizes(owners, sizes)
    }
}

fn weighted_sum(counts: &[usize], sizes: &[f64]) -> f64 {
    counts.iter().zip(sizes).map(|(&c, &s)| c as f64 * s).sum()
}
