//! Slot allocation strategies: the min-max disconnection heuristic, exhaustive
//! optimisation of the blind objectives, and the Monte-Carlo upper bound.

use std::collections::HashMap;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::par::map_collect;
use crate::rtt::{
    check_paths, estimate_vsta, mathis_or_unbounded, Connectivity, PathParams, RttSamplerConfig,
    VstaEstimate,
};
use crate::schedule::{SlotPlan, SlotSchedule};

pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1_000_000;
pub const DEFAULT_COMBINATION_BUDGET: u128 = 1_000_000;

/// Relative slack under which two blind objective values count as a tie.
const OBJECTIVE_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub schedule: SlotSchedule,
    pub per_vsta_max_disconnection: Vec<f64>,
    pub objective_value: f64,
    /// Candidate schedules (or position sets, for the heuristic) examined.
    pub evaluations: u64,
}

impl AllocationResult {
    fn new(schedule: SlotSchedule, objective_value: f64, evaluations: u64) -> Self {
        let per_vsta_max_disconnection = max_disconnections(&schedule);
        Self {
            schedule,
            per_vsta_max_disconnection,
            objective_value,
            evaluations,
        }
    }
}

fn max_disconnections(schedule: &SlotSchedule) -> Vec<f64> {
    (0..schedule.num_vstas())
        .map(|i| {
            schedule
                .max_disconnection(i)
                .expect("every VSTA of a schedule owns a slot")
        })
        .collect()
}

/// `Σ_i 1 / max_l c_{i,l}`, the delay-agnostic objective (ms⁻¹).
pub fn eq2_objective(schedule: &SlotSchedule) -> f64 {
    max_disconnections(schedule).iter().map(|c| 1.0 / c).sum()
}

/// Throughput lost to disconnection under the worst-case RTT model:
/// `Σ_i MSS/(d_i √p_i) − MSS/((d_i + max_l c_{i,l}) √p_i)` in bits/s.
pub fn eq1_penalty(schedule: &SlotSchedule, paths: &[PathParams]) -> Result<f64> {
    check_paths(schedule, paths)?;
    let mut total = 0.0;
    for (i, p) in paths.iter().enumerate() {
        let c = schedule.max_disconnection(i)?;
        if c > 0.0 {
            total += mathis_or_unbounded(p.mss, p.delay, p.loss)?
                - mathis_or_unbounded(p.mss, p.delay + c, p.loss)?;
        }
    }
    Ok(total)
}

/// Worst-case-RTT throughput `Σ_i MSS/((d_i + max c) √p_i)`. Maximising it is
/// the same as minimising [`eq1_penalty`], and it stays finite at `d_i = 0`.
fn eq1_score(schedule: &SlotSchedule, paths: &[PathParams]) -> Result<f64> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let c = schedule.max_disconnection(i)?;
            mathis_or_unbounded(p.mss, p.delay + c, p.loss)
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Min-max disconnection heuristic

#[derive(Debug, Clone, Copy)]
pub struct MinMaxOptions {
    /// Above this many position combinations a VSTA falls back to greedy
    /// nearest-to-ideal placement.
    pub combination_budget: u128,
}

impl Default for MinMaxOptions {
    fn default() -> Self {
        Self {
            combination_budget: DEFAULT_COMBINATION_BUDGET,
        }
    }
}

pub fn minmax_allocate(plan: &SlotPlan) -> AllocationResult {
    minmax_allocate_with(plan, MinMaxOptions::default())
}

/// VSTAs are served in descending slot count (ties by index). The first gets
/// evenly spread positions, each following one picks among the free positions
/// the set with the smallest maximum circular index gap, and the last takes
/// whatever remains.
pub fn minmax_allocate_with(plan: &SlotPlan, opts: MinMaxOptions) -> AllocationResult {
    let total = plan.total_slots();
    let counts = plan.slot_counts();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(counts[i]), i));

    let mut owners: Vec<Option<usize>> = vec![None; total];
    let mut evaluations = 0u64;

    for (step, &vsta) in order.iter().enumerate() {
        let free: Vec<usize> = (0..total).filter(|&j| owners[j].is_none()).collect();
        let chosen = if step + 1 == order.len() {
            evaluations += 1;
            free
        } else if step == 0 {
            evaluations += 1;
            even_positions(total, counts[vsta])
        } else {
            let (chosen, evals) = min_max_gap_positions(&free, counts[vsta], total, opts);
            evaluations += evals;
            chosen
        };
        debug_assert_eq!(chosen.len(), counts[vsta]);
        for j in chosen {
            debug_assert!(owners[j].is_none());
            owners[j] = Some(vsta);
        }
    }

    let owners = owners
        .into_iter()
        .map(|o| o.expect("every position is assigned"))
        .collect();
    let schedule = SlotSchedule::from_plan(plan, owners).expect("heuristic respects slot counts");
    let objective = eq2_objective(&schedule);
    AllocationResult::new(schedule, objective, evaluations)
}

/// Positions `round(1 + k·G/g) − 1` for `k = 0..g`, rounding ties to even.
fn even_positions(total: usize, g: usize) -> Vec<usize> {
    let spacing = total as f64 / g as f64;
    let mut positions: Vec<usize> = (0..g)
        .map(|k| (1.0 + k as f64 * spacing).round_ties_even() as usize - 1)
        .map(|p| p.min(total - 1))
        .collect();
    positions.dedup();
    let mut next = 0;
    while positions.len() < g {
        if !positions.contains(&next) {
            positions.push(next);
        }
        next += 1;
    }
    positions.sort_unstable();
    positions
}

/// Largest circular index distance between consecutive positions; `total` for a
/// single position.
pub(crate) fn max_circular_gap(positions: &[usize], total: usize) -> usize {
    positions
        .iter()
        .enumerate()
        .map(|(l, &p)| {
            let next = positions[(l + 1) % positions.len()];
            (next + total - p - 1) % total + 1
        })
        .max()
        .unwrap_or(total)
}

fn min_max_gap_positions(
    free: &[usize],
    g: usize,
    total: usize,
    opts: MinMaxOptions,
) -> (Vec<usize>, u64) {
    let combos = binomial(free.len() as u128, g as u128);
    if combos > opts.combination_budget {
        return (greedy_positions(free, g, total), free.len() as u64);
    }
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut evaluations = 0u64;
    for combo in free.iter().copied().combinations(g) {
        evaluations += 1;
        let gap = max_circular_gap(&combo, total);
        if best.as_ref().is_none_or(|(b, _)| gap < *b) {
            best = Some((gap, combo));
        }
    }
    (best.map(|(_, c)| c).unwrap_or_default(), evaluations)
}

/// Takes, for each evenly spaced target, the nearest still-free position.
fn greedy_positions(free: &[usize], g: usize, total: usize) -> Vec<usize> {
    let anchor = free[0] as f64;
    let spacing = total as f64 / g as f64;
    let mut available = free.to_vec();
    let mut chosen = Vec::with_capacity(g);
    for k in 0..g {
        let target = (anchor + k as f64 * spacing) % total as f64;
        let (idx, _) = available
            .iter()
            .enumerate()
            .map(|(idx, &p)| {
                let d = (p as f64 - target).abs();
                (idx, d.min(total as f64 - d))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("enough free positions");
        chosen.push(available.remove(idx));
    }
    chosen.sort_unstable();
    chosen
}

/// `C(n, k)`, saturating at `u128::MAX`.
fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        match acc.checked_mul(n - i) {
            Some(v) => acc = v / (i + 1),
            None => return u128::MAX,
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Enumeration

/// `G! / Π g_i!`, saturating at `u128::MAX`.
pub fn multinomial(counts: &[usize]) -> u128 {
    let mut remaining: u128 = counts.iter().map(|&c| c as u128).sum();
    let mut acc: u128 = 1;
    for &c in counts {
        acc = acc.saturating_mul(binomial(remaining, c as u128));
        remaining -= c as u128;
    }
    acc
}

/// Distinct permutations of a multiset in lexicographic order.
#[derive(Debug, Clone)]
pub struct MultisetPermutations {
    next: Option<Vec<usize>>,
}

impl MultisetPermutations {
    pub fn new(mut items: Vec<usize>) -> Self {
        items.sort_unstable();
        Self { next: Some(items) }
    }
}

impl Iterator for MultisetPermutations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if next_permutation(&mut succ) {
            self.next = Some(succ);
        }
        Some(current)
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationOptions {
    pub budget: u128,
    /// Keep only the lexicographically smallest rotation of each schedule.
    pub collapse_rotations: bool,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_ENUMERATION_BUDGET,
            collapse_rotations: false,
        }
    }
}

/// Every owner vector of `plan` in lexicographic order.
pub fn enumerate_owner_vectors(
    plan: &SlotPlan,
    opts: EnumerationOptions,
) -> Result<Vec<Vec<usize>>> {
    let count = multinomial(plan.slot_counts());
    if count > opts.budget {
        return Err(Error::BudgetExceeded {
            count,
            budget: opts.budget,
        });
    }
    let items = plan
        .slot_counts()
        .iter()
        .enumerate()
        .flat_map(|(i, &g)| std::iter::repeat_n(i, g))
        .collect();
    let perms = MultisetPermutations::new(items);
    Ok(if opts.collapse_rotations {
        perms.filter(|o| is_canonical_rotation(o)).collect()
    } else {
        perms.collect()
    })
}

fn is_canonical_rotation(owners: &[usize]) -> bool {
    (1..owners.len()).all(|k| {
        let rotated = owners[k..].iter().chain(&owners[..k]);
        owners.iter().cmp(rotated) != std::cmp::Ordering::Greater
    })
}

/// Lazily materialised schedules of a plan.
pub struct ScheduleEnumeration<'a> {
    plan: &'a SlotPlan,
    owners: std::vec::IntoIter<Vec<usize>>,
    count: usize,
}

impl ScheduleEnumeration<'_> {
    pub fn count(&self) -> usize {
        self.count
    }
}

impl Iterator for ScheduleEnumeration<'_> {
    type Item = SlotSchedule;

    fn next(&mut self) -> Option<SlotSchedule> {
        self.owners
            .next()
            .map(|o| SlotSchedule::from_plan(self.plan, o).expect("enumeration respects the plan"))
    }
}

pub fn enumerate_schedules(
    plan: &SlotPlan,
    opts: EnumerationOptions,
) -> Result<ScheduleEnumeration<'_>> {
    let owners = enumerate_owner_vectors(plan, opts)?;
    let count = owners.len();
    Ok(ScheduleEnumeration {
        plan,
        owners: owners.into_iter(),
        count,
    })
}

// ---------------------------------------------------------------------------
// Exhaustive optimisation

#[derive(Debug, Clone, Copy)]
pub enum BlindObjective<'a> {
    /// Maximise `Σ 1/max c`; needs no path knowledge.
    Eq2,
    /// Minimise the worst-case Mathis throughput penalty for these paths.
    Eq1(&'a [PathParams]),
}

/// Keeps the first (lexicographically smallest) schedule among near-ties.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &s) in scores.iter().enumerate().skip(1) {
        let b = scores[best];
        let better = if b.is_infinite() || s.is_infinite() {
            s > b
        } else {
            s > b + OBJECTIVE_TIE * b.abs().max(s.abs())
        };
        if better {
            best = idx;
        }
    }
    best
}

pub fn blind_allocate(
    plan: &SlotPlan,
    objective: BlindObjective<'_>,
    opts: EnumerationOptions,
) -> Result<AllocationResult> {
    if let BlindObjective::Eq1(paths) = objective {
        if paths.len() != plan.num_vstas() {
            return Err(Error::MissingPaths {
                expected: plan.num_vstas(),
                got: paths.len(),
            });
        }
        paths.iter().try_for_each(PathParams::validate)?;
    }
    let owners = enumerate_owner_vectors(plan, opts)?;
    let scores = map_collect(&owners, |o| {
        let schedule = SlotSchedule::from_plan(plan, o.clone()).expect("enumerated schedule");
        match objective {
            BlindObjective::Eq2 => Ok(eq2_objective(&schedule)),
            BlindObjective::Eq1(paths) => eq1_score(&schedule, paths),
        }
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let best = argmax(&scores);
    let schedule = SlotSchedule::from_plan(plan, owners[best].clone())?;
    let value = match objective {
        BlindObjective::Eq2 => scores[best],
        BlindObjective::Eq1(paths) => eq1_penalty(&schedule, paths)?,
    };
    Ok(AllocationResult::new(schedule, value, owners.len() as u64))
}

// ---------------------------------------------------------------------------
// Monte-Carlo upper bound

/// Identifies one VSTA's connectivity pattern; schedules sharing it yield
/// identical samples for that VSTA.
type PatternKey = (usize, Vec<u64>);

fn pattern_key(conn: &Connectivity, vsta: usize) -> PatternKey {
    let bits = conn
        .intervals()
        .iter()
        .flat_map(|iv| [iv.start.to_bits(), iv.end.to_bits()])
        .collect();
    (vsta, bits)
}

/// Exhaustive maximiser of the sampled aggregate throughput. Returns the
/// result together with every enumerated schedule's aggregate, in enumeration
/// order.
pub fn upper_bound_search(
    plan: &SlotPlan,
    paths: &[PathParams],
    cfg: &RttSamplerConfig,
    opts: EnumerationOptions,
) -> Result<(AllocationResult, Vec<f64>)> {
    if paths.len() != plan.num_vstas() {
        return Err(Error::MissingPaths {
            expected: plan.num_vstas(),
            got: paths.len(),
        });
    }
    paths.iter().try_for_each(PathParams::validate)?;
    cfg.validate()?;
    let owners = enumerate_owner_vectors(plan, opts)?;

    // Distinct per-VSTA patterns, sampled once each.
    let mut keys_per_schedule = Vec::with_capacity(owners.len());
    let mut unique: HashMap<PatternKey, usize> = HashMap::new();
    let mut patterns: Vec<(usize, Connectivity)> = Vec::new();
    for o in &owners {
        let schedule = SlotSchedule::from_plan(plan, o.clone())?;
        let mut keys = Vec::with_capacity(plan.num_vstas());
        for vsta in 0..plan.num_vstas() {
            let conn = Connectivity::new(&schedule, vsta)?;
            let key = pattern_key(&conn, vsta);
            let next = patterns.len();
            let idx = *unique.entry(key).or_insert_with(|| {
                patterns.push((vsta, conn));
                next
            });
            keys.push(idx);
        }
        keys_per_schedule.push(keys);
    }
    let estimates = map_collect(&patterns, |(vsta, conn)| {
        estimate_vsta(conn, *vsta, &paths[*vsta], cfg)
    })
    .into_iter()
    .collect::<Result<Vec<VstaEstimate>>>()?;

    let aggregates: Vec<f64> = keys_per_schedule
        .iter()
        .map(|keys| keys.iter().map(|&k| estimates[k].throughput).sum())
        .collect();
    let mut best = 0;
    for (idx, &a) in aggregates.iter().enumerate() {
        if a > aggregates[best] {
            best = idx;
        }
    }
    let schedule = SlotSchedule::from_plan(plan, owners[best].clone())?;
    let result = AllocationResult::new(schedule, aggregates[best], owners.len() as u64);
    Ok((result, aggregates))
}

pub fn upper_bound_allocate(
    plan: &SlotPlan,
    paths: &[PathParams],
    cfg: &RttSamplerConfig,
    opts: EnumerationOptions,
) -> Result<AllocationResult> {
    upper_bound_search(plan, paths, cfg, opts).map(|(r, _)| r)
}
