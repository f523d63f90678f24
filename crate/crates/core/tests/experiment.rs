use minislot::experiment::{
    builtin_scenarios, emit_csv, parse_scenario, run_scenario, Algorithm, ResultTable, Scenario,
};

fn case(name: &str, algorithms: &[Algorithm], samples: usize) -> Scenario {
    let mut s = builtin_scenarios(name).unwrap().remove(0);
    s.algorithms = algorithms.to_vec();
    s.sampler.n_samples = samples;
    s
}

fn ratios(table: &ResultTable, algorithm: Algorithm) -> Vec<(f64, f64)> {
    table
        .aggregate_rows()
        .filter(|r| r.algorithm == algorithm)
        .map(|r| (r.base_delay, r.ratio_vs_nopolicy))
        .collect()
}

#[test]
fn case2_offsets_shift_the_delays() {
    let s = case("case2", &[Algorithm::NoPolicy], 100);
    let paths = s.paths_at(30.0).unwrap();
    let delays: Vec<f64> = paths.iter().map(|p| p.delay).collect();
    assert_eq!(delays, [30.0, 50.0, 70.0]);
}

#[test]
fn mean_rtt_never_below_effective_delay() {
    for name in ["case1", "case2", "case3"] {
        let s = case(
            name,
            &[Algorithm::NoPolicy, Algorithm::MinMax, Algorithm::Eq2],
            1000,
        );
        let table = run_scenario(&s).unwrap();
        for r in table.rows.iter().filter(|r| r.vsta.is_some()) {
            let v = r.vsta.unwrap();
            let effective = r.base_delay + s.delay_offsets[v];
            assert!(r.mean_rtt.unwrap() >= effective, "{name} {r:?}");
        }
    }
}

#[test]
fn nopolicy_ratio_is_exactly_one() {
    let s = case("case3", &[Algorithm::NoPolicy, Algorithm::MinMax], 500);
    let table = run_scenario(&s).unwrap();
    let nopolicy: Vec<_> = table
        .rows
        .iter()
        .filter(|r| r.algorithm == Algorithm::NoPolicy)
        .collect();
    assert_eq!(nopolicy.len(), 41 * 4);
    assert!(nopolicy.iter().all(|r| r.ratio_vs_nopolicy == 1.0));
}

#[test]
fn aggregate_is_sum_of_vstas() {
    let s = case("case2", &[Algorithm::MinMax], 500);
    let table = run_scenario(&s).unwrap();
    for chunk in table.rows.chunks(4) {
        let (vstas, all) = chunk.split_at(3);
        let sum: f64 = vstas.iter().map(|r| r.throughput).sum();
        assert!(all[0].vsta.is_none());
        if sum.is_finite() {
            assert!((all[0].aggregate - sum).abs() <= 1e-9 * sum);
        }
    }
}

/// Case 2 min-max beats the contiguous schedule from 20 ms on. At 10 and
/// 15 ms VSTA 0's ACKs miss its short slots and the contiguous 50 ms window
/// wins.
#[test]
fn case2_minmax_ratio() {
    let s = case("case2", &[Algorithm::NoPolicy, Algorithm::MinMax], 10_000);
    let table = run_scenario(&s).unwrap();
    let r = ratios(&table, Algorithm::MinMax);
    for &(d, ratio) in &r {
        if d >= 20.0 {
            assert!(ratio >= 1.0, "ratio {ratio} at {d} ms");
        }
    }
    let at = |d: f64| r.iter().find(|x| x.0 == d).unwrap().1;
    assert!(at(10.0) < 1.0 && at(15.0) < 1.0);
    let max = r
        .iter()
        .map(|x| x.1)
        .filter(|x| x.is_finite())
        .fold(0.0, f64::max);
    assert!(max > 1.2, "max ratio {max}");
}

/// Two VSTAs with the same duty cycle and path draw from different seeds,
/// so the aggregate is twice either one only up to sampling error.
#[test]
fn two_identical_vstas_double_the_single() {
    let two = parse_scenario(
        "duty_cycles = [0.5, 0.5]\nslot_time_ms = 20\ndelays_ms = [30]\nalgorithms = [\"nopolicy\"]\n",
        "two",
    )
    .unwrap();
    let table = run_scenario(&two).unwrap();
    let rows: Vec<_> = table.rows.iter().filter(|r| r.vsta.is_some()).collect();
    let (a, b) = (rows[0].throughput, rows[1].throughput);
    let aggregate = table.aggregate(Algorithm::NoPolicy, 30.0).unwrap();
    assert_eq!(aggregate, a + b);
    assert!((a - b).abs() / a < 0.02, "{a} vs {b}");
}

#[test]
fn csv_is_sorted_and_deterministic() {
    let s = case(
        "case2",
        &[Algorithm::UpperBound, Algorithm::NoPolicy, Algorithm::Eq1],
        300,
    );
    let a = emit_csv(&run_scenario(&s).unwrap());
    let b = emit_csv(&run_scenario(&s).unwrap());
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().skip(1).collect();
    assert_eq!(lines.len(), 41 * 3 * 4);
    assert!(lines[0].starts_with("case2,eq1,0,0,"));
    assert!(lines[3].starts_with("case2,eq1,0,all,,"));
    assert!(lines[4].starts_with("case2,nopolicy,0,0,"));
    assert!(lines[8].starts_with("case2,upperbound,0,0,"));
    assert!(lines[12].starts_with("case2,eq1,5,0,"));
}

#[test]
fn fig5_expands_per_disconnection() {
    let all = builtin_scenarios("fig5").unwrap();
    let names: Vec<&str> = all.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "fig5-disc0",
            "fig5-disc15",
            "fig5-disc25",
            "fig5-disc50",
            "fig5-disc75"
        ]
    );
    for s in &all {
        let plan = s.plan().unwrap();
        let off = plan.period() - plan.slot_counts()[0] as f64 * plan.slot_sizes()[0];
        let expected: f64 = s.name.trim_start_matches("fig5-disc").parse().unwrap();
        assert!((off - expected).abs() < 1e-9, "{}: {off}", s.name);
    }
}
