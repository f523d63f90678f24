use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use minislot::allocation::{
    blind_allocate, upper_bound_allocate, BlindObjective, EnumerationOptions,
};
use minislot::experiment::{builtin_scenarios, run_scenario, Algorithm};
use minislot::rtt::{PathParams, RttSamplerConfig};
use minislot::schedule::{DutyCycleSet, SlotPlan};

fn plan(f: &[f64], slot_time: f64) -> SlotPlan {
    SlotPlan::derive(&DutyCycleSet::new(f.to_vec()).unwrap(), slot_time).unwrap()
}

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let full = rayon::current_num_threads();
    let mut sizes = vec![1, full];
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap();
            (format!("{n}-threads"), pool)
        })
        .collect()
}

fn bench_enumeration(c: &mut Criterion) {
    let case1 = plan(&[0.5, 0.125, 0.125, 0.125, 0.125], 15.0);
    let case3 = plan(&[0.65, 0.25, 0.10], 10.0);
    let paths: Vec<PathParams> = [40.0, 60.0, 80.0]
        .iter()
        .map(|&d| PathParams::with_delay(d).unwrap())
        .collect();
    let cfg = RttSamplerConfig {
        n_samples: 2_000,
        ..Default::default()
    };
    let opts = EnumerationOptions::default();

    let mut group = c.benchmark_group("enumeration");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("eq2_case1", &label), |b| {
            b.iter(|| pool.install(|| blind_allocate(&case1, BlindObjective::Eq2, opts).unwrap()))
        });
        group.bench_function(BenchmarkId::new("upperbound_case3", &label), |b| {
            b.iter(|| pool.install(|| upper_bound_allocate(&case3, &paths, &cfg, opts).unwrap()))
        });
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let mut scenario = builtin_scenarios("case2").unwrap().remove(0);
    scenario.algorithms = vec![Algorithm::NoPolicy, Algorithm::MinMax, Algorithm::Eq2];
    scenario.sampler.n_samples = 2_000;

    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("case2", &label), |b| {
            b.iter(|| pool.install(|| run_scenario(&scenario).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_enumeration, bench_sweep);
criterion_main!(benches);
