//! Parallel vs sequential comparison of the three data-parallel hot paths:
//! group closure, the finite-field prime sweep, and the conjugacy scan.
//! With `--no-default-features` every path degrades to the sequential one.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use markov_groups::conjtest::{distinct_small_subgroups, scan_property_p_against};
use markov_groups::ffdyn::{empirical_level_data, FamilyKind, PcfFamily, SweepConfig};
use markov_groups::groupcalc::{ElementSet, EnumConfig};
use markov_groups::markovmap::build_generators;

fn configs() -> Vec<(&'static str, EnumConfig)> {
    let mut v = vec![("sequential", EnumConfig::sequential())];
    if cfg!(feature = "parallel") {
        v.push(("parallel", EnumConfig::default()));
    }
    v
}

fn bench_closure(c: &mut Criterion) {
    let mut group = c.benchmark_group("closure");
    group.sample_size(10);
    // The minus-two family at level 5: 131072 elements.
    let gens = build_generators(3, 5).unwrap().group_gens();
    for (name, cfg) in configs() {
        group.bench_with_input(
            BenchmarkId::new("minus_two_level5", name),
            &cfg,
            |b, cfg| {
                b.iter(|| {
                    let set = ElementSet::closure(&gens, cfg).unwrap();
                    assert_eq!(set.len(), 1 << 17);
                })
            },
        );
    }
    group.finish();
}

fn bench_histogram_closure(c: &mut Criterion) {
    let mut group = c.benchmark_group("closure_histogram");
    group.sample_size(10);
    let gens = build_generators(5, 4).unwrap().group_gens();
    for (name, cfg) in configs() {
        group.bench_with_input(
            BenchmarkId::new("minus_one_level4", name),
            &cfg,
            |b, cfg| {
                b.iter(|| {
                    let (set, hist) = ElementSet::closure_histogram(&gens, cfg).unwrap();
                    assert_eq!(set.len(), 4096);
                    assert_eq!(hist.values().sum::<u64>(), 4096);
                })
            },
        );
    }
    group.finish();
}

fn bench_prime_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("prime_sweep");
    group.sample_size(10);
    let fam = PcfFamily::new(FamilyKind::SquareMinusOne, 5).unwrap();
    for parallel in [false, true] {
        if parallel && !cfg!(feature = "parallel") {
            continue;
        }
        let name = if parallel { "parallel" } else { "sequential" };
        let sweep = SweepConfig {
            parallel,
            ..Default::default()
        };
        group.bench_with_input(
            BenchmarkId::new("minus_one_level3_20k", name),
            &sweep,
            |b, sweep| {
                b.iter(|| {
                    let data = empirical_level_data(&fam, 3, 20_000, 1, sweep).unwrap();
                    assert!(data.total_primes > 1000);
                })
            },
        );
    }
    group.finish();
}

fn bench_conjugacy_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("conjugacy_scan");
    group.sample_size(10);
    let target = ElementSet::closure(
        &build_generators(5, 3).unwrap().group_gens(),
        &EnumConfig::sequential(),
    )
    .unwrap();
    for (name, cfg) in configs() {
        group.bench_with_input(
            BenchmarkId::new("level3_all_subgroups", name),
            &cfg,
            |b, cfg| {
                b.iter(|| {
                    let subgroups = distinct_small_subgroups(3, cfg).unwrap();
                    let report = scan_property_p_against(5, &target, &subgroups, cfg).unwrap();
                    assert!(report.violations.is_empty());
                })
            },
        );
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_closure,
    bench_histogram_closure,
    bench_prime_sweep,
    bench_conjugacy_scan
);
criterion_main!(benches);
