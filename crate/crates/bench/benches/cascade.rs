use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use qcascade::{
    auc, build_curve_k1, confidence, run_offline, sweep_multi, AccuracyCostCurve, ConfidenceMethod,
    CurvePoint, CurveReduction, Grid, TokenProbs,
};
use qcascade_bench::{policy, synthetic_log};

fn bench_confidence(c: &mut Criterion) {
    let probs = TokenProbs::new((1..=32).map(|i| 1.0 - f64::from(i) * 0.01).collect()).unwrap();
    let mut group = c.benchmark_group("confidence");
    for method in ConfidenceMethod::ALL {
        group.bench_function(method.as_str(), |b| b.iter(|| confidence(method, black_box(&probs))));
    }
    group.finish();
}

fn bench_run_offline(c: &mut Criterion) {
    let log = synthetic_log(10_000);
    let k2 = policy(&["cb", "ob10", "ob20"], 0.5);
    c.bench_function("run_offline/10k_k2", |b| b.iter(|| run_offline(black_box(&log), &k2).unwrap()));
}

fn bench_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for n in [1_000, 10_000] {
        let log = synthetic_log(n);
        let k1 = policy(&["cb", "ob20"], 0.5);
        group.bench_with_input(BenchmarkId::new("k1_exhaustive", n), &log, |b, log| {
            b.iter(|| build_curve_k1(log, &k1, CurveReduction::Pareto).unwrap())
        });
    }
    let log = synthetic_log(2_000);
    let k2 = policy(&["cb", "ob10", "ob20"], 0.5);
    group.bench_function("k2_quantiles50/2000", |b| {
        b.iter(|| sweep_multi(&log, &k2, Grid::Quantiles(50), CurveReduction::Pareto).unwrap())
    });
    group.finish();
}

fn bench_auc(c: &mut Criterion) {
    let points = (0..10_000)
        .map(|i| {
            let x = f64::from(i) / 10_000.0;
            CurvePoint::new(x * 20e11, 0.3 + 0.2 * x.sqrt())
        })
        .collect();
    let curve = AccuracyCostCurve::from_points(points).unwrap();
    c.bench_function("auc/10k_points", |b| b.iter(|| auc(black_box(&curve), None).unwrap()));
}

criterion_group!(benches, bench_confidence, bench_run_offline, bench_sweeps, bench_auc);
criterion_main!(benches);
