use criterion::{criterion_group, criterion_main, Criterion};
use trendcause::forecast::{CoherentConfig, Forecaster, ModelSpec};
use trendcause::influence::GrangerConfig;
use trendcause_bench::fixture;

fn fit(c: &mut Criterion, group: &str, names: &[&str]) {
    let ts = fixture(4, 4, 200);
    let (g, cfg) = (GrangerConfig::default(), CoherentConfig::default());
    let mut group = c.benchmark_group(group);
    group.sample_size(10);
    for name in names {
        let spec = ModelSpec::by_name(name, 0, &g, &cfg).unwrap();
        group.bench_function(*name, |b| b.iter(|| spec.fit(&ts).unwrap().forecast(&ts, 26).unwrap()));
    }
    group.finish();
}

fn baselines(c: &mut Criterion) {
    fit(c, "baselines", &["naive-seasonal", "ar", "arima", "expsmooth", "geomodel", "var-units"]);
}

fn coherent(c: &mut Criterion) {
    fit(c, "coherent", &["no-influence", "unit-influence", "combined"]);
}

criterion_group!(benches, baselines, coherent);
criterion_main!(benches);
