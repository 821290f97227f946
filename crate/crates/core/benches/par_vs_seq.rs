use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use stylemap::bank::StyleBank;
use stylemap::data::Dataset;
use stylemap::interpret::{wsam, WsamOptions};
use stylemap::par::Exec;
use stylemap::style::{Alpha, EngineConfig, StyleEngine};
use stylemap::synth::{shape_image, style_image, SHAPE_CLASSES};
use stylemap::train::{evaluate_clean, styled_accuracies, Classifier, ModelConfig};

fn dataset(per_class: usize) -> Dataset {
    let mut ds = Dataset { images: vec![], labels: vec![], ids: vec![], class_names: vec![] };
    for (c, name) in SHAPE_CLASSES.iter().enumerate() {
        ds.class_names.push(name.to_string());
        for i in 0..per_class {
            ds.images.push(shape_image(c, 32, (c * 1000 + i) as u64));
            ds.labels.push(c);
            ds.ids.push(format!("{name}/{i}"));
        }
    }
    ds
}

fn modes() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn bench(c: &mut Criterion) {
    let data = dataset(4);
    let clf = Classifier::new(&ModelConfig::default(), data.class_names.clone(), 32, 0).unwrap();
    let engine = StyleEngine::new(EngineConfig { resolution: 32, ..EngineConfig::default() }, 0).unwrap();
    let entries = (0..4).map(|i| engine.embed_style(&style_image(32, i), &format!("s{i}")).unwrap()).collect();
    let bank = StyleBank::from_entries(entries, &engine, 0).unwrap();
    let styles: Vec<_> = bank.entries().iter().collect();
    let half = Alpha::new(0.5).unwrap();

    let mut g = c.benchmark_group("clean_eval");
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| b.iter(|| evaluate_clean(&clf, black_box(&data), e)));
    }
    g.finish();

    let mut g = c.benchmark_group("styled_sweep");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| styled_accuracies(&[&clf], black_box(&data), &engine, &bank, half, e).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("wsam_grid");
    g.sample_size(10);
    for (name, exec) in modes() {
        let opts = WsamOptions { exec, ..Default::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, o| {
            b.iter(|| wsam(&clf, &engine, black_box(&data.images[0]), "0", 0, &styles, o).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
