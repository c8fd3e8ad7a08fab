use std::hint::black_box;
use std::num::NonZeroUsize;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use cryptohalal_bench::{defi_page, large_page, reference_sized_dataset};
use cryptohalal_core::eval::cross_validate;
use cryptohalal_core::learners::{train, ModelKind};
use cryptohalal_core::textprep::Preprocessor;
use cryptohalal_core::Lexicon;

fn text(c: &mut Criterion) {
    let pre = Preprocessor::default();
    let lexicon = Lexicon::default();
    let mut g = c.benchmark_group("text");
    for kib in [8, 256] {
        let doc = large_page(kib);
        g.throughput(Throughput::Bytes(doc.content.len() as u64));
        g.bench_with_input(BenchmarkId::new("preprocess", kib), &doc, |b, doc| {
            b.iter(|| pre.preprocess(black_box(doc)).unwrap())
        });
    }
    let stems = pre.preprocess(&defi_page()).unwrap();
    g.throughput(Throughput::Elements(stems.len() as u64));
    g.bench_function("extract", |b| b.iter(|| lexicon.extract(black_box(&stems), NonZeroUsize::MIN)));
    g.finish();
}

fn learners(c: &mut Criterion) {
    let d = reference_sized_dataset();
    let mut g = c.benchmark_group("train");
    for kind in ModelKind::ALL {
        g.bench_function(kind.as_str(), |b| b.iter(|| train(black_box(&d), kind.default_hyperparams()).unwrap()));
    }
    g.finish();

    let mut g = c.benchmark_group("cross_validate_10");
    g.sample_size(20);
    for kind in ModelKind::ALL {
        g.bench_function(kind.as_str(), |b| {
            b.iter(|| cross_validate(black_box(&d), kind.default_hyperparams(), 10, 42).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, text, learners);
criterion_main!(benches);
