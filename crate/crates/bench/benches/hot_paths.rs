use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use editnet_bench::{corpus, labeled};
use editnet_core::editor::{loss_and_gradients, prepare_inputs};
use editnet_core::oracle::enumerate_rewards;
use editnet_core::summarizers::{abstract_all, extract_lead};
use editnet_core::{reward, EditorParams, EncoderConfig, RewardWeights, SalienceAbstractor};

fn rouge(c: &mut Criterion) {
    let examples = corpus(1);
    let ex = &examples[0];
    let candidate: Vec<_> = ex.document.sentences().iter().map(|s| s.tokens.clone()).collect();
    let weights = RewardWeights::default();
    c.bench_function("reward", |b| {
        b.iter(|| reward(black_box(&candidate), &ex.reference, &weights))
    });
}

fn enumeration(c: &mut Criterion) {
    let examples = corpus(1);
    let ex = &examples[0];
    let weights = RewardWeights::default();
    let mut group = c.benchmark_group("enumerate_rewards");
    for l in [3usize, 6] {
        let extract = extract_lead(&ex.document, l).unwrap();
        let abstractions = abstract_all(&ex.document, &extract, &SalienceAbstractor::default()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(l), &l, |b, _| {
            b.iter(|| enumerate_rewards(ex, &extract, &abstractions, |s, r| reward(s, r, &weights), 12).unwrap())
        });
    }
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let examples = corpus(1);
    let l = labeled(&examples[0], 6);
    let encoder = EncoderConfig::default();
    let inputs = prepare_inputs(&examples[0].document, &l.extract, &l.abstractions, &encoder).unwrap();
    let params = EditorParams::init(64, encoder.n, 1);
    c.bench_function("loss_and_gradients", |b| {
        b.iter(|| loss_and_gradients(black_box(&inputs), &l.labels, &params, true).unwrap())
    });
}

criterion_group!(benches, rouge, enumeration, gradients);
criterion_main!(benches);
