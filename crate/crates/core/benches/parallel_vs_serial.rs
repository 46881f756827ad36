//! Rayon data-parallel entry points against their sequential fallbacks.
//! Build with `--no-default-features` to measure the pure-serial core.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use striplab_core::attention::{
    stda_batch, stda_batch_serial, StdaParams, StripDirection, StripParams,
};
use striplab_core::condition_fusion::{
    filter_dataset, filter_dataset_serial, ConditionedSample, FusionParams,
};
use striplab_core::diffusion::extractors::FrameMeanGapScorer;
use striplab_core::diffusion::{
    sliding_windows, sync_loss_over_windows, sync_loss_over_windows_serial,
};
use striplab_core::tensor::Tensor;

fn bench_stda_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = StdaParams::new(
        StripParams::new(
            StripDirection::Horizontal,
            Tensor::random_uniform(&[5, 8], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::random_uniform(&[5], -1.0, 1.0, &mut rng).unwrap(),
        )
        .unwrap(),
        StripParams::new(
            StripDirection::Vertical,
            Tensor::random_uniform(&[5, 8], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::random_uniform(&[5], -1.0, 1.0, &mut rng).unwrap(),
        )
        .unwrap(),
    )
    .unwrap();
    let inputs: Vec<Tensor> = (0..32)
        .map(|_| Tensor::random_uniform(&[8, 24, 24], -1.0, 1.0, &mut rng).unwrap())
        .collect();

    let mut group = c.benchmark_group("stda_batch");
    group.sample_size(20);
    group.bench_with_input(BenchmarkId::new("parallel", 32), &inputs, |b, inputs| {
        b.iter(|| stda_batch(inputs, &params).unwrap())
    });
    group.bench_with_input(BenchmarkId::new("serial", 32), &inputs, |b, inputs| {
        b.iter(|| stda_batch_serial(inputs, &params).unwrap())
    });
    group.finish();
}

fn bench_filter(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = FusionParams::new(
        Tensor::random_uniform(&[32, 16], -1.0, 1.0, &mut rng).unwrap(),
        Tensor::random_uniform(&[32], -1.0, 1.0, &mut rng).unwrap(),
    )
    .unwrap();
    let samples: Vec<ConditionedSample> = (0..512)
        .map(|i| {
            ConditionedSample::new(
                format!("s{i}"),
                Tensor::random_uniform(&[32], -1.0, 1.0, &mut rng).unwrap(),
                Tensor::random_uniform(&[8, 16], -1.0, 1.0, &mut rng).unwrap(),
                Tensor::random_uniform(&[32], -1.0, 1.0, &mut rng).unwrap(),
            )
            .unwrap()
        })
        .collect();

    let mut group = c.benchmark_group("filter_dataset");
    group.sample_size(20);
    group.bench_with_input(BenchmarkId::new("parallel", 512), &samples, |b, s| {
        b.iter(|| filter_dataset(s, &params, 0.3).unwrap())
    });
    group.bench_with_input(BenchmarkId::new("serial", 512), &samples, |b, s| {
        b.iter(|| filter_dataset_serial(s, &params, 0.3).unwrap())
    });
    group.finish();
}

fn bench_window_scores(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let video = Tensor::random_uniform(&[128, 4, 8, 8], -1.0, 1.0, &mut rng).unwrap();
    let audio = Tensor::random_uniform(&[128, 16], -1.0, 1.0, &mut rng).unwrap();
    let windows = sliding_windows(&video, &audio, 1).unwrap();
    let scorer = FrameMeanGapScorer;

    let mut group = c.benchmark_group("window_scores");
    group.sample_size(20);
    group.bench_with_input(
        BenchmarkId::new("parallel", windows.len()),
        &windows,
        |b, ws| b.iter(|| sync_loss_over_windows(ws, &scorer).unwrap()),
    );
    group.bench_with_input(
        BenchmarkId::new("serial", windows.len()),
        &windows,
        |b, ws| b.iter(|| sync_loss_over_windows_serial(ws, &scorer).unwrap()),
    );
    group.finish();
}

criterion_group!(benches, bench_stda_batch, bench_filter, bench_window_scores);
criterion_main!(benches);
