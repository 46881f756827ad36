//! Timing-stability check, isolated in its own test binary so no sibling
//! test threads pollute the measurements.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use striplab_core::attention::{stda, StdaParams, StripDirection, StripParams};
use striplab_core::tensor::Tensor;

fn median(samples: &[u64]) -> u64 {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    sorted[sorted.len() / 2]
}

/// Doubling the repetition count moves the median by less than 20%.
///
/// Both estimates come from one contiguous sample stream (the doubled run
/// is the full stream, the base run its first half), so they face the same
/// machine state; comparing two separate wall-clock runs on shared hardware
/// measures scheduler epochs, not the estimator.
#[test]
fn doubling_repetitions_keeps_medians_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (c, k, side) = (32usize, 7usize, 32usize);
    let params = StdaParams::new(
        StripParams::new(
            StripDirection::Horizontal,
            Tensor::random_uniform(&[k, c], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::random_uniform(&[k], -1.0, 1.0, &mut rng).unwrap(),
        )
        .unwrap(),
        StripParams::new(
            StripDirection::Vertical,
            Tensor::random_uniform(&[k, c], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::random_uniform(&[k], -1.0, 1.0, &mut rng).unwrap(),
        )
        .unwrap(),
    )
    .unwrap();
    let x = Tensor::random_uniform(&[c, side, side], -1.0, 1.0, &mut rng).unwrap();

    // Warm for at least 10ms and estimate the per-call cost.
    let warm = Instant::now();
    let mut warm_calls = 0u64;
    while warm_calls < 2 || warm.elapsed().as_millis() < 10 {
        std::hint::black_box(stda(&x, &params).unwrap());
        warm_calls += 1;
    }
    let est_ns = (warm.elapsed().as_nanos() as u64 / warm_calls).max(1);
    let iters = (2_000_000 / est_ns).max(1);

    let samples: Vec<u64> = (0..10)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..iters {
                std::hint::black_box(stda(&x, &params).unwrap());
            }
            start.elapsed().as_nanos() as u64 / iters
        })
        .collect();

    let base = median(&samples[..5]);
    let doubled = median(&samples);
    let (fast, slow) = (base.min(doubled) as f64, base.max(doubled) as f64);
    let drift = slow / fast - 1.0;
    assert!(
        drift < 0.20,
        "median of 5 reps {} ns vs 10 reps {} ns: drift {:.1}%",
        base,
        doubled,
        drift * 100.0
    );
}
