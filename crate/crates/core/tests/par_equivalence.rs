//! The data-parallel entry points must be bit-identical to their sequential
//! fallbacks. With `--no-default-features` both sides are the same code and
//! these hold trivially; with the default `parallel` feature they pin down
//! the order-preserving reduction contract.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use striplab_core::attention::{
    stda_batch, stda_batch_serial, StdaParams, StripDirection, StripParams,
};
use striplab_core::condition_fusion::{
    filter_dataset, filter_dataset_serial, ConditionedSample, FusionParams,
};
use striplab_core::diffusion::extractors::{EmbeddingGapScorer, FixedLinearExtractor};
use striplab_core::diffusion::{
    sliding_windows, sync_loss_over_windows, sync_loss_over_windows_serial, WINDOW_FRAMES,
};
use striplab_core::tensor::Tensor;

#[test]
fn stda_batch_parallel_is_bit_identical_to_serial() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = StdaParams::new(
        StripParams::new(
            StripDirection::Horizontal,
            Tensor::random_uniform(&[3, 4], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::random_uniform(&[3], -1.0, 1.0, &mut rng).unwrap(),
        )
        .unwrap(),
        StripParams::new(
            StripDirection::Vertical,
            Tensor::random_uniform(&[3, 4], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::random_uniform(&[3], -1.0, 1.0, &mut rng).unwrap(),
        )
        .unwrap(),
    )
    .unwrap();
    let inputs: Vec<Tensor> = (0..63)
        .map(|_| Tensor::random_uniform(&[4, 9, 11], -1.0, 1.0, &mut rng).unwrap())
        .collect();
    let par = stda_batch(&inputs, &params).unwrap();
    let ser = stda_batch_serial(&inputs, &params).unwrap();
    assert_eq!(par.len(), ser.len());
    for (a, b) in par.iter().zip(ser.iter()) {
        assert_eq!(a, b);
    }
}

#[test]
fn filter_parallel_is_byte_identical_to_serial() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let params = FusionParams::new(
        Tensor::random_uniform(&[6, 4], -1.0, 1.0, &mut rng).unwrap(),
        Tensor::random_uniform(&[6], -1.0, 1.0, &mut rng).unwrap(),
    )
    .unwrap();
    let samples: Vec<ConditionedSample> = (0..200)
        .map(|i| {
            ConditionedSample::new(
                format!("sample-{i:04}"),
                Tensor::random_uniform(&[6], -1.0, 1.0, &mut rng).unwrap(),
                Tensor::random_uniform(&[3, 4], -1.0, 1.0, &mut rng).unwrap(),
                Tensor::random_uniform(&[6], -1.0, 1.0, &mut rng).unwrap(),
            )
            .unwrap()
        })
        .collect();
    for tau in [-0.5, 0.0, 0.3, 0.8] {
        let par = filter_dataset(&samples, &params, tau).unwrap();
        let ser = filter_dataset_serial(&samples, &params, tau).unwrap();
        assert_eq!(par, ser, "tau={tau}");
        assert_eq!(par.render().into_bytes(), ser.render().into_bytes());
    }
}

#[test]
fn window_mean_parallel_is_bit_identical_to_serial() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let frames = 3 * WINDOW_FRAMES;
    let video = Tensor::random_uniform(&[frames, 2, 3, 3], -1.0, 1.0, &mut rng).unwrap();
    let audio = Tensor::random_uniform(&[frames, 5], -1.0, 1.0, &mut rng).unwrap();
    let windows = sliding_windows(&video, &audio, 1).unwrap();
    let scorer = EmbeddingGapScorer::new(
        FixedLinearExtractor::new(14, WINDOW_FRAMES * 2 * 3 * 3, 6, 1),
        FixedLinearExtractor::new(15, WINDOW_FRAMES * 5, 6, 1),
    );
    let par = sync_loss_over_windows(&windows, &scorer).unwrap();
    let ser = sync_loss_over_windows_serial(&windows, &scorer).unwrap();
    assert_eq!(par.to_bits(), ser.to_bits());
}
