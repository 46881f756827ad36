//! Deterministic extractor and scorer implementations used by tests and the
//! CLI fixtures in place of the real perceptual/video/sync networks.

use super::{FeatureExtractor, LossError, LossResult, SyncScorer};
use crate::tensor::{cosine_similarity, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A frozen stack of seeded random linear maps over the flattened input,
/// one map per layer. The seed fully determines the maps, so two instances
/// built alike are interchangeable.
#[derive(Debug, Clone)]
pub struct FixedLinearExtractor {
    layers: Vec<Tensor>,
    in_len: usize,
    out_len: usize,
}

impl FixedLinearExtractor {
    pub fn new(seed: u64, in_len: usize, out_len: usize, num_layers: usize) -> Self {
        assert!(in_len > 0 && out_len > 0 && num_layers > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (in_len as f64).sqrt();
        let layers = (0..num_layers)
            .map(|_| Tensor::random_uniform(&[out_len, in_len], -scale, scale, &mut rng).unwrap())
            .collect();
        Self {
            layers,
            in_len,
            out_len,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_matrix(&self, layer: usize) -> &Tensor {
        &self.layers[layer]
    }

    fn apply(&self, matrix: &Tensor, input: &Tensor) -> LossResult<Tensor> {
        if input.len() != self.in_len {
            return Err(LossError::Extractor {
                reason: format!(
                    "expected {} flattened elements, got {} (shape {:?})",
                    self.in_len,
                    input.len(),
                    input.shape()
                ),
            });
        }
        let mut out = vec![0.0; self.out_len];
        for (row, o) in out.iter_mut().enumerate() {
            let w = &matrix.data()[row * self.in_len..(row + 1) * self.in_len];
            let mut acc = 0.0;
            for (&wv, &xv) in w.iter().zip(input.data().iter()) {
                acc += wv * xv;
            }
            *o = acc;
        }
        Ok(Tensor::new(vec![self.out_len], out).expect("positive extent"))
    }
}

impl FeatureExtractor for FixedLinearExtractor {
    fn extract(&self, input: &Tensor) -> LossResult<Tensor> {
        self.apply(&self.layers[0], input)
    }

    fn extract_layer(&self, input: &Tensor, layer: usize) -> LossResult<Tensor> {
        let matrix = self.layers.get(layer).ok_or_else(|| LossError::Extractor {
            reason: format!("layer {layer} out of range ({} layers)", self.layers.len()),
        })?;
        self.apply(matrix, input)
    }
}

/// Passes the input through unchanged. Useful as a calibration extractor:
/// the perceptual loss collapses to plain mean squared error.
#[derive(Debug, Clone, Copy)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn extract(&self, input: &Tensor) -> LossResult<Tensor> {
        Ok(input.clone())
    }
}

/// Maps `[F, ...]` to the per-frame mean vector `[F]`.
#[derive(Debug, Clone, Copy)]
pub struct FrameMeanExtractor;

impl FeatureExtractor for FrameMeanExtractor {
    fn extract(&self, input: &Tensor) -> LossResult<Tensor> {
        let frames = input.shape()[0];
        // Tensor extents are positive, so the per-frame block is never empty.
        let per_frame: usize = input.shape()[1..].iter().product();
        let mut out = vec![0.0; frames];
        for (f, o) in out.iter_mut().enumerate() {
            let row = &input.data()[f * per_frame..(f + 1) * per_frame];
            *o = row.iter().sum::<f64>() / per_frame as f64;
        }
        Ok(Tensor::new(vec![frames], out).expect("positive extent"))
    }
}

/// Mean squared gap between the per-frame means of the video and audio
/// streams. Exactly controllable, which makes calibration fixtures easy to
/// construct.
#[derive(Debug, Clone, Copy)]
pub struct FrameMeanGapScorer;

impl SyncScorer for FrameMeanGapScorer {
    fn score(&self, video: &Tensor, audio: &Tensor) -> LossResult<f64> {
        let v = FrameMeanExtractor.extract(video)?;
        let a = FrameMeanExtractor.extract(audio)?;
        if v.shape() != a.shape() {
            return Err(LossError::Extractor {
                reason: format!(
                    "frame counts disagree: video {:?}, audio {:?}",
                    v.shape(),
                    a.shape()
                ),
            });
        }
        let n = v.len() as f64;
        let mut acc = 0.0;
        for (&x, &y) in v.data().iter().zip(a.data().iter()) {
            let d = x - y;
            acc += d * d;
        }
        Ok(acc / n)
    }
}

/// Mean squared gap between fixed linear embeddings of the two streams.
#[derive(Debug, Clone)]
pub struct EmbeddingGapScorer {
    pub video_map: FixedLinearExtractor,
    pub audio_map: FixedLinearExtractor,
}

impl EmbeddingGapScorer {
    pub fn new(video_map: FixedLinearExtractor, audio_map: FixedLinearExtractor) -> Self {
        assert_eq!(
            video_map.out_len, audio_map.out_len,
            "embedding dims must agree"
        );
        Self {
            video_map,
            audio_map,
        }
    }
}

impl SyncScorer for EmbeddingGapScorer {
    fn score(&self, video: &Tensor, audio: &Tensor) -> LossResult<f64> {
        let ev = self.video_map.extract(video)?;
        let ea = self.audio_map.extract(audio)?;
        let n = ev.len() as f64;
        let mut acc = 0.0;
        for (&x, &y) in ev.data().iter().zip(ea.data().iter()) {
            let d = x - y;
            acc += d * d;
        }
        Ok(acc / n)
    }
}

/// Cosine distance `1 − cos` between fixed linear embeddings.
#[derive(Debug, Clone)]
pub struct CosineDistanceScorer {
    video_map: FixedLinearExtractor,
    audio_map: FixedLinearExtractor,
}

impl CosineDistanceScorer {
    pub fn new(video_map: FixedLinearExtractor, audio_map: FixedLinearExtractor) -> Self {
        assert_eq!(
            video_map.out_len, audio_map.out_len,
            "embedding dims must agree"
        );
        Self {
            video_map,
            audio_map,
        }
    }
}

impl SyncScorer for CosineDistanceScorer {
    fn score(&self, video: &Tensor, audio: &Tensor) -> LossResult<f64> {
        let ev = self.video_map.extract(video)?;
        let ea = self.audio_map.extract(audio)?;
        let cos = cosine_similarity(&ev, &ea).map_err(|e| LossError::Extractor {
            reason: e.to_string(),
        })?;
        Ok(1.0 - cos)
    }
}
