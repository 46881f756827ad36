//! The training objective stack: noise-prediction loss, one-step clean-latent
//! estimation, windowed sync loss, layer-feature perceptual loss, temporal
//! representation alignment loss, and their weighted total.
//!
//! Every `‖·‖²` reduces by the mean over elements so magnitudes stay
//! resolution-independent and the loss weights keep their meaning across
//! sizes. The external scoring networks are replaced by deterministic
//! extractor/scorer contracts; the losses must be correct for any
//! deterministic implementation, and seeded fixed linear maps stand in for
//! the real networks in tests. No loss operation draws randomness: the
//! expectation over timesteps and window starts is an explicit average taken
//! by the caller.

pub mod extractors;

use crate::tensor::{compensated_sum, Tensor, TensorError};
use crate::{par, tsr1};
use std::path::Path;
use thiserror::Error;

/// Frames per scoring window.
pub const WINDOW_FRAMES: usize = 16;

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("schedule value {value} at step {index} outside (0, 1]")]
    ScheduleRange { index: usize, value: f64 },
    #[error("schedule increases at step {index}: {prev} -> {value}")]
    ScheduleNotMonotone { index: usize, prev: f64, value: f64 },
    #[error("schedule must be a non-empty rank-1 tensor, got shape {shape:?}")]
    ScheduleShape { shape: Vec<usize> },
    #[error("timestep {t} out of range for a {len}-step schedule")]
    TimestepRange { t: usize, len: usize },
    #[error("alpha_bar must lie in (0, 1], got {value}")]
    AlphaBarRange { value: f64 },
    #[error("clip must have exactly {WINDOW_FRAMES} frames, got {got}")]
    WindowLength { got: usize },
    #[error("video has {frames} frames; at least {WINDOW_FRAMES} are required")]
    TooShort { frames: usize },
    #[error("stride must be positive")]
    ZeroStride,
    #[error("video frames {video} and audio frames {audio} disagree")]
    FrameMismatch { video: usize, audio: usize },
    #[error("loss weight {name} must be finite and nonnegative, got {value}")]
    BadWeight { name: &'static str, value: f64 },
    #[error("scorer failed on window starting at frame {start_frame}: {source}")]
    Scorer {
        start_frame: usize,
        #[source]
        source: Box<LossError>,
    },
    #[error("extractor: {reason}")]
    Extractor { reason: String },
}

pub type LossResult<T> = Result<T, LossError>;

/// Deterministic feature map: identical input, identical output. Stand-ins
/// for the perceptual and video encoders implement this.
pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, input: &Tensor) -> LossResult<Tensor>;

    /// Features from an indexed internal layer. Single-representation
    /// extractors serve the plain map regardless of the index.
    fn extract_layer(&self, input: &Tensor, layer: usize) -> LossResult<Tensor> {
        let _ = layer;
        self.extract(input)
    }
}

/// Deterministic audio-visual alignment score over a (video, audio) pair.
/// The score is an opaque scalar to be minimized.
pub trait SyncScorer: Send + Sync {
    fn score(&self, video: &Tensor, audio: &Tensor) -> LossResult<f64>;
}

/// Cumulative noise coefficients ᾱ_t, one per timestep, each in (0, 1] and
/// monotone non-increasing.
#[derive(Debug, Clone)]
pub struct DiffusionSchedule {
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn new(alpha_bar: Vec<f64>) -> LossResult<Self> {
        if alpha_bar.is_empty() {
            return Err(LossError::ScheduleShape { shape: vec![0] });
        }
        let mut prev = f64::INFINITY;
        for (index, &value) in alpha_bar.iter().enumerate() {
            if !(value > 0.0 && value <= 1.0) {
                return Err(LossError::ScheduleRange { index, value });
            }
            if value > prev {
                return Err(LossError::ScheduleNotMonotone { index, prev, value });
            }
            prev = value;
        }
        Ok(Self { alpha_bar })
    }

    /// Load from a TSR1 vector file.
    pub fn from_tensor(t: &Tensor) -> LossResult<Self> {
        if t.rank() != 1 {
            return Err(LossError::ScheduleShape {
                shape: t.shape().to_vec(),
            });
        }
        Self::new(t.data().to_vec())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScheduleFileError> {
        let t = tsr1::read_file(path)?;
        Ok(Self::from_tensor(&t)?)
    }

    pub fn len(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bar.is_empty()
    }

    pub fn alpha_bar(&self, t: usize) -> LossResult<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or(LossError::TimestepRange {
                t,
                len: self.alpha_bar.len(),
            })
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha_bar
    }
}

#[derive(Debug, Error)]
pub enum ScheduleFileError {
    #[error(transparent)]
    Tsr1(#[from] tsr1::Tsr1Error),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// The four scalars weighting the total objective. Defaults to the
/// documented operating point (1, 0.05, 0.1, 10).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.05,
            lambda3: 0.1,
            lambda4: 10.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64, lambda4: f64) -> LossResult<Self> {
        for (name, value) in [
            ("lambda1", lambda1),
            ("lambda2", lambda2),
            ("lambda3", lambda3),
            ("lambda4", lambda4),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(LossError::BadWeight { name, value });
            }
        }
        Ok(Self {
            lambda1,
            lambda2,
            lambda3,
            lambda4,
        })
    }
}

/// A fixed-length scoring window: 16 consecutive video frames and their
/// aligned audio rows, remembering the start frame.
#[derive(Debug, Clone)]
pub struct ClipWindow {
    pub start_frame: usize,
    pub video: Tensor,
    pub audio: Tensor,
}

impl ClipWindow {
    pub fn new(start_frame: usize, video: Tensor, audio: Tensor) -> LossResult<Self> {
        if video.rank() != 4 || video.shape()[0] != WINDOW_FRAMES {
            return Err(LossError::WindowLength {
                got: video.shape()[0],
            });
        }
        if audio.rank() != 2 || audio.shape()[0] != WINDOW_FRAMES {
            return Err(LossError::WindowLength {
                got: audio.shape()[0],
            });
        }
        Ok(Self {
            start_frame,
            video,
            audio,
        })
    }
}

/// Mean squared error between a sampled noise tensor and its prediction.
pub fn noise_loss(eps_true: &Tensor, eps_pred: &Tensor) -> LossResult<f64> {
    if eps_true.shape() != eps_pred.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "noise_loss",
            left: eps_true.shape().to_vec(),
            right: eps_pred.shape().to_vec(),
        }
        .into());
    }
    Ok(mean_sq_diff(eps_true.data(), eps_pred.data()))
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc / a.len() as f64
}

/// One-step clean-latent estimate `ẑ₀ = (z_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t`, the
/// algebraic inverse of the forward noising identity.
pub fn estimate_clean_latent(
    z_t: &Tensor,
    eps_pred: &Tensor,
    alpha_bar_t: f64,
) -> LossResult<Tensor> {
    if !(alpha_bar_t > 0.0 && alpha_bar_t <= 1.0) {
        return Err(LossError::AlphaBarRange { value: alpha_bar_t });
    }
    if z_t.shape() != eps_pred.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "estimate_clean_latent",
            left: z_t.shape().to_vec(),
            right: eps_pred.shape().to_vec(),
        }
        .into());
    }
    let noise_coeff = (1.0 - alpha_bar_t).sqrt();
    let inv_signal = 1.0 / alpha_bar_t.sqrt();
    let data = z_t
        .data()
        .iter()
        .zip(eps_pred.data().iter())
        .map(|(&z, &e)| (z - noise_coeff * e) * inv_signal)
        .collect();
    Ok(Tensor::new(z_t.shape().to_vec(), data)?)
}

/// Forward noising identity `z_t = √ᾱ_t·z₀ + √(1−ᾱ_t)·ε`, used to build
/// fixtures and round-trip checks.
pub fn forward_noising(z0: &Tensor, eps: &Tensor, alpha_bar_t: f64) -> LossResult<Tensor> {
    if !(alpha_bar_t > 0.0 && alpha_bar_t <= 1.0) {
        return Err(LossError::AlphaBarRange { value: alpha_bar_t });
    }
    if z0.shape() != eps.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "forward_noising",
            left: z0.shape().to_vec(),
            right: eps.shape().to_vec(),
        }
        .into());
    }
    let signal = alpha_bar_t.sqrt();
    let noise = (1.0 - alpha_bar_t).sqrt();
    let data = z0
        .data()
        .iter()
        .zip(eps.data().iter())
        .map(|(&z, &e)| signal * z + noise * e)
        .collect();
    Ok(Tensor::new(z0.shape().to_vec(), data)?)
}

/// Audio-visual alignment score of one window. Failures carry the window's
/// start frame. Averaging over windows and timesteps is the caller's job.
pub fn sync_loss(clip: &ClipWindow, scorer: &dyn SyncScorer) -> LossResult<f64> {
    scorer
        .score(&clip.video, &clip.audio)
        .map_err(|source| LossError::Scorer {
            start_frame: clip.start_frame,
            source: Box::new(source),
        })
}

/// Layer-feature perceptual distance: for each requested layer, the mean
/// squared difference of extracted features, summed over layers.
pub fn lpips_loss(
    x_hat: &Tensor,
    x: &Tensor,
    extractor: &dyn FeatureExtractor,
    layers: &[usize],
) -> LossResult<f64> {
    if x_hat.shape() != x.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "lpips_loss",
            left: x_hat.shape().to_vec(),
            right: x.shape().to_vec(),
        }
        .into());
    }
    let mut total = 0.0;
    for &layer in layers {
        let f_hat = extractor.extract_layer(x_hat, layer)?;
        let f = extractor.extract_layer(x, layer)?;
        if f_hat.shape() != f.shape() {
            return Err(LossError::Extractor {
                reason: format!(
                    "layer {layer} produced mismatched shapes {:?} vs {:?}",
                    f_hat.shape(),
                    f.shape()
                ),
            });
        }
        total += mean_sq_diff(f_hat.data(), f.data());
    }
    Ok(total)
}

/// Temporal representation alignment: mean squared distance between encoder
/// representations of a generated and a real 16-frame clip.
pub fn trepa_loss(
    clip_hat: &Tensor,
    clip: &Tensor,
    encoder: &dyn FeatureExtractor,
) -> LossResult<f64> {
    if clip_hat.shape() != clip.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "trepa_loss",
            left: clip_hat.shape().to_vec(),
            right: clip.shape().to_vec(),
        }
        .into());
    }
    if clip_hat.rank() != 4 || clip_hat.shape()[0] != WINDOW_FRAMES {
        return Err(LossError::WindowLength {
            got: clip_hat.shape()[0],
        });
    }
    let e_hat = encoder.extract(clip_hat)?;
    let e = encoder.extract(clip)?;
    if e_hat.shape() != e.shape() {
        return Err(LossError::Extractor {
            reason: format!(
                "encoder produced mismatched shapes {:?} vs {:?}",
                e_hat.shape(),
                e.shape()
            ),
        });
    }
    Ok(mean_sq_diff(e_hat.data(), e.data()))
}

/// Weighted total `λ1·noise + λ2·sync + λ3·lpips + λ4·trepa`, summed left
/// to right.
pub fn total_loss(noise: f64, sync: f64, lpips: f64, trepa: f64, w: &LossWeights) -> f64 {
    w.lambda1 * noise + w.lambda2 * sync + w.lambda3 * lpips + w.lambda4 * trepa
}

/// All windows at starts `0, stride, 2·stride, …` with `start + 16 <= F`.
/// Video `[F, C, H, W]` and audio `[F, d]` share the frame axis.
pub fn sliding_windows(
    video: &Tensor,
    audio: &Tensor,
    stride: usize,
) -> LossResult<Vec<ClipWindow>> {
    if stride == 0 {
        return Err(LossError::ZeroStride);
    }
    if video.rank() != 4 {
        return Err(TensorError::RankMismatch {
            op: "sliding_windows",
            expected: 4,
            shape: video.shape().to_vec(),
        }
        .into());
    }
    let (af, d) = audio.dims2("sliding_windows")?;
    let frames = video.shape()[0];
    if frames != af {
        return Err(LossError::FrameMismatch {
            video: frames,
            audio: af,
        });
    }
    if frames < WINDOW_FRAMES {
        return Err(LossError::TooShort { frames });
    }
    let frame_len: usize = video.shape()[1..].iter().product();
    let mut windows = Vec::new();
    let mut start = 0;
    while start + WINDOW_FRAMES <= frames {
        let mut vshape = video.shape().to_vec();
        vshape[0] = WINDOW_FRAMES;
        let vdata = video.data()[start * frame_len..(start + WINDOW_FRAMES) * frame_len].to_vec();
        let adata = audio.data()[start * d..(start + WINDOW_FRAMES) * d].to_vec();
        windows.push(ClipWindow::new(
            start,
            Tensor::new(vshape, vdata)?,
            Tensor::new(vec![WINDOW_FRAMES, d], adata)?,
        )?);
        start += stride;
    }
    Ok(windows)
}

/// Mean sync score over a window set. Per-window scores may be computed in
/// parallel; the reduction always runs in window order with compensated
/// summation, so the result equals [`sync_loss_over_windows_serial`].
pub fn sync_loss_over_windows(windows: &[ClipWindow], scorer: &dyn SyncScorer) -> LossResult<f64> {
    let scores: Vec<LossResult<f64>> = par::map_slice(windows, |w| sync_loss(w, scorer));
    mean_of_scores(scores)
}

/// Sequential reference for [`sync_loss_over_windows`].
pub fn sync_loss_over_windows_serial(
    windows: &[ClipWindow],
    scorer: &dyn SyncScorer,
) -> LossResult<f64> {
    let scores: Vec<LossResult<f64>> = windows.iter().map(|w| sync_loss(w, scorer)).collect();
    mean_of_scores(scores)
}

fn mean_of_scores(scores: Vec<LossResult<f64>>) -> LossResult<f64> {
    let values = scores.into_iter().collect::<LossResult<Vec<f64>>>()?;
    if values.is_empty() {
        return Ok(0.0);
    }
    Ok(compensated_sum(values.iter().copied()) / values.len() as f64)
}

/// Named loss values plus their weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub noise: f64,
    pub sync: f64,
    pub lpips: f64,
    pub trepa: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_components(noise: f64, sync: f64, lpips: f64, trepa: f64, w: &LossWeights) -> Self {
        Self {
            noise,
            sync,
            lpips,
            trepa,
            total: total_loss(noise, sync, lpips, trepa, w),
        }
    }

    /// The `loss.<name>=<value>` report consumed by the CLI.
    pub fn render(&self) -> String {
        format!(
            "loss.noise={:e}\nloss.sync={:e}\nloss.lpips={:e}\nloss.trepa={:e}\nloss.total={:e}\n",
            self.noise, self.sync, self.lpips, self.trepa, self.total
        )
    }
}
