//! Weighted text-audio condition fusion and cosine-threshold training-set
//! filtering.
//!
//! The fused condition is `f_c = audio + λ · mean_tokens(text · Wᵀ + b)`;
//! a sample survives filtering when its fused condition has cosine
//! similarity of at least τ with its ground-truth emotion embedding. The
//! boundary comparison is `>=`, and nothing is L2-normalized anywhere.

use crate::par;
use crate::tensor::{cosine_similarity, Tensor, TensorError, TensorResult};
use crate::tsr1;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Default retention threshold.
pub const DEFAULT_TAU: f64 = 0.8;
/// Default fusion weight for the projected text stream.
pub const DEFAULT_LAMBDA: f64 = 0.3;

/// Projection from text space to audio space plus the fusion weight λ.
///
/// λ carries learnable semantics in a training stack; here it is a plain
/// scalar with the documented operating point 0.3 as its default.
#[derive(Debug, Clone)]
pub struct FusionParams {
    pub w: Tensor,
    pub b: Tensor,
    pub lambda_weight: f64,
}

impl FusionParams {
    pub fn new(w: Tensor, b: Tensor) -> TensorResult<Self> {
        let (d_a, _d_t) = w.dims2("FusionParams::new")?;
        if b.rank() != 1 || b.shape()[0] != d_a {
            return Err(TensorError::ShapeMismatch {
                op: "FusionParams::new",
                left: w.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        Ok(Self {
            w,
            b,
            lambda_weight: DEFAULT_LAMBDA,
        })
    }

    pub fn with_lambda(mut self, lambda: f64) -> TensorResult<Self> {
        if !lambda.is_finite() {
            return Err(TensorError::InvalidArgument {
                op: "FusionParams::with_lambda",
                reason: format!("lambda must be finite, got {lambda}"),
            });
        }
        self.lambda_weight = lambda;
        Ok(self)
    }

    pub fn audio_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn text_dim(&self) -> usize {
        self.w.shape()[1]
    }

    /// Deterministic stand-in projection: seeded uniform `W` scaled by
    /// `1/√d_t`, zero bias, default λ. The CLI uses this when no explicit
    /// parameter fixtures are supplied.
    pub fn seeded(seed: u64, d_a: usize, d_t: usize) -> TensorResult<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d_t as f64).sqrt();
        Self::new(
            Tensor::random_uniform(&[d_a, d_t], -scale, scale, &mut rng)?,
            Tensor::zeros(&[d_a])?,
        )
    }
}

/// One training sample: an audio feature, its text tokens, and the
/// ground-truth emotion embedding the fused condition is scored against.
#[derive(Debug, Clone)]
pub struct ConditionedSample {
    pub id: String,
    pub audio_feature: Tensor,
    pub text_tokens: Tensor,
    pub emotion_embedding: Tensor,
}

impl ConditionedSample {
    pub fn new(
        id: impl Into<String>,
        audio_feature: Tensor,
        text_tokens: Tensor,
        emotion_embedding: Tensor,
    ) -> TensorResult<Self> {
        if audio_feature.rank() != 1 || emotion_embedding.rank() != 1 {
            return Err(TensorError::RankMismatch {
                op: "ConditionedSample::new",
                expected: 1,
                shape: audio_feature.shape().to_vec(),
            });
        }
        let (_n_tok, _d_t) = text_tokens.dims2("ConditionedSample::new")?;
        if emotion_embedding.shape() != audio_feature.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "ConditionedSample::new",
                left: audio_feature.shape().to_vec(),
                right: emotion_embedding.shape().to_vec(),
            });
        }
        Ok(Self {
            id: id.into(),
            audio_feature,
            text_tokens,
            emotion_embedding,
        })
    }
}

/// Fused condition `f_c = audio + λ · mean_tokens(text · Wᵀ + b)`.
///
/// The mean runs over the token axis after projection, producing an
/// audio-dimension vector; that is the only reading under which the
/// addition is dimensionally valid.
pub fn fuse(sample: &ConditionedSample, p: &FusionParams) -> TensorResult<Tensor> {
    let (n_tok, d_t) = sample.text_tokens.dims2("fuse")?;
    let d_a = p.audio_dim();
    if d_t != p.text_dim() || sample.audio_feature.shape() != [d_a] {
        return Err(TensorError::ShapeMismatch {
            op: "fuse",
            left: sample.text_tokens.shape().to_vec(),
            right: p.w.shape().to_vec(),
        });
    }
    let mut fused = sample.audio_feature.data().to_vec();
    let inv = 1.0 / n_tok as f64;
    for (i, out) in fused.iter_mut().enumerate() {
        let w_row = &p.w.data()[i * d_t..(i + 1) * d_t];
        let mut acc = 0.0;
        for tok in 0..n_tok {
            let token = &sample.text_tokens.data()[tok * d_t..(tok + 1) * d_t];
            let mut proj = p.b.data()[i];
            for (&wv, &tv) in w_row.iter().zip(token.iter()) {
                proj += wv * tv;
            }
            acc += proj;
        }
        *out += p.lambda_weight * acc * inv;
    }
    Tensor::new(vec![d_a], fused)
}

/// Why a sample was dropped, or that it was kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    Retained,
    BelowThreshold,
    Degenerate,
}

/// Filtering result: retained ids in input order plus rejection tallies.
/// Zero-norm fused features or embeddings are counted separately from
/// below-threshold rejections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterOutcome {
    pub retained: Vec<String>,
    pub rejected_below: usize,
    pub rejected_degenerate: usize,
}

impl FilterOutcome {
    /// The filter output file body: one retained id per line, then the
    /// summary line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for id in &self.retained {
            let _ = writeln!(out, "{id}");
        }
        let _ = writeln!(
            out,
            "retained={} rejected_below={} rejected_degenerate={}",
            self.retained.len(),
            self.rejected_below,
            self.rejected_degenerate
        );
        out
    }
}

fn decide(sample: &ConditionedSample, p: &FusionParams, tau: f64) -> TensorResult<Decision> {
    let fused = fuse(sample, p)?;
    match cosine_similarity(&fused, &sample.emotion_embedding) {
        Ok(sim) if sim >= tau => Ok(Decision::Retained),
        Ok(_) => Ok(Decision::BelowThreshold),
        Err(TensorError::ZeroNorm { .. }) => Ok(Decision::Degenerate),
        Err(e) => Err(e),
    }
}

fn collect_outcome(
    samples: &[ConditionedSample],
    decisions: Vec<TensorResult<Decision>>,
) -> TensorResult<FilterOutcome> {
    let mut outcome = FilterOutcome {
        retained: Vec::new(),
        rejected_below: 0,
        rejected_degenerate: 0,
    };
    for (sample, decision) in samples.iter().zip(decisions) {
        match decision? {
            Decision::Retained => outcome.retained.push(sample.id.clone()),
            Decision::BelowThreshold => outcome.rejected_below += 1,
            Decision::Degenerate => outcome.rejected_degenerate += 1,
        }
    }
    Ok(outcome)
}

fn validate_tau(tau: f64) -> TensorResult<()> {
    if !(-1.0..=1.0).contains(&tau) {
        return Err(TensorError::InvalidArgument {
            op: "filter_dataset",
            reason: format!("tau must lie in [-1, 1], got {tau}"),
        });
    }
    Ok(())
}

/// Retain exactly the samples whose fused condition has cosine similarity
/// `>= tau` with their emotion embedding, preserving input order.
///
/// Samples are scored in parallel under the `parallel` feature; the outcome
/// is byte-identical to [`filter_dataset_serial`].
pub fn filter_dataset(
    samples: &[ConditionedSample],
    p: &FusionParams,
    tau: f64,
) -> TensorResult<FilterOutcome> {
    validate_tau(tau)?;
    let decisions = par::map_slice(samples, |s| decide(s, p, tau));
    collect_outcome(samples, decisions)
}

/// Sequential reference for [`filter_dataset`].
pub fn filter_dataset_serial(
    samples: &[ConditionedSample],
    p: &FusionParams,
    tau: f64,
) -> TensorResult<FilterOutcome> {
    validate_tau(tau)?;
    let decisions = samples.iter().map(|s| decide(s, p, tau)).collect();
    collect_outcome(samples, decisions)
}

/// A pair `(v, y)` of `dim`-vectors whose [`cosine_similarity`] is
/// bit-equal to `target`.
///
/// `v` is the first basis vector; `y` lives in the plane of the first two
/// coordinates with its second coordinate nudged by ulps until the computed
/// cosine lands exactly on `target`. Used to build boundary fixtures where
/// a sample sits precisely on the retention threshold.
pub fn vectors_with_exact_cosine(dim: usize, target: f64) -> TensorResult<(Tensor, Tensor)> {
    if dim < 2 {
        return Err(TensorError::InvalidArgument {
            op: "vectors_with_exact_cosine",
            reason: format!("need dim >= 2, got {dim}"),
        });
    }
    if !(-1.0..1.0).contains(&target) {
        return Err(TensorError::InvalidArgument {
            op: "vectors_with_exact_cosine",
            reason: format!("target must lie in [-1, 1), got {target}"),
        });
    }
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    let v = Tensor::new(vec![dim], v)?;
    let mut s = (1.0 - target * target).max(0.0).sqrt();
    for _ in 0..256 {
        let mut y = vec![0.0; dim];
        y[0] = target;
        y[1] = s;
        let y = Tensor::new(vec![dim], y)?;
        let cos = cosine_similarity(&v, &y)?;
        if cos == target {
            return Ok((v, y));
        }
        // One ulp toward ‖y‖ = 1: the cosine is target/‖y‖, so an overshoot
        // in magnitude means ‖y‖ is still too small.
        s = if cos.abs() > target.abs() {
            f64::from_bits(s.to_bits() + 1)
        } else {
            f64::from_bits(s.to_bits() - 1)
        };
    }
    Err(TensorError::InvalidArgument {
        op: "vectors_with_exact_cosine",
        reason: format!("ulp search failed to land exactly on {target}"),
    })
}

/// Errors raised while reading a sample manifest.
#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: expected `<id> <audio> <text> <emotion>`, got {got} fields")]
    Malformed { line: usize, got: usize },
    #[error("manifest line {line}: {source}")]
    Fixture {
        line: usize,
        #[source]
        source: tsr1::Tsr1Error,
    },
    #[error("manifest line {line}: {source}")]
    Sample {
        line: usize,
        #[source]
        source: TensorError,
    },
}

/// One parsed manifest record. Paths are as written in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub line: usize,
    pub id: String,
    pub audio_path: PathBuf,
    pub text_path: PathBuf,
    pub emotion_path: PathBuf,
}

/// Parse manifest text: one whitespace-separated record per line,
/// `<id> <audio tsr> <text tsr> <emotion tsr>`. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, ManifestError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(ManifestError::Malformed {
                line,
                got: fields.len(),
            });
        }
        entries.push(ManifestEntry {
            line,
            id: fields[0].to_string(),
            audio_path: PathBuf::from(fields[1]),
            text_path: PathBuf::from(fields[2]),
            emotion_path: PathBuf::from(fields[3]),
        });
    }
    Ok(entries)
}

/// Read a manifest file and load every referenced tensor. Relative fixture
/// paths resolve against the manifest's directory.
pub fn load_samples(
    manifest_path: impl AsRef<Path>,
) -> Result<Vec<ConditionedSample>, ManifestError> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|source| ManifestError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut samples = Vec::new();
    for entry in parse_manifest(&text)? {
        let load = |p: &Path| {
            tsr1::read_file(resolve(p)).map_err(|source| ManifestError::Fixture {
                line: entry.line,
                source,
            })
        };
        let audio = load(&entry.audio_path)?;
        let text_tokens = load(&entry.text_path)?;
        let emotion = load(&entry.emotion_path)?;
        samples.push(
            ConditionedSample::new(entry.id, audio, text_tokens, emotion).map_err(|source| {
                ManifestError::Sample {
                    line: entry.line,
                    source,
                }
            })?,
        );
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_abs_diff;
    use crate::verify::oracles;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_sample(
        d_a: usize,
        d_t: usize,
        n_tok: usize,
        r: &mut ChaCha8Rng,
    ) -> ConditionedSample {
        ConditionedSample::new(
            "s",
            Tensor::random_uniform(&[d_a], -1.0, 1.0, r).unwrap(),
            Tensor::random_uniform(&[n_tok, d_t], -1.0, 1.0, r).unwrap(),
            Tensor::random_uniform(&[d_a], -1.0, 1.0, r).unwrap(),
        )
        .unwrap()
    }

    fn random_params(d_a: usize, d_t: usize, r: &mut ChaCha8Rng) -> FusionParams {
        FusionParams::new(
            Tensor::random_uniform(&[d_a, d_t], -1.0, 1.0, r).unwrap(),
            Tensor::random_uniform(&[d_a], -1.0, 1.0, r).unwrap(),
        )
        .unwrap()
    }

    /// A sample whose fused feature has an exact, prescribed cosine with its
    /// emotion embedding. Zero text tokens and zero projection make the
    /// fused feature exactly the audio feature.
    fn sample_with_exact_cosine(
        id: &str,
        d: usize,
        target: f64,
    ) -> (ConditionedSample, FusionParams) {
        let (audio, emb) = vectors_with_exact_cosine(d, target).unwrap();
        let sample =
            ConditionedSample::new(id, audio, Tensor::zeros(&[1, 2]).unwrap(), emb).unwrap();
        let params = FusionParams::new(
            Tensor::zeros(&[d, 2]).unwrap(),
            Tensor::zeros(&[d]).unwrap(),
        )
        .unwrap();
        (sample, params)
    }

    #[test]
    fn exact_cosine_constructor_hits_targets_bitwise() {
        for target in [-0.9, -0.5, 0.0, 0.25, 0.8, 0.9999] {
            let (v, y) = vectors_with_exact_cosine(3, target).unwrap();
            assert_eq!(cosine_similarity(&v, &y).unwrap(), target);
        }
    }

    #[test]
    fn fuse_lambda_zero_returns_audio() {
        let mut r = rng(50);
        let sample = random_sample(4, 3, 2, &mut r);
        let p = random_params(4, 3, &mut r).with_lambda(0.0).unwrap();
        assert_eq!(fuse(&sample, &p).unwrap(), sample.audio_feature);
    }

    #[test]
    fn fuse_single_token_identity_projection() {
        let mut r = rng(51);
        let d = 3;
        let audio = Tensor::random_uniform(&[d], -1.0, 1.0, &mut r).unwrap();
        let token = Tensor::random_uniform(&[1, d], -1.0, 1.0, &mut r).unwrap();
        let sample = ConditionedSample::new(
            "s",
            audio.clone(),
            token.clone(),
            Tensor::filled(&[d], 1.0).unwrap(),
        )
        .unwrap();
        let eye = Tensor::from_fn(&[d, d], |i| if i / d == i % d { 1.0 } else { 0.0 }).unwrap();
        let p = FusionParams::new(eye, Tensor::zeros(&[d]).unwrap())
            .unwrap()
            .with_lambda(1.0)
            .unwrap();
        let fused = fuse(&sample, &p).unwrap();
        let want = audio.add(&token.reshape(&[d]).unwrap()).unwrap();
        assert!(max_abs_diff(&fused, &want) < 1e-15);
    }

    #[test]
    fn fuse_matches_loop_oracle_at_default_lambda() {
        let mut r = rng(52);
        let sample = random_sample(5, 3, 4, &mut r);
        let p = random_params(5, 3, &mut r);
        assert_eq!(p.lambda_weight, 0.3);
        let got = fuse(&sample, &p).unwrap();
        let want = oracles::oracle_fuse(&sample, &p).unwrap();
        assert!(max_abs_diff(&got, &want) < 1e-12);
    }

    #[test]
    fn fuse_rejects_dim_mismatch() {
        let mut r = rng(53);
        let sample = random_sample(4, 3, 2, &mut r);
        let p = random_params(4, 5, &mut r);
        assert!(fuse(&sample, &p).is_err());
    }

    #[test]
    fn self_aligned_sample_is_retained_at_any_tau() {
        let mut r = rng(54);
        let sample = random_sample(4, 3, 2, &mut r);
        let p = random_params(4, 3, &mut r);
        let aligned = ConditionedSample::new(
            "aligned",
            sample.audio_feature.clone(),
            sample.text_tokens.clone(),
            fuse(&sample, &p).unwrap(),
        )
        .unwrap();
        let outcome = filter_dataset(&[aligned], &p, 1.0).unwrap();
        assert_eq!(outcome.retained, vec!["aligned".to_string()]);
    }

    #[test]
    fn orthogonal_sample_is_excluded_at_default_tau() {
        let (mut sample, p) = sample_with_exact_cosine("orth", 3, 0.8);
        // Replace the embedding with one orthogonal to the fused feature.
        sample.emotion_embedding = Tensor::new(vec![3], vec![0.0, 1.0, 0.0]).unwrap();
        let outcome = filter_dataset(&[sample], &p, DEFAULT_TAU).unwrap();
        assert!(outcome.retained.is_empty());
        assert_eq!(outcome.rejected_below, 1);
    }

    #[test]
    fn boundary_cosine_is_retained_inclusively() {
        // Ten samples straddling the threshold; the one at exactly 0.80 must
        // survive because the comparison is >=, not >.
        let mut samples = Vec::new();
        let mut params = None;
        for i in 0..10 {
            // 0.75, 0.76, ..., 0.84; i == 5 lands bit-exactly on 0.8.
            let target = (75 + i) as f64 / 100.0;
            let (s, p) = sample_with_exact_cosine(&format!("s{i}"), 3, target);
            samples.push(s);
            params.get_or_insert(p);
        }
        let outcome = filter_dataset(&samples, &params.unwrap(), 0.8).unwrap();
        assert_eq!(
            outcome.retained,
            vec!["s5", "s6", "s7", "s8", "s9"],
            "0.75..0.79 rejected, 0.80..0.84 retained"
        );
        assert_eq!(outcome.rejected_below, 5);
        assert_eq!(outcome.rejected_degenerate, 0);
    }

    #[test]
    fn zero_norm_embedding_counts_as_degenerate() {
        let mut r = rng(55);
        let mut sample = random_sample(4, 3, 2, &mut r);
        sample.emotion_embedding = Tensor::zeros(&[4]).unwrap();
        let p = random_params(4, 3, &mut r);
        let outcome = filter_dataset(&[sample], &p, 0.8).unwrap();
        assert_eq!(outcome.rejected_degenerate, 1);
        assert_eq!(outcome.rejected_below, 0);
    }

    #[test]
    fn tau_outside_range_is_rejected() {
        let p = random_params(2, 2, &mut rng(56));
        assert!(filter_dataset(&[], &p, 1.01).is_err());
        assert!(filter_dataset(&[], &p, -1.5).is_err());
    }

    #[test]
    fn filter_parallel_matches_serial_byte_for_byte() {
        let mut r = rng(57);
        let p = random_params(4, 3, &mut r);
        let samples: Vec<_> = (0..64)
            .map(|i| {
                let mut s = random_sample(4, 3, 2, &mut r);
                s.id = format!("sample-{i}");
                s
            })
            .collect();
        let a = filter_dataset(&samples, &p, 0.2).unwrap();
        let b = filter_dataset_serial(&samples, &p, 0.2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.render(), b.render());
    }

    #[test]
    fn render_has_summary_line() {
        let outcome = FilterOutcome {
            retained: vec!["a".into(), "b".into()],
            rejected_below: 3,
            rejected_degenerate: 1,
        };
        assert_eq!(
            outcome.render(),
            "a\nb\nretained=2 rejected_below=3 rejected_degenerate=1\n"
        );
    }

    #[test]
    fn manifest_parses_and_flags_bad_lines() {
        let good = "# comment\n\nid1 a.tsr t.tsr e.tsr\nid2 a2.tsr t2.tsr e2.tsr\n";
        let entries = parse_manifest(good).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].id, "id1");
        assert_eq!(entries[1].line, 4);

        let bad = "id1 a.tsr t.tsr e.tsr\nid2 only two\n";
        match parse_manifest(bad).unwrap_err() {
            ManifestError::Malformed { line, got } => {
                assert_eq!(line, 2);
                assert_eq!(got, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn raising_tau_never_adds_samples(seed in 0u64..1000, t1 in -0.9f64..0.9, dt in 0.0f64..0.5) {
            let mut r = rng(seed);
            let p = random_params(3, 2, &mut r);
            let samples: Vec<_> = (0..24)
                .map(|i| {
                    let mut s = random_sample(3, 2, 2, &mut r);
                    s.id = format!("m{i}");
                    s
                })
                .collect();
            let t2 = (t1 + dt).min(1.0);
            let loose = filter_dataset(&samples, &p, t1).unwrap();
            let tight = filter_dataset(&samples, &p, t2).unwrap();
            // tight ⊆ loose
            prop_assert!(tight.retained.iter().all(|id| loose.retained.contains(id)));
        }

        #[test]
        fn scaling_embedding_preserves_decisions(seed in 0u64..1000, alpha in 0.01f64..50.0) {
            let mut r = rng(seed);
            let p = random_params(3, 2, &mut r);
            let base: Vec<_> = (0..8)
                .map(|i| {
                    let mut s = random_sample(3, 2, 2, &mut r);
                    s.id = format!("m{i}");
                    s
                })
                .collect();
            let scaled: Vec<_> = base
                .iter()
                .map(|s| {
                    let mut s2 = s.clone();
                    s2.emotion_embedding = s.emotion_embedding.scale(alpha);
                    s2
                })
                .collect();
            let a = filter_dataset(&base, &p, 0.3).unwrap();
            let b = filter_dataset(&scaled, &p, 0.3).unwrap();
            prop_assert_eq!(a.retained, b.retained);
        }

        #[test]
        fn fuse_is_affine_in_audio(seed in 0u64..1000) {
            let mut r = rng(seed);
            let p = random_params(4, 3, &mut r);
            let sample = random_sample(4, 3, 3, &mut r);
            let delta = Tensor::random_uniform(&[4], -1.0, 1.0, &mut r).unwrap();
            let mut shifted = sample.clone();
            shifted.audio_feature = sample.audio_feature.add(&delta).unwrap();
            let lhs = fuse(&shifted, &p).unwrap();
            let rhs = fuse(&sample, &p).unwrap().add(&delta).unwrap();
            prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
        }

        #[test]
        fn identical_inputs_give_identical_outputs(seed in 0u64..1000) {
            let mut r = rng(seed);
            let p = random_params(3, 2, &mut r);
            let samples: Vec<_> = (0..12)
                .map(|i| {
                    let mut s = random_sample(3, 2, 2, &mut r);
                    s.id = format!("m{i}");
                    s
                })
                .collect();
            let a = filter_dataset(&samples, &p, 0.4).unwrap();
            let b = filter_dataset(&samples, &p, 0.4).unwrap();
            prop_assert_eq!(a.render().into_bytes(), b.render().into_bytes());
        }
    }
}
