//! Literal-loop reference implementations of every kernel.
//!
//! Each oracle transcribes its formula directly with explicit index loops
//! and its own scalar helpers, and deliberately shares no code with the
//! optimized paths it checks. Clarity over speed throughout: boundary
//! handling is spelled out with explicit zero terms.

use crate::attention::{SelfAttentionParams, StdaParams, StripDirection, StripParams};
use crate::condition_fusion::{ConditionedSample, FusionParams};
use crate::diffusion::{FeatureExtractor, LossResult, LossWeights, SyncScorer};
use crate::temporal_graph::{Activation, ChainGraph, GnnLayerParams, ObjectFeatures};
use crate::tensor::{Tensor, TensorResult};

fn naive_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Strip integration transcribed term by term:
/// `X̂[c,h,w] = Σ_k a[k]·X[c,h,w−⌊K/2⌋+k]`, with explicit zeros for
/// out-of-range taps.
pub fn oracle_strip_apply(
    x: &Tensor,
    a: &Tensor,
    direction: StripDirection,
) -> TensorResult<Tensor> {
    let (c, h, w) = x.dims3("oracle_strip_apply")?;
    let k = a.len();
    let half = (k / 2) as isize;
    let mut out = Tensor::zeros(&[c, h, w])?;
    for ci in 0..c {
        for hi in 0..h {
            for wi in 0..w {
                let mut acc = 0.0;
                for tap in 0..k {
                    let value = match direction {
                        StripDirection::Horizontal => {
                            let src = wi as isize - half + tap as isize;
                            if src < 0 || src >= w as isize {
                                0.0
                            } else {
                                x.at(&[ci, hi, src as usize])
                            }
                        }
                        StripDirection::Vertical => {
                            let src = hi as isize - half + tap as isize;
                            if src < 0 || src >= h as isize {
                                0.0
                            } else {
                                x.at(&[ci, src as usize, wi])
                            }
                        }
                    };
                    acc += a.data()[tap] * value;
                }
                out.data_mut()[(ci * h + hi) * w + wi] = acc;
            }
        }
    }
    Ok(out)
}

/// Weight branch transcribed step by step: pooled means, dense map, sigmoid.
pub fn oracle_strip_weights(x: &Tensor, p: &StripParams) -> TensorResult<Tensor> {
    let (c, h, w) = x.dims3("oracle_strip_weights")?;
    let mut pooled = vec![0.0; c];
    for (ci, g) in pooled.iter_mut().enumerate() {
        let mut acc = 0.0;
        for hi in 0..h {
            for wi in 0..w {
                acc += x.at(&[ci, hi, wi]);
            }
        }
        *g = acc / (h * w) as f64;
    }
    let k = p.k();
    let mut out = vec![0.0; k];
    for (row, o) in out.iter_mut().enumerate() {
        let mut pre = p.bias.data()[row];
        for (ci, &g) in pooled.iter().enumerate() {
            pre += p.weight.at(&[row, ci]) * g;
        }
        *o = naive_sigmoid(pre);
    }
    Tensor::new(vec![k], out)
}

/// The full two-direction composition built from the loop oracles, with the
/// vertical weights recomputed from the horizontally refined tensor.
pub fn oracle_stda(x: &Tensor, p: &StdaParams) -> TensorResult<Tensor> {
    let a_h = oracle_strip_weights(x, &p.horizontal)?;
    let refined = oracle_strip_apply(x, &a_h, StripDirection::Horizontal)?;
    let a_v = oracle_strip_weights(&refined, &p.vertical)?;
    oracle_strip_apply(&refined, &a_v, StripDirection::Vertical)
}

/// Per-pair attention: explicit dot products, an unstabilized softmax (the
/// formula as written), and an explicit weighted sum.
pub fn oracle_self_attention(x: &Tensor, p: &SelfAttentionParams) -> TensorResult<Tensor> {
    let (c, h, w) = x.dims3("oracle_self_attention")?;
    let n = h * w;
    let token = |pos: usize, ch: usize| x.data()[ch * n + pos];
    let project = |m: &Tensor, pos: usize, out_ch: usize| {
        let mut acc = 0.0;
        for in_ch in 0..c {
            acc += token(pos, in_ch) * m.at(&[in_ch, out_ch]);
        }
        acc
    };
    let mut out = Tensor::zeros(&[c, h, w])?;
    for i in 0..n {
        // Raw scores against every position.
        let mut scores = vec![0.0; n];
        for (j, s) in scores.iter_mut().enumerate() {
            let mut dot = 0.0;
            for ch in 0..c {
                dot += project(&p.w_q, i, ch) * project(&p.w_k, j, ch);
            }
            *s = if p.scale_by_sqrt_d {
                dot / (c as f64).sqrt()
            } else {
                dot
            };
        }
        let mut denom = 0.0;
        for &s in &scores {
            denom += s.exp();
        }
        for ch in 0..c {
            let mut acc = 0.0;
            for (j, &s) in scores.iter().enumerate() {
                acc += (s.exp() / denom) * project(&p.w_v, j, ch);
            }
            out.data_mut()[ch * n + i] = acc;
        }
    }
    Ok(out)
}

/// Zero-padded 2-D sliding inner product with a `K×K` kernel, applied per
/// channel. Oriented so that the frozen strip composition equals it with
/// the rank-1 kernel directly (no flip).
pub fn oracle_conv2d_same(x: &Tensor, kernel: &Tensor) -> TensorResult<Tensor> {
    let (c, h, w) = x.dims3("oracle_conv2d_same")?;
    let (kh, kw) = kernel.dims2("oracle_conv2d_same")?;
    let (ch_half, cw_half) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut out = Tensor::zeros(&[c, h, w])?;
    for ci in 0..c {
        for hi in 0..h {
            for wi in 0..w {
                let mut acc = 0.0;
                for i in 0..kh {
                    for j in 0..kw {
                        let sh = hi as isize - ch_half + i as isize;
                        let sw = wi as isize - cw_half + j as isize;
                        let v = if sh < 0 || sh >= h as isize || sw < 0 || sw >= w as isize {
                            0.0
                        } else {
                            x.at(&[ci, sh as usize, sw as usize])
                        };
                        acc += kernel.at(&[i, j]) * v;
                    }
                }
                out.data_mut()[(ci * h + hi) * w + wi] = acc;
            }
        }
    }
    Ok(out)
}

/// Frame pooling via the obvious five-deep loop.
pub fn oracle_frame_pool(x: &Tensor) -> TensorResult<Tensor> {
    let (b, c, t, h, w) = x.dims5("oracle_frame_pool")?;
    let mut out = Tensor::zeros(&[b, t, c])?;
    for bi in 0..b {
        for ti in 0..t {
            for ci in 0..c {
                let mut acc = 0.0;
                for hi in 0..h {
                    for wi in 0..w {
                        acc += x.at(&[bi, ci, ti, hi, wi]);
                    }
                }
                out.data_mut()[(bi * t + ti) * c + ci] = acc / (h * w) as f64;
            }
        }
    }
    Ok(out)
}

fn activate(act: Activation, v: f64) -> f64 {
    match act {
        Activation::Identity => v,
        Activation::ReLU => {
            if v > 0.0 {
                v
            } else {
                0.0
            }
        }
        Activation::Tanh => v.tanh(),
    }
}

/// One literal message-passing pass over an explicit edge list: for every
/// node, scan the edges for in-neighbors, average them, apply both maps.
fn oracle_message_passing(
    nodes: &[f64],
    n: usize,
    c: usize,
    edges: &[(usize, usize)],
    p: &GnnLayerParams,
) -> Vec<f64> {
    let mut h = nodes.to_vec();
    for _ in 0..p.layers {
        let mut next = vec![0.0; n * c];
        for t in 0..n {
            let mut nbr_sum = vec![0.0; c];
            let mut nbr_count = 0usize;
            for &(src, dst) in edges {
                if dst == t {
                    for (ci, s) in nbr_sum.iter_mut().enumerate() {
                        *s += h[src * c + ci];
                    }
                    nbr_count += 1;
                }
            }
            for i in 0..c {
                let mut z = p.bias.data()[i];
                for j in 0..c {
                    z += p.w_self.at(&[i, j]) * h[t * c + j];
                    if nbr_count > 0 {
                        z += p.w_nbr.at(&[i, j]) * (nbr_sum[j] / nbr_count as f64);
                    }
                }
                next[t * c + i] = activate(p.activation, z);
            }
        }
        h = next;
    }
    h
}

/// Chain message passing per batch element via the literal per-node loops.
pub fn oracle_gnn_forward(g: &ChainGraph, p: &GnnLayerParams) -> TensorResult<Tensor> {
    let (b, t, c) = g.nodes().dims3("oracle_gnn_forward")?;
    let mut out = Vec::with_capacity(b * t * c);
    for bi in 0..b {
        let block = &g.nodes().data()[bi * t * c..(bi + 1) * t * c];
        out.extend(oracle_message_passing(block, t, c, g.edges(), p));
    }
    Tensor::new(vec![b, t, c], out)
}

/// Residual broadcast via the obvious five-deep loop.
pub fn oracle_broadcast_add(x: &Tensor, f: &Tensor) -> TensorResult<Tensor> {
    let (b, c, t, h, w) = x.dims5("oracle_broadcast_add")?;
    let mut out = Tensor::zeros(&[b, c, t, h, w])?;
    for bi in 0..b {
        for ci in 0..c {
            for ti in 0..t {
                for hi in 0..h {
                    for wi in 0..w {
                        let idx = (((bi * c + ci) * t + ti) * h + hi) * w + wi;
                        out.data_mut()[idx] = x.at(&[bi, ci, ti, hi, wi]) + f.at(&[bi, ti, ci]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Object branch via literal loops: all-pairs edges within each frame,
/// message passing, a mean over objects, and the broadcast oracle.
pub fn oracle_object_branch(
    x: &Tensor,
    o: &ObjectFeatures,
    p_o: &GnnLayerParams,
) -> TensorResult<Tensor> {
    let (b, c, t, _h, _w) = x.dims5("oracle_object_branch")?;
    let n = o.values().shape()[2];
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                edges.push((i, j));
            }
        }
    }
    let mut g = Tensor::zeros(&[b, t, c])?;
    for bi in 0..b {
        for ti in 0..t {
            let base = (bi * t + ti) * n * c;
            let refined =
                oracle_message_passing(&o.values().data()[base..base + n * c], n, c, &edges, p_o);
            for ci in 0..c {
                let mut acc = 0.0;
                for obj in 0..n {
                    acc += refined[obj * c + ci];
                }
                g.data_mut()[(bi * t + ti) * c + ci] = acc / n as f64;
            }
        }
    }
    oracle_broadcast_add(x, &g)
}

/// The full frame-reasoning pipeline assembled from the loop oracles.
pub fn oracle_tfrm(
    x: &Tensor,
    p: &GnnLayerParams,
    objects: Option<&ObjectFeatures>,
    p_o: Option<&GnnLayerParams>,
) -> TensorResult<Tensor> {
    let nodes = oracle_frame_pool(x)?;
    let graph = ChainGraph::new(nodes)?;
    let refined = oracle_gnn_forward(&graph, p)?;
    let mut out = oracle_broadcast_add(x, &refined)?;
    if let (Some(o), Some(p_o)) = (objects, p_o) {
        out = oracle_object_branch(&out, o, p_o)?;
    }
    Ok(out)
}

/// Fusion transcribed token by token: project, bias, average, scale, add.
pub fn oracle_fuse(sample: &ConditionedSample, p: &FusionParams) -> TensorResult<Tensor> {
    let (n_tok, d_t) = sample.text_tokens.dims2("oracle_fuse")?;
    let d_a = p.w.shape()[0];
    let mut out = vec![0.0; d_a];
    for (i, o) in out.iter_mut().enumerate() {
        let mut token_sum = 0.0;
        for tok in 0..n_tok {
            let mut proj = 0.0;
            for j in 0..d_t {
                proj += sample.text_tokens.at(&[tok, j]) * p.w.at(&[i, j]);
            }
            token_sum += proj + p.b.data()[i];
        }
        *o = sample.audio_feature.data()[i] + p.lambda_weight * (token_sum / n_tok as f64);
    }
    Tensor::new(vec![d_a], out)
}

/// Mean squared error by explicit accumulation.
pub fn oracle_noise_loss(eps_true: &Tensor, eps_pred: &Tensor) -> TensorResult<f64> {
    assert_eq!(eps_true.shape(), eps_pred.shape());
    let mut acc = 0.0;
    for i in 0..eps_true.len() {
        let d = eps_true.data()[i] - eps_pred.data()[i];
        acc += d * d;
    }
    Ok(acc / eps_true.len() as f64)
}

/// Direct evaluation of the scorer outside the loss wrapper.
pub fn oracle_sync_loss(
    video: &Tensor,
    audio: &Tensor,
    scorer: &dyn SyncScorer,
) -> LossResult<f64> {
    scorer.score(video, audio)
}

/// Per-layer loop arithmetic around the same extractor object.
pub fn oracle_lpips_loss(
    x_hat: &Tensor,
    x: &Tensor,
    extractor: &dyn FeatureExtractor,
    layers: &[usize],
) -> LossResult<f64> {
    let mut total = 0.0;
    for &layer in layers {
        let fh = extractor.extract_layer(x_hat, layer)?;
        let fx = extractor.extract_layer(x, layer)?;
        let mut acc = 0.0;
        for i in 0..fh.len() {
            let d = fh.data()[i] - fx.data()[i];
            acc += d * d;
        }
        total += acc / fh.len() as f64;
    }
    Ok(total)
}

/// Encoder distance with explicit accumulation.
pub fn oracle_trepa_loss(
    clip_hat: &Tensor,
    clip: &Tensor,
    encoder: &dyn FeatureExtractor,
) -> LossResult<f64> {
    let eh = encoder.extract(clip_hat)?;
    let ec = encoder.extract(clip)?;
    let mut acc = 0.0;
    for i in 0..eh.len() {
        let d = eh.data()[i] - ec.data()[i];
        acc += d * d;
    }
    Ok(acc / eh.len() as f64)
}

/// Independent transcription of the weighted total, accumulated in the same
/// left-to-right term order so agreement is exact.
pub fn oracle_total_loss(noise: f64, sync: f64, lpips: f64, trepa: f64, w: &LossWeights) -> f64 {
    let mut acc = 0.0;
    acc += w.lambda1 * noise;
    acc += w.lambda2 * sync;
    acc += w.lambda3 * lpips;
    acc += w.lambda4 * trepa;
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oracles_are_deterministic() {
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let x = Tensor::random_uniform(&[2, 4, 5], -1.0, 1.0, &mut r).unwrap();
        let a = Tensor::random_uniform(&[3], 0.0, 1.0, &mut r).unwrap();
        let once = oracle_strip_apply(&x, &a, StripDirection::Horizontal).unwrap();
        let twice = oracle_strip_apply(&x, &a, StripDirection::Horizontal).unwrap();
        assert_eq!(
            once, twice,
            "two runs on identical inputs must be bit-identical"
        );
    }

    #[test]
    fn oracles_reproduce_trivial_values() {
        let mut r = ChaCha8Rng::seed_from_u64(98);
        // Center one-hot strip weights reproduce the input exactly.
        let x = Tensor::random_uniform(&[2, 4, 4], -1.0, 1.0, &mut r).unwrap();
        let one_hot = Tensor::new(vec![3], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(
            oracle_strip_apply(&x, &one_hot, StripDirection::Vertical).unwrap(),
            x
        );
        // Zero fusion weight passes the audio feature through untouched.
        let sample = ConditionedSample::new(
            "t",
            Tensor::random_uniform(&[3], -1.0, 1.0, &mut r).unwrap(),
            Tensor::random_uniform(&[2, 2], -1.0, 1.0, &mut r).unwrap(),
            Tensor::random_uniform(&[3], -1.0, 1.0, &mut r).unwrap(),
        )
        .unwrap();
        let params = FusionParams::new(
            Tensor::random_uniform(&[3, 2], -1.0, 1.0, &mut r).unwrap(),
            Tensor::random_uniform(&[3], -1.0, 1.0, &mut r).unwrap(),
        )
        .unwrap()
        .with_lambda(0.0)
        .unwrap();
        assert_eq!(oracle_fuse(&sample, &params).unwrap(), sample.audio_feature);
        // Identical tensors have zero loss.
        assert_eq!(oracle_noise_loss(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn strip_oracle_respects_explicit_zero_padding() {
        // A single row [1, 2, 3] with kernel [a, b, c]: the first output is
        // a·0 + b·1 + c·2 by the literal formula.
        let x = Tensor::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let a = Tensor::new(vec![3], vec![10.0, 100.0, 1000.0]).unwrap();
        let out = oracle_strip_apply(&x, &a, StripDirection::Horizontal).unwrap();
        assert_eq!(out.data(), &[2100.0, 10.0 + 200.0 + 3000.0, 20.0 + 300.0]);
    }
}
