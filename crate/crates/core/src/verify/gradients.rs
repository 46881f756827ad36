//! Hand-derived analytic gradients for the verified compositions.
//!
//! Every function here scalarizes its target as `s = 0.5·‖output‖²` (losses
//! are already scalars) and returns exact chain-rule gradients. Finite
//! differences in [`super::gradcheck`] are the independent route that keeps
//! these honest. Only smooth activations (Tanh, Identity) are supported;
//! ReLU kinks would poison the finite-difference comparison.

use crate::attention::{strip_apply, strip_weights, StripDirection, StripParams};
use crate::condition_fusion::{fuse, ConditionedSample, FusionParams};
use crate::diffusion::extractors::{EmbeddingGapScorer, FixedLinearExtractor};
use crate::diffusion::{
    estimate_clean_latent, FeatureExtractor, LossError, LossResult, LossWeights, SyncScorer,
};
use crate::temporal_graph::{chain_edges, Activation, ChainGraph, GnnLayerParams};
use crate::tensor::{Tensor, TensorError, TensorResult};

/// Gradients of `s = 0.5·‖strip_operator(x, p)‖²` with respect to the
/// input and both weight-branch parameters.
#[derive(Debug, Clone)]
pub struct StripBranchGrads {
    pub x: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// The scalar objective the strip-branch gradients refer to.
pub fn strip_branch_objective(x: &Tensor, p: &StripParams) -> TensorResult<f64> {
    let a = strip_weights(x, p)?;
    let y = strip_apply(x, &a, p.direction)?;
    Ok(0.5 * y.data().iter().map(|v| v * v).sum::<f64>())
}

pub fn strip_branch_grads(x: &Tensor, p: &StripParams) -> TensorResult<StripBranchGrads> {
    let (c, h, w) = x.dims3("strip_branch_grads")?;
    let k = p.k();
    let half = (k / 2) as isize;
    let a = strip_weights(x, p)?;
    let y = strip_apply(x, &a, p.direction)?;
    let pooled = x.gap_spatial()?;

    let shifted_at = |t: &Tensor, ci: usize, hi: usize, wi: isize, hh: isize| -> f64 {
        // Reads with the strip's shift applied, zero outside.
        let (row, col) = (hi as isize + hh, wi);
        if row < 0 || row >= h as isize || col < 0 || col >= w as isize {
            0.0
        } else {
            t.at(&[ci, row as usize, col as usize])
        }
    };

    // q_k = Σ_i y_i · (x shifted by tap k)_i, the sensitivity of the
    // objective to each strip weight.
    let mut q = vec![0.0; k];
    for (tap, qk) in q.iter_mut().enumerate() {
        let shift = tap as isize - half;
        let mut acc = 0.0;
        for ci in 0..c {
            for hi in 0..h {
                for wi in 0..w {
                    let x_val = match p.direction {
                        StripDirection::Horizontal => shifted_at(x, ci, hi, wi as isize + shift, 0),
                        StripDirection::Vertical => shifted_at(x, ci, hi, wi as isize, shift),
                    };
                    acc += y.at(&[ci, hi, wi]) * x_val;
                }
            }
        }
        *qk = acc;
    }

    // Through the sigmoid: du_k = q_k · a_k (1 − a_k).
    let du: Vec<f64> = q
        .iter()
        .zip(a.data().iter())
        .map(|(&qk, &ak)| qk * ak * (1.0 - ak))
        .collect();

    let mut grad_weight = Tensor::zeros(&[k, c])?;
    for tap in 0..k {
        for (ci, &g) in pooled.data().iter().enumerate() {
            grad_weight.data_mut()[tap * c + ci] = du[tap] * g;
        }
    }
    let grad_bias = Tensor::new(vec![k], du.clone())?;

    // Input path 1: the integration's adjoint, a correlation with the
    // flipped strip. Path 2: the pooled-weight branch spreads uniformly
    // over each channel's spatial positions.
    let mut grad_x = Tensor::zeros(&[c, h, w])?;
    for (tap, &ak) in a.data().iter().enumerate() {
        let shift = half - tap as isize;
        for ci in 0..c {
            for hi in 0..h {
                for wi in 0..w {
                    let y_val = match p.direction {
                        StripDirection::Horizontal => {
                            shifted_at(&y, ci, hi, wi as isize + shift, 0)
                        }
                        StripDirection::Vertical => shifted_at(&y, ci, hi, wi as isize, shift),
                    };
                    grad_x.data_mut()[(ci * h + hi) * w + wi] += ak * y_val;
                }
            }
        }
    }
    let inv_hw = 1.0 / (h * w) as f64;
    for ci in 0..c {
        let mut dg = 0.0;
        for (tap, &duk) in du.iter().enumerate() {
            dg += duk * p.weight.at(&[tap, ci]);
        }
        let spread = dg * inv_hw;
        for hi in 0..h {
            for wi in 0..w {
                grad_x.data_mut()[(ci * h + hi) * w + wi] += spread;
            }
        }
    }

    Ok(StripBranchGrads {
        x: grad_x,
        weight: grad_weight,
        bias: grad_bias,
    })
}

/// Gradients of `s = 0.5·‖gnn_forward(g, p)‖²` with respect to the node
/// features and all three parameter blocks.
#[derive(Debug, Clone)]
pub struct GnnGrads {
    pub nodes: Tensor,
    pub w_self: Tensor,
    pub w_nbr: Tensor,
    pub bias: Tensor,
}

pub fn gnn_objective(g: &ChainGraph, p: &GnnLayerParams) -> TensorResult<f64> {
    let out = crate::temporal_graph::gnn_forward(g, p)?;
    Ok(0.5 * out.data().iter().map(|v| v * v).sum::<f64>())
}

pub fn gnn_grads(g: &ChainGraph, p: &GnnLayerParams) -> TensorResult<GnnGrads> {
    if matches!(p.activation, Activation::ReLU) {
        return Err(TensorError::InvalidArgument {
            op: "gnn_grads",
            reason: "ReLU is excluded from gradient verification (kinks)".into(),
        });
    }
    let (b, t, c) = g.nodes().dims3("gnn_grads")?;
    let edges = chain_edges(t);
    let mut in_nbrs = vec![Vec::new(); t];
    for &(src, dst) in &edges {
        in_nbrs[dst].push(src);
    }

    let act = p.activation;
    let layer_forward = |h: &[f64]| -> (Vec<f64>, Vec<f64>) {
        // Returns (means, next) for one layer over one batch block.
        let mut means = vec![0.0; t * c];
        for ti in 0..t {
            if in_nbrs[ti].is_empty() {
                continue;
            }
            let inv = 1.0 / in_nbrs[ti].len() as f64;
            for &s in &in_nbrs[ti] {
                for ci in 0..c {
                    means[ti * c + ci] += h[s * c + ci];
                }
            }
            for ci in 0..c {
                means[ti * c + ci] *= inv;
            }
        }
        let mut next = vec![0.0; t * c];
        for ti in 0..t {
            for i in 0..c {
                let mut z = p.bias.data()[i];
                for j in 0..c {
                    z += p.w_self.at(&[i, j]) * h[ti * c + j]
                        + p.w_nbr.at(&[i, j]) * means[ti * c + j];
                }
                next[ti * c + i] = match act {
                    Activation::Identity => z,
                    Activation::Tanh => z.tanh(),
                    Activation::ReLU => unreachable!(),
                };
            }
        }
        (means, next)
    };

    let mut grad_nodes = vec![0.0; b * t * c];
    let mut grad_w_self = vec![0.0; c * c];
    let mut grad_w_nbr = vec![0.0; c * c];
    let mut grad_bias = vec![0.0; c];

    for bi in 0..b {
        // Forward, storing every layer's inputs and neighbor means.
        let mut hs = vec![g.nodes().data()[bi * t * c..(bi + 1) * t * c].to_vec()];
        let mut means_per_layer = Vec::new();
        for _ in 0..p.layers {
            let (means, next) = layer_forward(hs.last().unwrap());
            means_per_layer.push(means);
            hs.push(next);
        }
        // Backward from s = 0.5·‖h^L‖².
        let mut d: Vec<f64> = hs.last().unwrap().clone();
        for layer in (0..p.layers).rev() {
            let h_in = &hs[layer];
            let h_out = &hs[layer + 1];
            let means = &means_per_layer[layer];
            let mut dz = vec![0.0; t * c];
            for idx in 0..t * c {
                let deriv = match act {
                    Activation::Identity => 1.0,
                    Activation::Tanh => 1.0 - h_out[idx] * h_out[idx],
                    Activation::ReLU => unreachable!(),
                };
                dz[idx] = d[idx] * deriv;
            }
            for ti in 0..t {
                for i in 0..c {
                    let dzi = dz[ti * c + i];
                    grad_bias[i] += dzi;
                    for j in 0..c {
                        grad_w_self[i * c + j] += dzi * h_in[ti * c + j];
                        grad_w_nbr[i * c + j] += dzi * means[ti * c + j];
                    }
                }
            }
            let mut d_prev = vec![0.0; t * c];
            for ti in 0..t {
                // Self path.
                for j in 0..c {
                    let mut acc = 0.0;
                    for i in 0..c {
                        acc += p.w_self.at(&[i, j]) * dz[ti * c + i];
                    }
                    d_prev[ti * c + j] += acc;
                }
                // Neighbor path: h_ti feeds every u with ti in N(u).
                for u in 0..t {
                    if !in_nbrs[u].contains(&ti) {
                        continue;
                    }
                    let inv = 1.0 / in_nbrs[u].len() as f64;
                    for j in 0..c {
                        let mut acc = 0.0;
                        for i in 0..c {
                            acc += p.w_nbr.at(&[i, j]) * dz[u * c + i];
                        }
                        d_prev[ti * c + j] += inv * acc;
                    }
                }
            }
            d = d_prev;
        }
        grad_nodes[bi * t * c..(bi + 1) * t * c].copy_from_slice(&d);
    }

    Ok(GnnGrads {
        nodes: Tensor::new(vec![b, t, c], grad_nodes)?,
        w_self: Tensor::new(vec![c, c], grad_w_self)?,
        w_nbr: Tensor::new(vec![c, c], grad_w_nbr)?,
        bias: Tensor::new(vec![c], grad_bias)?,
    })
}

/// Gradients of `s = 0.5·‖fuse(sample, p)‖²` in every input and parameter.
#[derive(Debug, Clone)]
pub struct FuseGrads {
    pub audio: Tensor,
    pub text: Tensor,
    pub w: Tensor,
    pub b: Tensor,
    pub lambda: f64,
}

pub fn fuse_objective(sample: &ConditionedSample, p: &FusionParams) -> TensorResult<f64> {
    let f = fuse(sample, p)?;
    Ok(0.5 * f.data().iter().map(|v| v * v).sum::<f64>())
}

pub fn fuse_grads(sample: &ConditionedSample, p: &FusionParams) -> TensorResult<FuseGrads> {
    let (n_tok, d_t) = sample.text_tokens.dims2("fuse_grads")?;
    let d_a = p.audio_dim();
    let fused = fuse(sample, p)?;
    let lambda = p.lambda_weight;
    let inv_n = 1.0 / n_tok as f64;

    // Token mean after projection: m_i = Σ_j t̄_j W[i][j] + b_i.
    let mut token_mean = vec![0.0; d_t];
    for tok in 0..n_tok {
        for j in 0..d_t {
            token_mean[j] += sample.text_tokens.at(&[tok, j]) * inv_n;
        }
    }
    let mut m = vec![0.0; d_a];
    for (i, mi) in m.iter_mut().enumerate() {
        let mut acc = p.b.data()[i];
        for (j, &tj) in token_mean.iter().enumerate() {
            acc += p.w.at(&[i, j]) * tj;
        }
        *mi = acc;
    }

    let grad_audio = fused.clone();
    let grad_lambda: f64 = fused
        .data()
        .iter()
        .zip(m.iter())
        .map(|(&f, &mi)| f * mi)
        .sum();
    let grad_b = fused.scale(lambda);
    let mut grad_w = Tensor::zeros(&[d_a, d_t])?;
    for i in 0..d_a {
        for (j, &tj) in token_mean.iter().enumerate() {
            grad_w.data_mut()[i * d_t + j] = lambda * fused.data()[i] * tj;
        }
    }
    // Every token shares the same gradient row.
    let mut grad_row = vec![0.0; d_t];
    for (j, gr) in grad_row.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..d_a {
            acc += fused.data()[i] * p.w.at(&[i, j]);
        }
        *gr = lambda * inv_n * acc;
    }
    let mut grad_text = Tensor::zeros(&[n_tok, d_t])?;
    for tok in 0..n_tok {
        grad_text.data_mut()[tok * d_t..(tok + 1) * d_t].copy_from_slice(&grad_row);
    }

    Ok(FuseGrads {
        audio: grad_audio,
        text: grad_text,
        w: grad_w,
        b: grad_b,
        lambda: grad_lambda,
    })
}

/// `d(noise_loss)/d(eps_pred) = 2(pred − true)/n`.
pub fn noise_loss_grad(eps_true: &Tensor, eps_pred: &Tensor) -> TensorResult<Tensor> {
    if eps_true.shape() != eps_pred.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "noise_loss_grad",
            left: eps_true.shape().to_vec(),
            right: eps_pred.shape().to_vec(),
        });
    }
    let n = eps_true.len() as f64;
    Ok(eps_pred.sub(eps_true)?.scale(2.0 / n))
}

/// Everything fixed except the predicted noise: the latent `z_t`, the true
/// noise, the schedule point, the reference images, and the extractor stack.
/// All four component losses and the weighted total become functions of
/// `eps_pred` through the one-step clean-latent estimate.
pub struct LossPipeline {
    pub z_t: Tensor,
    pub eps_true: Tensor,
    pub alpha_bar_t: f64,
    pub reference: Tensor,
    pub audio: Tensor,
    pub lpips_extractor: FixedLinearExtractor,
    pub lpips_layers: Vec<usize>,
    pub trepa_encoder: FixedLinearExtractor,
    pub sync_scorer: EmbeddingGapScorer,
    pub weights: LossWeights,
}

impl LossPipeline {
    fn gamma(&self) -> f64 {
        -(1.0 - self.alpha_bar_t).sqrt() / self.alpha_bar_t.sqrt()
    }

    pub fn estimate(&self, eps_pred: &Tensor) -> LossResult<Tensor> {
        estimate_clean_latent(&self.z_t, eps_pred, self.alpha_bar_t)
    }

    pub fn noise(&self, eps_pred: &Tensor) -> LossResult<f64> {
        crate::diffusion::noise_loss(&self.eps_true, eps_pred)
    }

    pub fn lpips(&self, eps_pred: &Tensor) -> LossResult<f64> {
        let z0 = self.estimate(eps_pred)?;
        crate::diffusion::lpips_loss(
            &z0,
            &self.reference,
            &self.lpips_extractor,
            &self.lpips_layers,
        )
    }

    pub fn trepa(&self, eps_pred: &Tensor) -> LossResult<f64> {
        let z0 = self.estimate(eps_pred)?;
        crate::diffusion::trepa_loss(&z0, &self.reference, &self.trepa_encoder)
    }

    pub fn sync(&self, eps_pred: &Tensor) -> LossResult<f64> {
        let z0 = self.estimate(eps_pred)?;
        self.sync_scorer.score(&z0, &self.audio)
    }

    pub fn total(&self, eps_pred: &Tensor) -> LossResult<f64> {
        Ok(crate::diffusion::total_loss(
            self.noise(eps_pred)?,
            self.sync(eps_pred)?,
            self.lpips(eps_pred)?,
            self.trepa(eps_pred)?,
            &self.weights,
        ))
    }

    pub fn noise_grad(&self, eps_pred: &Tensor) -> LossResult<Tensor> {
        Ok(noise_loss_grad(&self.eps_true, eps_pred)?)
    }

    /// Gradient of a mean-reduced quadratic `‖M·d‖²/m` back through the
    /// estimate: `γ · Mᵀ(M d) · 2/m` reshaped to the prediction's shape.
    fn quadratic_feature_grad(
        &self,
        matrix: &Tensor,
        diff_features: &Tensor,
        shape: &[usize],
    ) -> LossResult<Tensor> {
        let (rows, cols) = matrix
            .dims2("quadratic_feature_grad")
            .map_err(LossError::from)?;
        let mut grad = vec![0.0; cols];
        let scale = self.gamma() * 2.0 / rows as f64;
        for r in 0..rows {
            let coeff = scale * diff_features.data()[r];
            let w = &matrix.data()[r * cols..(r + 1) * cols];
            for (g, &wv) in grad.iter_mut().zip(w.iter()) {
                *g += coeff * wv;
            }
        }
        Ok(Tensor::new(shape.to_vec(), grad)?)
    }

    pub fn lpips_grad(&self, eps_pred: &Tensor) -> LossResult<Tensor> {
        let z0 = self.estimate(eps_pred)?;
        let mut total = Tensor::zeros(eps_pred.shape())?;
        for &layer in &self.lpips_layers {
            let f_hat = self.lpips_extractor.extract_layer(&z0, layer)?;
            let f_ref = self.lpips_extractor.extract_layer(&self.reference, layer)?;
            let diff = f_hat.sub(&f_ref).map_err(LossError::from)?;
            let g = self.quadratic_feature_grad(
                self.lpips_extractor.layer_matrix(layer),
                &diff,
                eps_pred.shape(),
            )?;
            total = total.add(&g).map_err(LossError::from)?;
        }
        Ok(total)
    }

    pub fn trepa_grad(&self, eps_pred: &Tensor) -> LossResult<Tensor> {
        let z0 = self.estimate(eps_pred)?;
        let e_hat = self.trepa_encoder.extract(&z0)?;
        let e_ref = self.trepa_encoder.extract(&self.reference)?;
        let diff = e_hat.sub(&e_ref).map_err(LossError::from)?;
        self.quadratic_feature_grad(self.trepa_encoder.layer_matrix(0), &diff, eps_pred.shape())
    }

    pub fn sync_grad(&self, eps_pred: &Tensor) -> LossResult<Tensor> {
        let z0 = self.estimate(eps_pred)?;
        let ev = self.sync_scorer.video_map.extract(&z0)?;
        let ea = self.sync_scorer.audio_map.extract(&self.audio)?;
        let gap = ev.sub(&ea).map_err(LossError::from)?;
        self.quadratic_feature_grad(
            self.sync_scorer.video_map.layer_matrix(0),
            &gap,
            eps_pred.shape(),
        )
    }

    pub fn total_grad(&self, eps_pred: &Tensor) -> LossResult<Tensor> {
        let w = &self.weights;
        let g = self
            .noise_grad(eps_pred)?
            .scale(w.lambda1)
            .add(&self.sync_grad(eps_pred)?.scale(w.lambda2))
            .map_err(LossError::from)?
            .add(&self.lpips_grad(eps_pred)?.scale(w.lambda3))
            .map_err(LossError::from)?
            .add(&self.trepa_grad(eps_pred)?.scale(w.lambda4))
            .map_err(LossError::from)?;
        Ok(g)
    }
}
