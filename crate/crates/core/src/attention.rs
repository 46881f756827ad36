//! Reference self-attention, the directional strip-attention operators and
//! their horizontal-then-vertical composition, the rank-1 effective kernel
//! of the frozen composition, and closed-form FLOP models for both paths.
//!
//! A strip operator integrates along one spatial axis with a length-K weight
//! vector generated from the input itself: global average pooling, a dense
//! K×C map, and a sigmoid. The weights are shared across channels and
//! positions. Out-of-range taps read zero (zero padding at both ends), K is
//! restricted to odd lengths so `K/2` centers the window, and the vertical
//! operator derives its weights from the horizontally refined tensor, not
//! the original input.

use crate::par;
use crate::tensor::{Tensor, TensorError, TensorResult};

/// Axis a strip operator integrates along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripDirection {
    Horizontal,
    Vertical,
}

/// Projection matrices for reference self-attention over `C`-dim tokens.
///
/// The attention map is `Softmax(QKᵀ)` with no `1/√d` scale by default;
/// `scale_by_sqrt_d` opts into the scaled variant for benchmark parity with
/// common practice.
#[derive(Debug, Clone)]
pub struct SelfAttentionParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub scale_by_sqrt_d: bool,
}

impl SelfAttentionParams {
    pub fn new(w_q: Tensor, w_k: Tensor, w_v: Tensor) -> TensorResult<Self> {
        for (name, w) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v)] {
            let (r, c) = w.dims2("SelfAttentionParams::new")?;
            if r != c || r != w_q.shape()[0] {
                return Err(TensorError::InvalidArgument {
                    op: "SelfAttentionParams::new",
                    reason: format!("{name} must be square C×C, got {:?}", w.shape()),
                });
            }
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            scale_by_sqrt_d: false,
        })
    }

    pub fn with_scaling(mut self, on: bool) -> Self {
        self.scale_by_sqrt_d = on;
        self
    }

    pub fn channels(&self) -> usize {
        self.w_q.shape()[0]
    }
}

/// Dynamic-weight branch of one strip operator: a dense `K×C` map applied to
/// the pooled channel vector, plus a bias, squashed by a sigmoid.
#[derive(Debug, Clone)]
pub struct StripParams {
    pub direction: StripDirection,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl StripParams {
    pub fn new(direction: StripDirection, weight: Tensor, bias: Tensor) -> TensorResult<Self> {
        let (k, _c) = weight.dims2("StripParams::new")?;
        if bias.rank() != 1 || bias.shape()[0] != k {
            return Err(TensorError::ShapeMismatch {
                op: "StripParams::new",
                left: weight.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        if k % 2 == 0 {
            return Err(TensorError::InvalidArgument {
                op: "StripParams::new",
                reason: format!("strip length K must be odd, got {k}"),
            });
        }
        Ok(Self {
            direction,
            weight,
            bias,
        })
    }

    pub fn k(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Horizontal-then-vertical strip operator pair sharing one strip length K.
#[derive(Debug, Clone)]
pub struct StdaParams {
    pub horizontal: StripParams,
    pub vertical: StripParams,
}

impl StdaParams {
    pub fn new(horizontal: StripParams, vertical: StripParams) -> TensorResult<Self> {
        if horizontal.direction != StripDirection::Horizontal
            || vertical.direction != StripDirection::Vertical
        {
            return Err(TensorError::InvalidArgument {
                op: "StdaParams::new",
                reason: "branch directions must be (Horizontal, Vertical)".into(),
            });
        }
        if horizontal.k() != vertical.k() {
            return Err(TensorError::InvalidArgument {
                op: "StdaParams::new",
                reason: format!(
                    "both branches must share one K, got {} and {}",
                    horizontal.k(),
                    vertical.k()
                ),
            });
        }
        if horizontal.channels() != vertical.channels() {
            return Err(TensorError::ShapeMismatch {
                op: "StdaParams::new",
                left: horizontal.weight.shape().to_vec(),
                right: vertical.weight.shape().to_vec(),
            });
        }
        Ok(Self {
            horizontal,
            vertical,
        })
    }

    pub fn k(&self) -> usize {
        self.horizontal.k()
    }
}

/// Reference self-attention over a `[C, H, W]` tensor.
///
/// Spatial positions become N = H·W tokens of dimension C; the output is
/// `Softmax(QKᵀ)V` reshaped back to `[C, H, W]`.
pub fn self_attention(x: &Tensor, p: &SelfAttentionParams) -> TensorResult<Tensor> {
    let (c, h, w) = x.dims3("self_attention")?;
    if p.channels() != c {
        return Err(TensorError::ShapeMismatch {
            op: "self_attention",
            left: x.shape().to_vec(),
            right: p.w_q.shape().to_vec(),
        });
    }
    let n = h * w;
    // [C,H,W] -> tokens [N,C]
    let mut tokens = vec![0.0; n * c];
    for ch in 0..c {
        let plane = &x.data()[ch * n..(ch + 1) * n];
        for (pos, &v) in plane.iter().enumerate() {
            tokens[pos * c + ch] = v;
        }
    }
    let tokens = Tensor::new(vec![n, c], tokens)?;
    let q = tokens.matmul(&p.w_q)?;
    let k = tokens.matmul(&p.w_k)?;
    let v = tokens.matmul(&p.w_v)?;
    let mut scores = q.matmul(&k.transpose2d()?)?;
    if p.scale_by_sqrt_d {
        scores = scores.scale(1.0 / (c as f64).sqrt());
    }
    let out_tokens = scores.softmax_rows()?.matmul(&v)?;
    // tokens [N,C] -> [C,H,W]
    let mut out = vec![0.0; c * n];
    for pos in 0..n {
        for ch in 0..c {
            out[ch * n + pos] = out_tokens.data()[pos * c + ch];
        }
    }
    Tensor::new(vec![c, h, w], out)
}

/// Dynamic strip weights `A = σ(weight · gap(x) + bias) ∈ (0,1)^K`.
pub fn strip_weights(x: &Tensor, p: &StripParams) -> TensorResult<Tensor> {
    let (c, _h, _w) = x.dims3("strip_weights")?;
    if p.channels() != c {
        return Err(TensorError::ShapeMismatch {
            op: "strip_weights",
            left: x.shape().to_vec(),
            right: p.weight.shape().to_vec(),
        });
    }
    let pooled = x.gap_spatial()?;
    let k = p.k();
    let mut pre = vec![0.0; k];
    for (row, out) in pre.iter_mut().enumerate() {
        let w_row = &p.weight.data()[row * c..(row + 1) * c];
        let mut acc = 0.0;
        for (&wv, &gv) in w_row.iter().zip(pooled.data().iter()) {
            acc += wv * gv;
        }
        *out = acc + p.bias.data()[row];
    }
    Ok(Tensor::new(vec![k], pre)?.sigmoid())
}

/// Length-K weighted integration along one axis with zero padding:
/// `X̂[c,h,w] = Σ_k a[k] · X[c,h,w−K/2+k]` (horizontal; vertical shifts h).
pub fn strip_apply(x: &Tensor, a: &Tensor, direction: StripDirection) -> TensorResult<Tensor> {
    let (c, h, w) = x.dims3("strip_apply")?;
    if a.rank() != 1 || a.is_empty() {
        return Err(TensorError::RankMismatch {
            op: "strip_apply",
            expected: 1,
            shape: a.shape().to_vec(),
        });
    }
    let k = a.len();
    let half = (k / 2) as isize;
    let mut out = vec![0.0; c * h * w];
    // Accumulate one shifted copy per tap, k ascending, so each output
    // element sums its taps in the same order as the literal formula.
    for (tap, &weight) in a.data().iter().enumerate() {
        let shift = tap as isize - half;
        match direction {
            StripDirection::Horizontal => {
                // src = dst + shift must stay in [0, w)
                let dst_lo = if shift < 0 { (-shift) as usize } else { 0 };
                let dst_hi = if shift > 0 {
                    w.saturating_sub(shift as usize)
                } else {
                    w
                };
                if dst_lo >= dst_hi {
                    continue;
                }
                for ch in 0..c {
                    for row in 0..h {
                        let base = (ch * h + row) * w;
                        for dst_col in dst_lo..dst_hi {
                            let src_col = (dst_col as isize + shift) as usize;
                            out[base + dst_col] += weight * x.data()[base + src_col];
                        }
                    }
                }
            }
            StripDirection::Vertical => {
                for ch in 0..c {
                    for dst_row in 0..h {
                        let src_row = dst_row as isize + shift;
                        if src_row < 0 || src_row >= h as isize {
                            continue;
                        }
                        let dst_base = (ch * h + dst_row) * w;
                        let src_base = (ch * h + src_row as usize) * w;
                        for col in 0..w {
                            out[dst_base + col] += weight * x.data()[src_base + col];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}

/// One full strip operator: dynamic weights from `x`, then integration.
pub fn strip_operator(x: &Tensor, p: &StripParams) -> TensorResult<Tensor> {
    let a = strip_weights(x, p)?;
    strip_apply(x, &a, p.direction)
}

/// Horizontal-then-vertical composition with dynamic weights. The vertical
/// branch recomputes its weights from the horizontally refined tensor.
pub fn stda(x: &Tensor, p: &StdaParams) -> TensorResult<Tensor> {
    let refined = strip_operator(x, &p.horizontal)?;
    strip_operator(&refined, &p.vertical)
}

/// The composition with both weight vectors held fixed. This is the linear
/// operator whose kernel [`effective_kernel`] describes.
pub fn stda_frozen(x: &Tensor, a_h: &Tensor, a_v: &Tensor) -> TensorResult<Tensor> {
    let refined = strip_apply(x, a_h, StripDirection::Horizontal)?;
    strip_apply(&refined, a_v, StripDirection::Vertical)
}

/// Rank-1 `K×K` kernel `a_v ⊗ a_h` of the frozen composition: entry `[i][j]`
/// is the product of the vertical and horizontal path weights.
pub fn effective_kernel(a_h: &Tensor, a_v: &Tensor) -> TensorResult<Tensor> {
    if a_h.rank() != 1 || a_v.rank() != 1 || a_h.len() != a_v.len() {
        return Err(TensorError::ShapeMismatch {
            op: "effective_kernel",
            left: a_h.shape().to_vec(),
            right: a_v.shape().to_vec(),
        });
    }
    let k = a_h.len();
    let mut out = vec![0.0; k * k];
    for (i, &v) in a_v.data().iter().enumerate() {
        for (j, &h) in a_h.data().iter().enumerate() {
            out[i * k + j] = v * h;
        }
    }
    Tensor::new(vec![k, k], out)
}

/// Apply [`stda`] to each input independently; parallel under the `parallel`
/// feature with results identical to [`stda_batch_serial`].
pub fn stda_batch(inputs: &[Tensor], p: &StdaParams) -> TensorResult<Vec<Tensor>> {
    par::map_slice(inputs, |x| stda(x, p)).into_iter().collect()
}

/// Sequential reference for [`stda_batch`].
pub fn stda_batch_serial(inputs: &[Tensor], p: &StdaParams) -> TensorResult<Vec<Tensor>> {
    inputs.iter().map(|x| stda(x, p)).collect()
}

/// Multiply-accumulate counts for reference self-attention on an `H×W×C`
/// feature map: `3HWC²` for the Q/K/V projections and `(HW)²C` each for the
/// attention map and the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfAttentionFlops {
    pub projections: u64,
    pub attention_map: u64,
    pub weighted_sum: u64,
    pub total: u64,
}

pub fn flops_self_attention(h: usize, w: usize, c: usize) -> SelfAttentionFlops {
    let (h, w, c) = (h as u64, w as u64, c as u64);
    let hw = h * w;
    let projections = 3 * hw * c * c;
    let attention_map = hw * hw * c;
    let weighted_sum = hw * hw * c;
    SelfAttentionFlops {
        projections,
        attention_map,
        weighted_sum,
        total: projections + attention_map + weighted_sum,
    }
}

/// Multiply-accumulate counts for the two-direction strip composition:
/// `H·W·C·K` per integration plus the weight branch (pool `H·W·C`, dense map
/// `K·C`, sigmoid `K`), each doubled for the two directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StdaFlops {
    pub integration: u64,
    pub weight_branch: u64,
    pub total: u64,
}

pub fn flops_stda(h: usize, w: usize, c: usize, k: usize) -> StdaFlops {
    let (h, w, c, k) = (h as u64, w as u64, c as u64, k as u64);
    let integration = 2 * h * w * c * k;
    let weight_branch = 2 * (h * w * c + k * c + k);
    StdaFlops {
        integration,
        weight_branch,
        total: integration + weight_branch,
    }
}
