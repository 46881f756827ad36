//! Chain-graph reasoning over video frames: spatial pooling to per-frame
//! nodes, bidirectional chain edges, mean-aggregation message passing, a
//! residual broadcast back onto the latent, and an optional object branch
//! over per-frame object descriptors.
//!
//! The chain topology is the point: each node connects only to its direct
//! predecessor and successor, so information moves exactly one hop per
//! message-passing layer. Frames are indexed from zero throughout.

use crate::par;
use crate::tensor::{Tensor, TensorError, TensorResult};

/// Activation applied after each message-passing layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    ReLU,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::ReLU => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }
}

/// One message-passing configuration: separate self/neighbor linear maps, a
/// bias, an activation, and a layer count.
///
/// `layers == 0` is the degenerate skip: the node features pass through
/// unchanged, which keeps influence probes layer-countable from zero.
#[derive(Debug, Clone)]
pub struct GnnLayerParams {
    pub w_self: Tensor,
    pub w_nbr: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    pub layers: usize,
}

impl GnnLayerParams {
    pub fn new(
        w_self: Tensor,
        w_nbr: Tensor,
        bias: Tensor,
        activation: Activation,
        layers: usize,
    ) -> TensorResult<Self> {
        let (r, c) = w_self.dims2("GnnLayerParams::new")?;
        let (r2, c2) = w_nbr.dims2("GnnLayerParams::new")?;
        if r != c || r2 != c2 || r != r2 {
            return Err(TensorError::InvalidArgument {
                op: "GnnLayerParams::new",
                reason: format!(
                    "w_self {:?} and w_nbr {:?} must be square with equal extent",
                    w_self.shape(),
                    w_nbr.shape()
                ),
            });
        }
        if bias.rank() != 1 || bias.shape()[0] != r {
            return Err(TensorError::ShapeMismatch {
                op: "GnnLayerParams::new",
                left: w_self.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            w_self,
            w_nbr,
            bias,
            activation,
            layers,
        })
    }

    /// All-zero maps and bias: the residual path leaves the latent untouched.
    pub fn zeros(channels: usize) -> Self {
        Self {
            w_self: Tensor::zeros(&[channels, channels]).unwrap(),
            w_nbr: Tensor::zeros(&[channels, channels]).unwrap(),
            bias: Tensor::zeros(&[channels]).unwrap(),
            activation: Activation::Identity,
            layers: 1,
        }
    }

    pub fn channels(&self) -> usize {
        self.w_self.shape()[0]
    }
}

/// Pooled per-frame node features plus the bidirectional chain edge list.
///
/// The edge set is exactly `{(t, t+1), (t+1, t)}` for consecutive zero-based
/// frame indices: no self-loops, no skip connections.
#[derive(Debug, Clone)]
pub struct ChainGraph {
    nodes: Tensor,
    edges: Vec<(usize, usize)>,
}

impl ChainGraph {
    /// Build the chain over `[B, T, C]` node features; edges are derived, so
    /// the chain invariant holds by construction.
    pub fn new(nodes: Tensor) -> TensorResult<Self> {
        let (_b, t, _c) = nodes.dims3("ChainGraph::new")?;
        Ok(Self {
            nodes,
            edges: chain_edges(t),
        })
    }

    pub fn nodes(&self) -> &Tensor {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn frames(&self) -> usize {
        self.nodes.shape()[1]
    }
}

/// Directed edges of the bidirectional path over `t` frames:
/// `2(t-1)` edges, each node linked to its direct neighbors only.
pub fn chain_edges(t: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(2 * t.saturating_sub(1));
    for i in 0..t.saturating_sub(1) {
        edges.push((i, i + 1));
        edges.push((i + 1, i));
    }
    edges
}

/// Spatial mean of every frame: `[B, C, T, H, W] -> [B, T, C]`.
pub fn frame_pool(x: &Tensor) -> TensorResult<Tensor> {
    let (b, c, t, h, w) = x.dims5("frame_pool")?;
    let hw = h * w;
    let mut out = vec![0.0; b * t * c];
    for bi in 0..b {
        for ci in 0..c {
            for ti in 0..t {
                let base = ((bi * c + ci) * t + ti) * hw;
                let sum: f64 = x.data()[base..base + hw].iter().sum();
                out[(bi * t + ti) * c + ci] = sum / hw as f64;
            }
        }
    }
    Tensor::new(vec![b, t, c], out)
}

/// In-neighbor lists for `n` nodes under a directed edge list.
fn in_neighbors(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut nbrs = vec![Vec::new(); n];
    for &(src, dst) in edges {
        nbrs[dst].push(src);
    }
    nbrs
}

/// Core message-passing update over one batch element's node block.
///
/// Per layer: `h'_t = act(w_self·h_t + w_nbr·mean_{t'∈N(t)} h_{t'} + bias)`,
/// where `N(t)` is the in-neighborhood. Empty neighborhoods contribute a
/// zero vector.
fn message_passing(
    nodes: &[f64],
    n: usize,
    c: usize,
    nbrs: &[Vec<usize>],
    p: &GnnLayerParams,
) -> Vec<f64> {
    let mut h = nodes.to_vec();
    for _ in 0..p.layers {
        let mut next = vec![0.0; n * c];
        for t in 0..n {
            let own = &h[t * c..(t + 1) * c];
            let mut agg = vec![0.0; c];
            if !nbrs[t].is_empty() {
                for &s in &nbrs[t] {
                    for (a, v) in agg.iter_mut().zip(&h[s * c..(s + 1) * c]) {
                        *a += v;
                    }
                }
                let inv = 1.0 / nbrs[t].len() as f64;
                for a in agg.iter_mut() {
                    *a *= inv;
                }
            }
            let out = &mut next[t * c..(t + 1) * c];
            for i in 0..c {
                let ws = &p.w_self.data()[i * c..(i + 1) * c];
                let wn = &p.w_nbr.data()[i * c..(i + 1) * c];
                let mut z = p.bias.data()[i];
                for j in 0..c {
                    z += ws[j] * own[j] + wn[j] * agg[j];
                }
                out[i] = p.activation.apply(z);
            }
        }
        h = next;
    }
    h
}

/// Message passing over the chain: `[B, T, C] -> [B, T, C]`. Batch elements
/// are independent and may run in parallel; results match serial order.
pub fn gnn_forward(g: &ChainGraph, p: &GnnLayerParams) -> TensorResult<Tensor> {
    let (b, t, c) = g.nodes.dims3("gnn_forward")?;
    if p.channels() != c {
        return Err(TensorError::ShapeMismatch {
            op: "gnn_forward",
            left: g.nodes.shape().to_vec(),
            right: p.w_self.shape().to_vec(),
        });
    }
    let nbrs = in_neighbors(t, &g.edges);
    let blocks = par::map_indexed(b, |bi| {
        message_passing(
            &g.nodes.data()[bi * t * c..(bi + 1) * t * c],
            t,
            c,
            &nbrs,
            p,
        )
    });
    Tensor::new(vec![b, t, c], blocks.concat())
}

/// Residual broadcast: `out[b,c,t,h,w] = x[b,c,t,h,w] + f[b,t,c]`.
pub fn broadcast_add(x: &Tensor, f: &Tensor) -> TensorResult<Tensor> {
    let (b, c, t, h, w) = x.dims5("broadcast_add")?;
    let (fb, ft, fc) = f.dims3("broadcast_add")?;
    if (fb, ft, fc) != (b, t, c) {
        return Err(TensorError::ShapeMismatch {
            op: "broadcast_add",
            left: x.shape().to_vec(),
            right: f.shape().to_vec(),
        });
    }
    let hw = h * w;
    let mut out = x.data().to_vec();
    for bi in 0..b {
        for ci in 0..c {
            for ti in 0..t {
                let add = f.data()[(bi * t + ti) * c + ci];
                let base = ((bi * c + ci) * t + ti) * hw;
                for v in &mut out[base..base + hw] {
                    *v += add;
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Per-frame object descriptors `[B, T, N, C]`.
#[derive(Debug, Clone)]
pub struct ObjectFeatures {
    values: Tensor,
}

impl ObjectFeatures {
    pub fn new(values: Tensor) -> TensorResult<Self> {
        if values.rank() != 4 {
            return Err(TensorError::RankMismatch {
                op: "ObjectFeatures::new",
                expected: 4,
                shape: values.shape().to_vec(),
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }
}

/// Complete-graph edges over `n` nodes (no self-loops).
fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Object-level reasoning: message passing over a fully connected graph of
/// the N objects within each frame (no cross-frame object edges), a mean
/// over objects, and a residual broadcast onto the latent.
pub fn object_branch(x: &Tensor, o: &ObjectFeatures, p_o: &GnnLayerParams) -> TensorResult<Tensor> {
    let (b, c, t, _h, _w) = x.dims5("object_branch")?;
    let [ob, ot, n, oc] = o.values.shape() else {
        unreachable!("ObjectFeatures is rank 4 by construction");
    };
    let (ob, ot, n, oc) = (*ob, *ot, *n, *oc);
    if (ob, ot, oc) != (b, t, c) || p_o.channels() != c {
        return Err(TensorError::ShapeMismatch {
            op: "object_branch",
            left: x.shape().to_vec(),
            right: o.values.shape().to_vec(),
        });
    }
    let nbrs = in_neighbors(n, &complete_edges(n));
    // Each (batch, frame) object set is an independent graph.
    let means = par::map_indexed(b * t, |bt| {
        let refined = message_passing(
            &o.values.data()[bt * n * c..(bt + 1) * n * c],
            n,
            c,
            &nbrs,
            p_o,
        );
        let mut mean = vec![0.0; c];
        for obj in 0..n {
            for (m, v) in mean.iter_mut().zip(&refined[obj * c..(obj + 1) * c]) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        mean
    });
    let g = Tensor::new(vec![b, t, c], means.concat())?;
    broadcast_add(x, &g)
}

/// The full frame-reasoning pipeline: pool to nodes, chain message passing,
/// residual broadcast, and optionally the object branch.
pub fn tfrm(
    x: &Tensor,
    p: &GnnLayerParams,
    objects: Option<&ObjectFeatures>,
    p_o: Option<&GnnLayerParams>,
) -> TensorResult<Tensor> {
    let nodes = frame_pool(x)?;
    let graph = ChainGraph::new(nodes)?;
    let refined = gnn_forward(&graph, p)?;
    let mut out = broadcast_add(x, &refined)?;
    if let Some(o) = objects {
        let p_o = p_o.ok_or_else(|| TensorError::InvalidArgument {
            op: "tfrm",
            reason: "object features supplied without object GNN parameters".into(),
        })?;
        out = object_branch(&out, o, p_o)?;
    }
    Ok(out)
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

    fn random_gnn(c: usize, layers: usize, act: Activation, r: &mut ChaCha8Rng) -> GnnLayerParams {
        GnnLayerParams::new(
            Tensor::random_uniform(&[c, c], -1.0, 1.0, r).unwrap(),
            Tensor::random_uniform(&[c, c], -1.0, 1.0, r).unwrap(),
            Tensor::random_uniform(&[c], -0.5, 0.5, r).unwrap(),
            act,
            layers,
        )
        .unwrap()
    }

    fn identity_gnn(c: usize) -> GnnLayerParams {
        GnnLayerParams::new(
            Tensor::from_fn(&[c, c], |i| if i / c == i % c { 1.0 } else { 0.0 }).unwrap(),
            Tensor::zeros(&[c, c]).unwrap(),
            Tensor::zeros(&[c]).unwrap(),
            Activation::Identity,
            3,
        )
        .unwrap()
    }

    #[test]
    fn frame_pool_constant_input() {
        let x = Tensor::filled(&[1, 2, 3, 2, 2], 4.25).unwrap();
        let f = frame_pool(&x).unwrap();
        assert_eq!(f.shape(), &[1, 3, 2]);
        assert!(f.data().iter().all(|&v| (v - 4.25).abs() < 1e-15));
    }

    #[test]
    fn frame_pool_single_frame_equals_gap() {
        let x = Tensor::random_uniform(&[1, 3, 1, 4, 4], -1.0, 1.0, &mut rng(30)).unwrap();
        let f = frame_pool(&x).unwrap();
        let gap = x.reshape(&[3, 4, 4]).unwrap().gap_spatial().unwrap();
        assert!(max_abs_diff(&f.reshape(&[3]).unwrap(), &gap) < 1e-15);
    }

    #[test]
    fn frame_pool_matches_loop_oracle() {
        let x = Tensor::random_uniform(&[1, 2, 3, 4, 4], -1.0, 1.0, &mut rng(31)).unwrap();
        let got = frame_pool(&x).unwrap();
        let want = oracles::oracle_frame_pool(&x).unwrap();
        assert!(max_abs_diff(&got, &want) < 1e-12);
    }

    #[test]
    fn chain_edges_single_frame_is_empty() {
        assert!(chain_edges(1).is_empty());
    }

    #[test]
    fn chain_edges_three_frames() {
        // Consecutive frames linked both ways, zero-based.
        assert_eq!(chain_edges(3), vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn chain_degrees_are_path_like() {
        for t in [2usize, 5, 9] {
            let edges = chain_edges(t);
            assert_eq!(edges.len(), 2 * (t - 1));
            for node in 0..t {
                let indeg = edges.iter().filter(|&&(_, d)| d == node).count();
                let outdeg = edges.iter().filter(|&&(s, _)| s == node).count();
                let expect = if node == 0 || node == t - 1 { 1 } else { 2 };
                assert_eq!(indeg, expect);
                assert_eq!(outdeg, expect);
                assert!(!edges.contains(&(node, node)), "self-loop at {node}");
            }
            // No skip edges.
            assert!(edges.iter().all(|&(s, d)| s.abs_diff(d) == 1));
        }
    }

    #[test]
    fn gnn_identity_configuration_is_identity() {
        let nodes = Tensor::random_uniform(&[2, 4, 3], -1.0, 1.0, &mut rng(32)).unwrap();
        let g = ChainGraph::new(nodes.clone()).unwrap();
        let out = gnn_forward(&g, &identity_gnn(3)).unwrap();
        assert_eq!(out, nodes);
    }

    #[test]
    fn gnn_single_frame_uses_zero_neighbor_term() {
        let mut r = rng(33);
        let nodes = Tensor::random_uniform(&[1, 1, 3], -1.0, 1.0, &mut r).unwrap();
        let p = random_gnn(3, 1, Activation::Tanh, &mut r);
        let g = ChainGraph::new(nodes.clone()).unwrap();
        let out = gnn_forward(&g, &p).unwrap();
        // By hand: act(w_self·h + bias), neighbor aggregate is zero.
        for i in 0..3 {
            let mut z = p.bias.data()[i];
            for j in 0..3 {
                z += p.w_self.data()[i * 3 + j] * nodes.data()[j];
            }
            assert!((out.data()[i] - z.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn gnn_matches_loop_oracle() {
        let mut r = rng(34);
        let nodes = Tensor::random_uniform(&[2, 5, 3], -1.0, 1.0, &mut r).unwrap();
        let p = random_gnn(3, 1, Activation::Tanh, &mut r);
        let g = ChainGraph::new(nodes).unwrap();
        let got = gnn_forward(&g, &p).unwrap();
        let want = oracles::oracle_gnn_forward(&g, &p).unwrap();
        assert!(max_abs_diff(&got, &want) < 1e-12);
    }

    #[test]
    fn gnn_zero_layers_is_passthrough() {
        let mut r = rng(35);
        let nodes = Tensor::random_uniform(&[1, 4, 2], -1.0, 1.0, &mut r).unwrap();
        let mut p = random_gnn(2, 1, Activation::Tanh, &mut r);
        p.layers = 0;
        let g = ChainGraph::new(nodes.clone()).unwrap();
        assert_eq!(gnn_forward(&g, &p).unwrap(), nodes);
    }

    #[test]
    fn broadcast_add_zero_field_is_identity() {
        let x = Tensor::random_uniform(&[1, 2, 3, 2, 2], -1.0, 1.0, &mut rng(36)).unwrap();
        let f = Tensor::zeros(&[1, 3, 2]).unwrap();
        assert_eq!(broadcast_add(&x, &f).unwrap(), x);
    }

    #[test]
    fn broadcast_add_onto_zeros_tiles_the_field() {
        let x = Tensor::zeros(&[1, 2, 2, 2, 3]).unwrap();
        let f = Tensor::random_uniform(&[1, 2, 2], -1.0, 1.0, &mut rng(37)).unwrap();
        let out = broadcast_add(&x, &f).unwrap();
        for ci in 0..2 {
            for ti in 0..2 {
                for hi in 0..2 {
                    for wi in 0..3 {
                        assert_eq!(out.at(&[0, ci, ti, hi, wi]), f.at(&[0, ti, ci]));
                    }
                }
            }
        }
    }

    #[test]
    fn broadcast_add_matches_loop_oracle() {
        let mut r = rng(38);
        let x = Tensor::random_uniform(&[2, 3, 2, 2, 2], -1.0, 1.0, &mut r).unwrap();
        let f = Tensor::random_uniform(&[2, 2, 3], -1.0, 1.0, &mut r).unwrap();
        let got = broadcast_add(&x, &f).unwrap();
        let want = oracles::oracle_broadcast_add(&x, &f).unwrap();
        assert!(max_abs_diff(&got, &want) < 1e-12);
    }

    #[test]
    fn object_branch_single_object_identity_config() {
        let mut r = rng(39);
        let x = Tensor::random_uniform(&[1, 2, 2, 2, 2], -1.0, 1.0, &mut r).unwrap();
        let o =
            ObjectFeatures::new(Tensor::random_uniform(&[1, 2, 1, 2], -1.0, 1.0, &mut r).unwrap())
                .unwrap();
        let out = object_branch(&x, &o, &identity_gnn(2)).unwrap();
        for ci in 0..2 {
            for ti in 0..2 {
                for hi in 0..2 {
                    for wi in 0..2 {
                        let want = x.at(&[0, ci, ti, hi, wi]) + o.values().at(&[0, ti, 0, ci]);
                        assert!((out.at(&[0, ci, ti, hi, wi]) - want).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn object_branch_zero_objects_identity_config_is_noop() {
        let x = Tensor::random_uniform(&[1, 2, 2, 2, 2], -1.0, 1.0, &mut rng(40)).unwrap();
        let o = ObjectFeatures::new(Tensor::zeros(&[1, 2, 3, 2]).unwrap()).unwrap();
        let out = object_branch(&x, &o, &identity_gnn(2)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn object_branch_matches_loop_oracle() {
        let mut r = rng(41);
        let x = Tensor::random_uniform(&[1, 2, 2, 2, 2], -1.0, 1.0, &mut r).unwrap();
        let o =
            ObjectFeatures::new(Tensor::random_uniform(&[1, 2, 3, 2], -1.0, 1.0, &mut r).unwrap())
                .unwrap();
        let p = random_gnn(2, 1, Activation::Tanh, &mut r);
        let got = object_branch(&x, &o, &p).unwrap();
        let want = oracles::oracle_object_branch(&x, &o, &p).unwrap();
        assert!(max_abs_diff(&got, &want) < 1e-12);
    }

    #[test]
    fn tfrm_zero_params_is_exactly_residual() {
        let x = Tensor::random_uniform(&[2, 3, 4, 2, 2], -1.0, 1.0, &mut rng(42)).unwrap();
        let out = tfrm(&x, &GnnLayerParams::zeros(3), None, None).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn tfrm_single_frame_zero_params() {
        let x = Tensor::random_uniform(&[1, 2, 1, 3, 3], -1.0, 1.0, &mut rng(43)).unwrap();
        assert_eq!(tfrm(&x, &GnnLayerParams::zeros(2), None, None).unwrap(), x);
    }

    #[test]
    fn tfrm_matches_composed_oracles() {
        let mut r = rng(44);
        let x = Tensor::random_uniform(&[1, 2, 4, 3, 3], -1.0, 1.0, &mut r).unwrap();
        let p = random_gnn(2, 2, Activation::Tanh, &mut r);
        let o =
            ObjectFeatures::new(Tensor::random_uniform(&[1, 4, 2, 2], -1.0, 1.0, &mut r).unwrap())
                .unwrap();
        let p_o = random_gnn(2, 1, Activation::Tanh, &mut r);
        let got = tfrm(&x, &p, Some(&o), Some(&p_o)).unwrap();
        let want = oracles::oracle_tfrm(&x, &p, Some(&o), Some(&p_o)).unwrap();
        assert!(max_abs_diff(&got, &want) < 1e-12);
    }

    #[test]
    fn tfrm_rejects_objects_without_params() {
        let x = Tensor::zeros(&[1, 2, 2, 2, 2]).unwrap();
        let o = ObjectFeatures::new(Tensor::zeros(&[1, 2, 1, 2]).unwrap()).unwrap();
        assert!(tfrm(&x, &GnnLayerParams::zeros(2), Some(&o), None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn batch_permutation_equivariance(seed in 0u64..1000) {
            let mut r = rng(seed);
            let (b, c, t, h, w) = (3, 2, 3, 2, 2);
            let x = Tensor::random_uniform(&[b, c, t, h, w], -1.0, 1.0, &mut r).unwrap();
            let p = random_gnn(c, 2, Activation::Tanh, &mut r);
            let out = tfrm(&x, &p, None, None).unwrap();
            // Swap batch elements 0 and 2, run again, outputs swap too.
            let stride = c * t * h * w;
            let mut swapped = x.data().to_vec();
            let (head, tail) = swapped.split_at_mut(stride);
            head.swap_with_slice(&mut tail[stride..2 * stride]);
            let x2 = Tensor::new(x.shape().to_vec(), swapped).unwrap();
            let out2 = tfrm(&x2, &p, None, None).unwrap();
            prop_assert_eq!(&out.data()[..stride], &out2.data()[2 * stride..]);
            prop_assert_eq!(&out.data()[2 * stride..], &out2.data()[..stride]);
            prop_assert_eq!(&out.data()[stride..2 * stride], &out2.data()[stride..2 * stride]);
        }

        #[test]
        fn pool_of_broadcast_shifts_by_field(seed in 0u64..1000) {
            let mut r = rng(seed);
            let x = Tensor::random_uniform(&[2, 2, 3, 2, 2], -1.0, 1.0, &mut r).unwrap();
            let f = Tensor::random_uniform(&[2, 3, 2], -1.0, 1.0, &mut r).unwrap();
            let lhs = frame_pool(&broadcast_add(&x, &f).unwrap()).unwrap();
            let rhs = frame_pool(&x).unwrap().add(&f).unwrap();
            prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
        }
    }
}
