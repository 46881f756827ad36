//! Impulse-response and chain-influence probes: the executable forms of the
//! receptive-field and temporal-locality claims.

use crate::temporal_graph::{tfrm, GnnLayerParams};
use crate::tensor::{Tensor, TensorResult};

/// Response of a frozen-weight spatial operator to a unit impulse at
/// `(c, h, w)` in a `[C, H, W]` tensor of the given shape.
pub fn impulse_response(
    op: impl Fn(&Tensor) -> TensorResult<Tensor>,
    shape: (usize, usize, usize),
    coord: (usize, usize, usize),
) -> TensorResult<Tensor> {
    let (c, h, w) = shape;
    let mut impulse = Tensor::zeros(&[c, h, w])?;
    let idx = impulse.offset(&[coord.0, coord.1, coord.2]);
    impulse.data_mut()[idx] = 1.0;
    op(&impulse)
}

/// Perturb every element of one input frame by `delta`, run the frame
/// reasoning pipeline on both versions, and report the largest absolute
/// output change per frame.
///
/// Claim under test: after L message-passing layers, influence reaches
/// exactly the frames within chain distance L; everything beyond is
/// bit-identical (the probe reports exact zeros there).
pub fn chain_influence_probe(
    x: &Tensor,
    p: &GnnLayerParams,
    t_perturb: usize,
    delta: f64,
) -> TensorResult<Vec<f64>> {
    let (b, c, t, h, w) = x.dims5("chain_influence_probe")?;
    assert!(t_perturb < t, "frame index {t_perturb} out of range 0..{t}");
    let base = tfrm(x, p, None, None)?;
    let mut perturbed = x.clone();
    let hw = h * w;
    for bi in 0..b {
        for ci in 0..c {
            let start = ((bi * c + ci) * t + t_perturb) * hw;
            for v in &mut perturbed.data_mut()[start..start + hw] {
                *v += delta;
            }
        }
    }
    let moved = tfrm(&perturbed, p, None, None)?;
    let mut influence = vec![0.0f64; t];
    for bi in 0..b {
        for ci in 0..c {
            for ti in 0..t {
                let start = ((bi * c + ci) * t + ti) * hw;
                for off in 0..hw {
                    let d = (moved.data()[start + off] - base.data()[start + off]).abs();
                    if d > influence[ti] {
                        influence[ti] = d;
                    }
                }
            }
        }
    }
    Ok(influence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{stda_frozen, strip_apply, StripDirection};
    use crate::temporal_graph::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn one_hot_weights_map_impulse_to_itself() {
        let a = Tensor::new(vec![3], vec![0.0, 1.0, 0.0]).unwrap();
        let resp = impulse_response(
            |x| strip_apply(x, &a, StripDirection::Horizontal),
            (1, 5, 5),
            (0, 2, 2),
        )
        .unwrap();
        for hi in 0..5 {
            for wi in 0..5 {
                let want = if (hi, wi) == (2, 2) { 1.0 } else { 0.0 };
                assert_eq!(resp.at(&[0, hi, wi]), want);
            }
        }
    }

    #[test]
    fn interior_impulse_support_is_k_by_k_with_reflected_kernel() {
        let mut r = rng(80);
        let k = 3usize;
        let a_h = Tensor::random_uniform(&[k], 0.1, 0.9, &mut r).unwrap();
        let a_v = Tensor::random_uniform(&[k], 0.1, 0.9, &mut r).unwrap();
        let (h0, w0) = (4usize, 4usize);
        let resp =
            impulse_response(|x| stda_frozen(x, &a_h, &a_v), (1, 9, 9), (0, h0, w0)).unwrap();
        let half = (k / 2) as isize;
        for hi in 0..9usize {
            for wi in 0..9usize {
                let (dh, dw) = (hi as isize - h0 as isize, wi as isize - w0 as isize);
                let got = resp.at(&[0, hi, wi]);
                if dh.abs() <= half && dw.abs() <= half {
                    // The integration is a correlation, so the impulse
                    // response reads the kernel reflected.
                    let want = a_v.data()[(half - dh) as usize] * a_h.data()[(half - dw) as usize];
                    assert!((got - want).abs() < 1e-12);
                } else {
                    assert_eq!(got, 0.0, "support leak at offset ({dh},{dw})");
                }
            }
        }
    }

    #[test]
    fn border_impulse_is_a_truncated_kernel_block() {
        let mut r = rng(81);
        let k = 3usize;
        let a_h = Tensor::random_uniform(&[k], 0.1, 0.9, &mut r).unwrap();
        let a_v = Tensor::random_uniform(&[k], 0.1, 0.9, &mut r).unwrap();
        let resp = impulse_response(|x| stda_frozen(x, &a_h, &a_v), (1, 5, 5), (0, 0, 0)).unwrap();
        let half = (k / 2) as isize;
        for hi in 0..5usize {
            for wi in 0..5usize {
                let (dh, dw) = (hi as isize, wi as isize);
                let got = resp.at(&[0, hi, wi]);
                if dh <= half && dw <= half {
                    let want = a_v.data()[(half - dh) as usize] * a_h.data()[(half - dw) as usize];
                    assert!(
                        (got - want).abs() < 1e-12,
                        "in-block value mismatch at ({hi},{wi})"
                    );
                } else {
                    assert_eq!(got, 0.0);
                }
            }
        }
    }

    fn probe_instance(seed: u64, t: usize, layers: usize) -> (Tensor, GnnLayerParams) {
        let mut r = rng(seed);
        let x = Tensor::random_uniform(&[1, 2, t, 2, 2], -1.0, 1.0, &mut r).unwrap();
        let p = GnnLayerParams::new(
            Tensor::random_uniform(&[2, 2], -1.0, 1.0, &mut r).unwrap(),
            Tensor::random_uniform(&[2, 2], -1.0, 1.0, &mut r).unwrap(),
            Tensor::random_uniform(&[2], -0.5, 0.5, &mut r).unwrap(),
            Activation::Tanh,
            layers,
        )
        .unwrap();
        (x, p)
    }

    #[test]
    fn single_layer_influence_reaches_adjacent_frames_only() {
        let (x, p) = probe_instance(82, 7, 1);
        let influence = chain_influence_probe(&x, &p, 3, 0.25).unwrap();
        for (ti, &inf) in influence.iter().enumerate() {
            if (2..=4).contains(&ti) {
                assert!(inf > 0.0, "frame {ti} should feel the perturbation");
            } else {
                assert_eq!(inf, 0.0, "frame {ti} must be bit-identical");
            }
        }
    }

    #[test]
    fn zero_layers_influence_is_local() {
        let (x, p) = probe_instance(83, 7, 0);
        let influence = chain_influence_probe(&x, &p, 3, 0.25).unwrap();
        for (ti, &inf) in influence.iter().enumerate() {
            if ti == 3 {
                assert!(inf > 0.0);
            } else {
                assert_eq!(inf, 0.0);
            }
        }
    }

    #[test]
    fn two_layers_influence_radius_is_two() {
        let (x, p) = probe_instance(84, 9, 2);
        let influence = chain_influence_probe(&x, &p, 4, 0.25).unwrap();
        for (ti, &inf) in influence.iter().enumerate() {
            if (2..=6).contains(&ti) {
                assert!(inf > 0.0, "frame {ti} inside radius 2");
            } else {
                assert_eq!(inf, 0.0, "frame {ti} outside radius 2");
            }
        }
    }
}
