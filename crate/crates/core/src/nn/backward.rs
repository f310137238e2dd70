use rayon::prelude::*;

use super::forward::{ConvGeom, ForwardTrace};
use super::{Layer, Network};
use crate::error::{Error, Result};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn_acc, Scalar, Tensor};

/// Gradient of the loss with respect to one parametric layer.
#[derive(Debug, Clone)]
pub struct LayerGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Backpropagates `dlogits` through the trace. Returns one entry per layer,
/// `Some` for parametric layers.
pub fn backward<T: Scalar>(
    net: &Network<T>,
    trace: &ForwardTrace<T>,
    dlogits: &Tensor<T>,
) -> Result<Vec<Option<LayerGrad<T>>>> {
    if dlogits.shape() != trace.logits.shape() {
        return Err(Error::shape(format!(
            "gradient {:?} does not match logits {:?}",
            dlogits.shape(),
            trace.logits.shape()
        )));
    }
    let shapes = net.shapes()?;
    let b = trace.logits.shape()[0];
    let first_param = net.parametric_layers()[0];
    let mut grads: Vec<Option<LayerGrad<T>>> = vec![None; net.layers().len()];
    let mut dy = dlogits.data().to_vec();
    for i in (first_param..net.layers().len()).rev() {
        let x = &trace.inputs[i];
        let need_dx = i > first_param;
        let in_len: usize = shapes[i].iter().product();
        match &net.layers()[i] {
            Layer::Dense { weight, .. } => {
                let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                let mut dw = vec![T::zero(); out * inp];
                gemm_tn_acc(out, b, inp, &dy, x.data(), &mut dw);
                let mut db = vec![T::zero(); out];
                for row in dy.chunks(out) {
                    for (g, &v) in db.iter_mut().zip(row) {
                        *g += v;
                    }
                }
                grads[i] = Some(LayerGrad { weight: dw, bias: db });
                if need_dx {
                    let mut dx = vec![T::zero(); b * inp];
                    gemm_nn(b, out, inp, &dy, weight.data(), &mut dx);
                    dy = dx;
                }
            }
            Layer::Conv2d {
                weight,
                stride,
                padding,
                ..
            } => {
                let g = ConvGeom::new(weight.shape(), &shapes[i], *stride, *padding);
                let out_len = g.out_c * g.p;
                let per_sample: Vec<(Vec<T>, Vec<T>, Vec<T>)> = dy
                    .par_chunks(out_len)
                    .zip(x.data().par_chunks(in_len))
                    .map(|(dys, xs)| {
                        let cols = g.im2col(xs);
                        let mut dw = vec![T::zero(); g.out_c * g.k];
                        gemm_nt(g.out_c, g.p, g.k, dys, &cols, &mut dw);
                        let db: Vec<T> = dys.chunks(g.p).map(|c| c.iter().copied().sum()).collect();
                        let mut dx = Vec::new();
                        if need_dx {
                            let mut dcols = vec![T::zero(); g.k * g.p];
                            gemm_tn_acc(g.k, g.out_c, g.p, weight.data(), dys, &mut dcols);
                            dx = vec![T::zero(); in_len];
                            g.col2im(&dcols, &mut dx);
                        }
                        (dw, db, dx)
                    })
                    .collect();
                let mut dw = vec![T::zero(); g.out_c * g.k];
                let mut db = vec![T::zero(); g.out_c];
                let mut dx = Vec::with_capacity(if need_dx { b * in_len } else { 0 });
                for (sdw, sdb, sdx) in per_sample {
                    dw.iter_mut().zip(&sdw).for_each(|(a, &v)| *a += v);
                    db.iter_mut().zip(&sdb).for_each(|(a, &v)| *a += v);
                    dx.extend_from_slice(&sdx);
                }
                grads[i] = Some(LayerGrad { weight: dw, bias: db });
                if need_dx {
                    dy = dx;
                }
            }
            Layer::Relu => {
                for (g, &v) in dy.iter_mut().zip(x.data()) {
                    if v <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            Layer::MaxPool { .. } => {
                let arg = trace.pool_argmax[i]
                    .as_ref()
                    .expect("trace records pooling argmax");
                let mut dx = vec![T::zero(); b * in_len];
                for (&src, &g) in arg.iter().zip(&dy) {
                    dx[src] += g;
                }
                dy = dx;
            }
            Layer::Flatten => {}
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward::forward_trace;
    use crate::nn::loss::softmax_cross_entropy;
    use crate::nn::NetworkBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn loss_of<T: Scalar>(net: &Network<T>, x: &Tensor<T>, labels: &[usize]) -> f64 {
        let trace = forward_trace(net, x).unwrap();
        softmax_cross_entropy(&trace.logits.cast::<f64>(), labels).0
    }

    /// Central finite differences over every parameter of every layer;
    /// returns the worst relative error seen.
    fn grad_check<T: Scalar>(net: &Network<T>, x: &Tensor<T>, labels: &[usize], h: f64) -> f64 {
        let trace = forward_trace(net, x).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&trace.logits, labels);
        let grads = backward(net, &trace, &dlogits).unwrap();
        let mut worst: f64 = 0.0;
        for (li, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let n_w = g.weight.len();
            for pi in 0..n_w + g.bias.len() {
                let bump = |delta: f64| {
                    let mut n = net.clone();
                    match &mut n.layers_mut()[li] {
                        Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                            let slot = if pi < n_w {
                                &mut weight.data_mut()[pi]
                            } else {
                                &mut bias[pi - n_w]
                            };
                            let before = *slot;
                            *slot += T::from_f64_lossy(delta);
                            // the step actually taken after rounding
                            let taken = (*slot - before).to_f64_lossy();
                            (loss_of(&n, x, labels), taken)
                        }
                        _ => unreachable!(),
                    }
                };
                let ((up, hu), (down, hd)) = (bump(h), bump(-h));
                let fd = (up - down) / (hu - hd);
                let an = if pi < n_w { g.weight[pi] } else { g.bias[pi - n_w] }.to_f64_lossy();
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-2);
                worst = worst.max(rel);
            }
        }
        worst
    }

    fn conv_net() -> Network<f32> {
        NetworkBuilder::new(&[2, 6, 6])
            .conv2d(3, 3, 1, 1)
            .relu()
            .maxpool(2, 2)
            .conv2d(4, 2, 1, 0)
            .relu()
            .flatten()
            .dense(5)
            .relu()
            .dense(3)
            .build(17)
            .unwrap()
    }

    fn batch<T: Scalar>(shape: Vec<usize>, seed: u64) -> Tensor<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| T::from_f64_lossy(rng.random_range(-1.0..1.0))).collect())
            .unwrap()
    }

    #[test]
    fn gradients_match_finite_differences_f64() {
        let net = conv_net().cast::<f64>();
        // No ReLU or pooling boundary lies within h of this input, so central
        // differences are smooth here.
        let x = batch::<f64>(vec![3, 2, 6, 6], 2);
        let worst = grad_check(&net, &x, &[0, 2, 1], 1e-3);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences_f32() {
        let net = NetworkBuilder::new(&[4]).dense(6).relu().dense(3).build(2).unwrap();
        let x = batch::<f32>(vec![5, 4], 3);
        let worst = grad_check(&net, &x, &[0, 1, 2, 1, 0], 1e-3);
        assert!(worst < 1e-2, "worst relative error {worst}");
    }
}
