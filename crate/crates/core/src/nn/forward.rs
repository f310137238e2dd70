use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{Layer, Network};
use crate::error::{Error, Result};
use crate::tensor::{gemm_nn, gemm_nt, Scalar, Tensor};

/// Pre- (`Y_k`) and post-activation (`Z_k`) outputs of parametric layer `k`.
/// Both are batch-major with the layer's natural per-sample shape.
#[derive(Debug, Clone)]
pub struct ActivationCapture<T> {
    pub layer_index: usize,
    pub pre: Tensor<T>,
    pub post: Tensor<T>,
}

/// Everything the backward pass needs: the input of every layer, pooling
/// argmax tables and the final logits.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub(crate) inputs: Vec<Tensor<T>>,
    pub(crate) pool_argmax: Vec<Option<Vec<usize>>>,
    pub logits: Tensor<T>,
}

pub(crate) fn check_batch<T: Scalar>(net: &Network<T>, batch: &Tensor<T>) -> Result<usize> {
    if batch.rank() < 2 || batch.shape()[1..] != *net.input_shape() {
        return Err(Error::shape(format!(
            "batch {:?} does not match input shape [B, {:?}]",
            batch.shape(),
            net.input_shape()
        )));
    }
    Ok(batch.shape()[0])
}

/// Runs the network, capturing `(Y_k, Z_k)` for every requested parametric
/// layer index.
pub fn forward<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    capture: &[usize],
) -> Result<(Tensor<T>, Vec<ActivationCapture<T>>)> {
    let b = check_batch(net, batch)?;
    let wanted: BTreeSet<usize> = capture.iter().copied().collect();
    for &k in &wanted {
        if k >= net.layers().len() || !net.layers()[k].is_parametric() {
            return Err(Error::invalid(format!("layer {k} is not a dense/conv layer")));
        }
    }
    let shapes = net.shapes()?;
    let mut x = batch.clone();
    let mut captures = Vec::with_capacity(wanted.len());
    let mut pending: Option<(usize, Tensor<T>, usize)> = None;
    for (i, layer) in net.layers().iter().enumerate() {
        let (y, _) = layer_forward(layer, &x, &shapes[i], &shapes[i + 1], b, false);
        if wanted.contains(&i) {
            pending = Some((i, y.clone(), net.activation_end(i)));
        }
        x = y;
        if let Some((k, pre, end)) = pending.take() {
            if i + 1 == end {
                captures.push(ActivationCapture {
                    layer_index: k,
                    pre,
                    post: x.clone(),
                });
            } else {
                pending = Some((k, pre, end));
            }
        }
    }
    Ok((x, captures))
}

pub fn forward_logits<T: Scalar>(net: &Network<T>, batch: &Tensor<T>) -> Result<Tensor<T>> {
    forward(net, batch, &[]).map(|(logits, _)| logits)
}

pub fn forward_trace<T: Scalar>(net: &Network<T>, batch: &Tensor<T>) -> Result<ForwardTrace<T>> {
    let b = check_batch(net, batch)?;
    let shapes = net.shapes()?;
    let mut inputs = Vec::with_capacity(net.layers().len());
    let mut pool_argmax = Vec::with_capacity(net.layers().len());
    let mut x = batch.clone();
    for (i, layer) in net.layers().iter().enumerate() {
        let (y, argmax) = layer_forward(layer, &x, &shapes[i], &shapes[i + 1], b, true);
        inputs.push(std::mem::replace(&mut x, y));
        pool_argmax.push(argmax);
    }
    Ok(ForwardTrace {
        inputs,
        pool_argmax,
        logits: x,
    })
}

fn batch_shape(b: usize, sample: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(sample.len() + 1);
    s.push(b);
    s.extend_from_slice(sample);
    s
}

fn layer_forward<T: Scalar>(
    layer: &Layer<T>,
    x: &Tensor<T>,
    in_shape: &[usize],
    out_shape: &[usize],
    b: usize,
    want_argmax: bool,
) -> (Tensor<T>, Option<Vec<usize>>) {
    let out_len: usize = out_shape.iter().product();
    match layer {
        Layer::Dense { weight, bias } => {
            let (out, inp) = (weight.shape()[0], weight.shape()[1]);
            let mut y = vec![T::zero(); b * out];
            gemm_nt(b, inp, out, x.data(), weight.data(), &mut y);
            for row in y.chunks_mut(out) {
                for (v, &bb) in row.iter_mut().zip(bias) {
                    *v += bb;
                }
            }
            (Tensor::from_parts(batch_shape(b, out_shape), y), None)
        }
        Layer::Conv2d {
            weight,
            bias,
            stride,
            padding,
        } => {
            let geom = ConvGeom::new(weight.shape(), in_shape, *stride, *padding);
            let in_len: usize = in_shape.iter().product();
            let mut y = vec![T::zero(); b * out_len];
            y.par_chunks_mut(out_len)
                .zip(x.data().par_chunks(in_len))
                .for_each(|(ys, xs)| {
                    let cols = geom.im2col(xs);
                    gemm_nn(geom.out_c, geom.k, geom.p, weight.data(), &cols, ys);
                    for (c, plane) in ys.chunks_mut(geom.p).enumerate() {
                        plane.iter_mut().for_each(|v| *v += bias[c]);
                    }
                });
            (Tensor::from_parts(batch_shape(b, out_shape), y), None)
        }
        Layer::Relu => (x.map(|v| v.max(T::zero())), None),
        Layer::MaxPool { window, stride } => {
            let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let in_len = c * h * w;
            let mut y = vec![T::zero(); b * out_len];
            let mut arg = vec![0usize; b * out_len];
            for s in 0..b {
                let xs = &x.data()[s * in_len..(s + 1) * in_len];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = T::neg_infinity();
                            let mut best_idx = 0;
                            for i in 0..*window {
                                for j in 0..*window {
                                    let idx = ch * h * w + (oy * stride + i) * w + ox * stride + j;
                                    if xs[idx] > best {
                                        best = xs[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            let o = s * out_len + ch * oh * ow + oy * ow + ox;
                            y[o] = best;
                            arg[o] = s * in_len + best_idx;
                        }
                    }
                }
            }
            (
                Tensor::from_parts(batch_shape(b, out_shape), y),
                want_argmax.then_some(arg),
            )
        }
        Layer::Flatten => (
            Tensor::from_parts(batch_shape(b, out_shape), x.data().to_vec()),
            None,
        ),
    }
}

/// Geometry of one convolution, with helpers to unfold / fold patches.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
    /// Rows of the unfolded patch matrix: `in_c · kh · kw`.
    pub k: usize,
    /// Output positions: `oh · ow`.
    pub p: usize,
}

impl ConvGeom {
    pub fn new(weight_shape: &[usize], in_shape: &[usize], stride: usize, pad: usize) -> Self {
        let (out_c, in_c, kh, kw) = (weight_shape[0], weight_shape[1], weight_shape[2], weight_shape[3]);
        let (h, w) = (in_shape[1], in_shape[2]);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Self {
            in_c,
            h,
            w,
            out_c,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
            k: in_c * kh * kw,
            p: oh * ow,
        }
    }

    pub fn im2col<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut cols = vec![T::zero(); self.k * self.p];
        for c in 0..self.in_c {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    let dst = &mut cols[row * self.p..(row + 1) * self.p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + i) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + j) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            dst[oy * self.ow + ox] =
                                x[c * self.h * self.w + iy as usize * self.w + ix as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters patch gradients back.
    pub fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        for c in 0..self.in_c {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    let src = &cols[row * self.p..(row + 1) * self.p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + i) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + j) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            dx[c * self.h * self.w + iy as usize * self.w + ix as usize] +=
                                src[oy * self.ow + ox];
                        }
                    }
                }
            }
        }
    }
}
