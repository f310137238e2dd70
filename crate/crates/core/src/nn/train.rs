use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::{backward, LayerGrad};
use super::forward::{forward_logits, forward_trace};
use super::loss::{argmax, softmax_cross_entropy};
use super::{Layer, Network};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            max_epochs: 20,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be a finite value >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Plain SGD with optional heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f32,
    pub momentum: f32,
    velocity: Vec<Option<LayerGrad<f32>>>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate: learning_rate as f32,
            momentum: momentum as f32,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, net: &mut Network<f32>, grads: Vec<Option<LayerGrad<f32>>>) {
        if self.velocity.len() != grads.len() {
            self.velocity = vec![None; grads.len()];
        }
        for (i, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let v = self.velocity[i].get_or_insert_with(|| LayerGrad {
                weight: vec![0.0; g.weight.len()],
                bias: vec![0.0; g.bias.len()],
            });
            let (mu, lr) = (self.momentum, self.learning_rate);
            for (vv, gg) in v.weight.iter_mut().zip(&g.weight) {
                *vv = mu * *vv + gg;
            }
            for (vv, gg) in v.bias.iter_mut().zip(&g.bias) {
                *vv = mu * *vv + gg;
            }
            if let Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } =
                &mut net.layers_mut()[i]
            {
                for (w, vv) in weight.data_mut().iter_mut().zip(&v.weight) {
                    *w -= lr * vv;
                }
                for (b, vv) in bias.iter_mut().zip(&v.bias) {
                    *b -= lr * vv;
                }
            }
        }
    }
}

/// One pass over `order` in mini-batches. `loss_grad` receives the batch
/// inputs, labels and student logits and returns the batch loss together
/// with its gradient with respect to the logits. Returns the mean batch loss.
pub(crate) fn sgd_epoch<F>(
    net: &mut Network<f32>,
    data: &LabeledDataset,
    order: &[usize],
    batch_size: usize,
    opt: &mut Sgd,
    mut loss_grad: F,
) -> Result<f64>
where
    F: FnMut(&Tensor<f32>, &[usize], &Tensor<f32>) -> Result<(f64, Tensor<f32>)>,
{
    let mut total = 0.0;
    let mut batches = 0usize;
    for idx in order.chunks(batch_size) {
        let x = data.gather(idx);
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
        let trace = forward_trace(net, &x)?;
        let (loss, dlogits) = loss_grad(&x, &labels, &trace.logits)?;
        if !loss.is_finite() {
            return Ok(f64::NAN);
        }
        let grads = backward(net, &trace, &dlogits)?;
        opt.step(net, grads);
        total += loss;
        batches += 1;
    }
    Ok(total / batches.max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network<f32>,
    /// Mean training loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a private copy of `net` with softmax cross-entropy.
pub fn train(net: &Network<f32>, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if data.class_count() > net.class_count() {
        return Err(Error::invalid(format!(
            "dataset has {} classes, network emits {}",
            data.class_count(),
            net.class_count()
        )));
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.max_epochs);
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let loss = sgd_epoch(&mut net, data, &order, cfg.batch_size, &mut opt, |_, y, logits| {
            let (l, g) = softmax_cross_entropy(logits, y);
            Ok((l as f64, g))
        })?;
        if !loss.is_finite() {
            return Err(Error::Training { epoch });
        }
        epoch_losses.push(loss);
    }
    Ok(TrainOutcome {
        network: net,
        epoch_losses,
    })
}

pub fn predict(net: &Network<f32>, inputs: &Tensor<f32>) -> Result<Vec<usize>> {
    let n = inputs.shape()[0];
    let mut out = Vec::with_capacity(n);
    let sample: usize = inputs.cols();
    for start in (0..n).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(n);
        let mut shape = inputs.shape().to_vec();
        shape[0] = end - start;
        let chunk = Tensor::from_parts(shape, inputs.data()[start * sample..end * sample].to_vec());
        let logits = forward_logits(net, &chunk)?;
        out.extend((0..end - start).map(|r| argmax(logits.row(r))));
    }
    Ok(out)
}

/// Fraction of samples whose argmax logit equals the label.
pub fn evaluate(net: &Network<f32>, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let pred = predict(net, data.inputs())?;
    let hits = pred.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / data.len() as f64)
}
