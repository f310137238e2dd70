//! Feed-forward networks: layers, shape chaining, forward/backward passes,
//! SGD training and the binary model format.

mod backward;
mod forward;
pub mod io;
pub mod loss;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub use backward::{backward, LayerGrad};
pub use forward::{forward, forward_logits, forward_trace, ActivationCapture, ForwardTrace};
pub use train::{evaluate, predict, train, Sgd, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    /// `weight` is `out × in`.
    Dense { weight: Tensor<T>, bias: Vec<T> },
    /// `weight` is `out × in × kh × kw`.
    Conv2d {
        weight: Tensor<T>,
        bias: Vec<T>,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool { window: usize, stride: usize },
    Flatten,
}

impl<T: Scalar> Layer<T> {
    pub fn is_parametric(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Flatten => "flatten",
        }
    }

    /// Output neurons (dense) or filters (conv); zero for other layers.
    pub fn units(&self) -> usize {
        match self {
            Layer::Dense { weight, .. } | Layer::Conv2d { weight, .. } => weight.shape()[0],
            _ => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                weight.len() + bias.len()
            }
            _ => 0,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense { weight, bias } => {
                let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                if bias.len() != out {
                    return Err(Error::shape(format!("dense bias {} != out {out}", bias.len())));
                }
                if input.len() != 1 || input[0] != inp {
                    return Err(Error::shape(format!(
                        "dense layer expects input [{inp}], got {input:?}"
                    )));
                }
                Ok(vec![out])
            }
            Layer::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                let s = weight.shape();
                if s.len() != 4 {
                    return Err(Error::shape(format!("conv weight must be rank 4, got {s:?}")));
                }
                if bias.len() != s[0] {
                    return Err(Error::shape(format!("conv bias {} != out {}", bias.len(), s[0])));
                }
                if input.len() != 3 || input[0] != s[1] {
                    return Err(Error::shape(format!(
                        "conv layer expects [{}, H, W], got {input:?}",
                        s[1]
                    )));
                }
                if *stride == 0 {
                    return Err(Error::shape("conv stride must be positive"));
                }
                let (h, w) = (input[1] + 2 * padding, input[2] + 2 * padding);
                if h < s[2] || w < s[3] {
                    return Err(Error::shape(format!(
                        "kernel {}x{} larger than padded input {h}x{w}",
                        s[2], s[3]
                    )));
                }
                Ok(vec![s[0], (h - s[2]) / stride + 1, (w - s[3]) / stride + 1])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool { window, stride } => {
                if input.len() != 3 {
                    return Err(Error::shape(format!("maxpool expects [C, H, W], got {input:?}")));
                }
                if *window == 0 || *stride == 0 || input[1] < *window || input[2] < *window {
                    return Err(Error::shape(format!(
                        "maxpool window {window} stride {stride} invalid for {input:?}"
                    )));
                }
                Ok(vec![
                    input[0],
                    (input[1] - window) / stride + 1,
                    (input[2] - window) / stride + 1,
                ])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    fn cast<U: Scalar>(&self) -> Layer<U> {
        let cv = |b: &[T]| b.iter().map(|&v| U::from_f64_lossy(v.to_f64_lossy())).collect();
        match self {
            Layer::Dense { weight, bias } => Layer::Dense {
                weight: weight.cast(),
                bias: cv(bias),
            },
            Layer::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => Layer::Conv2d {
                weight: weight.cast(),
                bias: cv(bias),
                stride: *stride,
                padding: *padding,
            },
            Layer::Relu => Layer::Relu,
            Layer::MaxPool { window, stride } => Layer::MaxPool {
                window: *window,
                stride: *stride,
            },
            Layer::Flatten => Layer::Flatten,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub dense: usize,
    pub conv: usize,
}

/// An ordered layer stack whose shapes chain from `input_shape` to
/// `[class_count]` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    layers: Vec<Layer<T>>,
    input_shape: Vec<usize>,
    class_count: usize,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>, input_shape: Vec<usize>, class_count: usize) -> Result<Self> {
        let net = Self {
            layers,
            input_shape,
            class_count,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::shape(format!("bad input shape {:?}", self.input_shape)));
        }
        if !self.layers.iter().any(Layer::is_parametric) {
            return Err(Error::invalid("network needs at least one dense or conv layer"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } = layer {
                if !weight.is_finite() || bias.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("layer {i} holds non-finite weights")));
                }
            }
        }
        let out = self.shapes()?.pop().expect("at least input shape");
        if out != [self.class_count] {
            return Err(Error::shape(format!(
                "network emits {out:?}, expected [{}] logits",
                self.class_count
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Input shape of every layer followed by the network output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().expect("non-empty"))
                .map_err(|e| Error::shape(format!("layer {i} ({}): {e}", layer.kind())))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn parametric_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].is_parametric())
            .collect()
    }

    /// The next parametric layer after `k`, which consumes `k`'s units.
    pub fn consumer_of(&self, k: usize) -> Option<usize> {
        (k + 1..self.layers.len()).find(|&i| self.layers[i].is_parametric())
    }

    /// Parametric layers that have a parametric consumer, in network order.
    pub fn prunable_layers(&self) -> Vec<usize> {
        self.parametric_layers()
            .into_iter()
            .filter(|&k| self.consumer_of(k).is_some())
            .collect()
    }

    pub fn units(&self, k: usize) -> usize {
        self.layers[k].units()
    }

    /// Index one past the last layer of `k`'s activation chain: the
    /// non-parametric layers after `k` up to (not including) a flatten or
    /// the consumer.
    pub fn activation_end(&self, k: usize) -> usize {
        let mut end = k + 1;
        while end < self.layers.len()
            && matches!(self.layers[end], Layer::Relu | Layer::MaxPool { .. })
        {
            end += 1;
        }
        end
    }

    pub fn count_params(&self) -> ParamCount {
        let mut c = ParamCount {
            total: 0,
            dense: 0,
            conv: 0,
        };
        for layer in &self.layers {
            let n = layer.param_count();
            match layer {
                Layer::Dense { .. } => c.dense += n,
                Layer::Conv2d { .. } => c.conv += n,
                _ => {}
            }
            c.total += n;
        }
        c
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self.layers.iter().map(Layer::cast).collect(),
            input_shape: self.input_shape.clone(),
            class_count: self.class_count,
        }
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }
}

/// Incrementally describes a network and initializes it with He-normal
/// weights and zero biases.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { units: usize },
    Conv2d { filters: usize, kernel: usize, stride: usize, padding: usize },
    Relu,
    MaxPool { window: usize, stride: usize },
    Flatten,
}

impl std::str::FromStr for LayerSpec {
    type Err = Error;

    /// Parses `dense:N`, `conv:F:K[:S[:P]]`, `relu`, `maxpool:W[:S]`, `flatten`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize, default: Option<usize>| -> Result<usize> {
            match parts.get(i) {
                Some(p) => p
                    .parse()
                    .map_err(|_| Error::Parse(format!("`{s}`: `{p}` is not a non-negative integer"))),
                None => default.ok_or_else(|| Error::Parse(format!("`{s}`: missing field {i}"))),
            }
        };
        let spec = match parts[0] {
            "dense" => LayerSpec::Dense { units: num(1, None)? },
            "conv" | "conv2d" => LayerSpec::Conv2d {
                filters: num(1, None)?,
                kernel: num(2, None)?,
                stride: num(3, Some(1))?,
                padding: num(4, Some(0))?,
            },
            "relu" => LayerSpec::Relu,
            "maxpool" => {
                let window = num(1, None)?;
                LayerSpec::MaxPool {
                    window,
                    stride: num(2, Some(window))?,
                }
            }
            "flatten" => LayerSpec::Flatten,
            other => return Err(Error::Parse(format!("unknown layer kind `{other}`"))),
        };
        Ok(spec)
    }
}

impl NetworkBuilder {
    pub fn new(input_shape: &[usize]) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            specs: Vec::new(),
        }
    }

    pub fn layer(mut self, spec: LayerSpec) -> Self {
        self.specs.push(spec);
        self
    }

    pub fn dense(self, units: usize) -> Self {
        self.layer(LayerSpec::Dense { units })
    }

    pub fn conv2d(self, filters: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        self.layer(LayerSpec::Conv2d {
            filters,
            kernel,
            stride,
            padding,
        })
    }

    pub fn relu(self) -> Self {
        self.layer(LayerSpec::Relu)
    }

    pub fn maxpool(self, window: usize, stride: usize) -> Self {
        self.layer(LayerSpec::MaxPool { window, stride })
    }

    pub fn flatten(self) -> Self {
        self.layer(LayerSpec::Flatten)
    }

    pub fn build(&self, seed: u64) -> Result<Network<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = self.input_shape.clone();
        let mut layers = Vec::with_capacity(self.specs.len());
        for spec in &self.specs {
            let layer = match *spec {
                LayerSpec::Dense { units } => {
                    if shape.len() != 1 {
                        return Err(Error::shape(format!(
                            "dense layer needs flat input, got {shape:?} (insert flatten)"
                        )));
                    }
                    let fan_in = shape[0];
                    Layer::Dense {
                        weight: he_normal(vec![units, fan_in], fan_in, &mut rng)?,
                        bias: vec![0.0; units],
                    }
                }
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    if shape.len() != 3 {
                        return Err(Error::shape(format!("conv layer needs [C, H, W], got {shape:?}")));
                    }
                    let fan_in = shape[0] * kernel * kernel;
                    Layer::Conv2d {
                        weight: he_normal(vec![filters, shape[0], kernel, kernel], fan_in, &mut rng)?,
                        bias: vec![0.0; filters],
                        stride,
                        padding,
                    }
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool { window, stride } => Layer::MaxPool { window, stride },
                LayerSpec::Flatten => Layer::Flatten,
            };
            shape = layer.output_shape(&shape)?;
            layers.push(layer);
        }
        if shape.len() != 1 {
            return Err(Error::shape(format!("network must end in flat logits, got {shape:?}")));
        }
        Network::new(layers, self.input_shape.clone(), shape[0])
    }
}

fn he_normal(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Result<Tensor<f32>> {
    if shape.contains(&0) || fan_in == 0 {
        return Err(Error::shape(format!("layer with zero extent {shape:?}")));
    }
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let len = shape.iter().product();
    let data = (0..len).map(|_| normal.sample(rng) as f32).collect();
    Tensor::new(shape, data)
}
