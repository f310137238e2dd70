//! Labeled datasets, loaders (IDX, CSV), synthetic generators and the
//! planted-redundancy fixture builder.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Layer, Network};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_IMAGES_CHW_MAGIC: u32 = 0x0000_0804;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Per-channel mean of the standard RGB image normalization.
pub const RGB_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
/// Per-channel standard deviation of the standard RGB image normalization.
pub const RGB_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Inputs (`N × sample shape`) with one class id per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Tensor<f32>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Tensor<f32>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if inputs.rank() < 2 {
            return Err(Error::shape("inputs need a leading sample axis"));
        }
        if inputs.shape()[0] != labels.len() {
            return Err(Error::shape(format!(
                "{} samples but {} labels",
                inputs.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::invalid(format!("label {bad} outside [0, {class_count})")));
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Tensor<f32> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// Stacks the selected samples into a batch tensor.
    pub fn gather(&self, idx: &[usize]) -> Tensor<f32> {
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = idx.len();
        let sample = self.inputs.cols();
        let mut data = Vec::with_capacity(idx.len() * sample);
        for &i in idx {
            data.extend_from_slice(&self.inputs.data()[i * sample..(i + 1) * sample]);
        }
        Tensor::from_parts(shape, data)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.gather(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// The first `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }
}

/// Disjoint train / held-out / test partitions of one dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledDataset,
    pub heldout: LabeledDataset,
    pub test: LabeledDataset,
}

impl Splits {
    /// Shuffles once with `seed`, peels off `test_fraction` of the data, then
    /// `heldout_fraction` of what remains.
    pub fn new(data: &LabeledDataset, heldout_fraction: f64, test_fraction: f64, seed: u64) -> Result<Self> {
        for (name, f) in [("heldout_fraction", heldout_fraction), ("test_fraction", test_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (data.len() as f64 * test_fraction).round() as usize;
        let rest = data.len() - n_test;
        let n_held = (rest as f64 * heldout_fraction).round() as usize;
        let (test, rest) = idx.split_at(n_test);
        let (heldout, train) = rest.split_at(n_held);
        if train.is_empty() || (heldout_fraction > 0.0 && heldout.is_empty()) {
            return Err(Error::invalid("dataset too small for the requested splits"));
        }
        Ok(Self {
            train: data.subset(train),
            heldout: data.subset(heldout),
            test: data.subset(test),
        })
    }
}

/// Isotropic Gaussian clusters, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Distance between cluster centres, in units of `noise`.
    pub separation: f64,
    /// Per-coordinate standard deviation inside a cluster.
    pub noise: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn new(classes: usize, dim: usize, per_class: usize, seed: u64) -> Self {
        Self {
            classes,
            dim,
            per_class,
            separation: 10.0,
            noise: 1.0,
            seed,
        }
    }

    pub fn separation(mut self, separation: f64) -> Self {
        self.separation = separation;
        self
    }

    pub fn noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }
}

pub fn make_blobs(spec: &BlobSpec) -> Result<LabeledDataset> {
    if spec.classes < 2 {
        return Err(Error::invalid("make_blobs needs at least 2 classes"));
    }
    if spec.dim == 0 || spec.per_class == 0 || !(spec.noise > 0.0) || !(spec.separation >= 0.0) {
        return Err(Error::invalid("make_blobs needs dim, per_class, noise > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    // Orthonormal directions when they fit, so every pair of centres sits at
    // exactly `separation · noise`.
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    for c in 0..spec.classes {
        let mut v: Vec<f64> = (0..spec.dim).map(|_| std.sample(&mut rng)).collect();
        if c < spec.dim {
            for d in &dirs {
                let dot: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(d).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        dirs.push(v);
    }
    let radius = spec.separation * spec.noise / std::f64::consts::SQRT_2;
    let n = spec.classes * spec.per_class;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut data = vec![0f32; n * spec.dim];
    let mut labels = vec![0usize; n];
    for (slot, &i) in order.iter().enumerate() {
        let class = i / spec.per_class;
        labels[slot] = class;
        for d in 0..spec.dim {
            let v = dirs[class][d] * radius + spec.noise * std.sample(&mut rng);
            data[slot * spec.dim + d] = v as f32;
        }
    }
    LabeledDataset::new(Tensor::new(vec![n, spec.dim], data)?, labels, spec.classes)
}

/// Small single- or multi-channel images: each class is a random smooth
/// template plus pixel noise. A stand-in for natural-image data at desk scale.
pub fn make_pattern_images(
    classes: usize,
    channels: usize,
    size: usize,
    per_class: usize,
    noise: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 || channels == 0 || size < 2 || per_class == 0 {
        return Err(Error::invalid("pattern images need classes >= 2 and positive extents"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let sample = channels * size * size;
    let templates: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            // sum of a few random oriented waves per channel
            let mut t = vec![0.0; sample];
            for c in 0..channels {
                for _ in 0..3 {
                    let fx = std.sample(&mut rng) * 0.8;
                    let fy = std.sample(&mut rng) * 0.8;
                    let ph = std.sample(&mut rng) * 3.0;
                    for y in 0..size {
                        for x in 0..size {
                            t[(c * size + y) * size + x] += (fx * x as f64 + fy * y as f64 + ph).sin();
                        }
                    }
                }
            }
            t
        })
        .collect();
    let n = classes * per_class;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut data = vec![0f32; n * sample];
    let mut labels = vec![0usize; n];
    for (slot, &i) in order.iter().enumerate() {
        let class = i / per_class;
        labels[slot] = class;
        let gain = 1.0 + 0.2 * std.sample(&mut rng);
        for p in 0..sample {
            data[slot * sample + p] = (gain * templates[class][p] + noise * std.sample(&mut rng)) as f32;
        }
    }
    LabeledDataset::new(Tensor::new(vec![n, channels, size, size], data)?, labels, classes)
}

/// Per-channel affine normalization `(x - mean) / std` applied after pixels
/// are scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    pub fn rgb() -> Self {
        Self {
            mean: RGB_MEAN.to_vec(),
            std: RGB_STD.to_vec(),
        }
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// RGB constants for 3-channel data, identity otherwise.
    pub fn default_for(channels: usize) -> Self {
        if channels == 3 {
            Self::rgb()
        } else {
            Self::identity(channels)
        }
    }
}

fn read_be_u32(bytes: &[u8], pos: usize, what: &str) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Parse(format!("IDX truncated while reading {what}")))
}

/// Raw IDX images as `(shape, bytes)` with shape `[N, C, H, W]`.
pub fn read_idx_images(bytes: &[u8]) -> Result<(Vec<usize>, Vec<u8>)> {
    let magic = read_be_u32(bytes, 0, "magic")?;
    let dims = match magic {
        IDX_IMAGES_MAGIC => 3,
        IDX_IMAGES_CHW_MAGIC => 4,
        other => {
            return Err(Error::Parse(format!(
                "IDX image magic 0x{other:08x}, expected 0x{IDX_IMAGES_MAGIC:08x} or 0x{IDX_IMAGES_CHW_MAGIC:08x}"
            )))
        }
    };
    let mut shape = Vec::with_capacity(4);
    for d in 0..dims {
        shape.push(read_be_u32(bytes, 4 + 4 * d, "dimension")? as usize);
    }
    if dims == 3 {
        shape.insert(1, 1);
    }
    let header = 4 + 4 * dims;
    let len: usize = shape.iter().product();
    let payload = bytes
        .get(header..header + len)
        .ok_or_else(|| Error::Parse(format!("IDX images truncated: need {len} pixel bytes")))?;
    if bytes.len() != header + len {
        return Err(Error::Parse("IDX images file has trailing bytes".into()));
    }
    Ok((shape, payload.to_vec()))
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_be_u32(bytes, 0, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Parse(format!(
            "IDX label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )));
    }
    let n = read_be_u32(bytes, 4, "label count")? as usize;
    let payload = bytes
        .get(8..8 + n)
        .ok_or_else(|| Error::Parse(format!("IDX labels truncated: header promises {n} labels")))?;
    if bytes.len() != 8 + n {
        return Err(Error::Parse("IDX labels file has trailing bytes".into()));
    }
    Ok(payload.to_vec())
}

/// Encodes images `[N, H, W]` (one channel, magic 0x803) or `[N, C, H, W]`
/// (magic 0x804).
pub fn encode_idx_images(shape: &[usize], pixels: &[u8]) -> Vec<u8> {
    let magic = if shape.len() == 3 {
        IDX_IMAGES_MAGIC
    } else {
        IDX_IMAGES_CHW_MAGIC
    };
    let mut out = magic.to_be_bytes().to_vec();
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an IDX image/label pair. Pixels are scaled to `[0, 1]` and then
/// normalized per channel (`None` selects [`Normalization::default_for`]).
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    normalization: Option<&Normalization>,
) -> Result<LabeledDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let labels = fs::read(lp).map_err(|e| Error::io(lp, e))?;
    idx_dataset(&images, &labels, normalization)
}

pub fn idx_dataset(images: &[u8], labels: &[u8], normalization: Option<&Normalization>) -> Result<LabeledDataset> {
    let (shape, pixels) = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    if labels.len() != shape[0] {
        return Err(Error::Parse(format!(
            "{} images but {} labels",
            shape[0],
            labels.len()
        )));
    }
    let channels = shape[1];
    let default = Normalization::default_for(channels);
    let norm = normalization.unwrap_or(&default);
    if norm.mean.len() != channels || norm.std.len() != channels {
        return Err(Error::invalid(format!(
            "normalization has {} / {} entries for {channels} channels",
            norm.mean.len(),
            norm.std.len()
        )));
    }
    let plane = shape[2] * shape[3];
    let data = pixels
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let c = (i / plane) % channels;
            (p as f32 / 255.0 - norm.mean[c]) / norm.std[c]
        })
        .collect();
    let class_count = labels.iter().copied().max().map_or(0, |m| m as usize + 1).max(2);
    LabeledDataset::new(
        Tensor::new(shape, data)?,
        labels.into_iter().map(usize::from).collect(),
        class_count,
    )
}

/// Loads `label,f0,f1,...` rows. The header is required.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    if headers.get(0) != Some("label") || headers.len() < 2 {
        return Err(Error::Parse(format!(
            "{}: header must be `label,f0,f1,...`",
            path.display()
        )));
    }
    let features = headers.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let bad = |what: &str| Error::Parse(format!("{}: row {}: bad {what}", path.display(), row + 1));
        labels.push(rec[0].trim().parse::<usize>().map_err(|_| bad("label"))?);
        for f in rec.iter().skip(1) {
            data.push(f.trim().parse::<f32>().map_err(|_| bad("feature"))?);
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse(format!("{}: no rows", path.display())));
    }
    let class_count = labels.iter().max().map_or(0, |m| m + 1).max(2);
    LabeledDataset::new(Tensor::new(vec![labels.len(), features], data)?, labels, class_count)
}

/// How a planted dependency is kept exact through the layer's activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantMode {
    /// Single-term dependencies only; exact through ReLU and max-pooling by
    /// positive homogeneity.
    ScaleOnly,
    /// Multi-term dependencies; the involved kept units get non-negative
    /// incoming weights and biases, so their pre-activations are
    /// non-negative whenever the layer input is (always true after a ReLU).
    NonNegativeOrthant,
}

/// One removed unit and its combination over kept units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dependency {
    pub unit: usize,
    pub terms: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub layer: usize,
    pub dependencies: Vec<Dependency>,
    pub mode: PlantMode,
}

impl PlantSpec {
    pub fn planted_units(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self.dependencies.iter().map(|d| d.unit).collect();
        u.sort_unstable();
        u
    }
}

/// Rewrites the incoming weights of each dependent unit so that its
/// activation equals the specified combination of kept units exactly.
pub fn plant_redundancy(net: &Network<f32>, spec: &PlantSpec) -> Result<Network<f32>> {
    let k = spec.layer;
    let layer = net
        .layers()
        .get(k)
        .filter(|l| l.is_parametric())
        .ok_or_else(|| Error::invalid(format!("layer {k} is not a dense/conv layer")))?;
    let n = layer.units();
    let chain = &net.layers()[k + 1..net.activation_end(k)];
    let has_relu = chain.iter().any(|l| matches!(l, Layer::Relu));
    let has_pool = chain.iter().any(|l| matches!(l, Layer::MaxPool { .. }));
    let nonlinear = has_relu || has_pool;

    let removed: BTreeSet<usize> = spec.dependencies.iter().map(|d| d.unit).collect();
    if removed.len() != spec.dependencies.len() {
        return Err(Error::invalid("a unit is planted twice"));
    }
    let mut kept = BTreeSet::new();
    for dep in &spec.dependencies {
        if dep.unit >= n {
            return Err(Error::invalid(format!("unit {} outside layer of {n}", dep.unit)));
        }
        if dep.terms.is_empty() {
            return Err(Error::invalid(format!("unit {} has no terms", dep.unit)));
        }
        for &(h, c) in &dep.terms {
            if h >= n || removed.contains(&h) {
                return Err(Error::invalid(format!(
                    "term unit {h} must be a kept unit of the layer"
                )));
            }
            if !c.is_finite() {
                return Err(Error::invalid("non-finite coefficient"));
            }
            if nonlinear && c < 0.0 {
                return Err(Error::invalid(format!(
                    "negative coefficient {c} for unit {} cannot survive the activation",
                    dep.unit
                )));
            }
            kept.insert(h);
        }
        if nonlinear && dep.terms.len() > 1 {
            if spec.mode == PlantMode::ScaleOnly {
                return Err(Error::invalid(format!(
                    "unit {}: ScaleOnly planting takes a single term",
                    dep.unit
                )));
            }
            if has_pool {
                return Err(Error::invalid(format!(
                    "unit {}: multi-term dependencies are not exact through max-pooling",
                    dep.unit
                )));
            }
        }
    }

    let mut out = net.clone();
    let (weight, bias) = match &mut out.layers_mut()[k] {
        Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => (weight, bias),
        _ => unreachable!("checked parametric"),
    };
    let row = weight.cols();
    if spec.mode == PlantMode::NonNegativeOrthant && has_relu {
        for &h in &kept {
            weight.row_mut(h).iter_mut().for_each(|w| *w = w.abs());
            bias[h] = bias[h].abs();
        }
    }
    for dep in &spec.dependencies {
        let mut acc = vec![0f64; row];
        let mut b = 0f64;
        for &(h, c) in &dep.terms {
            for (a, &w) in acc.iter_mut().zip(weight.row(h)) {
                *a += c * w as f64;
            }
            b += c * bias[h] as f64;
        }
        for (w, a) in weight.row_mut(dep.unit).iter_mut().zip(acc) {
            *w = a as f32;
        }
        bias[dep.unit] = b as f32;
    }
    Ok(out)
}
