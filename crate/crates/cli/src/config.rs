//! Job configuration file (TOML).

use std::path::{Path, PathBuf};

use lre_core::amc::AmcConfig;
use lre_core::data::{self, BlobSpec, LabeledDataset, Normalization, Splits};
use lre_core::nn::{LayerSpec, TrainConfig};
use lre_core::{Network, NetworkBuilder};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DataSource,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub compress: AmcConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub heldout_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            heldout_fraction: 0.2,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Blobs {
        classes: usize,
        dim: usize,
        per_class: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Pattern {
        classes: usize,
        channels: usize,
        size: usize,
        per_class: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// `auto` (ImageNet statistics for 3 channels, else [0, 1]), `rgb`
        /// or `none` (raw bytes scaled to [0, 1]).
        #[serde(default = "default_normalization")]
        normalization: String,
    },
    Csv {
        path: PathBuf,
    },
}

fn default_separation() -> f64 {
    10.0
}

fn default_noise() -> f64 {
    1.0
}

fn default_normalization() -> String {
    "auto".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Layer specs such as `conv:16:3:1:1`, `relu`, `maxpool:2`, `flatten`,
    /// `dense:10`. The last dense layer must produce one logit per class.
    #[serde(default)]
    pub layers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl JobConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        // relative dataset paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut cfg.dataset {
            DataSource::Idx { images, labels, .. } => {
                *images = base.join(&*images);
                *labels = base.join(&*labels);
            }
            DataSource::Csv { path } => *path = base.join(&*path),
            _ => {}
        }
        Ok(cfg)
    }

    /// Overrides every seed that is not tied to the dataset itself.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, e: lre_core::Error| CliError::Config(format!("[{name}] {e}"));
        self.train.validate().map_err(|e| field("train", e))?;
        self.compress.validate().map_err(|e| field("compress", e))?;
        let (h, t) = (self.split.heldout_fraction, self.split.test_fraction);
        if !(0.0..1.0).contains(&h) || !(0.0..1.0).contains(&t) || h + t >= 1.0 {
            return Err(CliError::Config(
                "[split] heldout_fraction and test_fraction must be in [0, 1) and sum below 1".into(),
            ));
        }
        for (i, s) in self.model.layers.iter().enumerate() {
            s.parse::<LayerSpec>()
                .map_err(|e| CliError::Config(format!("[model] layers[{i}]: {e}")))?;
        }
        if let DataSource::Idx { normalization, .. } = &self.dataset {
            if !["auto", "rgb", "none"].contains(&normalization.as_str()) {
                return Err(CliError::Config(format!(
                    "[dataset] normalization must be auto, rgb or none, got `{normalization}`"
                )));
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn amc_config(&self) -> AmcConfig {
        AmcConfig {
            seed: self.seed,
            ..self.compress.clone()
        }
    }

    pub fn load_dataset(&self) -> Result<LabeledDataset, CliError> {
        let missing = |p: &Path| CliError::Config(format!("[dataset] cannot read {}", p.display()));
        match &self.dataset {
            DataSource::Blobs {
                classes,
                dim,
                per_class,
                separation,
                noise,
                seed,
            } => {
                let spec = BlobSpec::new(*classes, *dim, *per_class, *seed)
                    .separation(*separation)
                    .noise(*noise);
                data::make_blobs(&spec).map_err(|e| CliError::Config(format!("[dataset] {e}")))
            }
            DataSource::Pattern {
                classes,
                channels,
                size,
                per_class,
                noise,
                seed,
            } => data::make_pattern_images(*classes, *channels, *size, *per_class, *noise, *seed)
                .map_err(|e| CliError::Config(format!("[dataset] {e}"))),
            DataSource::Idx {
                images,
                labels,
                normalization,
            } => {
                let img = std::fs::read(images).map_err(|_| missing(images))?;
                let lab = std::fs::read(labels).map_err(|_| missing(labels))?;
                let (shape, _) = data::read_idx_images(&img).map_err(|e| CliError::Config(format!("[dataset] {e}")))?;
                let channels = if shape.len() == 4 { shape[1] } else { 1 };
                let norm = match normalization.as_str() {
                    "rgb" => Normalization::rgb(),
                    "none" => Normalization::identity(channels),
                    _ => Normalization::default_for(channels),
                };
                data::idx_dataset(&img, &lab, Some(&norm)).map_err(|e| CliError::Config(format!("[dataset] {e}")))
            }
            DataSource::Csv { path } => {
                if !path.exists() {
                    return Err(missing(path));
                }
                data::load_csv(path).map_err(|e| CliError::Config(format!("[dataset] {e}")))
            }
        }
    }

    pub fn splits(&self) -> Result<Splits, CliError> {
        let data = self.load_dataset()?;
        Splits::new(&data, self.split.heldout_fraction, self.split.test_fraction, self.seed)
            .map_err(|e| CliError::Config(format!("[dataset] {e}")))
    }

    /// Builds the untrained network for `data`.
    pub fn build_network(&self, data: &LabeledDataset) -> Result<Network<f32>, CliError> {
        if self.model.layers.is_empty() {
            return Err(CliError::Config("[model] layers must not be empty".into()));
        }
        let mut builder = NetworkBuilder::new(data.sample_shape());
        for s in &self.model.layers {
            builder = builder.layer(s.parse().expect("validated"));
        }
        let net = builder
            .build(self.seed)
            .map_err(|e| CliError::Config(format!("[model] {e}")))?;
        if net.class_count() != data.class_count() {
            return Err(CliError::Config(format!(
                "[model] network emits {} logits but the dataset has {} classes",
                net.class_count(),
                data.class_count()
            )));
        }
        Ok(net)
    }
}
