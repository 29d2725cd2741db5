use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discriminators::DiscriminatorConfig;
use crate::error::{ensure, Error, Result};
use crate::fusion::{Ablation, GeneratorConfig};
use crate::losses::{LossWeights, SegPretrainConfig};

/// Where training and validation scenes come from. With no directories the
/// scenes are synthesised from `seed`; validation scenes use indices after the
/// training ones so the splits never overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub train_dir: Option<PathBuf>,
    pub val_dir: Option<PathBuf>,
    pub seed: u64,
    pub train_count: usize,
    pub val_count: usize,
    pub size: usize,
    pub bands: usize,
    pub classes: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            train_dir: None,
            val_dir: None,
            seed: 0,
            train_count: 200,
            val_count: 20,
            size: 256,
            bands: 8,
            classes: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Epochs at `lr0` before the linear decay to zero.
    pub lr_constant_epochs: usize,
    /// Training crop; overrides `generator.crop`.
    pub crop: usize,
    /// Model initialisation, sample order and crops.
    pub seed: u64,
    pub ablation: Ablation,
    pub dataset: DatasetSpec,
    /// Save a checkpoint after every this many epochs; 0 saves only the final one.
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub loss: LossWeights,
    pub seg: SegPretrainConfig,
    /// Pretrained segmentation net to use instead of pretraining one.
    pub segnet: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 1,
            lr0: 1.2e-4,
            lr_constant_epochs: 50,
            crop: 256,
            seed: 0,
            ablation: Ablation::default(),
            dataset: DatasetSpec::default(),
            checkpoint_every: 10,
            out_dir: PathBuf::from("runs/default"),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            loss: LossWeights::default(),
            seg: SegPretrainConfig::default(),
            segnet: None,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            crop: self.crop,
            ..self.generator.clone()
        }
    }

    /// True when the segmentation term is switched on at some epoch of the run.
    pub fn seg_active(&self) -> bool {
        self.ablation.use_seg_loss && self.loss.seg > 0.0 && self.loss.seg_start_epoch < self.epochs
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, "epochs must be at least 1");
        ensure!(self.batch_size == 1, "only batch_size = 1 is supported, got {}", self.batch_size);
        ensure!(self.lr0 > 0.0 && self.lr0.is_finite(), "lr0 must be positive, got {}", self.lr0);
        let d = &self.dataset;
        ensure!(d.classes >= 2 && d.classes <= 16, "dataset classes must be in 2..=16");
        if d.train_dir.is_none() {
            ensure!(d.train_count >= 1, "synthetic dataset needs train_count >= 1");
            ensure!(d.size >= self.crop, "synthetic size {} is smaller than crop {}", d.size, self.crop);
            ensure!(
                d.bands == self.generator.bands,
                "dataset has {} bands, generator expects {}",
                d.bands,
                self.generator.bands
            );
        }
        self.generator_config().validate()?;
        self.ablation.validate()?;
        self.discriminator.validate()?;
        self.loss.validate()?;
        ensure!(
            self.seg.lr > 0.0 && self.seg.width > 0 && (0.0..=1.0).contains(&self.seg.target_accuracy),
            "invalid segmentation pretraining settings"
        );
        Ok(())
    }

    /// Learning rate for a 0-based epoch: `lr0` for the first
    /// `lr_constant_epochs`, then linear decay reaching zero at `epochs`.
    pub fn lr_schedule(&self, epoch: usize) -> Result<f64> {
        lr_schedule(self.lr0, self.lr_constant_epochs, self.epochs, epoch)
    }
}

pub fn lr_schedule(lr0: f64, constant_epochs: usize, epochs: usize, epoch: usize) -> Result<f64> {
    ensure!(epoch < epochs, "epoch {epoch} is outside 0..{epochs}");
    if epoch < constant_epochs {
        return Ok(lr0);
    }
    Ok(lr0 * (epochs - epoch) as f64 / (epochs - constant_epochs) as f64)
}
