//! Training objective and evaluation metrics.

mod adversarial;
mod content;
pub mod metrics;
mod segnet;

pub use adversarial::{bce_with_logits, discriminator_loss, generator_adv_loss, DiscScores};
pub use content::{
    content_terms, dft_amplitude, fft_l1, sobel_magnitude, total_variation, ContentTerms, ContentWeights,
    FeatureExtractor, RandomFeatures, MAGNITUDE_EPS, PERCEPTUAL_SEED,
};
pub use metrics::{image_psnr, image_ssim, image_uiqi, psnr, MetricReport, MetricRow};
pub use segnet::{
    cross_entropy, dataset_accuracy, one_hot, pixel_accuracy, pretrain_segnet, rgb_tensor, seg_loss, SegNet,
    SegPretrainConfig, SEG_EPS,
};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub cgan: f64,
    pub content: f64,
    /// Segmentation weight once enabled.
    pub seg: f64,
    /// First epoch (0-based) with the segmentation term on.
    pub seg_start_epoch: usize,
    pub terms: ContentWeights,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cgan: 0.5,
            content: 1.0,
            seg: 0.5,
            seg_start_epoch: 50,
            terms: ContentWeights::default(),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            [self.cgan, self.content, self.seg].iter().all(|w| w.is_finite() && *w >= 0.0),
            "loss weights must be finite and non-negative"
        );
        self.terms.validate()
    }

    /// Segmentation weight at a 0-based epoch.
    pub fn lambda_seg(&self, epoch: usize) -> f64 {
        if epoch < self.seg_start_epoch {
            0.0
        } else {
            self.seg
        }
    }

    /// `cgan * adv + content * content + lambda_seg * seg`.
    pub fn total(&self, adv: f64, content: f64, seg: f64, epoch: usize) -> f64 {
        self.cgan * adv + self.content * content + self.lambda_seg(epoch) * seg
    }
}
