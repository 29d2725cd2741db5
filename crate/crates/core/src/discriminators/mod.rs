//! A conditional patch discriminator and an unconditional global-statistics
//! discriminator.

mod patchgan;
mod spatchgan;

pub use patchgan::{PatchGan, PATCH_LAYERS};
pub use spatchgan::{feature_stats, SPatchGan, SPatchOutput, StatHead, SPATCH_SCALES};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// Width of the first patch stage; later stages double it.
    pub patch_width: usize,
    /// Width of the statistics backbone stem; each scale doubles it.
    pub stats_width: usize,
    /// Hidden width of the statistic heads.
    pub head_hidden: usize,
    /// Wrap-around padding in the statistics backbone.
    pub circular: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            patch_width: 64,
            stats_width: 32,
            head_hidden: 64,
            circular: false,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.patch_width > 0 && self.stats_width > 0 && self.head_hidden > 0,
            "discriminator widths must be positive"
        );
        Ok(())
    }
}
