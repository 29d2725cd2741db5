use hsicolor_autograd::{impl_module, Float, Graph, PadMode, Var};
use serde::{Deserialize, Serialize};

use super::Fsb;
use crate::error::{ensure, Error, Result};
use crate::frequency::FEM_LEVELS;
use crate::nn::{Conv2d, ResBlock};

/// Down/up-sampling factor between the input and the feature resolution.
pub const SCALE: usize = 2;
/// Inputs are padded to a multiple of this so every wavelet level divides.
pub const SIZE_MULTIPLE: usize = SCALE << FEM_LEVELS;

/// Component switches. Every flag defaults to on; turning one off removes the
/// component from the model (or, for `use_seg_loss`, from the objective).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub use_fsb: bool,
    pub use_rbs: bool,
    pub use_seg_loss: bool,
    pub use_fem: bool,
    pub use_mdfm: bool,
    pub use_dgm: bool,
    pub use_spectral: bool,
    pub use_dcn: bool,
    pub use_asm: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            use_fsb: true,
            use_rbs: true,
            use_seg_loss: true,
            use_fem: true,
            use_mdfm: true,
            use_dgm: true,
            use_spectral: true,
            use_dcn: true,
            use_asm: true,
        }
    }
}

impl Ablation {
    pub const VARIANTS: [&'static str; 9] = [
        "use_fsb",
        "use_rbs",
        "use_seg_loss",
        "use_fem",
        "use_mdfm",
        "use_dgm",
        "use_spectral",
        "use_dcn",
        "use_asm",
    ];

    /// The full model with one named flag switched off.
    pub fn without(flag: &str) -> Result<Self> {
        let mut a = Self::default();
        let slot = match flag {
            "use_fsb" => &mut a.use_fsb,
            "use_rbs" => &mut a.use_rbs,
            "use_seg_loss" => &mut a.use_seg_loss,
            "use_fem" => &mut a.use_fem,
            "use_mdfm" => &mut a.use_mdfm,
            "use_dgm" => &mut a.use_dgm,
            "use_spectral" => &mut a.use_spectral,
            "use_dcn" => &mut a.use_dcn,
            "use_asm" => &mut a.use_asm,
            other => return Err(Error::Config(format!("unknown ablation flag {other:?}"))),
        };
        *slot = false;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            !self.use_dgm || self.use_dcn || self.use_asm,
            "use_dgm needs use_dcn or use_asm"
        );
        ensure!(self.use_fsb || self.use_rbs, "a group needs use_fsb or use_rbs");
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Spectral bands of the input cube.
    pub bands: usize,
    /// Feature channels after the sub-pixel downsampling.
    pub channels: usize,
    pub groups: usize,
    pub blocks_per_group: usize,
    /// Residual blocks in the reconstruction head.
    pub head_blocks: usize,
    /// Training patch size; frequency weights are laid out for it.
    pub crop: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            bands: 8,
            channels: 16,
            groups: 2,
            blocks_per_group: 3,
            head_blocks: 2,
            crop: 64,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.bands > 0, "bands must be positive");
        ensure!(
            self.channels > 0 && self.channels % (SCALE * SCALE) == 0,
            "channels must be a positive multiple of {}, got {}",
            SCALE * SCALE,
            self.channels
        );
        ensure!(
            self.crop > 0 && self.crop % SIZE_MULTIPLE == 0,
            "crop must be a positive multiple of {SIZE_MULTIPLE}, got {}",
            self.crop
        );
        Ok(())
    }
}

/// Frequency-spatial group: blocks, a residual conv block, and a skip from
/// the group input.
pub struct Fsg<T: Float> {
    pub blocks: Vec<Fsb<T>>,
    pub rb: Option<ResBlock<T>>,
}

impl_module!(Fsg { blocks, rb });

impl<T: Float> Fsg<T> {
    pub fn new(cfg: &GeneratorConfig, flags: &Ablation, rng: &mut dyn rand::RngCore) -> Self {
        let (c, s) = (cfg.channels, cfg.crop / SCALE);
        let n = if flags.use_fsb { cfg.blocks_per_group } else { 0 };
        Self {
            blocks: (0..n).map(|_| Fsb::new(c, s, s, flags, rng)).collect(),
            rb: flags.use_rbs.then(|| ResBlock::new(c, rng)),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let mut y = x;
        for b in &self.blocks {
            y = b.forward(g, y)?;
        }
        if let Some(rb) = &self.rb {
            y = rb.forward(g, y);
        }
        Ok(x.add(y))
    }

    /// Makes the group an identity map.
    pub fn set_zero(&mut self) {
        for b in &mut self.blocks {
            b.set_zero();
        }
        if let Some(rb) = &mut self.rb {
            rb.zero_branch();
        }
    }
}

pub struct ReconHead<T: Float> {
    pub blocks: Vec<ResBlock<T>>,
    pub out: Conv2d<T>,
}

impl_module!(ReconHead { blocks, out });

impl<T: Float> ReconHead<T> {
    pub fn new(c: usize, n: usize, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            blocks: (0..n).map(|_| ResBlock::new(c, rng)).collect(),
            out: Conv2d::same(c, 3, 3, rng),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let y = self.blocks.iter().fold(x, |y, b| b.forward(g, y));
        self.out.forward(g, y).tanh()
    }
}

/// Hyperspectral cube `[N, H, W, L]` to RGB `[N, H, W, 3]` in `[-1, 1]`.
pub struct Generator<T: Float> {
    pub embed: Conv2d<T>,
    pub groups: Vec<Fsg<T>>,
    pub head: ReconHead<T>,
    pub config: GeneratorConfig,
}

impl_module!(Generator { embed, groups, head });

impl<T: Float> Generator<T> {
    pub fn new(cfg: &GeneratorConfig, flags: &Ablation, rng: &mut dyn rand::RngCore) -> Result<Self> {
        cfg.validate()?;
        flags.validate()?;
        let thin = cfg.channels / (SCALE * SCALE);
        Ok(Self {
            embed: Conv2d::same(cfg.bands, thin, 3, rng),
            groups: (0..cfg.groups).map(|_| Fsg::new(cfg, flags, rng)).collect(),
            head: ReconHead::new(thin, cfg.head_blocks, rng),
            config: cfg.clone(),
        })
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let s = x.shape();
        ensure!(s.len() == 4, "expected an [N, H, W, L] input, got {s:?}");
        ensure!(
            s[3] == self.config.bands,
            "input has {} bands, the model expects {}",
            s[3],
            self.config.bands
        );
        let (h, w) = (s[1], s[2]);
        let ph = h.next_multiple_of(SIZE_MULTIPLE) - h;
        let pw = w.next_multiple_of(SIZE_MULTIPLE) - w;
        ensure!(ph < h && pw < w, "input {h}x{w} is too small to pad to a multiple of {SIZE_MULTIPLE}");
        let xp = if ph + pw > 0 { x.pad_spatial(0, ph, 0, pw, PadMode::Reflect) } else { x };
        let f0 = self.embed.forward(g, xp).pixel_unshuffle(SCALE);
        let mut f = f0;
        for grp in &self.groups {
            f = grp.forward(g, f)?;
        }
        let y = self.head.forward(g, f.add(f0).pixel_shuffle(SCALE));
        Ok(if ph + pw > 0 { y.narrow(1, 0, h).narrow(2, 0, w) } else { y })
    }
}
