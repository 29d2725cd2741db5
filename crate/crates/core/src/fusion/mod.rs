//! Fusion blocks and the generator built from them.

mod fsb;
mod generator;
mod mdfm;

pub use fsb::{Fsb, PathFusion};
pub use generator::{Ablation, Fsg, Generator, GeneratorConfig, ReconHead, SIZE_MULTIPLE};
pub use mdfm::{Mdfm, MDFM_SHORTCUT};
