//! Cube and image containers, the cube file format, synthetic paired scenes
//! and patch extraction.

mod cube;
mod image;
mod patches;
mod synth;

pub use cube::{normalize_cube, read_cube, write_cube, HyperCube, CUBE_MAGIC};
pub use image::{read_pgm, read_ppm, write_pgm, write_ppm, RgbImage, SegMask};
pub use patches::{
    extract_patches, random_crop_origin, random_crop_pair, window_origins, PatchWindow,
};
pub use synth::{class_signature, sample_seed, synth_scene, SceneSample, PALETTE};
