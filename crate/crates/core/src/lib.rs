//! Infrared hyperspectral to RGB colorization with a frequency/state-space
//! generator, two discriminators, a composite loss and a CPU training loop.

pub mod attention;
pub mod data_io;
pub mod discriminators;
pub mod error;
pub mod frequency;
pub mod fusion;
pub mod losses;
pub mod nn;
pub mod optim;
pub mod selftest;
pub mod state_space;
pub mod training;

pub use error::{Error, Result};
