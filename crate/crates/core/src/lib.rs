//! Style augmentation through a noise-randomized linear feature transform,
//! and style activation maps for explaining how style shifts a classifier.

pub mod augment;
pub mod bank;
pub mod data;
pub mod error;
pub mod experiment;
pub mod figures;
pub mod image;
pub mod interpret;
pub mod nn;
pub mod par;
pub mod report;
pub mod render;
pub mod seed;
pub mod style;
pub mod synth;
pub mod train;
pub mod tsne;

pub use error::{Error, Result};
pub use image::ImageTensor;
