//! File formats, dataset generation and the training / evaluation pipeline
//! around [`dadf_core`].

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod datagen;
pub mod imageio;
pub mod manifest;
pub mod report;
pub mod train;
pub mod viz;
