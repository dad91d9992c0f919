pub mod attribution;
pub mod baseline;
pub mod catalog;
pub mod cli;
pub mod config;
pub mod decision;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod raster;
pub mod splitter;
pub mod synthcam;
pub mod triplets;

pub use error::{Error, Result};
pub use image;
