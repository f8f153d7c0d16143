//! Unsupervised weed detection for row-crop aerial imagery.

pub mod classifier;
pub mod error;
pub mod eval;
pub mod inference;
pub mod io;
pub mod labeler;
pub mod pipeline;
pub mod raster;
pub mod rowdetect;
pub mod superpixel;
pub mod synthfield;
