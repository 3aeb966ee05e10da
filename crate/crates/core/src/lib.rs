//! Core library for the mapseg pipeline.
//!
//! The pipeline extracts binary urban-footprint masks from scanned
//! historical map tiles: a small encoder-decoder network is trained on
//! image/mask pairs, applied patch-wise to large georeferenced rasters,
//! and its output refined by a second network pass that consumes the
//! binarized first-pass mask. Supporting modules cover raster I/O with
//! world-file georeferencing, reversible tiling and mosaicking, training
//! (BCE loss + Adam), pixel metrics, classical baselines, majority-vote
//! resampling, and a deterministic synthetic map generator used by the
//! test suite.

pub mod baselines;
pub mod data;
pub mod error;
pub mod geotile;
pub mod metrics;
pub mod optim;
pub mod postproc;
pub mod raster;
pub mod seed;
pub mod synthmap;
pub mod tensor;
pub mod train;
pub mod unet;

pub use error::{Error, Result};
pub use raster::{BinaryMask, Geotransform, Raster};
pub use tensor::Tensor;
