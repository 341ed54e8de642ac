//! Graph convolution networks on surface meshes with spectral node embedding
//! and learnable pooling.
//!
//! The pipeline runs mesh → weighted graph → normalized Laplacian → aligned
//! spectral embedding → geometric convolutions with learned soft clustering
//! → whole-graph prediction.

pub mod autodiff;
pub mod error;
pub mod kdtree;
pub mod kmeans;
pub mod layers;
pub mod mesh;
pub mod model;
pub mod sparse;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
