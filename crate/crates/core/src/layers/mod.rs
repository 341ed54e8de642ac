//! Geometric convolution kernels and learnable pooling.

mod conv;
mod kernel;
mod pool;

pub use conv::{geometric_conv, ConvOutput, ConvParams, Neighborhoods, PseudoCoords};
pub use kernel::{bspline_basis_1d, gaussian_kernel, precompute_basis, KernelBasis, KernelDomain, KernelSpec, MAX_DEGREE};
pub use pool::{
    hard_labels, laplacian_reg, one_hot, pool_adjacency, pool_coords, pool_features, pooled_neighborhoods, PooledCoords,
};
