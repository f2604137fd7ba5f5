//! Network operators on [`Tensor`](crate::tensor::Tensor)s.
//!
//! Conventions: convolution is cross-correlation with zero "same" padding;
//! resampling uses half-pixel centers with edge clamping. Every operator is
//! a pure function and deterministic regardless of thread count.

mod conv;
mod norm;
mod pool;
mod resize;

pub use conv::{anisotropic_conv, anisotropic_params, conv3d, ConvParams};
pub use norm::{instance_norm, DEFAULT_EPS};
pub use pool::{avg_pool3d, avg_pool3d_ceil, strip_pool, SpatialAxis};
pub use resize::{
    nearest_index, resize_nearest_labels, resize_trilinear, source_coordinate,
};
