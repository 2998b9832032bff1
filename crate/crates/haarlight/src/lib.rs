//! Rotation of spherical functions directly in the 2D non-separable Haar
//! wavelet domain, and a triple-product relighting renderer built on it.
//!
//! The library is organized around five pieces:
//!
//! * [`map`] — square latitude-longitude grids of samples on the sphere;
//! * [`haar`] — forward/inverse non-separable Haar transform, pyramids,
//!   top-k sparsification, and the `HAAR1` binary format;
//! * [`tripling`] — tripling coefficients and the sparse triple-product sum;
//! * [`sphere`] — rotations, the angle maps and their Jacobians, and the
//!   spatial-domain rotation oracle;
//! * [`rot`] — Haar-domain rotation: chain-rule rotation of derivative
//!   fields plus recursive synthesis of the coarser coefficients;
//! * [`render`] — a small CPU renderer that shades points as a Haar-domain
//!   triple product of light, rotated BRDF, and visibility.

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod haar;
pub mod io;
pub mod map;
pub mod render;
pub mod report;
pub mod rot;
pub mod sphere;
pub mod tripling;

pub use error::{Error, Result};
pub use haar::{
    forward_transform, inverse_transform, truncate_top_k, BasisIndex, HaarPyramid, SparseCoeffs,
    WaveletType,
};
pub use map::LatLongMap;
pub use rot::{azimuth_shift_fast, build_rotated_pyramid, DerivativeFields};
pub use sphere::{rotate_angles, rotate_map_spatial, RotationSpec};
pub use tripling::{brute_force_triple_integral, triple_product_sum, tripling_coefficient};
