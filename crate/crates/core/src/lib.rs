//! Statistical shape analysis on Kendall's shape and size-and-shape spaces.
//!
//! The crate covers Procrustes-type Fréchet means (full Procrustes, partial
//! Procrustes and Ziezold), CLT-based one-sample inference in local charts,
//! Monte-Carlo checks of perturbation models, an embedding of mildly
//! rank-deficient diffusion tensors into size-and-shape space, and the
//! frustum/cylinder machinery used to track tree-bole shape over time.
//!
//! Configurations are stored Helmertized: an `m × (k-1)` matrix whose columns
//! are the centered landmarks after multiplication with the sub-Helmert
//! matrix.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod difftensor;
mod error;
pub mod frusta;
pub mod geometry;
pub mod means;
pub mod perturbation;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Result, ShapeError};
pub use geometry::{
    center, dist_shape_intrinsic, dist_shape_procrustes, dist_shape_ziezold, dist_sizeshape,
    helmert_matrix, optimal_rotation, to_preshape, Configuration, Landmarks, PreShape, Rotation,
    ShapeDistance, ShapePoint, SizeShapePoint,
};
pub use means::{MeanConfig, MeanResult, Rho};

/// Dense real matrix used throughout the crate.
pub type Mat = nalgebra::DMatrix<f64>;
