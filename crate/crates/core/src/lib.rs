//! Sparse intensity-weighted clustering of 3D voxel volumes.
//!
//! A [`volume::DenseVolume`] is thresholded into [`volume::SparsePoints`],
//! clustered with [`wdbscan::cluster`], ranked and peeled with [`features`],
//! and exported as point clouds or meshes with [`export`].

pub mod error;
pub mod export;
pub mod features;
pub mod intensity;
pub mod volume;
pub mod wdbscan;

pub use error::{Error, Result};
