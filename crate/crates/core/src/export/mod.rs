//! Rendering-ready outputs: decimated alpha-weighted point clouds and
//! iso-surface meshes.

mod cloud;
mod decimate;
mod marching;
mod mesh;

pub use cloud::{
    decode_point_cloud, encode_point_cloud, AlphaSource, PointCloud, POINT_CLOUD_FORMAT_VERSION,
    POINT_RECORD_BYTES,
};
pub use decimate::{decimate, DecimateMode};
pub use marching::{isosurface, rasterize_cluster};
pub use mesh::TriangleMesh;
