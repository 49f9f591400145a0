use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::{cluster_alpha, TransferFunction};
use crate::volume::{Geometry, SparsePoints};

/// Version of the binary point-cloud layout below, advertised by the service.
pub const POINT_CLOUD_FORMAT_VERSION: u32 = 1;
/// `3 x f32` position, `f32` intensity, `f32` alpha.
pub const POINT_RECORD_BYTES: usize = 20;

/// How the alphas of a [`PointCloud`] were produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSource {
    /// Min-max normalized over the exported points.
    Cluster,
    Transfer { cusp: f64, threshold: f64 },
    /// Decoded from a stream that does not record the source.
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<[f32; 3]>,
    pub intensities: Vec<f32>,
    pub alphas: Vec<f32>,
    pub alpha_source: AlphaSource,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Physical positions with alphas normalized over `points`.
    pub fn with_cluster_alpha(points: &SparsePoints, geometry: &Geometry) -> Self {
        let alphas = cluster_alpha(points.intensities());
        Self::build(points, geometry, alphas, AlphaSource::Cluster)
    }

    pub fn with_transfer(points: &SparsePoints, geometry: &Geometry, tf: &TransferFunction) -> Self {
        let alphas = points.intensities().iter().map(|&w| tf.alpha(w)).collect();
        Self::build(
            points,
            geometry,
            alphas,
            AlphaSource::Transfer {
                cusp: tf.cusp(),
                threshold: tf.threshold(),
            },
        )
    }

    fn build(points: &SparsePoints, geometry: &Geometry, alphas: Vec<f64>, source: AlphaSource) -> Self {
        Self {
            positions: points
                .indices()
                .iter()
                .map(|&v| geometry.position(v).map(|x| x as f32))
                .collect(),
            intensities: points.intensities().iter().map(|&w| w as f32).collect(),
            alphas: alphas.into_iter().map(|a| a as f32).collect(),
            alpha_source: source,
        }
    }
}

/// `u32` count followed by one 20-byte record per point, little-endian.
pub fn encode_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let n = cloud.len();
    assert!(cloud.intensities.len() == n && cloud.alphas.len() == n);
    let mut out = Vec::with_capacity(4 + n * POINT_RECORD_BYTES);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for p in 0..n {
        for x in cloud.positions[p] {
            out.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        out.extend_from_slice(&cloud.intensities[p].to_bits().to_le_bytes());
        out.extend_from_slice(&cloud.alphas[p].to_bits().to_le_bytes());
    }
    out
}

pub fn decode_point_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < 4 {
        return Err(Error::format(bytes.len() as u64, "missing point count"));
    }
    let n = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(POINT_RECORD_BYTES)
        .and_then(|b| b.checked_add(4))
        .ok_or_else(|| Error::format(0, "point count overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected) as u64,
            format!("expected {expected} bytes for {n} points, got {}", bytes.len()),
        ));
    }
    let f = |off: usize| f32::from_bits(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
    let mut cloud = PointCloud {
        positions: Vec::with_capacity(n),
        intensities: Vec::with_capacity(n),
        alphas: Vec::with_capacity(n),
        alpha_source: AlphaSource::Unknown,
    };
    for p in 0..n {
        let base = 4 + p * POINT_RECORD_BYTES;
        cloud.positions.push([f(base), f(base + 4), f(base + 8)]);
        cloud.intensities.push(f(base + 12));
        cloud.alphas.push(f(base + 16));
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VoxelIndex;

    #[test]
    fn cluster_alpha_cloud() {
        let pts = SparsePoints::from_records(
            [4, 4, 4],
            vec![
                (VoxelIndex::new(0, 0, 0), 2.0),
                (VoxelIndex::new(1, 0, 0), 4.0),
                (VoxelIndex::new(3, 2, 1), 6.0),
            ],
        )
        .unwrap();
        let g = Geometry {
            origin: [1.0, 0.0, -1.0],
            spacing: [0.5, 1.0, 2.0],
        };
        let c = PointCloud::with_cluster_alpha(&pts, &g);
        assert_eq!(c.alphas, vec![0.0, 0.5, 1.0]);
        assert_eq!(c.positions[2], [2.5, 2.0, 1.0]);
        let bytes = encode_point_cloud(&c);
        assert_eq!(bytes.len(), 4 + 3 * 20);
        let back = decode_point_cloud(&bytes).unwrap();
        assert_eq!(back.positions, c.positions);
        assert_eq!(back.alphas, c.alphas);
        assert!(decode_point_cloud(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn transfer_cloud() {
        let pts = SparsePoints::from_records(
            [2, 1, 1],
            vec![(VoxelIndex::new(0, 0, 0), 1.0), (VoxelIndex::new(1, 0, 0), 6.0)],
        )
        .unwrap();
        let tf = TransferFunction::new(2.0, 10.0).unwrap();
        let c = PointCloud::with_transfer(&pts, &Geometry::default(), &tf);
        assert_eq!(c.alphas, vec![0.0, 0.5]);
    }
}
