//! Cluster-result exchange: JSON summary, `i32` label array and `u8` flag array.
//!
//! Label and flag arrays are headerless, little-endian and aligned with the
//! point order of the [`SparsePoints`] set they were computed on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{cluster_stats, ClusterStats};
use crate::volume::SparsePoints;

use super::{ClusterResult, ClusteringParams, PointFlag};

/// Cluster-level view of a result: `{n_clusters, clusters: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub n_clusters: usize,
    pub n_points: usize,
    pub n_noise: usize,
    pub params: ClusteringParams,
    pub clusters: Vec<ClusterStats>,
}

impl ClusterSummary {
    pub fn new(result: &ClusterResult, points: &SparsePoints, params: &ClusteringParams) -> Self {
        Self {
            n_clusters: result.n_clusters,
            n_points: result.len(),
            n_noise: result.noise_count(),
            params: *params,
            clusters: cluster_stats(result, points),
        }
    }
}

pub fn encode_labels(labels: &[i32]) -> Vec<u8> {
    labels.iter().flat_map(|l| l.to_le_bytes()).collect()
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<i32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::format(
            (bytes.len() / 4 * 4) as u64,
            "label array length is not a multiple of 4",
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| i32::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

pub fn encode_flags(flags: &[PointFlag]) -> Vec<u8> {
    flags.iter().map(|&f| f as u8).collect()
}

pub fn decode_flags(bytes: &[u8]) -> Result<Vec<PointFlag>> {
    bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            PointFlag::from_u8(b).ok_or_else(|| Error::format(i as u64, format!("bad flag {b}")))
        })
        .collect()
}

/// Rebuilds a result from stored labels and flags; densities are not stored
/// and come back empty.
pub fn result_from_parts(labels: Vec<i32>, flags: Vec<PointFlag>) -> Result<ClusterResult> {
    if labels.len() != flags.len() {
        return Err(Error::InvalidPoints(format!(
            "{} labels but {} flags",
            labels.len(),
            flags.len()
        )));
    }
    for (p, (&l, &f)) in labels.iter().zip(&flags).enumerate() {
        if (l < 0) != (f == PointFlag::Noise) || l < -1 {
            return Err(Error::InvalidPoints(format!(
                "point {p}: label {l} inconsistent with flag {f:?}"
            )));
        }
    }
    let n_clusters = labels.iter().map(|&l| l + 1).max().unwrap_or(0) as usize;
    Ok(ClusterResult {
        labels,
        flags,
        n_clusters,
        densities: Vec::new(),
    })
}
