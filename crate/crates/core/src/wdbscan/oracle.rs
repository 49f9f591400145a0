//! Quadratic reference implementation used to cross-check [`super::cluster`].
//!
//! No lattice indexing: neighborhoods come from pairwise squared distances and
//! clusters from breadth-first expansion, in the style of the original
//! DBSCAN. Only the canonical conventions (self-first density summation,
//! smallest-core-neighbor border rule, id order) are shared.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::volume::SparsePoints;

use super::{ClusterResult, ClusteringParams, PointFlag, NOISE_LABEL};

pub const ORACLE_MAX_POINTS: usize = 10_000;

pub fn brute_force_cluster(points: &SparsePoints, params: &ClusteringParams) -> Result<ClusterResult> {
    let n = points.len();
    if n > ORACLE_MAX_POINTS {
        return Err(Error::OracleTooLarge {
            n,
            cap: ORACLE_MAX_POINTS,
        });
    }
    let eps2 = params.eps * params.eps;
    let idx = points.indices();
    let w = points.intensities();

    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|p| {
            (0..n)
                .filter(|&q| {
                    if q == p {
                        return false;
                    }
                    let d2: i64 = idx[p]
                        .as_array()
                        .iter()
                        .zip(idx[q].as_array())
                        .map(|(&a, b)| (a as i64 - b as i64).pow(2))
                        .sum();
                    d2 as f64 <= eps2
                })
                .collect()
        })
        .collect();

    let densities: Vec<f64> = (0..n)
        .map(|p| neighbors[p].iter().fold(w[p], |acc, &q| acc + w[q]))
        .collect();
    let core: Vec<bool> = densities.iter().map(|&d| d >= params.min_weight).collect();

    let mut labels = vec![NOISE_LABEL; n];
    let mut n_clusters = 0;
    for seed in 0..n {
        if !core[seed] || labels[seed] != NOISE_LABEL {
            continue;
        }
        let id = n_clusters as i32;
        n_clusters += 1;
        labels[seed] = id;
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if core[q] && labels[q] == NOISE_LABEL {
                    labels[q] = id;
                    queue.push_back(q);
                }
            }
        }
    }

    let mut flags = vec![PointFlag::Noise; n];
    for p in 0..n {
        if core[p] {
            flags[p] = PointFlag::Core;
            continue;
        }
        if !params.include_border {
            continue;
        }
        if let Some(&q) = neighbors[p].iter().find(|&&q| core[q]) {
            flags[p] = PointFlag::Border;
            labels[p] = labels[q];
        }
    }

    Ok(ClusterResult {
        labels,
        flags,
        n_clusters,
        densities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VoxelIndex;

    #[test]
    fn empty_and_single() {
        let p = ClusteringParams::new(1.7, 5.0).unwrap();
        let r = brute_force_cluster(&SparsePoints::empty([2; 3]), &p).unwrap();
        assert_eq!(r.n_clusters, 0);
        let one = SparsePoints::from_records([2; 3], vec![(VoxelIndex::new(0, 1, 0), 5.0)]).unwrap();
        let r = brute_force_cluster(&one, &p).unwrap();
        assert_eq!(r.n_clusters, 1);
        assert_eq!(r.flags, vec![PointFlag::Core]);
    }

    #[test]
    fn refuses_large_inputs() {
        let recs = (0..ORACLE_MAX_POINTS as u32 + 1)
            .map(|x| (VoxelIndex::new(x % 101, x / 101, 0), 1.0))
            .collect();
        let pts = SparsePoints::from_records([101, 101, 1], recs).unwrap();
        let p = ClusteringParams::new(1.0, 1.0).unwrap();
        assert!(matches!(
            brute_force_cluster(&pts, &p),
            Err(Error::OracleTooLarge { n: 10_001, .. })
        ));
    }
}
