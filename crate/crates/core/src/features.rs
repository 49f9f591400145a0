//! Cluster statistics, ranking, selection and shell ("peel") extraction.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{SparsePoints, VoxelIndex};
use crate::wdbscan::{cluster, ClusterResult, ClusteringParams, PointFlag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub id: usize,
    pub size: usize,
    pub core_count: usize,
    pub total_intensity: f64,
    pub max_intensity: f64,
    /// Unweighted mean voxel index of the members.
    pub centroid: [f64; 3],
    /// Inclusive `[min, max]` corners.
    pub bbox: [VoxelIndex; 2],
}

/// Statistics for every cluster, indexed by cluster id.
pub fn cluster_stats(r: &ClusterResult, points: &SparsePoints) -> Vec<ClusterStats> {
    let mut stats: Vec<ClusterStats> = (0..r.n_clusters)
        .map(|id| ClusterStats {
            id,
            size: 0,
            core_count: 0,
            total_intensity: 0.0,
            max_intensity: f64::NEG_INFINITY,
            centroid: [0.0; 3],
            bbox: [VoxelIndex::new(u32::MAX, u32::MAX, u32::MAX), VoxelIndex::new(0, 0, 0)],
        })
        .collect();
    for (p, (v, w)) in points.iter().enumerate() {
        let Ok(id) = usize::try_from(r.labels[p]) else {
            continue;
        };
        let s = &mut stats[id];
        s.size += 1;
        s.core_count += usize::from(r.flags[p] == PointFlag::Core);
        s.total_intensity += w;
        s.max_intensity = s.max_intensity.max(w);
        let c = v.as_array();
        for a in 0..3 {
            s.centroid[a] += c[a] as f64;
        }
        let [lo, hi] = &mut s.bbox;
        *lo = VoxelIndex::new(lo.i.min(v.i), lo.j.min(v.j), lo.k.min(v.k));
        *hi = VoxelIndex::new(hi.i.max(v.i), hi.j.max(v.j), hi.k.max(v.k));
    }
    for s in &mut stats {
        if s.size > 0 {
            s.centroid = s.centroid.map(|c| c / s.size as f64);
        }
    }
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKey {
    #[default]
    Size,
    TotalIntensity,
    MaxIntensity,
}

impl std::str::FromStr for RankKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "size" => Ok(Self::Size),
            "total_intensity" => Ok(Self::TotalIntensity),
            "max_intensity" => Ok(Self::MaxIntensity),
            other => Err(Error::param(
                "key",
                format!("unknown rank key {other:?} (size, total_intensity, max_intensity)"),
            )),
        }
    }
}

/// Clusters in descending `key` order, ties broken by ascending id.
pub fn rank_clusters(r: &ClusterResult, points: &SparsePoints, key: RankKey) -> Vec<ClusterStats> {
    let mut stats = cluster_stats(r, points);
    let value = |s: &ClusterStats| match key {
        RankKey::Size => s.size as f64,
        RankKey::TotalIntensity => s.total_intensity,
        RankKey::MaxIntensity => s.max_intensity,
    };
    stats.sort_by(|a, b| {
        value(b)
            .partial_cmp(&value(a))
            .unwrap_or(Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    stats
}

/// Member points of the chosen clusters, in canonical order.
pub fn select(r: &ClusterResult, points: &SparsePoints, ids: &BTreeSet<usize>) -> Result<SparsePoints> {
    if let Some(&bad) = ids.iter().find(|&&id| id >= r.n_clusters) {
        return Err(Error::UnknownCluster(bad));
    }
    Ok(points.subset(
        (0..points.len()).filter(|&p| usize::try_from(r.labels[p]).is_ok_and(|id| ids.contains(&id))),
    ))
}

/// Outer layer and remaining interior of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellResult {
    pub cluster_id: usize,
    pub peel_depth: usize,
    pub shell: SparsePoints,
    pub interior: SparsePoints,
    /// `|cluster| / |shell|`; infinite when nothing was peeled.
    pub reduction_factor: f64,
}

impl ShellResult {
    pub fn cluster_size(&self) -> usize {
        self.shell.len() + self.interior.len()
    }

    pub fn stats(&self) -> ShellStats {
        ShellStats {
            cluster_id: self.cluster_id,
            size: self.cluster_size(),
            shell_size: self.shell.len(),
            interior_size: self.interior.len(),
            reduction_factor: self
                .reduction_factor
                .is_finite()
                .then_some(self.reduction_factor),
            shell_empty: self.shell.is_empty(),
            peel_depth: self.peel_depth,
        }
    }
}

/// JSON form of a [`ShellResult`]; an infinite factor is written as `null`
/// with `shell_empty` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellStats {
    pub cluster_id: usize,
    pub size: usize,
    pub shell_size: usize,
    pub interior_size: usize,
    pub reduction_factor: Option<f64>,
    pub shell_empty: bool,
    pub peel_depth: usize,
}

/// Runs the first (border-keeping) pass and peels `cluster_id`.
pub fn shell_extract(
    points: &SparsePoints,
    params: &ClusteringParams,
    cluster_id: usize,
    peel_depth: usize,
) -> Result<ShellResult> {
    let pass1 = cluster(
        points,
        &ClusteringParams {
            include_border: true,
            ..*params
        },
    );
    shell_extract_with(points, params, &pass1, cluster_id, peel_depth)
}

/// Peels `cluster_id` of a precomputed first pass.
///
/// Depth 1 keeps the first pass's core points of the cluster, i.e. a
/// core-only rerun on the full data restricted to this cluster. Each further
/// depth reruns the core-only pass on the previous interior alone.
pub fn shell_extract_with(
    points: &SparsePoints,
    params: &ClusteringParams,
    pass1: &ClusterResult,
    cluster_id: usize,
    peel_depth: usize,
) -> Result<ShellResult> {
    params.validate()?;
    if peel_depth == 0 {
        return Err(Error::param("peel_depth", "must be at least 1"));
    }
    if cluster_id >= pass1.n_clusters {
        return Err(Error::UnknownCluster(cluster_id));
    }
    let members = pass1.members(cluster_id);
    let core_only = params.core_only();

    // interior as ids into `points`, ascending
    let mut interior: Vec<usize> = members.iter().copied().filter(|&p| pass1.is_core(p)).collect();
    for depth in 2..=peel_depth {
        let sub = points.subset(interior.iter().copied());
        let r = cluster(&sub, &core_only);
        let next: Vec<usize> = (0..sub.len()).filter(|&q| r.is_core(q)).map(|q| interior[q]).collect();
        if next.is_empty() {
            return Err(Error::PeelExhausted {
                last_depth: depth - 1,
            });
        }
        interior = next;
    }

    let mut is_interior = vec![false; points.len()];
    for &p in &interior {
        is_interior[p] = true;
    }
    let shell_ids: Vec<usize> = members.iter().copied().filter(|&p| !is_interior[p]).collect();
    let reduction_factor = if shell_ids.is_empty() {
        f64::INFINITY
    } else {
        members.len() as f64 / shell_ids.len() as f64
    };
    Ok(ShellResult {
        cluster_id,
        peel_depth,
        shell: points.subset(shell_ids),
        interior: points.subset(interior),
        reduction_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(origin: [u32; 3], n: u32, w: f64, recs: &mut Vec<(VoxelIndex, f64)>) {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    recs.push((VoxelIndex::new(origin[0] + i, origin[1] + j, origin[2] + k), w));
                }
            }
        }
    }

    fn fixture() -> (SparsePoints, ClusterResult) {
        // clusters of 9, 9 and 5 points built from lines
        let mut recs = Vec::new();
        for k in 0..9 {
            recs.push((VoxelIndex::new(1, 1, k), 1.0));
            recs.push((VoxelIndex::new(5, 1, k), 2.0));
        }
        for k in 0..5 {
            recs.push((VoxelIndex::new(9, 1, k), 1.0));
        }
        let pts = SparsePoints::from_records([12, 3, 10], recs).unwrap();
        let r = cluster(&pts, &ClusteringParams::new(1.0, 1.0).unwrap());
        (pts, r)
    }

    #[test]
    fn rank_ties_by_id() {
        let (pts, r) = fixture();
        assert_eq!(r.n_clusters, 3);
        let ranked = rank_clusters(&r, &pts, RankKey::Size);
        let order: Vec<(usize, usize)> = ranked.iter().map(|s| (s.id, s.size)).collect();
        assert_eq!(order, vec![(0, 9), (1, 9), (2, 5)]);
        let by_intensity = rank_clusters(&r, &pts, RankKey::TotalIntensity);
        assert_eq!(by_intensity[0].id, 1);
        assert_eq!(by_intensity[0].total_intensity, 18.0);
        assert_eq!(by_intensity[0].bbox, [VoxelIndex::new(5, 1, 0), VoxelIndex::new(5, 1, 8)]);
        assert_eq!(by_intensity[0].centroid, [5.0, 1.0, 4.0]);
    }

    #[test]
    fn single_cluster_rank() {
        let mut recs = Vec::new();
        cube([0, 0, 0], 2, 1.0, &mut recs);
        let pts = SparsePoints::from_records([2, 2, 2], recs).unwrap();
        let r = cluster(&pts, &ClusteringParams::new(1.0, 1.0).unwrap());
        assert_eq!(rank_clusters(&r, &pts, RankKey::MaxIntensity).len(), 1);
    }

    #[test]
    fn select_cases() {
        let (pts, r) = fixture();
        let all: BTreeSet<usize> = (0..3).collect();
        assert_eq!(select(&r, &pts, &all).unwrap().len(), 23);
        assert!(select(&r, &pts, &BTreeSet::new()).unwrap().is_empty());
        let one = select(&r, &pts, &BTreeSet::from([2])).unwrap();
        assert!(one.iter().all(|(v, _)| v.i == 9));
        assert!(matches!(
            select(&r, &pts, &BTreeSet::from([3])),
            Err(Error::UnknownCluster(3))
        ));
    }

    #[test]
    fn nothing_to_peel() {
        let mut recs = Vec::new();
        cube([1, 1, 1], 3, 10.0, &mut recs);
        let pts = SparsePoints::from_records([5, 5, 5], recs).unwrap();
        let params = ClusteringParams::new(1.7, 70.0).unwrap();
        let s = shell_extract(&pts, &params, 0, 1).unwrap();
        assert!(s.shell.is_empty());
        assert_eq!(s.interior.len(), 27);
        assert!(s.reduction_factor.is_infinite());
        let stats = s.stats();
        assert!(stats.shell_empty);
        assert_eq!(stats.reduction_factor, None);
    }

    #[test]
    fn peel_exhaustion_reports_depth() {
        // line of 5 unit points, eps 1, min_weight 3: ends are border,
        // depth 2 keeps only the middle point, depth 3 keeps nothing
        let recs = (0..5).map(|k| (VoxelIndex::new(0, 0, k), 1.0)).collect();
        let pts = SparsePoints::from_records([1, 1, 5], recs).unwrap();
        let params = ClusteringParams::new(1.0, 3.0).unwrap();
        let d1 = shell_extract(&pts, &params, 0, 1).unwrap();
        assert_eq!((d1.shell.len(), d1.interior.len()), (2, 3));
        let d2 = shell_extract(&pts, &params, 0, 2).unwrap();
        assert_eq!(d2.interior.indices(), &[VoxelIndex::new(0, 0, 2)]);
        assert_eq!(d2.reduction_factor, 5.0 / 4.0);
        match shell_extract(&pts, &params, 0, 3) {
            Err(Error::PeelExhausted { last_depth }) => assert_eq!(last_depth, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(shell_extract(&pts, &params, 1, 1), Err(Error::UnknownCluster(1))));
        assert!(shell_extract(&pts, &params, 0, 0).is_err());
    }
}
