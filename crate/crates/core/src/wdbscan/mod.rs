//! Intensity-weighted DBSCAN on a voxel lattice.
//!
//! Each point contributes its intensity to the density of every point whose
//! ε-neighborhood contains it, and to its own. A point is *core* when that
//! weighted density reaches `min_weight`. Core points within ε of each other
//! form clusters; non-core points within ε of a core point are *border*
//! points of the cluster of their lexicographically-smallest core neighbor.
//!
//! Because coordinates are integer voxel indices, the ε-neighborhood is a
//! fixed set of integer offsets (a [`NeighborStencil`]): ε in `[1, √2)` gives
//! the 6 face neighbors, `[√2, √3)` adds the 12 edge neighbors, and so on.
//!
//! Output is canonical: cluster ids follow the order of each cluster's first
//! core point, and densities are summed in a fixed order (self first, then
//! neighbors in lexicographic order), so results do not depend on the number
//! of threads.

mod index;
pub mod io;
mod oracle;

use std::sync::atomic::{AtomicU32, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::SparsePoints;

pub use index::LatticeIndex;
pub use oracle::{brute_force_cluster, ORACLE_MAX_POINTS};

pub const DEFAULT_EPS: f64 = 1.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringParams {
    /// Neighborhood radius in voxel-index units.
    pub eps: f64,
    /// Weighted-minPts, in intensity units.
    pub min_weight: f64,
    /// `false` drops border points: only core points keep a cluster label.
    pub include_border: bool,
}

impl ClusteringParams {
    pub fn new(eps: f64, min_weight: f64) -> Result<Self> {
        let p = Self {
            eps,
            min_weight,
            include_border: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn core_only(self) -> Self {
        Self {
            include_border: false,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::param("eps", "must be positive and finite"));
        }
        if !(self.min_weight.is_finite() && self.min_weight > 0.0) {
            return Err(Error::param("min_weight", "must be positive and finite"));
        }
        if self.eps < 1.0 {
            log::warn!(
                "eps {} < 1 has no lattice neighbors; every point is judged on its own weight",
                self.eps
            );
        }
        Ok(())
    }
}

/// Integer offsets with `0 < |d|^2 <= eps^2`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborStencil {
    offsets: Vec<[i32; 3]>,
}

impl NeighborStencil {
    pub fn new(eps: f64) -> Self {
        let eps2 = eps * eps;
        let r = eps.floor() as i32;
        let mut offsets = Vec::new();
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    let d2 = dx * dx + dy * dy + dz * dz;
                    if d2 > 0 && d2 as f64 <= eps2 {
                        offsets.push([dx, dy, dz]);
                    }
                }
            }
        }
        Self { offsets }
    }

    pub fn offsets(&self) -> &[[i32; 3]] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

pub fn stencil(eps: f64) -> NeighborStencil {
    NeighborStencil::new(eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum PointFlag {
    Noise = 0,
    Border = 1,
    Core = 2,
}

impl PointFlag {
    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Noise),
            1 => Some(Self::Border),
            2 => Some(Self::Core),
            _ => None,
        }
    }
}

pub const NOISE_LABEL: i32 = -1;

/// Per-point clustering outcome, aligned with the [`SparsePoints`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub labels: Vec<i32>,
    pub flags: Vec<PointFlag>,
    pub n_clusters: usize,
    pub densities: Vec<f64>,
}

impl ClusterResult {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_core(&self, p: usize) -> bool {
        self.flags[p] == PointFlag::Core
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE_LABEL).count()
    }

    /// Point ids belonging to `cluster`, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        let c = cluster as i32;
        (0..self.labels.len()).filter(|&p| self.labels[p] == c).collect()
    }

    /// Equality including the exact bits of every density.
    pub fn bit_identical(&self, other: &Self) -> bool {
        self.labels == other.labels
            && self.flags == other.flags
            && self.n_clusters == other.n_clusters
            && self.densities.len() == other.densities.len()
            && self
                .densities
                .iter()
                .zip(&other.densities)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// `I_p` plus the intensities of all present stencil neighbors of point `p`.
pub fn weighted_density(points: &SparsePoints, p: usize, s: &NeighborStencil) -> f64 {
    let index = LatticeIndex::new(points, s);
    index.density(p)
}

/// Lock-free union-find whose roots are always the smallest member id.
struct MinUnionFind {
    parent: Vec<AtomicU32>,
}

impl MinUnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).map(AtomicU32::new).collect(),
        }
    }

    fn find(&self, mut x: u32) -> u32 {
        loop {
            let p = self.parent[x as usize].load(Ordering::Acquire);
            if p == x {
                return x;
            }
            let gp = self.parent[p as usize].load(Ordering::Acquire);
            if gp != p {
                // path halving; losing the race is harmless
                let _ = self.parent[x as usize].compare_exchange_weak(
                    p,
                    gp,
                    Ordering::AcqRel,
                    Ordering::Relaxed,
                );
            }
            x = gp;
        }
    }

    fn union(&self, a: u32, b: u32) {
        let (mut a, mut b) = (a, b);
        loop {
            a = self.find(a);
            b = self.find(b);
            if a == b {
                return;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if self.parent[hi as usize]
                .compare_exchange(hi, lo, Ordering::AcqRel, Ordering::Acquire)
                .is_ok()
            {
                return;
            }
        }
    }
}

/// Clusters `points` with intensity-weighted DBSCAN.
///
/// Runs on the current rayon pool; the result is identical for any pool size.
pub fn cluster(points: &SparsePoints, params: &ClusteringParams) -> ClusterResult {
    let n = points.len();
    assert!(n < u32::MAX as usize, "too many points for 32-bit ids");
    let stencil = NeighborStencil::new(params.eps);
    let index = LatticeIndex::new(points, &stencil);

    let densities: Vec<f64> = (0..n).into_par_iter().map(|p| index.density(p)).collect();
    let core: Vec<bool> = densities.par_iter().map(|&d| d >= params.min_weight).collect();

    let uf = MinUnionFind::new(n);
    (0..n).into_par_iter().filter(|&p| core[p]).for_each(|p| {
        index.for_each_neighbor(p, |q| {
            if q > p && core[q] {
                uf.union(p as u32, q as u32);
            }
        });
    });

    let mut labels = vec![NOISE_LABEL; n];
    let mut n_clusters = 0usize;
    for p in 0..n {
        if !core[p] {
            continue;
        }
        let root = uf.find(p as u32) as usize;
        if root == p {
            labels[p] = n_clusters as i32;
            n_clusters += 1;
        } else {
            // root < p, already labeled
            labels[p] = labels[root];
        }
    }

    let border: Vec<i32> = if params.include_border {
        (0..n)
            .into_par_iter()
            .map(|p| {
                if core[p] {
                    return NOISE_LABEL;
                }
                let mut label = NOISE_LABEL;
                index.for_each_neighbor_until(p, |q| {
                    if core[q] {
                        label = labels[q];
                        true
                    } else {
                        false
                    }
                });
                label
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut flags = vec![PointFlag::Noise; n];
    for p in 0..n {
        if core[p] {
            flags[p] = PointFlag::Core;
        } else if params.include_border && border[p] != NOISE_LABEL {
            flags[p] = PointFlag::Border;
            labels[p] = border[p];
        }
    }

    ClusterResult {
        labels,
        flags,
        n_clusters,
        densities,
    }
}
