//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volscan_core::volume::{SparsePoints, VoxelIndex};

/// Random sparse set inside a `side^3` box with log-uniform intensities.
pub fn random_points(seed: u64, n: usize, side: u32, w_range: (f64, f64)) -> SparsePoints {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut recs: Vec<(VoxelIndex, f64)> = Vec::with_capacity(n);
    let mut taken = std::collections::HashSet::new();
    let cap = (side as usize).pow(3);
    while recs.len() < n.min(cap) {
        let v = VoxelIndex::new(
            rng.random_range(0..side),
            rng.random_range(0..side),
            rng.random_range(0..side),
        );
        if taken.insert(v) {
            let (lo, hi) = w_range;
            let w = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
            recs.push((v, w));
        }
    }
    let s = side as usize;
    SparsePoints::from_records([s, s, s], recs).unwrap()
}

fn d2(a: VoxelIndex, b: VoxelIndex) -> i64 {
    let (a, b) = (a.as_array(), b.as_array());
    (0..3).map(|k| (a[k] as i64 - b[k] as i64).pow(2)).sum()
}

pub struct Textbook {
    pub labels: Vec<i32>,
    pub core: Vec<bool>,
    /// Per point: clusters of its core neighbors (own cluster for cores).
    pub reachable: Vec<Vec<i32>>,
}

/// Count-based DBSCAN: `|N_eps(p)|` including `p` must reach `min_pts`.
/// Points are visited in input order; borders go to the first cluster that
/// reaches them.
pub fn textbook_dbscan(points: &SparsePoints, eps: f64, min_pts: usize) -> Textbook {
    let idx = points.indices();
    let n = idx.len();
    let region = |p: usize| -> Vec<usize> {
        (0..n).filter(|&q| (d2(idx[p], idx[q]) as f64) <= eps * eps).collect()
    };
    let neighborhoods: Vec<Vec<usize>> = (0..n).map(region).collect();
    let core: Vec<bool> = neighborhoods.iter().map(|r| r.len() >= min_pts).collect();
    let mut labels = vec![-1i32; n];
    let mut visited = vec![false; n];
    let mut next_id = 0;
    for p in 0..n {
        if visited[p] || !core[p] {
            continue;
        }
        visited[p] = true;
        labels[p] = next_id;
        let mut queue: VecDeque<usize> = neighborhoods[p].iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == -1 {
                labels[q] = next_id;
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            if core[q] {
                labels[q] = next_id;
                queue.extend(neighborhoods[q].iter().copied());
            }
        }
        next_id += 1;
    }
    let reachable = (0..n)
        .map(|p| {
            let mut c: Vec<i32> = neighborhoods[p]
                .iter()
                .filter(|&&q| core[q])
                .map(|&q| labels[q])
                .collect();
            c.sort_unstable();
            c.dedup();
            c
        })
        .collect();
    Textbook {
        labels,
        core,
        reachable,
    }
}

/// Offsets within `eps`, enumerated from scratch.
pub fn ball_offsets(eps: f64) -> Vec<[i64; 3]> {
    let r = eps.floor() as i64;
    let mut out = Vec::new();
    for dx in -r..=r {
        for dy in -r..=r {
            for dz in -r..=r {
                let d = dx * dx + dy * dy + dz * dz;
                if d > 0 && (d as f64) <= eps * eps {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Boolean-grid peeling of a unit-intensity solid: returns `|C|` and the
/// interior sizes `|K_1|, |K_2|, ...` up to `depth`.
///
/// With unit weights a point is core iff `1 + #neighbors >= min_weight`,
/// so every pass reduces to counting set neighbors on a dense grid.
pub fn unit_solid_peel(mask: &[bool], dims: [usize; 3], eps: f64, min_weight: f64, depth: usize) -> (usize, Vec<usize>) {
    let offsets = ball_offsets(eps);
    let at = |m: &[bool], p: [i64; 3]| -> bool {
        if (0..3).any(|a| p[a] < 0 || p[a] >= dims[a] as i64) {
            return false;
        }
        m[p[0] as usize + dims[0] * (p[1] as usize + dims[1] * p[2] as usize)]
    };
    let core_of = |m: &[bool]| -> Vec<bool> {
        let mut out = vec![false; m.len()];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let off = i + dims[0] * (j + dims[1] * k);
                    if !m[off] {
                        continue;
                    }
                    let p = [i as i64, j as i64, k as i64];
                    let count = offsets
                        .iter()
                        .filter(|d| at(m, [p[0] + d[0], p[1] + d[1], p[2] + d[2]]))
                        .count();
                    out[off] = 1.0 + count as f64 >= min_weight;
                }
            }
        }
        out
    };
    let size = mask.iter().filter(|&&b| b).count();
    let mut current = mask.to_vec();
    let mut sizes = Vec::new();
    for _ in 0..depth {
        current = core_of(&current);
        sizes.push(current.iter().filter(|&&b| b).count());
    }
    (size, sizes)
}

/// Lattice points of the ball of `radius` around the center of `dims`.
pub fn ball_mask(dims: [usize; 3], radius: f64) -> Vec<bool> {
    let c: [f64; 3] = std::array::from_fn(|a| (dims[a] as f64 - 1.0) / 2.0);
    let mut m = Vec::with_capacity(dims.iter().product());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let d = (i as f64 - c[0]).powi(2) + (j as f64 - c[1]).powi(2) + (k as f64 - c[2]).powi(2);
                m.push(radius > 0.0 && d <= radius * radius);
            }
        }
    }
    m
}
