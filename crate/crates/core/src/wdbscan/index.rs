use crate::volume::SparsePoints;

use super::NeighborStencil;

/// Stencil offsets sharing one `(dx, dy)`, with their `dz` values ascending.
#[derive(Debug, Clone)]
struct StencilColumn {
    dx: i32,
    dy: i32,
    dz: Vec<i32>,
}

/// Neighbor lookup over a sorted [`SparsePoints`] set.
///
/// Points are sorted by `(i, j, k)`, so every `(i, j)` column of the lattice
/// is a contiguous run of point ids. `row_start[i * ny + j]` gives the start
/// of that run, which turns a stencil query into at most one short sorted
/// scan per `(dx, dy)` pair.
pub struct LatticeIndex<'a> {
    points: &'a SparsePoints,
    ny: usize,
    nx: usize,
    row_start: Vec<u32>,
    columns: Vec<StencilColumn>,
}

impl<'a> LatticeIndex<'a> {
    pub fn new(points: &'a SparsePoints, stencil: &NeighborStencil) -> Self {
        let [nx, ny, _] = points.dims();
        let mut row_start = vec![0u32; nx * ny + 1];
        for v in points.indices() {
            row_start[v.i as usize * ny + v.j as usize + 1] += 1;
        }
        for r in 1..row_start.len() {
            row_start[r] += row_start[r - 1];
        }

        let mut columns: Vec<StencilColumn> = Vec::new();
        for &[dx, dy, dz] in stencil.offsets() {
            match columns.last_mut() {
                Some(c) if c.dx == dx && c.dy == dy => c.dz.push(dz),
                _ => columns.push(StencilColumn { dx, dy, dz: vec![dz] }),
            }
        }
        Self {
            points,
            ny,
            nx,
            row_start,
            columns,
        }
    }

    fn row(&self, i: i64, j: i64) -> &[crate::volume::VoxelIndex] {
        if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
            return &[];
        }
        let r = i as usize * self.ny + j as usize;
        let (s, e) = (self.row_start[r] as usize, self.row_start[r + 1] as usize);
        &self.points.indices()[s..e]
    }

    fn row_offset(&self, i: i64, j: i64) -> usize {
        self.row_start[i as usize * self.ny + j as usize] as usize
    }

    /// Visits stencil neighbors of `p` in lexicographic order until `f` returns true.
    pub fn for_each_neighbor_until(&self, p: usize, mut f: impl FnMut(usize) -> bool) {
        let v = self.points.indices()[p];
        let (i, j, k) = (v.i as i64, v.j as i64, v.k as i64);
        for col in &self.columns {
            let (ni, nj) = (i + col.dx as i64, j + col.dy as i64);
            let row = self.row(ni, nj);
            if row.is_empty() {
                continue;
            }
            let base = self.row_offset(ni, nj);
            let first = k + col.dz[0] as i64;
            let mut pos = row.partition_point(|w| (w.k as i64) < first);
            for &dz in &col.dz {
                let target = k + dz as i64;
                while pos < row.len() && (row[pos].k as i64) < target {
                    pos += 1;
                }
                if pos == row.len() {
                    break;
                }
                if row[pos].k as i64 == target && f(base + pos) {
                    return;
                }
            }
        }
    }

    pub fn for_each_neighbor(&self, p: usize, mut f: impl FnMut(usize)) {
        self.for_each_neighbor_until(p, |q| {
            f(q);
            false
        });
    }

    /// Own intensity first, then neighbors in lexicographic order.
    pub fn density(&self, p: usize) -> f64 {
        let w = self.points.intensities();
        let mut d = w[p];
        self.for_each_neighbor(p, |q| d += w[q]);
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VoxelIndex;
    use crate::wdbscan::stencil;

    #[test]
    fn neighbors_match_scan() {
        let mut recs = Vec::new();
        let mut s = 12345u64;
        for _ in 0..400 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let i = (s >> 33) % 9;
            let j = (s >> 40) % 9;
            let k = (s >> 50) % 9;
            recs.push((VoxelIndex::new(i as u32, j as u32, k as u32), 1.0));
        }
        recs.sort_by_key(|r| r.0);
        recs.dedup_by_key(|r| r.0);
        let pts = SparsePoints::from_records([9, 9, 9], recs).unwrap();
        for eps in [1.0, 1.5, 1.8, 2.3] {
            let st = stencil(eps);
            let idx = LatticeIndex::new(&pts, &st);
            for p in 0..pts.len() {
                let mut got = Vec::new();
                idx.for_each_neighbor(p, |q| got.push(q));
                let a = pts.indices()[p];
                let want: Vec<usize> = (0..pts.len())
                    .filter(|&q| {
                        let b = pts.indices()[q];
                        let d2 = (a.i as i64 - b.i as i64).pow(2)
                            + (a.j as i64 - b.j as i64).pow(2)
                            + (a.k as i64 - b.k as i64).pow(2);
                        q != p && (d2 as f64) <= eps * eps
                    })
                    .collect();
                assert_eq!(got, want, "eps {eps} point {p}");
            }
        }
    }
}
