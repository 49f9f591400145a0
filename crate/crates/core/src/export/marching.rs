//! Iso-surface extraction with a face-consistent marching-cubes table.
//!
//! The case table is derived, not transcribed: on every cube face, each
//! maximal run of inside corners contributes one segment from the edge where
//! the run starts to the edge where it ends. Diagonal (ambiguous) faces thus
//! always separate their inside corners, and both cubes sharing a face make
//! the same choice, which keeps the surface closed. Segments chain into loops
//! that are triangulated around their centroid.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::volume::{DenseVolume, Geometry, SparsePoints, VoxelIndex};
use crate::wdbscan::ClusterResult;

use super::TriangleMesh;

/// Cube edges as `(lower corner, upper corner)`; corner `c` sits at
/// `(c & 1, (c >> 1) & 1, c >> 2)`.
const EDGES: [(u8, u8); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Face corners, counter-clockwise seen from outside the cube.
const FACES: [[u8; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

fn edge_between(a: u8, b: u8) -> u8 {
    let key = (a.min(b), a.max(b));
    EDGES.iter().position(|&e| e == key).expect("corners share an edge") as u8
}

fn build_case(case: u8) -> Vec<Vec<u8>> {
    let inside = |c: u8| case >> c & 1 == 1;
    let mut next = [u8::MAX; 12];
    for face in FACES {
        for s in 0..4 {
            let prev = face[(s + 3) % 4];
            if !inside(face[s]) || inside(prev) {
                continue;
            }
            let mut last = s;
            while inside(face[(last + 1) % 4]) {
                last = (last + 1) % 4;
            }
            let entry = edge_between(prev, face[s]);
            let exit = edge_between(face[last], face[(last + 1) % 4]);
            next[entry as usize] = exit;
        }
    }
    let mut loops = Vec::new();
    let mut seen = [false; 12];
    for start in 0..12u8 {
        if next[start as usize] == u8::MAX || seen[start as usize] {
            continue;
        }
        let mut lp = Vec::new();
        let mut e = start;
        while !seen[e as usize] {
            seen[e as usize] = true;
            lp.push(e);
            e = next[e as usize];
        }
        debug_assert_eq!(e, start);
        loops.push(lp);
    }
    loops
}

fn case_table() -> &'static [Vec<Vec<u8>>] {
    static TABLE: OnceLock<Vec<Vec<Vec<u8>>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=255u8).map(build_case).collect())
}

struct Field<'a> {
    volume: &'a DenseVolume,
    dims: [i64; 3],
}

impl Field<'_> {
    /// NaN outside the grid, so the surface closes at the boundary.
    fn value(&self, p: [i64; 3]) -> f32 {
        if (0..3).any(|a| p[a] < 0 || p[a] >= self.dims[a]) {
            return f32::NAN;
        }
        self.volume.get(p[0] as usize, p[1] as usize, p[2] as usize)
    }
}

/// Surface separating `v > iso` from the rest, in physical coordinates.
///
/// NaN samples count as outside; crossings next to them, or next to the
/// grid border, are placed at the edge midpoint.
pub fn isosurface(volume: &DenseVolume, iso: f64) -> Result<TriangleMesh> {
    if !iso.is_finite() {
        return Err(Error::param("iso", "must be finite"));
    }
    let table = case_table();
    let d = volume.dims().map(|n| n as i64);
    let field = Field { volume, dims: d };
    let geometry = volume.geometry();
    let stride = [1, d[0] + 2, (d[0] + 2) * (d[1] + 2)];

    let mut mesh = TriangleMesh {
        iso_value: iso,
        ..Default::default()
    };
    let mut vertex_of: HashMap<i64, u32> = HashMap::new();

    let corner = |base: [i64; 3], c: u8| {
        [
            base[0] + (c & 1) as i64,
            base[1] + (c >> 1 & 1) as i64,
            base[2] + (c >> 2 & 1) as i64,
        ]
    };

    for z in -1..d[2] {
        for y in -1..d[1] {
            for x in -1..d[0] {
                let base = [x, y, z];
                let mut values = [0f32; 8];
                let mut case = 0u8;
                for c in 0..8u8 {
                    values[c as usize] = field.value(corner(base, c));
                    if values[c as usize] as f64 > iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                for lp in &table[case as usize] {
                    let ids: Vec<u32> = lp
                        .iter()
                        .map(|&e| {
                            let (a, b) = EDGES[e as usize];
                            let pa = corner(base, a);
                            let axis = (0..3).find(|&k| (b ^ a) >> k & 1 == 1).unwrap();
                            let key = ((pa[0] + 1) * stride[0]
                                + (pa[1] + 1) * stride[1]
                                + (pa[2] + 1) * stride[2])
                                * 3
                                + axis as i64;
                            *vertex_of.entry(key).or_insert_with(|| {
                                let (va, vb) = (values[a as usize] as f64, values[b as usize] as f64);
                                let t = if va.is_nan() || vb.is_nan() {
                                    0.5
                                } else {
                                    ((iso - va) / (vb - va)).clamp(0.001, 0.999)
                                };
                                let mut p = pa.map(|c| c as f64);
                                p[axis] += t;
                                mesh.vertices.push(std::array::from_fn(|k| {
                                    geometry.origin[k] + p[k] * geometry.spacing[k]
                                }));
                                (mesh.vertices.len() - 1) as u32
                            })
                        })
                        .collect();
                    if ids.len() == 3 {
                        mesh.triangles.push([ids[0], ids[1], ids[2]]);
                        continue;
                    }
                    let mut centre = [0.0; 3];
                    for &v in &ids {
                        for k in 0..3 {
                            centre[k] += mesh.vertices[v as usize][k] / ids.len() as f64;
                        }
                    }
                    mesh.vertices.push(centre);
                    let c = (mesh.vertices.len() - 1) as u32;
                    for s in 0..ids.len() {
                        mesh.triangles.push([c, ids[s], ids[(s + 1) % ids.len()]]);
                    }
                }
            }
        }
    }
    Ok(mesh)
}

/// Dense grid over one cluster's bounding box, padded by one voxel, with
/// member intensities and zeros elsewhere. The origin keeps voxel-index
/// coordinates of the source lattice.
pub fn rasterize_cluster(points: &SparsePoints, result: &ClusterResult, cluster_id: usize) -> Result<DenseVolume> {
    if cluster_id >= result.n_clusters {
        return Err(Error::UnknownCluster(cluster_id));
    }
    let members = result.members(cluster_id);
    let idx = points.indices();
    let mut lo = [u32::MAX; 3];
    let mut hi = [0u32; 3];
    for &p in &members {
        let v = idx[p].as_array();
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    let dims: [usize; 3] = std::array::from_fn(|a| (hi[a] - lo[a]) as usize + 3);
    let mut values = vec![0f32; dims[0] * dims[1] * dims[2]];
    for &p in &members {
        let v: VoxelIndex = idx[p];
        let o = [v.i, v.j, v.k];
        let r: [usize; 3] = std::array::from_fn(|a| (o[a] - lo[a]) as usize + 1);
        values[r[0] + dims[0] * (r[1] + dims[1] * r[2])] = points.intensities()[p] as f32;
    }
    DenseVolume::new(dims, values)?.with_geometry(Geometry {
        origin: std::array::from_fn(|a| lo[a] as f64 - 1.0),
        spacing: [1.0; 3],
    })
}
