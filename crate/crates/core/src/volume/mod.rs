//! Dense scalar volumes and the sparse voxel sets derived from them.
//!
//! A [`DenseVolume`] is stored x-fastest: the flat offset of voxel `(i, j, k)`
//! is `i + nx * (j + ny * k)`. A [`SparsePoints`] set keeps only the voxels
//! above an intensity cutoff, sorted lexicographically by `(i, j, k)`; the
//! position of a record in that order is its point id everywhere else in the
//! crate.

mod io;
pub mod synth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_volume, read_sparse_jsonl, read_vvol, save_volume, write_sparse_jsonl, write_vvol,
    VVOL_HEADER_LEN, VVOL_MAGIC, VVOL_VERSION,
};

/// Integer lattice coordinate of a voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoxelIndex {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl VoxelIndex {
    pub const fn new(i: u32, j: u32, k: u32) -> Self {
        Self { i, j, k }
    }

    pub fn as_array(self) -> [u32; 3] {
        [self.i, self.j, self.k]
    }

    /// Adds a signed offset, returning `None` when any component would go negative.
    pub fn offset(self, d: [i32; 3]) -> Option<Self> {
        Some(Self {
            i: self.i.checked_add_signed(d[0])?,
            j: self.j.checked_add_signed(d[1])?,
            k: self.k.checked_add_signed(d[2])?,
        })
    }
}

/// Physical placement of a lattice: `position = origin + index * spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            origin: [0.0; 3],
            spacing: [1.0; 3],
        }
    }
}

impl Geometry {
    pub fn position(&self, v: VoxelIndex) -> [f64; 3] {
        let idx = v.as_array();
        std::array::from_fn(|a| self.origin[a] + idx[a] as f64 * self.spacing[a])
    }

    /// Maps a geometry given in this lattice's index units to physical units.
    pub fn compose(&self, inner: &Geometry) -> Geometry {
        Geometry {
            origin: std::array::from_fn(|a| self.origin[a] + inner.origin[a] * self.spacing[a]),
            spacing: std::array::from_fn(|a| inner.spacing[a] * self.spacing[a]),
        }
    }
}

/// A regular 3D grid of `f32` samples with axis metadata.
///
/// NaN marks "no data". Infinite values are rejected at construction.
#[derive(Debug, Clone)]
pub struct DenseVolume {
    dims: [usize; 3],
    geometry: Geometry,
    axis_labels: [String; 3],
    values: Vec<f32>,
}

impl PartialEq for DenseVolume {
    /// Bit-exact comparison, so NaN payloads compare equal to themselves.
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.geometry.origin.map(f64::to_bits) == other.geometry.origin.map(f64::to_bits)
            && self.geometry.spacing.map(f64::to_bits) == other.geometry.spacing.map(f64::to_bits)
            && self.axis_labels == other.axis_labels
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl DenseVolume {
    /// Builds a volume with unit spacing, zero origin and `X`/`Y`/`Z` labels.
    pub fn new(dims: [usize; 3], values: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!("dims {dims:?} must be positive")));
        }
        let expected = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidVolume(format!("dims {dims:?} overflow")))?;
        if values.len() != expected {
            return Err(Error::InvalidVolume(format!(
                "expected {expected} values for dims {dims:?}, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| v.is_infinite()) {
            return Err(Error::InvalidVolume(format!("infinite value at offset {pos}")));
        }
        Ok(Self {
            dims,
            geometry: Geometry::default(),
            axis_labels: ["X".into(), "Y".into(), "Z".into()],
            values,
        })
    }

    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, vec![0.0; n])
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Result<Self> {
        if geometry.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidVolume(format!(
                "spacing {:?} must be finite and positive",
                geometry.spacing
            )));
        }
        if geometry.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "origin {:?} must be finite",
                geometry.origin
            )));
        }
        self.geometry = geometry;
        Ok(self)
    }

    /// Axis labels are at most 8 ASCII characters without trailing spaces.
    pub fn with_axis_labels(mut self, labels: [&str; 3]) -> Result<Self> {
        for l in labels {
            if l.len() > 8 || !l.is_ascii() || l.ends_with(' ') {
                return Err(Error::InvalidVolume(format!("bad axis label {l:?}")));
            }
        }
        self.axis_labels = labels.map(str::to_owned);
        Ok(self)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn axis_labels(&self) -> [&str; 3] {
        [
            self.axis_labels[0].as_str(),
            self.axis_labels[1].as_str(),
            self.axis_labels[2].as_str(),
        ]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[self.offset(i, j, k)]
    }

    /// Inverse of [`DenseVolume::offset`].
    pub fn voxel_at(&self, offset: usize) -> VoxelIndex {
        let [nx, ny, _] = self.dims;
        VoxelIndex::new(
            (offset % nx) as u32,
            ((offset / nx) % ny) as u32,
            (offset / (nx * ny)) as u32,
        )
    }

    /// Finite `(min, max)` over non-NaN samples, `None` when everything is NaN.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(None, |acc, &v| {
                let v = v as f64;
                Some(match acc {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                })
            })
    }

    /// Keeps voxels whose value is above `cutoff` (and above zero); NaN is dropped.
    pub fn to_sparse(&self, cutoff: f64) -> Result<SparsePoints> {
        if !cutoff.is_finite() {
            return Err(Error::param("cutoff", format!("{cutoff} is not finite")));
        }
        let floor = cutoff.max(0.0);
        let mut kept: Vec<(VoxelIndex, f64)> = self
            .values
            .par_iter()
            .enumerate()
            .filter_map(|(off, &v)| {
                let v = v as f64;
                (v > floor).then(|| (self.voxel_at(off), v))
            })
            .collect();
        kept.par_sort_unstable_by_key(|r| r.0);
        let (indices, intensities) = kept.into_iter().unzip();
        Ok(SparsePoints {
            dims: self.dims,
            indices,
            intensities,
        })
    }

    /// Averages `thickness` planes perpendicular to `axis`, starting at `index`.
    ///
    /// NaN samples are skipped; a column that is NaN throughout stays NaN.
    pub fn slice(&self, axis: usize, index: usize, thickness: usize) -> Result<Plane> {
        if axis > 2 {
            return Err(Error::Bounds(format!("axis {axis} is not 0, 1 or 2")));
        }
        if thickness == 0 {
            return Err(Error::param("thickness", "must be positive"));
        }
        if index.checked_add(thickness).is_none_or(|end| end > self.dims[axis]) {
            return Err(Error::Bounds(format!(
                "slab {index}..{} exceeds extent {} on axis {axis}",
                index.saturating_add(thickness),
                self.dims[axis]
            )));
        }
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (width, height) = (self.dims[a], self.dims[b]);
        let mut values = Vec::with_capacity(width * height);
        let mut idx = [0usize; 3];
        for v in 0..height {
            for u in 0..width {
                let (mut sum, mut n) = (0.0f64, 0usize);
                idx[a] = u;
                idx[b] = v;
                for t in index..index + thickness {
                    idx[axis] = t;
                    let x = self.get(idx[0], idx[1], idx[2]);
                    if !x.is_nan() {
                        sum += x as f64;
                        n += 1;
                    }
                }
                values.push(if n == 0 { f64::NAN } else { sum / n as f64 });
            }
        }
        Ok(Plane {
            width,
            height,
            values,
        })
    }
}

/// A 2D grid of averaged samples, `u` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Plane {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u + self.width * v]
    }
}

/// Above-cutoff voxels as `(index, intensity)` records in lexicographic order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparsePoints {
    dims: [usize; 3],
    indices: Vec<VoxelIndex>,
    intensities: Vec<f64>,
}

impl SparsePoints {
    /// Sorts the records and validates them against `dims`.
    pub fn from_records(dims: [usize; 3], mut records: Vec<(VoxelIndex, f64)>) -> Result<Self> {
        records.sort_unstable_by_key(|r| r.0);
        for w in records.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidPoints(format!("duplicate voxel {:?}", w[0].0)));
            }
        }
        for (v, x) in &records {
            if !(x.is_finite() && *x > 0.0) {
                return Err(Error::InvalidPoints(format!(
                    "intensity {x} at {v:?} is not positive and finite"
                )));
            }
            let idx = v.as_array();
            if (0..3).any(|a| idx[a] as usize >= dims[a]) {
                return Err(Error::InvalidPoints(format!("{v:?} outside dims {dims:?}")));
            }
        }
        let (indices, intensities) = records.into_iter().unzip();
        Ok(Self {
            dims,
            indices,
            intensities,
        })
    }

    /// Like [`SparsePoints::from_records`], with dims set to the tight extent of the records.
    pub fn from_records_tight(records: Vec<(VoxelIndex, f64)>) -> Result<Self> {
        let mut dims = [1usize; 3];
        for (v, _) in &records {
            for (a, &c) in v.as_array().iter().enumerate() {
                dims[a] = dims[a].max(c as usize + 1);
            }
        }
        Self::from_records(dims, records)
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            indices: Vec::new(),
            intensities: Vec::new(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[VoxelIndex] {
        &self.indices
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn iter(&self) -> impl Iterator<Item = (VoxelIndex, f64)> + '_ {
        self.indices.iter().copied().zip(self.intensities.iter().copied())
    }

    /// Point id of `v`, if present.
    pub fn find(&self, v: VoxelIndex) -> Option<usize> {
        self.indices.binary_search(&v).ok()
    }

    /// Records at the given ascending point ids; keeps the source dims.
    pub fn subset(&self, ids: impl IntoIterator<Item = usize>) -> Self {
        let (indices, intensities) = ids
            .into_iter()
            .map(|p| (self.indices[p], self.intensities[p]))
            .unzip();
        Self {
            dims: self.dims,
            indices,
            intensities,
        }
    }

    /// Records whose `keep` flag is set.
    pub fn filter_mask(&self, keep: &[bool]) -> Self {
        assert_eq!(keep.len(), self.len());
        self.subset((0..self.len()).filter(|&p| keep[p]))
    }

    /// Intensities multiplied by a positive constant.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::param("factor", "must be positive and finite"));
        }
        Ok(Self {
            dims: self.dims,
            indices: self.indices.clone(),
            intensities: self.intensities.iter().map(|x| x * factor).collect(),
        })
    }
}
