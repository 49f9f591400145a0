//! Synthetic analogs of scattering and tomography volumes, with ground truth.
//!
//! Both generators are deterministic in their seed (ChaCha8 stream). Feature
//! supports are truncated so that ground truth is exact: a voxel belongs to a
//! feature iff it lies inside the feature's truncation ellipsoid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DenseVolume, VoxelIndex};
use crate::error::{Error, Result};

/// Ground-truth label of background voxels.
pub const NOISE: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Sharp, intense spot.
    Bragg,
    /// Broad, weak ellipsoidal blob.
    Diffuse,
}

/// An axis-aligned Gaussian blob truncated at `truncation` standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub kind: FeatureKind,
    pub center: [f64; 3],
    pub sigma: [f64; 3],
    pub amplitude: f64,
}

impl Feature {
    /// Squared Mahalanobis distance of a lattice point from the center.
    fn dist2(&self, p: [f64; 3]) -> f64 {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.sigma[a]).powi(2))
            .sum()
    }

    fn support_radius(&self, truncation: f64) -> [f64; 3] {
        self.sigma.map(|s| s * truncation)
    }
}

/// Per-voxel truth for a generated volume, aligned with its storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dims: [usize; 3],
    /// [`NOISE`] or the id of the feature (or solid object) owning the voxel.
    pub labels: Vec<i32>,
    pub n_features: usize,
}

impl GroundTruth {
    pub fn label(&self, v: VoxelIndex) -> i32 {
        let [nx, ny, _] = self.dims;
        self.labels[v.i as usize + nx * (v.j as usize + ny * v.k as usize)]
    }

    pub fn count(&self, label: i32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn signal_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != NOISE).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffuseSpec {
    pub dims: [usize; 3],
    pub n_bragg: usize,
    pub n_diffuse: usize,
    /// Log-uniform amplitude range of Bragg peaks.
    pub bragg_amplitude: (f64, f64),
    pub bragg_sigma: f64,
    /// Log-uniform amplitude range of diffuse features.
    pub diffuse_amplitude: (f64, f64),
    /// Uniform range of each per-axis sigma of diffuse features.
    pub diffuse_sigma: (f64, f64),
    /// Support cut-off in standard deviations.
    pub truncation: f64,
    /// Background is uniform in `(0, noise_ceiling]`.
    pub noise_ceiling: f64,
    /// Minimum gap in voxels between the supports of any two random features.
    pub min_gap: Option<f64>,
    /// Fraction of background voxels replaced by isolated log-uniform spikes.
    pub speckle_fraction: f64,
    pub speckle_range: (f64, f64),
    /// Fraction of voxels set to NaN ("no data"), drawn among background voxels.
    pub nan_fraction: f64,
    /// Features used verbatim instead of random placement when non-empty.
    pub features: Vec<Feature>,
}

impl Default for DiffuseSpec {
    fn default() -> Self {
        Self {
            dims: [64, 64, 64],
            n_bragg: 2,
            n_diffuse: 2,
            bragg_amplitude: (1e3, 1e6),
            bragg_sigma: 1.0,
            diffuse_amplitude: (1.0, 1e2),
            diffuse_sigma: (5.0, 20.0),
            truncation: 3.0,
            noise_ceiling: 1e-3,
            min_gap: None,
            speckle_fraction: 0.0,
            speckle_range: (0.05, 1.0),
            nan_fraction: 0.0,
            features: Vec::new(),
        }
    }
}

impl DiffuseSpec {
    /// Lowest feature value inside any support; above `noise_ceiling` for sane specs.
    pub fn signal_floor(&self) -> f64 {
        let lowest = if self.features.is_empty() {
            let mut lo = f64::INFINITY;
            if self.n_bragg > 0 {
                lo = lo.min(self.bragg_amplitude.0);
            }
            if self.n_diffuse > 0 {
                lo = lo.min(self.diffuse_amplitude.0);
            }
            lo
        } else {
            self.features
                .iter()
                .map(|f| f.amplitude)
                .fold(f64::INFINITY, f64::min)
        };
        lowest * (-0.5 * self.truncation * self.truncation).exp()
    }

    fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::param("dims", "must be positive"));
        }
        if self.dims.iter().product::<usize>() > 512 * 512 * 512 {
            return Err(Error::param("dims", "at most 512^3 voxels"));
        }
        let ok_range = |r: (f64, f64)| r.0 > 0.0 && r.0 <= r.1 && r.1.is_finite();
        if !ok_range(self.bragg_amplitude) || !ok_range(self.diffuse_amplitude) {
            return Err(Error::param("amplitude", "ranges must be positive and ordered"));
        }
        if !ok_range(self.diffuse_sigma) || !(self.bragg_sigma > 0.0) {
            return Err(Error::param("sigma", "must be positive and ordered"));
        }
        if !(self.truncation > 0.0) || !(self.noise_ceiling >= 0.0) {
            return Err(Error::param("truncation", "truncation > 0 and noise_ceiling >= 0"));
        }
        if !(0.0..=1.0).contains(&self.speckle_fraction) || !(0.0..=1.0).contains(&self.nan_fraction)
        {
            return Err(Error::param("fraction", "must lie in [0, 1]"));
        }
        if self.speckle_fraction > 0.0 && !ok_range(self.speckle_range) {
            return Err(Error::param("speckle_range", "must be positive and ordered"));
        }
        Ok(())
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + rng.random::<f64>() * (hi - lo)
}

/// Uniform in `(0, 1]`.
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

fn place_features(spec: &DiffuseSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Feature>> {
    let mut placed: Vec<Feature> = Vec::new();
    let kinds = std::iter::repeat_n(FeatureKind::Bragg, spec.n_bragg)
        .chain(std::iter::repeat_n(FeatureKind::Diffuse, spec.n_diffuse));
    for (index, kind) in kinds.enumerate() {
        let (sigma, amplitude) = match kind {
            FeatureKind::Bragg => (
                [spec.bragg_sigma; 3],
                log_uniform(rng, spec.bragg_amplitude),
            ),
            FeatureKind::Diffuse => (
                std::array::from_fn(|_| uniform(rng, spec.diffuse_sigma)),
                log_uniform(rng, spec.diffuse_amplitude),
            ),
        };
        let radius = sigma.map(|s| s * spec.truncation);
        let mut attempts = 0;
        let feature = loop {
            attempts += 1;
            if attempts > MAX_PLACEMENT_ATTEMPTS {
                return Err(Error::Placement { index, attempts: MAX_PLACEMENT_ATTEMPTS });
            }
            // keep the support inside the grid when it fits
            let center: [f64; 3] = std::array::from_fn(|a| {
                let extent = (spec.dims[a] - 1) as f64;
                let margin = radius[a].min(extent / 2.0);
                uniform(rng, (margin, extent - margin))
            });
            let candidate = Feature { kind, center, sigma, amplitude };
            let clear = match spec.min_gap {
                None => true,
                Some(gap) => placed.iter().all(|f| {
                    let r_other = f.support_radius(spec.truncation);
                    let reach = r_other.iter().cloned().fold(0.0, f64::max)
                        + radius.iter().cloned().fold(0.0, f64::max);
                    let d2: f64 = (0..3).map(|a| (f.center[a] - center[a]).powi(2)).sum();
                    d2.sqrt() >= reach + gap
                }),
            };
            if clear {
                break candidate;
            }
        };
        placed.push(feature);
    }
    Ok(placed)
}

/// Bragg-like peaks and diffuse blobs over a uniform background.
pub fn synth_diffuse(spec: &DiffuseSpec, seed: u64) -> Result<(DenseVolume, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = if spec.features.is_empty() {
        place_features(spec, &mut rng)?
    } else {
        spec.features.clone()
    };

    let [nx, ny, nz] = spec.dims;
    let n = nx * ny * nz;
    let mut values: Vec<f32> = (0..n)
        .map(|_| {
            if spec.noise_ceiling > 0.0 {
                (open_unit(&mut rng) * spec.noise_ceiling) as f32
            } else {
                0.0
            }
        })
        .collect();
    let mut labels = vec![NOISE; n];
    // strongest contribution so far, to resolve overlaps
    let mut best = vec![0.0f32; n];

    let t2 = spec.truncation * spec.truncation;
    for (id, f) in features.iter().enumerate() {
        let r = f.support_radius(spec.truncation);
        if (0..3).any(|a| f.center[a] + r[a] < 0.0) {
            continue;
        }
        let lo: [usize; 3] = std::array::from_fn(|a| (f.center[a] - r[a]).ceil().max(0.0) as usize);
        let hi: [usize; 3] = std::array::from_fn(|a| {
            ((f.center[a] + r[a]).floor() as usize).min(spec.dims[a] - 1)
        });
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let d2 = f.dist2([i as f64, j as f64, k as f64]);
                    if d2 > t2 {
                        continue;
                    }
                    let contrib = f.amplitude * (-0.5 * d2).exp();
                    let off = i + nx * (j + ny * k);
                    values[off] = (values[off] as f64 + contrib) as f32;
                    let contrib = contrib as f32;
                    if contrib > best[off] {
                        best[off] = contrib;
                        labels[off] = id as i32;
                    }
                }
            }
        }
    }

    if spec.speckle_fraction > 0.0 || spec.nan_fraction > 0.0 {
        for off in 0..n {
            if labels[off] != NOISE {
                continue;
            }
            let u = rng.random::<f64>();
            if u < spec.nan_fraction {
                values[off] = f32::NAN;
            } else if u < spec.nan_fraction + spec.speckle_fraction {
                values[off] = log_uniform(&mut rng, spec.speckle_range) as f32;
            }
        }
    }

    let volume = DenseVolume::new(spec.dims, values)?;
    let truth = GroundTruth {
        dims: spec.dims,
        labels,
        n_features: features.len(),
    };
    Ok((volume, truth))
}

/// Solid shapes for the tomography analog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SolidShape {
    /// Ball `|c - center| <= radius` around the grid center; radius 0 is empty.
    Sphere { radius: f64 },
    /// Axis-aligned box `|c_a - center_a| <= half_extents_a`.
    Cuboid { half_extents: [f64; 3] },
    /// Root block, cambered blade slab and a tip shroud, scaled to the grid.
    Turbine,
}

impl SolidShape {
    fn contains(&self, p: [f64; 3], dims: [usize; 3]) -> bool {
        let c: [f64; 3] = std::array::from_fn(|a| (dims[a] as f64 - 1.0) / 2.0);
        let d: [f64; 3] = std::array::from_fn(|a| p[a] - c[a]);
        match *self {
            SolidShape::Sphere { radius } => {
                radius > 0.0 && d.iter().map(|x| x * x).sum::<f64>() <= radius * radius
            }
            SolidShape::Cuboid { half_extents } => (0..3).all(|a| d[a].abs() <= half_extents[a]),
            SolidShape::Turbine => {
                let s: [f64; 3] = dims.map(|n| n as f64);
                let u: [f64; 3] = std::array::from_fn(|a| p[a] / s[a]);
                let root = (0.30..=0.70).contains(&u[0])
                    && (0.35..=0.65).contains(&u[1])
                    && (0.08..=0.25).contains(&u[2]);
                // slightly cambered blade: the slab's y-center drifts with x
                let camber = 0.5 + 0.06 * ((u[0] - 0.5) * std::f64::consts::PI).sin();
                let blade = (0.15..=0.85).contains(&u[0])
                    && (u[1] - camber).abs() <= 0.05
                    && (0.25..=0.85).contains(&u[2]);
                let ry = (u[1] - 0.5) / 0.12;
                let rx = (u[0] - 0.5) / 0.40;
                let shroud = (0.85..=0.92).contains(&u[2]) && rx * rx + ry * ry <= 1.0;
                root || blade || shroud
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolidSpec {
    pub shape: SolidShape,
    pub dims: [usize; 3],
    pub fill: f64,
    /// Background is uniform in `(0, noise]`; zero leaves it empty.
    pub noise: f64,
    /// Number of reconstruction-artifact line segments outside the object.
    pub filaments: usize,
}

/// A constant-fill object over background noise and filament artifacts.
pub fn synth_solid(spec: &SolidSpec, seed: u64) -> Result<(DenseVolume, GroundTruth)> {
    if spec.dims.contains(&0) || spec.dims.iter().product::<usize>() > 512 * 512 * 512 {
        return Err(Error::param("dims", "must be positive and at most 512^3 voxels"));
    }
    if !(spec.fill > 0.0 && spec.fill.is_finite()) {
        return Err(Error::param("fill", "must be positive"));
    }
    if !(spec.noise >= 0.0 && spec.noise < spec.fill) {
        return Err(Error::param("noise", "must lie in [0, fill)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [nx, ny, nz] = spec.dims;
    let n = nx * ny * nz;
    let mut values = vec![0.0f32; n];
    let mut labels = vec![NOISE; n];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let off = i + nx * (j + ny * k);
                if spec.shape.contains([i as f64, j as f64, k as f64], spec.dims) {
                    values[off] = spec.fill as f32;
                    labels[off] = 0;
                } else if spec.noise > 0.0 {
                    values[off] = (open_unit(&mut rng) * spec.noise) as f32;
                }
            }
        }
    }

    for _ in 0..spec.filaments {
        let a: [f64; 3] = std::array::from_fn(|ax| rng.random::<f64>() * (spec.dims[ax] - 1) as f64);
        let b: [f64; 3] = std::array::from_fn(|ax| rng.random::<f64>() * (spec.dims[ax] - 1) as f64);
        let level = (spec.noise + (0.1 + 0.2 * rng.random::<f64>()) * spec.fill) as f32;
        let len = (0..3).map(|ax| (b[ax] - a[ax]).powi(2)).sum::<f64>().sqrt();
        let steps = (2.0 * len).ceil() as usize + 1;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let p: [usize; 3] = std::array::from_fn(|ax| (a[ax] + t * (b[ax] - a[ax])).round() as usize);
            let off = p[0] + nx * (p[1] + ny * p[2]);
            if labels[off] == NOISE {
                values[off] = values[off].max(level);
            }
        }
    }

    let volume = DenseVolume::new(spec.dims, values)?;
    let n_features = usize::from(labels.contains(&0));
    Ok((
        volume,
        GroundTruth {
            dims: spec.dims,
            labels,
            n_features,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_features_is_pure_noise() {
        let spec = DiffuseSpec {
            dims: [16, 16, 16],
            n_bragg: 0,
            n_diffuse: 0,
            ..Default::default()
        };
        let (v, truth) = synth_diffuse(&spec, 3).unwrap();
        assert_eq!(truth.signal_count(), 0);
        assert!(v.values().iter().all(|&x| x > 0.0 && x as f64 <= 1e-3));
    }

    #[test]
    fn single_peak_mask_is_truncated_ball() {
        let spec = DiffuseSpec {
            features: vec![Feature {
                kind: FeatureKind::Bragg,
                center: [32.0; 3],
                sigma: [1.0; 3],
                amplitude: 1e4,
            }],
            ..Default::default()
        };
        let (_, truth) = synth_diffuse(&spec, 1).unwrap();
        // independent enumeration of lattice points within 3 sigma
        let mut expected = 0;
        for k in 0..64i64 {
            for j in 0..64i64 {
                for i in 0..64i64 {
                    let d2 = (i - 32).pow(2) + (j - 32).pow(2) + (k - 32).pow(2);
                    let inside = d2 <= 9;
                    let label = truth.label(VoxelIndex::new(i as u32, j as u32, k as u32));
                    assert_eq!(label == 0, inside, "({i},{j},{k})");
                    expected += usize::from(inside);
                }
            }
        }
        assert_eq!(expected, 123);
        assert_eq!(truth.count(0), expected);
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = DiffuseSpec {
            dims: [24, 24, 24],
            diffuse_sigma: (2.0, 3.0),
            speckle_fraction: 0.01,
            ..Default::default()
        };
        let a = synth_diffuse(&spec, 9).unwrap();
        let b = synth_diffuse(&spec, 9).unwrap();
        let c = synth_diffuse(&spec, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn sphere_radius_zero_is_empty() {
        let spec = SolidSpec {
            shape: SolidShape::Sphere { radius: 0.0 },
            dims: [9, 9, 9],
            fill: 1.0,
            noise: 0.0,
            filaments: 0,
        };
        let (v, truth) = synth_solid(&spec, 0).unwrap();
        assert_eq!(truth.signal_count(), 0);
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sphere_count_matches_enumeration() {
        let spec = SolidSpec {
            shape: SolidShape::Sphere { radius: 20.0 },
            dims: [64, 64, 64],
            fill: 1.0,
            noise: 0.0,
            filaments: 0,
        };
        let (v, truth) = synth_solid(&spec, 0).unwrap();
        let c = 31.5f64;
        let mut expected = 0;
        for k in 0..64 {
            for j in 0..64 {
                for i in 0..64 {
                    let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2) + (k as f64 - c).powi(2);
                    expected += usize::from(d2 <= 400.0);
                }
            }
        }
        assert_eq!(expected, 33552);
        assert_eq!(truth.signal_count(), expected);
        assert_eq!(v.values().iter().filter(|&&x| x == 1.0).count(), expected);
    }

    #[test]
    fn noise_stays_below_fill() {
        let spec = SolidSpec {
            shape: SolidShape::Cuboid { half_extents: [4.0, 4.0, 4.0] },
            dims: [21, 21, 21],
            fill: 1.0,
            noise: 0.1,
            filaments: 5,
        };
        let (v, truth) = synth_solid(&spec, 4).unwrap();
        for (x, &l) in v.values().iter().zip(&truth.labels) {
            if l == NOISE {
                assert!(*x > 0.0 && *x < 1.0);
            } else {
                assert_eq!(*x, 1.0);
            }
        }
        assert_eq!(truth.signal_count(), 9 * 9 * 9);
    }

    #[test]
    fn turbine_is_nonempty_and_bounded() {
        let spec = SolidSpec {
            shape: SolidShape::Turbine,
            dims: [64, 64, 64],
            fill: 1.0,
            noise: 0.0,
            filaments: 0,
        };
        let (_, truth) = synth_solid(&spec, 0).unwrap();
        let n = truth.signal_count();
        assert!(n > 5_000 && n < 64 * 64 * 64 / 4, "{n}");
    }
}
