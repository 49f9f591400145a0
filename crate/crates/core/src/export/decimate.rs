use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::volume::SparsePoints;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecimateMode {
    /// Every `ceil(n / target)`-th point, starting with the first.
    #[default]
    Stride,
    /// Weighted sampling without replacement, probability proportional to intensity.
    Importance,
}

impl std::str::FromStr for DecimateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "stride" => Ok(Self::Stride),
            "importance" => Ok(Self::Importance),
            other => Err(Error::param("mode", format!("unknown mode {other:?} (stride, importance)"))),
        }
    }
}

/// Reduces `points` to at most `target` records, keeping canonical order.
///
/// Importance mode uses Efraimidis-Spirakis keys `ln(u) / w` and keeps the
/// `target` largest; it is deterministic in `seed`.
pub fn decimate(points: &SparsePoints, target: usize, mode: DecimateMode, seed: u64) -> SparsePoints {
    let n = points.len();
    let target = target.max(1);
    if target >= n {
        return points.clone();
    }
    match mode {
        DecimateMode::Stride => {
            let stride = n.div_ceil(target);
            points.subset((0..n).step_by(stride))
        }
        DecimateMode::Importance => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keyed: Vec<(f64, usize)> = points
                .intensities()
                .iter()
                .enumerate()
                .map(|(p, &w)| {
                    let u = 1.0 - rng.random::<f64>();
                    (u.ln() / w, p)
                })
                .collect();
            keyed.select_nth_unstable_by(target - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut chosen: Vec<usize> = keyed[..target].iter().map(|&(_, p)| p).collect();
            chosen.sort_unstable();
            points.subset(chosen)
        }
    }
}
