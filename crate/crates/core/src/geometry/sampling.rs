//! Farthest point sampling, its nose-anchored dithering variant, and ball query.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cloud::{dist_sq, sub, Point3, PointCloud, EIGEN_EPS};
use super::index::SpatialIndex;
use crate::error::{Error, Result};

/// Uniform ranges that DFPS draws its radius and exponent from when dithering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DitherRanges {
    pub radius: (f64, f64),
    pub exponent: (f64, f64),
}

impl Default for DitherRanges {
    fn default() -> Self {
        Self {
            radius: (50.0, 80.0),
            exponent: (-0.2, 0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    /// Valid radius around the nose tip (mm).
    pub radius: f64,
    /// Exponent applied to the surface-variation eigenvalue.
    pub exponent: f64,
    /// First selected point. `None` picks the in-radius point nearest the nose
    /// tip.
    pub seed_index: Option<usize>,
    /// When set, `radius` and `exponent` are ignored and drawn from these
    /// ranges once per call.
    pub dither: Option<DitherRanges>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self::fixed(65.0, 0.0)
    }
}

impl SamplingParams {
    pub fn fixed(radius: f64, exponent: f64) -> Self {
        Self {
            radius,
            exponent,
            seed_index: None,
            dither: None,
        }
    }

    pub fn dithered(ranges: DitherRanges) -> Self {
        Self {
            dither: Some(ranges),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dither {
            None => {
                if !(self.radius > 0.0) || !self.exponent.is_finite() {
                    return Err(Error::invalid("DFPS radius must be positive and exponent finite"));
                }
            }
            Some(d) => {
                if !(d.radius.0 > 0.0 && d.radius.0 < d.radius.1) {
                    return Err(Error::invalid("DFPS radius range must satisfy 0 < low < high"));
                }
                if !(d.exponent.0 < d.exponent.1) {
                    return Err(Error::invalid("DFPS exponent range must satisfy low < high"));
                }
            }
        }
        Ok(())
    }

    /// The `(radius, exponent)` pair used for one call. Consumes randomness
    /// only when dithering.
    pub fn resolve<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match &self.dither {
            None => (self.radius, self.exponent),
            Some(d) => {
                let r = rng.random_range(d.radius.0..d.radius.1);
                let p = rng.random_range(d.exponent.0..d.exponent.1);
                (r, p)
            }
        }
    }
}

/// Classic farthest point sampling starting at `seed_index`; ties go to the
/// smallest index.
pub fn fps(points: &[Point3], count: usize, seed_index: usize) -> Result<Vec<usize>> {
    if count == 0 || count > points.len() {
        return Err(Error::invalid(format!(
            "fps count {count} must be in 1..={}",
            points.len()
        )));
    }
    if seed_index >= points.len() {
        return Err(Error::invalid("fps seed index out of range"));
    }
    let candidates: Vec<usize> = (0..points.len()).collect();
    Ok(farthest_select(points, &candidates, None, seed_index, count))
}

/// Dithering farthest point sampling around the cloud's nose tip.
///
/// Each iteration selects `argmax_j λ_j · min_i d(x_i, x_j)` where `λ_j` is
/// zero outside `radius` of the nose tip and `clamp(e_j, EIGEN_EPS, 1)^p`
/// inside it.
pub fn dfps<R: Rng + ?Sized>(
    cloud: &PointCloud,
    count: usize,
    params: &SamplingParams,
    rng: &mut R,
) -> Result<Vec<usize>> {
    params.validate()?;
    let eig = cloud
        .eigenvalues
        .as_deref()
        .ok_or_else(|| Error::invalid("dfps requires eigenvalues"))?;
    let nose = cloud
        .nose_tip
        .ok_or_else(|| Error::invalid("dfps requires a nose tip"))?;
    let (radius, exponent) = params.resolve(rng);
    dfps_resolved(&cloud.points, eig, nose, count, radius, exponent, params.seed_index)
}

/// DFPS with an already drawn radius and exponent.
pub fn dfps_resolved(
    points: &[Point3],
    eigenvalues: &[f64],
    nose_tip: Point3,
    count: usize,
    radius: f64,
    exponent: f64,
    seed_index: Option<usize>,
) -> Result<Vec<usize>> {
    if eigenvalues.len() != points.len() {
        return Err(Error::invalid("eigenvalue count differs from point count"));
    }
    if count == 0 {
        return Err(Error::invalid("dfps count must be at least 1"));
    }
    let r2 = radius * radius;
    let candidates: Vec<usize> = (0..points.len())
        .filter(|&j| dist_sq(&points[j], &nose_tip) <= r2)
        .collect();
    if candidates.len() < count {
        return Err(Error::InsufficientPoints {
            needed: count,
            available: candidates.len(),
        });
    }
    let seed = match seed_index {
        Some(s) => {
            if candidates.binary_search(&s).is_err() {
                return Err(Error::invalid("dfps seed index is not inside the valid radius"));
            }
            s
        }
        None => nearest_to(points, &candidates, &nose_tip),
    };
    // Scores compare λ² · d² which orders identically to λ · d for λ >= 0.
    let weights: Vec<f64> = candidates
        .iter()
        .map(|&j| {
            let lambda = eigenvalues[j].clamp(EIGEN_EPS, 1.0).powf(exponent);
            lambda * lambda
        })
        .collect();
    Ok(farthest_select(points, &candidates, Some(&weights), seed, count))
}

fn nearest_to(points: &[Point3], candidates: &[usize], target: &Point3) -> usize {
    let mut best = candidates[0];
    let mut best_d = f64::INFINITY;
    for &j in candidates {
        let d = dist_sq(&points[j], target);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Greedy max-min selection over `candidates` (ascending indices). `weights`
/// multiply the squared min-distance; `None` means all ones.
fn farthest_select(
    points: &[Point3],
    candidates: &[usize],
    weights: Option<&[f64]>,
    seed: usize,
    count: usize,
) -> Vec<usize> {
    let mut idx: Vec<usize> = candidates.to_vec();
    let mut pts: Vec<Point3> = candidates.iter().map(|&j| points[j]).collect();
    let mut w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; candidates.len()],
    };
    let mut mind = vec![f64::INFINITY; candidates.len()];

    let mut out = Vec::with_capacity(count);
    let mut pos = idx.iter().position(|&j| j == seed).expect("seed among candidates");
    loop {
        let chosen = idx.swap_remove(pos);
        let cp = pts.swap_remove(pos);
        w.swap_remove(pos);
        mind.swap_remove(pos);
        out.push(chosen);
        if out.len() == count {
            break;
        }
        let mut best_score = f64::NEG_INFINITY;
        let mut best_idx = usize::MAX;
        pos = 0;
        for t in 0..idx.len() {
            let d = dist_sq(&pts[t], &cp);
            if d < mind[t] {
                mind[t] = d;
            }
            let score = w[t] * mind[t];
            if score > best_score || (score == best_score && idx[t] < best_idx) {
                best_score = score;
                best_idx = idx[t];
                pos = t;
            }
        }
    }
    out
}

/// One ball-query hit: neighbor index and `neighbor - center` in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallHit {
    pub index: usize,
    pub offset: Point3,
}

/// Up to `k` points within `r` of `center`, nearest first with index
/// tie-break. Short results are padded by repeating the nearest hit; an empty
/// result stays empty.
pub fn ball_query(index: &SpatialIndex, center: &Point3, r: f64, k: usize) -> Vec<BallHit> {
    let hits = index.radius_nearest(center, r, k);
    let mut out: Vec<BallHit> = hits
        .iter()
        .map(|n| BallHit {
            index: n.index,
            offset: sub(index.point(n.index), *center),
        })
        .collect();
    if let Some(&first) = out.first() {
        out.resize(k, first);
    }
    out
}
