//! Straight-line reference kernels without acceleration structures, used as
//! timing baselines.

use super::cloud::{dist_sq, sub, Point3, EIGEN_EPS};
use super::sampling::BallHit;

/// FPS that recomputes every candidate's distance to the whole selected set
/// at each step.
pub fn fps_bruteforce(points: &[Point3], count: usize, seed_index: usize) -> Vec<usize> {
    let mut selected = vec![seed_index];
    let mut taken = vec![false; points.len()];
    taken[seed_index] = true;
    while selected.len() < count.min(points.len()) {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (j, p) in points.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let d = selected
                .iter()
                .map(|&s| dist_sq(p, &points[s]))
                .fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, j);
            }
        }
        taken[best.1] = true;
        selected.push(best.1);
    }
    selected
}

/// DFPS by exhaustive recomputation; same selection rule as the library.
pub fn dfps_bruteforce(
    points: &[Point3],
    eigenvalues: &[f64],
    nose_tip: Point3,
    count: usize,
    radius: f64,
    exponent: f64,
) -> Option<Vec<usize>> {
    let inside: Vec<usize> = (0..points.len())
        .filter(|&j| dist_sq(&points[j], &nose_tip) <= radius * radius)
        .collect();
    if inside.len() < count || count == 0 {
        return None;
    }
    let first = *inside
        .iter()
        .min_by(|&&a, &&b| dist_sq(&points[a], &nose_tip).total_cmp(&dist_sq(&points[b], &nose_tip)))?;
    let mut selected = vec![first];
    while selected.len() < count {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for &j in &inside {
            if selected.contains(&j) {
                continue;
            }
            let d = selected
                .iter()
                .map(|&s| dist_sq(&points[j], &points[s]))
                .fold(f64::INFINITY, f64::min);
            let lambda = eigenvalues[j].clamp(EIGEN_EPS, 1.0).powf(exponent);
            let score = lambda * lambda * d;
            if score > best.0 {
                best = (score, j);
            }
        }
        selected.push(best.1);
    }
    Some(selected)
}

/// Ball query by a linear scan and a full sort.
pub fn ball_query_bruteforce(points: &[Point3], center: &Point3, r: f64, k: usize) -> Vec<BallHit> {
    let mut hits: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (dist_sq(p, center), i))
        .filter(|(d, _)| *d <= r * r)
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.truncate(k);
    let mut out: Vec<BallHit> = hits
        .iter()
        .map(|&(_, i)| BallHit {
            index: i,
            offset: sub(points[i], *center),
        })
        .collect();
    if let Some(&first) = out.first() {
        out.resize(k, first);
    }
    out
}
