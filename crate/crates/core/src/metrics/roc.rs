use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Distances `<= threshold` are accepted.
    pub threshold: f64,
    pub far: f64,
    pub vr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// Starts at `(0, 0)` (threshold `-inf`), one point per distinct distance.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub far_target: f64,
    pub vr_at_far: f64,
}

/// Threshold sweep over every observed distance.
///
/// AUC is the trapezoidal area under `(FAR, VR)`, which equals the
/// probability that a genuine distance is below an impostor distance with
/// ties counted half. `vr_at_far` interpolates linearly between the ROC
/// points bracketing `far_target`; when the target lies below the smallest
/// positive FAR it falls back to the VR reached at FAR = 0.
pub fn roc_curve(genuine: &[f64], impostor: &[f64], far_target: f64) -> Result<Roc> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::invalid("ROC needs genuine and impostor distances"));
    }
    if genuine.iter().chain(impostor).any(|d| !d.is_finite()) {
        return Err(Error::invalid("non-finite distance"));
    }
    if !(0.0..=1.0).contains(&far_target) {
        return Err(Error::invalid("FAR target must lie in [0, 1]"));
    }
    let mut gen = genuine.to_vec();
    let mut imp = impostor.to_vec();
    gen.sort_by(f64::total_cmp);
    imp.sort_by(f64::total_cmp);
    let (ng, ni) = (gen.len() as f64, imp.len() as f64);

    let mut points = vec![RocPoint {
        threshold: f64::NEG_INFINITY,
        far: 0.0,
        vr: 0.0,
    }];
    let (mut gi, mut ii) = (0usize, 0usize);
    while gi < gen.len() || ii < imp.len() {
        let t = match (gen.get(gi), imp.get(ii)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while gi < gen.len() && gen[gi] <= t {
            gi += 1;
        }
        while ii < imp.len() && imp[ii] <= t {
            ii += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: ii as f64 / ni,
            vr: gi as f64 / ng,
        });
    }

    let auc = points
        .windows(2)
        .map(|w| (w[1].far - w[0].far) * (w[0].vr + w[1].vr) * 0.5)
        .sum();
    let vr_at_far = vr_at(&points, far_target);
    Ok(Roc {
        points,
        auc,
        far_target,
        vr_at_far,
    })
}

fn vr_at(points: &[RocPoint], target: f64) -> f64 {
    let last = points.iter().rposition(|p| p.far <= target).unwrap_or(0);
    let a = points[last];
    if a.far == target || last + 1 == points.len() {
        return a.vr;
    }
    let b = points[last + 1];
    if a.far == 0.0 {
        return a.vr;
    }
    a.vr + (b.vr - a.vr) * (target - a.far) / (b.far - a.far)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let r = roc_curve(&[0.1, 0.2, 0.3], &[0.5, 0.6], 1e-3).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.vr_at_far, 1.0);
        assert!(r.points.windows(2).all(|w| w[0].far <= w[1].far));
    }

    #[test]
    fn hand_interleaved_case() {
        // genuine 1, 3, 5; impostor 2, 4, 6: pairs g<i = 3 + 2 + 1 = 6 of 9
        let r = roc_curve(&[1.0, 3.0, 5.0], &[2.0, 4.0, 6.0], 0.5).unwrap();
        assert!((r.auc - 6.0 / 9.0).abs() < 1e-15);
        // bracketing points (1/3, 2/3) and (2/3, 2/3)
        assert!((r.vr_at_far - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ties_count_half() {
        let r = roc_curve(&[1.0], &[1.0], 0.5).unwrap();
        assert!((r.auc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interpolation_between_points() {
        // impostors at 1..=4 (FAR steps of 0.25), genuine below and between
        // genuine tied with impostors move the curve diagonally
        let r = roc_curve(&[0.5, 2.0, 2.0, 3.5], &[1.0, 2.0, 3.0, 4.0], 0.375).unwrap();
        // (0.25, 0.25) -> (0.5, 0.75) at 0.375 gives 0.5
        assert!((r.vr_at_far - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_lists_rejected() {
        assert!(roc_curve(&[], &[1.0], 1e-3).is_err());
        assert!(roc_curve(&[1.0], &[], 1e-3).is_err());
    }
}
