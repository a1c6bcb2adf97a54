use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Lower clamp for the surface-variation field.
pub const EIGEN_EPS: f64 = 1e-6;

/// A face scan as an unordered set of millimeter coordinates with optional
/// per-point attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Point3>>,
    /// Surface variation `λ_min / Σλ`, clamped to `[EIGEN_EPS, 1]`.
    pub eigenvalues: Option<Vec<f64>>,
    pub nose_tip: Option<Point3>,
    pub id_label: Option<String>,
    pub expr_label: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            normals: None,
            eigenvalues: None,
            nose_tip: None,
            id_label: None,
            expr_label: None,
        }
    }

    pub fn with_nose_tip(mut self, nose_tip: Point3) -> Self {
        self.nose_tip = Some(nose_tip);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the structural invariants: nonempty, finite coordinates, unit
    /// normals, eigenvalues in `[0, 1]`, attribute lengths matching.
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid("point cloud is empty"));
        }
        if let Some(i) = self.points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(Error::invalid("normal count differs from point count"));
            }
            for (i, n) in normals.iter().enumerate() {
                if (norm(n) - 1.0).abs() > 1e-6 {
                    return Err(Error::invalid(format!("normal {i} is not unit length")));
                }
            }
        }
        if let Some(eig) = &self.eigenvalues {
            if eig.len() != self.points.len() {
                return Err(Error::invalid("eigenvalue count differs from point count"));
            }
            if let Some(i) = eig.iter().position(|e| !(0.0..=1.0).contains(e)) {
                return Err(Error::invalid(format!("eigenvalue {i} outside [0, 1]")));
            }
        }
        if let Some(nt) = &self.nose_tip {
            if !nt.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid("nose tip is not finite"));
            }
        }
        Ok(())
    }

    /// New cloud made of the points at `indices` (attributes carried along,
    /// labels and nose tip kept).
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            eigenvalues: self
                .eigenvalues
                .as_ref()
                .map(|e| indices.iter().map(|&i| e[i]).collect()),
            nose_tip: self.nose_tip,
            id_label: self.id_label.clone(),
            expr_label: self.expr_label.clone(),
        }
    }

    /// Rigid translation of points and nose tip.
    pub fn translate(&mut self, t: Point3) {
        for p in &mut self.points {
            *p = add(*p, t);
        }
        if let Some(nt) = &mut self.nose_tip {
            *nt = add(*nt, t);
        }
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.points.len().max(1) as f64;
        let s = self.points.iter().fold([0.0; 3], |acc, p| add(acc, *p));
        [s[0] / n, s[1] / n, s[2] / n]
    }
}

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Point3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist_sq(a: &Point3, b: &Point3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_rejects_bad_clouds() {
        assert!(PointCloud::new(vec![]).validate().is_err());
        assert!(PointCloud::new(vec![[f64::NAN, 0.0, 0.0]]).validate().is_err());

        let mut c = PointCloud::new(vec![[0.0; 3]]);
        c.normals = Some(vec![[0.0, 0.0, 2.0]]);
        assert!(c.validate().is_err());
        c.normals = Some(vec![[0.0, 0.0, 1.0]]);
        c.eigenvalues = Some(vec![1.5]);
        assert!(c.validate().is_err());
        c.eigenvalues = Some(vec![0.5]);
        c.validate().unwrap();
    }

    #[test]
    fn select_carries_attributes() {
        let mut c = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        c.eigenvalues = Some(vec![0.1, 0.2, 0.3]);
        let s = c.select(&[2, 0]);
        assert_eq!(s.points, vec![[2.0, 0.0, 0.0], [0.0; 3]]);
        assert_eq!(s.eigenvalues, Some(vec![0.3, 0.1]));
    }
}
