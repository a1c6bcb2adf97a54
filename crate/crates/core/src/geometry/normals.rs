//! PCA normal and surface-variation estimation.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cloud::{Point3, PointCloud, EIGEN_EPS};
use super::index::{Neighbor, SpatialIndex};
use crate::error::{Error, Result};

/// How the local neighborhood of each point is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Neighborhood {
    /// The k nearest points, the query point included.
    Knn(usize),
    /// All points within a radius in millimeters.
    Radius(f64),
}

impl Default for Neighborhood {
    fn default() -> Self {
        Neighborhood::Knn(16)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalDiagnostics {
    /// Points whose neighborhood was collinear, coincident, or under three
    /// points; they got normal `+z` and eigenvalue `EIGEN_EPS`.
    pub degenerate: usize,
}

struct LocalFrame {
    normal: Point3,
    variation: f64,
    degenerate: bool,
}

/// Fills `normals` and `eigenvalues` of a copy of `cloud`.
///
/// The normal is the covariance eigenvector of the smallest eigenvalue,
/// flipped into the `+z` half-space; the eigenvalue field is the surface
/// variation `λ_min / (λ1 + λ2 + λ3)` clamped to `[EIGEN_EPS, 1]`.
pub fn estimate_normals(
    cloud: &PointCloud,
    neighborhood: Neighborhood,
) -> Result<(PointCloud, NormalDiagnostics)> {
    if cloud.len() < 3 {
        return Err(Error::invalid(format!(
            "normal estimation needs at least 3 points, got {}",
            cloud.len()
        )));
    }
    match neighborhood {
        Neighborhood::Knn(k) if k < 3 => {
            return Err(Error::invalid("k-nearest neighborhood needs k >= 3"))
        }
        Neighborhood::Radius(r) if !(r > 0.0) => {
            return Err(Error::invalid("neighborhood radius must be positive"))
        }
        _ => {}
    }
    let index = match neighborhood {
        Neighborhood::Radius(r) => SpatialIndex::with_cell_size(&cloud.points, r)?,
        Neighborhood::Knn(_) => SpatialIndex::build(&cloud.points)?,
    };

    let frames: Vec<LocalFrame> = cloud
        .points
        .par_iter()
        .map_init(Vec::new, |buf: &mut Vec<Neighbor>, p| {
            match neighborhood {
                Neighborhood::Knn(k) => *buf = index.k_nearest(p, k),
                Neighborhood::Radius(r) => index.radius_neighbors_into(p, r, buf),
            }
            local_frame(&cloud.points, buf)
        })
        .collect();

    let mut out = cloud.clone();
    let mut diag = NormalDiagnostics::default();
    let mut normals = Vec::with_capacity(frames.len());
    let mut eig = Vec::with_capacity(frames.len());
    for f in frames {
        diag.degenerate += f.degenerate as usize;
        normals.push(f.normal);
        eig.push(f.variation);
    }
    out.normals = Some(normals);
    out.eigenvalues = Some(eig);
    Ok((out, diag))
}

fn local_frame(points: &[Point3], hood: &[Neighbor]) -> LocalFrame {
    let degenerate = LocalFrame {
        normal: [0.0, 0.0, 1.0],
        variation: EIGEN_EPS,
        degenerate: true,
    };
    if hood.len() < 3 {
        return degenerate;
    }
    let n = hood.len() as f64;
    let mut mean = [0.0; 3];
    for nb in hood {
        let p = points[nb.index];
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    mean = mean.map(|m| m / n);
    let mut cov = Matrix3::<f64>::zeros();
    for nb in hood {
        let p = points[nb.index];
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    cov /= n;

    let eigen = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let [i_min, i_mid, i_max] = order;
    let l_min = eigen.eigenvalues[i_min].max(0.0);
    let l_mid = eigen.eigenvalues[i_mid].max(0.0);
    let l_max = eigen.eigenvalues[i_max].max(0.0);
    if l_max <= 0.0 || l_mid <= 1e-12 * l_max {
        return degenerate;
    }
    let v = eigen.eigenvectors.column(i_min);
    let len = v.norm();
    let mut normal = [v[0] / len, v[1] / len, v[2] / len];
    if normal[2] < 0.0 {
        normal = normal.map(|c| -c);
    }
    let variation = (l_min / (l_min + l_mid + l_max)).clamp(EIGEN_EPS, 1.0);
    LocalFrame {
        normal,
        variation,
        degenerate: false,
    }
}
