use crate::error::{Error, Result};
use crate::geometry::{ball_query, dfps_resolved, Point3, PointCloud, SpatialIndex};

use super::spec::{NetworkSpec, ATTRIBUTE_CHANNELS};

/// Sampling and grouping for one layer, expressed against the previous
/// layer's point set.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    /// Selected centroids, `NB` indices.
    pub centroids: Vec<u32>,
    /// Ball-query neighbors, `NB × k` indices.
    pub neighbors: Vec<u32>,
    /// `neighbor − centroid` in millimeters, `NB × k × 3`.
    pub offsets: Vec<f64>,
    /// Centroids whose ball held fewer than `k` points.
    pub padded: usize,
}

/// Everything the forward pass needs from the geometry of one cloud.
/// Parameter independent, so a plan can be reused across perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudPlan {
    pub layers: Vec<LayerPlan>,
    /// Normal and eigenvalue of every first-layer neighbor, `NB × k × 4`.
    pub attributes: Vec<f64>,
    pub radius: f64,
    pub exponent: f64,
    pub input_points: usize,
}

impl CloudPlan {
    pub fn padded(&self) -> usize {
        self.layers.iter().map(|l| l.padded).sum()
    }
}

/// Runs DFPS and ball query for every layer. The same `(radius, exponent)`
/// applies to all layers; eigenvalues are carried with the selected points.
pub fn plan_cloud(cloud: &PointCloud, spec: &NetworkSpec, radius: f64, exponent: f64) -> Result<CloudPlan> {
    let normals = cloud
        .normals
        .as_deref()
        .ok_or_else(|| Error::Preprocess("cloud has no normals".into()))?;
    let eig = cloud
        .eigenvalues
        .as_deref()
        .ok_or_else(|| Error::Preprocess("cloud has no eigenvalues".into()))?;
    let nose = cloud
        .nose_tip
        .ok_or_else(|| Error::Preprocess("cloud has no nose tip".into()))?;

    let mut pts: Vec<Point3> = cloud.points.clone();
    let mut eig: Vec<f64> = eig.to_vec();
    let mut layers = Vec::with_capacity(spec.layers.len());
    let mut attributes = Vec::new();
    for (li, l) in spec.layers.iter().enumerate() {
        if pts.len() < l.nb {
            return Err(Error::InsufficientPoints {
                needed: l.nb,
                available: pts.len(),
            });
        }
        let centroids = dfps_resolved(&pts, &eig, nose, l.nb, radius, exponent, None)?;
        let index = SpatialIndex::with_cell_size(&pts, l.radius / 2.0)?;
        let mut neighbors = Vec::with_capacity(l.nb * l.k);
        let mut offsets = Vec::with_capacity(l.nb * l.k * 3);
        let mut padded = 0;
        for &c in &centroids {
            let hits = ball_query(&index, &pts[c], l.radius, l.k);
            if l.k > 1 && hits[l.k - 1].index == hits[0].index {
                padded += 1;
            }
            for h in &hits {
                neighbors.push(h.index as u32);
                offsets.extend_from_slice(&h.offset);
                if li == 0 {
                    attributes.extend_from_slice(&normals[h.index]);
                    attributes.push(eig[h.index]);
                }
            }
        }
        debug_assert!(li > 0 || attributes.len() == l.nb * l.k * ATTRIBUTE_CHANNELS);
        pts = centroids.iter().map(|&c| pts[c]).collect();
        eig = centroids.iter().map(|&c| eig[c]).collect();
        layers.push(LayerPlan {
            centroids: centroids.into_iter().map(|c| c as u32).collect(),
            neighbors,
            offsets,
            padded,
        });
    }
    Ok(CloudPlan {
        layers,
        attributes,
        radius,
        exponent,
        input_points: cloud.len(),
    })
}
