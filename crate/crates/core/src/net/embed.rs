use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{estimate_normals, Neighborhood, NormalDiagnostics, Point3, PointCloud};
use crate::nn::{Checkpoint, Graph, Mode, ParamStore};
use crate::rng::stream;

use super::meta::CheckpointMeta;
use super::model::{forward, BN_UPDATES};
use super::plan::{plan_cloud, CloudPlan};
use super::spec::NetworkSpec;

/// The point with the largest `z` after centering.
pub fn nose_tip_heuristic(cloud: &PointCloud) -> Result<Point3> {
    if cloud.is_empty() {
        return Err(Error::Preprocess("empty cloud".into()));
    }
    let c = cloud.centroid();
    let best = cloud
        .points
        .iter()
        .max_by(|a, b| (a[2] - c[2]).total_cmp(&(b[2] - c[2])))
        .expect("nonempty");
    Ok(*best)
}

/// Fills in whatever the network needs: normals and eigenvalues (estimated
/// from `normal_k` neighbors) and, if allowed, a heuristic nose tip.
pub fn prepare_cloud(
    cloud: &PointCloud,
    normal_k: usize,
    nose_heuristic: bool,
) -> Result<(PointCloud, NormalDiagnostics)> {
    let mut out = if cloud.normals.is_some() && cloud.eigenvalues.is_some() {
        (cloud.clone(), NormalDiagnostics::default())
    } else {
        estimate_normals(cloud, Neighborhood::Knn(normal_k))?
    };
    if out.0.nose_tip.is_none() {
        if !nose_heuristic {
            return Err(Error::Preprocess(
                "cloud has no nose tip and the heuristic is disabled".into(),
            ));
        }
        out.0.nose_tip = Some(nose_tip_heuristic(cloud)?);
    }
    Ok(out)
}

/// Eval-mode inference against a fixed parameter set. Safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct Embedder {
    pub spec: NetworkSpec,
    pub store: ParamStore,
    pub nose_heuristic: bool,
}

impl Embedder {
    pub fn new(spec: NetworkSpec, store: ParamStore) -> Self {
        Self {
            spec,
            store,
            nose_heuristic: false,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = CheckpointMeta::decode(&ckpt.meta)?;
        Ok(Self::new(meta.network, ckpt.store.clone()))
    }

    /// True when batch-norm running statistics were never updated.
    pub fn untrained_normalization(&self) -> bool {
        self.store
            .buffer(BN_UPDATES)
            .map_or(true, |t| t.data()[0] == 0.0)
    }

    /// Deterministic eval sampling of a prepared cloud over all its points.
    pub fn plan(&self, cloud: &PointCloud) -> Result<CloudPlan> {
        plan_cloud(cloud, &self.spec, self.spec.eval_radius, self.spec.eval_exponent)
    }

    pub fn embed_plan(&self, plan: &CloudPlan) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        // dropout is inactive in eval mode; the stream is never consumed
        let mut rng = stream(0, &[]);
        let out = forward(
            &mut g,
            &self.spec,
            &self.store,
            std::slice::from_ref(plan),
            Mode::Eval,
            &mut rng,
        )?;
        let e = g.value(out.embedding).data().to_vec();
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics("non-finite embedding".into()));
        }
        Ok(e)
    }

    pub fn embed(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        let (prepared, _) = prepare_cloud(cloud, self.spec.normal_k, self.nose_heuristic)?;
        self.embed_plan(&self.plan(&prepared)?)
    }

    /// Parallel over clouds; results keep input order.
    pub fn embed_all(&self, clouds: &[PointCloud]) -> Vec<Result<Vec<f64>>> {
        clouds.par_iter().map(|c| self.embed(c)).collect()
    }
}
