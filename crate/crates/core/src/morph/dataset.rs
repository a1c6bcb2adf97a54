//! Labeled synthetic dataset generation.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{draw_alpha, generate_identity_face, GenParams};
use super::model::MorphableModel;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_identities: usize,
    pub n_expressions: usize,
    /// Expression 0 of every identity is neutral (`β = 0`).
    pub neutral_first: bool,
    /// Added to the identity index when forming labels, so separately
    /// generated sets can carry disjoint labels.
    pub id_offset: usize,
}

impl DatasetSpec {
    pub fn new(n_identities: usize, n_expressions: usize) -> Self {
        Self {
            n_identities,
            n_expressions,
            neutral_first: false,
            id_offset: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_identities == 0 || self.n_expressions == 0 {
            return Err(Error::invalid("identity and expression counts must be at least 1"));
        }
        Ok(())
    }

    pub fn id_label(&self, identity: usize) -> String {
        id_label(self.id_offset + identity)
    }

    pub fn expr_label(&self, expression: usize) -> String {
        expr_label(expression)
    }

    pub fn len(&self) -> usize {
        self.n_identities * self.n_expressions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn id_label(identity: usize) -> String {
    format!("id{identity:05}")
}

pub fn expr_label(expression: usize) -> String {
    format!("e{expression:03}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceRecord {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub id_label: String,
    pub expr_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub spec: DatasetSpec,
    pub params: GenParams,
    pub records: Vec<FaceRecord>,
}

/// Destination of generated faces. Called sequentially in (identity,
/// expression) order; returns the stored path.
pub trait FaceSink {
    fn write(&mut self, cloud: &PointCloud) -> Result<String>;
}

/// Keeps every face in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub clouds: Vec<PointCloud>,
}

impl FaceSink for MemorySink {
    fn write(&mut self, cloud: &PointCloud) -> Result<String> {
        self.clouds.push(cloud.clone());
        Ok(format!("mem:{}", self.clouds.len() - 1))
    }
}

/// Identities generated per parallel wave; bounds memory at full scale.
const WAVE: usize = 16;

/// Generates `n_identities × n_expressions` faces. Identity `i` draws its
/// shape coefficients from stream `(seed, 0, i)` and face `(i, j)` draws
/// everything else from stream `(seed, 1, i, j)`, so output does not depend on
/// the thread count.
pub fn generate_dataset(
    model: &MorphableModel,
    spec: &DatasetSpec,
    params: &GenParams,
    seed: u64,
    sink: &mut dyn FaceSink,
) -> Result<DatasetManifest> {
    spec.validate()?;
    params.validate()?;
    model.validate()?;
    let mut records = Vec::with_capacity(spec.len());
    let mut start = 0;
    while start < spec.n_identities {
        let end = (start + WAVE).min(spec.n_identities);
        let jobs: Vec<(usize, usize)> = (start..end)
            .flat_map(|i| (0..spec.n_expressions).map(move |j| (i, j)))
            .collect();
        let alphas: Vec<Vec<f64>> = (start..end)
            .map(|i| draw_alpha(model, params, &mut rng::stream(seed, &[0, i as u64])))
            .collect();
        let faces: Vec<Result<PointCloud>> = jobs
            .par_iter()
            .map(|&(i, j)| {
                let mut r = rng::stream(seed, &[1, i as u64, j as u64]);
                let neutral = spec.neutral_first && j == 0;
                let mut c = generate_identity_face(model, params, &alphas[i - start], neutral, &mut r)?;
                c.id_label = Some(spec.id_label(i));
                c.expr_label = Some(spec.expr_label(j));
                Ok(c)
            })
            .collect();
        for face in faces {
            let face = face?;
            let path = sink.write(&face)?;
            records.push(FaceRecord {
                path,
                id_label: face.id_label.clone().unwrap_or_default(),
                expr_label: face.expr_label.clone().unwrap_or_default(),
            });
        }
        start = end;
    }
    Ok(DatasetManifest {
        seed,
        spec: spec.clone(),
        params: params.clone(),
        records,
    })
}

impl DatasetManifest {
    pub fn save(&self, path: impl Into<PathBuf>) -> Result<()> {
        let path = path.into();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serde {
            path: path.clone(),
            message: e.to_string(),
        })?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serde {
            path,
            message: e.to_string(),
        })
    }

    pub fn identities(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.id_label.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}
