//! Dataset directories: one `S3PC` file per face next to a JSON manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::s3pc::{read_cloud, write_cloud};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::morph::{DatasetManifest, FaceRecord, FaceSink};

/// Writes `<id>_<expr>.s3pc` files into a directory.
#[derive(Debug)]
pub struct DirSink {
    dir: PathBuf,
}

impl DirSink {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }
}

impl FaceSink for DirSink {
    fn write(&mut self, cloud: &PointCloud) -> Result<String> {
        let name = format!(
            "{}_{}.s3pc",
            cloud.id_label.as_deref().unwrap_or("unlabeled"),
            cloud.expr_label.as_deref().unwrap_or("x")
        );
        write_cloud(self.dir.join(&name), cloud)?;
        Ok(name)
    }
}

/// A record's file path resolved against its manifest.
pub fn record_path(manifest_path: &Path, record: &FaceRecord) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&record.path)
}

/// Reads every cloud of a manifest in parallel. Each entry keeps its own
/// result so callers can skip unreadable files. Labels come from the
/// manifest.
pub fn load_manifest_clouds(manifest_path: &Path, manifest: &DatasetManifest) -> Vec<Result<PointCloud>> {
    manifest
        .records
        .par_iter()
        .map(|r| {
            let mut c = read_cloud(record_path(manifest_path, r))?;
            c.id_label = Some(r.id_label.clone());
            c.expr_label = Some(r.expr_label.clone());
            Ok(c)
        })
        .collect()
}

/// A manifest restricted to some of its records.
pub fn subset(manifest: &DatasetManifest, keep: impl Fn(usize, &FaceRecord) -> bool) -> DatasetManifest {
    DatasetManifest {
        records: manifest
            .records
            .iter()
            .enumerate()
            .filter(|(i, r)| keep(*i, r))
            .map(|(_, r)| r.clone())
            .collect(),
        ..manifest.clone()
    }
}
