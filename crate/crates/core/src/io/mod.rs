//! File formats and run configuration.

mod config;
mod ply;
mod s3pc;
mod store;

pub use config::{DatasetConfig, EvalConfig, NetworkPreset, RunConfig};
pub use ply::{import_ply, import_ply_bytes, parse_ply, remove_outliers, ImportOptions};
pub use s3pc::{
    flags_of, from_bytes, quantize, read_cloud, to_bytes, write_cloud, HAS_EIGENVALUES, HAS_LABELS,
    HAS_NORMALS, HAS_NOSE_TIP,
};
pub use store::{load_manifest_clouds, record_path, subset, DirSink};
