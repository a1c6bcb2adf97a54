use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use facecloud::geometry::Point3;
use facecloud::io::{flags_of, import_ply, write_cloud, ImportOptions};

use crate::{validated, Common, Outcome, Usage};

#[derive(Args, Debug)]
pub struct ImportArgs {
    #[command(flatten)]
    pub common: Common,
    /// PLY file (ASCII or binary little-endian).
    pub input: PathBuf,
    /// Output S3PC file.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Coordinate multiplier to reach millimeters (1000 for meters).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Nose tip as `x,y,z` in output millimeters.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub nose_tip: Option<Point3>,
    /// Take the max-z point after centering as the nose tip.
    #[arg(long, conflicts_with = "nose_tip")]
    pub nose_heuristic: bool,
    /// Statistical outlier filter neighborhood size (disabled when absent).
    #[arg(long)]
    pub outlier_k: Option<usize>,
    /// Standard deviations above the mean neighbor distance that are kept.
    #[arg(long, default_value_t = 2.0)]
    pub outlier_std: f64,
    #[arg(long)]
    pub id_label: Option<String>,
    #[arg(long)]
    pub expr_label: Option<String>,
}

fn parse_point(s: &str) -> Result<Point3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok([*x, *y, *z]),
        _ => Err("expected three finite numbers x,y,z".into()),
    }
}

pub fn run(args: ImportArgs) -> Result<Outcome> {
    validated(args.common.load()?)?;
    if !(args.scale > 0.0 && args.scale.is_finite()) {
        return Err(Usage("--scale must be a positive number".into()).into());
    }
    let opts = ImportOptions {
        scale: args.scale,
        nose_tip: args.nose_tip,
        nose_heuristic: args.nose_heuristic,
        outlier_filter: args.outlier_k.map(|k| (k, args.outlier_std)),
    };
    let mut cloud = import_ply(&args.input, &opts).with_context(|| format!("importing {}", args.input.display()))?;
    cloud.id_label = args.id_label;
    cloud.expr_label = args.expr_label;
    write_cloud(&args.output, &cloud)?;
    println!(
        "wrote {} points (flags {}) to {}",
        cloud.len(),
        flags_of(&cloud),
        args.output.display()
    );
    Ok(Outcome::Complete)
}
