use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, ValueEnum};
use facecloud::geometry::reference::{ball_query_bruteforce, dfps_bruteforce, fps_bruteforce};
use facecloud::geometry::{ball_query, dfps_resolved, estimate_normals, fps, Neighborhood, PointCloud, SpatialIndex};
use facecloud::morph::{make_toy_model, synthesize};
use facecloud::net::{init_params, Embedder};

use crate::{parse_preset, validated, Common, Outcome, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kernel {
    Fps,
    FpsBrute,
    Dfps,
    DfpsBrute,
    BallQuery,
    BallQueryBrute,
    Normals,
    Forward,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Kernels to time (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Kernel::Fps, Kernel::BallQuery])]
    pub kernel: Vec<Kernel>,
    /// Cloud size.
    #[arg(long, default_value_t = 24576)]
    pub n: usize,
    /// Sampled points (fps, dfps) or query centers (ball query).
    #[arg(long, default_value_t = 1024)]
    pub nb: usize,
    /// Neighbors per ball query or normal estimate.
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    /// Ball query radius in millimeters.
    #[arg(long, default_value_t = 8.0)]
    pub radius: f64,
    /// DFPS radius around the nose tip.
    #[arg(long, default_value_t = 65.0)]
    pub dfps_radius: f64,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub dfps_exponent: f64,
    /// Network preset for the forward pass: full or micro.
    #[arg(long, default_value = "micro")]
    pub preset: String,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Also write the CSV table to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const CSV_HEADER: &str = "kernel,n,nb,k,radius,reps,median_ms,mean_ms,std_ms,min_ms,max_ms";

struct Timing {
    median: f64,
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

fn time(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<Timing> {
    f()?;
    let mut ms = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(f64::total_cmp);
    let n = ms.len() as f64;
    let mean = ms.iter().sum::<f64>() / n;
    let var = ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mid = ms.len() / 2;
    let median = if ms.len() % 2 == 1 { ms[mid] } else { 0.5 * (ms[mid - 1] + ms[mid]) };
    Ok(Timing {
        median,
        mean,
        std: var.sqrt(),
        min: ms[0],
        max: ms[ms.len() - 1],
    })
}

/// Mean toy face with `n` vertices, normals and eigenvalues filled in.
fn face(n: usize, k: usize) -> Result<PointCloud> {
    let model = make_toy_model(n, 1, 1, 1)?;
    let cloud = synthesize(&model, &[0.0], &[0.0])?;
    Ok(estimate_normals(&cloud, Neighborhood::Knn(k.max(3)))?.0)
}

pub fn run(args: BenchArgs) -> Result<Outcome> {
    validated(args.common.load()?)?;
    if args.reps < 10 {
        return Err(Usage("--reps must be at least 10".into()).into());
    }
    if args.n < 100 || args.nb == 0 || args.nb > args.n || args.k == 0 {
        return Err(Usage("need n >= 100, 1 <= nb <= n and k >= 1".into()).into());
    }
    let cloud = face(args.n, args.k)?;
    let pts = &cloud.points;
    let eig = cloud.eigenvalues.as_deref().expect("normals estimated");
    let nose = cloud.nose_tip.expect("toy faces carry a nose tip");
    let stride = args.n / args.nb;
    let centers: Vec<_> = (0..args.nb).map(|i| pts[i * stride]).collect();

    let mut table = String::from(CSV_HEADER);
    table.push('\n');
    for &kernel in &args.kernel {
        let t = match kernel {
            Kernel::Fps => time(args.reps, || {
                fps(pts, args.nb, 0)?;
                Ok(())
            })?,
            Kernel::FpsBrute => time(args.reps, || {
                fps_bruteforce(pts, args.nb, 0);
                Ok(())
            })?,
            Kernel::Dfps => time(args.reps, || {
                dfps_resolved(pts, eig, nose, args.nb, args.dfps_radius, args.dfps_exponent, None)?;
                Ok(())
            })?,
            Kernel::DfpsBrute => time(args.reps, || {
                dfps_bruteforce(pts, eig, nose, args.nb, args.dfps_radius, args.dfps_exponent)
                    .ok_or_else(|| Usage("too few points inside the DFPS radius".into()))?;
                Ok(())
            })?,
            Kernel::BallQuery => time(args.reps, || {
                let index = SpatialIndex::with_cell_size(pts, args.radius / 2.0)?;
                for c in &centers {
                    ball_query(&index, c, args.radius, args.k);
                }
                Ok(())
            })?,
            Kernel::BallQueryBrute => time(args.reps, || {
                for c in &centers {
                    ball_query_bruteforce(pts, c, args.radius, args.k);
                }
                Ok(())
            })?,
            Kernel::Normals => time(args.reps, || {
                estimate_normals(&cloud, Neighborhood::Knn(args.k.max(3)))?;
                Ok(())
            })?,
            Kernel::Forward => {
                let spec = parse_preset(&args.preset)?.spec().with_classes(1);
                let embedder = Embedder::new(spec.clone(), init_params(&spec, 1)?);
                let plan = embedder.plan(&cloud)?;
                time(args.reps, || {
                    embedder.embed_plan(&plan)?;
                    Ok(())
                })?
            }
        };
        let name = kernel.to_possible_value().expect("no skipped variants").get_name().to_string();
        table.push_str(&format!(
            "{name},{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            args.n, args.nb, args.k, args.radius, args.reps, t.median, t.mean, t.std, t.min, t.max
        ));
    }
    print!("{table}");
    if let Some(p) = &args.out {
        std::fs::write(p, &table)?;
    }
    Ok(Outcome::Complete)
}
