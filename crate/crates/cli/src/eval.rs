use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use facecloud::io::{load_manifest_clouds, read_cloud, record_path};
use facecloud::metrics::{evaluate, identify, Embedding, EvalReport, Identification};
use facecloud::morph::DatasetManifest;
use facecloud::net::{CheckpointMeta, Embedder};
use facecloud::nn::Checkpoint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{create_dir, validated, write_json, Common, Outcome, Usage};

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Gallery manifest.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Probe manifest.
    #[arg(long)]
    pub probes: PathBuf,
    /// Report directory (default: the configured output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// False accept rate at which the verification rate is reported.
    #[arg(long)]
    pub far: Option<f64>,
    /// Use the max-z nose-tip fallback for clouds without one.
    #[arg(long)]
    pub nose_heuristic: bool,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest listing the clouds to embed.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Individual S3PC files to embed.
    pub inputs: Vec<PathBuf>,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub nose_heuristic: bool,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Gallery embeddings written by `embed`.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Probe embeddings written by `embed`.
    #[arg(long)]
    pub probes: PathBuf,
    /// Ranked candidates kept per probe.
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    /// Output JSON file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileError {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub checkpoint: String,
    pub embeddings: Vec<Embedding>,
    pub errors: Vec<FileError>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    far_target: f64,
    checkpoint: String,
    checkpoint_epoch: u32,
    checkpoint_verification_loss: f64,
    config: &'a CheckpointMeta,
    report: &'a EvalReport,
    errors: &'a [FileError],
}

fn load_embedder(path: &Path, nose_heuristic: bool) -> Result<(Embedder, Checkpoint, CheckpointMeta)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let meta = CheckpointMeta::decode(&ckpt.meta)?;
    let mut embedder = Embedder::from_checkpoint(&ckpt)?;
    embedder.nose_heuristic = nose_heuristic;
    Ok((embedder, ckpt, meta))
}

/// Embeds every record of a manifest, collecting failures instead of
/// stopping at the first one.
fn embed_manifest(embedder: &Embedder, path: &Path) -> Result<(Vec<Embedding>, Vec<FileError>)> {
    let manifest = DatasetManifest::load(path)?;
    let clouds = load_manifest_clouds(path, &manifest);
    let results: Vec<Result<Embedding, FileError>> = clouds
        .into_par_iter()
        .zip(manifest.records.par_iter())
        .map(|(cloud, rec)| {
            let source = record_path(path, rec).display().to_string();
            let fail = |e: facecloud::Error| FileError {
                path: source.clone(),
                message: e.to_string(),
            };
            let cloud = cloud.map_err(fail)?;
            let mut e = embedder.embed(&cloud).and_then(Embedding::new).map_err(fail)?;
            e.id_label = Some(rec.id_label.clone());
            e.expr_label = Some(rec.expr_label.clone());
            e.source = Some(source);
            Ok(e)
        })
        .collect();
    Ok(split(results))
}

fn split(results: Vec<Result<Embedding, FileError>>) -> (Vec<Embedding>, Vec<FileError>) {
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(e) => ok.push(e),
            Err(e) => errors.push(e),
        }
    }
    (ok, errors)
}

fn rank_table(ident: &Identification) -> String {
    let mut text = String::from("probe,source,id_label,rank1_id,rank1_distance,true_rank\n");
    for r in &ident.rankings {
        let top = r.ranked.first();
        let true_rank = r
            .id_label
            .as_ref()
            .and_then(|l| r.ranked.iter().position(|m| &m.id_label == l))
            .map_or(String::new(), |p| (p + 1).to_string());
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.probe,
            r.source.as_deref().unwrap_or(""),
            r.id_label.as_deref().unwrap_or(""),
            top.map_or("", |m| m.id_label.as_str()),
            top.map_or(String::new(), |m| m.distance.to_string()),
            true_rank
        ));
    }
    text
}

pub fn run_eval(args: EvalArgs) -> Result<Outcome> {
    let mut cfg = args.common.load()?;
    if let Some(f) = args.far {
        cfg.eval.far_target = f;
    }
    let cfg = validated(cfg)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output.clone());
    let (embedder, ckpt, meta) = load_embedder(&args.checkpoint, cfg.eval.nose_heuristic || args.nose_heuristic)?;

    let (gallery, mut errors) = embed_manifest(&embedder, &args.gallery)?;
    let (probes, probe_errors) = embed_manifest(&embedder, &args.probes)?;
    errors.extend(probe_errors);
    let (mut report, ident) = evaluate(&gallery, &probes, cfg.eval.far_target)?;
    if embedder.untrained_normalization() {
        report
            .diagnostics
            .warnings
            .push("checkpoint batch-norm statistics were never updated".into());
    }

    create_dir(&out)?;
    write_json(
        &out.join("report.json"),
        &ReportFile {
            far_target: cfg.eval.far_target,
            checkpoint: args.checkpoint.display().to_string(),
            checkpoint_epoch: ckpt.epoch,
            checkpoint_verification_loss: ckpt.verification_loss,
            config: &meta,
            report: &report,
            errors: &errors,
        },
    )?;
    std::fs::write(
        out.join("report.csv"),
        format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()),
    )?;
    std::fs::write(out.join("ranks.csv"), rank_table(&ident))?;
    println!(
        "rr1 {:.4}  vr@far={} {:.4}  auc {:.4}  loss {:.6}  ({} gallery, {} probes)",
        report.rr1,
        report.far_target,
        report.vr_at_far,
        report.auc,
        report.verification_loss,
        report.counts.gallery,
        report.counts.probes
    );
    for w in &report.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    if errors.is_empty() {
        Ok(Outcome::Complete)
    } else {
        for e in &errors {
            eprintln!("skipped {}: {}", e.path, e.message);
        }
        Ok(Outcome::Partial)
    }
}

pub fn run_embed(args: EmbedArgs) -> Result<Outcome> {
    let cfg = validated(args.common.load()?)?;
    if args.manifest.is_none() && args.inputs.is_empty() {
        return Err(Usage("nothing to embed: give --manifest or input files".into()).into());
    }
    let (embedder, _, _) = load_embedder(&args.checkpoint, cfg.eval.nose_heuristic || args.nose_heuristic)?;
    let (mut embeddings, mut errors) = match &args.manifest {
        Some(m) => embed_manifest(&embedder, m)?,
        None => (Vec::new(), Vec::new()),
    };
    let results: Vec<Result<Embedding, FileError>> = args
        .inputs
        .par_iter()
        .map(|p| {
            let source = p.display().to_string();
            let fail = |e: facecloud::Error| FileError {
                path: source.clone(),
                message: e.to_string(),
            };
            let cloud = read_cloud(p).map_err(fail)?;
            let mut e = embedder.embed(&cloud).and_then(Embedding::new).map_err(fail)?;
            e.id_label = cloud.id_label;
            e.expr_label = cloud.expr_label;
            e.source = Some(source);
            Ok(e)
        })
        .collect();
    let (more, more_errors) = split(results);
    embeddings.extend(more);
    errors.extend(more_errors);
    let n = embeddings.len();
    let file = EmbeddingFile {
        checkpoint: args.checkpoint.display().to_string(),
        embeddings,
        errors,
    };
    write_json(&args.out, &file)?;
    println!("embedded {n} clouds into {}", args.out.display());
    if file.errors.is_empty() {
        Ok(Outcome::Complete)
    } else {
        for e in &file.errors {
            eprintln!("skipped {}: {}", e.path, e.message);
        }
        Ok(Outcome::Partial)
    }
}

fn read_embeddings(path: &Path) -> Result<EmbeddingFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn run_match(args: MatchArgs) -> Result<Outcome> {
    validated(args.common.load()?)?;
    let gallery = read_embeddings(&args.gallery)?;
    let probes = read_embeddings(&args.probes)?;
    let mut ident = identify(&gallery.embeddings, &probes.embeddings).map_err(|e| Usage(e.to_string()))?;
    for r in &mut ident.rankings {
        r.ranked.truncate(args.top);
        let best = r.ranked.first().map_or(String::from("-"), |m| format!("{} ({:.6})", m.id_label, m.distance));
        println!("{} -> {}", r.source.as_deref().unwrap_or("?"), best);
    }
    let labeled = ident.rankings.len() - ident.unlabeled_probes;
    if labeled > 0 {
        println!("rank-1 rate {:.4} over {labeled} labeled probes", ident.rr1);
    }
    if let Some(out) = &args.out {
        write_json(out, &ident)?;
    }
    Ok(Outcome::Complete)
}
