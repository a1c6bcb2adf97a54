use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use facecloud::geometry::PointCloud;
use facecloud::io::load_manifest_clouds;
use facecloud::morph::DatasetManifest;
use facecloud::net::{
    fit, prepare_cloud, BestState, CheckpointMeta, EpochRecord, FitObserver, FitState, TrainSample,
    VerificationSet,
};
use facecloud::nn::Checkpoint;
use rayon::prelude::*;
use serde::Serialize;

use crate::{create_dir, parse_preset, validated, write_json, Common, Outcome, Usage};

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training set manifest.
    #[arg(long)]
    pub train: PathBuf,
    /// Verification set manifest; the first face of each identity is its gallery entry.
    #[arg(long)]
    pub verification: PathBuf,
    /// Output directory (default: the configured output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Network preset: full or micro.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Continue from `last.s3ck` in the output directory.
    #[arg(long)]
    pub resume: bool,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const LAST_FILE: &str = "last.s3ck";
pub const BEST_FILE: &str = "best.s3ck";

fn load_prepared(path: &Path, normal_k: usize, nose_heuristic: bool) -> Result<Vec<PointCloud>> {
    let manifest = DatasetManifest::load(path)?;
    load_manifest_clouds(path, &manifest)
        .into_par_iter()
        .zip(manifest.records.par_iter())
        .map(|(c, r)| {
            let c = c.with_context(|| format!("reading {}", r.path))?;
            let (p, _) = prepare_cloud(&c, normal_k, nose_heuristic).with_context(|| format!("preparing {}", r.path))?;
            Ok(p)
        })
        .collect()
}

fn labels(clouds: &[PointCloud]) -> BTreeSet<String> {
    clouds.iter().filter_map(|c| c.id_label.clone()).collect()
}

struct Writer<'a> {
    dir: &'a Path,
    meta: String,
}

impl Writer<'_> {
    fn metrics(&self, history: &[EpochRecord]) -> std::io::Result<()> {
        let mut text = String::from(EpochRecord::CSV_HEADER);
        text.push('\n');
        for r in history {
            text.push_str(&r.csv_row());
            text.push('\n');
        }
        std::fs::write(self.dir.join(METRICS_FILE), text)
    }
}

impl FitObserver for Writer<'_> {
    fn epoch_done(&mut self, state: &FitState, record: &EpochRecord, improved: bool) -> facecloud::Result<()> {
        let io = |e| facecloud::Error::Io {
            path: self.dir.join(METRICS_FILE),
            source: e,
        };
        self.metrics(&state.history).map_err(io)?;
        Checkpoint {
            meta: self.meta.clone(),
            epoch: state.epoch,
            verification_loss: record.verification_loss,
            store: state.store.clone(),
            with_optimizer: true,
        }
        .save(self.dir.join(LAST_FILE))?;
        if improved {
            Checkpoint {
                meta: self.meta.clone(),
                epoch: state.epoch,
                verification_loss: record.verification_loss,
                store: state.store.clone(),
                with_optimizer: false,
            }
            .save(self.dir.join(BEST_FILE))?;
        }
        eprintln!(
            "epoch {:>3}  train {:.4}  rr1 {:.3}  vr {:.3}  auc {:.4}  loss {:.5}{}",
            record.epoch,
            record.train_loss,
            record.rr1,
            record.vr,
            record.auc,
            record.verification_loss,
            if improved { "  *" } else { "" }
        );
        Ok(())
    }
}

fn read_history(path: &Path, epochs: u32) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1).take(epochs as usize) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            bail!("malformed metrics row {line:?}");
        }
        let num = |i: usize| -> Result<f64> { Ok(f[i].parse()?) };
        out.push(EpochRecord {
            epoch: f[0].parse()?,
            train_loss: num(1)?,
            rr1: num(2)?,
            vr: num(3)?,
            auc: num(4)?,
            verification_loss: num(5)?,
            lr: num(6)?,
        });
    }
    if out.len() != epochs as usize {
        bail!("{} has {} rows, checkpoint is at epoch {epochs}", path.display(), out.len());
    }
    Ok(out)
}

fn resume_state(dir: &Path, meta: &str) -> Result<FitState> {
    let last = Checkpoint::load(dir.join(LAST_FILE))?;
    // The epoch count may grow between runs; everything else must match.
    let comparable = |text: &str| -> Result<CheckpointMeta> {
        let mut m = CheckpointMeta::decode(text)?;
        m.train.epochs = 0;
        m.lr_schedule.clear();
        Ok(m)
    };
    if comparable(&last.meta)? != comparable(meta)? {
        return Err(Usage("configuration differs from the checkpoint being resumed".into()).into());
    }
    if !last.with_optimizer {
        bail!("{} has no optimizer state", LAST_FILE);
    }
    let best = Checkpoint::load(dir.join(BEST_FILE))?;
    let history = read_history(&dir.join(METRICS_FILE), last.epoch)?;
    Ok(FitState {
        store: last.store,
        epoch: last.epoch,
        best: Some(BestState {
            epoch: best.epoch,
            loss: best.verification_loss,
            store: best.store,
        }),
        history,
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    epochs: u32,
    best_epoch: u32,
    best_verification_loss: f64,
    classes: usize,
    train_faces: usize,
    verification_gallery: usize,
    verification_probes: usize,
    history: &'a [EpochRecord],
}

pub fn run(args: TrainArgs) -> Result<Outcome> {
    let mut cfg = args.common.load()?;
    if let Some(p) = &args.preset {
        cfg.preset = parse_preset(p)?;
        cfg.network = cfg.preset.spec();
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.train.lr = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.train.batch_size = b;
    }
    cfg.train.seed = cfg.seed;
    let cfg = validated(cfg)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output.clone());

    let normal_k = cfg.network.normal_k;
    let train_clouds = load_prepared(&args.train, normal_k, cfg.eval.nose_heuristic)?;
    let ver_clouds = load_prepared(&args.verification, normal_k, cfg.eval.nose_heuristic)?;
    let classes: Vec<String> = labels(&train_clouds).into_iter().collect();
    let shared: Vec<String> = labels(&ver_clouds).intersection(&labels(&train_clouds)).cloned().collect();
    if !shared.is_empty() {
        return Err(Usage(format!(
            "training and verification sets share {} identities ({}); they must be disjoint",
            shared.len(),
            shared.iter().take(5).cloned().collect::<Vec<_>>().join(", ")
        ))
        .into());
    }
    if classes.is_empty() {
        return Err(Usage("training faces carry no identity labels".into()).into());
    }
    let train: Vec<TrainSample> = train_clouds
        .into_iter()
        .map(|c| {
            let label = classes
                .binary_search(c.id_label.as_ref().expect("labeled"))
                .expect("label collected above");
            TrainSample { cloud: c, label }
        })
        .collect();
    let verification = VerificationSet::split_first(ver_clouds);

    let spec = cfg.network.clone().with_classes(classes.len());
    let meta = CheckpointMeta::new(spec.clone(), cfg.train.clone(), classes.clone()).encode();
    create_dir(&out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;

    let state = if args.resume && out.join(LAST_FILE).exists() {
        let s = resume_state(&out, &meta)?;
        eprintln!("resuming after epoch {}", s.epoch);
        s
    } else {
        FitState::initial(&spec, &cfg.train)?
    };
    let mut writer = Writer { dir: &out, meta };
    let state = fit(&spec, &cfg.train, &train, &verification, state, &mut writer)?;
    let best = state.best.as_ref().expect("at least one epoch ran");
    write_json(
        &out.join("summary.json"),
        &Summary {
            epochs: state.epoch,
            best_epoch: best.epoch,
            best_verification_loss: best.loss,
            classes: classes.len(),
            train_faces: train.len(),
            verification_gallery: verification.gallery.len(),
            verification_probes: verification.probes.len(),
            history: &state.history,
        },
    )?;
    println!(
        "best epoch {} with verification loss {:.6}; checkpoint {}",
        best.epoch,
        best.loss,
        out.join(BEST_FILE).display()
    );
    Ok(Outcome::Complete)
}
