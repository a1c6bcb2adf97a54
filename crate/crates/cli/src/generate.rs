use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use facecloud::io::{subset, DirSink};
use facecloud::morph::{generate_dataset, load_model, make_toy_model, DatasetSpec};

use crate::{validated, Common, Outcome, Usage};

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory (default: the configured output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Build the procedural toy model instead of reading a model file.
    #[arg(long, conflicts_with = "model")]
    pub toy_model: bool,
    /// Morphable model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Also write the model used to this path.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub expressions: Option<usize>,
    /// Offset added to identity indices in labels.
    #[arg(long)]
    pub id_offset: Option<usize>,
}

pub fn run(args: GenerateArgs) -> Result<Outcome> {
    let mut cfg = args.common.load()?;
    if let Some(n) = args.identities {
        cfg.dataset.identities = n;
    }
    if let Some(n) = args.expressions {
        cfg.dataset.expressions = n;
    }
    if let Some(n) = args.id_offset {
        cfg.dataset.id_offset = n;
    }
    let cfg = validated(cfg)?;
    let d = &cfg.dataset;

    let model = match (&args.model, args.toy_model) {
        (Some(p), _) => load_model(p).with_context(|| format!("loading model {}", p.display()))?,
        (None, true) => make_toy_model(d.toy_vertices, d.toy_shape_dim, d.toy_expr_dim, d.toy_model_seed)
            .map_err(|e| Usage(e.to_string()))?,
        (None, false) => return Err(Usage("either --model <file> or --toy-model is required".into()).into()),
    };
    if let Some(p) = &args.save_model {
        model.save(p)?;
    }

    let out = args.out.unwrap_or_else(|| cfg.output.clone());
    let mut sink = DirSink::create(&out)?;
    let spec = DatasetSpec {
        n_identities: d.identities,
        n_expressions: d.expressions,
        neutral_first: d.neutral_first,
        id_offset: d.id_offset,
    };
    let manifest = generate_dataset(&model, &spec, &d.generation, cfg.seed, &mut sink)?;
    manifest.save(out.join("manifest.json"))?;
    let first = spec.expr_label(0);
    subset(&manifest, |_, r| r.expr_label == first).save(out.join("gallery.json"))?;
    subset(&manifest, |_, r| r.expr_label != first).save(out.join("probes.json"))?;
    println!(
        "generated {} faces ({} identities x {} expressions), seed {}, in {}",
        manifest.records.len(),
        spec.n_identities,
        spec.n_expressions,
        cfg.seed,
        out.display()
    );
    Ok(Outcome::Complete)
}
