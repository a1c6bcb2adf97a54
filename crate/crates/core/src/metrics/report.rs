use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cosine_distance, identify, roc_curve, verification_loss, Embedding, Identification};
use crate::error::{Error, Result};

/// Default false-accept operating point.
pub const DEFAULT_FAR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub gallery: usize,
    pub probes: usize,
    pub genuine_pairs: usize,
    pub impostor_pairs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalDiagnostics {
    pub unlabeled_probes: usize,
    /// Probe identities absent from the gallery; their pairs are excluded.
    pub identities_without_genuine: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rr1: f64,
    pub vr_at_far: f64,
    pub far_target: f64,
    pub auc: f64,
    /// `(FAR, VR)` samples with non-decreasing FAR.
    pub roc: Vec<(f64, f64)>,
    pub verification_loss: f64,
    pub counts: EvalCounts,
    pub diagnostics: EvalDiagnostics,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "rr1,vr_at_far,far_target,auc,verification_loss,gallery,probes,genuine_pairs,impostor_pairs";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.rr1,
            self.vr_at_far,
            self.far_target,
            self.auc,
            self.verification_loss,
            self.counts.gallery,
            self.counts.probes,
            self.counts.genuine_pairs,
            self.counts.impostor_pairs
        )
    }
}

/// Identification plus all-pairs gallery × probe verification.
pub fn evaluate(
    gallery: &[Embedding],
    probes: &[Embedding],
    far_target: f64,
) -> Result<(EvalReport, Identification)> {
    let ident = identify(gallery, probes)?;
    let gallery_ids: BTreeSet<&str> = gallery.iter().filter_map(|g| g.id_label.as_deref()).collect();

    let mut diagnostics = EvalDiagnostics {
        unlabeled_probes: ident.unlabeled_probes,
        ..Default::default()
    };
    let mut missing = BTreeSet::new();
    let mut scored: Vec<&Embedding> = Vec::with_capacity(probes.len());
    for p in probes {
        match p.id_label.as_deref() {
            None => {}
            Some(l) if !gallery_ids.contains(l) => {
                missing.insert(l.to_string());
            }
            Some(_) => scored.push(p),
        }
    }
    if !missing.is_empty() {
        diagnostics.warnings.push(format!(
            "{} probe identities have no gallery entry; their pairs are excluded",
            missing.len()
        ));
    }
    diagnostics.identities_without_genuine = missing.into_iter().collect();
    if diagnostics.unlabeled_probes > 0 {
        diagnostics
            .warnings
            .push(format!("{} unlabeled probes excluded from scoring", diagnostics.unlabeled_probes));
    }

    let pairs: Vec<Vec<(bool, f64)>> = scored
        .par_iter()
        .map(|p| {
            gallery
                .iter()
                .map(|g| Ok((g.id_label == p.id_label, cosine_distance(&p.values, &g.values)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for (same, d) in pairs.into_iter().flatten() {
        if same {
            genuine.push(d);
        } else {
            impostor.push(d);
        }
    }
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::invalid(
            "evaluation needs at least one genuine and one impostor pair",
        ));
    }
    let roc = roc_curve(&genuine, &impostor, far_target)?;
    let report = EvalReport {
        rr1: ident.rr1,
        vr_at_far: roc.vr_at_far,
        far_target,
        auc: roc.auc,
        roc: roc.points.iter().map(|p| (p.far, p.vr)).collect(),
        verification_loss: verification_loss(roc.vr_at_far, ident.rr1, roc.auc),
        counts: EvalCounts {
            gallery: gallery.len(),
            probes: probes.len(),
            genuine_pairs: genuine.len(),
            impostor_pairs: impostor.len(),
        },
        diagnostics,
    };
    Ok((report, ident))
}
