//! Cosine identification and verification metrics.

mod report;
mod roc;

pub use report::{evaluate, EvalCounts, EvalDiagnostics, EvalReport, DEFAULT_FAR};
pub use roc::{roc_curve, Roc, RocPoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A face representation with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub id_label: Option<String>,
    pub expr_label: Option<String>,
    pub source: Option<String>,
}

impl Embedding {
    /// Rejects non-finite or zero-norm vectors.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding has non-finite values"));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::invalid("embedding has zero norm"));
        }
        Ok(Self {
            values,
            id_label: None,
            expr_label: None,
            source: None,
        })
    }

    pub fn labeled(values: Vec<f64>, id: impl Into<String>) -> Result<Self> {
        let mut e = Self::new(values)?;
        e.id_label = Some(id.into());
        Ok(e)
    }
}

/// `1 − a·b / (‖a‖ ‖b‖)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("embedding lengths differ"));
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::invalid("cosine distance of a zero vector"));
    }
    Ok((1.0 - ab / (aa.sqrt() * bb.sqrt())).clamp(0.0, 2.0))
}

/// `1 − VR · RR1 · AUC`.
pub fn verification_loss(vr: f64, rr1: f64, auc: f64) -> f64 {
    1.0 - vr * rr1 * auc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMatch {
    pub id_label: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRanking {
    pub probe: usize,
    pub id_label: Option<String>,
    pub source: Option<String>,
    /// Gallery identities by ascending distance, ties by label.
    pub ranked: Vec<RankedMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub rankings: Vec<ProbeRanking>,
    pub rr1: f64,
    /// Probes without an identity label (ranked, not scored).
    pub unlabeled_probes: usize,
}

/// Closed-set identification by minimum cosine distance. An identity with
/// several gallery entries is represented by its closest entry.
pub fn identify(gallery: &[Embedding], probes: &[Embedding]) -> Result<Identification> {
    if gallery.is_empty() {
        return Err(Error::invalid("gallery is empty"));
    }
    let mut labels: Vec<&str> = Vec::with_capacity(gallery.len());
    for g in gallery {
        labels.push(
            g.id_label
                .as_deref()
                .ok_or_else(|| Error::invalid("gallery embedding without identity label"))?,
        );
    }
    let mut ids: Vec<&str> = labels.clone();
    ids.sort_unstable();
    ids.dedup();

    let mut rankings = Vec::with_capacity(probes.len());
    let (mut hits, mut scored, mut unlabeled) = (0usize, 0usize, 0usize);
    for (pi, p) in probes.iter().enumerate() {
        let mut best = vec![f64::INFINITY; ids.len()];
        for (g, label) in gallery.iter().zip(&labels) {
            let d = cosine_distance(&p.values, &g.values)?;
            let slot = ids.binary_search(label).expect("label collected above");
            best[slot] = best[slot].min(d);
        }
        let mut ranked: Vec<RankedMatch> = ids
            .iter()
            .zip(best)
            .map(|(id, distance)| RankedMatch {
                id_label: id.to_string(),
                distance,
            })
            .collect();
        // stable sort keeps label order among equal distances
        ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        match &p.id_label {
            Some(l) => {
                scored += 1;
                if ranked[0].id_label == *l {
                    hits += 1;
                }
            }
            None => unlabeled += 1,
        }
        rankings.push(ProbeRanking {
            probe: pi,
            id_label: p.id_label.clone(),
            source: p.source.clone(),
            ranked,
        });
    }
    Ok(Identification {
        rankings,
        rr1: if scored == 0 { 0.0 } else { hits as f64 / scored as f64 },
        unlabeled_probes: unlabeled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        let a = [1.0, 2.0, -3.0];
        assert!(cosine_distance(&a, &a).unwrap().abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((cosine_distance(&a, &neg).unwrap() - 2.0).abs() < 1e-12);
        let d = cosine_distance(&[1.0, 0.0, 0.0], &[1.0, 1.0, 0.0]).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!((d - 0.29289).abs() < 1e-5);
        assert!(cosine_distance(&[0.0; 3], &a).is_err());
    }

    #[test]
    fn embedding_rejects_zero_and_nan() {
        assert!(Embedding::new(vec![0.0; 4]).is_err());
        assert!(Embedding::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn loss_arithmetic() {
        assert_eq!(verification_loss(1.0, 1.0, 1.0), 0.0);
        assert_eq!(verification_loss(0.0, 0.3, 0.7), 1.0);
        assert!((verification_loss(0.9, 0.95, 0.99) - 0.153550).abs() < 1e-12);
    }

    #[test]
    fn self_identification_is_perfect() {
        let g: Vec<Embedding> = (0..5)
            .map(|i| {
                let mut v = vec![0.1; 5];
                v[i] = 1.0;
                Embedding::labeled(v, format!("id{i}")).unwrap()
            })
            .collect();
        let r = identify(&g, &g).unwrap();
        assert_eq!(r.rr1, 1.0);
    }

    #[test]
    fn orthogonal_probe_ranks_by_label() {
        let g = vec![
            Embedding::labeled(vec![0.0, 1.0, 0.0], "b").unwrap(),
            Embedding::labeled(vec![0.0, 0.0, 1.0], "a").unwrap(),
        ];
        let p = vec![Embedding::new(vec![1.0, 0.0, 0.0]).unwrap()];
        let r = identify(&g, &p).unwrap();
        let order: Vec<&str> = r.rankings[0].ranked.iter().map(|m| m.id_label.as_str()).collect();
        assert_eq!(order, ["a", "b"]);
        assert_eq!(r.unlabeled_probes, 1);
    }

    #[test]
    fn multi_entry_gallery_uses_minimum() {
        let g = vec![
            Embedding::labeled(vec![1.0, 0.0], "x").unwrap(),
            Embedding::labeled(vec![0.0, 1.0], "x").unwrap(),
            Embedding::labeled(vec![1.0, 0.9], "y").unwrap(),
        ];
        let p = vec![Embedding::labeled(vec![0.0, 1.0], "x").unwrap()];
        let r = identify(&g, &p).unwrap();
        assert_eq!(r.rankings[0].ranked[0].id_label, "x");
        assert_eq!(r.rankings[0].ranked[0].distance, 0.0);
    }

    #[test]
    fn empty_gallery() {
        assert!(identify(&[], &[]).is_err());
    }
}
