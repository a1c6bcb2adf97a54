use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, Vector3};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, SamplingParams};
use crate::morph::{euler_rotation, rotate_about_nose};
use crate::metrics::{evaluate, Embedding, EvalReport};
use crate::nn::{adam_step, update_running, AdamConfig, Graph, Mode, ParamStore, BN_MOMENTUM};
use crate::rng::stream;

use super::embed::Embedder;
use super::model::{forward, init_params, BN_UPDATES};
use super::plan::{plan_cloud, CloudPlan};
use super::spec::NetworkSpec;

const STREAM_INIT: u64 = 10;
const STREAM_SHUFFLE: u64 = 11;
const STREAM_CLOUD: u64 = 12;
const STREAM_DROPOUT: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f64,
    /// Factor applied every `lr_step` epochs.
    pub lr_decay: f64,
    pub lr_step: u32,
    pub weight_decay: f64,
    pub far_target: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 35,
            batch_size: 32,
            lr: 1e-3,
            lr_decay: 0.1,
            lr_step: 10,
            weight_decay: 1e-4,
            far_target: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Step schedule over 1-based epochs.
    pub fn learning_rate(&self, epoch: u32) -> f64 {
        let steps = epoch.saturating_sub(1) / self.lr_step.max(1);
        self.lr * self.lr_decay.powi(steps as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.lr_step == 0 {
            return Err(Error::invalid("epochs, batch size and LR step must be positive"));
        }
        if !(self.lr >= 0.0) || !(self.lr_decay > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("learning rate, decay and weight decay must be nonnegative"));
        }
        if !(self.far_target > 0.0 && self.far_target <= 1.0) {
            return Err(Error::invalid("FAR target must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// A prepared training cloud and its class index.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub cloud: PointCloud,
    pub label: usize,
}

/// Random choice of exactly `n` points: without replacement when the cloud is
/// large enough, otherwise every point plus repeats drawn with replacement.
pub fn resample<R: Rng + ?Sized>(cloud: &PointCloud, n: usize, rng: &mut R) -> PointCloud {
    let len = cloud.len();
    let idx: Vec<usize> = if len >= n {
        index::sample(rng, len, n).into_vec()
    } else {
        let mut v: Vec<usize> = (0..len).collect();
        v.extend((len..n).map(|_| rng.random_range(0..len)));
        v
    };
    cloud.select(&idx)
}

fn rotate_with_normals(cloud: &mut PointCloud, rot: &Matrix3<f64>) {
    rotate_about_nose(cloud, rot);
    if let Some(normals) = &mut cloud.normals {
        for n in normals.iter_mut() {
            let v = rot * Vector3::from(*n);
            *n = [v.x, v.y, v.z];
        }
    }
}

/// Identifies one optimizer step for RNG derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepId {
    pub seed: u64,
    pub epoch: u32,
    pub step: u32,
}

/// Samples a dithered plan for every cloud of a batch.
pub fn plan_batch(spec: &NetworkSpec, batch: &[&TrainSample], id: StepId) -> Result<Vec<CloudPlan>> {
    let sampling = SamplingParams::dithered(spec.train_sampling);
    batch
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(
                id.seed,
                &[STREAM_CLOUD, id.epoch as u64, id.step as u64, i as u64],
            );
            let mut cloud = resample(&s.cloud, spec.input_points(), &mut rng);
            let (r, p) = sampling.resolve(&mut rng);
            if spec.pose_jitter_deg > 0.0 {
                let limit = spec.pose_jitter_deg.to_radians();
                let [yaw, pitch, roll] = [0; 3].map(|_| rng.random_range(-limit..=limit));
                rotate_with_normals(&mut cloud, &euler_rotation(yaw, pitch, roll));
            }
            plan_cloud(&cloud, spec, r, p)
        })
        .collect()
}

/// One optimizer step. Returns the mean cross-entropy of the batch.
pub fn train_step(
    spec: &NetworkSpec,
    store: &mut ParamStore,
    batch: &[&TrainSample],
    lr: f64,
    weight_decay: f64,
    id: StepId,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if batch.iter().any(|s| s.label >= spec.n_classes) {
        return Err(Error::invalid("label outside class range"));
    }
    let plans = plan_batch(spec, batch, id)?;
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    step_on_plans(spec, store, &plans, &labels, lr, weight_decay, id)
}

/// The differentiable part of a step on already sampled plans.
pub fn step_on_plans(
    spec: &NetworkSpec,
    store: &mut ParamStore,
    plans: &[CloudPlan],
    labels: &[usize],
    lr: f64,
    weight_decay: f64,
    id: StepId,
) -> Result<f64> {
    let mut g = Graph::new();
    let mut rng = stream(id.seed, &[STREAM_DROPOUT, id.epoch as u64, id.step as u64]);
    let out = forward(&mut g, spec, store, plans, Mode::Train, &mut rng)?;
    let loss_var = g.softmax_xent(out.logits, labels)?;
    let loss = g.value(loss_var).item();
    g.backward(loss_var)?;
    let mut grads = BTreeMap::new();
    for (name, v) in &out.params {
        let grad = match g.grad(*v) {
            Some(d) => d.to_vec(),
            None => vec![0.0; g.value(*v).len()],
        };
        grads.insert(name.clone(), grad);
    }
    let cfg = AdamConfig {
        lr,
        weight_decay,
        ..AdamConfig::default()
    };
    adam_step(store, &grads, &cfg)?;
    for (prefix, s) in &out.batch_stats {
        update_running(store.buffer_mut(&format!("{prefix}.mean"))?.data_mut(), &s.mean, BN_MOMENTUM);
        update_running(store.buffer_mut(&format!("{prefix}.var"))?.data_mut(), &s.var, BN_MOMENTUM);
    }
    store.buffer_mut(BN_UPDATES)?.data_mut()[0] += 1.0;
    Ok(loss)
}

/// Labeled held-out faces used for checkpoint selection.
#[derive(Debug, Clone, Default)]
pub struct VerificationSet {
    pub gallery: Vec<PointCloud>,
    pub probes: Vec<PointCloud>,
}

impl VerificationSet {
    /// First face of each identity forms the gallery, the rest are probes.
    pub fn split_first(clouds: Vec<PointCloud>) -> Self {
        let mut seen = BTreeSet::new();
        let mut out = Self::default();
        for c in clouds {
            let key = c.id_label.clone();
            if seen.insert(key) {
                out.gallery.push(c);
            } else {
                out.probes.push(c);
            }
        }
        out
    }

    fn identities(&self) -> BTreeSet<&str> {
        self.gallery
            .iter()
            .chain(&self.probes)
            .filter_map(|c| c.id_label.as_deref())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: f64,
    pub rr1: f64,
    pub vr: f64,
    pub auc: f64,
    pub verification_loss: f64,
    pub lr: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,rr1,vr,auc,verification_loss,lr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.train_loss, self.rr1, self.vr, self.auc, self.verification_loss, self.lr
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestState {
    pub epoch: u32,
    pub loss: f64,
    pub store: ParamStore,
}

/// Resumable training state after `epoch` completed epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub store: ParamStore,
    pub epoch: u32,
    pub best: Option<BestState>,
    pub history: Vec<EpochRecord>,
}

impl FitState {
    pub fn initial(spec: &NetworkSpec, cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            store: init_params(spec, crate::rng::derive_seed(cfg.seed, &[STREAM_INIT]))?,
            epoch: 0,
            best: None,
            history: Vec::new(),
        })
    }
}

/// Called after every epoch, e.g. to persist checkpoints and metrics.
pub trait FitObserver {
    fn epoch_done(&mut self, state: &FitState, record: &EpochRecord, improved: bool) -> Result<()>;
}

impl FitObserver for () {
    fn epoch_done(&mut self, _: &FitState, _: &EpochRecord, _: bool) -> Result<()> {
        Ok(())
    }
}

/// Eval embeddings of the verification set scored with the configured FAR.
pub fn verify(
    embedder: &Embedder,
    gallery: &[(CloudPlan, Option<String>)],
    probes: &[(CloudPlan, Option<String>)],
    far_target: f64,
) -> Result<EvalReport> {
    let embed = |set: &[(CloudPlan, Option<String>)]| -> Result<Vec<Embedding>> {
        set.par_iter()
            .map(|(plan, label)| {
                let mut e = Embedding::new(embedder.embed_plan(plan)?)?;
                e.id_label = label.clone();
                Ok(e)
            })
            .collect()
    };
    let g = embed(gallery)?;
    let p = embed(probes)?;
    Ok(evaluate(&g, &p, far_target)?.0)
}

fn batches(n: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        // a single leftover sample cannot be batch-normalized
        if end - start >= 2 || out.is_empty() {
            out.push((start, end));
        }
        start = end;
    }
    out
}

/// Trains from `state` until `cfg.epochs`, scoring the verification set
/// after each epoch and keeping the parameters with the lowest
/// verification loss.
pub fn fit(
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    train: &[TrainSample],
    verification: &VerificationSet,
    mut state: FitState,
    observer: &mut dyn FitObserver,
) -> Result<FitState> {
    spec.validate()?;
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if verification.gallery.is_empty() || verification.probes.is_empty() {
        return Err(Error::invalid("verification set needs gallery and probe faces"));
    }
    let ver_ids = verification.identities();
    if let Some(shared) = train
        .iter()
        .filter_map(|s| s.cloud.id_label.as_deref())
        .find(|l| ver_ids.contains(l))
    {
        return Err(Error::invalid(format!(
            "identity {shared} appears in both training and verification sets"
        )));
    }

    let plan_set = |clouds: &[PointCloud]| -> Result<Vec<(CloudPlan, Option<String>)>> {
        clouds
            .par_iter()
            .map(|c| {
                let plan = plan_cloud(c, spec, spec.eval_radius, spec.eval_exponent)?;
                Ok((plan, c.id_label.clone()))
            })
            .collect()
    };
    let gallery = plan_set(&verification.gallery)?;
    let probes = plan_set(&verification.probes)?;

    while state.epoch < cfg.epochs {
        let epoch = state.epoch + 1;
        let lr = cfg.learning_rate(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (step, (a, b)) in batches(order.len(), cfg.batch_size).into_iter().enumerate() {
            let batch: Vec<&TrainSample> = order[a..b].iter().map(|&i| &train[i]).collect();
            let id = StepId {
                seed: cfg.seed,
                epoch,
                step: step as u32,
            };
            let loss = train_step(spec, &mut state.store, &batch, lr, cfg.weight_decay, id)?;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let embedder = Embedder::new(spec.clone(), state.store.clone());
        let report = verify(&embedder, &gallery, &probes, cfg.far_target)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            rr1: report.rr1,
            vr: report.vr_at_far,
            auc: report.auc,
            verification_loss: report.verification_loss,
            lr,
        };
        let improved = state
            .best
            .as_ref()
            .map_or(true, |b| record.verification_loss < b.loss);
        if improved {
            state.best = Some(BestState {
                epoch,
                loss: record.verification_loss,
                store: state.store.clone(),
            });
        }
        state.epoch = epoch;
        state.history.push(record.clone());
        observer.epoch_done(&state, &record, improved)?;
    }
    Ok(state)
}
