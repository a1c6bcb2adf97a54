use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{he_uniform, BatchStats, Graph, Mode, ParamStore, Tensor, Var};
use crate::rng::stream;

use super::plan::CloudPlan;
use super::spec::{NetworkSpec, ATTRIBUTE_CHANNELS};

/// Buffer counting train-mode forward passes that updated running statistics.
pub const BN_UPDATES: &str = "bn.updates";

pub(crate) fn mlp_widths(spec: &NetworkSpec, layer: usize) -> [(usize, usize); 2] {
    let cin = spec.layer_input_channels(layer);
    let m = spec.layers[layer].m;
    [(cin, m / 2), (m / 2, m)]
}

fn head_widths(spec: &NetworkSpec) -> Vec<(usize, usize)> {
    let mut prev = spec.layers.last().map_or(0, |l| l.m);
    spec.head
        .iter()
        .map(|&w| {
            let io = (prev, w);
            prev = w;
            io
        })
        .collect()
}

fn insert_bn(store: &mut ParamStore, prefix: &str, c: usize) {
    store.insert(format!("{prefix}.bn.gamma"), Tensor::full(&[c], 1.0));
    store.insert(format!("{prefix}.bn.beta"), Tensor::zeros(&[c]));
    store.insert_buffer(format!("{prefix}.bn.mean"), Tensor::zeros(&[c]));
    store.insert_buffer(format!("{prefix}.bn.var"), Tensor::full(&[c], 1.0));
}

/// Seeded parameters: He-uniform weights, zero biases, unit BN scale.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ParamStore> {
    spec.validate()?;
    if spec.n_classes == 0 {
        return Err(Error::invalid("network needs at least one class"));
    }
    let mut rng = stream(seed, &[0x1417]);
    let mut store = ParamStore::new();
    for li in 0..spec.layers.len() {
        for (j, (cin, cout)) in mlp_widths(spec, li).into_iter().enumerate() {
            let p = format!("sa{li}.mlp{j}");
            store.insert(format!("{p}.w"), he_uniform(cin, cout, &mut rng));
            insert_bn(&mut store, &p, cout);
        }
    }
    for (j, (cin, cout)) in head_widths(spec).into_iter().enumerate() {
        let p = format!("fc{j}");
        store.insert(format!("{p}.w"), he_uniform(cin, cout, &mut rng));
        insert_bn(&mut store, &p, cout);
    }
    let last = spec.embedding_dim();
    store.insert("cls.w", he_uniform(last, spec.n_classes, &mut rng));
    store.insert("cls.b", Tensor::zeros(&[spec.n_classes]));
    store.insert_buffer(BN_UPDATES, Tensor::zeros(&[1]));
    Ok(store)
}

pub struct ForwardOutput {
    /// `[B, embedding_dim]`.
    pub embedding: Var,
    /// `[B, n_classes]`.
    pub logits: Var,
    /// Graph handles of every parameter used.
    pub params: Vec<(String, Var)>,
    /// Train-mode statistics per normalization prefix.
    pub batch_stats: Vec<(String, BatchStats)>,
    /// `(points, channels)` after each layer.
    pub layer_shapes: Vec<(usize, usize)>,
}

struct Binder<'a> {
    store: &'a ParamStore,
    mode: Mode,
    params: Vec<(String, Var)>,
    batch_stats: Vec<(String, BatchStats)>,
}

impl Binder<'_> {
    fn param(&mut self, g: &mut Graph, name: String) -> Result<Var> {
        let v = g.param(self.store.get(&name)?.clone());
        self.params.push((name, v));
        Ok(v)
    }

    /// Bias-free linear map, normalization and ReLU.
    fn block(&mut self, g: &mut Graph, x: Var, prefix: &str) -> Result<Var> {
        let w = self.param(g, format!("{prefix}.w"))?;
        let cout = g.value(w).shape()[1];
        let zero = g.constant(Tensor::zeros(&[cout]));
        let y = g.linear(x, w, zero)?;
        let gamma = self.param(g, format!("{prefix}.bn.gamma"))?;
        let beta = self.param(g, format!("{prefix}.bn.beta"))?;
        let mean = self.store.buffer(&format!("{prefix}.bn.mean"))?.data();
        let var = self.store.buffer(&format!("{prefix}.bn.var"))?.data();
        let (y, stats) = g.batch_norm(y, gamma, beta, self.mode, (mean, var))?;
        if let Some(s) = stats {
            self.batch_stats.push((format!("{prefix}.bn"), s));
        }
        Ok(g.relu(y))
    }
}

/// Builds the network graph for a batch of planned clouds.
pub fn forward<R: Rng + ?Sized>(
    g: &mut Graph,
    spec: &NetworkSpec,
    store: &ParamStore,
    plans: &[CloudPlan],
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardOutput> {
    if plans.is_empty() {
        return Err(Error::invalid("forward needs at least one cloud"));
    }
    for p in plans {
        if p.layers.len() != spec.layers.len() {
            return Err(Error::shape("plan depth differs from network depth"));
        }
    }
    let b = plans.len();
    let mut binder = Binder {
        store,
        mode,
        params: Vec::new(),
        batch_stats: Vec::new(),
    };
    let mut layer_shapes = Vec::with_capacity(spec.layers.len());
    let mut feat: Option<Var> = None;
    for (li, l) in spec.layers.iter().enumerate() {
        let groups = l.nb * l.k;
        for p in plans {
            let lp = &p.layers[li];
            if lp.neighbors.len() != groups || lp.offsets.len() != groups * 3 {
                return Err(Error::shape(format!("plan layer {li} does not match NB × k")));
            }
        }
        let x = if li == 0 {
            let c = spec.layer_input_channels(0);
            let mut data = Vec::with_capacity(b * groups * c);
            for p in plans {
                if spec.use_normals && p.attributes.len() != groups * ATTRIBUTE_CHANNELS {
                    return Err(Error::shape("plan attributes do not match NB × k"));
                }
                for t in 0..groups {
                    data.extend_from_slice(&p.layers[0].offsets[t * 3..t * 3 + 3]);
                    if spec.use_normals {
                        data.extend_from_slice(&p.attributes[t * 4..t * 4 + 4]);
                    }
                }
            }
            g.constant(Tensor::new(vec![b, l.nb, l.k, c], data)?)
        } else {
            let mut offs = Vec::with_capacity(b * groups * 3);
            let mut idx = Vec::with_capacity(b * groups);
            for p in plans {
                offs.extend_from_slice(&p.layers[li].offsets);
                idx.extend_from_slice(&p.layers[li].neighbors);
            }
            let offs = g.constant(Tensor::new(vec![b, l.nb, l.k, 3], offs)?);
            let prev = feat.expect("set by previous layer");
            let gathered = g.gather(prev, idx, l.nb, l.k)?;
            g.concat(offs, gathered)?
        };
        let mut h = x;
        for j in 0..2 {
            h = binder.block(g, h, &format!("sa{li}.mlp{j}"))?;
        }
        let pooled = g.max_pool(h, 2)?;
        let s = g.value(pooled).shape();
        layer_shapes.push((s[1], s[2]));
        feat = Some(pooled);
    }
    let mut h = g.max_pool(feat.expect("at least one layer"), 1)?;
    let mut embedding = h;
    for j in 0..spec.head.len() {
        h = binder.block(g, h, &format!("fc{j}"))?;
        embedding = h;
        h = g.dropout(h, spec.dropout, mode, rng)?;
    }
    let w = binder.param(g, "cls.w".into())?;
    let bias = binder.param(g, "cls.b".into())?;
    let logits = g.linear(h, w, bias)?;
    Ok(ForwardOutput {
        embedding,
        logits,
        params: binder.params,
        batch_stats: binder.batch_stats,
        layer_shapes,
    })
}
