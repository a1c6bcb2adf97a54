//! Reverse-mode differentiation tape.
//!
//! Nodes are appended in evaluation order, so the tape is already
//! topologically sorted and `backward` is a single reverse sweep.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

pub const BN_EPS: f64 = 1e-7;

/// Rows per parallel task in the dense kernels. Fixed so results do not
/// depend on the thread count.
const ROW_CHUNK: usize = 256;

#[derive(Debug)]
enum Op {
    Leaf,
    Gather {
        src: Var,
        index: Vec<u32>,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Relu {
        x: Var,
    },
    Mask {
        x: Var,
        mask: Vec<f64>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    SoftmaxXent {
        logits: Var,
        probs: Vec<f64>,
        labels: Vec<usize>,
    },
    WeightedSum {
        x: Var,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Batch statistics computed by a train-mode batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is collected by `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Groups rows of `src` (`[B, NA, C]`) into `[B, groups, k, C]`;
    /// `index[(b * groups + g) * k + j]` is a point index into axis 1.
    pub fn gather(&mut self, src: Var, index: Vec<u32>, groups: usize, k: usize) -> Result<Var> {
        let s = self.value(src).shape().to_vec();
        if s.len() != 3 {
            return Err(Error::shape(format!("gather source must be [B, N, C], got {s:?}")));
        }
        let (b, na, c) = (s[0], s[1], s[2]);
        if index.len() != b * groups * k {
            return Err(Error::shape("gather index length does not match [B, groups, k]"));
        }
        if index.iter().any(|&i| i as usize >= na) {
            return Err(Error::shape("gather index out of range"));
        }
        let src_data = self.value(src).data();
        let per_batch = groups * k;
        let mut out = Vec::with_capacity(index.len() * c);
        for (t, &i) in index.iter().enumerate() {
            let bi = t / per_batch;
            let row = (bi * na + i as usize) * c;
            out.extend_from_slice(&src_data[row..row + c]);
        }
        let value = Tensor::new(vec![b, groups, k, c], out)?;
        let rg = self.needs(&[src]);
        Ok(self.push(value, Op::Gather { src, index }, rg))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != sb.len() || sa.is_empty() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::shape(format!("cannot concat {sa:?} with {sb:?}")));
        }
        let (ca, cb) = (self.value(a).channels(), self.value(b).channels());
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let rows = self.value(a).rows();
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(&da[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&db[r * cb..(r + 1) * cb]);
        }
        let value = Tensor::new(shape, out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Concat { a, b }, rg))
    }

    /// `x · w + b` applied at every position; `w` is `[Cin, Cout]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape();
        let cin = self.value(x).channels();
        if xs.is_empty() || ws.len() != 2 || ws[0] != cin {
            return Err(Error::shape(format!("linear: input {xs:?} incompatible with weight {ws:?}")));
        }
        let cout = ws[1];
        if self.value(b).shape() != [cout] {
            return Err(Error::shape("linear: bias length differs from output channels"));
        }
        let rows = self.value(x).rows();
        let out = matmul_bias(
            self.value(x).data(),
            rows,
            cin,
            self.value(w).data(),
            cout,
            self.value(b).data(),
        );
        let mut shape = xs;
        *shape.last_mut().unwrap() = cout;
        let value = Tensor::new(shape, out)?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    /// Per-channel normalization over every non-channel axis.
    ///
    /// Train mode normalizes by the batch statistics and returns them; eval
    /// mode uses `running = (mean, var)`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: Mode,
        running: (&[f64], &[f64]),
    ) -> Result<(Var, Option<BatchStats>)> {
        let c = self.value(x).channels();
        let rows = self.value(x).rows();
        if self.value(x).shape().len() < 2 {
            return Err(Error::shape("batch_norm needs a channel axis and at least one other axis"));
        }
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(Error::shape("batch_norm: scale/shift length differs from channels"));
        }
        if running.0.len() != c || running.1.len() != c {
            return Err(Error::shape("batch_norm: running statistics length differs from channels"));
        }
        if rows == 0 {
            return Err(Error::shape("batch_norm over an empty tensor"));
        }
        let xd = self.value(x).data();
        let (mean, var, stats) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                for r in 0..rows {
                    for (m, v) in mean.iter_mut().zip(&xd[r * c..(r + 1) * c]) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; c];
                for r in 0..rows {
                    for ch in 0..c {
                        let d = xd[r * c + ch] - mean[ch];
                        var[ch] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                (mean.clone(), var.clone(), Some(BatchStats { mean, var }))
            }
            Mode::Eval => (running.0.to_vec(), running.1.to_vec(), None),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; rows * c];
        let mut out = vec![0.0; rows * c];
        for r in 0..rows {
            for ch in 0..c {
                let i = r * c + ch;
                xhat[i] = (xd[i] - mean[ch]) * inv_std[ch];
                out[i] = g[ch] * xhat[i] + bt[ch];
            }
        }
        let value = Tensor::new(self.value(x).shape().to_vec(), out)?;
        let rg = self.needs(&[x, gamma, beta]);
        let v = self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: mode == Mode::Train,
            },
            rg,
        );
        Ok((v, stats))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out: Vec<f64> = t.data().iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        let rg = self.needs(&[x]);
        self.push(value, Op::Relu { x }, rg)
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
            .collect();
        let t = self.value(x);
        let out: Vec<f64> = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Mask { x, mask }, rg))
    }

    /// Maximum over `axis`, which is removed from the shape. Gradient flows to
    /// the first maximal position.
    pub fn max_pool(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(format!("max_pool axis {axis} out of range for {shape:?}")));
        }
        let n = shape[axis];
        if n == 0 {
            return Err(Error::shape("max_pool over an empty axis"));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let d = self.value(x).data();
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let base = (o * n + j) * inner;
                for i in 0..inner {
                    let v = d[base + i];
                    let slot = o * inner + i;
                    if j == 0 || v > out[slot] {
                        out[slot] = v;
                        argmax[slot] = base + i;
                    }
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let value = Tensor::new(out_shape, out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(
            value,
            Op::MaxPool { x, argmax },
            rg,
        ))
    }

    /// Mean softmax cross-entropy of `[B, C]` logits against class labels.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let s = t.shape();
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(Error::shape(format!(
                "softmax_xent: logits {s:?} vs {} labels",
                labels.len()
            )));
        }
        let (b, c) = (s[0], s[1]);
        if labels.iter().any(|&l| l >= c) {
            return Err(Error::invalid("label outside class range"));
        }
        if t.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics("non-finite logits".into()));
        }
        let mut probs = vec![0.0; b * c];
        let mut loss = 0.0;
        for r in 0..b {
            let row = &t.data()[r * c..(r + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lse = m + z.ln();
            for k in 0..c {
                probs[r * c + k] = (row[k] - lse).exp();
            }
            loss += lse - row[labels[r]];
        }
        let value = Tensor::scalar(loss / b as f64);
        let rg = self.needs(&[logits]);
        Ok(self.push(
            value,
            Op::SoftmaxXent {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    /// `Σ w_i x_i` as a scalar.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        let t = self.value(x);
        if weights.len() != t.len() {
            return Err(Error::shape("weighted_sum: weight count differs from tensor size"));
        }
        let s: f64 = t.data().iter().zip(&weights).map(|(a, b)| a * b).sum();
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x, weights }, rg))
    }

    /// Back-propagates from a scalar node. Gradients of every node that
    /// depends on a `param` become available through `grad`.
    pub fn backward(&mut self, target: Var) -> Result<()> {
        if self.value(target).len() != 1 {
            return Err(Error::shape("backward target must be a scalar"));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[target.0].grad = Some(vec![1.0]);
        for i in (0..=target.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            let contributions = self.local_grads(i, &op, &g);
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(g);
            for (v, cg) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut self.nodes[v.0].grad {
                    Some(acc) => acc.iter_mut().zip(&cg).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(cg),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, node: usize, op: &Op, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        match op {
            Op::Leaf => Vec::new(),
            Op::Gather { src, index } => {
                let s = self.value(*src).shape();
                let (na, c) = (s[1], s[2]);
                let per_batch = index.len() / s[0];
                let mut dsrc = vec![0.0; self.value(*src).len()];
                for (t, &i) in index.iter().enumerate() {
                    let row = ((t / per_batch) * na + i as usize) * c;
                    for ch in 0..c {
                        dsrc[row + ch] += g[t * c + ch];
                    }
                }
                vec![(*src, dsrc)]
            }
            Op::Concat { a, b } => {
                let (ca, cb) = (self.value(*a).channels(), self.value(*b).channels());
                let rows = self.value(*a).rows();
                let mut da = Vec::with_capacity(rows * ca);
                let mut db = Vec::with_capacity(rows * cb);
                for r in 0..rows {
                    let base = r * (ca + cb);
                    da.extend_from_slice(&g[base..base + ca]);
                    db.extend_from_slice(&g[base + ca..base + ca + cb]);
                }
                vec![(*a, da), (*b, db)]
            }
            Op::Linear { x, w, b } => {
                let xt = self.value(*x);
                let (rows, cin) = (xt.rows(), xt.channels());
                let cout = self.value(*w).shape()[1];
                let wd = self.value(*w).data();
                let mut out = Vec::new();
                if needs(x) {
                    out.push((*x, matmul_transposed(g, rows, cout, wd, cin)));
                }
                if needs(w) {
                    out.push((*w, outer_accumulate(xt.data(), g, rows, cin, cout)));
                }
                if needs(b) {
                    let mut db = vec![0.0; cout];
                    for r in 0..rows {
                        for (d, v) in db.iter_mut().zip(&g[r * cout..(r + 1) * cout]) {
                            *d += v;
                        }
                    }
                    out.push((*b, db));
                }
                out
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let c = inv_std.len();
                let rows = xhat.len() / c;
                let gm = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for r in 0..rows {
                    for ch in 0..c {
                        let i = r * c + ch;
                        dgamma[ch] += g[i] * xhat[i];
                        dbeta[ch] += g[i];
                    }
                }
                let mut out = Vec::new();
                if needs(x) {
                    let mut dx = vec![0.0; rows * c];
                    let n = rows as f64;
                    for r in 0..rows {
                        for ch in 0..c {
                            let i = r * c + ch;
                            let dxhat = g[i] * gm[ch];
                            dx[i] = if *batch_stats {
                                // Σ dxhat = γ Σ g, Σ dxhat·xhat = γ Σ g·xhat
                                inv_std[ch] / n
                                    * (n * dxhat - gm[ch] * dbeta[ch] - xhat[i] * gm[ch] * dgamma[ch])
                            } else {
                                dxhat * inv_std[ch]
                            };
                        }
                    }
                    out.push((*x, dx));
                }
                out.push((*gamma, dgamma));
                out.push((*beta, dbeta));
                out
            }
            Op::Relu { x } => {
                let y = self.nodes[node].value.data();
                let dx = g
                    .iter()
                    .zip(y)
                    .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                    .collect();
                vec![(*x, dx)]
            }
            Op::Mask { x, mask } => vec![(*x, g.iter().zip(mask).map(|(a, b)| a * b).collect())],
            Op::MaxPool { x, argmax } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (slot, &src) in argmax.iter().enumerate() {
                    dx[src] += g[slot];
                }
                vec![(*x, dx)]
            }
            Op::SoftmaxXent { logits, probs, labels } => {
                let b = labels.len();
                let c = probs.len() / b;
                let scale = g[0] / b as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, &l) in labels.iter().enumerate() {
                    d[r * c + l] -= scale;
                }
                vec![(*logits, d)]
            }
            Op::WeightedSum { x, weights } => vec![(*x, weights.iter().map(|w| w * g[0]).collect())],
        }
    }
}

/// `out[r, :] = b + x[r, :] · w` with `w` laid out `[cin, cout]`.
fn matmul_bias(x: &[f64], rows: usize, cin: usize, w: &[f64], cout: usize, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cout];
    if cout == 0 {
        return out;
    }
    out.par_chunks_mut(ROW_CHUNK * cout)
        .enumerate()
        .for_each(|(chunk, block)| {
            let r0 = chunk * ROW_CHUNK;
            for (lr, orow) in block.chunks_mut(cout).enumerate() {
                let xr = &x[(r0 + lr) * cin..(r0 + lr + 1) * cin];
                orow.copy_from_slice(b);
                for (k, &xv) in xr.iter().enumerate() {
                    if xv != 0.0 {
                        let wr = &w[k * cout..(k + 1) * cout];
                        for (o, wv) in orow.iter_mut().zip(wr) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        });
    out
}

/// `dx[r, k] = Σ_j g[r, j] · w[k, j]`.
fn matmul_transposed(g: &[f64], rows: usize, cout: usize, w: &[f64], cin: usize) -> Vec<f64> {
    let mut dx = vec![0.0; rows * cin];
    if cin == 0 {
        return dx;
    }
    let mut wt = vec![0.0; cin * cout];
    for k in 0..cin {
        for j in 0..cout {
            wt[j * cin + k] = w[k * cout + j];
        }
    }
    dx.par_chunks_mut(ROW_CHUNK * cin)
        .enumerate()
        .for_each(|(chunk, block)| {
            let r0 = chunk * ROW_CHUNK;
            for (lr, drow) in block.chunks_mut(cin).enumerate() {
                let gr = &g[(r0 + lr) * cout..(r0 + lr + 1) * cout];
                for (j, &gv) in gr.iter().enumerate() {
                    if gv != 0.0 {
                        for (d, wv) in drow.iter_mut().zip(&wt[j * cin..(j + 1) * cin]) {
                            *d += gv * wv;
                        }
                    }
                }
            }
        });
    dx
}

/// `dw[k, j] = Σ_r x[r, k] · g[r, j]`, reduced over fixed row blocks in
/// order.
fn outer_accumulate(x: &[f64], g: &[f64], rows: usize, cin: usize, cout: usize) -> Vec<f64> {
    let block = (rows.div_ceil(32)).max(4 * ROW_CHUNK);
    let n_blocks = rows.div_ceil(block);
    let partials: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|bi| {
            let mut acc = vec![0.0; cin * cout];
            for r in bi * block..((bi + 1) * block).min(rows) {
                let gr = &g[r * cout..(r + 1) * cout];
                for (k, &xv) in x[r * cin..(r + 1) * cin].iter().enumerate() {
                    if xv != 0.0 {
                        for (a, gv) in acc[k * cout..(k + 1) * cout].iter_mut().zip(gr) {
                            *a += xv * gv;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut dw = vec![0.0; cin * cout];
    for p in partials {
        dw.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
    }
    dw
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        t(shape, &(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
    }

    #[test]
    fn linear_matches_hand_arithmetic() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 1, 1, 2], &[1.0, -2.0]));
        let w = g.param(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = g.param(t(&[3], &[0.5, 0.0, -0.5]));
        let y = g.linear(x, w, b).unwrap();
        // [1, -2] · [[1,2,3],[4,5,6]] = [-7, -8, -9]
        assert_eq!(g.value(y).data(), &[-6.5, -8.0, -9.5]);
        assert_eq!(g.value(y).shape(), &[1, 1, 1, 3]);
    }

    #[test]
    fn linear_rejects_mismatched_channels() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 4]));
        let w = g.param(Tensor::zeros(&[3, 2]));
        let b = g.param(Tensor::zeros(&[2]));
        assert!(matches!(g.linear(x, w, b), Err(Error::Shape(_))));
    }

    #[test]
    fn max_pool_ties_go_to_first() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[1, 1, 3, 2], 4.0));
        let y = g.max_pool(x, 2).unwrap();
        assert_eq!(g.value(y).data(), &[4.0, 4.0]);
        let l = g.weighted_sum(y, vec![1.0, 2.0]).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn max_pool_empty_axis() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2, 0, 3]));
        assert!(matches!(g.max_pool(x, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_xent_values() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[1, 4]));
        let l = g.softmax_xent(x, &[2]).unwrap();
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-12);

        let mut g = Graph::new();
        let x = g.param(t(&[1, 3], &[0.0, 50.0, 0.0]));
        let l = g.softmax_xent(x, &[1]).unwrap();
        assert!(g.value(l).item() < 1e-9);

        let mut g = Graph::new();
        let x = g.param(t(&[1, 2], &[f64::NAN, 0.0]));
        assert!(matches!(g.softmax_xent(x, &[0]), Err(Error::Numerics(_))));
    }

    #[test]
    fn batch_norm_train_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new();
        let x = g.constant(random(&[4, 8, 3], &mut rng));
        let gamma = g.param(Tensor::full(&[3], 1.0));
        let beta = g.param(Tensor::zeros(&[3]));
        let (y, stats) = g
            .batch_norm(x, gamma, beta, Mode::Train, (&[0.0; 3], &[1.0; 3]))
            .unwrap();
        assert!(stats.is_some());
        let d = g.value(y).data();
        for c in 0..3 {
            let vals: Vec<f64> = d.iter().skip(c).step_by(3).copied().collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[10, 10], 1.0));
        assert_eq!(g.dropout(x, 0.7, Mode::Eval, &mut rng).unwrap(), x);
        assert_eq!(g.dropout(x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert!(g.dropout(x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(g.dropout(x, -0.1, Mode::Eval, &mut rng).is_err());
        let y = g.dropout(x, 0.5, Mode::Train, &mut rng).unwrap();
        assert!(g.value(y).data().iter().all(|v| *v == 0.0 || *v == 2.0));
    }

    #[test]
    fn dropout_survivor_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[1000, 1000], 1.0));
        let y = g.dropout(x, 0.5, Mode::Train, &mut rng).unwrap();
        let kept = g.value(y).data().iter().filter(|v| **v != 0.0).count() as f64 / 1e6;
        assert!((kept - 0.5).abs() < 0.002, "{kept}");
    }

    #[test]
    fn gather_and_concat_route_gradients() {
        let mut g = Graph::new();
        let src = g.param(t(&[1, 3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let gathered = g.gather(src, vec![2, 2, 0, 1], 2, 2).unwrap();
        assert_eq!(g.value(gathered).data(), &[5.0, 6.0, 5.0, 6.0, 1.0, 2.0, 3.0, 4.0]);
        let off = g.constant(Tensor::zeros(&[1, 2, 2, 1]));
        let cat = g.concat(off, gathered).unwrap();
        assert_eq!(g.value(cat).shape(), &[1, 2, 2, 3]);
        let l = g.weighted_sum(cat, vec![1.0; 12]).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(src).unwrap(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0]);
        assert!(g.grad(off).is_none());
    }

    #[test]
    fn backward_needs_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(g.backward(x).is_err());
    }
}
