//! Graph Isomorphism Network classifier on the tape.
//!
//! Each layer computes `H <- ReLU(MLP((1 + eps) H + A H))` with a two-layer
//! MLP, followed by dropout in training mode. The graph embedding is the mean
//! over nodes and a linear head produces class logits.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{DsbdError, Result};
use crate::graphdata::DenseGraph;
use crate::par::Exec;
use crate::tensor::Tensor;

/// Architecture hyperparameters independent of the data dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub eps_gin: f64,
}

impl Default for ArchConfig {
    /// 3 layers, hidden 32 (128 at full scale), dropout 0.2, eps fixed at 0.
    fn default() -> Self {
        ArchConfig {
            layers: 3,
            hidden: 32,
            dropout: 0.2,
            eps_gin: 0.0,
        }
    }
}

impl ArchConfig {
    pub fn with_dims(&self, feature_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            hidden: self.hidden,
            dropout: self.dropout,
            eps_gin: self.eps_gin,
            num_classes,
            feature_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub eps_gin: f64,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, num_classes: usize) -> Self {
        ArchConfig::default().with_dims(feature_dim, num_classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.hidden < 1 {
            return Err(DsbdError::Config("layers and hidden must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(DsbdError::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if self.num_classes < 1 || self.feature_dim < 1 {
            return Err(DsbdError::Config("num_classes and feature_dim must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GinLayer {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// All classifier weights. [`GinParams::tensors`] fixes a flat order that
/// optimizers and tape mirrors rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct GinParams {
    pub layers: Vec<GinLayer>,
    pub head_w: Tensor,
    pub head_b: Tensor,
    pub eps_gin: f64,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..bound))
}

pub fn init_params(cfg: &ModelConfig, seed: u64) -> GinParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = cfg.hidden;
    let layers = (0..cfg.layers)
        .map(|l| {
            let fan_in = if l == 0 { cfg.feature_dim } else { h };
            GinLayer {
                w1: glorot(&mut rng, fan_in, h),
                b1: Tensor::zeros(1, h),
                w2: glorot(&mut rng, h, h),
                b2: Tensor::zeros(1, h),
            }
        })
        .collect();
    GinParams {
        layers,
        head_w: glorot(&mut rng, h, cfg.num_classes),
        head_b: Tensor::zeros(1, cfg.num_classes),
        eps_gin: cfg.eps_gin,
    }
}

impl GinParams {
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(4 * self.layers.len() + 2);
        for l in &self.layers {
            out.extend([&l.w1, &l.b1, &l.w2, &l.b2]);
        }
        out.extend([&self.head_w, &self.head_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(4 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.extend([&mut l.w1, &mut l.b1, &mut l.w2, &mut l.b2]);
        }
        out.extend([&mut self.head_w, &mut self.head_b]);
        out
    }

    /// Rebuild from a flat tensor list in [`GinParams::tensors`] order.
    pub fn from_flat(flat: Vec<Tensor>, eps_gin: f64) -> Result<Self> {
        if flat.len() < 6 || (flat.len() - 2) % 4 != 0 {
            return Err(DsbdError::Checkpoint(format!("{} tensors do not form a GIN", flat.len())));
        }
        let mut it = flat.into_iter();
        let n_layers = (it.len() - 2) / 4;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let mut next = || it.next().expect("counted");
            layers.push(GinLayer {
                w1: next(),
                b1: next(),
                w2: next(),
                b2: next(),
            });
        }
        let head_w = it.next().expect("counted");
        let head_b = it.next().expect("counted");
        let p = GinParams {
            layers,
            head_w,
            head_b,
            eps_gin,
        };
        p.check_shapes()?;
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn config_shape(&self) -> (usize, usize, usize, usize) {
        let d = self.layers[0].w1.rows();
        let h = self.layers[0].w1.cols();
        (self.layers.len(), d, h, self.head_w.cols())
    }

    fn check_shapes(&self) -> Result<()> {
        let (_, _, h, c) = self.config_shape();
        let bad = |what: &str| Err(DsbdError::Checkpoint(format!("inconsistent shape: {what}")));
        for (i, l) in self.layers.iter().enumerate() {
            if i > 0 && l.w1.shape() != [h, h] {
                return bad("w1");
            }
            if l.w1.cols() != h || l.b1.shape() != [1, h] || l.w2.shape() != [h, h] || l.b2.shape() != [1, h] {
                return bad("layer");
            }
        }
        if self.head_w.shape() != [h, c] || self.head_b.shape() != [1, c] {
            return bad("head");
        }
        if !self.tensors().iter().all(|t| t.is_finite()) {
            return bad("non-finite weight");
        }
        Ok(())
    }

    pub fn to_named(&self) -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::new();
        for (i, l) in self.layers.iter().enumerate() {
            m.insert(format!("layer{i}.w1"), l.w1.clone());
            m.insert(format!("layer{i}.b1"), l.b1.clone());
            m.insert(format!("layer{i}.w2"), l.w2.clone());
            m.insert(format!("layer{i}.b2"), l.b2.clone());
        }
        m.insert("head.w".into(), self.head_w.clone());
        m.insert("head.b".into(), self.head_b.clone());
        m.insert("eps_gin".into(), Tensor::scalar(self.eps_gin));
        m
    }

    pub fn from_named(mut m: BTreeMap<String, Tensor>) -> Result<Self> {
        let mut take = |k: &str| {
            m.remove(k)
                .ok_or_else(|| DsbdError::Checkpoint(format!("missing tensor {k}")))
        };
        let eps_gin = take("eps_gin")?.item();
        let mut flat = Vec::new();
        let mut i = 0;
        while let Ok(w1) = take(&format!("layer{i}.w1")) {
            flat.push(w1);
            flat.push(take(&format!("layer{i}.b1"))?);
            flat.push(take(&format!("layer{i}.w2"))?);
            flat.push(take(&format!("layer{i}.b2"))?);
            i += 1;
        }
        flat.push(take("head.w")?);
        flat.push(take("head.b")?);
        if let Some(k) = m.keys().next() {
            return Err(DsbdError::Checkpoint(format!("unexpected tensor {k}")));
        }
        Self::from_flat(flat, eps_gin)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_named()).expect("tensors serialize");
        std::fs::write(path, text + "\n").map_err(|e| DsbdError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DsbdError::io(path, e))?;
        let m: BTreeMap<String, Tensor> = serde_json::from_str(&text)
            .map_err(|e| DsbdError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_named(m)
    }

    /// Put every weight on `tape`, as leaves or constants.
    pub fn attach<'t>(&self, tape: &'t Tape, trainable: bool) -> ParamVars<'t> {
        let vars = self
            .tensors()
            .into_iter()
            .map(|t| {
                if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        ParamVars {
            vars,
            eps_gin: self.eps_gin,
        }
    }
}

/// Tape mirror of [`GinParams`], same flat order.
#[derive(Debug, Clone)]
pub struct ParamVars<'t> {
    pub vars: Vec<Var<'t>>,
    pub eps_gin: f64,
}

impl<'t> ParamVars<'t> {
    pub fn num_layers(&self) -> usize {
        (self.vars.len() - 2) / 4
    }

    fn layer(&self, l: usize) -> [Var<'t>; 4] {
        [self.vars[4 * l], self.vars[4 * l + 1], self.vars[4 * l + 2], self.vars[4 * l + 3]]
    }

    fn head(&self) -> (Var<'t>, Var<'t>) {
        let n = self.vars.len();
        (self.vars[n - 2], self.vars[n - 1])
    }

    /// Snapshot the current values as plain params.
    /// Values may be non-finite if training diverged; see [`GinParams::is_finite`].
    pub fn values(&self) -> GinParams {
        let t = |v: &Var<'t>| (*v.value()).clone();
        let layers = (0..self.num_layers())
            .map(|l| {
                let [w1, b1, w2, b2] = self.layer(l);
                GinLayer {
                    w1: t(&w1),
                    b1: t(&b1),
                    w2: t(&w2),
                    b2: t(&b2),
                }
            })
            .collect();
        let (hw, hb) = self.head();
        GinParams {
            layers,
            head_w: t(&hw),
            head_b: t(&hb),
            eps_gin: self.eps_gin,
        }
    }
}

/// Dropout configuration for one forward pass.
#[derive(Debug, Clone, Copy)]
pub enum Mode {
    Eval,
    /// Training with inverted dropout at rate `p`, masks drawn from `seed`.
    Train { p: f64, seed: u64 },
}

pub struct ForwardOut<'t> {
    pub logits: Var<'t>,
    pub readout: Var<'t>,
}

pub fn forward<'t>(p: &ParamVars<'t>, a: Var<'t>, x: Var<'t>, mode: Mode) -> Result<ForwardOut<'t>> {
    let tape = a.tape();
    let [n, n2] = a.shape();
    if n != n2 || x.shape()[0] != n {
        return Err(DsbdError::dim("gin forward", format!("adjacency {:?}, features {:?}", a.shape(), x.shape())));
    }
    let w1_rows = p.vars[0].shape()[0];
    if x.shape()[1] != w1_rows {
        return Err(DsbdError::dim(
            "gin forward",
            format!("feature_dim {} but model expects {w1_rows}", x.shape()[1]),
        ));
    }
    let mut rng = match mode {
        Mode::Train { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Mode::Eval => None,
    };
    let mut h = x;
    for l in 0..p.num_layers() {
        let [w1, b1, w2, b2] = p.layer(l);
        let agg = a.matmul(h)?;
        let z = if p.eps_gin == 0.0 {
            h.add(agg)?
        } else {
            h.scale(1.0 + p.eps_gin).add(agg)?
        };
        let m = z.matmul(w1)?.add_row(b1)?.relu().matmul(w2)?.add_row(b2)?;
        h = m.relu();
        if let (Mode::Train { p: rate, .. }, Some(rng)) = (mode, rng.as_mut()) {
            if rate > 0.0 {
                let [r, c] = h.shape();
                let keep = 1.0 / (1.0 - rate);
                let mask = Tensor::from_fn(r, c, |_, _| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                });
                h = h.mul(tape.constant(mask))?;
            }
        }
    }
    let readout = h.col_sums().scale(1.0 / n as f64);
    let (hw, hb) = p.head();
    let logits = readout.matmul(hw)?.add(hb)?;
    Ok(ForwardOut { logits, readout })
}

/// `-log softmax(logits)[label]` with max subtraction.
pub fn cross_entropy<'t>(logits: Var<'t>, label: usize) -> Result<Var<'t>> {
    let [r, c] = logits.shape();
    if r != 1 {
        return Err(DsbdError::dim("cross_entropy", "logits must be a row"));
    }
    if label >= c {
        return Err(DsbdError::Contract(format!("label {label} out of range for {c} classes")));
    }
    let vals = logits.value();
    let m = vals.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.add_scalar(-m).exp().sum().ln()?.add_scalar(m);
    let mut onehot = Tensor::zeros(1, c);
    onehot.set(0, label, 1.0);
    let picked = logits.mul(logits.tape().constant(onehot))?.sum();
    lse.sub(picked)
}

/// Argmax with ties going to the lowest index.
pub fn predict(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Eval-mode logits and readout for one graph.
pub fn infer_graph(params: &GinParams, g: &DenseGraph) -> Result<(Vec<f64>, Vec<f64>)> {
    let tape = Tape::new();
    let p = params.attach(&tape, false);
    let out = forward(
        &p,
        tape.constant(g.adjacency().clone()),
        tape.constant(g.features().clone()),
        Mode::Eval,
    )?;
    let logits = out.logits.value().data().to_vec();
    let readout = out.readout.value().data().to_vec();
    Ok((logits, readout))
}

/// Loss and parameter gradients of CE on one labeled graph.
pub fn loss_and_grad(params: &GinParams, g: &DenseGraph, label: usize, mode: Mode) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let p = params.attach(&tape, true);
    let out = forward(
        &p,
        tape.constant(g.adjacency().clone()),
        tape.constant(g.features().clone()),
        mode,
    )?;
    let loss = cross_entropy(out.logits, label)?;
    let grads = tape.backward(loss)?;
    Ok((loss.item(), p.vars.iter().map(|v| grads.wrt(*v)).collect()))
}

/// Mean CE and its gradient over a batch of `(graph, label)` pairs. Each
/// graph runs on its own tape; per-graph results are summed in index order.
/// `mode_for(i)` chooses the dropout mode for item `i`.
pub fn batch_loss_grad<G, F>(
    exec: Exec,
    params: &GinParams,
    batch: &[(G, usize)],
    mode_for: F,
) -> Result<(f64, Vec<Tensor>)>
where
    G: std::borrow::Borrow<DenseGraph> + Sync,
    F: Fn(usize) -> Mode + Sync + Send,
{
    if batch.is_empty() {
        return Err(DsbdError::EmptyDataset("empty training batch".into()));
    }
    let parts = exec.map(batch, |i, (g, y)| loss_and_grad(params, g.borrow(), *y, mode_for(i)));
    let mut total = 0.0;
    let mut acc: Option<Vec<Tensor>> = None;
    for part in parts {
        let (l, g) = part?;
        total += l;
        match acc.as_mut() {
            None => acc = Some(g),
            Some(acc) => {
                for (a, gi) in acc.iter_mut().zip(&g) {
                    a.add_assign(gi);
                }
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    let grads = acc
        .expect("non-empty batch")
        .into_iter()
        .map(|g| g.scale(inv))
        .collect();
    Ok((total * inv, grads))
}
