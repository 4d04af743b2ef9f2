//! Bi-level distillation of the structural basis.
//!
//! Every outer step trains a freshly seeded proxy GIN on the realized
//! prototypes for `t_inner` gradient-descent steps, evaluates it on a source
//! batch (semantic term), and adds the moment-matching and Dirichlet-energy
//! terms against the target domain. The combined objective is differentiated
//! back to the prototype parameters, clipped, and applied with Adam.
//!
//! In `Unrolled` mode the whole inner trajectory is recorded on one tape, so
//! the semantic gradient flows through every inner update. `FirstOrder` only
//! records the last inner update.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::basis::{init_basis, BasisSet, RealizedVars};
use crate::error::{DsbdError, Result};
use crate::gnn::{self, ArchConfig, GinParams, Mode, ModelConfig, ParamVars};
use crate::graphdata::{DenseGraph, DomainDataset};
use crate::optim::{clip_global_norm, Adam};
use crate::par::Exec;
use crate::rng;
use crate::structstats::{
    dirichlet_energy_var, gamma_from_means, graph_energy, graph_moments, moments_var,
    MomentVector, MomentWeights,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaMode {
    Unrolled,
    FirstOrder,
}

impl std::str::FromStr for MetaMode {
    type Err = DsbdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unrolled" => Ok(MetaMode::Unrolled),
            "first_order" | "first-order" => Ok(MetaMode::FirstOrder),
            other => Err(DsbdError::Config(format!("unknown meta mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub k: usize,
    /// Prototype node count; `None` uses the rounded median source size.
    pub n_syn: Option<usize>,
    pub arch: ArchConfig,
    pub t_inner: usize,
    pub lr_inner: f64,
    pub lr_outer: f64,
    pub grad_clip: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Weight of the semantic term; 0 removes it.
    pub sem_weight: f64,
    pub outer_steps: usize,
    pub batch_source: usize,
    pub batch_target: usize,
    pub meta_mode: MetaMode,
    /// Stop early when the total loss changes by less than this relative
    /// amount over `convergence_window` steps. 0 disables.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    /// Explicit moment weights; `None` derives them from the target.
    pub gamma: Option<MomentWeights>,
    pub seed: u64,
}

impl Default for DistillConfig {
    /// Desk-scale configuration: unrolled, `T = 10`, hidden 32.
    fn default() -> Self {
        DistillConfig {
            k: 30,
            n_syn: None,
            arch: ArchConfig::default(),
            t_inner: 10,
            lr_inner: 0.1,
            lr_outer: 0.01,
            grad_clip: 1.0,
            lambda1: 0.7,
            lambda2: 0.5,
            sem_weight: 1.0,
            outer_steps: 300,
            batch_source: 32,
            batch_target: 64,
            meta_mode: MetaMode::Unrolled,
            convergence_tol: 1e-4,
            convergence_window: 20,
            gamma: None,
            seed: 0,
        }
    }
}

impl DistillConfig {
    /// Full-scale settings: `T = 20`, hidden 128, inner lr 1e-3, outer lr 1e-4.
    pub fn full_scale() -> Self {
        DistillConfig {
            arch: ArchConfig {
                hidden: 128,
                ..ArchConfig::default()
            },
            t_inner: 20,
            lr_inner: 1e-3,
            lr_outer: 1e-4,
            ..DistillConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DsbdError::Config(m));
        if !(self.lr_inner > 0.0 && self.lr_outer > 0.0 && self.grad_clip > 0.0) {
            return bad("learning rates and grad_clip must be positive".into());
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0 && self.sem_weight >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        if self.batch_source == 0 || self.batch_target == 0 {
            return bad("batch sizes must be positive".into());
        }
        if let Some(g) = &self.gamma {
            g.validate()?;
        }
        Ok(())
    }
}

/// Target statistics needed by the alignment terms, computed once.
#[derive(Debug, Clone)]
pub struct TargetProfile {
    pub moments: Vec<MomentVector>,
    pub energies: Vec<f64>,
    pub mean_moments: MomentVector,
    pub mean_energy: f64,
}

impl TargetProfile {
    pub fn new(target: &DomainDataset) -> Result<Self> {
        target.require_non_empty("target")?;
        let exec = Exec::default();
        let moments = exec
            .map(&target.graphs, |_, g| graph_moments(g))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let energies = exec
            .map(&target.graphs, |_, g| graph_energy(g))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mean_energy = energies.iter().sum::<f64>() / energies.len() as f64;
        Ok(TargetProfile {
            mean_moments: MomentVector::mean_of(&moments),
            moments,
            energies,
            mean_energy,
        })
    }

    pub fn default_gamma(&self) -> MomentWeights {
        gamma_from_means(&self.mean_moments)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub l_sem: f64,
    pub l_geo: f64,
    pub l_spec: f64,
    pub total: f64,
    /// `|mean basis moment - mean target moment|` per moment.
    pub moment_gap: [f64; 4],
    /// `|mean basis energy - mean target energy|`.
    pub energy_gap: f64,
    /// Global gradient norm after clipping.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillTrace {
    pub gamma: Option<MomentWeights>,
    pub records: Vec<TraceRecord>,
}

impl DistillTrace {
    pub const CSV_HEADER: &'static str = "step,L_sem,L_geo,L_spec,total,moment_gap_deg_mean,moment_gap_deg_std,moment_gap_density,moment_gap_tri,energy_gap";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let [a, b, c, d] = r.moment_gap;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.step, r.l_sem, r.l_geo, r.l_spec, r.total, a, b, c, d, r.energy_gap
            ));
        }
        out
    }

    /// `sqrt(sum_m gamma_m gap_m^2)` for one record.
    pub fn weighted_moment_gap(&self, rec: &TraceRecord) -> f64 {
        let gamma = self.gamma.unwrap_or(MomentWeights::uniform());
        gamma
            .gamma
            .iter()
            .zip(rec.moment_gap)
            .map(|(g, d)| g * d * d)
            .sum::<f64>()
            .sqrt()
    }
}

/// Loss terms and basis gradients for one outer step.
#[derive(Debug, Clone)]
pub struct OuterEval {
    pub l_sem: f64,
    pub l_geo: f64,
    pub l_spec: f64,
    pub total: f64,
    /// Gradients in [`BasisSet::tensors`] order.
    pub grads: Vec<Tensor>,
    pub basis_moments: Vec<MomentVector>,
    pub basis_energies: Vec<f64>,
}

/// Data and settings shared by every outer step.
pub struct DistillContext<'a> {
    pub source: &'a DomainDataset,
    pub target: TargetProfile,
    pub gamma: MomentWeights,
    pub model: ModelConfig,
    pub cfg: DistillConfig,
    pub exec: Exec,
}

impl<'a> DistillContext<'a> {
    pub fn new(source: &'a DomainDataset, target: &DomainDataset, cfg: &DistillConfig) -> Result<Self> {
        cfg.validate()?;
        source.require_non_empty("source")?;
        if !source.is_fully_labeled() {
            return Err(DsbdError::Schema("source domain has unlabeled graphs".into()));
        }
        if target.feature_dim != source.feature_dim && !target.is_empty() {
            return Err(DsbdError::Schema(format!(
                "source feature_dim {} differs from target {}",
                source.feature_dim, target.feature_dim
            )));
        }
        let profile = TargetProfile::new(target)?;
        let gamma = cfg.gamma.unwrap_or_else(|| profile.default_gamma());
        let model = cfg.arch.with_dims(source.feature_dim, source.num_classes);
        model.validate()?;
        Ok(DistillContext {
            source,
            target: profile,
            gamma,
            model,
            cfg: cfg.clone(),
            exec: Exec::default(),
        })
    }

    pub fn proxy_seed(&self, step: usize) -> u64 {
        rng::derive_seed(self.cfg.seed, "inner", step as u64)
    }

    fn dropout_mode(&self, step: usize, inner: usize, k: usize) -> Mode {
        if self.model.dropout == 0.0 {
            return Mode::Eval;
        }
        let idx = ((step as u64) << 32) | ((inner as u64) << 16) | k as u64;
        Mode::Train {
            p: self.model.dropout,
            seed: rng::derive_seed(self.cfg.seed, "dropout", idx),
        }
    }

    /// Source and target batch indices for `step`.
    pub fn batches(&self, step: usize) -> (Vec<usize>, Vec<usize>) {
        let mut r = rng::stream(self.cfg.seed, "batch", step as u64);
        let pick = |r: &mut rng::StageRng, n: usize, b: usize| -> Vec<usize> {
            if b >= n {
                (0..n).collect()
            } else {
                let mut v = sample(r, n, b).into_vec();
                v.sort_unstable();
                v
            }
        };
        let s = pick(&mut r, self.source.len(), self.cfg.batch_source);
        let t = pick(&mut r, self.target.moments.len(), self.cfg.batch_target);
        (s, t)
    }
}

/// Mean CE of `proxy` over labeled graphs and its gradient w.r.t. the proxy.
pub fn sem_loss(exec: Exec, proxy: &GinParams, batch: &[&DenseGraph]) -> Result<(f64, Vec<Tensor>)> {
    let labeled = batch
        .iter()
        .map(|g| {
            g.label()
                .map(|y| (*g, y))
                .ok_or_else(|| DsbdError::Schema("semantic batch contains an unlabeled graph".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    gnn::batch_loss_grad(exec, proxy, &labeled, |_| Mode::Eval)
}

/// Mean over target graphs and prototypes of the weighted squared moment
/// gap. Uses `mean_T (p - c_T)^2 = (p - mean c)^2 + var c` per moment.
pub fn geo_loss_var<'t>(
    tape: &'t Tape,
    prototype_moments: &[[Var<'t>; 4]],
    target_batch: &[MomentVector],
    gamma: &MomentWeights,
) -> Result<Var<'t>> {
    if target_batch.is_empty() || prototype_moments.is_empty() {
        return Err(DsbdError::EmptyDataset("geo loss needs prototypes and targets".into()));
    }
    let nb = target_batch.len() as f64;
    let mut mu = [0.0; 4];
    for m in target_batch {
        for (a, v) in mu.iter_mut().zip(m.to_array()) {
            *a += v / nb;
        }
    }
    let mut var = [0.0; 4];
    for m in target_batch {
        for ((a, v), u) in var.iter_mut().zip(m.to_array()).zip(mu) {
            *a += (v - u) * (v - u) / nb;
        }
    }
    let k = prototype_moments.len() as f64;
    let mut total = tape.scalar(0.0);
    for pm in prototype_moments {
        for m in 0..4 {
            if gamma.gamma[m] == 0.0 {
                continue;
            }
            let term = pm[m].add_scalar(-mu[m]).square().add_scalar(var[m]);
            total = total.add(term.scale(gamma.gamma[m] / k))?;
        }
    }
    Ok(total)
}

/// `(mean_k energy_k - target_mean)^2`.
pub fn spec_loss_var<'t>(energies: &[Var<'t>], target_mean: f64) -> Result<Var<'t>> {
    let first = energies
        .first()
        .ok_or_else(|| DsbdError::EmptyDataset("spec loss needs prototypes".into()))?;
    let mut sum = *first;
    for e in &energies[1..] {
        sum = sum.add(*e)?;
    }
    Ok(sum.scale(1.0 / energies.len() as f64).add_scalar(-target_mean).square())
}

/// Plain evaluation of the geometric term.
pub fn geo_loss(basis: &BasisSet, target_batch: &[MomentVector], gamma: &MomentWeights) -> Result<f64> {
    let tape = Tape::new();
    let pm = basis
        .prototypes
        .iter()
        .map(|p| Ok(moments_var(p.realize_on(&tape, false)?.adjacency)?.as_array()))
        .collect::<Result<Vec<_>>>()?;
    Ok(geo_loss_var(&tape, &pm, target_batch, gamma)?.item())
}

/// Plain evaluation of the spectral term.
pub fn spec_loss(basis: &BasisSet, target_mean_energy: f64) -> Result<f64> {
    let tape = Tape::new();
    let es = basis
        .prototypes
        .iter()
        .map(|p| {
            let r = p.realize_on(&tape, false)?;
            dirichlet_energy_var(r.adjacency, r.features)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(spec_loss_var(&es, target_mean_energy)?.item())
}

/// Mean CE of `params` over the realized prototypes, on the tape.
fn inner_loss<'t>(
    ctx: &DistillContext<'_>,
    params: &ParamVars<'t>,
    protos: &[RealizedVars<'t>],
    labels: &[usize],
    step: usize,
    inner: usize,
) -> Result<Var<'t>> {
    let tape = protos[0].adjacency.tape();
    let mut total = tape.scalar(0.0);
    for (k, (r, &y)) in protos.iter().zip(labels).enumerate() {
        let out = gnn::forward(params, r.adjacency, r.features, ctx.dropout_mode(step, inner, k))?;
        total = total.add(gnn::cross_entropy(out.logits, y)?)?;
    }
    Ok(total.scale(1.0 / protos.len() as f64))
}

fn gd_update<'t>(params: &ParamVars<'t>, grads: &[Var<'t>], lr: f64) -> Result<ParamVars<'t>> {
    let vars = params
        .vars
        .iter()
        .zip(grads)
        .map(|(p, g)| p.sub(g.scale(lr)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamVars {
        vars,
        eps_gin: params.eps_gin,
    })
}

fn check_finite(v: Var<'_>, what: &str, step: usize) -> Result<()> {
    if v.item().is_finite() {
        Ok(())
    } else {
        Err(DsbdError::NonFinite(format!("{what} at outer step {step}")))
    }
}

/// Run the inner loop on `tape`. Returns the final proxy as tape vars, which
/// depend on the prototype vars according to the meta mode.
fn inner_on_tape<'t>(
    ctx: &DistillContext<'_>,
    tape: &'t Tape,
    basis: &BasisSet,
    protos: &[RealizedVars<'t>],
    step: usize,
) -> Result<ParamVars<'t>> {
    let labels = basis.labels();
    let init = gnn::init_params(&ctx.model, ctx.proxy_seed(step));
    let t_inner = ctx.cfg.t_inner;
    let lr = ctx.cfg.lr_inner;
    let (mut params, start) = match ctx.cfg.meta_mode {
        MetaMode::Unrolled => (init.attach(tape, true), 0),
        MetaMode::FirstOrder => {
            if t_inner == 0 {
                return Ok(init.attach(tape, true));
            }
            // all but the last update run detached from the basis
            let graphs = basis.realize_all()?;
            let mut p = init;
            for t in 0..t_inner - 1 {
                let batch: Vec<_> = graphs.iter().zip(&labels).map(|(g, &y)| (g, y)).collect();
                let (loss, grads) =
                    gnn::batch_loss_grad(ctx.exec, &p, &batch, |k| ctx.dropout_mode(step, t, k))?;
                if !loss.is_finite() {
                    return Err(DsbdError::NonFinite(format!("inner loss at outer step {step}")));
                }
                for (w, g) in p.tensors_mut().into_iter().zip(&grads) {
                    w.scaled_add_assign(-lr, g);
                }
            }
            (p.attach(tape, true), t_inner - 1)
        }
    };
    for t in start..t_inner {
        let loss = inner_loss(ctx, &params, protos, &labels, step, t)?;
        check_finite(loss, "inner loss", step)?;
        let grads = tape.grad(loss, &params.vars)?;
        params = gd_update(&params, &grads, lr)?;
    }
    Ok(params)
}

/// Proxy parameters after the inner loop at `step`, as plain values.
pub fn inner_train(ctx: &DistillContext<'_>, basis: &BasisSet, step: usize) -> Result<GinParams> {
    let tape = Tape::new();
    let protos = basis
        .prototypes
        .iter()
        .map(|p| p.realize_on(&tape, false))
        .collect::<Result<Vec<_>>>()?;
    let p = inner_on_tape(ctx, &tape, basis, &protos, step)?.values();
    if !p.is_finite() {
        return Err(DsbdError::NonFinite(format!("proxy weights at outer step {step}")));
    }
    Ok(p)
}

/// Inner-loss trajectory of the proxy at `step` (one value per inner step,
/// plus the loss after the last update).
pub fn inner_loss_curve(ctx: &DistillContext<'_>, basis: &BasisSet, step: usize) -> Result<Vec<f64>> {
    let graphs = basis.realize_all()?;
    let labels = basis.labels();
    let batch: Vec<_> = graphs.iter().zip(&labels).map(|(g, &y)| (g, y)).collect();
    let mut p = gnn::init_params(&ctx.model, ctx.proxy_seed(step));
    let mut curve = Vec::with_capacity(ctx.cfg.t_inner + 1);
    for t in 0..=ctx.cfg.t_inner {
        let (loss, grads) = gnn::batch_loss_grad(ctx.exec, &p, &batch, |k| ctx.dropout_mode(step, t, k))?;
        curve.push(loss);
        if t < ctx.cfg.t_inner {
            for (w, g) in p.tensors_mut().into_iter().zip(&grads) {
                w.scaled_add_assign(-ctx.cfg.lr_inner, g);
            }
        }
    }
    Ok(curve)
}

/// Evaluate the outer objective and its gradient w.r.t. every basis
/// parameter at `step` (which fixes proxy seed, dropout masks and batches).
pub fn evaluate_outer(ctx: &DistillContext<'_>, basis: &BasisSet, step: usize) -> Result<OuterEval> {
    let tape = Tape::new();
    let protos = basis
        .prototypes
        .iter()
        .map(|p| p.realize_on(&tape, true))
        .collect::<Result<Vec<_>>>()?;
    let (src_idx, tgt_idx) = ctx.batches(step);

    let mut seeds: Vec<(Var<'_>, Tensor)> = Vec::new();
    let mut l_sem = 0.0;
    if ctx.cfg.sem_weight > 0.0 {
        let proxy = inner_on_tape(ctx, &tape, basis, &protos, step)?;
        let proxy_values = proxy.values();
        if !proxy_values.is_finite() {
            return Err(DsbdError::NonFinite(format!("proxy weights at outer step {step}")));
        }
        let batch: Vec<&DenseGraph> = src_idx.iter().map(|&i| &ctx.source.graphs[i]).collect();
        let (loss, grads) = sem_loss(ctx.exec, &proxy_values, &batch)?;
        if !loss.is_finite() {
            return Err(DsbdError::NonFinite(format!("semantic loss at outer step {step}")));
        }
        l_sem = loss;
        let w = ctx.cfg.sem_weight;
        seeds.extend(proxy.vars.iter().zip(grads).map(|(v, g)| (*v, g.scale(w))));
    }

    let pm = protos
        .iter()
        .map(|r| moments_var(r.adjacency))
        .collect::<Result<Vec<_>>>()?;
    let energies = protos
        .iter()
        .map(|r| dirichlet_energy_var(r.adjacency, r.features))
        .collect::<Result<Vec<_>>>()?;
    let tgt_batch: Vec<MomentVector> = tgt_idx.iter().map(|&i| ctx.target.moments[i]).collect();
    let pm_arrays: Vec<[Var<'_>; 4]> = pm.iter().map(|m| m.as_array()).collect();
    let geo = geo_loss_var(&tape, &pm_arrays, &tgt_batch, &ctx.gamma)?;
    let spec = spec_loss_var(&energies, ctx.target.mean_energy)?;
    let aux = geo.scale(ctx.cfg.lambda1).add(spec.scale(ctx.cfg.lambda2))?;
    seeds.push((aux, Tensor::scalar(1.0)));

    let l_geo = geo.item();
    let l_spec = spec.item();
    let total = ctx.cfg.sem_weight * l_sem + ctx.cfg.lambda1 * l_geo + ctx.cfg.lambda2 * l_spec;
    if !total.is_finite() {
        return Err(DsbdError::NonFinite(format!("outer loss at step {step}")));
    }
    let g = tape.backward_seeded(&seeds)?;
    let grads = protos
        .iter()
        .flat_map(|r| [g.wrt(r.adj_logits), g.wrt(r.feat_params)])
        .collect();
    Ok(OuterEval {
        l_sem,
        l_geo,
        l_spec,
        total,
        grads,
        basis_moments: pm.iter().map(|m| m.values()).collect(),
        basis_energies: energies.iter().map(|e| e.item()).collect(),
    })
}

/// Stage-one failure that still carries the trace up to the failing step.
#[derive(Debug)]
pub struct DistillAbort {
    pub error: DsbdError,
    pub trace: DistillTrace,
}

impl std::fmt::Display for DistillAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} outer steps", self.error, self.trace.records.len())
    }
}

impl std::error::Error for DistillAbort {}

fn record(ctx: &DistillContext<'_>, step: usize, ev: &OuterEval, grad_norm: f64) -> TraceRecord {
    let mean = MomentVector::mean_of(&ev.basis_moments).to_array();
    let tgt = ctx.target.mean_moments.to_array();
    let mean_e = ev.basis_energies.iter().sum::<f64>() / ev.basis_energies.len() as f64;
    TraceRecord {
        step,
        l_sem: ev.l_sem,
        l_geo: ev.l_geo,
        l_spec: ev.l_spec,
        total: ev.total,
        moment_gap: std::array::from_fn(|m| (mean[m] - tgt[m]).abs()),
        energy_gap: (mean_e - ctx.target.mean_energy).abs(),
        grad_norm,
    }
}

/// Summary of the current basis against the target (no gradients).
pub fn alignment_snapshot(ctx: &DistillContext<'_>, basis: &BasisSet) -> Result<TraceRecord> {
    let graphs = basis.realize_all()?;
    let moments = graphs.iter().map(graph_moments).collect::<Result<Vec<_>>>()?;
    let energies = graphs.iter().map(graph_energy).collect::<Result<Vec<_>>>()?;
    let ev = OuterEval {
        l_sem: 0.0,
        l_geo: 0.0,
        l_spec: 0.0,
        total: 0.0,
        grads: Vec::new(),
        basis_moments: moments,
        basis_energies: energies,
    };
    Ok(record(ctx, 0, &ev, 0.0))
}

/// Run stage one from an initial basis.
pub fn distill_from(ctx: &DistillContext<'_>, mut basis: BasisSet) -> std::result::Result<(BasisSet, DistillTrace), DistillAbort> {
    let mut trace = DistillTrace {
        gamma: Some(ctx.gamma),
        records: Vec::new(),
    };
    let mut adam = Adam::new(ctx.cfg.lr_outer, &basis.tensors());
    let window = ctx.cfg.convergence_window;
    for step in 0..ctx.cfg.outer_steps {
        let ev = match evaluate_outer(ctx, &basis, step) {
            Ok(ev) => ev,
            Err(error) => return Err(DistillAbort { error, trace }),
        };
        let mut grads = ev.grads.clone();
        clip_global_norm(&mut grads, ctx.cfg.grad_clip);
        let norm = crate::optim::global_norm(&grads);
        adam.step(&mut basis.tensors_mut(), &grads);
        trace.records.push(record(ctx, step, &ev, norm));
        if ctx.cfg.convergence_tol > 0.0 && window > 0 && trace.records.len() > window {
            let now = ev.total;
            let then = trace.records[trace.records.len() - 1 - window].total;
            if ((now - then) / then.abs().max(1e-12)).abs() < ctx.cfg.convergence_tol {
                break;
            }
        }
    }
    Ok((basis, trace))
}

/// Initialize a basis from the source and distill it against the target.
pub fn distill(
    source: &DomainDataset,
    target: &DomainDataset,
    cfg: &DistillConfig,
) -> std::result::Result<(BasisSet, DistillTrace), DistillAbort> {
    let wrap = |error| DistillAbort {
        error,
        trace: DistillTrace::default(),
    };
    let ctx = DistillContext::new(source, target, cfg).map_err(wrap)?;
    let basis = init_basis(source, cfg).map_err(wrap)?;
    distill_from(&ctx, basis)
}
