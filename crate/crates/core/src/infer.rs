//! Stage two: train a fresh classifier on the distilled basis only, and
//! evaluate classifiers on a labeled target domain.

use serde::{Deserialize, Serialize};

use crate::basis::{init_basis, BasisSet};
use crate::distill::{distill_from, inner_train, DistillAbort, DistillConfig, DistillContext, DistillTrace};
use crate::error::{DsbdError, Result};
use crate::gnn::{self, GinParams, Mode, ModelConfig};
use crate::graphdata::{DenseGraph, DomainDataset};
use crate::optim::Adam;
use crate::par::Exec;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop when the training loss moves less than this over `patience` epochs.
    pub early_stop_tol: f64,
    pub patience: usize,
    /// Train with dropout (eval mode otherwise).
    pub dropout: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            epochs: 200,
            lr: 1e-3,
            seed: 0,
            early_stop_tol: 1e-5,
            patience: 20,
            dropout: true,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.lr > 0.0) {
            return Err(DsbdError::Config("epochs must be >= 1 and lr > 0".into()));
        }
        Ok(())
    }
}

/// Result of a supervised fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: GinParams,
    /// Mean training loss before each update.
    pub losses: Vec<f64>,
}

/// Full-batch Adam on mean CE over `(graph, label)` pairs. Model init and
/// dropout masks derive from `seed` via the `init` and `dropout` streams.
pub fn fit(model: &ModelConfig, data: &[(&DenseGraph, usize)], cfg: &InferConfig, exec: Exec) -> Result<FitResult> {
    cfg.validate()?;
    model.validate()?;
    let mut params = gnn::init_params(model, rng::derive_seed(cfg.seed, "init", 0));
    let mut adam = Adam::new(cfg.lr, &params.tensors());
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mode_for = |i: usize| {
            if cfg.dropout && model.dropout > 0.0 {
                Mode::Train {
                    p: model.dropout,
                    seed: rng::derive_seed(cfg.seed, "dropout", ((epoch as u64) << 32) | i as u64),
                }
            } else {
                Mode::Eval
            }
        };
        let (loss, grads) = gnn::batch_loss_grad(exec, &params, data, mode_for)?;
        if !loss.is_finite() {
            return Err(DsbdError::NonFinite(format!("training loss at epoch {epoch}")));
        }
        losses.push(loss);
        adam.step(&mut params.tensors_mut(), &grads);
        let n = losses.len();
        if cfg.early_stop_tol > 0.0 && cfg.patience > 0 && n > cfg.patience {
            if (losses[n - 1] - losses[n - 1 - cfg.patience]).abs() < cfg.early_stop_tol {
                break;
            }
        }
    }
    Ok(FitResult { params, losses })
}

/// Train a freshly initialized classifier on the realized prototypes only.
pub fn retrain_fresh(basis: &BasisSet, cfg: &InferConfig) -> Result<FitResult> {
    basis.validate()?;
    let model = basis.config.arch.with_dims(basis.feature_dim, basis.num_classes);
    let graphs = basis.realize_all()?;
    let data: Vec<(&DenseGraph, usize)> = graphs.iter().zip(basis.labels()).collect();
    fit(&model, &data, cfg, Exec::default())
}

/// Train directly on the labeled source domain.
pub fn source_only_baseline(
    source: &DomainDataset,
    arch: &crate::gnn::ArchConfig,
    cfg: &InferConfig,
) -> Result<FitResult> {
    source.require_non_empty("source")?;
    let data = source
        .graphs
        .iter()
        .map(|g| {
            g.label()
                .map(|y| (g, y))
                .ok_or_else(|| DsbdError::Schema("source domain has unlabeled graphs".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    fit(&arch.with_dims(source.feature_dim, source.num_classes), &data, cfg, Exec::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Binary tasks with both classes present only.
    pub auc: Option<f64>,
    /// `None` for classes absent from the evaluation set.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub n_eval: usize,
}

/// Eval-mode logits and readouts for every graph, in dataset order.
pub fn predict_all(params: &GinParams, ds: &DomainDataset) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    Exec::default()
        .map(&ds.graphs, |_, g| gnn::infer_graph(params, g))
        .into_iter()
        .collect()
}

/// Rank-based AUC: probability that a random positive scores above a random
/// negative, ties counted one half.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // average ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if positive[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Report from precomputed logits and true labels.
pub fn report_from_logits(logits: &[Vec<f64>], labels: &[usize], num_classes: usize) -> EvalReport {
    let c = num_classes.max(logits.first().map_or(0, Vec::len));
    let mut confusion = vec![vec![0usize; c]; c];
    for (l, &y) in logits.iter().zip(labels) {
        confusion[y][gnn::predict(l)] += 1;
    }
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[i] as f64 / n as f64)
        })
        .collect();
    let auc = if c == 2 {
        let scores: Vec<f64> = logits.iter().map(|l| gnn::softmax(l)[1]).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        auc(&scores, &pos)
    } else {
        None
    };
    let n_eval = labels.len();
    EvalReport {
        accuracy: if n_eval == 0 { 0.0 } else { correct as f64 / n_eval as f64 },
        auc,
        per_class_accuracy,
        confusion,
        n_eval,
    }
}

/// Accuracy, AUC and confusion of `params` on a fully labeled target.
pub fn evaluate(params: &GinParams, target: &DomainDataset) -> Result<EvalReport> {
    target.require_non_empty("evaluation")?;
    let labels = target
        .graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            g.label()
                .ok_or_else(|| DsbdError::Schema(format!("evaluation graph {i} is unlabeled")))
        })
        .collect::<Result<Vec<_>>>()?;
    let logits: Vec<Vec<f64>> = predict_all(params, target)?.into_iter().map(|(l, _)| l).collect();
    Ok(report_from_logits(&logits, &labels, target.num_classes))
}

/// Per-graph readout vectors as CSV: `index,label,e0,e1,...`.
pub fn embeddings_csv(params: &GinParams, ds: &DomainDataset) -> Result<String> {
    let rows = predict_all(params, ds)?;
    let dim = rows.first().map_or(0, |(_, r)| r.len());
    let mut out = String::from("index,label");
    for j in 0..dim {
        out.push_str(&format!(",e{j}"));
    }
    out.push('\n');
    for (i, ((_, r), g)) in rows.iter().zip(&ds.graphs).enumerate() {
        out.push_str(&i.to_string());
        out.push(',');
        if let Some(y) = g.label() {
            out.push_str(&y.to_string());
        }
        for v in r {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Components removed from the full pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Drop the semantic term.
    pub no_semantic: bool,
    /// Drop the spectral term.
    pub no_spectral: bool,
    /// Drop the geometric term.
    pub no_geometric: bool,
    /// Skip fresh retraining and evaluate the final proxy.
    pub no_fresh_model: bool,
}

impl Ablation {
    pub fn none() -> Self {
        Ablation::default()
    }

    /// Parse one of `se`, `sp`, `ge`, `tg`.
    pub fn single(tag: &str) -> Result<Self> {
        let mut a = Ablation::default();
        match tag {
            "se" => a.no_semantic = true,
            "sp" => a.no_spectral = true,
            "ge" => a.no_geometric = true,
            "tg" => a.no_fresh_model = true,
            other => return Err(DsbdError::Config(format!("unknown ablation '{other}'"))),
        }
        Ok(a)
    }

    pub fn apply(&self, cfg: &DistillConfig) -> DistillConfig {
        let mut c = cfg.clone();
        if self.no_semantic {
            c.sem_weight = 0.0;
        }
        if self.no_spectral {
            c.lambda2 = 0.0;
        }
        if self.no_geometric {
            c.lambda1 = 0.0;
        }
        c
    }

    pub fn label(&self) -> String {
        let tags: Vec<&str> = [
            (self.no_semantic, "se"),
            (self.no_spectral, "sp"),
            (self.no_geometric, "ge"),
            (self.no_fresh_model, "tg"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, t)| *t)
        .collect();
        if tags.is_empty() {
            "full".into()
        } else {
            format!("wo_{}", tags.join("_"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub basis: BasisSet,
    pub trace: DistillTrace,
    /// The classifier that produced `report`.
    pub params: GinParams,
    pub train_losses: Vec<f64>,
    pub report: EvalReport,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Distill(#[from] DistillAbort),
    #[error(transparent)]
    Stage(#[from] DsbdError),
}

impl PipelineError {
    pub fn is_invalid_input(&self) -> bool {
        match self {
            PipelineError::Distill(a) => a.error.is_invalid_input(),
            PipelineError::Stage(e) => e.is_invalid_input(),
        }
    }
}

/// Distill, retrain (unless ablated) and evaluate on the labeled target.
/// Target labels are used only by the final evaluation.
pub fn run_pipeline(
    source: &DomainDataset,
    target: &DomainDataset,
    dcfg: &DistillConfig,
    icfg: &InferConfig,
    ablation: Ablation,
) -> std::result::Result<PipelineOutput, PipelineError> {
    let dcfg = ablation.apply(dcfg);
    let unlabeled = strip_labels(target);
    let ctx = DistillContext::new(source, &unlabeled, &dcfg)?;
    let basis = init_basis(source, &dcfg)?;
    let (basis, trace) = distill_from(&ctx, basis)?;
    let (params, train_losses) = if ablation.no_fresh_model {
        (final_proxy(&ctx, &basis, &trace)?, Vec::new())
    } else {
        let fit = retrain_fresh(&basis, icfg)?;
        (fit.params, fit.losses)
    };
    let report = evaluate(&params, target)?;
    Ok(PipelineOutput {
        basis,
        trace,
        params,
        train_losses,
        report,
    })
}

/// The proxy trained by the inner loop on the final basis, seeded as the
/// step after the last completed one.
pub fn final_proxy(ctx: &DistillContext<'_>, basis: &BasisSet, trace: &DistillTrace) -> Result<GinParams> {
    inner_train(ctx, basis, trace.records.len())
}

/// Copy of `ds` with every label removed.
pub fn strip_labels(ds: &DomainDataset) -> DomainDataset {
    DomainDataset {
        name: ds.name.clone(),
        graphs: ds.graphs.iter().map(|g| g.clone().with_label(None)).collect(),
        num_classes: ds.num_classes,
        feature_dim: ds.feature_dim,
    }
}
