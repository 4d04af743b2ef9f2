use std::path::Path;

use anyhow::Context;
use dsbd_core::basis::{init_basis, BasisSet};
use dsbd_core::distill::{distill_from, DistillConfig, DistillContext, DistillTrace};
use dsbd_core::gnn::GinParams;
use dsbd_core::graphdata::{
    dataset_stats, generate_spurious_motif, load_jsonl, save_jsonl, split_by_density, DensityCriterion,
    DomainDataset, SplitSpec,
};
use dsbd_core::infer::{
    embeddings_csv, evaluate as eval_report, final_proxy, retrain_fresh, run_pipeline, source_only_baseline,
    strip_labels, Ablation, EvalReport, InferConfig, PipelineOutput,
};
use dsbd_core::rng::derive_seed;
use dsbd_core::structstats::{graph_energy, graph_moments, MomentVector};
use serde::Serialize;
use serde_json::json;

use crate::config::{require_file, ExperimentArgs, ExperimentConfig};
use crate::output::{ensure_dir, print_json, write_json, write_text, CsvLog, Summary};
use crate::{AblationFlag, SweepGrid, UsageError};

pub fn generate(out: &Path, n: usize, bias: f64, target_bias: f64, seed: u64) -> anyhow::Result<()> {
    ensure_dir(out)?;
    let source = generate_spurious_motif(n, bias, derive_seed(seed, "data", 0))?;
    let target = generate_spurious_motif(n, target_bias, derive_seed(seed, "data", 1))?;
    save_jsonl(&source, &out.join("source.jsonl"))?;
    save_jsonl(&target, &out.join("target.jsonl"))?;
    Ok(())
}

pub fn split(input: &Path, out: &Path, criterion: DensityCriterion, bins: usize) -> anyhow::Result<()> {
    let ds = load_jsonl(require_file(Some(input), "--input")?)?;
    let spec = SplitSpec {
        criterion,
        num_bins: bins,
    };
    let parts = split_by_density(&ds, &spec)?;
    ensure_dir(out)?;
    let mut summary = Vec::new();
    for part in &parts {
        save_jsonl(part, &out.join(format!("{}.jsonl", part.name)))?;
        let stat: Vec<f64> = part.graphs.iter().map(|g| criterion.statistic(g)).collect();
        summary.push(json!({
            "name": part.name,
            "n_graphs": part.len(),
            "mean_statistic": stat.iter().sum::<f64>() / stat.len().max(1) as f64,
        }));
    }
    write_json(&out.join("split.json"), &json!({ "criterion": criterion, "bins": summary }))
}

#[derive(Serialize)]
struct GraphStats {
    index: usize,
    n: usize,
    label: Option<usize>,
    moments: MomentVector,
    energy: f64,
}

pub fn stats(input: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let ds = load_jsonl(require_file(Some(input), "--input")?)?;
    let summary = dataset_stats(&ds)?;
    let graphs = ds
        .graphs
        .iter()
        .enumerate()
        .map(|(index, g)| {
            Ok(GraphStats {
                index,
                n: g.n(),
                label: g.label(),
                moments: graph_moments(g).with_context(|| format!("graph {index}"))?,
                energy: graph_energy(g)?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let moments: Vec<MomentVector> = graphs.iter().map(|g| g.moments).collect();
    let report = json!({
        "dataset": ds.name,
        "summary": summary,
        "mean_moments": MomentVector::mean_of(&moments),
        "mean_energy": graphs.iter().map(|g| g.energy).sum::<f64>() / graphs.len() as f64,
        "graphs": graphs,
    });
    match out {
        Some(path) => write_json(path, &report),
        None => print_json(&report),
    }
}

fn ablation_of(flag: Option<AblationFlag>) -> anyhow::Result<Ablation> {
    Ok(match flag {
        Some(f) => Ablation::single(f.tag())?,
        None => Ablation::none(),
    })
}

struct Domains {
    source: DomainDataset,
    target: DomainDataset,
}

fn load_domains(cfg: &ExperimentConfig) -> anyhow::Result<Domains> {
    let source = load_jsonl(cfg.require_source()?)?;
    let target = load_jsonl(cfg.require_target()?)?;
    Ok(Domains { source, target })
}

fn write_trace(dir: &Path, trace: &DistillTrace) -> anyhow::Result<()> {
    write_text(&dir.join("trace.csv"), &trace.to_csv())
}

pub fn distill(exp: &ExperimentArgs, ablate: Option<AblationFlag>) -> anyhow::Result<()> {
    let cfg = exp.resolve()?;
    let out = cfg.require_out()?;
    let data = load_domains(&cfg)?;
    let (dcfg, _) = cfg.for_seed(cfg.seeds[0]);
    let dcfg = ablation_of(ablate)?.apply(&dcfg);
    let target = strip_labels(&data.target);
    let ctx = DistillContext::new(&data.source, &target, &dcfg)?;
    let basis = init_basis(&data.source, &dcfg)?;
    ensure_dir(out)?;
    match distill_from(&ctx, basis) {
        Ok((basis, trace)) => {
            basis.save(&out.join("basis.json"))?;
            write_trace(out, &trace)
        }
        Err(abort) => {
            write_trace(out, &abort.trace)?;
            Err(abort.error).context("distillation aborted; partial trace written")
        }
    }
}

fn write_model_outputs(
    dir: &Path,
    params: &GinParams,
    target: Option<&DomainDataset>,
    dump_embeddings: bool,
) -> anyhow::Result<Option<EvalReport>> {
    params.save(&dir.join("model.json"))?;
    let Some(target) = target else {
        if dump_embeddings {
            return Err(UsageError("--dump-embeddings needs a target dataset".into()).into());
        }
        return Ok(None);
    };
    if dump_embeddings {
        write_text(&dir.join("embeddings.csv"), &embeddings_csv(params, target)?)?;
    }
    if target.is_fully_labeled() && !target.is_empty() {
        let report = eval_report(params, target)?;
        write_json(&dir.join("report.json"), &report)?;
        Ok(Some(report))
    } else {
        Ok(None)
    }
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    s
}

pub fn train_infer(exp: &ExperimentArgs, basis_path: &Path, dump_embeddings: bool) -> anyhow::Result<()> {
    let cfg = exp.resolve()?;
    let out = cfg.require_out()?;
    let basis = BasisSet::load(require_file(Some(basis_path), "--basis")?)?;
    let (_, icfg) = cfg.for_seed(cfg.seeds[0]);
    let target = match &cfg.target {
        Some(p) => Some(load_jsonl(require_file(Some(p), "--target")?)?),
        None => None,
    };
    let fit = retrain_fresh(&basis, &icfg)?;
    ensure_dir(out)?;
    write_text(&out.join("train_loss.csv"), &loss_csv(&fit.losses))?;
    write_model_outputs(out, &fit.params, target.as_ref(), dump_embeddings)?;
    Ok(())
}

pub fn evaluate(model: &Path, target: &Path, out: Option<&Path>, dump_embeddings: bool) -> anyhow::Result<()> {
    let params = GinParams::load(require_file(Some(model), "--model")?)?;
    let target = load_jsonl(require_file(Some(target), "--target")?)?;
    let report = eval_report(&params, &target)?;
    match out {
        Some(dir) => {
            write_json(&dir.join("report.json"), &report)?;
            if dump_embeddings {
                write_text(&dir.join("embeddings.csv"), &embeddings_csv(&params, &target)?)?;
            }
            Ok(())
        }
        None if dump_embeddings => Err(UsageError("--dump-embeddings needs --out".into()).into()),
        None => print_json(&report),
    }
}

fn write_pipeline(dir: &Path, out: &PipelineOutput, target: &DomainDataset, dump: bool) -> anyhow::Result<()> {
    out.basis.save(&dir.join("basis.json"))?;
    write_trace(dir, &out.trace)?;
    if !out.train_losses.is_empty() {
        write_text(&dir.join("train_loss.csv"), &loss_csv(&out.train_losses))?;
    }
    write_model_outputs(dir, &out.params, Some(target), dump)?;
    Ok(())
}

fn require_labeled_target(data: &Domains) -> anyhow::Result<()> {
    if data.target.is_empty() || !data.target.is_fully_labeled() {
        return Err(UsageError("evaluation needs a non-empty, fully labeled target".into()).into());
    }
    Ok(())
}

fn pipeline(
    data: &Domains,
    dcfg: &DistillConfig,
    icfg: &InferConfig,
    ablation: Ablation,
) -> anyhow::Result<PipelineOutput> {
    Ok(run_pipeline(&data.source, &data.target, dcfg, icfg, ablation)?)
}

pub fn run(exp: &ExperimentArgs, ablate: Option<AblationFlag>, baseline: bool, dump: bool) -> anyhow::Result<()> {
    let cfg = exp.resolve()?;
    let out = cfg.require_out()?;
    let data = load_domains(&cfg)?;
    require_labeled_target(&data)?;
    let ablation = ablation_of(ablate)?;
    ensure_dir(out)?;
    let mut acc = Vec::new();
    let mut auc = Vec::new();
    let mut base_acc = Vec::new();
    for &seed in &cfg.seeds {
        let (dcfg, icfg) = cfg.for_seed(seed);
        let dir = out.join(format!("seed_{seed}"));
        ensure_dir(&dir)?;
        let res = pipeline(&data, &dcfg, &icfg, ablation).with_context(|| format!("seed {seed}"))?;
        write_pipeline(&dir, &res, &data.target, dump)?;
        acc.push(res.report.accuracy);
        auc.extend(res.report.auc);
        if baseline {
            let fit = source_only_baseline(&data.source, &dcfg.arch, &icfg)?;
            let report = eval_report(&fit.params, &data.target)?;
            write_json(&dir.join("baseline_report.json"), &report)?;
            base_acc.push(report.accuracy);
        }
    }
    let mut aggregate = json!({
        "variant": ablation.label(),
        "seeds": cfg.seeds,
        "accuracy": Summary::of(acc.clone()),
        "config": { "distill": cfg.distill, "infer": cfg.infer },
    });
    if auc.len() == acc.len() {
        aggregate["auc"] = json!(Summary::of(auc));
    }
    if baseline {
        let gain: Vec<f64> = acc.iter().zip(&base_acc).map(|(a, b)| a - b).collect();
        aggregate["baseline_accuracy"] = json!(Summary::of(base_acc));
        aggregate["gain"] = json!(Summary::of(gain));
    }
    write_json(&out.join("aggregate.json"), &aggregate)
}

fn grid_points(grid: SweepGrid, values: Option<Vec<f64>>, base: &DistillConfig) -> anyhow::Result<Vec<DistillConfig>> {
    const KS: [f64; 6] = [5.0, 10.0, 20.0, 30.0, 40.0, 50.0];
    const LAMBDAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
    let default: &[f64] = match grid {
        SweepGrid::K => &KS,
        _ => &LAMBDAS,
    };
    let vals = values.unwrap_or_else(|| default.to_vec());
    if vals.is_empty() {
        return Err(UsageError("empty sweep grid".into()).into());
    }
    let mut pts = Vec::new();
    for &v in &vals {
        let mut c = base.clone();
        match grid {
            SweepGrid::K => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(UsageError(format!("K must be a positive integer, got {v}")).into());
                }
                c.k = v as usize;
            }
            SweepGrid::Lambda1 => c.lambda1 = v,
            SweepGrid::Lambda2 => c.lambda2 = v,
            SweepGrid::Lambdas => {
                for &w in &vals {
                    let mut c = base.clone();
                    c.lambda1 = v;
                    c.lambda2 = w;
                    pts.push(c);
                }
                continue;
            }
        }
        pts.push(c);
    }
    for p in &pts {
        p.validate()?;
    }
    Ok(pts)
}

pub fn sweep(exp: &ExperimentArgs, grid: SweepGrid, values: Option<Vec<f64>>) -> anyhow::Result<()> {
    let cfg = exp.resolve()?;
    let out = cfg.require_out()?;
    let data = load_domains(&cfg)?;
    require_labeled_target(&data)?;
    let points = grid_points(grid, values, &cfg.distill)?;
    let name = match grid {
        SweepGrid::K => "k",
        SweepGrid::Lambda1 => "lambda1",
        SweepGrid::Lambda2 => "lambda2",
        SweepGrid::Lambdas => "lambdas",
    };
    let mut log = CsvLog::create(
        &out.join(format!("sweep_{name}.csv")),
        "k,lambda1,lambda2,accuracy_mean,accuracy_std,n_seeds,status",
    )?;
    for point in &points {
        let mut accs = Vec::new();
        let mut status = String::from("ok");
        for &seed in &cfg.seeds {
            let (_, icfg) = cfg.for_seed(seed);
            let dcfg = DistillConfig { seed, ..point.clone() };
            match pipeline(&data, &dcfg, &icfg, Ablation::none()) {
                Ok(res) => accs.push(res.report.accuracy),
                Err(e) => {
                    status = format!("failed: {}", e.to_string().replace(',', ";"));
                    break;
                }
            }
        }
        let (mean, std) = if status == "ok" {
            let s = Summary::of(accs);
            (s.mean.to_string(), s.std.to_string())
        } else {
            (String::new(), String::new())
        };
        log.row(&format!(
            "{},{},{},{},{},{},{}",
            point.k,
            point.lambda1,
            point.lambda2,
            mean,
            std,
            cfg.seeds.len(),
            status
        ))?;
    }
    Ok(())
}

pub fn ablate(exp: &ExperimentArgs) -> anyhow::Result<()> {
    let cfg = exp.resolve()?;
    let out = cfg.require_out()?;
    let data = load_domains(&cfg)?;
    require_labeled_target(&data)?;
    let variants: Vec<(String, Option<Ablation>)> = std::iter::once(("full".to_string(), None))
        .chain(["se", "sp", "ge", "tg"].iter().map(|t| {
            let a = Ablation::single(t).expect("known tag");
            (a.label(), Some(a))
        }))
        .collect();
    let mut log = CsvLog::create(&out.join("ablation.csv"), "variant,seed,accuracy")?;
    let mut per_variant: Vec<Vec<f64>> = vec![Vec::new(); variants.len()];
    let unlabeled = strip_labels(&data.target);
    for &seed in &cfg.seeds {
        let (dcfg, icfg) = cfg.for_seed(seed);
        let full = pipeline(&data, &dcfg, &icfg, Ablation::none())?;
        for (vi, (name, abl)) in variants.iter().enumerate() {
            let acc = match abl {
                None => full.report.accuracy,
                // the proxy ablation shares the full run's distillation
                Some(a) if a.no_fresh_model => {
                    let ctx = DistillContext::new(&data.source, &unlabeled, &dcfg)?;
                    let proxy = final_proxy(&ctx, &full.basis, &full.trace)?;
                    eval_report(&proxy, &data.target)?.accuracy
                }
                Some(a) => pipeline(&data, &dcfg, &icfg, *a)?.report.accuracy,
            };
            log.row(&format!("{name},{seed},{acc}"))?;
            per_variant[vi].push(acc);
        }
    }
    let full = &per_variant[0];
    let summary: Vec<_> = variants
        .iter()
        .zip(&per_variant)
        .map(|((name, _), accs)| {
            let full_at_least = full.iter().zip(accs).filter(|(f, a)| f >= a).count();
            json!({
                "variant": name,
                "accuracy": Summary::of(accs.clone()),
                "seeds_full_at_least": full_at_least,
            })
        })
        .collect();
    write_json(&out.join("ablation.json"), &json!({ "seeds": cfg.seeds, "variants": summary }))
}
