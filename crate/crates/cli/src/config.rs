//! Experiment configuration: a TOML file with `[distill]` and `[infer]`
//! sections, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use dsbd_core::distill::{DistillConfig, MetaMode};
use dsbd_core::infer::InferConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub distill: DistillConfig,
    pub infer: InferConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: None,
            target: None,
            out: None,
            seeds: vec![0],
            distill: DistillConfig::default(),
            infer: InferConfig::default(),
        }
    }
}

/// Flags shared by every experiment subcommand. Each one, when given,
/// replaces the corresponding config-file value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ExperimentArgs {
    /// TOML config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Labeled source domain (JSONL)
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Target domain (JSONL)
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed; shorthand for a single-element seed list
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seed list
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Number of prototypes
    #[arg(long)]
    pub k: Option<usize>,
    /// Prototype node count
    #[arg(long)]
    pub n_syn: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Inner gradient steps per outer step
    #[arg(long)]
    pub t_inner: Option<usize>,
    /// unrolled | first_order
    #[arg(long)]
    pub meta_mode: Option<MetaMode>,
    #[arg(long)]
    pub outer_steps: Option<usize>,
    #[arg(long)]
    pub lr_inner: Option<f64>,
    #[arg(long)]
    pub lr_outer: Option<f64>,
    /// GIN hidden width
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Stage-two training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stage-two learning rate
    #[arg(long)]
    pub infer_lr: Option<f64>,
}

impl ExperimentArgs {
    pub fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        if self.source.is_some() {
            cfg.source = self.source.clone();
        }
        if self.target.is_some() {
            cfg.target = self.target.clone();
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        set!(self.seeds, cfg.seeds);
        set!(self.k, cfg.distill.k);
        if self.n_syn.is_some() {
            cfg.distill.n_syn = self.n_syn;
        }
        set!(self.lambda1, cfg.distill.lambda1);
        set!(self.lambda2, cfg.distill.lambda2);
        set!(self.t_inner, cfg.distill.t_inner);
        set!(self.meta_mode, cfg.distill.meta_mode);
        set!(self.outer_steps, cfg.distill.outer_steps);
        set!(self.lr_inner, cfg.distill.lr_inner);
        set!(self.lr_outer, cfg.distill.lr_outer);
        set!(self.hidden, cfg.distill.arch.hidden);
        set!(self.epochs, cfg.infer.epochs);
        set!(self.infer_lr, cfg.infer.lr);
        if cfg.seeds.is_empty() {
            return Err(UsageError("seed list is empty".into()).into());
        }
        cfg.distill.validate()?;
        cfg.infer.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    /// Distill and infer configs for one seed.
    pub fn for_seed(&self, seed: u64) -> (DistillConfig, InferConfig) {
        let mut d = self.distill.clone();
        d.seed = seed;
        let mut i = self.infer.clone();
        i.seed = seed;
        (d, i)
    }

    pub fn require_source(&self) -> anyhow::Result<&Path> {
        require_file(self.source.as_deref(), "--source")
    }

    pub fn require_target(&self) -> anyhow::Result<&Path> {
        require_file(self.target.as_deref(), "--target")
    }

    pub fn require_out(&self) -> anyhow::Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| UsageError("an output directory (--out) is required".into()).into())
    }
}

pub fn require_file<'a>(path: Option<&'a Path>, flag: &str) -> anyhow::Result<&'a Path> {
    let path = path.ok_or_else(|| UsageError(format!("{flag} is required")))?;
    if !path.is_file() {
        return Err(UsageError(format!("{flag}: no such file {}", path.display())).into());
    }
    Ok(path)
}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
        .context("loading config")
}
