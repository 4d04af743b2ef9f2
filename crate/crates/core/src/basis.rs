//! Learnable prototype graphs with continuous adjacency.
//!
//! A prototype stores free adjacency logits `L` and node features. Its
//! realized adjacency is `sigmoid((L + L^T) / 2)` with the diagonal masked,
//! which is symmetric with weights in `(0, 1)` for any finite logits.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::distill::DistillConfig;
use crate::error::{DsbdError, Result};
use crate::graphdata::{dataset_stats, DenseGraph, DomainDataset};
use crate::rng;
use crate::tensor::Tensor;

pub const BASIS_VERSION: &str = "dsbd-basis/1";
const INIT_NOISE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeGraph {
    pub label: usize,
    pub adj_logits: Tensor,
    pub feat_params: Tensor,
}

/// A prototype realized on a tape.
#[derive(Debug, Clone, Copy)]
pub struct RealizedVars<'t> {
    pub adjacency: Var<'t>,
    pub features: Var<'t>,
    pub adj_logits: Var<'t>,
    pub feat_params: Var<'t>,
}

impl PrototypeGraph {
    pub fn n(&self) -> usize {
        self.adj_logits.rows()
    }

    /// Realize on `tape`; with `trainable` the parameters are leaves.
    pub fn realize_on<'t>(&self, tape: &'t Tape, trainable: bool) -> Result<RealizedVars<'t>> {
        let mk = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let adj_logits = mk(&self.adj_logits);
        let feat_params = mk(&self.feat_params);
        let adjacency = realize_adjacency(adj_logits)?;
        Ok(RealizedVars {
            adjacency,
            features: feat_params,
            adj_logits,
            feat_params,
        })
    }

    /// Weighted graph with the current realized adjacency.
    pub fn realize(&self) -> Result<DenseGraph> {
        let tape = Tape::new();
        let r = self.realize_on(&tape, false)?;
        DenseGraph::new((*r.adjacency.value()).clone(), self.feat_params.clone(), Some(self.label))
    }

    /// Binary graph thresholded at 0.5, for inspection only.
    pub fn realize_thresholded(&self) -> Result<DenseGraph> {
        let g = self.realize()?;
        let bin = g.adjacency().map(|w| if w > 0.5 { 1.0 } else { 0.0 });
        DenseGraph::new(bin, self.feat_params.clone(), Some(self.label))
    }
}

pub fn realize_adjacency(logits: Var<'_>) -> Result<Var<'_>> {
    let [n, m] = logits.shape();
    if n != m {
        return Err(DsbdError::dim("realize", "adjacency logits must be square"));
    }
    let off_diag = Tensor::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
    logits
        .add(logits.t())?
        .scale(0.5)
        .sigmoid()
        .mul(logits.tape().constant(off_diag))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub prototypes: Vec<PrototypeGraph>,
    pub config: DistillConfig,
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    version: String,
    k: usize,
    n_syn: usize,
    num_classes: usize,
    feature_dim: usize,
    prototypes: Vec<ProtoRecord>,
    config: DistillConfig,
}

#[derive(Serialize, Deserialize)]
struct ProtoRecord {
    label: usize,
    adj_logits: Vec<Vec<f64>>,
    feat_params: Vec<Vec<f64>>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Round-robin labels over `num_classes`, adjacency logits centred on the
/// source mean density and features centred on the class-conditional source
/// feature mean, both with `N(0, 0.1)` noise. Draws from the `init` stream.
pub fn init_basis(source: &DomainDataset, cfg: &DistillConfig) -> Result<BasisSet> {
    source.require_non_empty("source")?;
    let c = source.num_classes;
    let k = cfg.k;
    if k < c {
        return Err(DsbdError::Config(format!("K={k} is below the {c} source classes")));
    }
    let stats = dataset_stats(source)?;
    let n_syn = cfg.n_syn.unwrap_or(stats.median_nodes.round() as usize);
    if n_syn < 2 {
        return Err(DsbdError::Config(format!("n_syn={n_syn} must be at least 2")));
    }
    let d = source.feature_dim;
    let base_logit = logit(stats.mean_density.clamp(1e-3, 1.0 - 1e-3));

    let mut sums = vec![vec![0.0; d]; c];
    let mut counts = vec![0usize; c];
    let mut global = vec![0.0; d];
    let mut global_count = 0usize;
    for g in &source.graphs {
        let col = g.features().col_sums();
        for (s, v) in global.iter_mut().zip(col.data()) {
            *s += v;
        }
        global_count += g.n();
        if let Some(y) = g.label() {
            for (s, v) in sums[y].iter_mut().zip(col.data()) {
                *s += v;
            }
            counts[y] += g.n();
        }
    }
    let class_mean = |y: usize| -> Vec<f64> {
        if counts[y] > 0 {
            sums[y].iter().map(|s| s / counts[y] as f64).collect()
        } else {
            global.iter().map(|s| s / global_count.max(1) as f64).collect()
        }
    };

    let noise = Normal::new(0.0, INIT_NOISE).expect("valid sigma");
    let mut rng = rng::stream(cfg.seed, "init", 0);
    let prototypes = (0..k)
        .map(|i| {
            let label = i % c;
            let mut adj = Tensor::zeros(n_syn, n_syn);
            for r in 0..n_syn {
                for s in (r + 1)..n_syn {
                    let v = base_logit + noise.sample(&mut rng);
                    adj.set(r, s, v);
                    adj.set(s, r, v);
                }
            }
            let mean = class_mean(label);
            let feat = Tensor::from_fn(n_syn, d, |_, j| mean[j] + noise.sample(&mut rng));
            PrototypeGraph {
                label,
                adj_logits: adj,
                feat_params: feat,
            }
        })
        .collect();
    Ok(BasisSet {
        num_classes: c,
        feature_dim: d,
        prototypes,
        config: cfg.clone(),
    })
}

impl BasisSet {
    pub fn k(&self) -> usize {
        self.prototypes.len()
    }

    pub fn n_syn(&self) -> usize {
        self.prototypes.first().map_or(0, PrototypeGraph::n)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.prototypes.iter().map(|p| p.label).collect()
    }

    /// Flat parameter order: `adj_logits`, `feat_params` per prototype.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.prototypes
            .iter()
            .flat_map(|p| [&p.adj_logits, &p.feat_params])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.prototypes
            .iter_mut()
            .flat_map(|p| [&mut p.adj_logits, &mut p.feat_params])
            .collect()
    }

    pub fn realize_all(&self) -> Result<Vec<DenseGraph>> {
        self.prototypes.iter().map(PrototypeGraph::realize).collect()
    }

    pub fn as_dataset(&self, thresholded: bool) -> Result<DomainDataset> {
        let graphs = self
            .prototypes
            .iter()
            .map(|p| if thresholded { p.realize_thresholded() } else { p.realize() })
            .collect::<Result<Vec<_>>>()?;
        DomainDataset::new("basis", graphs)?.with_num_classes(self.num_classes)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DsbdError::Checkpoint(m));
        if self.k() < self.num_classes || self.num_classes == 0 {
            return bad(format!("K={} below num_classes={}", self.k(), self.num_classes));
        }
        let n = self.n_syn();
        if n < 2 {
            return bad("prototypes need at least 2 nodes".into());
        }
        let mut counts = vec![0usize; self.num_classes];
        for p in &self.prototypes {
            if p.adj_logits.shape() != [n, n] || p.feat_params.shape() != [n, self.feature_dim] {
                return bad("prototype shapes differ".into());
            }
            if !p.adj_logits.is_finite() || !p.feat_params.is_finite() {
                return bad("non-finite prototype parameter".into());
            }
            match counts.get_mut(p.label) {
                Some(c) => *c += 1,
                None => return bad(format!("label {} out of range", p.label)),
            }
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        if hi - lo > 1 {
            return bad(format!("unbalanced labels {counts:?}"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = BasisFile {
            version: BASIS_VERSION.into(),
            k: self.k(),
            n_syn: self.n_syn(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            prototypes: self
                .prototypes
                .iter()
                .map(|p| ProtoRecord {
                    label: p.label,
                    adj_logits: p.adj_logits.to_rows(),
                    feat_params: p.feat_params.to_rows(),
                })
                .collect(),
            config: self.config.clone(),
        };
        serde_json::to_string_pretty(&file).expect("basis serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BasisFile =
            serde_json::from_str(text).map_err(|e| DsbdError::Checkpoint(e.to_string()))?;
        if file.version != BASIS_VERSION {
            return Err(DsbdError::Checkpoint(format!(
                "version {} is not {BASIS_VERSION}",
                file.version
            )));
        }
        let prototypes = file
            .prototypes
            .into_iter()
            .map(|r| {
                Ok(PrototypeGraph {
                    label: r.label,
                    adj_logits: Tensor::from_rows(&r.adj_logits)?,
                    feat_params: Tensor::from_rows(&r.feat_params)?,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| DsbdError::Checkpoint(e.to_string()))?;
        let basis = BasisSet {
            num_classes: file.num_classes,
            feature_dim: file.feature_dim,
            prototypes,
            config: file.config,
        };
        if basis.k() != file.k || basis.n_syn() != file.n_syn {
            return Err(DsbdError::Checkpoint("header disagrees with prototypes".into()));
        }
        basis.validate()?;
        Ok(basis)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| DsbdError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DsbdError::io(path, e))?;
        Self::from_json(&text)
    }
}
