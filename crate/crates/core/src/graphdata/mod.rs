//! Graph instances, domain datasets and their summaries.

mod io;
mod motif;
mod split;

pub use io::{load_jsonl, parse_jsonl, save_jsonl, write_jsonl};
pub use motif::{generate_spurious_motif, BaseShape, MotifShape, SpuriousMotifSample};
pub use split::{quantile_boundaries, split_by_density, DensityCriterion, SplitSpec};

use serde::Serialize;

use crate::error::{DsbdError, Result};
use crate::tensor::Tensor;

/// One undirected graph with dense weighted adjacency and node features.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGraph {
    adjacency: Tensor,
    features: Tensor,
    label: Option<usize>,
}

impl DenseGraph {
    /// Validates symmetry, zero diagonal, weights in `[0, 1]` and feature rows.
    pub fn new(adjacency: Tensor, features: Tensor, label: Option<usize>) -> Result<Self> {
        let n = adjacency.rows();
        if !adjacency.is_square() {
            return Err(DsbdError::Schema("adjacency must be square".into()));
        }
        if features.rows() != n {
            return Err(DsbdError::Schema(format!(
                "features have {} rows for {n} nodes",
                features.rows()
            )));
        }
        for i in 0..n {
            if adjacency.get(i, i) != 0.0 {
                return Err(DsbdError::Schema(format!("self loop at node {i}")));
            }
            for j in (i + 1)..n {
                let w = adjacency.get(i, j);
                if w != adjacency.get(j, i) {
                    return Err(DsbdError::Schema(format!("asymmetric weight at ({i},{j})")));
                }
                if !(0.0..=1.0).contains(&w) {
                    return Err(DsbdError::Schema(format!("weight {w} at ({i},{j}) outside [0,1]")));
                }
            }
        }
        if !features.is_finite() {
            return Err(DsbdError::Schema("non-finite feature".into()));
        }
        Ok(DenseGraph {
            adjacency,
            features,
            label,
        })
    }

    /// Binary undirected graph from an edge list.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        features: Tensor,
        label: Option<usize>,
    ) -> Result<Self> {
        let mut adj = Tensor::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(DsbdError::Schema(format!("bad edge ({i},{j}) for n={n}")));
            }
            adj.set(i, j, 1.0);
            adj.set(j, i, 1.0);
        }
        Self::new(adj, features, label)
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Number of node pairs with positive weight.
    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.adjacency.get(i, j) > 0.0)
            .count()
    }

    /// Weighted density `sum_ij A_ij / (n(n-1))`; zero for `n < 2`.
    pub fn density(&self) -> f64 {
        let n = self.n() as f64;
        if self.n() < 2 {
            0.0
        } else {
            self.adjacency.sum() / (n * (n - 1.0))
        }
    }
}

/// A named collection of graphs from one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub name: String,
    pub graphs: Vec<DenseGraph>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl DomainDataset {
    /// Infers `num_classes` from the largest label and checks a shared
    /// feature dimension.
    pub fn new(name: impl Into<String>, graphs: Vec<DenseGraph>) -> Result<Self> {
        let feature_dim = graphs.first().map_or(0, DenseGraph::feature_dim);
        if let Some((i, g)) = graphs
            .iter()
            .enumerate()
            .find(|(_, g)| g.feature_dim() != feature_dim)
        {
            return Err(DsbdError::Schema(format!(
                "graph {i} has feature_dim {} but dataset uses {feature_dim}",
                g.feature_dim()
            )));
        }
        let num_classes = graphs
            .iter()
            .filter_map(DenseGraph::label)
            .max()
            .map_or(0, |m| m + 1);
        Ok(DomainDataset {
            name: name.into(),
            graphs,
            num_classes,
            feature_dim,
        })
    }

    /// Raise `num_classes` to at least `c`, for domains missing some classes.
    pub fn with_num_classes(mut self, c: usize) -> Result<Self> {
        if c < self.num_classes {
            return Err(DsbdError::Schema(format!(
                "dataset has labels up to {} but num_classes={c}",
                self.num_classes - 1
            )));
        }
        self.num_classes = c;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.graphs.iter().all(|g| g.label.is_some())
    }

    pub fn require_non_empty(&self, role: &str) -> Result<()> {
        if self.is_empty() {
            Err(DsbdError::EmptyDataset(format!("{role} dataset '{}'", self.name)))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_graphs: usize,
    pub mean_nodes: f64,
    pub std_nodes: f64,
    pub median_nodes: f64,
    pub mean_density: f64,
    pub class_histogram: Vec<usize>,
    pub unlabeled: usize,
}

pub fn dataset_stats(ds: &DomainDataset) -> Result<DatasetStats> {
    ds.require_non_empty("stats")?;
    let n = ds.len() as f64;
    let nodes: Vec<f64> = ds.graphs.iter().map(|g| g.n() as f64).collect();
    let mean_nodes = nodes.iter().sum::<f64>() / n;
    let var = nodes.iter().map(|x| (x - mean_nodes).powi(2)).sum::<f64>() / n;
    let mut sorted = nodes.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median_nodes = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let mut class_histogram = vec![0; ds.num_classes];
    let mut unlabeled = 0;
    for g in &ds.graphs {
        match g.label {
            Some(c) => class_histogram[c] += 1,
            None => unlabeled += 1,
        }
    }
    Ok(DatasetStats {
        n_graphs: ds.len(),
        mean_nodes,
        std_nodes: var.sqrt(),
        median_nodes,
        mean_density: ds.graphs.iter().map(DenseGraph::density).sum::<f64>() / n,
        class_histogram,
        unlabeled,
    })
}
