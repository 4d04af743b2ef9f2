//! JSON Lines graph files: one object per line with `n`, `edges`,
//! `features`, optional `label` and optional `weights` (parallel to `edges`).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DenseGraph, DomainDataset};
use crate::error::{DsbdError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Serialize, Deserialize)]
struct GraphRecord {
    n: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl GraphRecord {
    fn into_graph(self, line: usize) -> Result<DenseGraph> {
        let bad = |detail: String| DsbdError::Parse { line, detail };
        if self.features.len() != self.n {
            return Err(bad(format!(
                "{} feature rows for n={}",
                self.features.len(),
                self.n
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.edges.len() {
                return Err(bad("weights and edges differ in length".into()));
            }
        }
        let mut adj = Tensor::zeros(self.n, self.n);
        for (k, &[i, j]) in self.edges.iter().enumerate() {
            if i >= self.n || j >= self.n {
                return Err(bad(format!("edge [{i},{j}] out of range")));
            }
            if i == j {
                return Err(bad(format!("self loop [{i},{j}]")));
            }
            let w = self.weights.as_ref().map_or(1.0, |w| w[k]);
            if !(0.0..=1.0).contains(&w) {
                return Err(bad(format!("weight {w} outside [0,1]")));
            }
            adj.set(i, j, w);
            adj.set(j, i, w);
        }
        let features = Tensor::from_rows(&self.features)
            .map_err(|_| bad("ragged feature rows".into()))?;
        DenseGraph::new(adj, features, self.label).map_err(|e| bad(e.to_string()))
    }

    fn from_graph(g: &DenseGraph) -> Self {
        let n = g.n();
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = g.adjacency().get(i, j);
                if w > 0.0 {
                    edges.push([i, j]);
                    weights.push(w);
                }
            }
        }
        let weighted = weights.iter().any(|&w| w != 1.0);
        GraphRecord {
            n,
            edges,
            features: g.features().to_rows(),
            label: g.label(),
            weights: weighted.then_some(weights),
        }
    }
}

/// Parse JSON Lines text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_jsonl(name: &str, text: &str) -> Result<DomainDataset> {
    let mut graphs = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(raw).map_err(|e| DsbdError::Parse {
            line,
            detail: e.to_string(),
        })?;
        let g = rec.into_graph(line)?;
        match dim {
            None => dim = Some(g.feature_dim()),
            Some(d) if d != g.feature_dim() => {
                return Err(DsbdError::Schema(format!(
                    "line {line}: feature_dim {} differs from {d}",
                    g.feature_dim()
                )))
            }
            Some(_) => {}
        }
        graphs.push(g);
    }
    DomainDataset::new(name, graphs)
}

pub fn load_jsonl(path: &Path) -> Result<DomainDataset> {
    let text = fs::read_to_string(path).map_err(|e| DsbdError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_jsonl(&name, &text)
}

pub fn write_jsonl<W: Write>(ds: &DomainDataset, mut out: W) -> std::io::Result<()> {
    for g in &ds.graphs {
        let line = serde_json::to_string(&GraphRecord::from_graph(g))
            .expect("graph records always serialize");
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_jsonl(ds: &DomainDataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(ds, &mut buf).map_err(|e| DsbdError::io(path, e))?;
    fs::write(path, buf).map_err(|e| DsbdError::io(path, e))
}
