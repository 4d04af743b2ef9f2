//! Density-based domain splitting.

use serde::{Deserialize, Serialize};

use super::{DenseGraph, DomainDataset};
use crate::error::{DsbdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityCriterion {
    /// Node count.
    NodeDensity,
    /// Edge count over `n(n-1)/2`.
    EdgeDensity,
}

impl DensityCriterion {
    pub fn statistic(self, g: &DenseGraph) -> f64 {
        match self {
            DensityCriterion::NodeDensity => g.n() as f64,
            DensityCriterion::EdgeDensity => {
                let n = g.n() as f64;
                if g.n() < 2 {
                    0.0
                } else {
                    g.edge_count() as f64 / (n * (n - 1.0) / 2.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub criterion: DensityCriterion,
    pub num_bins: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            criterion: DensityCriterion::NodeDensity,
            num_bins: 4,
        }
    }
}

/// Interior cut points `q_1 < ... < q_{k-1}`; bin `i` is `[q_i, q_{i+1})`
/// with `q_0 = min` and the last bin closed at the max.
///
/// Cut `i` starts at the sorted value of rank `floor(i*N/k)`. When ties
/// make it collide with the previous cut it moves up to the next distinct
/// value; running out of distinct values is a degenerate split.
pub fn quantile_boundaries(values: &[f64], num_bins: usize) -> Result<Vec<f64>> {
    if num_bins < 2 {
        return Err(DsbdError::Config("num_bins must be at least 2".into()));
    }
    if values.is_empty() {
        return Err(DsbdError::EmptyDataset("cannot split an empty dataset".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < num_bins {
        return Err(DsbdError::DegenerateSplit(format!(
            "{} distinct values for {num_bins} bins",
            distinct.len()
        )));
    }
    let n = sorted.len();
    let mut cuts = Vec::with_capacity(num_bins - 1);
    let mut prev = sorted[0];
    for i in 1..num_bins {
        let mut q = sorted[i * n / num_bins];
        if q <= prev {
            q = match distinct.iter().find(|&&v| v > prev) {
                Some(&v) => v,
                None => {
                    return Err(DsbdError::DegenerateSplit(format!(
                        "no distinct value left for cut {i}"
                    )))
                }
            };
        }
        cuts.push(q);
        prev = q;
    }
    Ok(cuts)
}

/// Partition `ds` into `num_bins` domains `M0..M{k-1}` of ascending density.
/// Graphs keep their original relative order inside each bin.
pub fn split_by_density(ds: &DomainDataset, spec: &SplitSpec) -> Result<Vec<DomainDataset>> {
    ds.require_non_empty("split")?;
    let stats: Vec<f64> = ds.graphs.iter().map(|g| spec.criterion.statistic(g)).collect();
    let cuts = quantile_boundaries(&stats, spec.num_bins)?;
    let mut bins: Vec<Vec<DenseGraph>> = vec![Vec::new(); spec.num_bins];
    for (g, &s) in ds.graphs.iter().zip(&stats) {
        let bin = cuts.iter().take_while(|&&q| q <= s).count();
        bins[bin].push(g.clone());
    }
    bins.into_iter()
        .enumerate()
        .map(|(i, graphs)| {
            DomainDataset::new(format!("M{i}"), graphs)?.with_num_classes(ds.num_classes)
        })
        .collect()
}
