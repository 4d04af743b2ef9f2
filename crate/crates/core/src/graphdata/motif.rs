//! Spurious-Motif generator: a label-determining motif bridged onto a base
//! graph whose shape is correlated with the label by `bias`.

use rand::Rng;

use super::{DenseGraph, DomainDataset};
use crate::error::{DsbdError, Result};
use crate::rng;
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 3;
const BASE_SIZE_MIN: usize = 8;
const BASE_SIZE_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseShape {
    Tree,
    Ladder,
    Wheel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotifShape {
    Cycle,
    House,
    Crane,
}

impl BaseShape {
    pub const ALL: [BaseShape; 3] = [BaseShape::Tree, BaseShape::Ladder, BaseShape::Wheel];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Edges of the base on `size` requested nodes; returns the realized node
    /// count (ladders round down to an even size).
    fn edges(self, size: usize) -> (usize, Vec<(usize, usize)>) {
        match self {
            BaseShape::Tree => (size, (1..size).map(|i| ((i - 1) / 2, i)).collect()),
            BaseShape::Ladder => {
                let m = size / 2;
                let mut e = Vec::new();
                for i in 0..m {
                    e.push((i, m + i));
                    if i + 1 < m {
                        e.push((i, i + 1));
                        e.push((m + i, m + i + 1));
                    }
                }
                (2 * m, e)
            }
            BaseShape::Wheel => {
                let rim = size - 1;
                let mut e: Vec<_> = (1..=rim).map(|i| (0, i)).collect();
                e.extend((1..=rim).map(|i| (i, i % rim + 1)));
                (size, e)
            }
        }
    }
}

impl MotifShape {
    pub const ALL: [MotifShape; 3] = [MotifShape::Cycle, MotifShape::House, MotifShape::Crane];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Five-node motifs: C5, C5 with a roof chord, and a star S4 with one
    /// leaf-leaf edge.
    pub fn edges(self) -> Vec<(usize, usize)> {
        let c5 = vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)];
        match self {
            MotifShape::Cycle => c5,
            MotifShape::House => {
                let mut e = c5;
                e.push((1, 4));
                e
            }
            MotifShape::Crane => vec![(0, 1), (0, 2), (0, 3), (0, 4), (1, 2)],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpuriousMotifSample {
    pub base: BaseShape,
    pub motif: MotifShape,
    pub graph: DenseGraph,
}

/// Generate graphs with metadata. Labels are assigned round-robin; the base
/// equals the label with probability `bias` and is otherwise uniform over the
/// two remaining shapes, so `bias = 1/3` gives an unbiased domain.
pub fn spurious_motif_samples(n_graphs: usize, bias: f64, seed: u64) -> Result<Vec<SpuriousMotifSample>> {
    if n_graphs < NUM_CLASSES {
        return Err(DsbdError::Config(format!(
            "need at least {NUM_CLASSES} graphs, got {n_graphs}"
        )));
    }
    if !(0.0..=1.0).contains(&bias) {
        return Err(DsbdError::Config(format!("bias {bias} outside [0,1]")));
    }
    let mut rng = rng::stream(seed, "data", 0);
    let mut out = Vec::with_capacity(n_graphs);
    for i in 0..n_graphs {
        let label = i % NUM_CLASSES;
        let base_idx = if rng.random::<f64>() < bias {
            label
        } else {
            (label + 1 + rng.random_range(0..NUM_CLASSES - 1)) % NUM_CLASSES
        };
        let base = BaseShape::ALL[base_idx];
        let motif = MotifShape::ALL[label];
        let size = rng.random_range(BASE_SIZE_MIN..=BASE_SIZE_MAX);
        let (nb, mut edges) = base.edges(size);
        edges.extend(motif.edges().into_iter().map(|(a, b)| (nb + a, nb + b)));
        let bridge_base = rng.random_range(0..nb);
        let bridge_motif = nb + rng.random_range(0..5);
        edges.push((bridge_base, bridge_motif));
        let n = nb + 5;
        let graph = DenseGraph::from_edges(n, &edges, Tensor::ones(n, 1), Some(label))?;
        out.push(SpuriousMotifSample { base, motif, graph });
    }
    Ok(out)
}

pub fn generate_spurious_motif(n_graphs: usize, bias: f64, seed: u64) -> Result<DomainDataset> {
    let graphs = spurious_motif_samples(n_graphs, bias, seed)?
        .into_iter()
        .map(|s| s.graph)
        .collect();
    DomainDataset::new(format!("spurious_motif_b{bias:.3}"), graphs)
}
