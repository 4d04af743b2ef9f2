//! Prototype-graph basis learning for transferring graph classifiers across domains.
//!
//! A labeled source domain is distilled into a handful of differentiable
//! prototype graphs whose degree, density and triangle statistics and whose
//! Dirichlet energy are pulled toward an unlabeled target domain. A fresh
//! GIN classifier trained only on those prototypes is then evaluated on the
//! target.
//!
//! Module layout, bottom up:
//!
//! - [`tensor`], [`autodiff`]: dense tensors and a reverse-mode tape.
//! - [`graphdata`]: graphs, datasets, JSONL IO, density splits, the
//!   Spurious-Motif generator.
//! - [`structstats`]: graph moments, normalized Laplacian, Dirichlet energy.
//! - [`gnn`]: the GIN classifier.
//! - [`basis`], [`distill`]: prototype graphs and the bi-level optimization.
//! - [`infer`]: fresh retraining, evaluation and the end-to-end pipeline.

pub mod autodiff;
pub mod basis;
pub mod distill;
pub mod error;
pub mod gnn;
pub mod graphdata;
pub mod infer;
pub mod optim;
pub mod par;
pub mod rng;
pub mod structstats;
pub mod tensor;

#[cfg(test)]
mod testutil;

pub use error::{DsbdError, Result};
pub use par::Exec;
pub use tensor::Tensor;
