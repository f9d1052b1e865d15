//! Sparse probabilistic kernel classification with transfer learning.
//!
//! This crate implements the Probabilistic Classification Vector Machine
//! (PCVM), a sparse Bayesian kernel classifier trained by EM with basis
//! pruning, together with two transductive transfer-learning extensions:
//!
//! * **PCTKVM** — transfer kernel learning. The training kernel is
//!   approximated through the eigensystem of the (unlabeled) test kernel,
//!   with the eigenspectrum re-optimized under a damping constraint, and a
//!   PCVM is trained on the resulting domain-invariant kernel.
//! * **NTVM** — Nyström basis transfer. Source and target data are reduced
//!   with a landmark (Nyström) SVD and the source representation is rebuilt
//!   on the target's left singular basis, after a class-wise augmentation
//!   step that equalizes sample counts.
//!
//! Both extensions only require target *features* at fit time; target labels
//! are never read during training.
//!
//! Supporting machinery: dense/sparse dataset ingestion with per-domain
//! standard normalization ([`data`]), RBF kernels ([`kernel`]), Nyström
//! EVD/SVD factorizations ([`nystrom`]), and a benchmark harness with 5x2
//! cross-validation, grid search and landmark sweeps ([`eval`]).
//!
//! Start with the runnable programs under `examples/`; each one exercises a
//! single capability end to end. A thin CLI binary (`pcvm-transfer`) drives
//! the same machinery from config files.

pub mod cli;
pub mod data;
mod erf;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod nbt;
pub mod nystrom;
pub mod pcvm;
pub mod pipelines;
pub mod tkl;
pub mod toy;

pub use error::{Error, Result};
