//! Constrained decoding for linear-chain CRFs.
//!
//! The crate models sequence labeling as a shortest-path problem over a
//! trellis of label assignments and solves three variants of it:
//!
//! * unconstrained maximum-score decoding (Viterbi, plus an independent
//!   branch-and-bound route used to cross-check it),
//! * minimum-violation-cost decoding under a score floor, where non-local
//!   label relationships (adjacency, precedence, state change, begin-end,
//!   presence-and-precedence) are compiled to sparse linear rows over the
//!   trellis edge space,
//! * Lagrangian relaxation of the hard-constrained problem, solved by
//!   projected subgradient descent over the row multipliers.
//!
//! Supporting machinery: a feature-based CRF model with an averaged
//! structured-perceptron trainer, frequency-based constraint mining from
//! labeled corpora, token-level evaluation, corpus I/O, and a synthetic
//! corpus generator for end-to-end experiments.

pub mod cli;
pub mod constraints;
pub mod crf;
pub mod dataset;
pub mod eval;
pub mod ilp;
pub mod lagrangian;
pub mod trellis;

pub use constraints::{ConstraintSystem, ConstraintTemplate, LinearRow};
pub use crf::{CrfModel, ObservationSequence};
pub use dataset::Corpus;
pub use eval::EvaluationReport;
pub use ilp::{ConstrainedProblem, ConstrainedSolution};
pub use trellis::{LabelAlphabet, PathAssignment, Trellis};
