//! Lagrangian relaxation of hard-constrained decoding.
//!
//! The hard problem asks for the maximum-score path satisfying every linear
//! row. Relaxing the rows with nonnegative multipliers turns each evaluation
//! of the dual function into a plain decoding problem: subtract the weighted
//! row coefficients from the edge weights, decode, and add back the
//! multiplier-weighted row constants. The dual is convex and piecewise
//! linear in the multipliers and upper-bounds the constrained optimum, so a
//! projected subgradient descent with step `1/(k+1)` walks it downhill.
//!
//! Every iterate's maximizing path is a candidate primal solution: the
//! solver returns the best feasible one it saw, or the path attaining the
//! best dual value when none was feasible, and reports the gap rather than
//! assuming it closes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::constraints::{ConstraintError, ConstraintSystem};
use crate::trellis::{path_score, viterbi, PathAssignment, Trellis, TrellisError};

#[derive(Debug, Error, PartialEq)]
pub enum DualError {
    #[error("multiplier {index} is negative ({value})")]
    NegativeMultiplier { index: usize, value: f64 },
    #[error("{got} multipliers for {expected} rows")]
    MultiplierCount { expected: usize, got: usize },
    #[error("constraint system is for length {system} but trellis has length {trellis}")]
    SystemMismatch { system: usize, trellis: usize },
    #[error(transparent)]
    Trellis(#[from] TrellisError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

/// Iteration state of the projected subgradient descent.
#[derive(Debug, Clone)]
pub struct LagrangeState {
    /// One nonnegative multiplier per row of the hardened system.
    pub lambda: Vec<f64>,
    /// Iteration counter.
    pub k: usize,
    /// Lowest dual value seen so far.
    pub best_dual: f64,
    /// Path attaining the most recent dual value.
    pub best_path: Option<PathAssignment>,
    /// Iteration cap `K`.
    pub max_iterations: usize,
    /// Minimum decrease of `best_dual` that counts as progress.
    pub tolerance: f64,
}

impl LagrangeState {
    fn new(rows: usize, options: &DualOptions) -> Self {
        Self {
            lambda: vec![0.0; rows],
            k: 0,
            best_dual: f64::INFINITY,
            best_path: None,
            max_iterations: options.max_iterations,
            tolerance: options.tolerance,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self { max_iterations: 200, tolerance: 1e-6 }
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DualIterate {
    pub k: usize,
    pub dual_value: f64,
    pub subgradient_norm: f64,
    pub feasible: bool,
    pub theta: f64,
}

/// Why the descent stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DualStatus {
    /// The maximizing path satisfied every hard row. Optimality of that path
    /// additionally needs complementary slackness, which is recorded here,
    /// not assumed.
    Feasible { complementary_slackness: bool },
    /// `best_dual` stopped improving by more than the tolerance.
    Stalled,
    /// The iteration cap was reached.
    IterationLimit,
}

/// Outcome of the subgradient run.
#[derive(Debug, Clone)]
pub struct DualResult {
    /// Best feasible path seen (by true score), or the path attaining the
    /// best dual value when no iterate was feasible.
    pub path: PathAssignment,
    /// Whether `path` satisfies all hard rows.
    pub feasible: bool,
    pub best_dual: f64,
    /// True score of the best feasible path, when one was found.
    pub best_feasible_score: Option<f64>,
    /// `best_dual - best_feasible_score`, when a feasible path was found.
    pub duality_gap: Option<f64>,
    pub status: DualStatus,
    pub trace: Vec<DualIterate>,
}

fn check_dimensions(trellis: &Trellis, system: &ConstraintSystem) -> Result<(), DualError> {
    if system.sequence_length() != trellis.len() {
        return Err(DualError::SystemMismatch {
            system: system.sequence_length(),
            trellis: trellis.len(),
        });
    }
    Ok(())
}

/// Evaluates the dual function at `lambda`.
///
/// Penalized weights are `M - H^T lambda`; the returned value adds back
/// `lambda . b` so rows with a nonzero constant stay upper bounds. The
/// maximizing path of the penalized trellis comes back with the value.
pub fn dual_value(
    trellis: &Trellis,
    system: &ConstraintSystem,
    lambda: &[f64],
) -> Result<(f64, PathAssignment), DualError> {
    check_dimensions(trellis, system)?;
    if lambda.len() != system.row_count() {
        return Err(DualError::MultiplierCount {
            expected: system.row_count(),
            got: lambda.len(),
        });
    }
    if let Some((index, &value)) = lambda.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(DualError::NegativeMultiplier { index, value });
    }

    let mut weights = trellis.weights().to_vec();
    let mut constant_term = 0.0;
    for ((_, row), &mult) in system.rows().zip(lambda) {
        for (&edge, &coeff) in row.coefficients() {
            weights[edge] -= mult * coeff as f64;
        }
        constant_term += mult * row.constant() as f64;
    }
    let penalized = Trellis::new(trellis.alphabet().clone(), trellis.len(), weights)?;
    let path = viterbi(&penalized);
    let value = path_score(&penalized, &path)? + constant_term;
    Ok((value, path))
}

/// Row-violation vector `H·e - b`.
///
/// A zero (or componentwise nonpositive) vector means the path satisfies all
/// hard rows. The descent raises multipliers along this direction; the true
/// subgradient of the dual is its negation.
pub fn subgradient(
    system: &ConstraintSystem,
    path: &PathAssignment,
) -> Result<Vec<f64>, DualError> {
    if path.len() != system.sequence_length() {
        return Err(DualError::SystemMismatch {
            system: system.sequence_length(),
            trellis: path.len(),
        });
    }
    let space = crate::trellis::EdgeSpace::new(
        system.sequence_length(),
        system.alphabet().len(),
    );
    let edges = path.edge_indices(space)?;
    Ok(system
        .rows()
        .map(|(_, row)| row.value_for_edges(&edges) as f64)
        .collect())
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Projected subgradient descent on the dual, starting from zero
/// multipliers with step `theta_k = 1/(k+1)`.
///
/// Stops as soon as an iterate's path is feasible, when `best_dual` has not
/// improved by more than the tolerance over `max_iterations` consecutive
/// iterations, or at the iteration cap.
pub fn solve_dual(
    trellis: &Trellis,
    system: &ConstraintSystem,
    options: &DualOptions,
) -> Result<DualResult, DualError> {
    check_dimensions(trellis, system)?;
    let rows = system.row_count();
    let mut state = LagrangeState::new(rows, options);
    let mut trace = Vec::new();
    let mut best_feasible: Option<(f64, PathAssignment)> = None;
    let mut status = DualStatus::IterationLimit;
    let mut stalled_for = 0usize;

    while state.k < state.max_iterations {
        let (value, path) = dual_value(trellis, system, &state.lambda)?;
        let g = subgradient(system, &path)?;
        let feasible = g.iter().all(|&v| v <= 0.0);
        let norm = l2_norm(&g);
        let theta = 1.0 / (state.k + 1) as f64;
        trace.push(DualIterate {
            k: state.k,
            dual_value: value,
            subgradient_norm: norm,
            feasible,
            theta,
        });

        let improved = value < state.best_dual - state.tolerance;
        if value < state.best_dual {
            state.best_dual = value;
        }
        state.best_path = Some(path.clone());

        if feasible {
            let score = path_score(trellis, &path)?;
            let slack: f64 = state
                .lambda
                .iter()
                .zip(&g)
                .map(|(&l, &gi)| l * gi)
                .sum();
            status = DualStatus::Feasible { complementary_slackness: slack.abs() <= 1e-9 };
            if best_feasible.as_ref().map_or(true, |(s, _)| score > *s) {
                best_feasible = Some((score, path));
            }
            break;
        }

        stalled_for = if improved { 0 } else { stalled_for + 1 };
        if stalled_for >= state.max_iterations {
            status = DualStatus::Stalled;
            break;
        }

        for (slot, &gi) in state.lambda.iter_mut().zip(&g) {
            *slot = (*slot + theta * gi / norm).max(0.0);
        }
        state.k += 1;
    }

    let (path, feasible) = match &best_feasible {
        Some((_, path)) => (path.clone(), true),
        None => (
            state
                .best_path
                .clone()
                .expect("at least one iteration ran"),
            false,
        ),
    };
    let best_feasible_score = best_feasible.as_ref().map(|(s, _)| *s);
    Ok(DualResult {
        path,
        feasible,
        best_dual: state.best_dual,
        best_feasible_score,
        duality_gap: best_feasible_score.map(|s| state.best_dual - s),
        status,
        trace,
    })
}

/// Renders the trace as CSV: `k,L_lambda,subgradient_norm,feasible,theta`.
pub fn trace_csv(trace: &[DualIterate]) -> String {
    let mut out = String::from("k,L_lambda,subgradient_norm,feasible,theta\n");
    for row in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.k, row.dual_value, row.subgradient_norm, row.feasible, row.theta
        );
    }
    out
}
