//! Exact desk-scale solvers over the trellis path polytope.
//!
//! Two problems share one branch-and-bound search over prefix label
//! assignments:
//!
//! * maximum-score decoding, kept as an independent route to cross-check
//!   the dynamic-programming decoder;
//! * minimum-violation-cost decoding: among paths whose score stays above a
//!   floor derived from the unconstrained optimum, find one minimizing the
//!   total cost of violated constraint groups.
//!
//! The search prunes on an optimistic score bound (prefix score plus the
//! per-step maxima of the remaining steps) and on the cost of constraint
//! groups that the prefix has already violated beyond repair. Ties are
//! resolved like the decoder: higher score first, then the lowest label
//! index at the latest differing step.

use std::collections::HashMap;

use thiserror::Error;

use crate::constraints::{ConstraintError, ConstraintSystem};
use crate::trellis::{
    path_score, viterbi, EdgeSpace, Node, PathAssignment, Trellis, TrellisError,
    DEFAULT_PATH_CAP,
};

/// Slack for the score-floor feasibility test at a complete path.
const FLOOR_EPS: f64 = 1e-9;
/// Margin under which optimistic bounds refuse to prune, so float noise in
/// the bound can never cut off a feasible or tying completion.
const PRUNE_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("tau must lie in [0, 1], got {0}")]
    BadTau(f64),
    #[error("constraint system is for length {system} but trellis has length {trellis}")]
    SystemMismatch { system: usize, trellis: usize },
    #[error("no path reaches the score floor {floor} (best achievable score {best_score})")]
    Infeasible { floor: f64, best_score: f64 },
    #[error(transparent)]
    Trellis(#[from] TrellisError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

/// Minimum-violation decoding instance: a trellis, a constraint system, the
/// score-floor fraction `tau`, and the unconstrained optimum `z_star`.
#[derive(Debug, Clone)]
pub struct ConstrainedProblem {
    trellis: Trellis,
    system: ConstraintSystem,
    tau: f64,
    z_star: f64,
}

impl ConstrainedProblem {
    /// Builds the instance, computing `z_star` from the decoder.
    pub fn new(
        trellis: Trellis,
        system: ConstraintSystem,
        tau: f64,
    ) -> Result<Self, SolveError> {
        if !(0.0..=1.0).contains(&tau) || !tau.is_finite() {
            return Err(SolveError::BadTau(tau));
        }
        if system.sequence_length() != trellis.len() {
            return Err(SolveError::SystemMismatch {
                system: system.sequence_length(),
                trellis: trellis.len(),
            });
        }
        let best = viterbi(&trellis);
        let z_star = path_score(&trellis, &best)?;
        Ok(Self { trellis, system, tau, z_star })
    }

    /// Same instance with an externally supplied `z_star`.
    ///
    /// Intended for diagnostics: a `z_star` above the true optimum can make
    /// the floor unreachable, which is the one way to observe the
    /// infeasibility error.
    pub fn with_z_star(
        trellis: Trellis,
        system: ConstraintSystem,
        tau: f64,
        z_star: f64,
    ) -> Result<Self, SolveError> {
        if !(0.0..=1.0).contains(&tau) || !tau.is_finite() {
            return Err(SolveError::BadTau(tau));
        }
        if system.sequence_length() != trellis.len() {
            return Err(SolveError::SystemMismatch {
                system: system.sequence_length(),
                trellis: trellis.len(),
            });
        }
        Ok(Self { trellis, system, tau, z_star })
    }

    pub fn trellis(&self) -> &Trellis {
        &self.trellis
    }

    pub fn system(&self) -> &ConstraintSystem {
        &self.system
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn z_star(&self) -> f64 {
        self.z_star
    }

    /// Minimum admissible score: `z* - (1 - tau) * |z*|`.
    ///
    /// For nonnegative `z*` this is the plain fraction `tau * z*`; writing it
    /// this way keeps `tau = 1` meaning "exactly optimal" and `tau = 0`
    /// meaning "up to `|z*|` worse" when log-domain scores are negative.
    pub fn score_floor(&self) -> f64 {
        self.z_star - (1.0 - self.tau) * self.z_star.abs()
    }
}

/// A decoded path with its violation indicators, total violation cost, and
/// score. `sigma` is always derived from the path itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSolution {
    pub path: PathAssignment,
    pub sigma: Vec<u8>,
    pub total_cost: f64,
    pub score: f64,
}

/// Maximum-score path by branch-and-bound, bypassing the dynamic program.
///
/// Exists to cross-check the decoder: both must return the identical path
/// under the shared tie-break rule.
pub fn solve_unconstrained(trellis: &Trellis) -> Result<(PathAssignment, f64), SolveError> {
    solve_unconstrained_with_cap(trellis, DEFAULT_PATH_CAP)
}

pub fn solve_unconstrained_with_cap(
    trellis: &Trellis,
    cap: u128,
) -> Result<(PathAssignment, f64), SolveError> {
    let space = trellis.space();
    if space.path_count() > cap {
        return Err(TrellisError::PathSpaceTooLarge { paths: space.path_count(), cap }.into());
    }
    let system = ConstraintSystem::empty(trellis.len(), trellis.alphabet());
    let best = Search::new(trellis, &system, None)
        .run()
        .expect("no floor, so some path is always admissible");
    Ok((best.path, best.score))
}

/// Minimum-violation-cost decoding under the score floor, with the default
/// path-space cap.
pub fn solve_min_violation(
    problem: &ConstrainedProblem,
) -> Result<ConstrainedSolution, SolveError> {
    solve_min_violation_with_cap(problem, DEFAULT_PATH_CAP)
}

pub fn solve_min_violation_with_cap(
    problem: &ConstrainedProblem,
    cap: u128,
) -> Result<ConstrainedSolution, SolveError> {
    let space = problem.trellis.space();
    if space.path_count() > cap {
        return Err(TrellisError::PathSpaceTooLarge { paths: space.path_count(), cap }.into());
    }
    let floor = problem.score_floor();
    match Search::new(&problem.trellis, &problem.system, Some(floor)).run() {
        Some(solution) => Ok(solution),
        None => {
            let best = viterbi(&problem.trellis);
            let best_score = path_score(&problem.trellis, &best)?;
            Err(SolveError::Infeasible { floor, best_score })
        }
    }
}

struct RowState {
    value: i64,
    constant: i64,
    group: usize,
    max_time: usize,
    violated: bool,
}

/// Depth-first branch and bound over prefix label assignments.
struct Search<'a> {
    trellis: &'a Trellis,
    system: &'a ConstraintSystem,
    space: EdgeSpace,
    floor: Option<f64>,
    /// optimistic completion: sum of per-time maxima from time t to n
    suffix_max: Vec<f64>,
    /// row updates triggered by each edge: flat index -> [(row, coeff)]
    edge_rows: HashMap<usize, Vec<(usize, i64)>>,
    /// rows becoming fully determined at each time step
    rows_by_time: Vec<Vec<usize>>,
    rows: Vec<RowState>,
    group_violations: Vec<usize>,
    labels: Vec<usize>,
    score_stack: Vec<f64>,
    incumbent: Option<ConstrainedSolution>,
}

impl<'a> Search<'a> {
    fn new(trellis: &'a Trellis, system: &'a ConstraintSystem, floor: Option<f64>) -> Self {
        let space = trellis.space();
        let (n, m) = (space.n(), space.m());
        let w = trellis.weights();

        let mut suffix_max = vec![0.0; n + 2];
        for t in (0..=n).rev() {
            let best = match t {
                0 => w[..m].iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                t if t == n => w[m + (n - 1) * m * m..].iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                _ => {
                    let base = m + (t - 1) * m * m;
                    w[base..base + m * m].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
            };
            suffix_max[t] = best + suffix_max[t + 1];
        }

        let mut edge_rows: HashMap<usize, Vec<(usize, i64)>> = HashMap::new();
        let mut rows_by_time = vec![Vec::new(); n + 1];
        let mut rows = Vec::new();
        for (group, row) in system.rows() {
            let id = rows.len();
            for (&edge, &coeff) in row.coefficients() {
                edge_rows.entry(edge).or_default().push((id, coeff));
            }
            let max_time = row.max_time(space);
            rows_by_time[max_time].push(id);
            rows.push(RowState {
                value: 0,
                constant: row.constant(),
                group,
                max_time,
                violated: false,
            });
        }

        Self {
            trellis,
            system,
            space,
            floor,
            suffix_max,
            edge_rows,
            rows_by_time,
            rows,
            group_violations: vec![0; system.groups().len()],
            labels: Vec::with_capacity(n),
            score_stack: Vec::with_capacity(n + 1),
            incumbent: None,
        }
    }

    fn run(mut self) -> Option<ConstrainedSolution> {
        self.descend(0, Node::Start);
        self.incumbent
    }

    fn definite_cost(&self) -> f64 {
        self.system
            .groups()
            .iter()
            .zip(&self.group_violations)
            .map(|(g, &v)| if v > 0 { g.cost } else { 0.0 })
            .sum()
    }

    fn apply_edge(&mut self, time: usize, flat: usize) {
        if let Some(hits) = self.edge_rows.get(&flat) {
            for &(row, coeff) in hits {
                self.rows[row].value += coeff;
            }
        }
        for &row in &self.rows_by_time[time] {
            let state = &self.rows[row];
            if state.value - state.constant > 0 {
                self.rows[row].violated = true;
                self.group_violations[self.rows[row].group] += 1;
            }
        }
    }

    fn retract_edge(&mut self, time: usize, flat: usize) {
        for &row in &self.rows_by_time[time] {
            if self.rows[row].violated {
                self.rows[row].violated = false;
                self.group_violations[self.rows[row].group] -= 1;
            }
        }
        if let Some(hits) = self.edge_rows.get(&flat) {
            for &(row, coeff) in hits {
                self.rows[row].value -= coeff;
            }
        }
    }

    fn descend(&mut self, position: usize, from: Node) {
        let n = self.space.n();
        for label in 0..self.space.m() {
            let node = Node::Label(label);
            let edge = self.space.index(position, from, node).expect("valid edge");
            let base = self.score_stack.last().copied().unwrap_or(0.0);
            let score = base + self.trellis.weight_at(edge);
            self.score_stack.push(score);
            self.labels.push(label);
            self.apply_edge(position, edge);

            if position + 1 == n {
                let end = self.space.index(n, node, Node::End).expect("valid edge");
                let leaf_score = score + self.trellis.weight_at(end);
                self.apply_edge(n, end);
                self.consider_leaf(leaf_score);
                self.retract_edge(n, end);
            } else if self.admissible(position, score) {
                self.descend(position + 1, node);
            }

            self.retract_edge(position, edge);
            self.labels.pop();
            self.score_stack.pop();
        }
    }

    /// Whether any completion of the current prefix could still be feasible
    /// and at least tie the incumbent.
    fn admissible(&self, position: usize, prefix_score: f64) -> bool {
        let bound = prefix_score + self.suffix_max[position + 1];
        if let Some(floor) = self.floor {
            if bound < floor - FLOOR_EPS - PRUNE_MARGIN {
                return false;
            }
        }
        if let Some(inc) = &self.incumbent {
            let definite = self.definite_cost();
            if definite > inc.total_cost {
                return false;
            }
            if definite == inc.total_cost && bound < inc.score - PRUNE_MARGIN {
                return false;
            }
        }
        true
    }

    fn consider_leaf(&mut self, score: f64) {
        if let Some(floor) = self.floor {
            if score < floor - FLOOR_EPS {
                return;
            }
        }
        let sigma: Vec<u8> = self
            .group_violations
            .iter()
            .map(|&v| u8::from(v > 0))
            .collect();
        let total_cost = self.system.total_cost(&sigma);
        let replace = match &self.incumbent {
            None => true,
            Some(inc) => {
                total_cost < inc.total_cost
                    || (total_cost == inc.total_cost
                        && (score > inc.score
                            || (score == inc.score
                                && colex_less(&self.labels, inc.path.labels()))))
            }
        };
        if replace {
            self.incumbent = Some(ConstrainedSolution {
                path: PathAssignment::new(self.labels.clone(), self.space.m())
                    .expect("labels in range"),
                sigma,
                total_cost,
                score,
            });
        }
    }
}

/// Lower label index at the latest differing step.
fn colex_less(a: &[usize], b: &[usize]) -> bool {
    for (x, y) in a.iter().rev().zip(b.iter().rev()) {
        if x != y {
            return x < y;
        }
    }
    false
}
