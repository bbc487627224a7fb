//! Non-local label constraints and their translation to linear rows.
//!
//! Five template kinds relate labels across a sequence:
//!
//! * `adjacency(A, B)` — every non-final `A` is immediately followed by `B`;
//! * `precedence(A, B)` — every non-final `A` is followed by a `B` somewhere
//!   later in the sequence;
//! * `state_change(A, D, B)` — every non-final `D` is preceded by `A` and
//!   followed by `B` (a `D` in first position has no predecessor and counts
//!   as a violation; a `D` in final position is unconstrained);
//! * `begin_end(A, B)` — a sequence starting with `A` ends with `B`;
//! * `presence_precedence(A, B)` — if `A` appears, no `B` occurs before it.
//!
//! Each template compiles to sparse rows over the flattened edge space of a
//! `(n, m)` trellis. A row with coefficient map `h` and constant `b` is
//! satisfied by an edge-indicator vector `e` when `h·e - b <= 0`; a logical
//! constraint is respected exactly when all of its rows are satisfied, and
//! one violation indicator is shared by the whole group.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::trellis::{EdgeSpace, LabelAlphabet, Node, PathAssignment, TrellisError};

#[derive(Debug, Error, PartialEq)]
pub enum ConstraintError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("precedence({0},{0}) is vacuous")]
    SelfPrecedence(String),
    #[error("violation cost needs at least one observation")]
    EmptyCounts,
    #[error("cost must be finite and nonnegative, got {0}")]
    BadCost(f64),
    #[error("path length {got} does not match system length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("constraint text, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Trellis(#[from] TrellisError),
}

/// One of the five relational constraint templates, over alphabet labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintTemplate {
    Adjacency { a: String, b: String },
    Precedence { a: String, b: String },
    StateChange { a: String, d: String, b: String },
    BeginEnd { a: String, b: String },
    PresencePrecedence { a: String, b: String },
}

use ConstraintTemplate::*;

impl ConstraintTemplate {
    pub fn adjacency(a: &str, b: &str, alphabet: &LabelAlphabet) -> Result<Self, ConstraintError> {
        let t = Adjacency { a: a.into(), b: b.into() };
        t.validate(alphabet)?;
        Ok(t)
    }

    pub fn precedence(a: &str, b: &str, alphabet: &LabelAlphabet) -> Result<Self, ConstraintError> {
        let t = Precedence { a: a.into(), b: b.into() };
        t.validate(alphabet)?;
        Ok(t)
    }

    pub fn state_change(
        a: &str,
        d: &str,
        b: &str,
        alphabet: &LabelAlphabet,
    ) -> Result<Self, ConstraintError> {
        let t = StateChange { a: a.into(), d: d.into(), b: b.into() };
        t.validate(alphabet)?;
        Ok(t)
    }

    pub fn begin_end(a: &str, b: &str, alphabet: &LabelAlphabet) -> Result<Self, ConstraintError> {
        let t = BeginEnd { a: a.into(), b: b.into() };
        t.validate(alphabet)?;
        Ok(t)
    }

    pub fn presence_precedence(
        a: &str,
        b: &str,
        alphabet: &LabelAlphabet,
    ) -> Result<Self, ConstraintError> {
        let t = PresencePrecedence { a: a.into(), b: b.into() };
        t.validate(alphabet)?;
        Ok(t)
    }

    /// Checks that all parameter labels exist and the template is not the
    /// rejected self-precedence form.
    pub fn validate(&self, alphabet: &LabelAlphabet) -> Result<(), ConstraintError> {
        for name in self.param_labels() {
            if alphabet.index_of(name).is_none() {
                return Err(ConstraintError::UnknownLabel(name.to_string()));
            }
        }
        if let Precedence { a, b } = self {
            if a == b {
                return Err(ConstraintError::SelfPrecedence(a.clone()));
            }
        }
        Ok(())
    }

    fn param_labels(&self) -> Vec<&str> {
        match self {
            Adjacency { a, b } | Precedence { a, b } | BeginEnd { a, b }
            | PresencePrecedence { a, b } => vec![a, b],
            StateChange { a, d, b } => vec![a, d, b],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Adjacency { .. } => "adjacency",
            Precedence { .. } => "precedence",
            StateChange { .. } => "state_change",
            BeginEnd { .. } => "begin_end",
            PresencePrecedence { .. } => "presence_precedence",
        }
    }

    /// Stable identifier used for ordering and reporting.
    pub fn id(&self) -> String {
        match self {
            Adjacency { a, b } => format!("adjacency({a},{b})"),
            Precedence { a, b } => format!("precedence({a},{b})"),
            StateChange { a, d, b } => format!("state_change({a},{d},{b})"),
            BeginEnd { a, b } => format!("begin_end({a},{b})"),
            PresencePrecedence { a, b } => format!("presence_precedence({a},{b})"),
        }
    }

    fn resolve(
        &self,
        alphabet: &LabelAlphabet,
    ) -> Result<(usize, usize, Option<usize>), ConstraintError> {
        let look = |name: &str| {
            alphabet
                .index_of(name)
                .ok_or_else(|| ConstraintError::UnknownLabel(name.to_string()))
        };
        match self {
            Adjacency { a, b } | Precedence { a, b } | BeginEnd { a, b }
            | PresencePrecedence { a, b } => Ok((look(a)?, look(b)?, None)),
            StateChange { a, d, b } => Ok((look(a)?, look(b)?, Some(look(d)?))),
        }
    }

    /// Whether the template's premise occurs in the label sequence at all;
    /// a sequence where it never fires carries no evidence either way.
    pub fn antecedent_fires(
        &self,
        labels: &[usize],
        alphabet: &LabelAlphabet,
    ) -> Result<bool, ConstraintError> {
        let (a, _, d) = self.resolve(alphabet)?;
        let n = labels.len();
        Ok(match self {
            Adjacency { .. } | Precedence { .. } => labels[..n - 1].contains(&a),
            StateChange { .. } => labels[..n - 1].contains(&d.unwrap()),
            BeginEnd { .. } => labels[0] == a,
            PresencePrecedence { .. } => labels.contains(&a),
        })
    }

    /// Direct evaluation of the template's meaning on a label sequence.
    pub fn holds(
        &self,
        labels: &[usize],
        alphabet: &LabelAlphabet,
    ) -> Result<bool, ConstraintError> {
        let (a, b, d) = self.resolve(alphabet)?;
        let n = labels.len();
        Ok(match self {
            Adjacency { .. } => (0..n - 1).all(|p| labels[p] != a || labels[p + 1] == b),
            Precedence { .. } => {
                (0..n - 1).all(|p| labels[p] != a || labels[p + 1..].contains(&b))
            }
            StateChange { .. } => {
                let d = d.unwrap();
                (0..n - 1).all(|p| {
                    labels[p] != d || (p >= 1 && labels[p - 1] == a && labels[p + 1] == b)
                })
            }
            BeginEnd { .. } => labels[0] != a || labels[n - 1] == b,
            PresencePrecedence { .. } => {
                !(0..n).any(|p| labels[p] == a && labels[..p].contains(&b))
            }
        })
    }
}

/// A sparse linear row over the edge space: satisfied when
/// `coefficients · e - constant <= 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearRow {
    coefficients: BTreeMap<usize, i64>,
    constant: i64,
}

impl LinearRow {
    fn new(coefficients: BTreeMap<usize, i64>, constant: i64) -> Self {
        debug_assert!(!coefficients.is_empty());
        debug_assert!(constant == 0 || constant == 1);
        Self { coefficients, constant }
    }

    pub fn coefficients(&self) -> &BTreeMap<usize, i64> {
        &self.coefficients
    }

    pub fn constant(&self) -> i64 {
        self.constant
    }

    /// `h·e - b` for a path given by its selected edge indices.
    pub fn value_for_edges(&self, edge_indices: &[usize]) -> i64 {
        let selected: i64 = edge_indices
            .iter()
            .filter_map(|idx| self.coefficients.get(idx))
            .sum();
        selected - self.constant
    }

    /// Largest time step the row touches; a partial path determines the row
    /// once all steps up to this one are fixed.
    pub fn max_time(&self, space: EdgeSpace) -> usize {
        self.coefficients
            .keys()
            .map(|&idx| space.edge_at(idx).expect("row index valid").0)
            .max()
            .unwrap_or(0)
    }
}

fn add_coeff(map: &mut BTreeMap<usize, i64>, index: usize, delta: i64) {
    let entry = map.entry(index).or_insert(0);
    *entry += delta;
    if *entry == 0 {
        map.remove(&index);
    }
}

/// Edges at time `position` entering `label`, i.e. the indicator that the
/// path visits `label` at that position.
fn incoming(space: EdgeSpace, position: usize, label: usize) -> Vec<usize> {
    if position == 0 {
        vec![space.index(0, Node::Start, Node::Label(label)).expect("valid")]
    } else {
        (0..space.m())
            .map(|y| space.index(position, Node::Label(y), Node::Label(label)).expect("valid"))
            .collect()
    }
}

/// Edges leaving `label` at `position` (time `position + 1`).
fn outgoing(space: EdgeSpace, position: usize, label: usize) -> Vec<usize> {
    if position + 1 == space.n() {
        vec![space.index(space.n(), Node::Label(label), Node::End).expect("valid")]
    } else {
        (0..space.m())
            .map(|y| {
                space.index(position + 1, Node::Label(label), Node::Label(y)).expect("valid")
            })
            .collect()
    }
}

/// Compiles a template to its linear rows for a length-`n` trellis.
///
/// Templates that cannot fire at the given length (for example adjacency at
/// `n = 1`) produce an empty, vacuously satisfied row list. Rows whose
/// coefficient set would be empty are dropped for the same reason.
pub fn encode(
    template: &ConstraintTemplate,
    n: usize,
    alphabet: &LabelAlphabet,
) -> Result<Vec<LinearRow>, ConstraintError> {
    template.validate(alphabet)?;
    let (a, b, d) = template.resolve(alphabet)?;
    let space = EdgeSpace::new(n, alphabet.len());
    let mut rows = Vec::new();

    match template {
        Adjacency { .. } => {
            for t in 1..n {
                let mut h = BTreeMap::new();
                for idx in incoming(space, t - 1, a) {
                    add_coeff(&mut h, idx, 1);
                }
                let ab = space.index(t, Node::Label(a), Node::Label(b))?;
                add_coeff(&mut h, ab, -1);
                rows.push(LinearRow::new(h, 0));
            }
        }
        Precedence { .. } => {
            for t in 1..n {
                let mut h = BTreeMap::new();
                for idx in incoming(space, t - 1, a) {
                    add_coeff(&mut h, idx, 1);
                }
                for q in t..n {
                    for idx in outgoing(space, q, b) {
                        add_coeff(&mut h, idx, -1);
                    }
                }
                rows.push(LinearRow::new(h, 0));
            }
        }
        StateChange { .. } => {
            let d = d.unwrap();
            for t in 1..n {
                // predecessor of a D at position t-1 must be A
                let mut pred = BTreeMap::new();
                if t - 1 == 0 {
                    let idx = space.index(0, Node::Start, Node::Label(d))?;
                    add_coeff(&mut pred, idx, 1);
                } else {
                    for y in (0..space.m()).filter(|&y| y != a) {
                        let idx = space.index(t - 1, Node::Label(y), Node::Label(d))?;
                        add_coeff(&mut pred, idx, 1);
                    }
                }
                if !pred.is_empty() {
                    rows.push(LinearRow::new(pred, 0));
                }
                // successor of a D at position t-1 must be B
                let mut succ = BTreeMap::new();
                for y in (0..space.m()).filter(|&y| y != b) {
                    let idx = space.index(t, Node::Label(d), Node::Label(y))?;
                    add_coeff(&mut succ, idx, 1);
                }
                if !succ.is_empty() {
                    rows.push(LinearRow::new(succ, 0));
                }
            }
        }
        BeginEnd { .. } => {
            let mut h = BTreeMap::new();
            add_coeff(&mut h, space.index(0, Node::Start, Node::Label(a))?, 1);
            add_coeff(&mut h, space.index(n, Node::Label(b), Node::End)?, -1);
            rows.push(LinearRow::new(h, 0));
        }
        PresencePrecedence { .. } => {
            for p in 1..n {
                for q in 0..p {
                    let mut h = BTreeMap::new();
                    for idx in incoming(space, p, a) {
                        add_coeff(&mut h, idx, 1);
                    }
                    for idx in incoming(space, q, b) {
                        add_coeff(&mut h, idx, 1);
                    }
                    rows.push(LinearRow::new(h, 1));
                }
            }
        }
    }
    Ok(rows)
}

/// A template with its compiled rows and violation cost; the violation
/// indicator is shared by all rows of the group.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGroup {
    pub template: ConstraintTemplate,
    pub rows: Vec<LinearRow>,
    pub cost: f64,
}

/// All constraint groups compiled against one `(n, alphabet)` trellis shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    alphabet: LabelAlphabet,
    n: usize,
    groups: Vec<ConstraintGroup>,
}

impl ConstraintSystem {
    pub fn build(
        templates: &[(ConstraintTemplate, f64)],
        n: usize,
        alphabet: &LabelAlphabet,
    ) -> Result<Self, ConstraintError> {
        let mut groups = Vec::with_capacity(templates.len());
        for (template, cost) in templates {
            if !cost.is_finite() || *cost < 0.0 {
                return Err(ConstraintError::BadCost(*cost));
            }
            let rows = encode(template, n, alphabet)?;
            groups.push(ConstraintGroup { template: template.clone(), rows, cost: *cost });
        }
        Ok(Self { alphabet: alphabet.clone(), n, groups })
    }

    pub fn empty(n: usize, alphabet: &LabelAlphabet) -> Self {
        Self { alphabet: alphabet.clone(), n, groups: Vec::new() }
    }

    pub fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    pub fn sequence_length(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> &[ConstraintGroup] {
        &self.groups
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// All rows in group order, each with the index of its group.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &LinearRow)> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, group)| group.rows.iter().map(move |row| (g, row)))
    }

    pub fn row_count(&self) -> usize {
        self.groups.iter().map(|g| g.rows.len()).sum()
    }

    /// Total violation cost `c·sigma` for a given indicator vector.
    pub fn total_cost(&self, sigma: &[u8]) -> f64 {
        self.groups
            .iter()
            .zip(sigma)
            .map(|(g, &s)| if s != 0 { g.cost } else { 0.0 })
            .sum()
    }
}

/// Per-group violation indicators: 1 exactly when some row of the group has
/// `h·e - b > 0` on the path.
pub fn check_violation(
    system: &ConstraintSystem,
    path: &PathAssignment,
) -> Result<Vec<u8>, ConstraintError> {
    if path.len() != system.n {
        return Err(ConstraintError::LengthMismatch { expected: system.n, got: path.len() });
    }
    let space = EdgeSpace::new(system.n, system.alphabet.len());
    let edges = path.edge_indices(space)?;
    Ok(system
        .groups
        .iter()
        .map(|group| u8::from(group.rows.iter().any(|row| row.value_for_edges(&edges) > 0)))
        .collect())
}

/// Cost of breaking a constraint, from its satisfaction statistics:
/// the negative log of the add-one-smoothed violation probability,
/// `log(|D| + |D̄| + 2) - log(|D̄| + 1)`.
pub fn violation_cost(
    support_satisfied: usize,
    support_violated: usize,
) -> Result<f64, ConstraintError> {
    if support_satisfied + support_violated == 0 {
        return Err(ConstraintError::EmptyCounts);
    }
    let total = (support_satisfied + support_violated) as f64;
    Ok((total + 2.0).ln() - (support_violated as f64 + 1.0).ln())
}

/// Mining thresholds plus the labels allowed as the separator `D` in
/// `state_change` candidates.
#[derive(Debug, Clone)]
pub struct MinerConfig {
    pub min_support: usize,
    pub max_violation_rate: f64,
    pub separator_labels: Vec<String>,
}

impl MinerConfig {
    pub fn new(min_support: usize, max_violation_rate: f64) -> Self {
        Self { min_support, max_violation_rate, separator_labels: Vec::new() }
    }

    pub fn with_separators(mut self, separators: Vec<String>) -> Self {
        self.separator_labels = separators;
        self
    }
}

/// A template surviving the mining thresholds, with its evidence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MinedConstraint {
    pub template: ConstraintTemplate,
    pub support: usize,
    pub violated: usize,
    pub violation_rate: f64,
}

impl MinedConstraint {
    /// Violation cost implied by the mining counts.
    pub fn cost(&self) -> f64 {
        violation_cost(self.support - self.violated, self.violated)
            .expect("support >= 1 by construction")
    }
}

/// Scans every template instantiation over the alphabet and keeps the ones
/// with enough support and a low enough per-sequence violation rate.
///
/// Support counts sequences where the template's premise fires; the rate is
/// the fraction of those it fails on. Results are ordered by ascending
/// violation rate, then descending support, then template id.
pub fn mine(
    sequences: &[Vec<usize>],
    alphabet: &LabelAlphabet,
    config: &MinerConfig,
) -> Result<Vec<MinedConstraint>, ConstraintError> {
    let names = alphabet.labels();
    let mut candidates: Vec<ConstraintTemplate> = Vec::new();
    for a in names {
        for b in names {
            candidates.push(Adjacency { a: a.clone(), b: b.clone() });
            if a != b {
                candidates.push(Precedence { a: a.clone(), b: b.clone() });
            }
            candidates.push(BeginEnd { a: a.clone(), b: b.clone() });
            candidates.push(PresencePrecedence { a: a.clone(), b: b.clone() });
            for d in &config.separator_labels {
                if alphabet.index_of(d).is_none() {
                    return Err(ConstraintError::UnknownLabel(d.clone()));
                }
                candidates.push(StateChange { a: a.clone(), d: d.clone(), b: b.clone() });
            }
        }
    }

    let mut mined = Vec::new();
    for template in candidates {
        let mut support = 0usize;
        let mut violated = 0usize;
        for labels in sequences {
            if labels.is_empty() {
                continue;
            }
            if template.antecedent_fires(labels, alphabet)? {
                support += 1;
                if !template.holds(labels, alphabet)? {
                    violated += 1;
                }
            }
        }
        if support < config.min_support || support == 0 {
            continue;
        }
        let violation_rate = violated as f64 / support as f64;
        if violation_rate > config.max_violation_rate {
            continue;
        }
        mined.push(MinedConstraint { template, support, violated, violation_rate });
    }

    mined.sort_by(|x, y| {
        x.violation_rate
            .total_cmp(&y.violation_rate)
            .then(y.support.cmp(&x.support))
            .then(x.template.id().cmp(&y.template.id()))
    });
    Ok(mined)
}

/// Writes constraints in the line format `kind<TAB>A<TAB>B[<TAB>D]<TAB>cost`.
pub fn format_constraints(constraints: &[(ConstraintTemplate, f64)]) -> String {
    let mut out = String::new();
    for (template, cost) in constraints {
        let line = match template {
            Adjacency { a, b } | Precedence { a, b } | BeginEnd { a, b }
            | PresencePrecedence { a, b } => {
                format!("{}\t{a}\t{b}\t{cost}\n", template.kind())
            }
            StateChange { a, d, b } => format!("state_change\t{a}\t{b}\t{d}\t{cost}\n"),
        };
        out.push_str(&line);
    }
    out
}

/// Parses the constraint file format; `#` lines are comments.
pub fn parse_constraints(
    text: &str,
    alphabet: &LabelAlphabet,
) -> Result<Vec<(ConstraintTemplate, f64)>, ConstraintError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let err = |msg: String| ConstraintError::Parse { line: idx + 1, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        let (template, cost_field) = match (fields.first().copied(), fields.len()) {
            (Some("state_change"), 5) => (
                StateChange {
                    a: fields[1].to_string(),
                    d: fields[3].to_string(),
                    b: fields[2].to_string(),
                },
                fields[4],
            ),
            (Some("adjacency"), 4) => {
                (Adjacency { a: fields[1].into(), b: fields[2].into() }, fields[3])
            }
            (Some("precedence"), 4) => {
                (Precedence { a: fields[1].into(), b: fields[2].into() }, fields[3])
            }
            (Some("begin_end"), 4) => {
                (BeginEnd { a: fields[1].into(), b: fields[2].into() }, fields[3])
            }
            (Some("presence_precedence"), 4) => {
                (PresencePrecedence { a: fields[1].into(), b: fields[2].into() }, fields[3])
            }
            (Some(kind), _) => {
                return Err(err(format!(
                    "unrecognized constraint line (kind {kind:?} with {} fields)",
                    fields.len()
                )))
            }
            (None, _) => unreachable!("non-empty line"),
        };
        template.validate(alphabet).map_err(|e| err(e.to_string()))?;
        let cost: f64 = cost_field
            .parse()
            .map_err(|_| err(format!("bad cost {cost_field:?}")))?;
        if !cost.is_finite() || cost < 0.0 {
            return Err(err(format!("cost must be finite and nonnegative, got {cost}")));
        }
        out.push((template, cost));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trellis::edge_index;

    fn alphabet(m: usize) -> LabelAlphabet {
        let names = ["A", "B", "C"];
        LabelAlphabet::with_default_bounds(names[..m].iter().map(|s| s.to_string()).collect())
            .unwrap()
    }

    #[test]
    fn adjacency_rows_match_explicit_encoding() {
        let ab = alphabet(2);
        let template = ConstraintTemplate::adjacency("A", "B", &ab).unwrap();
        let rows = encode(&template, 3, &ab).unwrap();
        assert_eq!(rows.len(), 2);

        // t=1: + on the lone edge entering A at time 0, - on (1, A, B)
        let mut expect = BTreeMap::new();
        expect.insert(edge_index(0, "<s>", "A", 3, &ab).unwrap(), 1);
        expect.insert(edge_index(1, "A", "B", 3, &ab).unwrap(), -1);
        assert_eq!(rows[0].coefficients(), &expect);
        assert_eq!(rows[0].constant(), 0);

        // t=2: + on both edges entering A at time 1, - on (2, A, B)
        let mut expect = BTreeMap::new();
        expect.insert(edge_index(1, "A", "A", 3, &ab).unwrap(), 1);
        expect.insert(edge_index(1, "B", "A", 3, &ab).unwrap(), 1);
        expect.insert(edge_index(2, "A", "B", 3, &ab).unwrap(), -1);
        assert_eq!(rows[1].coefficients(), &expect);
    }

    #[test]
    fn begin_end_is_one_row_with_two_coefficients() {
        for n in 1..5 {
            let ab = alphabet(2);
            let template = ConstraintTemplate::begin_end("A", "B", &ab).unwrap();
            let rows = encode(&template, n, &ab).unwrap();
            assert_eq!(rows.len(), 1);
            let mut expect = BTreeMap::new();
            expect.insert(edge_index(0, "<s>", "A", n, &ab).unwrap(), 1);
            expect.insert(edge_index(n, "B", "</s>", n, &ab).unwrap(), -1);
            assert_eq!(rows[0].coefficients(), &expect);
        }
    }

    #[test]
    fn row_counts_per_template() {
        let ab = alphabet(3);
        let n = 4;
        let enc = |t: &ConstraintTemplate| encode(t, n, &ab).unwrap().len();
        assert_eq!(enc(&ConstraintTemplate::adjacency("A", "B", &ab).unwrap()), n - 1);
        assert_eq!(enc(&ConstraintTemplate::precedence("A", "B", &ab).unwrap()), n - 1);
        assert_eq!(
            enc(&ConstraintTemplate::state_change("A", "C", "B", &ab).unwrap()),
            2 * (n - 1)
        );
        assert_eq!(enc(&ConstraintTemplate::begin_end("A", "B", &ab).unwrap()), 1);
        // one row per ordered pair of positions q < p
        assert_eq!(
            enc(&ConstraintTemplate::presence_precedence("A", "B", &ab).unwrap()),
            n * (n - 1) / 2
        );
    }

    #[test]
    fn templates_vacuous_at_length_one() {
        let ab = alphabet(2);
        for template in [
            ConstraintTemplate::adjacency("A", "B", &ab).unwrap(),
            ConstraintTemplate::precedence("A", "B", &ab).unwrap(),
            ConstraintTemplate::state_change("A", "B", "A", &ab).unwrap(),
            ConstraintTemplate::presence_precedence("A", "B", &ab).unwrap(),
        ] {
            assert!(encode(&template, 1, &ab).unwrap().is_empty(), "{}", template.id());
        }
        // begin_end still binds a length-1 sequence
        let be = ConstraintTemplate::begin_end("A", "B", &ab).unwrap();
        assert_eq!(encode(&be, 1, &ab).unwrap().len(), 1);
    }

    #[test]
    fn self_precedence_rejected() {
        let ab = alphabet(2);
        assert_eq!(
            ConstraintTemplate::precedence("A", "A", &ab),
            Err(ConstraintError::SelfPrecedence("A".into()))
        );
        // other templates accept equal parameters
        assert!(ConstraintTemplate::adjacency("A", "A", &ab).is_ok());
        assert!(ConstraintTemplate::begin_end("B", "B", &ab).is_ok());
        assert!(ConstraintTemplate::presence_precedence("A", "A", &ab).is_ok());
    }

    #[test]
    fn unknown_label_rejected() {
        let ab = alphabet(2);
        assert_eq!(
            ConstraintTemplate::adjacency("A", "Z", &ab),
            Err(ConstraintError::UnknownLabel("Z".into()))
        );
    }

    #[test]
    fn check_violation_empty_system() {
        let ab = alphabet(2);
        let system = ConstraintSystem::empty(3, &ab);
        let path = PathAssignment::new(vec![0, 1, 0], 2).unwrap();
        assert_eq!(check_violation(&system, &path).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn adjacent_pair_satisfies_adjacency() {
        let ab = alphabet(2);
        let template = ConstraintTemplate::adjacency("A", "B", &ab).unwrap();
        let system = ConstraintSystem::build(&[(template, 1.0)], 3, &ab).unwrap();
        // A B B: the one non-final A is followed by B
        let good = PathAssignment::from_names(&["A", "B", "B"], &ab).unwrap();
        assert_eq!(check_violation(&system, &good).unwrap(), vec![0]);
        // A A B: the A at position 0 is followed by A
        let bad = PathAssignment::from_names(&["A", "A", "B"], &ab).unwrap();
        assert_eq!(check_violation(&system, &bad).unwrap(), vec![1]);
    }

    #[test]
    fn check_violation_rejects_length_mismatch() {
        let ab = alphabet(2);
        let system = ConstraintSystem::empty(3, &ab);
        let path = PathAssignment::new(vec![0], 2).unwrap();
        assert!(matches!(
            check_violation(&system, &path),
            Err(ConstraintError::LengthMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn violation_cost_frozen_values() {
        // |D|=1, |D̄|=1: -log(2/4) = log 2
        assert!((violation_cost(1, 1).unwrap() - 2.0_f64.ln()).abs() < 1e-12);
        // |D|=9, |D̄|=0: -log(1/11) = log 11
        assert!((violation_cost(9, 0).unwrap() - 11.0_f64.ln()).abs() < 1e-12);
        assert_eq!(violation_cost(0, 0), Err(ConstraintError::EmptyCounts));
    }

    #[test]
    fn violation_cost_monotone_in_violations() {
        // holding |D| + |D̄| fixed, more violations never raise the cost
        for total in 1..12 {
            let mut prev = f64::INFINITY;
            for violated in 0..=total {
                let cost = violation_cost(total - violated, violated).unwrap();
                assert!(cost <= prev + 1e-12);
                assert!(cost >= 0.0);
                prev = cost;
            }
        }
    }

    #[test]
    fn mine_finds_perfect_begin_end() {
        let ab = alphabet(2);
        let sequences: Vec<Vec<usize>> =
            vec![vec![0, 1, 1], vec![0, 0, 1], vec![0, 1, 0, 1], vec![0, 1]];
        let config = MinerConfig::new(2, 0.0);
        let mined = mine(&sequences, &ab, &config).unwrap();
        let be: Vec<_> = mined
            .iter()
            .filter(|m| m.template == ConstraintTemplate::begin_end("A", "B", &ab).unwrap())
            .collect();
        assert_eq!(be.len(), 1);
        assert_eq!(be[0].support, 4);
        assert_eq!(be[0].violated, 0);
        assert_eq!(be[0].violation_rate, 0.0);
    }

    #[test]
    fn mine_skips_absent_labels() {
        let ab = alphabet(3);
        // C never occurs: no template whose premise mentions C has support
        let sequences: Vec<Vec<usize>> = vec![vec![0, 1, 1], vec![0, 1, 0]];
        let mined = mine(&sequences, &ab, &MinerConfig::new(1, 1.0)).unwrap();
        for m in &mined {
            match &m.template {
                Adjacency { a, .. } | Precedence { a, .. } | BeginEnd { a, .. }
                | PresencePrecedence { a, .. } => assert_ne!(a, "C", "{}", m.template.id()),
                StateChange { .. } => unreachable!("no separators configured"),
            }
        }
    }

    #[test]
    fn mine_counts_nine_of_ten() {
        let ab = alphabet(2);
        // adjacency(A,B) fires in ten sequences and is broken in exactly one
        let mut sequences: Vec<Vec<usize>> = (0..9).map(|_| vec![0, 1, 1]).collect();
        sequences.push(vec![0, 0, 1]);
        let mined = mine(&sequences, &ab, &MinerConfig::new(1, 0.5)).unwrap();
        let adj = mined
            .iter()
            .find(|m| m.template == ConstraintTemplate::adjacency("A", "B", &ab).unwrap())
            .unwrap();
        assert_eq!(adj.support, 10);
        assert_eq!(adj.violated, 1);
        assert_eq!(adj.violation_rate, 0.1);
    }

    #[test]
    fn mine_ordering_is_total() {
        let ab = alphabet(2);
        let sequences: Vec<Vec<usize>> = vec![vec![0, 1, 1], vec![0, 1, 0], vec![1, 0, 1]];
        let mined = mine(&sequences, &ab, &MinerConfig::new(1, 1.0)).unwrap();
        for pair in mined.windows(2) {
            let key = |m: &MinedConstraint| {
                (m.violation_rate, std::cmp::Reverse(m.support), m.template.id())
            };
            let (ka, kb) = (key(&pair[0]), key(&pair[1]));
            assert!(ka.0 < kb.0 || (ka.0 == kb.0 && (ka.1, ka.2.clone()) < (kb.1, kb.2.clone())));
        }
    }

    #[test]
    fn constraint_file_round_trip() {
        let ab = alphabet(3);
        let constraints = vec![
            (ConstraintTemplate::adjacency("A", "B", &ab).unwrap(), 1.5),
            (ConstraintTemplate::state_change("A", "C", "B", &ab).unwrap(), 0.25),
            (ConstraintTemplate::begin_end("C", "C", &ab).unwrap(), 2.0),
            (ConstraintTemplate::presence_precedence("B", "A", &ab).unwrap(), 0.125),
            (ConstraintTemplate::precedence("A", "C", &ab).unwrap(), 3.0),
        ];
        let text = format_constraints(&constraints);
        let with_comment = format!("# mined constraints\n{text}\n");
        let back = parse_constraints(&with_comment, &ab).unwrap();
        assert_eq!(back, constraints);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let ab = alphabet(2);
        assert!(matches!(
            parse_constraints("adjacency\tA\n", &ab),
            Err(ConstraintError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_constraints("# ok\nadjacency\tA\tB\t-1.0\n", &ab),
            Err(ConstraintError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_constraints("adjacency\tA\tZ\t1.0\n", &ab),
            Err(ConstraintError::Parse { line: 1, .. })
        ));
    }
}
