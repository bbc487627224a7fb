//! Feature-based model over observation sequences.
//!
//! A model is a weighted list of binary features. State features test one
//! property of the observation window at a position together with the label
//! assigned there; transition features test the labels of an interior edge.
//! The trellis entry for an edge is the sum of the weights of the features
//! firing on it, so a path's score is the log of its unnormalized
//! probability and the partition function normalizes over all paths.
//!
//! Start and end edges carry only the state terms of their real endpoint:
//! the synthetic boundary labels have no features of their own, and
//! transition features apply to interior edges only.
//!
//! Training is an averaged structured perceptron: decode each sequence with
//! the current weights and, on a mistake, move every feature weight toward
//! its count on the gold path and away from its count on the predicted one.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::trellis::{
    path_score, viterbi, EdgeSpace, LabelAlphabet, Node, Trellis, TrellisError,
};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("sequence {index}: {tokens} tokens but {labels} labels")]
    SequenceShape { index: usize, tokens: usize, labels: usize },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("label index {index} out of range for alphabet of size {size}")]
    LabelOutOfRange { index: usize, size: usize },
    #[error("{0}")]
    BadHyperparameter(String),
    #[error("duplicate feature {0}")]
    DuplicateFeature(String),
    #[error("{got} weights for {expected} features")]
    WeightCount { expected: usize, got: usize },
    #[error("weight of feature {0} is not finite")]
    NonFiniteWeight(String),
    #[error("token {0:?} is empty or contains a tab/newline")]
    BadToken(String),
    #[error("model text, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Trellis(#[from] TrellisError),
}

/// The observed token sequence `x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSequence {
    tokens: Vec<String>,
}

impl ObservationSequence {
    pub fn new(tokens: Vec<String>) -> Result<Self, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        for token in &tokens {
            if token.is_empty() || token.contains('\t') || token.contains('\n') {
                return Err(ModelError::BadToken(token.clone()));
            }
        }
        Ok(Self { tokens })
    }

    pub fn from_strs(tokens: &[&str]) -> Result<Self, ModelError> {
        Self::new(tokens.iter().map(|t| t.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, position: usize) -> &str {
        &self.tokens[position]
    }
}

/// Marker used as the previous-token key at position 0.
const BOS: &str = "<BOS>";
/// Marker used as the next-token key at the last position.
const EOS: &str = "<EOS>";

/// Capitalization/digit pattern of a token: `X` upper, `x` lower, `d` digit,
/// other characters kept as-is.
pub fn token_shape(token: &str) -> String {
    token
        .chars()
        .map(|c| {
            if c.is_uppercase() {
                'X'
            } else if c.is_lowercase() {
                'x'
            } else if c.is_ascii_digit() {
                'd'
            } else {
                c
            }
        })
        .collect()
}

/// One observation-window test of a state feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StateKey {
    Token(String),
    Lower(String),
    Shape(String),
    PrevToken(String),
    NextToken(String),
}

impl StateKey {
    fn tag(&self) -> &'static str {
        match self {
            StateKey::Token(_) => "token",
            StateKey::Lower(_) => "lower",
            StateKey::Shape(_) => "shape",
            StateKey::PrevToken(_) => "prev",
            StateKey::NextToken(_) => "next",
        }
    }

    fn value(&self) -> &str {
        match self {
            StateKey::Token(v)
            | StateKey::Lower(v)
            | StateKey::Shape(v)
            | StateKey::PrevToken(v)
            | StateKey::NextToken(v) => v,
        }
    }
}

/// The five window keys active at one position, in a fixed order.
pub fn state_keys(x: &ObservationSequence, position: usize) -> [StateKey; 5] {
    let token = x.token(position);
    let prev = if position == 0 { BOS } else { x.token(position - 1) };
    let next = if position + 1 == x.len() { EOS } else { x.token(position + 1) };
    [
        StateKey::Token(token.to_string()),
        StateKey::Lower(token.to_lowercase()),
        StateKey::Shape(token_shape(token)),
        StateKey::PrevToken(prev.to_string()),
        StateKey::NextToken(next.to_string()),
    ]
}

/// A site of the trellis a feature can test: a vertex (position, label) or
/// an interior edge between two real labels.
#[derive(Debug, Clone, Copy)]
pub enum Site<'a> {
    Vertex { x: &'a ObservationSequence, position: usize, label: usize },
    Edge { from: usize, to: usize },
}

/// A binary feature with a stable identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Feature {
    /// Fires on a vertex whose window matches `key` and whose label matches.
    State { key: StateKey, label: usize },
    /// Fires on an interior edge; `None` matches any label on that side.
    Transition { from: Option<usize>, to: Option<usize> },
}

impl Feature {
    /// Deterministic 0/1 evaluation at a trellis site.
    pub fn fires(&self, site: Site<'_>) -> bool {
        match (self, site) {
            (Feature::State { key, label }, Site::Vertex { x, position, label: at }) => {
                *label == at && state_keys(x, position).contains(key)
            }
            (Feature::Transition { from, to }, Site::Edge { from: ef, to: et }) => {
                from.map_or(true, |f| f == ef) && to.map_or(true, |t| t == et)
            }
            _ => false,
        }
    }

    /// Stable identifier, parseable back by the model reader.
    pub fn id(&self) -> String {
        match self {
            Feature::State { key, label } => {
                format!("s:{}:{}:{}", key.tag(), label, key.value())
            }
            Feature::Transition { from, to } => {
                let part = |side: &Option<usize>| match side {
                    Some(i) => i.to_string(),
                    None => "*".to_string(),
                };
                format!("t:{}:{}", part(from), part(to))
            }
        }
    }

    fn parse(id: &str) -> Option<Feature> {
        let mut parts = id.splitn(2, ':');
        match parts.next()? {
            "s" => {
                let rest = parts.next()?;
                let mut fields = rest.splitn(3, ':');
                let tag = fields.next()?;
                let label: usize = fields.next()?.parse().ok()?;
                let value = fields.next()?.to_string();
                let key = match tag {
                    "token" => StateKey::Token(value),
                    "lower" => StateKey::Lower(value),
                    "shape" => StateKey::Shape(value),
                    "prev" => StateKey::PrevToken(value),
                    "next" => StateKey::NextToken(value),
                    _ => return None,
                };
                Some(Feature::State { key, label })
            }
            "t" => {
                let rest = parts.next()?;
                let mut fields = rest.splitn(2, ':');
                let side = |s: &str| -> Option<Option<usize>> {
                    if s == "*" {
                        Some(None)
                    } else {
                        s.parse().ok().map(Some)
                    }
                };
                let from = side(fields.next()?)?;
                let to = side(fields.next()?)?;
                Some(Feature::Transition { from, to })
            }
            _ => None,
        }
    }

    fn max_label(&self) -> Option<usize> {
        match self {
            Feature::State { label, .. } => Some(*label),
            Feature::Transition { from, to } => from.iter().chain(to.iter()).copied().max(),
        }
    }
}

/// A label alphabet, a feature list, and one weight per feature.
#[derive(Debug, Clone)]
pub struct CrfModel {
    alphabet: LabelAlphabet,
    features: Vec<Feature>,
    weights: Vec<f64>,
    state_index: HashMap<StateKey, Vec<(usize, usize)>>,
}

impl CrfModel {
    pub fn new(
        alphabet: LabelAlphabet,
        features: Vec<Feature>,
        weights: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if weights.len() != features.len() {
            return Err(ModelError::WeightCount { expected: features.len(), got: weights.len() });
        }
        let m = alphabet.len();
        let mut seen = HashMap::with_capacity(features.len());
        for (i, feature) in features.iter().enumerate() {
            if !weights[i].is_finite() {
                return Err(ModelError::NonFiniteWeight(feature.id()));
            }
            if let Some(label) = feature.max_label() {
                if label >= m {
                    return Err(ModelError::LabelOutOfRange { index: label, size: m });
                }
            }
            if seen.insert(feature.clone(), i).is_some() {
                return Err(ModelError::DuplicateFeature(feature.id()));
            }
        }
        let mut state_index: HashMap<StateKey, Vec<(usize, usize)>> = HashMap::new();
        for (i, feature) in features.iter().enumerate() {
            if let Feature::State { key, label } = feature {
                state_index.entry(key.clone()).or_default().push((*label, i));
            }
        }
        Ok(Self { alphabet, features, weights, state_index })
    }

    pub fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_of(&self, id: &str) -> Option<f64> {
        self.features.iter().position(|f| f.id() == id).map(|i| self.weights[i])
    }

    /// Sum of state-feature weights per (position, label).
    fn state_sums(&self, x: &ObservationSequence) -> Vec<Vec<f64>> {
        let m = self.alphabet.len();
        let mut sums = vec![vec![0.0; m]; x.len()];
        for (t, row) in sums.iter_mut().enumerate() {
            for key in state_keys(x, t) {
                if let Some(hits) = self.state_index.get(&key) {
                    for &(label, fi) in hits {
                        row[label] += self.weights[fi];
                    }
                }
            }
        }
        sums
    }

    /// Sum of transition-feature weights per interior (from, to) pair.
    fn transition_sums(&self) -> Vec<Vec<f64>> {
        let m = self.alphabet.len();
        let mut trans = vec![vec![0.0; m]; m];
        for (i, feature) in self.features.iter().enumerate() {
            if let Feature::Transition { from, to } = feature {
                let w = self.weights[i];
                let froms: Vec<usize> = match from {
                    Some(f) => vec![*f],
                    None => (0..m).collect(),
                };
                let tos: Vec<usize> = match to {
                    Some(t) => vec![*t],
                    None => (0..m).collect(),
                };
                for &f in &froms {
                    for &t in &tos {
                        trans[f][t] += w;
                    }
                }
            }
        }
        trans
    }

    /// Log-potential trellis for one observation sequence.
    ///
    /// The entry of an edge into position `t` with label `y'` is the sum of
    /// the transition weights on the edge (interior edges only) plus the
    /// state weights of `(t, y')`; end edges carry no terms of their own.
    pub fn build_trellis(&self, x: &ObservationSequence) -> Trellis {
        let n = x.len();
        let m = self.alphabet.len();
        let space = EdgeSpace::new(n, m);
        let state = self.state_sums(x);
        let trans = self.transition_sums();

        let mut weights = vec![0.0; space.size()];
        for y in 0..m {
            let idx = space.index(0, Node::Start, Node::Label(y)).expect("valid");
            weights[idx] = state[0][y];
        }
        for t in 1..n {
            for from in 0..m {
                for to in 0..m {
                    let idx =
                        space.index(t, Node::Label(from), Node::Label(to)).expect("valid");
                    weights[idx] = trans[from][to] + state[t][to];
                }
            }
        }
        Trellis::new(self.alphabet.clone(), n, weights).expect("finite weights by construction")
    }

    /// Log-probability of one label sequence under the model.
    pub fn sequence_log_probability(
        &self,
        x: &ObservationSequence,
        labels: &[&str],
    ) -> Result<f64, ModelError> {
        if labels.len() != x.len() {
            return Err(ModelError::SequenceShape {
                index: 0,
                tokens: x.len(),
                labels: labels.len(),
            });
        }
        let indices = labels
            .iter()
            .map(|name| {
                self.alphabet
                    .index_of(name)
                    .ok_or_else(|| ModelError::UnknownLabel(name.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let trellis = self.build_trellis(x);
        let path = crate::trellis::PathAssignment::new(indices, self.alphabet.len())?;
        Ok(path_score(&trellis, &path)? - log_partition(&trellis))
    }

    /// Serializes to the model text format: a header naming the alphabet,
    /// then `feature_id<TAB>weight` lines in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "labels");
        for label in self.alphabet.labels() {
            let _ = write!(out, "\t{label}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "start_label\t{}", self.alphabet.start_label());
        let _ = writeln!(out, "end_label\t{}", self.alphabet.end_label());
        let _ = writeln!(out, "features\t{}", self.features.len());
        let mut lines: Vec<(String, f64)> = self
            .features
            .iter()
            .zip(&self.weights)
            .map(|(f, &w)| (f.id(), w))
            .collect();
        lines.sort_by(|a, b| a.0.cmp(&b.0));
        for (id, w) in lines {
            let _ = writeln!(out, "{id}\t{w}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let err = |line: usize, msg: String| ModelError::Parse { line, msg };
        let mut lines = text.lines().enumerate();
        let mut expect = |prefix: &str| -> Result<(usize, Vec<String>), ModelError> {
            let (idx, line) =
                lines.next().ok_or_else(|| err(0, format!("missing {prefix} line")))?;
            let mut fields = line.split('\t');
            if fields.next() != Some(prefix) {
                return Err(err(idx + 1, format!("expected a {prefix} line, got {line:?}")));
            }
            Ok((idx + 1, fields.map(|s| s.to_string()).collect()))
        };

        let (line_no, labels) = expect("labels")?;
        if labels.is_empty() {
            return Err(err(line_no, "no labels".into()));
        }
        let (_, start) = expect("start_label")?;
        let (_, end) = expect("end_label")?;
        let (count_line, count_fields) = expect("features")?;
        let count: usize = count_fields
            .first()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| err(count_line, "bad feature count".into()))?;
        let alphabet = LabelAlphabet::new(
            labels,
            start.first().cloned().unwrap_or_default(),
            end.first().cloned().unwrap_or_default(),
        )
        .map_err(|e| err(1, e.to_string()))?;

        let mut features = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (id, w) = line
                .split_once('\t')
                .ok_or_else(|| err(idx + 1, format!("expected `id<TAB>weight`, got {line:?}")))?;
            let feature = Feature::parse(id)
                .ok_or_else(|| err(idx + 1, format!("unparseable feature id {id:?}")))?;
            let weight: f64 =
                w.parse().map_err(|_| err(idx + 1, format!("bad weight {w:?}")))?;
            features.push(feature);
            weights.push(weight);
        }
        if features.len() != count {
            return Err(err(
                count_line,
                format!("header declares {count} features, found {}", features.len()),
            ));
        }
        Self::new(alphabet, features, weights)
    }
}

/// Stable log-sum-exp over a slice of values.
fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log of the sum of exponentiated path scores, by the forward recursion.
pub fn log_partition(trellis: &Trellis) -> f64 {
    let n = trellis.len();
    let m = trellis.alphabet().len();
    let w = trellis.weights();
    let interior = |t: usize, from: usize, to: usize| w[m + (t - 1) * m * m + from * m + to];

    let mut alpha: Vec<f64> = (0..m).map(|y| w[y]).collect();
    let mut scratch = vec![0.0; m];
    for t in 1..n {
        let mut next = vec![0.0; m];
        for (to, slot) in next.iter_mut().enumerate() {
            for from in 0..m {
                scratch[from] = alpha[from] + interior(t, from, to);
            }
            *slot = log_sum_exp(&scratch);
        }
        alpha = next;
    }
    for (y, slot) in scratch.iter_mut().enumerate() {
        *slot = alpha[y] + w[m + (n - 1) * m * m + y];
    }
    log_sum_exp(&scratch)
}

/// Counts how often each model feature fires along one labeled path.
fn feature_counts(
    feature_ids: &HashMap<Feature, usize>,
    x: &ObservationSequence,
    labels: &[usize],
) -> HashMap<usize, i64> {
    let mut counts: HashMap<usize, i64> = HashMap::new();
    for (t, &label) in labels.iter().enumerate() {
        for key in state_keys(x, t) {
            if let Some(&fi) = feature_ids.get(&Feature::State { key, label }) {
                *counts.entry(fi).or_insert(0) += 1;
            }
        }
    }
    for t in 1..labels.len() {
        let bigram = Feature::Transition { from: Some(labels[t - 1]), to: Some(labels[t]) };
        if let Some(&fi) = feature_ids.get(&bigram) {
            *counts.entry(fi).or_insert(0) += 1;
        }
    }
    counts
}

/// Averaged structured-perceptron training.
///
/// Features are instantiated from the gold paths (the five window keys per
/// position paired with the gold label, plus observed label bigrams). Each
/// pass decodes every sequence in corpus order with the current weights and
/// applies `learning_rate * (gold count - predicted count)` per feature on
/// mistakes. The returned model carries the weights averaged over all
/// sequence visits, with features in id order.
pub fn train_perceptron(
    alphabet: &LabelAlphabet,
    corpus: &[(ObservationSequence, Vec<usize>)],
    epochs: usize,
    learning_rate: f64,
) -> Result<CrfModel, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    if epochs == 0 {
        return Err(ModelError::BadHyperparameter("epochs must be at least 1".into()));
    }
    if !learning_rate.is_finite() || learning_rate <= 0.0 {
        return Err(ModelError::BadHyperparameter(format!(
            "learning rate must be positive and finite, got {learning_rate}"
        )));
    }
    let m = alphabet.len();
    for (i, (x, gold)) in corpus.iter().enumerate() {
        if x.len() != gold.len() {
            return Err(ModelError::SequenceShape {
                index: i,
                tokens: x.len(),
                labels: gold.len(),
            });
        }
        if let Some(&bad) = gold.iter().find(|&&l| l >= m) {
            return Err(ModelError::LabelOutOfRange { index: bad, size: m });
        }
    }

    // feature space: everything that fires on a gold path
    let mut feature_ids: HashMap<Feature, usize> = HashMap::new();
    let mut features: Vec<Feature> = Vec::new();
    let mut intern = |f: Feature| {
        if !feature_ids.contains_key(&f) {
            feature_ids.insert(f.clone(), features.len());
            features.push(f);
        }
    };
    for (x, gold) in corpus {
        for (t, &label) in gold.iter().enumerate() {
            for key in state_keys(x, t) {
                intern(Feature::State { key, label });
            }
        }
        for t in 1..gold.len() {
            intern(Feature::Transition { from: Some(gold[t - 1]), to: Some(gold[t]) });
        }
    }
    drop(intern);

    let k = features.len();
    let mut weights = vec![0.0f64; k];
    let mut totals = vec![0.0f64; k];
    let mut stamps = vec![0u64; k];
    let mut counter = 0u64;

    let mut scorer = WeightScorer::new(alphabet, &features);
    for _ in 0..epochs {
        for (x, gold) in corpus {
            counter += 1;
            let predicted = viterbi(&scorer.build_trellis(x, &weights));
            if predicted.labels() == gold.as_slice() {
                continue;
            }
            let mut delta = feature_counts(&feature_ids, x, gold);
            for (fi, count) in feature_counts(&feature_ids, x, predicted.labels()) {
                *delta.entry(fi).or_insert(0) -= count;
            }
            let mut touched: Vec<(usize, i64)> =
                delta.into_iter().filter(|&(_, d)| d != 0).collect();
            touched.sort_unstable();
            for (fi, d) in touched {
                totals[fi] += (counter - stamps[fi]) as f64 * weights[fi];
                stamps[fi] = counter;
                weights[fi] += learning_rate * d as f64;
            }
        }
    }
    for fi in 0..k {
        totals[fi] += (counter - stamps[fi]) as f64 * weights[fi];
    }
    let averaged: Vec<f64> = totals.iter().map(|t| t / counter as f64).collect();

    let mut pairs: Vec<(Feature, f64)> = features.into_iter().zip(averaged).collect();
    pairs.sort_by(|a, b| a.0.id().cmp(&b.0.id()));
    let (features, weights): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    CrfModel::new(alphabet.clone(), features, weights)
}

/// Trellis builder reused across perceptron iterations so the feature index
/// is not rebuilt on every weight update.
struct WeightScorer<'a> {
    alphabet: &'a LabelAlphabet,
    state_index: HashMap<StateKey, Vec<(usize, usize)>>,
    bigrams: Vec<(usize, usize, usize)>,
}

impl<'a> WeightScorer<'a> {
    fn new(alphabet: &'a LabelAlphabet, features: &[Feature]) -> Self {
        let mut state_index: HashMap<StateKey, Vec<(usize, usize)>> = HashMap::new();
        let mut bigrams = Vec::new();
        for (i, feature) in features.iter().enumerate() {
            match feature {
                Feature::State { key, label } => {
                    state_index.entry(key.clone()).or_default().push((*label, i));
                }
                Feature::Transition { from: Some(f), to: Some(t) } => {
                    bigrams.push((*f, *t, i));
                }
                Feature::Transition { .. } => {
                    // the trainer only creates fully specified bigrams
                    unreachable!("wildcard transition in trainer feature set")
                }
            }
        }
        Self { alphabet, state_index, bigrams }
    }

    fn build_trellis(&mut self, x: &ObservationSequence, weights: &[f64]) -> Trellis {
        let n = x.len();
        let m = self.alphabet.len();
        let space = EdgeSpace::new(n, m);
        let mut state = vec![vec![0.0; m]; n];
        for (t, row) in state.iter_mut().enumerate() {
            for key in state_keys(x, t) {
                if let Some(hits) = self.state_index.get(&key) {
                    for &(label, fi) in hits {
                        row[label] += weights[fi];
                    }
                }
            }
        }
        let mut trans = vec![vec![0.0; m]; m];
        for &(f, t, fi) in &self.bigrams {
            trans[f][t] += weights[fi];
        }
        let mut out = vec![0.0; space.size()];
        for y in 0..m {
            out[y] = state[0][y];
        }
        for t in 1..n {
            for from in 0..m {
                for to in 0..m {
                    out[m + (t - 1) * m * m + from * m + to] = trans[from][to] + state[t][to];
                }
            }
        }
        Trellis::new(self.alphabet.clone(), n, out).expect("finite weights")
    }
}
