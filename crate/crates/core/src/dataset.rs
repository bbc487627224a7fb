//! Corpus ingestion, splitting, and synthetic corpus generation.
//!
//! The corpus format is line oriented: one `token<TAB>label` line per
//! token, sequences separated by blank lines. The label alphabet is
//! whatever occurs in the data, in first-seen order, so loading a saved
//! corpus reproduces it exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraints::{ConstraintError, ConstraintTemplate};
use crate::crf::{ModelError, ObservationSequence};
use crate::trellis::{LabelAlphabet, TrellisError};

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("line {line}: expected `token<TAB>label`, got {found} fields")]
    RaggedLine { line: usize, found: usize },
    #[error("line {line}: empty {what}")]
    EmptyField { line: usize, what: &'static str },
    #[error("line {line}: not valid UTF-8")]
    NotUtf8 { line: usize },
    #[error("corpus has no labels to build an alphabet from")]
    EmptyAlphabet,
    #[error("split count {count} out of range for corpus of {size} sequences")]
    SplitOutOfRange { count: usize, size: usize },
    #[error("synthetic spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trellis(#[from] TrellisError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

/// Labeled sequences plus the label list observed in them (first-seen order).
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sequences: Vec<(ObservationSequence, Vec<String>)>,
    labels: Vec<String>,
}

impl Corpus {
    /// Builds a corpus, deriving the label list from the data.
    pub fn new(sequences: Vec<(ObservationSequence, Vec<String>)>) -> Result<Self, DataError> {
        let mut labels: Vec<String> = Vec::new();
        for (i, (x, gold)) in sequences.iter().enumerate() {
            if x.len() != gold.len() {
                return Err(ModelError::SequenceShape {
                    index: i,
                    tokens: x.len(),
                    labels: gold.len(),
                }
                .into());
            }
            for label in gold {
                if !labels.contains(label) {
                    labels.push(label.clone());
                }
            }
        }
        Ok(Self { sequences, labels })
    }

    pub fn sequences(&self) -> &[(ObservationSequence, Vec<String>)] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.sequences.iter().map(|(x, _)| x.len()).sum()
    }

    /// Observed labels in first-seen order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Label alphabet with the default boundary names. Fails on an empty
    /// corpus, which has no labels to enumerate.
    pub fn alphabet(&self) -> Result<LabelAlphabet, DataError> {
        if self.labels.is_empty() {
            return Err(DataError::EmptyAlphabet);
        }
        Ok(LabelAlphabet::with_default_bounds(self.labels.clone())?)
    }

    /// Gold labels of each sequence as indices into `alphabet`.
    pub fn gold_indices(&self, alphabet: &LabelAlphabet) -> Result<Vec<Vec<usize>>, DataError> {
        self.sequences
            .iter()
            .map(|(_, gold)| {
                gold.iter()
                    .map(|name| {
                        alphabet
                            .index_of(name)
                            .ok_or_else(|| ModelError::UnknownLabel(name.clone()).into())
                    })
                    .collect()
            })
            .collect()
    }

    /// Parses the corpus format, reporting the first offending line.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let mut sequences = Vec::new();
        let mut tokens: Vec<String> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        let mut flush = |tokens: &mut Vec<String>,
                         labels: &mut Vec<String>|
         -> Result<(), DataError> {
            if !tokens.is_empty() {
                let x = ObservationSequence::new(std::mem::take(tokens))?;
                sequences.push((x, std::mem::take(labels)));
            }
            Ok(())
        };
        for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            let line = idx + 1;
            let text =
                std::str::from_utf8(raw).map_err(|_| DataError::NotUtf8 { line })?;
            if text.is_empty() {
                flush(&mut tokens, &mut labels)?;
                continue;
            }
            let fields: Vec<&str> = text.split('\t').collect();
            if fields.len() != 2 {
                return Err(DataError::RaggedLine { line, found: fields.len() });
            }
            if fields[0].is_empty() {
                return Err(DataError::EmptyField { line, what: "token" });
            }
            if fields[1].is_empty() {
                return Err(DataError::EmptyField { line, what: "label" });
            }
            tokens.push(fields[0].to_string());
            labels.push(fields[1].to_string());
        }
        flush(&mut tokens, &mut labels)?;
        Self::new(sequences)
    }

    pub fn from_text(text: &str) -> Result<Self, DataError> {
        Self::from_bytes(text.as_bytes())
    }

    /// Inverse of [`Corpus::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, (x, gold)) in self.sequences.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            for (token, label) in x.tokens().iter().zip(gold) {
                out.push_str(token);
                out.push('\t');
                out.push_str(label);
                out.push('\n');
            }
        }
        out
    }

    /// Sequential split: the first `train_count` sequences versus the rest.
    pub fn split(&self, train_count: usize) -> Result<(Corpus, Corpus), DataError> {
        if train_count > self.sequences.len() {
            return Err(DataError::SplitOutOfRange {
                count: train_count,
                size: self.sequences.len(),
            });
        }
        let train = Corpus::new(self.sequences[..train_count].to_vec())?;
        let test = Corpus::new(self.sequences[train_count..].to_vec())?;
        Ok((train, test))
    }
}

/// Recipe for a synthetic corpus with planted constraints.
///
/// Clean sequences (probability `1 - noise_rate`) satisfy every planted
/// template with all premises firing; noisy ones break at least one. Tokens
/// carry a weak label signal: with probability `signal_strength` a token
/// comes from its label's own small vocabulary, otherwise from a shared
/// pool that gives the model no clue.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub labels: Vec<String>,
    pub sequences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub templates: Vec<ConstraintTemplate>,
    pub noise_rate: f64,
    pub tokens_per_label: usize,
    pub signal_strength: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<LabelAlphabet, DataError> {
        if self.labels.is_empty() {
            return Err(DataError::BadSpec("no labels".into()));
        }
        if self.sequences == 0 {
            return Err(DataError::BadSpec("sequence count must be positive".into()));
        }
        if self.min_len < 1 || self.min_len > self.max_len {
            return Err(DataError::BadSpec(format!(
                "bad length range {}..{}",
                self.min_len, self.max_len
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(DataError::BadSpec(format!("noise rate {} not in [0,1]", self.noise_rate)));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(DataError::BadSpec(format!(
                "signal strength {} not in [0,1]",
                self.signal_strength
            )));
        }
        if self.tokens_per_label == 0 {
            return Err(DataError::BadSpec("tokens_per_label must be positive".into()));
        }
        let alphabet = LabelAlphabet::with_default_bounds(self.labels.clone())?;
        for template in &self.templates {
            template.validate(&alphabet)?;
        }
        Ok(alphabet)
    }

    /// Parses a flat `key=value` description (one pair per line, `#`
    /// comments allowed). Templates are written `kind(A,B)` or
    /// `state_change(A,D,B)`, comma separated.
    pub fn from_key_values(text: &str) -> Result<Self, DataError> {
        let mut spec = SyntheticSpec {
            labels: Vec::new(),
            sequences: 0,
            min_len: 1,
            max_len: 1,
            templates: Vec::new(),
            noise_rate: 0.0,
            tokens_per_label: 4,
            signal_strength: 0.7,
        };
        let bad = |msg: String| DataError::BadSpec(msg);
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
            let value = value.trim();
            match key.trim() {
                "labels" => {
                    spec.labels = value.split(',').map(|s| s.trim().to_string()).collect();
                }
                "sequences" => {
                    spec.sequences =
                        value.parse().map_err(|_| bad(format!("bad sequences {value:?}")))?;
                }
                "min_len" => {
                    spec.min_len =
                        value.parse().map_err(|_| bad(format!("bad min_len {value:?}")))?;
                }
                "max_len" => {
                    spec.max_len =
                        value.parse().map_err(|_| bad(format!("bad max_len {value:?}")))?;
                }
                "templates" => {
                    spec.templates = parse_template_list(value)?;
                }
                "noise_rate" => {
                    spec.noise_rate =
                        value.parse().map_err(|_| bad(format!("bad noise_rate {value:?}")))?;
                }
                "tokens_per_label" => {
                    spec.tokens_per_label = value
                        .parse()
                        .map_err(|_| bad(format!("bad tokens_per_label {value:?}")))?;
                }
                "signal_strength" => {
                    spec.signal_strength = value
                        .parse()
                        .map_err(|_| bad(format!("bad signal_strength {value:?}")))?;
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(spec)
    }
}

fn parse_template_list(text: &str) -> Result<Vec<ConstraintTemplate>, DataError> {
    let bad = |msg: String| DataError::BadSpec(msg);
    let mut out = Vec::new();
    for part in text.split("),") {
        let part = part.trim().trim_end_matches(')');
        if part.is_empty() {
            continue;
        }
        let (kind, args) = part
            .split_once('(')
            .ok_or_else(|| bad(format!("template {part:?} is not kind(args)")))?;
        let args: Vec<&str> = args.split(',').map(|a| a.trim()).collect();
        let template = match (kind.trim(), args.len()) {
            ("adjacency", 2) => ConstraintTemplate::Adjacency {
                a: args[0].into(),
                b: args[1].into(),
            },
            ("precedence", 2) => ConstraintTemplate::Precedence {
                a: args[0].into(),
                b: args[1].into(),
            },
            ("begin_end", 2) => ConstraintTemplate::BeginEnd {
                a: args[0].into(),
                b: args[1].into(),
            },
            ("presence_precedence", 2) => ConstraintTemplate::PresencePrecedence {
                a: args[0].into(),
                b: args[1].into(),
            },
            ("state_change", 3) => ConstraintTemplate::StateChange {
                a: args[0].into(),
                d: args[1].into(),
                b: args[2].into(),
            },
            _ => return Err(bad(format!("unrecognized template {part:?}"))),
        };
        out.push(template);
    }
    Ok(out)
}

/// Deterministic synthetic corpus: same spec and seed, same corpus.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Corpus, DataError> {
    let alphabet = spec.validate()?;
    let m = spec.labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::with_capacity(spec.sequences);

    for _ in 0..spec.sequences {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let noisy = rng.gen::<f64>() < spec.noise_rate;
        let mut labels: Vec<usize> = Vec::new();
        // rejection-sample gold labels against the planted templates
        const TRIES: usize = 10_000;
        for attempt in 0..TRIES {
            labels = (0..len).map(|_| rng.gen_range(0..m)).collect();
            if spec.templates.is_empty() {
                break;
            }
            let holds = spec
                .templates
                .iter()
                .map(|t| t.holds(&labels, &alphabet))
                .collect::<Result<Vec<bool>, _>>()?;
            if noisy {
                if holds.iter().any(|&h| !h) {
                    break;
                }
            } else if holds.iter().all(|&h| h) {
                let fires = spec
                    .templates
                    .iter()
                    .map(|t| t.antecedent_fires(&labels, &alphabet))
                    .collect::<Result<Vec<bool>, _>>()?;
                // after many failures settle for satisfaction alone
                if fires.iter().all(|&f| f) || attempt > TRIES / 2 {
                    break;
                }
            }
        }

        let tokens: Vec<String> = labels
            .iter()
            .map(|&label| {
                let k = rng.gen_range(0..spec.tokens_per_label);
                if rng.gen::<f64>() < spec.signal_strength {
                    format!("t{label}x{k}")
                } else {
                    format!("shx{k}")
                }
            })
            .collect();
        let gold: Vec<String> = labels.iter().map(|&l| spec.labels[l].clone()).collect();
        sequences.push((ObservationSequence::new(tokens)?, gold));
    }
    Corpus::new(sequences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::MinerConfig;

    #[test]
    fn empty_input_is_empty_corpus() {
        let corpus = Corpus::from_text("").unwrap();
        assert!(corpus.is_empty());
        assert!(corpus.labels().is_empty());
        assert!(matches!(corpus.alphabet(), Err(DataError::EmptyAlphabet)));
    }

    #[test]
    fn parses_blank_separated_sequences() {
        let text = "John\tAuthor\nSmith\tAuthor\n\nDeep\tTitle\nNets\tTitle\n";
        let corpus = Corpus::from_text(text).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.labels(), &["Author".to_string(), "Title".to_string()]);
        assert_eq!(corpus.sequences()[0].0.tokens(), &["John", "Smith"]);
        assert_eq!(corpus.sequences()[1].1, vec!["Title", "Title"]);
    }

    #[test]
    fn load_errors_carry_line_numbers() {
        assert_eq!(
            Corpus::from_text("only-token\n"),
            Err(DataError::RaggedLine { line: 1, found: 1 })
        );
        assert_eq!(
            Corpus::from_text("a\tA\nb\tB\tC\n"),
            Err(DataError::RaggedLine { line: 2, found: 3 })
        );
        assert_eq!(
            Corpus::from_text("a\t\n"),
            Err(DataError::EmptyField { line: 1, what: "label" })
        );
        assert_eq!(
            Corpus::from_bytes(b"ok\tA\n\xff\xfe\tB\n"),
            Err(DataError::NotUtf8 { line: 2 })
        );
    }

    #[test]
    fn save_load_round_trip() {
        let spec = SyntheticSpec {
            labels: vec!["A".into(), "B".into(), "C".into()],
            sequences: 25,
            min_len: 1,
            max_len: 6,
            templates: vec![],
            noise_rate: 0.0,
            tokens_per_label: 3,
            signal_strength: 0.6,
        };
        for seed in 0..5 {
            let corpus = generate_synthetic(&spec, seed).unwrap();
            let back = Corpus::from_text(&corpus.to_text()).unwrap();
            assert_eq!(back, corpus);
        }
    }

    #[test]
    fn split_is_an_order_preserving_partition() {
        let text = "a\tA\n\nb\tB\n\nc\tC\n\nd\tA\n";
        let corpus = Corpus::from_text(text).unwrap();
        let (train, test) = corpus.split(3).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(test.len(), 1);
        let rejoined: Vec<_> =
            train.sequences().iter().chain(test.sequences()).cloned().collect();
        assert_eq!(rejoined, corpus.sequences());

        let (none, all) = corpus.split(0).unwrap();
        assert!(none.is_empty());
        assert_eq!(all.len(), 4);
        let (all, none) = corpus.split(4).unwrap();
        assert_eq!(all.len(), 4);
        assert!(none.is_empty());
        assert!(matches!(corpus.split(5), Err(DataError::SplitOutOfRange { count: 5, size: 4 })));
    }

    #[test]
    fn zero_noise_plants_begin_end_everywhere() {
        let spec = SyntheticSpec {
            labels: vec!["A".into(), "B".into(), "C".into()],
            sequences: 50,
            min_len: 2,
            max_len: 5,
            templates: vec![ConstraintTemplate::BeginEnd { a: "A".into(), b: "B".into() }],
            noise_rate: 0.0,
            tokens_per_label: 3,
            signal_strength: 0.7,
        };
        let corpus = generate_synthetic(&spec, 9).unwrap();
        for (_, gold) in corpus.sequences() {
            assert_eq!(gold.first().map(String::as_str), Some("A"));
            assert_eq!(gold.last().map(String::as_str), Some("B"));
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SyntheticSpec {
            labels: vec!["A".into(), "B".into()],
            sequences: 30,
            min_len: 2,
            max_len: 6,
            templates: vec![ConstraintTemplate::Adjacency { a: "A".into(), b: "B".into() }],
            noise_rate: 0.1,
            tokens_per_label: 4,
            signal_strength: 0.5,
        };
        assert_eq!(generate_synthetic(&spec, 7).unwrap(), generate_synthetic(&spec, 7).unwrap());
        assert_ne!(generate_synthetic(&spec, 7).unwrap(), generate_synthetic(&spec, 8).unwrap());
    }

    #[test]
    fn measured_violation_rate_tracks_noise() {
        let template = ConstraintTemplate::BeginEnd { a: "A".into(), b: "B".into() };
        let spec = SyntheticSpec {
            labels: vec!["A".into(), "B".into(), "C".into()],
            sequences: 1000,
            min_len: 3,
            max_len: 7,
            templates: vec![template.clone()],
            noise_rate: 0.1,
            tokens_per_label: 3,
            signal_strength: 0.7,
        };
        let corpus = generate_synthetic(&spec, 123).unwrap();
        let alphabet = corpus.alphabet().unwrap();
        let gold = corpus.gold_indices(&alphabet).unwrap();
        let mined = crate::constraints::mine(&gold, &alphabet, &MinerConfig::new(1, 1.0)).unwrap();
        let found = mined.iter().find(|mc| mc.template == template).unwrap();
        assert!(
            (0.07..=0.13).contains(&found.violation_rate),
            "rate {} outside the binomial band",
            found.violation_rate
        );
    }

    #[test]
    fn spec_key_values_round_trip_the_fields() {
        let text = "\
# synthetic corpus recipe
labels = A, B, C, D
sequences = 200
min_len = 5
max_len = 9
templates = begin_end(A,D),adjacency(B,C),state_change(A,C,B)
noise_rate = 0.05
tokens_per_label = 6
signal_strength = 0.7
";
        let spec = SyntheticSpec::from_key_values(text).unwrap();
        assert_eq!(spec.labels, vec!["A", "B", "C", "D"]);
        assert_eq!(spec.sequences, 200);
        assert_eq!(spec.min_len, 5);
        assert_eq!(spec.max_len, 9);
        assert_eq!(spec.noise_rate, 0.05);
        assert_eq!(spec.templates.len(), 3);
        assert_eq!(
            spec.templates[2],
            ConstraintTemplate::StateChange { a: "A".into(), d: "C".into(), b: "B".into() }
        );
        assert!(spec.validate().is_ok());
        assert!(SyntheticSpec::from_key_values("nonsense\n").is_err());
    }
}
