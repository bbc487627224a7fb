//! Command-line workflows: train, mine, decode, evaluate, compare.
//!
//! Every flag mirrors a [`RunConfig`] field; a `key=value` config file can
//! set any of them, with explicit command-line values taking precedence.
//! Outputs are buffered and written only when a run succeeds, so a failed
//! run leaves no partial artifacts. Exit codes: 0 success, 2 usage error,
//! 3 data error, 4 infeasible instance encountered.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::constraints::{
    format_constraints, mine, parse_constraints, ConstraintSystem, ConstraintTemplate,
    MinerConfig,
};
use crate::crf::{train_perceptron, CrfModel};
use crate::dataset::Corpus;
use crate::eval::{evaluate, EvaluationReport};
use crate::ilp::{solve_min_violation_with_cap, ConstrainedProblem, SolveError};
use crate::lagrangian::{solve_dual, trace_csv, DualIterate, DualOptions};
use crate::trellis::viterbi;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }

    /// One-line machine-parsable rendering, `error.class=<class> message=...`.
    pub fn one_liner(&self) -> String {
        let (class, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Data(m) => ("data", m),
            CliError::Infeasible(m) => ("infeasible", m),
        };
        format!("error.class={class} message={msg}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliCommand {
    Train,
    Mine,
    Decode,
    Evaluate,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecoderKind {
    #[default]
    Viterbi,
    ExactConstrained,
    Lagrangian,
}

impl DecoderKind {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "viterbi" => Ok(DecoderKind::Viterbi),
            "exact_constrained" => Ok(DecoderKind::ExactConstrained),
            "lagrangian" => Ok(DecoderKind::Lagrangian),
            other => Err(CliError::Usage(format!(
                "unknown decoder {other:?} (viterbi | exact_constrained | lagrangian)"
            ))),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            DecoderKind::Viterbi => "viterbi",
            DecoderKind::ExactConstrained => "exact_constrained",
            DecoderKind::Lagrangian => "lagrangian",
        }
    }
}

/// Everything a run needs; unset options fall back to the defaults below.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CliCommand,
    pub model_path: Option<PathBuf>,
    pub corpus_path: Option<PathBuf>,
    pub constraints_path: Option<PathBuf>,
    pub predictions_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub decoder: DecoderKind,
    pub tau: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: Option<u64>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_support: usize,
    pub max_violation_rate: f64,
    pub separators: Vec<String>,
    pub path_cap: u128,
    pub strict: bool,
}

impl RunConfig {
    pub fn new(command: CliCommand) -> Self {
        Self {
            command,
            model_path: None,
            corpus_path: None,
            constraints_path: None,
            predictions_path: None,
            output_path: None,
            decoder: DecoderKind::Viterbi,
            tau: 0.9,
            max_iterations: 200,
            tolerance: 1e-6,
            seed: None,
            epochs: 5,
            learning_rate: 1.0,
            min_support: 5,
            max_violation_rate: 0.1,
            separators: Vec::new(),
            path_cap: crate::trellis::DEFAULT_PATH_CAP,
            strict: false,
        }
    }
}

/// What a successful run reports back.
#[derive(Debug, Default)]
pub struct RunOutcome {
    /// Sequences where the constrained decoder found no feasible answer and
    /// fell back; nonzero maps to exit code 4.
    pub infeasible_instances: usize,
    /// Per-sequence infeasibility notes, one line each.
    pub notes: Vec<String>,
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path)
        .map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read_file(path)?)
        .map_err(|_| CliError::Data(format!("{} is not valid UTF-8", path.display())))
}

fn require<'a>(
    field: &'a Option<PathBuf>,
    flag: &str,
    command: &str,
) -> Result<&'a Path, CliError> {
    field
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("{command} requires --{flag}")))
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    Corpus::from_bytes(&read_file(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<CrfModel, CliError> {
    CrfModel::from_text(&read_text(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_constraints(
    path: &Path,
    model: &CrfModel,
) -> Result<Vec<(ConstraintTemplate, f64)>, CliError> {
    parse_constraints(&read_text(path)?, model.alphabet())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Buffered output files, flushed only on success.
#[derive(Debug, Default)]
struct Artifacts {
    files: Vec<(PathBuf, String)>,
}

impl Artifacts {
    fn add(&mut self, path: PathBuf, content: String) {
        self.files.push((path, content));
    }

    fn flush(self) -> Result<(), CliError> {
        for (path, content) in self.files {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| {
                        CliError::Data(format!("creating {}: {e}", parent.display()))
                    })?;
                }
            }
            std::fs::write(&path, content)
                .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Executes one configured command, writing its artifacts on success.
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let mut artifacts = Artifacts::default();
    let outcome = match config.command {
        CliCommand::Train => run_train(config, &mut artifacts)?,
        CliCommand::Mine => run_mine(config, &mut artifacts)?,
        CliCommand::Decode => run_decode(config, &mut artifacts)?,
        CliCommand::Evaluate => run_evaluate(config, &mut artifacts)?,
        CliCommand::Compare => run_compare(config, &mut artifacts)?,
    };
    artifacts.flush()?;
    Ok(outcome)
}

fn run_train(config: &RunConfig, artifacts: &mut Artifacts) -> Result<RunOutcome, CliError> {
    let corpus_path = require(&config.corpus_path, "corpus", "train")?;
    let output = require(&config.output_path, "output", "train")?;
    let corpus = load_corpus(corpus_path)?;
    let alphabet = corpus
        .alphabet()
        .map_err(|e| CliError::Data(format!("{}: {e}", corpus_path.display())))?;
    let gold = corpus
        .gold_indices(&alphabet)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let pairs: Vec<_> = corpus
        .sequences()
        .iter()
        .map(|(x, _)| x.clone())
        .zip(gold)
        .collect();
    let model = train_perceptron(&alphabet, &pairs, config.epochs, config.learning_rate)
        .map_err(|e| CliError::Data(e.to_string()))?;
    artifacts.add(output.to_path_buf(), model.to_text());
    Ok(RunOutcome::default())
}

fn run_mine(config: &RunConfig, artifacts: &mut Artifacts) -> Result<RunOutcome, CliError> {
    let corpus_path = require(&config.corpus_path, "corpus", "mine")?;
    let output = require(&config.output_path, "output", "mine")?;
    let corpus = load_corpus(corpus_path)?;
    let alphabet = corpus
        .alphabet()
        .map_err(|e| CliError::Data(format!("{}: {e}", corpus_path.display())))?;
    let gold = corpus
        .gold_indices(&alphabet)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let miner = MinerConfig::new(config.min_support, config.max_violation_rate)
        .with_separators(config.separators.clone());
    let mined = mine(&gold, &alphabet, &miner).map_err(|e| CliError::Data(e.to_string()))?;
    let constraints: Vec<(ConstraintTemplate, f64)> =
        mined.iter().map(|mc| (mc.template.clone(), mc.cost())).collect();
    artifacts.add(output.to_path_buf(), format_constraints(&constraints));
    Ok(RunOutcome::default())
}

/// Decodes every sequence of a corpus with the selected decoder.
///
/// Returns predicted label names per sequence, infeasibility notes, and the
/// concatenated dual traces when the Lagrangian decoder ran.
fn decode_corpus(
    config: &RunConfig,
    model: &CrfModel,
    constraints: Option<&[(ConstraintTemplate, f64)]>,
    corpus: &Corpus,
    decoder: DecoderKind,
) -> Result<(Vec<Vec<String>>, RunOutcome, Vec<(usize, Vec<DualIterate>)>), CliError> {
    let alphabet = model.alphabet();
    let mut systems: HashMap<usize, ConstraintSystem> = HashMap::new();
    let mut predicted = Vec::with_capacity(corpus.len());
    let mut outcome = RunOutcome::default();
    let mut traces = Vec::new();

    for (index, (x, _)) in corpus.sequences().iter().enumerate() {
        let trellis = model.build_trellis(x);
        let n = x.len();
        let path = match decoder {
            DecoderKind::Viterbi => viterbi(&trellis),
            DecoderKind::ExactConstrained | DecoderKind::Lagrangian => {
                let templates = constraints.ok_or_else(|| {
                    CliError::Usage(format!(
                        "decoder {} requires --constraints",
                        decoder.name()
                    ))
                })?;
                let system = match systems.entry(n) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => e.insert(
                        ConstraintSystem::build(templates, n, alphabet)
                            .map_err(|err| CliError::Data(err.to_string()))?,
                    ),
                };
                match decoder {
                    DecoderKind::ExactConstrained => {
                        let problem =
                            ConstrainedProblem::new(trellis.clone(), system.clone(), config.tau)
                                .map_err(|e| CliError::Data(e.to_string()))?;
                        match solve_min_violation_with_cap(&problem, config.path_cap) {
                            Ok(solution) => solution.path,
                            Err(SolveError::Infeasible { floor, best_score }) => {
                                let note = format!(
                                    "sequence={index} decoder=exact_constrained floor={floor} best_score={best_score}"
                                );
                                if config.strict {
                                    return Err(CliError::Infeasible(note));
                                }
                                outcome.infeasible_instances += 1;
                                outcome.notes.push(note);
                                viterbi(&trellis)
                            }
                            Err(e) => return Err(CliError::Data(e.to_string())),
                        }
                    }
                    DecoderKind::Lagrangian => {
                        let options = DualOptions {
                            max_iterations: config.max_iterations,
                            tolerance: config.tolerance,
                        };
                        let result = solve_dual(&trellis, system, &options)
                            .map_err(|e| CliError::Data(e.to_string()))?;
                        if !result.feasible {
                            let note = format!(
                                "sequence={index} decoder=lagrangian status=no_feasible_primal best_dual={}",
                                result.best_dual
                            );
                            if config.strict {
                                return Err(CliError::Infeasible(note));
                            }
                            outcome.infeasible_instances += 1;
                            outcome.notes.push(note);
                        }
                        traces.push((index, result.trace.clone()));
                        result.path
                    }
                    DecoderKind::Viterbi => unreachable!(),
                }
            }
        };
        predicted
            .push(path.label_names(alphabet).into_iter().map(|s| s.to_string()).collect());
    }
    Ok((predicted, outcome, traces))
}

fn predictions_text(corpus: &Corpus, predicted: &[Vec<String>]) -> String {
    let mut out = String::new();
    for (i, ((x, _), labels)) in corpus.sequences().iter().zip(predicted).enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (token, label) in x.tokens().iter().zip(labels) {
            out.push_str(token);
            out.push('\t');
            out.push_str(label);
            out.push('\n');
        }
    }
    out
}

fn run_decode(config: &RunConfig, artifacts: &mut Artifacts) -> Result<RunOutcome, CliError> {
    let model_path = require(&config.model_path, "model", "decode")?;
    let corpus_path = require(&config.corpus_path, "corpus", "decode")?;
    let output = require(&config.output_path, "output", "decode")?;
    let model = load_model(model_path)?;
    let corpus = load_corpus(corpus_path)?;
    let constraints = match (&config.constraints_path, config.decoder) {
        (_, DecoderKind::Viterbi) => None,
        (Some(path), _) => Some(load_constraints(path, &model)?),
        (None, decoder) => {
            return Err(CliError::Usage(format!(
                "decoder {} requires --constraints",
                decoder.name()
            )))
        }
    };
    let (predicted, outcome, _) =
        decode_corpus(config, &model, constraints.as_deref(), &corpus, config.decoder)?;
    artifacts.add(output.to_path_buf(), predictions_text(&corpus, &predicted));
    Ok(outcome)
}

fn run_evaluate(config: &RunConfig, artifacts: &mut Artifacts) -> Result<RunOutcome, CliError> {
    let corpus_path = require(&config.corpus_path, "corpus", "evaluate")?;
    let predictions_path = require(&config.predictions_path, "predictions", "evaluate")?;
    let gold = load_corpus(corpus_path)?;
    let predicted = load_corpus(predictions_path)?;
    let report = evaluate_corpora(&gold, &predicted)?;
    match &config.output_path {
        Some(path) => artifacts.add(path.clone(), report.to_text()),
        None => print!("{}", report.to_text()),
    }
    Ok(RunOutcome::default())
}

fn evaluate_corpora(gold: &Corpus, predicted: &Corpus) -> Result<EvaluationReport, CliError> {
    let gold_labels: Vec<Vec<String>> =
        gold.sequences().iter().map(|(_, labels)| labels.clone()).collect();
    let predicted_labels: Vec<Vec<String>> =
        predicted.sequences().iter().map(|(_, labels)| labels.clone()).collect();
    evaluate(&gold_labels, &predicted_labels).map_err(|e| CliError::Data(e.to_string()))
}

fn run_compare(config: &RunConfig, artifacts: &mut Artifacts) -> Result<RunOutcome, CliError> {
    let model_path = require(&config.model_path, "model", "compare")?;
    let constraints_path = require(&config.constraints_path, "constraints", "compare")?;
    let corpus_path = require(&config.corpus_path, "corpus", "compare")?;
    let output_dir = require(&config.output_path, "output", "compare")?;

    let model = load_model(model_path)?;
    let constraints = load_constraints(constraints_path, &model)?;
    let corpus = load_corpus(corpus_path)?;
    let gold_labels: Vec<Vec<String>> =
        corpus.sequences().iter().map(|(_, labels)| labels.clone()).collect();

    let mut outcome = RunOutcome::default();
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "{:<20} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "decoder", "macro-p", "macro-r", "macro-f", "micro-p", "micro-r", "micro-f", "accuracy"
    );

    for decoder in
        [DecoderKind::Viterbi, DecoderKind::ExactConstrained, DecoderKind::Lagrangian]
    {
        let (predicted, sub_outcome, traces) =
            decode_corpus(config, &model, Some(&constraints), &corpus, decoder)?;
        outcome.infeasible_instances += sub_outcome.infeasible_instances;
        outcome.notes.extend(sub_outcome.notes);

        let report = evaluate(&gold_labels, &predicted)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let pct = |v: f64| 100.0 * v;
        let _ = writeln!(
            summary,
            "{:<20} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
            decoder.name(),
            pct(report.macro_avg.precision),
            pct(report.macro_avg.recall),
            pct(report.macro_avg.f_measure),
            pct(report.micro_avg.precision),
            pct(report.micro_avg.recall),
            pct(report.micro_avg.f_measure),
            pct(report.accuracy)
        );
        artifacts.add(output_dir.join(format!("{}.report", decoder.name())), report.to_text());
        artifacts
            .add(output_dir.join(format!("{}.labels", decoder.name())), predictions_text(&corpus, &predicted));

        if decoder == DecoderKind::Lagrangian {
            let mut csv = String::from("sequence,k,L_lambda,subgradient_norm,feasible,theta\n");
            for (sequence, trace) in traces {
                for line in trace_csv(&trace).lines().skip(1) {
                    let _ = writeln!(csv, "{sequence},{line}");
                }
            }
            artifacts.add(output_dir.join("lagrangian_trace.csv"), csv);
        }
    }
    artifacts.add(output_dir.join("summary.txt"), summary);
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoder_names_parse() {
        assert_eq!(DecoderKind::parse("viterbi").unwrap(), DecoderKind::Viterbi);
        assert_eq!(
            DecoderKind::parse("exact_constrained").unwrap(),
            DecoderKind::ExactConstrained
        );
        assert_eq!(DecoderKind::parse("lagrangian").unwrap(), DecoderKind::Lagrangian);
        assert!(DecoderKind::parse("beam").is_err());
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Data("x".into()).exit_code(), 3);
        assert_eq!(CliError::Infeasible("x".into()).exit_code(), 4);
        assert!(CliError::Usage("no".into()).one_liner().starts_with("error.class=usage"));
    }

    #[test]
    fn missing_required_flag_is_usage_error() {
        let config = RunConfig::new(CliCommand::Train);
        match run(&config) {
            Err(CliError::Usage(msg)) => assert!(msg.contains("--corpus")),
            other => panic!("expected usage error, got {other:?}"),
        }
    }
}
