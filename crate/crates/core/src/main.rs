use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use constrained_crf::cli::{self, CliCommand, CliError, DecoderKind, RunConfig};

#[derive(Parser)]
#[command(
    name = "ccrf",
    version,
    about = "Sequence labeling with constrained trellis decoding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a perceptron model on a labeled corpus
    Train(CommonArgs),
    /// Mine relational constraints from a labeled corpus
    Mine(CommonArgs),
    /// Decode a corpus with a model and optional constraints
    Decode(CommonArgs),
    /// Score a predictions file against gold labels
    Evaluate(CommonArgs),
    /// Decode with all three decoders and report side by side
    Compare(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// key=value file supplying any of the flags below (flags win)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Corpus file (token<TAB>label lines, blank-line separated)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Constraint file
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Predictions file (for evaluate)
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Output file, or directory for compare
    #[arg(long)]
    output: Option<PathBuf>,
    /// viterbi | exact_constrained | lagrangian
    #[arg(long)]
    decoder: Option<String>,
    /// Score floor fraction for exact_constrained
    #[arg(long)]
    tau: Option<f64>,
    /// Subgradient iteration cap
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Minimum dual improvement counted as progress
    #[arg(long)]
    tolerance: Option<f64>,
    /// Recorded with the run; generation seeds live in the corpus recipe
    #[arg(long)]
    seed: Option<u64>,
    /// Perceptron passes over the training corpus
    #[arg(long)]
    epochs: Option<usize>,
    /// Perceptron step size
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Minimum sequences a mined constraint must fire in
    #[arg(long)]
    min_support: Option<usize>,
    /// Highest tolerated violation rate when mining
    #[arg(long)]
    max_violation_rate: Option<f64>,
    /// Comma-separated labels usable as the separator in state_change
    #[arg(long)]
    separators: Option<String>,
    /// Refuse instances whose path space exceeds this many paths
    #[arg(long)]
    path_cap: Option<u128>,
    /// Abort on the first infeasible instance instead of falling back
    #[arg(long)]
    strict: bool,
}

fn merge(args: CommonArgs, command: CliCommand) -> Result<RunConfig, CliError> {
    let mut file_values: std::collections::HashMap<String, String> = Default::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Data(format!(
                    "{} line {}: expected key=value",
                    path.display(),
                    idx + 1
                ))
            })?;
            file_values.insert(key.trim().to_string(), value.trim().to_string());
        }
    }

    let mut config = RunConfig::new(command);
    let from_file = |key: &str| file_values.get(key).cloned();
    let path_of = PathBuf::from;
    fn parse_num<T: std::str::FromStr>(key: &str, v: String) -> Result<T, CliError> {
        v.parse()
            .map_err(|_| CliError::Usage(format!("bad value {v:?} for {key}")))
    }

    config.model_path = args.model.or_else(|| from_file("model").map(path_of));
    config.corpus_path = args.corpus.or_else(|| from_file("corpus").map(path_of));
    config.constraints_path =
        args.constraints.or_else(|| from_file("constraints").map(path_of));
    config.predictions_path =
        args.predictions.or_else(|| from_file("predictions").map(path_of));
    config.output_path = args.output.or_else(|| from_file("output").map(path_of));

    if let Some(name) = args.decoder.or_else(|| from_file("decoder")) {
        config.decoder = DecoderKind::parse(&name)?;
    }
    if let Some(v) = args.tau {
        config.tau = v;
    } else if let Some(v) = from_file("tau") {
        config.tau = parse_num("tau", v)?;
    }
    if let Some(v) = args.max_iterations {
        config.max_iterations = v;
    } else if let Some(v) = from_file("max_iterations") {
        config.max_iterations = parse_num("max_iterations", v)?;
    }
    if let Some(v) = args.tolerance {
        config.tolerance = v;
    } else if let Some(v) = from_file("tolerance") {
        config.tolerance = parse_num("tolerance", v)?;
    }
    if let Some(v) = args.seed {
        config.seed = Some(v);
    } else if let Some(v) = from_file("seed") {
        config.seed = Some(parse_num("seed", v)?);
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    } else if let Some(v) = from_file("epochs") {
        config.epochs = parse_num("epochs", v)?;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    } else if let Some(v) = from_file("learning_rate") {
        config.learning_rate = parse_num("learning_rate", v)?;
    }
    if let Some(v) = args.min_support {
        config.min_support = v;
    } else if let Some(v) = from_file("min_support") {
        config.min_support = parse_num("min_support", v)?;
    }
    if let Some(v) = args.max_violation_rate {
        config.max_violation_rate = v;
    } else if let Some(v) = from_file("max_violation_rate") {
        config.max_violation_rate = parse_num("max_violation_rate", v)?;
    }
    if let Some(v) = args.separators.or_else(|| from_file("separators")) {
        config.separators = v
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
    }
    if let Some(v) = args.path_cap {
        config.path_cap = v;
    } else if let Some(v) = from_file("path_cap") {
        config.path_cap = parse_num("path_cap", v)?;
    }
    config.strict =
        args.strict || from_file("strict").map(|v| v == "true" || v == "1").unwrap_or(false);
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, command) = match cli.command {
        Command::Train(a) => (a, CliCommand::Train),
        Command::Mine(a) => (a, CliCommand::Mine),
        Command::Decode(a) => (a, CliCommand::Decode),
        Command::Evaluate(a) => (a, CliCommand::Evaluate),
        Command::Compare(a) => (a, CliCommand::Compare),
    };
    let config = match merge(args, command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", e.one_liner());
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match cli::run(&config) {
        Ok(outcome) => {
            for note in &outcome.notes {
                eprintln!("infeasible: {note}");
            }
            if outcome.infeasible_instances > 0 {
                eprintln!(
                    "{} infeasible instance(s) reported, fallback labels emitted",
                    outcome.infeasible_instances
                );
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("{}", e.one_liner());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
