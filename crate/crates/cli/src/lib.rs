//! Command implementations for the `textsmbo` binary.
//!
//! Exit codes: 0 on success, 2 for usage or input errors, 3 for internal errors.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use textsmbo_core::data::{self, DatasetManifest, LabeledCorpus, SyntheticSpec};
use textsmbo_core::logreg::StrengthConvention;
use textsmbo_core::pipeline::{TextClassifierConfig, TextTask};
use textsmbo_core::smbo;
use textsmbo_core::space::{n_span_node, Violation};
use textsmbo_core::textrep::{Featurizer, Stoplist, Tokenizer};
use textsmbo_core::tpe::TpeParams;
use textsmbo_core::{text_rep_space, Assignment, ConfigSpace, ParamDomain, Value};

pub mod report;

pub use report::{load_trials, read_trials, TrialRow, TRIALS_HEADER};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing or malformed input files.
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(e) | CliError::Internal(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) trait InputContext<T> {
    fn input(self) -> CliResult<T>;
    fn internal(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> InputContext<T> for Result<T, E> {
    fn input(self) -> CliResult<T> {
        self.map_err(|e| CliError::Input(e.into()))
    }

    fn internal(self) -> CliResult<T> {
        self.map_err(|e| CliError::Internal(e.into()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "textsmbo", version, about = "Search text representations and classifier hyperparameters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the optimization loop over a corpus.
    Optimize(OptimizeArgs),
    /// Train and evaluate a single configuration.
    Eval(EvalArgs),
    /// Turn a trials.csv into a best-so-far curve and a summary row.
    Report(ReportArgs),
    /// Write a synthetic planted-feature corpus as TSV.
    Synth(SynthArgs),
    /// Print a search space description (the built-in one by default).
    Space {
        #[arg(long)]
        space: Option<PathBuf>,
    },
    /// Print the benchmark dataset manifest.
    Manifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    /// strength multiplies the data loss (C)
    C,
    /// strength multiplies the penalty
    Lambda,
}

impl From<ConventionArg> for StrengthConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::C => StrengthConvention::LossWeight,
            ConventionArg::Lambda => StrengthConvention::PenaltyWeight,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Training corpus (TSV: label<TAB>text).
    #[arg(long)]
    pub train: PathBuf,
    /// Development corpus; when absent a fraction of the training data is held out.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Test corpus, scored once with the final configuration.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub dev_fraction: f64,
    /// Seed for the dev split and the search.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stoplist file (one token per line); defaults to the shipped English list.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Token regex applied to lowercased text; defaults to alphanumeric runs.
    #[arg(long)]
    pub token_pattern: Option<String>,
    #[arg(long, value_enum, default_value_t = ConventionArg::C)]
    pub strength_convention: ConventionArg,
    /// Retrain the final model on train + dev before scoring the test set.
    #[arg(long)]
    pub refit_with_dev: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Search space description; defaults to the built-in space.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub trials: usize,
    #[arg(long, default_value_t = 64)]
    pub candidates: usize,
    #[arg(long, default_value_t = 10)]
    pub startup: usize,
    #[arg(long, default_value_t = 0.15)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub smoothing: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Assignment file (a best.config written by `optimize`).
    #[arg(long, conflicts_with_all = ["n_min", "n_max", "weighting", "remove_stopwords", "regularizer", "strength", "tolerance"])]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_min: Option<i64>,
    #[arg(long)]
    pub n_max: Option<i64>,
    /// tf, tf-idf or binary.
    #[arg(long)]
    pub weighting: Option<String>,
    #[arg(long)]
    pub remove_stopwords: Option<bool>,
    /// l1 or l2.
    #[arg(long)]
    pub regularizer: Option<String>,
    #[arg(long)]
    pub strength: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Skip range checks on continuous hyperparameters.
    #[arg(long)]
    pub unchecked_bounds: bool,
    /// Write the trained model here.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub trials: PathBuf,
    /// Output directory for curve.csv and curve.gp.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2500)]
    pub docs: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 2000)]
    pub vocab: usize,
    #[arg(long, default_value_t = 0.7)]
    pub signal: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Optimize(args) => cmd_optimize(&args).map(|s| println!("{s}")),
        Command::Eval(args) => cmd_eval(&args).map(|s| println!("{s}")),
        Command::Report(args) => cmd_report(&args).map(|s| println!("{s}")),
        Command::Synth(args) => cmd_synth(&args),
        Command::Space { space } => {
            print!("{}", load_space(space.as_deref())?.to_toml_string());
            Ok(())
        }
        Command::Manifest => {
            print!("{}", data::MANIFEST);
            Ok(())
        }
    }
}

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display())).internal()?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display())).internal()
}

fn load_corpus(path: &Path) -> CliResult<LabeledCorpus> {
    data::load_tsv(path).with_context(|| format!("loading corpus {}", path.display())).input()
}

fn load_space(path: Option<&Path>) -> CliResult<ConfigSpace> {
    match path {
        None => Ok(text_rep_space()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading space {}", p.display())).input()?;
            ConfigSpace::from_toml_str(&text).with_context(|| format!("in {}", p.display())).input()
        }
    }
}

fn featurizer(args: &CorpusArgs) -> CliResult<Featurizer> {
    let stoplist = match &args.stopwords {
        None => Stoplist::english(),
        Some(p) => Stoplist::parse(
            &fs::read_to_string(p).with_context(|| format!("reading stoplist {}", p.display())).input()?,
        ),
    };
    let tokenizer = match &args.token_pattern {
        None => Tokenizer::AlphanumericRuns,
        Some(rule) => Tokenizer::pattern(rule).input()?,
    };
    Ok(Featurizer::new(tokenizer, stoplist))
}

struct Splits {
    train: LabeledCorpus,
    dev: LabeledCorpus,
    test: Option<LabeledCorpus>,
}

fn load_splits(args: &CorpusArgs) -> CliResult<Splits> {
    let train = load_corpus(&args.train)?;
    let (train, dev) = match &args.dev {
        Some(p) => (train, load_corpus(p)?),
        None => data::split_corpus(&train, args.dev_fraction, args.seed).context("splitting dev set").input()?,
    };
    let test = args.test.as_deref().map(load_corpus).transpose()?;
    Ok(Splits { train, dev, test })
}

fn make_task(train: LabeledCorpus, eval: LabeledCorpus, args: &CorpusArgs) -> CliResult<TextTask> {
    let mut task = TextTask::new(train, eval, featurizer(args)?);
    task.convention = args.strength_convention.into();
    Ok(task)
}

fn protocol(args: &CorpusArgs) -> &'static str {
    if args.refit_with_dev {
        "final model retrained on train + dev"
    } else {
        "final model retrained on train only"
    }
}

/// Retrains `config` on train (or train + dev) and scores the test set.
fn test_accuracy(splits: &Splits, config: &TextClassifierConfig, args: &CorpusArgs) -> CliResult<Option<f64>> {
    let Some(test) = &splits.test else { return Ok(None) };
    let train = if args.refit_with_dev { splits.train.concat(&splits.dev) } else { splits.train.clone() };
    let mut task = make_task(train, test.clone(), args)?;
    let scored = task.score(config).context("scoring the test set").internal()?;
    Ok(Some(scored.accuracy))
}

#[derive(Serialize)]
struct BestConfig<'a> {
    trial: usize,
    dev_accuracy: f64,
    assignment: &'a Assignment,
}

#[derive(Serialize)]
struct RunMetadata {
    seed: u64,
    trials: usize,
    gamma: f64,
    candidates: usize,
    startup: usize,
    smoothing: f64,
    strength_convention: String,
    final_model: String,
    best_trial: Option<usize>,
    dev_accuracy: Option<f64>,
    test_accuracy: Option<f64>,
}

pub fn format_float(v: f64) -> String {
    format!("{v}")
}

fn config_columns(a: &Assignment) -> [String; 7] {
    match TextClassifierConfig::from_assignment(a) {
        Ok(c) => {
            let r = c.representation;
            let t = c.training;
            [
                r.n_min.to_string(),
                r.n_max.to_string(),
                r.weighting.to_string(),
                r.remove_stopwords.to_string(),
                t.penalty.to_string(),
                format_float(t.strength),
                format_float(t.tolerance),
            ]
        }
        Err(_) => Default::default(),
    }
    .map(|s| if s.is_empty() { "-".to_string() } else { s })
}

/// Runs the search and writes trials.csv, timings.csv, best.config and run.toml to `--out`.
pub fn cmd_optimize(args: &OptimizeArgs) -> CliResult<String> {
    if args.trials == 0 {
        return Err(CliError::Input(anyhow!("--trials must be at least 1")));
    }
    let space = load_space(args.space.as_deref())?;
    let splits = load_splits(&args.corpus)?;
    let params = TpeParams {
        gamma: args.gamma,
        n_candidates: args.candidates,
        n_startup: args.startup,
        smoothing: args.smoothing,
        seed: args.corpus.seed,
        ..TpeParams::default()
    };
    params.validate().input()?;
    let missing = missing_hyperparameters(&space);
    if !missing.is_empty() {
        return Err(CliError::Input(anyhow!("search space lacks hyperparameters: {}", missing.join(", "))));
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display())).input()?;

    let mut task = make_task(splits.train.clone(), splits.dev.clone(), &args.corpus)?;
    let mut rows: Vec<TrialRow> = Vec::with_capacity(args.trials);
    let mut timings = String::from("trial,seconds\n");
    let mut last = Instant::now();
    let state = {
        smbo::run_seeded(&space, &mut task, args.trials, &params, |trial, state| {
            rows.push(TrialRow {
                trial: trial.index,
                accuracy: trial.outcome.value(),
                best_so_far: state.incumbent.as_ref().map(|i| i.y),
                split_y_star: trial.y_star,
                config: config_columns(&trial.assignment),
            });
            timings.push_str(&format!("{},{:.3}\n", trial.index, last.elapsed().as_secs_f64()));
            last = Instant::now();
        })
        .internal()?
    };

    write_atomic(&args.out.join("trials.csv"), report::trials_csv(&rows).internal()?.as_bytes())?;
    write_atomic(&args.out.join("timings.csv"), timings.as_bytes())?;

    let mut summary = format!("{} trials written to {}\n", rows.len(), args.out.join("trials.csv").display());
    let mut test_acc = None;
    if let Some(inc) = &state.incumbent {
        let best = BestConfig { trial: inc.trial, dev_accuracy: inc.y, assignment: &inc.assignment };
        let text = format!("# Incumbent of the optimization run.\n{}", toml::to_string(&best).internal()?);
        write_atomic(&args.out.join("best.config"), text.as_bytes())?;
        let config = TextClassifierConfig::from_assignment(&inc.assignment).internal()?;
        summary.push_str(&format!("best trial {}: dev accuracy {} ({config})\n", inc.trial, format_float(inc.y)));
        test_acc = test_accuracy(&splits, &config, &args.corpus)?;
        if let Some(t) = test_acc {
            summary.push_str(&format!("test accuracy {} ({})\n", format_float(t), protocol(&args.corpus)));
        }
    } else {
        summary.push_str("every trial failed; no best.config written\n");
    }
    let meta = RunMetadata {
        seed: args.corpus.seed,
        trials: args.trials,
        gamma: args.gamma,
        candidates: args.candidates,
        startup: args.startup,
        smoothing: args.smoothing,
        strength_convention: format!("{:?}", args.corpus.strength_convention).to_lowercase(),
        final_model: protocol(&args.corpus).to_string(),
        best_trial: state.incumbent.as_ref().map(|i| i.trial),
        dev_accuracy: state.incumbent.as_ref().map(|i| i.y),
        test_accuracy: test_acc,
    };
    write_atomic(&args.out.join("run.toml"), toml::to_string(&meta).internal()?.as_bytes())?;
    Ok(summary.trim_end().to_string())
}

/// Hyperparameters a space must define for trials to be trainable.
pub fn missing_hyperparameters(space: &ConfigSpace) -> Vec<String> {
    let has = |n: &str| space.node(n).is_some();
    ["n_min", "weighting", "remove_stopwords", "regularizer", "strength", "tolerance"]
        .into_iter()
        .filter(|n| !has(n))
        .map(String::from)
        .collect()
}


/// Builds the assignment named by explicit eval flags, in the built-in encoding.
fn assignment_from_flags(args: &EvalArgs) -> CliResult<Assignment> {
    let missing = |f: &str| CliError::Input(anyhow!("missing --{f} (or pass --config)"));
    let n_min = args.n_min.ok_or_else(|| missing("n-min"))?;
    let n_max = args.n_max.ok_or_else(|| missing("n-max"))?;
    let mut a = Assignment::new();
    a.insert("n_min", Value::Int(n_min));
    a.insert(n_span_node(n_min), Value::Int(n_max - n_min));
    a.insert("weighting", Value::Choice(args.weighting.clone().ok_or_else(|| missing("weighting"))?));
    a.insert(
        "remove_stopwords",
        Value::Choice(args.remove_stopwords.ok_or_else(|| missing("remove-stopwords"))?.to_string()),
    );
    a.insert("regularizer", Value::Choice(args.regularizer.clone().ok_or_else(|| missing("regularizer"))?));
    a.insert("strength", Value::Real(args.strength.ok_or_else(|| missing("strength"))?));
    a.insert("tolerance", Value::Real(args.tolerance.ok_or_else(|| missing("tolerance"))?));
    Ok(a)
}

fn read_assignment_file(space: &ConfigSpace, path: &Path) -> CliResult<Assignment> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).input()?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display())).input()?;
    let inner = match table.get("assignment") {
        Some(toml::Value::Table(t)) => t.clone(),
        _ => table,
    };
    space.assignment_from_toml(&inner).input()
}

/// Trains one configuration and reports dev (and test) accuracy.
pub fn cmd_eval(args: &EvalArgs) -> CliResult<String> {
    let space = load_space(args.space.as_deref())?;
    let assignment = match &args.config {
        Some(p) => read_assignment_file(&space, p)?,
        None => assignment_from_flags(args)?,
    };
    if let Err(violations) = space.validate_assignment(&assignment) {
        let relevant: Vec<&Violation> = violations
            .iter()
            .filter(|v| {
                let continuous = |node: &str| {
                    matches!(space.node(node).map(|n| &n.domain), Some(ParamDomain::Continuous { .. }))
                };
                !(args.unchecked_bounds && matches!(v, Violation::OutOfDomain { node, .. } if continuous(node)))
            })
            .collect();
        if !relevant.is_empty() {
            let list: Vec<String> = relevant.iter().map(|v| format!("  {v}")).collect();
            return Err(CliError::Input(anyhow!("invalid configuration:\n{}", list.join("\n"))));
        }
    }
    let config = TextClassifierConfig::from_assignment(&assignment).input()?;
    let splits = load_splits(&args.corpus)?;
    let mut task = make_task(splits.train.clone(), splits.dev.clone(), &args.corpus)?;
    let scored = task.score(&config).context("training").internal()?;
    let mut out = format!("config: {config}\ndev accuracy: {}", format_float(scored.accuracy));
    if !scored.fit.converged {
        out.push_str(&format!("\nwarning: solver stopped after {} iterations without converging", scored.fit.iterations));
    }
    if let Some(t) = test_accuracy(&splits, &config, &args.corpus)? {
        out.push_str(&format!("\ntest accuracy: {} ({})", format_float(t), protocol(&args.corpus)));
    }
    if let Some(path) = &args.save_model {
        let mut buf = Vec::new();
        scored.fit.model.write_to(&mut buf).internal()?;
        write_atomic(path, &buf)?;
    }
    Ok(out)
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<String> {
    report::cmd_report(args)
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let corpus = data::synthetic_corpus(&SyntheticSpec {
        n_docs: args.docs,
        n_classes: args.classes,
        vocab_size: args.vocab,
        signal_strength: args.signal,
        seed: args.seed,
    })
    .input()?;
    let mut buf = Vec::new();
    corpus.write_tsv(&mut buf).internal()?;
    write_atomic(&args.out, &buf)
}

pub fn manifest() -> DatasetManifest {
    DatasetManifest::builtin()
}
