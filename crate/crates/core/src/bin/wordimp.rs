use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use word_importance::data::tokenize;
use word_importance::estimators::Method;
use word_importance::evalharness::PerturbationKind;
use word_importance::pipeline::{
    attribute_sentence, run_analysis, run_evaluation, run_pipeline, train_checkpoint,
    ExperimentConfig, PipelineError, SentenceReport,
};
use word_importance::rng::derive_seed;
use word_importance::seqmodel::{Checkpoint, TrainConfig};
use word_importance::Error;

/// Word importance for neural machine translation.
#[derive(Parser)]
#[command(name = "wordimp", version)]
struct Cli {
    /// Worker threads (defaults to all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a parallel corpus.
    Train(TrainArgs),
    /// Translate one sentence and print its word importance and contribution matrix.
    Attribute(AttributeArgs),
    /// Perturbation curves for importance estimators on a test set.
    Evaluate(EvaluateArgs),
    /// Linguistic analysis of a previously written importance.json.
    Analyze(AnalyzeArgs),
    /// Train, attribute, evaluate and analyze from one config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $WORDIMP_OUT or ./wordimp-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    word_dropout: Option<f64>,
}

#[derive(Args)]
struct AttributeArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Integration steps.
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, default_value_t = 4)]
    beam: usize,
    /// Print JSON instead of tables.
    #[arg(long)]
    json: bool,
    /// Whitespace-tokenized source sentence.
    #[arg(required = true, num_args = 1..)]
    sentence: Vec<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Tagged test source, needed by the content estimator and replace perturbation.
    #[arg(long)]
    pos: Option<PathBuf>,
    /// Comma-separated estimators.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<Method>>,
    /// Comma-separated perturbations: deletion, mask, replace.
    #[arg(long, value_delimiter = ',')]
    perturbations: Option<Vec<PerturbationKind>>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Integration steps.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// importance.json from `evaluate` or `pipeline`.
    #[arg(long)]
    importance: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pos: Option<PathBuf>,
    #[arg(long)]
    alignment: Option<PathBuf>,
    #[arg(long)]
    depth: Option<PathBuf>,
    #[arg(long)]
    under_translation: Option<PathBuf>,
    /// Comma-separated percentages for under-translation detection.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, PipelineError> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, PipelineError> {
    Checkpoint::load(path).map_err(|e| PipelineError::Validation(vec![e.to_string()]))
}

fn apply_common(config: &mut ExperimentConfig, common: &Common) {
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(o) = &common.out {
        config.output_dir = Some(o.clone());
    }
}

fn validation(problems: Vec<String>) -> Result<(), PipelineError> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Validation(problems))
    }
}

fn train_cmd(args: TrainArgs) -> Result<(), PipelineError> {
    let mut config = load_config(args.common.config.as_deref())?;
    apply_common(&mut config, &args.common);
    if let Some(p) = args.source {
        config.data.train_source = p;
    }
    if let Some(p) = args.target {
        config.data.train_target = p;
    }
    if let Some(s) = args.steps {
        config.model.steps = s;
    }
    if let Some(d) = args.word_dropout {
        config.model.word_dropout = d;
    }
    validation(config.validate_for(true, false))?;
    let train_config = TrainConfig {
        seed: derive_seed(config.seed, "train", &[]),
        ..config.model.clone()
    };
    let (checkpoint, losses) = train_checkpoint(
        &config.data.train_source,
        &config.data.train_target,
        config.data.splitter,
        &train_config,
    )?;
    let dir = config.resolved_output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("model.json");
    checkpoint.save(&path)?;
    let tail = &losses[losses.len().saturating_sub(100)..];
    println!(
        "trained {} steps, final loss {:.4}, vocabulary {}; wrote {}",
        losses.len(),
        tail.iter().sum::<f64>() / tail.len().max(1) as f64,
        checkpoint.vocab.len(),
        path.display()
    );
    Ok(())
}

fn attribute_cmd(args: AttributeArgs) -> Result<(), PipelineError> {
    let checkpoint = load_checkpoint(&args.model)?;
    let words = tokenize(&args.sentence.join(" "));
    if words.is_empty() {
        return Err(PipelineError::Validation(vec!["empty sentence".into()]));
    }
    if args.steps == 0 {
        return Err(PipelineError::Validation(vec!["--steps must be at least 1".into()]));
    }
    let decoding = word_importance::seqmodel::DecodeOptions {
        beam: args.beam.max(1),
        ..Default::default()
    };
    let report = attribute_sentence(&checkpoint, &words, args.steps, &decoding)?;
    if report.unknown_pieces > 0 {
        eprintln!("note: {} source pieces are out of vocabulary and were mapped to UNK", report.unknown_pieces);
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("{report}");
    }
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<(), PipelineError> {
    let mut config = load_config(args.common.config.as_deref())?;
    apply_common(&mut config, &args.common);
    if let Some(p) = args.source {
        config.data.test_source = p;
    }
    if let Some(p) = args.reference {
        config.data.test_reference = p;
    }
    if args.pos.is_some() {
        config.annotations.pos = args.pos;
    }
    if let Some(e) = args.estimators {
        config.evaluation.estimators = e;
    }
    if let Some(p) = args.perturbations {
        config.evaluation.perturbations = p;
    }
    if let Some(k) = args.k_max {
        config.evaluation.k_max = k;
    }
    if let Some(r) = args.repeats {
        config.evaluation.repeats = r;
    }
    if let Some(s) = args.steps {
        config.attribution.steps = s;
    }
    let checkpoint = load_checkpoint(&args.model)?;
    let (eval, manifest) = run_evaluation(&checkpoint, &config)?;
    println!("{}", word_importance::evalharness::curves_to_csv(&eval.curves).trim_end());
    info!("wrote {} files to {}", manifest.outputs.len(), config.resolved_output_dir().display());
    Ok(())
}

fn analyze_cmd(args: AnalyzeArgs) -> Result<(), PipelineError> {
    let config = load_config(args.config.as_deref())?;
    let mut annotations = config.annotations.clone();
    let mut analysis = config.analysis.clone();
    for (slot, flag) in [
        (&mut annotations.pos, args.pos),
        (&mut annotations.alignment, args.alignment),
        (&mut annotations.depth, args.depth),
        (&mut annotations.under_translation, args.under_translation),
    ] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    if let Some(t) = args.thresholds {
        analysis.thresholds = t;
    }
    let text = std::fs::read_to_string(&args.importance)
        .map_err(|e| PipelineError::Validation(vec![format!("{}: {e}", args.importance.display())]))?;
    let reports: Vec<SentenceReport> = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Validation(vec![format!("{}: {e}", args.importance.display())]))?;
    let out = args
        .out
        .or(config.output_dir.clone())
        .unwrap_or_else(|| config.resolved_output_dir());
    let report = run_analysis(&reports, &annotations, &analysis, &out)?;
    for s in &report.skipped {
        println!("skipped: {s}");
    }
    println!("wrote analysis to {}", out.join("analysis").display());
    Ok(())
}

fn pipeline_cmd(args: PipelineArgs) -> Result<(), PipelineError> {
    let mut config = ExperimentConfig::from_file(&args.config)?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(o) = args.out {
        config.output_dir = Some(o);
    }
    let summary = run_pipeline(&config)?;
    for n in &summary.manifest.notices {
        println!("notice: {n}");
    }
    println!(
        "wrote {} files to {} (config {})",
        summary.manifest.outputs.len() + 1,
        summary.output_dir.display(),
        &summary.manifest.config_sha256[..12]
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: {e}");
        }
    }
    let result = match cli.command {
        Command::Train(a) => train_cmd(a),
        Command::Attribute(a) => attribute_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
