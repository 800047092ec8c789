//! End-to-end experiment driver: one TOML file in, a directory of reports out.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! train_source = "train.src"
//! train_target = "train.tgt"
//! test_source = "test.src"
//! test_reference = "test.ref"
//!
//! [annotations]            # every entry optional
//! pos = "test.pos"
//! alignment = "test.align"
//! depth = "test.depth"
//! under_translation = "test.gold"
//!
//! [model]
//! steps = 8000
//! word_dropout = 0.15
//!
//! [evaluation]
//! estimators = ["random", "attention", "erasure", "attribution"]
//! perturbations = ["mask"]
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    depth_buckets, detect_undertranslation, distribution_csv, fertility_distribution, fertility_from_alignment,
    gold_flags, length_normalize, parse_alignment, parse_depth, parse_gold, parse_pos, pos_distribution,
    token_features, tree_correlation, DistributionRow, F1Report, FertilityClass, Pos, TreeConfig, TreeReport,
};
use crate::attribution::{Attribution, DEFAULT_STEPS};
use crate::data::{encode_sentence, read_tokenized, Corpus, SentencePair, SubwordSplitter, Vocab};
use crate::error::{Error, Result};
use crate::estimators::{estimate_attribution, EstimateRecord, Estimators, FrequencyTable, ImportanceEstimate, Method};
use crate::evalharness::{
    compute_estimates, curve_from_estimates, curves_to_csv, prepare_test_set, PerturbationCurve, PerturbationKind,
    PerturbationSpec, ReplacementPool, TestItem,
};
use crate::rng::derive_seed;
use crate::seqmodel::{hypothesis, train, AnyModel, Checkpoint, DecodeOptions, TrainConfig, TranslationModel};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "WORDIMP_OUT";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub annotations: AnnotationConfig,
    #[serde(default)]
    pub model: TrainConfig,
    #[serde(default)]
    pub decoding: DecodeOptions,
    #[serde(default)]
    pub attribution: AttributionConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_source: PathBuf,
    pub train_target: PathBuf,
    pub test_source: PathBuf,
    pub test_reference: PathBuf,
    #[serde(default)]
    pub splitter: SubwordSplitter,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationConfig {
    pub pos: Option<PathBuf>,
    pub alignment: Option<PathBuf>,
    pub depth: Option<PathBuf>,
    pub under_translation: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub steps: usize,
    /// Contribution matrices are written for the first this-many sentences.
    pub matrices: usize,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            steps: DEFAULT_STEPS,
            matrices: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub estimators: Vec<Method>,
    pub perturbations: Vec<PerturbationKind>,
    pub k_max: usize,
    pub repeats: usize,
    pub frequency_exclude: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            estimators: Method::ALL.to_vec(),
            perturbations: PerturbationKind::ALL.to_vec(),
            k_max: 5,
            repeats: 10,
            frequency_exclude: FrequencyTable::DEFAULT_EXCLUDED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub thresholds: Vec<f64>,
    pub tree: TreeConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            thresholds: vec![5.0, 10.0, 15.0],
            tree: TreeConfig::default(),
        }
    }
}

/// Failure of a pipeline run, split by exit code.
#[derive(Debug)]
pub enum PipelineError {
    /// Every problem found while validating inputs.
    Validation(Vec<String>),
    Runtime(Error),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipelineError::Validation(problems) => {
                writeln!(f, "invalid configuration ({} problems):", problems.len())?;
                for p in problems {
                    writeln!(f, "  - {p}")?;
                }
                Ok(())
            }
            PipelineError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl From<Error> for PipelineError {
    fn from(e: Error) -> Self {
        PipelineError::Runtime(e)
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> std::result::Result<Self, PipelineError> {
        let mut c: ExperimentConfig =
            toml::from_str(text).map_err(|e| PipelineError::Validation(vec![format!("config: {e}")]))?;
        for p in [
            &mut c.data.train_source,
            &mut c.data.train_target,
            &mut c.data.test_source,
            &mut c.data.test_reference,
        ] {
            resolve(base_dir, p);
        }
        for p in [
            &mut c.annotations.pos,
            &mut c.annotations.alignment,
            &mut c.annotations.depth,
            &mut c.annotations.under_translation,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base_dir, p);
        }
        if let Some(p) = c.output_dir.as_mut() {
            resolve(base_dir, p);
        }
        Ok(c)
    }

    pub fn from_file(path: &Path) -> std::result::Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(vec![format!("{}: {e}", path.display())]))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// SHA-256 of the canonical JSON form (output directory excluded).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Output directory: the config's, else `$WORDIMP_OUT`, else `./wordimp-out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("wordimp-out"))
    }

    /// Checks scalar settings and file existence, listing every problem.
    pub fn validate(&self) -> Vec<String> {
        self.validate_for(true, true)
    }

    /// Like [`validate`](Self::validate), checking only the corpus files a
    /// stage reads.
    pub fn validate_for(&self, training: bool, testing: bool) -> Vec<String> {
        let mut problems = Vec::new();
        let d = &self.data;
        for (name, p, needed) in [
            ("data.train_source", &d.train_source, training),
            ("data.train_target", &d.train_target, training),
            ("data.test_source", &d.test_source, testing),
            ("data.test_reference", &d.test_reference, testing),
        ] {
            if needed && !p.is_file() {
                problems.push(format!("{name}: {} does not exist", p.display()));
            }
        }
        let a = &self.annotations;
        for (name, p) in [
            ("annotations.pos", &a.pos),
            ("annotations.alignment", &a.alignment),
            ("annotations.depth", &a.depth),
            ("annotations.under_translation", &a.under_translation),
        ] {
            if let Some(p) = p.as_ref().filter(|p| !p.is_file()) {
                problems.push(format!("{name}: {} does not exist", p.display()));
            }
        }
        if self.attribution.steps == 0 {
            problems.push("attribution.steps must be at least 1".into());
        }
        if self.evaluation.k_max == 0 {
            problems.push("evaluation.k_max must be at least 1".into());
        }
        if self.evaluation.repeats == 0 {
            problems.push("evaluation.repeats must be at least 1".into());
        }
        if self.model.steps == 0 {
            problems.push("model.steps must be at least 1".into());
        }
        if self.model.embed_dim == 0 || self.model.ffn_dim == 0 {
            problems.push("model.embed_dim and model.ffn_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.model.word_dropout) {
            problems.push("model.word_dropout must be in [0, 1)".into());
        }
        if self.decoding.beam == 0 || self.decoding.max_len == 0 {
            problems.push("decoding.beam and decoding.max_len must be positive".into());
        }
        for t in &self.analysis.thresholds {
            if !(*t > 0.0 && *t <= 100.0) {
                problems.push(format!("analysis.thresholds: {t} is not a percentage in (0, 100]"));
            }
        }
        problems
    }
}

/// Test sentences with their references and whatever annotations exist.
#[derive(Debug, Clone)]
pub struct TestData {
    pub sources: Vec<Vec<String>>,
    pub references: Vec<Vec<String>>,
    pub pos: Option<Vec<Vec<Pos>>>,
    pub alignment: Option<Vec<Vec<(usize, usize)>>>,
    pub depth: Option<Vec<Vec<u32>>>,
    pub gold: Option<BTreeMap<usize, Vec<usize>>>,
}

fn read_text(path: &Path, problems: &mut Vec<String>) -> Option<String> {
    fs::read_to_string(path)
        .map_err(|e| problems.push(format!("{}: {e}", path.display())))
        .ok()
}

fn line_count_check<T>(
    path: &Path,
    rows: &[Vec<T>],
    sources: &[Vec<String>],
    what: &str,
    problems: &mut Vec<String>,
) -> bool {
    let mut ok = true;
    if rows.len() != sources.len() {
        problems.push(format!(
            "{}: {} lines but the test set has {} sentences",
            path.display(),
            rows.len(),
            sources.len()
        ));
        return false;
    }
    for (i, (r, s)) in rows.iter().zip(sources).enumerate() {
        if r.len() != s.len() {
            problems.push(format!(
                "{}:{}: {} {what} for {} words",
                path.display(),
                i + 1,
                r.len(),
                s.len()
            ));
            ok = false;
        }
    }
    ok
}

impl TestData {
    /// Reads the test set and annotations, reporting every problem at once.
    pub fn load(
        test_source: &Path,
        test_reference: &Path,
        annotations: &AnnotationConfig,
    ) -> std::result::Result<Self, Vec<String>> {
        let mut problems = Vec::new();
        let sources = read_tokenized(test_source).map_err(|e| problems.push(e.to_string())).unwrap_or_default();
        let references = read_tokenized(test_reference)
            .map_err(|e| problems.push(e.to_string()))
            .unwrap_or_default();
        if let Some(i) = sources.iter().position(Vec::is_empty) {
            problems.push(format!("{}:{}: empty sentence", test_source.display(), i + 1));
        }
        Self::with_annotations(sources, references, annotations, problems)
    }

    /// Attaches annotations to already tokenized sentences.
    pub fn with_annotations(
        sources: Vec<Vec<String>>,
        references: Vec<Vec<String>>,
        annotations: &AnnotationConfig,
        mut problems: Vec<String>,
    ) -> std::result::Result<Self, Vec<String>> {
        if sources.len() != references.len() {
            problems.push(format!(
                "{} test sources but {} references",
                sources.len(),
                references.len()
            ));
        }

        let pos = annotations.pos.as_ref().and_then(|p| {
            let text = read_text(p, &mut problems)?;
            let parsed = parse_pos(p, &text).map_err(|e| problems.push(e.to_string())).ok()?;
            let mut ok = parsed.len() == sources.len();
            if !ok {
                problems.push(format!(
                    "{}: {} lines but the test set has {} sentences",
                    p.display(),
                    parsed.len(),
                    sources.len()
                ));
            }
            for (i, ((words, _), src)) in parsed.iter().zip(&sources).enumerate() {
                if words != src {
                    problems.push(format!("{}:{}: tokens do not match the test source", p.display(), i + 1));
                    ok = false;
                }
            }
            ok.then(|| parsed.into_iter().map(|(_, t)| t).collect())
        });

        let alignment = annotations.alignment.as_ref().and_then(|p| {
            let text = read_text(p, &mut problems)?;
            let parsed = parse_alignment(p, &text).map_err(|e| problems.push(e.to_string())).ok()?;
            if parsed.len() != sources.len() {
                problems.push(format!(
                    "{}: {} lines but the test set has {} sentences",
                    p.display(),
                    parsed.len(),
                    sources.len()
                ));
                return None;
            }
            let mut ok = true;
            for (i, links) in parsed.iter().enumerate() {
                let (m, n) = (sources[i].len(), references.get(i).map_or(0, Vec::len));
                if let Some((a, b)) = links.iter().find(|&&(a, b)| a >= m || b >= n) {
                    problems.push(format!(
                        "{}:{}: link {a}-{b} outside a {m}-word source and {n}-word reference",
                        p.display(),
                        i + 1
                    ));
                    ok = false;
                }
            }
            ok.then_some(parsed)
        });

        let depth = annotations.depth.as_ref().and_then(|p| {
            let text = read_text(p, &mut problems)?;
            let parsed = parse_depth(p, &text).map_err(|e| problems.push(e.to_string())).ok()?;
            line_count_check(p, &parsed, &sources, "depths", &mut problems).then_some(parsed)
        });

        let gold = annotations.under_translation.as_ref().and_then(|p| {
            let text = read_text(p, &mut problems)?;
            let parsed = parse_gold(p, &text).map_err(|e| problems.push(e.to_string())).ok()?;
            let lengths: Vec<usize> = sources.iter().map(Vec::len).collect();
            gold_flags(&parsed, &lengths)
                .map_err(|e| problems.push(format!("{}: {e}", p.display())))
                .ok()?;
            Some(parsed)
        });

        if problems.is_empty() {
            Ok(TestData {
                sources,
                references,
                pos,
                alignment,
                depth,
                gold,
            })
        } else {
            Err(problems)
        }
    }

    /// Encodes sources and references with a trained vocabulary. Reference
    /// pieces outside the vocabulary get fresh ids so they never match.
    pub fn encode(&self, checkpoint: &Checkpoint) -> Vec<(SentencePair, Option<Vec<Pos>>)> {
        let counts = checkpoint.word_counts();
        let vocab = &checkpoint.vocab;
        let mut unknown_src = 0;
        let mut extra: HashMap<String, usize> = HashMap::new();
        let out = self
            .sources
            .iter()
            .zip(&self.references)
            .enumerate()
            .map(|(i, (src, reference))| {
                let (source, spans, unk) = encode_sentence(src, vocab, &checkpoint.splitter, &counts);
                unknown_src += unk;
                let (pieces, _) = checkpoint.splitter.split_sentence(reference, &counts);
                let target = pieces
                    .iter()
                    .map(|p| {
                        vocab.id(p).unwrap_or_else(|| {
                            let next = vocab.len() + extra.len();
                            *extra.entry(p.clone()).or_insert(next)
                        })
                    })
                    .collect();
                let pair = SentencePair {
                    source,
                    target,
                    source_surface: src.clone(),
                    subword_spans: spans,
                };
                (pair, self.pos.as_ref().map(|p| p[i].clone()))
            })
            .collect();
        if unknown_src > 0 {
            log::info!("{unknown_src} test source pieces are out of vocabulary and map to UNK");
        }
        out
    }

    pub fn fertility(&self) -> Option<Vec<Vec<FertilityClass>>> {
        let links = self.alignment.as_ref()?;
        Some(
            links
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    fertility_from_alignment(l, self.sources[i].len(), self.references[i].len())
                        .expect("alignment bounds are checked at load time")
                        .into_iter()
                        .map(FertilityClass::of)
                        .collect()
                })
                .collect(),
        )
    }
}

/// Trains a model on a parallel corpus and packs it with its vocabulary.
pub fn train_checkpoint(
    train_source: &Path,
    train_target: &Path,
    splitter: SubwordSplitter,
    config: &TrainConfig,
) -> Result<(Checkpoint, Vec<f64>)> {
    let corpus = Corpus::read(train_source, train_target, splitter)?;
    let report = train(&corpus.pairs, corpus.vocab.len(), config)?;
    let checkpoint = Checkpoint::new(
        AnyModel::Transformer(report.model),
        corpus.vocab,
        corpus.splitter,
        &corpus.word_counts,
    );
    Ok((checkpoint, report.losses))
}

/// Per-sentence output of the attribution stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceReport {
    pub id: usize,
    pub source: Vec<String>,
    pub hypothesis: Vec<String>,
    pub reference: Vec<String>,
    pub estimates: Vec<EstimateRecord>,
    pub max_completeness_residual: f64,
}

/// Attribution estimates and the raw attributions for every test item.
pub fn attribute_all<M: TranslationModel + ?Sized>(
    model: &M,
    items: &[TestItem],
    steps: usize,
) -> Result<Vec<(ImportanceEstimate, Attribution)>> {
    items
        .par_iter()
        .enumerate()
        .map(|(i, t)| estimate_attribution(model, &t.pair, steps).map_err(|e| e.in_sentence(i)))
        .collect()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub pos_distribution: Option<Vec<DistributionRow>>,
    pub fertility_distribution: Option<Vec<DistributionRow>>,
    /// `(method, report)` per threshold.
    pub under_translation: Option<Vec<(Method, F1Report)>>,
    pub tree_correlation: Option<TreeReport>,
    pub skipped: Vec<String>,
}

/// Runs every analysis whose annotation is present. `importances` holds
/// the normalized word importance of each method, per sentence.
pub fn analyze(
    data: &TestData,
    importances: &BTreeMap<Method, Vec<Vec<f64>>>,
    config: &AnalysisConfig,
) -> Result<AnalysisReport> {
    let mut report = AnalysisReport::default();
    let attribution = importances
        .get(&Method::Attribution)
        .ok_or_else(|| Error::InvalidInput("analysis needs attribution importances".into()))?;

    match &data.pos {
        Some(pos) => report.pos_distribution = Some(pos_distribution(attribution, pos)?),
        None => report.skipped.push("POS distribution: no POS annotation".into()),
    }
    let fertility = data.fertility();
    match &fertility {
        Some(f) => report.fertility_distribution = Some(fertility_distribution(attribution, f)?),
        None => report.skipped.push("fertility distribution: no alignment".into()),
    }
    match &data.gold {
        Some(gold) => {
            let lengths: Vec<usize> = data.sources.iter().map(Vec::len).collect();
            let flags = gold_flags(gold, &lengths)?;
            let mut rows = Vec::new();
            for (&method, imp) in importances {
                if !matches!(method, Method::Attention | Method::Erasure | Method::Attribution) {
                    continue;
                }
                for &t in &config.thresholds {
                    rows.push((method, detect_undertranslation(imp, &flags, t)?));
                }
            }
            report.under_translation = Some(rows);
        }
        None => report.skipped.push("under-translation F1: no gold annotation".into()),
    }
    match &data.depth {
        Some(depth) => {
            let flat_depth: Vec<u32> = depth.iter().flatten().copied().collect();
            let buckets = depth_buckets(&flat_depth);
            let n = buckets.len();
            let pos: Vec<Pos> = match &data.pos {
                Some(p) => p.iter().flatten().copied().collect(),
                None => vec![Pos::Others; n],
            };
            let fert: Vec<FertilityClass> = match &fertility {
                Some(f) => f.iter().flatten().copied().collect(),
                None => vec![FertilityClass::One; n],
            };
            let target: Vec<f64> = attribution.iter().flat_map(|v| length_normalize(v)).collect();
            if n < config.tree.min_tokens {
                report.skipped.push(format!(
                    "tree correlation: {n} tokens, fewer than analysis.tree.min_tokens = {}",
                    config.tree.min_tokens
                ));
            } else {
                let features = token_features(&pos, &fert, &buckets)?;
                report.tree_correlation = Some(tree_correlation(&features, &target, &config.tree)?);
            }
        }
        None => report.skipped.push("tree correlation: no depth annotation".into()),
    }
    Ok(report)
}

/// `method,threshold_pct,predicted,gold,hits,precision,recall,f1` rows.
pub fn f1_csv(rows: &[(Method, F1Report)]) -> String {
    let mut out = String::from("method,threshold_pct,predicted,gold,hits,precision,recall,f1\n");
    for (m, r) in rows {
        let _ = writeln!(
            out,
            "{m},{},{},{},{},{:.6},{:.6},{:.6}",
            r.threshold_pct, r.predicted, r.gold, r.hits, r.precision, r.recall, r.f1
        );
    }
    out
}

/// Collects output files so the manifest can list their digests.
struct Outputs {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Outputs {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written
            .insert(rel.to_string(), hex::encode(Sha256::digest(contents.as_bytes())));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
        self.write(rel, &(text + "\n"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub outputs: BTreeMap<String, String>,
    pub notices: Vec<String>,
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub curves: Vec<PerturbationCurve>,
    pub analysis: AnalysisReport,
}

/// Everything the evaluation stage produces for one checkpoint and test set.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub items: Vec<TestItem>,
    pub attributions: Vec<Attribution>,
    /// Per method: one estimate list per repeat (a single list for
    /// deterministic methods).
    pub estimates: BTreeMap<Method, Vec<Vec<ImportanceEstimate>>>,
    pub curves: Vec<PerturbationCurve>,
    pub notices: Vec<String>,
}

impl Evaluation {
    pub fn sentence_reports(&self, vocab: &Vocab, references: &[Vec<String>]) -> Vec<SentenceReport> {
        self.items
            .iter()
            .enumerate()
            .map(|(i, t)| SentenceReport {
                id: i,
                source: t.pair.source_surface.clone(),
                hypothesis: vocab.decode(&t.pair.target),
                reference: references[i].clone(),
                estimates: self
                    .estimates
                    .values()
                    .map(|e| e[0][i].to_record(&t.pair.source_surface))
                    .collect(),
                max_completeness_residual: self.attributions[i].max_residual(),
            })
            .collect()
    }

    /// First-repeat scores of every deterministic method.
    pub fn importances(&self) -> BTreeMap<Method, Vec<Vec<f64>>> {
        self.estimates
            .iter()
            .filter(|(m, _)| !m.is_stochastic())
            .map(|(&m, e)| (m, e[0].iter().map(|x| x.scores.clone()).collect()))
            .collect()
    }
}

/// Decodes the test set, attributes every sentence, runs the configured
/// estimators and traces one perturbation curve per (kind, estimator).
/// Attribution always runs, since analysis depends on it.
pub fn evaluate(checkpoint: &Checkpoint, data: &TestData, config: &ExperimentConfig) -> Result<Evaluation> {
    let model = &checkpoint.model;
    let mut notices = Vec::new();
    let items = prepare_test_set(model, data.encode(checkpoint), &config.decoding)?;
    let table = FrequencyTable::new(&checkpoint.vocab, config.evaluation.frequency_exclude);
    let estimators = Estimators {
        model,
        frequencies: &table,
        steps: config.attribution.steps,
        decoding: config.decoding,
    };

    log::info!("attributing {} test sentences", items.len());
    let (attr_estimates, attributions): (Vec<_>, Vec<_>) =
        attribute_all(model, &items, config.attribution.steps)?.into_iter().unzip();

    let mut estimates: BTreeMap<Method, Vec<Vec<ImportanceEstimate>>> = BTreeMap::new();
    estimates.insert(Method::Attribution, vec![attr_estimates]);
    for &m in &config.evaluation.estimators {
        if estimates.contains_key(&m) {
            continue;
        }
        if m == Method::Content && data.pos.is_none() {
            notices.push("content estimator skipped: no POS annotation".to_string());
            continue;
        }
        log::info!("estimating with {m}");
        let e = compute_estimates(&estimators, &items, m, config.evaluation.repeats, config.seed)?;
        estimates.insert(m, e);
    }

    let pool = data.pos.as_ref().map(|pos| {
        ReplacementPool::new(
            data.sources
                .iter()
                .zip(pos)
                .flat_map(|(s, p)| s.iter().map(String::as_str).zip(p.iter().copied())),
            &checkpoint.vocab,
        )
    });
    let mut curves = Vec::new();
    for &kind in &config.evaluation.perturbations {
        if kind == PerturbationKind::Replace && pool.is_none() {
            notices.push("replace perturbation skipped: no POS annotation".to_string());
            continue;
        }
        for (&m, e) in &estimates {
            if m == Method::Attribution && !config.evaluation.estimators.contains(&m) {
                continue;
            }
            log::info!("{kind} curve for {m}");
            let spec = PerturbationSpec {
                kind,
                k_max: config.evaluation.k_max,
                estimator: m,
                repeats: config.evaluation.repeats,
                seed: config.seed,
            };
            curves.push(curve_from_estimates(model, &items, e, &spec, pool.as_ref(), &config.decoding)?);
        }
    }
    Ok(Evaluation {
        items,
        attributions,
        estimates,
        curves,
        notices,
    })
}

/// Writes the evaluation outputs: per-sentence importance, contribution
/// matrices and perturbation curves.
fn write_evaluation(
    out: &mut Outputs,
    eval: &Evaluation,
    checkpoint: &Checkpoint,
    data: &TestData,
    matrices: usize,
) -> Result<()> {
    out.json("importance.json", &eval.sentence_reports(&checkpoint.vocab, &data.references))?;
    for (i, (attr, item)) in eval.attributions.iter().zip(&eval.items).enumerate().take(matrices) {
        let outputs = checkpoint.vocab.decode(&item.pair.target);
        let inputs = checkpoint.vocab.decode(&item.pair.source);
        out.write(&format!("matrices/{i:04}.csv"), &attr.matrix.to_csv(&inputs, &outputs)?)?;
    }
    out.write("curves.csv", &curves_to_csv(&eval.curves))?;
    out.json("curves.json", &eval.curves)
}

fn write_analysis(out: &mut Outputs, analysis: &AnalysisReport) -> Result<()> {
    if let Some(rows) = &analysis.pos_distribution {
        out.write("analysis/pos_distribution.csv", &distribution_csv(rows))?;
    }
    if let Some(rows) = &analysis.fertility_distribution {
        out.write("analysis/fertility_distribution.csv", &distribution_csv(rows))?;
    }
    if let Some(rows) = &analysis.under_translation {
        out.write("analysis/under_translation.csv", &f1_csv(rows))?;
    }
    if let Some(tree) = &analysis.tree_correlation {
        out.write("analysis/tree_correlation.csv", &tree.to_csv())?;
    }
    out.json("analysis/report.json", analysis)
}

fn finish(
    mut out: Outputs,
    config_sha256: String,
    seed: u64,
    notices: Vec<String>,
) -> Result<Manifest> {
    for n in &notices {
        log::warn!("{n}");
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256,
        seed,
        outputs: out.written.clone(),
        notices,
    };
    out.json("manifest.json", &manifest)?;
    Ok(manifest)
}

/// Runs training, attribution, perturbation evaluation and analysis.
pub fn run_pipeline(config: &ExperimentConfig) -> std::result::Result<PipelineSummary, PipelineError> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(PipelineError::Validation(problems));
    }
    let data = TestData::load(&config.data.test_source, &config.data.test_reference, &config.annotations)
        .map_err(PipelineError::Validation)?;
    let out_dir = config.resolved_output_dir();
    let mut out = Outputs::new(&out_dir)?;

    let train_config = TrainConfig {
        seed: derive_seed(config.seed, "train", &[]),
        ..config.model.clone()
    };
    log::info!("training for {} steps", train_config.steps);
    let (checkpoint, losses) = train_checkpoint(
        &config.data.train_source,
        &config.data.train_target,
        config.data.splitter,
        &train_config,
    )?;
    out.write("model.json", &checkpoint.to_json()?)?;
    let mut loss_csv = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(loss_csv, "{i},{l:.10}");
    }
    out.write("train_loss.csv", &loss_csv)?;

    let eval = evaluate(&checkpoint, &data, config)?;
    write_evaluation(&mut out, &eval, &checkpoint, &data, config.attribution.matrices)?;

    let analysis = analyze(&data, &eval.importances(), &config.analysis)?;
    write_analysis(&mut out, &analysis)?;
    let mut notices = eval.notices.clone();
    notices.extend(analysis.skipped.iter().map(|s| format!("{s} (skipped)")));
    let manifest = finish(out, config.hash(), config.seed, notices)?;
    Ok(PipelineSummary {
        output_dir: out_dir,
        manifest,
        curves: eval.curves,
        analysis,
    })
}

/// Evaluation stage alone, against an existing checkpoint.
pub fn run_evaluation(
    checkpoint: &Checkpoint,
    config: &ExperimentConfig,
) -> std::result::Result<(Evaluation, Manifest), PipelineError> {
    let problems = config.validate_for(false, true);
    if !problems.is_empty() {
        return Err(PipelineError::Validation(problems));
    }
    let data = TestData::load(&config.data.test_source, &config.data.test_reference, &config.annotations)
        .map_err(PipelineError::Validation)?;
    let mut out = Outputs::new(&config.resolved_output_dir())?;
    let eval = evaluate(checkpoint, &data, config)?;
    write_evaluation(&mut out, &eval, checkpoint, &data, config.attribution.matrices)?;
    let manifest = finish(out, config.hash(), config.seed, eval.notices.clone())?;
    Ok((eval, manifest))
}

/// Analysis stage alone, from a previously written `importance.json`.
/// Sources and references are taken from the report.
pub fn run_analysis(
    reports: &[SentenceReport],
    annotations: &AnnotationConfig,
    config: &AnalysisConfig,
    out_dir: &Path,
) -> std::result::Result<AnalysisReport, PipelineError> {
    let sources = reports.iter().map(|r| r.source.clone()).collect();
    let references = reports.iter().map(|r| r.reference.clone()).collect();
    let data = TestData::with_annotations(sources, references, annotations, Vec::new())
        .map_err(PipelineError::Validation)?;
    let mut importances: BTreeMap<Method, Vec<Vec<f64>>> = BTreeMap::new();
    for r in reports {
        for e in r.estimates.iter().filter(|e| !e.method.is_stochastic()) {
            importances
                .entry(e.method)
                .or_default()
                .push(e.scores.iter().map(|s| s.unwrap_or(0.0)).collect());
        }
    }
    if importances.values().any(|v| v.len() != reports.len()) {
        return Err(PipelineError::Validation(vec![
            "importance report lists different estimators for different sentences".into(),
        ]));
    }
    let analysis = analyze(&data, &importances, config)?;
    let mut out = Outputs::new(out_dir)?;
    write_analysis(&mut out, &analysis)?;
    let json = serde_json::to_string(config).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let hash = hex::encode(Sha256::digest(json.as_bytes()));
    finish(out, hash, 0, analysis.skipped.clone())?;
    Ok(analysis)
}

/// Importance and contribution matrix for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAttribution {
    pub words: Vec<String>,
    /// Normalized word importance, one entry per word.
    pub importance: Vec<f64>,
    /// Source pieces, the rows of `matrix`.
    pub pieces: Vec<String>,
    /// Decoded output tokens, the columns of `matrix`.
    pub output: Vec<String>,
    /// `matrix[m][n]`: contribution of piece `m` to output token `n`.
    pub matrix: Vec<Vec<f64>>,
    pub steps: usize,
    pub max_completeness_residual: f64,
    /// Source pieces missing from the vocabulary, encoded as UNK.
    pub unknown_pieces: usize,
}

/// Translates `words` with the checkpoint and attributes the output.
pub fn attribute_sentence(
    checkpoint: &Checkpoint,
    words: &[String],
    steps: usize,
    decoding: &DecodeOptions,
) -> Result<SentenceAttribution> {
    if words.is_empty() {
        return Err(Error::InvalidInput("empty sentence".into()));
    }
    let model = &checkpoint.model;
    let counts = checkpoint.word_counts();
    let (source, spans, unknown) = encode_sentence(words, &checkpoint.vocab, &checkpoint.splitter, &counts);
    if unknown > 0 {
        log::warn!("{unknown} source pieces are out of vocabulary and map to UNK");
    }
    let target = hypothesis(model, &model.embed(&source), decoding)?;
    let pair = SentencePair {
        source,
        target,
        source_surface: words.to_vec(),
        subword_spans: spans,
    };
    let (estimate, attr) = estimate_attribution(model, &pair, steps)?;
    let (pieces, _) = checkpoint.splitter.split_sentence(words, &counts);
    let values = &attr.matrix.values;
    Ok(SentenceAttribution {
        words: words.to_vec(),
        importance: estimate.scores,
        pieces,
        output: checkpoint.vocab.decode(&pair.target),
        matrix: (0..values.rows()).map(|m| values.row(m).to_vec()).collect(),
        steps,
        max_completeness_residual: attr.max_residual(),
        unknown_pieces: unknown,
    })
}

impl std::fmt::Display for SentenceAttribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let width = self.words.iter().chain(&self.pieces).map(|w| w.chars().count()).max().unwrap_or(0);
        writeln!(f, "word importance")?;
        for (w, v) in self.words.iter().zip(&self.importance) {
            let bar = "#".repeat((v * 40.0).round().max(0.0) as usize);
            writeln!(f, "  {w:<width$}  {v:.4}  {bar}")?;
        }
        writeln!(f)?;
        writeln!(f, "contribution matrix (rows: source, columns: output)")?;
        write!(f, "  {:<width$}", "")?;
        for o in &self.output {
            write!(f, " {o:>9}")?;
        }
        writeln!(f)?;
        for (p, row) in self.pieces.iter().zip(&self.matrix) {
            write!(f, "  {p:<width$}")?;
            for v in row {
                write!(f, " {v:>+9.4}")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "\nS = {}, max completeness residual {:.2e}",
            self.steps, self.max_completeness_residual
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_unknown_keys() {
        let base = Path::new("/data");
        let c = ExperimentConfig::from_toml(
            "seed = 3\n[data]\ntrain_source='a'\ntrain_target='b'\ntest_source='c'\ntest_reference='d'\n",
            base,
        )
        .unwrap();
        assert_eq!(c.data.train_source, Path::new("/data/a"));
        assert_eq!(c.attribution.steps, 300);
        assert_eq!(c.evaluation.k_max, 5);
        let bad = ExperimentConfig::from_toml("seed = 1\nbogus = 2\n", base).unwrap_err();
        assert_eq!(bad.exit_code(), 1);
    }

    #[test]
    fn validation_lists_every_problem() {
        let c = ExperimentConfig::from_toml(
            "[data]\ntrain_source='a'\ntrain_target='b'\ntest_source='c'\ntest_reference='d'\n\
             [attribution]\nsteps = 0\n[evaluation]\nk_max = 0\n",
            Path::new("/nonexistent"),
        )
        .unwrap();
        let problems = c.validate();
        assert_eq!(problems.len(), 6, "{problems:?}");
    }

    #[test]
    fn hash_ignores_output_dir() {
        let text = "[data]\ntrain_source='a'\ntrain_target='b'\ntest_source='c'\ntest_reference='d'\n";
        let a = ExperimentConfig::from_toml(text, Path::new("/x")).unwrap();
        let mut b = a.clone();
        b.output_dir = Some(PathBuf::from("/elsewhere"));
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.hash(), c.hash());
    }
}
