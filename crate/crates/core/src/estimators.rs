//! Six ways to rank the words of a source sentence by importance.
//!
//! Every estimate is at surface-word granularity: when the source was split
//! into subwords, scores are reported per word and a word's whole span is
//! treated as one unit downstream.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::Pos;
use crate::attribution::{attribute_pair, merge_to_words, word_importance, Attribution, ImportanceVector};
use crate::bleu::sentence_bleu;
use crate::data::{SentencePair, Vocab};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::seqmodel::{attention_scores, hypothesis, DecodeOptions, TranslationModel};
use crate::tensor::softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Random,
    Frequency,
    Content,
    Attention,
    Erasure,
    Attribution,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Random,
        Method::Frequency,
        Method::Content,
        Method::Attention,
        Method::Erasure,
        Method::Attribution,
    ];

    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Random | Method::Content)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Frequency => "frequency",
            Method::Content => "content",
            Method::Attention => "attention",
            Method::Erasure => "erasure",
            Method::Attribution => "attribution",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator {s:?}")))
    }
}

/// Per-word scores and the ranking they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceEstimate {
    pub method: Method,
    pub scores: Vec<f64>,
    /// Word indices, most important first.
    pub ranking: Vec<usize>,
    pub stochastic: bool,
    pub seed: Option<u64>,
}

/// Descending order of `scores`, lower index first on ties. NaN sorts last.
pub fn rank(scores: &[f64]) -> Vec<usize> {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| key(scores[b]).total_cmp(&key(scores[a])).then(a.cmp(&b)));
    idx
}

impl ImportanceEstimate {
    pub fn from_scores(method: Method, scores: Vec<f64>, seed: Option<u64>) -> Self {
        ImportanceEstimate {
            method,
            ranking: rank(&scores),
            scores,
            stochastic: method.is_stochastic(),
            seed,
        }
    }

    /// Estimate whose ranking is `order`; scores count down from `len`.
    fn from_order(method: Method, order: Vec<usize>, seed: u64) -> Self {
        let len = order.len();
        let mut scores = vec![0.0; len];
        for (r, &i) in order.iter().enumerate() {
            scores[i] = (len - r) as f64;
        }
        ImportanceEstimate {
            method,
            scores,
            ranking: order,
            stochastic: method.is_stochastic(),
            seed: Some(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// The `k` highest-ranked words (fewer if the sentence is shorter).
    pub fn top_k(&self, k: usize) -> &[usize] {
        &self.ranking[..k.min(self.ranking.len())]
    }

    pub fn to_record(&self, tokens: &[String]) -> EstimateRecord {
        EstimateRecord {
            method: self.method,
            tokens: tokens.to_vec(),
            scores: self.scores.iter().map(|&s| s.is_finite().then_some(s)).collect(),
            ranking: self.ranking.clone(),
            seed: self.seed,
        }
    }
}

/// JSON export form. Excluded (−∞) scores serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub method: Method,
    pub tokens: Vec<String>,
    pub scores: Vec<Option<f64>>,
    pub ranking: Vec<usize>,
    pub seed: Option<u64>,
}

pub fn estimate_random(pair: &SentencePair, seed: u64) -> ImportanceEstimate {
    let mut order: Vec<usize> = (0..pair.surface_len()).collect();
    order.shuffle(&mut substream(seed, "random-estimator", &[]));
    ImportanceEstimate::from_order(Method::Random, order, seed)
}

/// Training-corpus frequencies with the most frequent types excluded.
#[derive(Debug, Clone)]
pub struct FrequencyTable {
    counts: Vec<u64>,
    excluded: HashSet<usize>,
}

impl FrequencyTable {
    pub const DEFAULT_EXCLUDED: usize = 50;

    pub fn new(vocab: &Vocab, exclude_top: usize) -> Self {
        FrequencyTable {
            counts: (0..vocab.len()).map(|i| vocab.frequency(i)).collect(),
            excluded: vocab.most_frequent(exclude_top).into_iter().collect(),
        }
    }

    /// Score of one word given its subword ids: the lowest piece count, or
    /// −∞ if any piece is excluded.
    pub fn score(&self, ids: &[usize]) -> f64 {
        if ids.iter().any(|i| self.excluded.contains(i)) {
            return f64::NEG_INFINITY;
        }
        ids.iter()
            .map(|&i| self.counts.get(i).copied().unwrap_or(0))
            .min()
            .unwrap_or(0) as f64
    }
}

pub fn estimate_frequency(pair: &SentencePair, table: &FrequencyTable) -> ImportanceEstimate {
    let scores = pair
        .subword_spans
        .iter()
        .map(|s| table.score(&pair.source[s.clone()]))
        .collect();
    ImportanceEstimate::from_scores(Method::Frequency, scores, None)
}

/// Content words (nouns, verbs, adjectives) in random order, then the rest
/// in random order.
pub fn estimate_content(pair: &SentencePair, pos: &[Pos], seed: u64) -> Result<ImportanceEstimate> {
    if pos.len() != pair.surface_len() {
        return Err(Error::InvalidInput(format!(
            "{} POS tags for {} words",
            pos.len(),
            pair.surface_len()
        )));
    }
    let mut rng = substream(seed, "content-estimator", &[]);
    let (mut content, mut rest): (Vec<usize>, Vec<usize>) =
        (0..pos.len()).partition(|&i| pos[i].is_content());
    content.shuffle(&mut rng);
    rest.shuffle(&mut rng);
    content.extend(rest);
    Ok(ImportanceEstimate::from_order(Method::Content, content, seed))
}

/// Max attention each source position receives, softmaxed and merged to words.
pub fn estimate_attention<M: TranslationModel + ?Sized>(
    model: &M,
    pair: &SentencePair,
) -> Result<ImportanceEstimate> {
    let att = attention_scores(model, &pair.source, &pair.target)?;
    let maxes: Vec<f64> = (0..att.rows())
        .map(|m| att.row(m).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .map(|v| if v.is_finite() { v } else { 0.0 })
        .collect();
    let iv = ImportanceVector {
        values: softmax(&maxes),
        normalized: true,
    };
    let words = merge_to_words(&iv, &pair.subword_spans)?;
    Ok(ImportanceEstimate::from_scores(Method::Attention, words.values, None))
}

/// Sentence-BLEU drop when each word alone is masked, clipped at zero and
/// normalized to sum to one (uniform if every drop is zero).
pub fn estimate_erasure<M: TranslationModel + ?Sized>(
    model: &M,
    pair: &SentencePair,
    reference: &[usize],
    decoding: &DecodeOptions,
) -> Result<ImportanceEstimate> {
    let embedded = model.embed(&pair.source);
    let full = sentence_bleu(&hypothesis(model, &embedded, decoding)?, reference);
    let deltas: Vec<f64> = pair
        .subword_spans
        .par_iter()
        .map(|span| {
            let rows: Vec<usize> = span.clone().collect();
            let hyp = hypothesis(model, &embedded.with_zero_rows(&rows), decoding)?;
            Ok((full - sentence_bleu(&hyp, reference)).max(0.0))
        })
        .collect::<Result<_>>()?;
    let total: f64 = deltas.iter().sum();
    let scores = if total > 0.0 {
        deltas.iter().map(|d| d / total).collect()
    } else {
        vec![1.0 / deltas.len() as f64; deltas.len()]
    };
    Ok(ImportanceEstimate::from_scores(Method::Erasure, scores, None))
}

/// Integrated-gradients word importance, returned with the attribution it
/// came from.
pub fn estimate_attribution<M: TranslationModel + ?Sized>(
    model: &M,
    pair: &SentencePair,
    steps: usize,
) -> Result<(ImportanceEstimate, Attribution)> {
    let attribution = attribute_pair(model, pair, steps)?;
    let words = merge_to_words(&word_importance(&attribution.matrix), &pair.subword_spans)?;
    Ok((
        ImportanceEstimate::from_scores(Method::Attribution, words.values, None),
        attribution,
    ))
}

/// What a sentence brings to the estimators besides the pair itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct SentenceInputs<'a> {
    pub pos: Option<&'a [Pos]>,
    pub reference: Option<&'a [usize]>,
}

/// Shared, read-only resources for dispatching by [`Method`].
pub struct Estimators<'a, M: ?Sized> {
    pub model: &'a M,
    pub frequencies: &'a FrequencyTable,
    pub steps: usize,
    pub decoding: DecodeOptions,
}

impl<M: TranslationModel + ?Sized> Estimators<'_, M> {
    pub fn estimate(
        &self,
        method: Method,
        pair: &SentencePair,
        inputs: SentenceInputs<'_>,
        seed: u64,
    ) -> Result<ImportanceEstimate> {
        match method {
            Method::Random => Ok(estimate_random(pair, seed)),
            Method::Frequency => Ok(estimate_frequency(pair, self.frequencies)),
            Method::Content => {
                let pos = inputs
                    .pos
                    .ok_or_else(|| Error::InvalidInput("content estimator needs POS annotation".into()))?;
                estimate_content(pair, pos, seed)
            }
            Method::Attention => estimate_attention(self.model, pair),
            Method::Erasure => {
                let reference = inputs
                    .reference
                    .ok_or_else(|| Error::InvalidInput("erasure estimator needs a reference".into()))?;
                estimate_erasure(self.model, pair, reference, &self.decoding)
            }
            Method::Attribution => Ok(estimate_attribution(self.model, pair, self.steps)?.0),
        }
    }
}
