//! Vocabulary, sentence pairs, subword splitting and parallel-corpus I/O.

use std::collections::HashMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<bos>", "<eos>", "<pad>", "<unk>"];

/// Dense token table with per-token training frequencies.
///
/// Indices `0..4` are always `<bos>`, `<eos>`, `<pad>`, `<unk>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    frequency: Vec<u64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    frequency: Vec<u64>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let index = r
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            tokens: r.tokens,
            frequency: r.frequency,
            index,
        }
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            tokens: v.tokens,
            frequency: v.frequency,
        }
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            frequency: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED {
            v.insert(t);
        }
        v
    }

    /// Adds `token` if absent and returns its index.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.frequency.push(0);
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn frequency(&self, id: usize) -> u64 {
        self.frequency[id]
    }

    pub fn count(&mut self, id: usize) {
        self.frequency[id] += 1;
    }

    pub fn is_reserved(id: usize) -> bool {
        id < RESERVED.len()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }

    /// The `n` most frequent non-reserved token ids; ties go to the lower id.
    pub fn most_frequent(&self, n: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (RESERVED.len()..self.len()).collect();
        ids.sort_by(|&a, &b| self.frequency[b].cmp(&self.frequency[a]).then(a.cmp(&b)));
        ids.truncate(n);
        ids
    }
}

/// A source/target pair. `target` never contains BOS or EOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub source_surface: Vec<String>,
    pub subword_spans: Vec<Range<usize>>,
}

impl SentencePair {
    /// Pair whose source was not split: one span per token.
    pub fn unsplit(source: Vec<usize>, target: Vec<usize>, vocab: &Vocab) -> Self {
        let source_surface = vocab.decode(&source);
        let subword_spans = (0..source.len()).map(|i| i..i + 1).collect();
        SentencePair {
            source,
            target,
            source_surface,
            subword_spans,
        }
    }

    pub fn surface_len(&self) -> usize {
        self.subword_spans.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_partition(&self.subword_spans, self.source.len())?;
        if self.source_surface.len() != self.subword_spans.len() {
            return Err(Error::InvalidInput(format!(
                "{} surface words but {} spans",
                self.source_surface.len(),
                self.subword_spans.len()
            )));
        }
        if self.source.contains(&PAD) || self.target.contains(&PAD) {
            return Err(Error::InvalidInput("PAD inside a sentence".into()));
        }
        Ok(())
    }
}

/// Checks that `spans` tile `0..len` in order with no gaps or overlaps.
pub fn check_partition(spans: &[Range<usize>], len: usize) -> Result<()> {
    let mut next = 0;
    for (i, s) in spans.iter().enumerate() {
        if s.start != next || s.end <= s.start {
            return Err(Error::InvalidInput(format!(
                "span {i} ({}..{}) breaks the partition of 0..{len}",
                s.start, s.end
            )));
        }
        next = s.end;
    }
    if next != len {
        return Err(Error::InvalidInput(format!(
            "spans cover 0..{next}, expected 0..{len}"
        )));
    }
    Ok(())
}

/// Deterministic stand-in for BPE: words seen fewer than `min_count` times
/// are cut into `piece_len`-character pieces, non-final pieces marked `@@`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordSplitter {
    pub min_count: u64,
    pub piece_len: usize,
}

impl Default for SubwordSplitter {
    fn default() -> Self {
        SubwordSplitter {
            min_count: 2,
            piece_len: 3,
        }
    }
}

impl SubwordSplitter {
    /// Splits one word given its training count.
    pub fn split_word(&self, word: &str, count: u64) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        if count >= self.min_count || chars.len() <= self.piece_len || self.piece_len == 0 {
            return vec![word.to_string()];
        }
        let chunks: Vec<String> = chars
            .chunks(self.piece_len)
            .map(|c| c.iter().collect())
            .collect();
        let last = chunks.len() - 1;
        chunks
            .into_iter()
            .enumerate()
            .map(|(i, c)| if i < last { format!("{c}@@") } else { c })
            .collect()
    }

    /// Splits a sentence, returning pieces and the span each word produced.
    pub fn split_sentence(
        &self,
        words: &[String],
        counts: &HashMap<String, u64>,
    ) -> (Vec<String>, Vec<Range<usize>>) {
        let mut pieces = Vec::new();
        let mut spans = Vec::with_capacity(words.len());
        for w in words {
            let start = pieces.len();
            pieces.extend(self.split_word(w, counts.get(w).copied().unwrap_or(0)));
            spans.push(start..pieces.len());
        }
        (pieces, spans)
    }
}

/// Tokenized parallel corpus plus the vocabulary built from it.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocab,
    pub splitter: SubwordSplitter,
    pub word_counts: HashMap<String, u64>,
    pub pairs: Vec<SentencePair>,
}

pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

impl Corpus {
    /// Builds vocabulary and pairs from whitespace-tokenized sentences.
    /// Token frequencies count source-side occurrences.
    pub fn build(
        sources: &[Vec<String>],
        targets: &[Vec<String>],
        splitter: SubwordSplitter,
    ) -> Result<Self> {
        if sources.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} source lines but {} target lines",
                sources.len(),
                targets.len()
            )));
        }
        let mut word_counts: HashMap<String, u64> = HashMap::new();
        for w in sources.iter().chain(targets).flatten() {
            *word_counts.entry(w.clone()).or_default() += 1;
        }
        let mut vocab = Vocab::new();
        let mut pairs = Vec::with_capacity(sources.len());
        for (lineno, (src, tgt)) in sources.iter().zip(targets).enumerate() {
            if src.is_empty() || tgt.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "line {}: empty source or target",
                    lineno + 1
                )));
            }
            let (pieces, spans) = splitter.split_sentence(src, &word_counts);
            let source: Vec<usize> = pieces.iter().map(|p| vocab.insert(p)).collect();
            for &id in &source {
                vocab.count(id);
            }
            let (tpieces, _) = splitter.split_sentence(tgt, &word_counts);
            let target = tpieces.iter().map(|p| vocab.insert(p)).collect();
            pairs.push(SentencePair {
                source,
                target,
                source_surface: src.clone(),
                subword_spans: spans,
            });
        }
        Ok(Corpus {
            vocab,
            splitter,
            word_counts,
            pairs,
        })
    }

    pub fn read(source_path: &Path, target_path: &Path, splitter: SubwordSplitter) -> Result<Self> {
        let sources = read_tokenized(source_path)?;
        let targets = read_tokenized(target_path)?;
        Self::build(&sources, &targets, splitter)
    }
}

/// Encodes a surface sentence with a trained vocabulary; unknown pieces map to UNK.
pub fn encode_sentence(
    words: &[String],
    vocab: &Vocab,
    splitter: &SubwordSplitter,
    word_counts: &HashMap<String, u64>,
) -> (Vec<usize>, Vec<Range<usize>>, usize) {
    let (pieces, spans) = splitter.split_sentence(words, word_counts);
    let mut unknown = 0;
    let ids = pieces
        .iter()
        .map(|p| {
            vocab.id(p).unwrap_or_else(|| {
                unknown += 1;
                UNK
            })
        })
        .collect();
    (ids, spans, unknown)
}

pub fn read_tokenized(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(tokenize).collect())
}
