//! Synthetic parallel corpora with known alignments and annotations.
//!
//! * [`copy_task`]: the target repeats the source.
//! * [`collocation_language`]: a toy language pair built to give words
//!   unequal importance. It has adjective–noun collocations whose members
//!   each translate to two target words and always occur together, plain
//!   words that translate one-to-one, determiners that translate to nothing,
//!   and a final full stop. Because collocation members are redundant with
//!   each other, a model trained with word dropout can often recover one
//!   masked member from its partner, but not both.
//!
//!   A collocation's four target words spell its index in a mixed-radix
//!   code, so no code word can be guessed from the ones before it and each
//!   needs the source.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSentence {
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// One tag per source word.
    pub pos: Vec<String>,
    /// `(source, target)` links.
    pub alignment: Vec<(usize, usize)>,
    /// Dependency depth per source word.
    pub depth: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSplit {
    pub train: Vec<SyntheticSentence>,
    pub test: Vec<SyntheticSentence>,
}

/// Files written by [`SyntheticSplit::write`].
#[derive(Debug, Clone)]
pub struct SplitFiles {
    pub train_source: PathBuf,
    pub train_target: PathBuf,
    pub test_source: PathBuf,
    pub test_reference: PathBuf,
    pub test_pos: PathBuf,
    pub test_alignment: PathBuf,
    pub test_depth: PathBuf,
}

fn join_lines<'a>(lines: impl Iterator<Item = String> + 'a) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

impl SyntheticSplit {
    pub fn train_pairs(&self) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
        (
            self.train.iter().map(|s| s.source.clone()).collect(),
            self.train.iter().map(|s| s.target.clone()).collect(),
        )
    }

    /// Writes the split in the corpus and annotation file formats.
    pub fn write(&self, dir: &Path) -> Result<SplitFiles> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SplitFiles {
            train_source: dir.join("train.src"),
            train_target: dir.join("train.tgt"),
            test_source: dir.join("test.src"),
            test_reference: dir.join("test.ref"),
            test_pos: dir.join("test.pos"),
            test_alignment: dir.join("test.align"),
            test_depth: dir.join("test.depth"),
        };
        let write = |path: &Path, text: String| fs::write(path, text).map_err(|e| Error::io(path, e));
        write(&files.train_source, join_lines(self.train.iter().map(|s| s.source.join(" "))))?;
        write(&files.train_target, join_lines(self.train.iter().map(|s| s.target.join(" "))))?;
        write(&files.test_source, join_lines(self.test.iter().map(|s| s.source.join(" "))))?;
        write(&files.test_reference, join_lines(self.test.iter().map(|s| s.target.join(" "))))?;
        write(
            &files.test_pos,
            join_lines(self.test.iter().map(|s| {
                s.source
                    .iter()
                    .zip(&s.pos)
                    .map(|(w, t)| format!("{w}/{t}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })),
        )?;
        write(
            &files.test_alignment,
            join_lines(self.test.iter().map(|s| {
                s.alignment
                    .iter()
                    .map(|(i, j)| format!("{i}-{j}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })),
        )?;
        write(
            &files.test_depth,
            join_lines(self.test.iter().map(|s| {
                s.depth
                    .iter()
                    .map(u32::to_string)
                    .collect::<Vec<_>>()
                    .join(" ")
            })),
        )?;
        Ok(files)
    }
}

/// Copy task over `vocab_words` word types with sentence lengths in `lengths`.
pub fn copy_task(
    vocab_words: usize,
    n_train: usize,
    n_test: usize,
    lengths: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> SyntheticSplit {
    let gen = |n: usize, label: &str| {
        let mut rng = substream(seed, label, &[]);
        (0..n)
            .map(|_| {
                let len = rng.gen_range(lengths.clone());
                let source: Vec<String> = (0..len)
                    .map(|_| format!("w{}", rng.gen_range(0..vocab_words)))
                    .collect();
                SyntheticSentence {
                    target: source.clone(),
                    pos: (0..len).map(|_| "NOUN".to_string()).collect(),
                    alignment: (0..len).map(|i| (i, i)).collect(),
                    depth: (0..len).map(|_| rng.gen_range(1..=4)).collect(),
                    source,
                }
            })
            .collect()
    };
    SyntheticSplit {
        train: gen(n_train, "copy-train"),
        test: gen(n_test, "copy-test"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollocationConfig {
    /// Radices of the four code words; their product is the number of
    /// collocations.
    pub code_radix: [usize; 4],
    pub singletons: usize,
    pub determiners: usize,
    pub min_units: usize,
    pub max_units: usize,
    /// Probability that a unit is a collocation rather than a single word.
    pub collocation_rate: f64,
    /// Probability that a unit is preceded by a determiner.
    pub determiner_rate: f64,
}

impl Default for CollocationConfig {
    fn default() -> Self {
        CollocationConfig {
            code_radix: [3, 2, 2, 2],
            singletons: 40,
            determiners: 4,
            min_units: 2,
            max_units: 4,
            collocation_rate: 0.4,
            determiner_rate: 0.35,
        }
    }
}

impl CollocationConfig {
    pub fn collocations(&self) -> usize {
        self.code_radix.iter().product()
    }

    /// Target words for collocation `c`.
    pub fn code(&self, c: usize) -> [String; 4] {
        let mut rest = c;
        let mut digit = |i: usize| {
            let d = rest % self.code_radix[i];
            rest /= self.code_radix[i];
            d
        };
        [
            format!("k{}", digit(0)),
            format!("l{}", digit(1)),
            format!("m{}", digit(2)),
            format!("n{}", digit(3)),
        ]
    }
}

/// Sentence generator for the collocation language.
pub fn collocation_sentence(config: &CollocationConfig, rng: &mut impl Rng) -> SyntheticSentence {
    let mut s = SyntheticSentence {
        source: Vec::new(),
        target: Vec::new(),
        pos: Vec::new(),
        alignment: Vec::new(),
        depth: Vec::new(),
    };
    let push = |s: &mut SyntheticSentence, word: String, tag: &str, depth: u32, outputs: Vec<String>| {
        let m = s.source.len();
        s.source.push(word);
        s.pos.push(tag.to_string());
        s.depth.push(depth);
        for o in outputs {
            s.alignment.push((m, s.target.len()));
            s.target.push(o);
        }
    };
    let units = rng.gen_range(config.min_units..=config.max_units);
    for _ in 0..units {
        if config.determiners > 0 && rng.gen_bool(config.determiner_rate) {
            let d = rng.gen_range(0..config.determiners);
            push(&mut s, format!("d{d}"), "DET", rng.gen_range(2..=3), Vec::new());
        }
        if config.collocations() > 0 && rng.gen_bool(config.collocation_rate) {
            let c = rng.gen_range(0..config.collocations());
            let [k, l, m, n] = config.code(c);
            push(&mut s, format!("ca{c}"), "ADJ", 2, vec![k, l]);
            push(&mut s, format!("cb{c}"), "NOUN", 1, vec![m, n]);
        } else {
            let w = rng.gen_range(0..config.singletons);
            let tag = if w % 2 == 0 { "NOUN" } else { "VERB" };
            push(&mut s, format!("s{w}"), tag, rng.gen_range(1..=2), vec![format!("t{w}")]);
        }
    }
    push(&mut s, ".".to_string(), "PUNCT", 1, vec![".".to_string()]);
    s.alignment.sort_unstable();
    s
}

pub fn collocation_language(
    config: &CollocationConfig,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> SyntheticSplit {
    let mut train_rng = substream(seed, "colloc-train", &[]);
    let mut test_rng = substream(seed, "colloc-test", &[]);
    SyntheticSplit {
        train: (0..n_train)
            .map(|_| collocation_sentence(config, &mut train_rng))
            .collect(),
        test: (0..n_test)
            .map(|_| collocation_sentence(config, &mut test_rng))
            .collect(),
    }
}

/// Shuffles `items` with a labelled substream; used for chance-level baselines.
pub fn shuffled<T: Clone>(items: &[T], seed: u64, label: &str) -> Vec<T> {
    let mut out = items.to_vec();
    out.shuffle(&mut substream(seed, label, &[]));
    out
}
