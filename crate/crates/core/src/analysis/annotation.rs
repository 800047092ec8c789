//! Per-token annotations and their file formats.
//!
//! POS files hold one sentence per line as `token/TAG` items, alignments are
//! Pharaoh `i-j` pairs (0-indexed source-target), depth files hold one
//! integer per token, and under-translation gold lines are a sentence id
//! followed by 0-indexed word positions.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Prep,
    Dete,
    Punc,
    Others,
    /// Category not used by the language's tag set.
    None,
}

impl Pos {
    /// The seven table rows, in reporting order.
    pub const TABLE: [Pos; 7] = [
        Pos::Noun,
        Pos::Verb,
        Pos::Adj,
        Pos::Prep,
        Pos::Dete,
        Pos::Punc,
        Pos::Others,
    ];

    pub fn is_content(self) -> bool {
        matches!(self, Pos::Noun | Pos::Verb | Pos::Adj)
    }

    /// Maps a Universal or Penn Treebank tag onto the reporting categories.
    pub fn from_tag(tag: &str) -> Pos {
        let t = tag.to_ascii_uppercase();
        match t.as_str() {
            "NOUN" | "PROPN" | "N" => Pos::Noun,
            "VERB" | "AUX" | "V" | "MD" => Pos::Verb,
            "ADJ" | "A" => Pos::Adj,
            "ADP" | "PREP" | "IN" | "P" => Pos::Prep,
            "DET" | "DT" | "PDT" | "WDT" | "DETE" => Pos::Dete,
            "PUNCT" | "PUNC" | "." | "," | ":" | "``" | "''" | "-LRB-" | "-RRB-" => Pos::Punc,
            "NONE" => Pos::None,
            _ if t.starts_with("NN") => Pos::Noun,
            _ if t.starts_with("VB") => Pos::Verb,
            _ if t.starts_with("JJ") => Pos::Adj,
            _ => Pos::Others,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Pos::Noun => "Noun",
            Pos::Verb => "Verb",
            Pos::Adj => "Adj.",
            Pos::Prep => "Prep.",
            Pos::Dete => "Dete.",
            Pos::Punc => "Punc.",
            Pos::Others => "Others",
            Pos::None => "None",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FertilityClass {
    /// One-to-many.
    Ge2,
    /// One-to-one.
    One,
    /// Many-to-one.
    Frac,
    /// Null-aligned.
    Zero,
}

impl FertilityClass {
    pub const ALL: [FertilityClass; 4] = [
        FertilityClass::Ge2,
        FertilityClass::One,
        FertilityClass::Frac,
        FertilityClass::Zero,
    ];

    /// Class of a raw fertility. Values in (1, 2), which arise when a word
    /// also shares a target with another word, count as one-to-many.
    pub fn of(raw: f64) -> FertilityClass {
        const EPS: f64 = 1e-9;
        if raw <= EPS {
            FertilityClass::Zero
        } else if (raw - 1.0).abs() <= EPS {
            FertilityClass::One
        } else if raw < 1.0 {
            FertilityClass::Frac
        } else {
            FertilityClass::Ge2
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FertilityClass::Ge2 => "≥2",
            FertilityClass::One => "1",
            FertilityClass::Frac => "(0,1)",
            FertilityClass::Zero => "0",
        }
    }
}

impl fmt::Display for FertilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Everything known about one source word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    pub pos: Option<Pos>,
    pub fertility_raw: Option<f64>,
    pub depth: Option<u32>,
    pub under_translated: Option<bool>,
}

impl TokenAnnotation {
    pub fn fertility_class(&self) -> Option<FertilityClass> {
        self.fertility_raw.map(FertilityClass::of)
    }
}

/// Per-source fertility: each target word splits one unit of credit equally
/// among the sources linked to it.
pub fn fertility_from_alignment(links: &[(usize, usize)], m: usize, n: usize) -> Result<Vec<f64>> {
    if let Some(&(i, j)) = links.iter().find(|&&(i, j)| i >= m || j >= n) {
        return Err(Error::InvalidInput(format!(
            "alignment link {i}-{j} outside a {m}x{n} sentence pair"
        )));
    }
    let mut per_target = vec![0usize; n];
    for &(_, j) in links {
        per_target[j] += 1;
    }
    let mut fert = vec![0.0; m];
    for &(i, j) in links {
        fert[i] += 1.0 / per_target[j] as f64;
    }
    Ok(fert)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One `(surface tokens, tags)` entry per line.
pub fn parse_pos(path: &Path, text: &str) -> Result<Vec<(Vec<String>, Vec<Pos>)>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let mut words = Vec::new();
            let mut tags = Vec::new();
            for item in line.split_whitespace() {
                let (w, t) = item
                    .rsplit_once('/')
                    .filter(|(w, t)| !w.is_empty() && !t.is_empty())
                    .ok_or_else(|| Error::parse(path, i + 1, format!("expected token/TAG, found {item:?}")))?;
                words.push(w.to_string());
                tags.push(Pos::from_tag(t));
            }
            Ok((words, tags))
        })
        .collect()
}

pub fn read_pos(path: &Path) -> Result<Vec<(Vec<String>, Vec<Pos>)>> {
    parse_pos(path, &read_text(path)?)
}

/// Pharaoh `i-j` links, one sentence per line.
pub fn parse_alignment(path: &Path, text: &str) -> Result<Vec<Vec<(usize, usize)>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|item| {
                    let bad = || Error::parse(path, i + 1, format!("expected i-j, found {item:?}"));
                    let (a, b) = item.split_once('-').ok_or_else(bad)?;
                    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
                })
                .collect()
        })
        .collect()
}

pub fn read_alignment(path: &Path) -> Result<Vec<Vec<(usize, usize)>>> {
    parse_alignment(path, &read_text(path)?)
}

pub fn parse_depth(path: &Path, text: &str) -> Result<Vec<Vec<u32>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|item| {
                    u32::from_str(item)
                        .map_err(|_| Error::parse(path, i + 1, format!("expected a depth, found {item:?}")))
                })
                .collect()
        })
        .collect()
}

pub fn read_depth(path: &Path) -> Result<Vec<Vec<u32>>> {
    parse_depth(path, &read_text(path)?)
}

/// Sentence id → under-translated word positions. Blank lines are skipped.
pub fn parse_gold(path: &Path, text: &str) -> Result<BTreeMap<usize, Vec<usize>>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut items = line.split_whitespace();
        let Some(id) = items.next() else { continue };
        let parse = |s: &str, what: &str| {
            usize::from_str(s).map_err(|_| Error::parse(path, i + 1, format!("expected {what}, found {s:?}")))
        };
        let id = parse(id, "a sentence id")?;
        let entry = out.entry(id).or_default();
        for item in items {
            entry.push(parse(item, "a word position")?);
        }
        entry.sort_unstable();
        entry.dedup();
    }
    Ok(out)
}

pub fn read_gold(path: &Path) -> Result<BTreeMap<usize, Vec<usize>>> {
    parse_gold(path, &read_text(path)?)
}
