//! Corpus BLEU (single reference, orders 1..=4, brevity penalty, no smoothing)
//! plus an add-one smoothed sentence-level variant.
//!
//! Scores are computed on whatever token stream is passed in: no
//! lowercasing and no re-tokenization.

use std::collections::HashMap;
use std::hash::Hash;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for BLEU. Accumulation is a commutative monoid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts<T: Hash + Eq>(tokens: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn from_sentence<T: Hash + Eq>(hypothesis: &[T], reference: &[T]) -> Self {
        let mut s = BleuStats {
            hyp_len: hypothesis.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let hyp = ngram_counts(hypothesis, n);
            let refs = ngram_counts(reference, n);
            s.totals[n - 1] = hypothesis.len().saturating_sub(n - 1) as u64;
            s.matches[n - 1] = hyp
                .iter()
                .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    /// Unsmoothed BLEU in `[0, 1]`; zero if any order has no matches.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.iter().any(|&m| m == 0) {
            return 0.0;
        }
        let log_p: f64 = self
            .matches
            .iter()
            .zip(&self.totals)
            .map(|(&m, &t)| (m as f64 / t as f64).ln())
            .sum::<f64>()
            / MAX_ORDER as f64;
        self.brevity_penalty() * log_p.exp()
    }

    /// BLEU with add-one smoothing on orders 2 and above.
    pub fn smoothed_score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let mut log_p = (self.matches[0] as f64 / self.totals[0] as f64).ln();
        for n in 1..MAX_ORDER {
            log_p += ((self.matches[n] + 1) as f64 / (self.totals[n] + 1) as f64).ln();
        }
        self.brevity_penalty() * (log_p / MAX_ORDER as f64).exp()
    }
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, rhs: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += rhs.matches[n];
            self.totals[n] += rhs.totals[n];
        }
        self.hyp_len += rhs.hyp_len;
        self.ref_len += rhs.ref_len;
    }
}

impl Add for BleuStats {
    type Output = BleuStats;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl std::iter::Sum for BleuStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(BleuStats::default(), Add::add)
    }
}

/// Corpus-level BLEU-4 in `[0, 1]`.
pub fn bleu<T: Hash + Eq, H: AsRef<[T]>, R: AsRef<[T]>>(hypotheses: &[H], references: &[R]) -> Result<f64> {
    corpus_stats(hypotheses, references).map(|s| s.score())
}

pub fn corpus_stats<T: Hash + Eq, H: AsRef<[T]>, R: AsRef<[T]>>(
    hypotheses: &[H],
    references: &[R],
) -> Result<BleuStats> {
    if hypotheses.len() != references.len() {
        return Err(Error::InvalidInput(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::InvalidInput("BLEU over an empty corpus".into()));
    }
    Ok(hypotheses
        .iter()
        .zip(references)
        .map(|(h, r)| BleuStats::from_sentence(h.as_ref(), r.as_ref()))
        .sum())
}

/// Add-one smoothed sentence BLEU.
pub fn sentence_bleu<T: Hash + Eq>(hypothesis: &[T], reference: &[T]) -> f64 {
    BleuStats::from_sentence(hypothesis, reference).smoothed_score()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_scores_one() {
        let h = [toks("the cat sat on the mat")];
        assert!((bleu(&h, &h).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_worked_example() {
        let b = bleu(&[toks("a b c d")], &[toks("a b c d e")]).unwrap();
        assert!((b - (1.0f64 - 5.0 / 4.0).exp()).abs() < 1e-12);
        assert!((b - 0.7788).abs() < 1e-4);
    }

    #[test]
    fn no_four_gram_overlap_scores_zero() {
        assert_eq!(bleu(&[toks("a b c x d e f")], &[toks("a b c y d e f")]).unwrap(), 0.0);
        assert_eq!(bleu(&[toks("a b")], &[toks("a b")]).unwrap(), 0.0);
    }

    #[test]
    fn clipped_counts() {
        let s = BleuStats::from_sentence(&toks("the the the"), &toks("the cat"));
        assert_eq!(s.matches[0], 1);
        assert_eq!(s.totals[0], 3);
    }

    #[test]
    fn errors_on_bad_corpora() {
        let empty: [Vec<&str>; 0] = [];
        assert!(bleu(&empty, &empty).is_err());
        assert!(bleu(&[toks("a")], &[toks("a"), toks("b")]).is_err());
    }

    #[test]
    fn smoothed_sentence_bleu_is_positive_without_high_order_matches() {
        let s = sentence_bleu(&toks("a b x d"), &toks("a b c d"));
        assert!(s > 0.0 && s < 1.0);
        assert_eq!(sentence_bleu::<&str>(&[], &toks("a")), 0.0);
    }
}
