//! Perturb the top-ranked words, re-decode, and measure corpus BLEU.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::Pos;
use crate::bleu::{bleu, corpus_stats};
use crate::data::{SentencePair, Vocab};
use crate::error::{Error, Result};
use crate::estimators::{Estimators, ImportanceEstimate, Method, SentenceInputs};
use crate::rng::{derive_seed, substream};
use crate::seqmodel::{hypothesis, DecodeOptions, EmbeddedInput, TranslationModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Deletion,
    Mask,
    #[serde(alias = "replacement")]
    Replace,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 3] = [
        PerturbationKind::Deletion,
        PerturbationKind::Mask,
        PerturbationKind::Replace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::Deletion => "deletion",
            PerturbationKind::Mask => "mask",
            PerturbationKind::Replace => "replace",
        }
    }
}

impl std::fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deletion" | "delete" => Ok(PerturbationKind::Deletion),
            "mask" => Ok(PerturbationKind::Mask),
            "replace" | "replacement" => Ok(PerturbationKind::Replace),
            _ => Err(Error::InvalidInput(format!("unknown perturbation {s:?}"))),
        }
    }
}

/// A perturbed source: token ids plus positions whose embeddings are zeroed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbedSource {
    pub tokens: Vec<usize>,
    pub masked: Vec<usize>,
    /// Words selected for replacement that had no same-POS substitute and
    /// were masked instead.
    pub fallbacks: usize,
}

impl PerturbedSource {
    pub fn embed<M: TranslationModel + ?Sized>(&self, model: &M) -> EmbeddedInput {
        let e = model.embed(&self.tokens);
        if self.masked.is_empty() {
            e
        } else {
            e.with_zero_rows(&self.masked)
        }
    }
}

/// Same-POS substitutes, built from single-token vocabulary words.
#[derive(Debug, Clone, Default)]
pub struct ReplacementPool {
    by_pos: BTreeMap<Pos, Vec<usize>>,
}

impl ReplacementPool {
    pub fn new<'a>(tagged: impl IntoIterator<Item = (&'a str, Pos)>, vocab: &Vocab) -> Self {
        let mut by_pos: BTreeMap<Pos, Vec<usize>> = BTreeMap::new();
        for (word, pos) in tagged {
            if let Some(id) = vocab.id(word).filter(|&i| !Vocab::is_reserved(i)) {
                by_pos.entry(pos).or_default().push(id);
            }
        }
        for ids in by_pos.values_mut() {
            ids.sort_unstable();
            ids.dedup();
        }
        ReplacementPool { by_pos }
    }

    pub fn bucket(&self, pos: Pos) -> &[usize] {
        self.by_pos.get(&pos).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Applies `kind` to the words `ranking[..k]`; each word's whole subword span
/// is perturbed together.
pub fn perturb(
    pair: &SentencePair,
    ranking: &[usize],
    k: usize,
    kind: PerturbationKind,
    pos: Option<&[Pos]>,
    pool: Option<&ReplacementPool>,
    seed: u64,
) -> Result<PerturbedSource> {
    let words = pair.surface_len();
    if ranking.len() != words {
        return Err(Error::InvalidInput(format!(
            "ranking has {} entries for {words} words",
            ranking.len()
        )));
    }
    let mut selected = vec![false; words];
    for &w in &ranking[..k.min(words)] {
        selected[w] = true;
    }
    let mut out = PerturbedSource {
        tokens: Vec::with_capacity(pair.source.len()),
        masked: Vec::new(),
        fallbacks: 0,
    };
    let mut rng = substream(seed, "replacement", &[]);
    for (w, span) in pair.subword_spans.iter().enumerate() {
        let pieces = &pair.source[span.clone()];
        if !selected[w] {
            out.tokens.extend_from_slice(pieces);
            continue;
        }
        match kind {
            PerturbationKind::Deletion => {}
            PerturbationKind::Mask => {
                out.masked.extend(out.tokens.len()..out.tokens.len() + pieces.len());
                out.tokens.extend_from_slice(pieces);
            }
            PerturbationKind::Replace => {
                let tag = pos
                    .and_then(|p| p.get(w).copied())
                    .ok_or_else(|| Error::InvalidInput("replacement needs a POS tag for every word".into()))?;
                let own = (pieces.len() == 1).then(|| pieces[0]);
                let candidates: Vec<usize> = pool
                    .map(|p| p.bucket(tag))
                    .unwrap_or(&[])
                    .iter()
                    .copied()
                    .filter(|&c| Some(c) != own)
                    .collect();
                match candidates.choose(&mut rng) {
                    Some(&c) => out.tokens.push(c),
                    None => {
                        log::debug!("no {tag} replacement for {:?}; masking it", pair.source_surface.get(w));
                        out.fallbacks += 1;
                        out.masked.extend(out.tokens.len()..out.tokens.len() + pieces.len());
                        out.tokens.extend_from_slice(pieces);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// One evaluated test sentence. `pair.target` is the model's own hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct TestItem {
    pub pair: SentencePair,
    pub reference: Vec<usize>,
    pub pos: Option<Vec<Pos>>,
}

impl TestItem {
    pub fn inputs(&self) -> SentenceInputs<'_> {
        SentenceInputs {
            pos: self.pos.as_deref(),
            reference: Some(&self.reference),
        }
    }
}

/// Decodes every source and returns test items with the hypotheses as targets.
pub fn prepare_test_set<M: TranslationModel + ?Sized>(
    model: &M,
    sentences: Vec<(SentencePair, Option<Vec<Pos>>)>,
    decoding: &DecodeOptions,
) -> Result<Vec<TestItem>> {
    sentences
        .into_par_iter()
        .enumerate()
        .map(|(i, (mut pair, pos))| {
            let reference = std::mem::take(&mut pair.target);
            pair.target = hypothesis(model, &model.embed(&pair.source), decoding).map_err(|e| e.in_sentence(i))?;
            Ok(TestItem { pair, reference, pos })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub k_max: usize,
    pub estimator: Method,
    /// Repeats for stochastic estimators or replacement draws; others run once.
    pub repeats: usize,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, estimator: Method, seed: u64) -> Self {
        PerturbationSpec {
            kind,
            k_max: 5,
            estimator,
            repeats: 10,
            seed,
        }
    }

    pub fn effective_repeats(&self) -> usize {
        if self.estimator.is_stochastic() || self.kind == PerturbationKind::Replace {
            self.repeats.max(1)
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean_bleu: f64,
    pub std: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub estimator: Method,
    pub kind: PerturbationKind,
    pub baseline_bleu: f64,
    pub points: Vec<CurvePoint>,
}

impl PerturbationCurve {
    pub fn at(&self, k: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.k == k)
    }
}

/// Seed handed to estimators and perturbations for one repeat of one sentence.
pub fn sentence_seed(root: u64, repeat: usize, sentence: usize) -> u64 {
    derive_seed(root, "repeat", &[repeat as u64, sentence as u64])
}

/// Rankings for every repeat (outer) and sentence (inner).
pub fn compute_estimates<M: TranslationModel + ?Sized>(
    estimators: &Estimators<'_, M>,
    items: &[TestItem],
    method: Method,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<ImportanceEstimate>>> {
    let repeats = if method.is_stochastic() { repeats.max(1) } else { 1 };
    (0..repeats)
        .map(|r| {
            items
                .par_iter()
                .enumerate()
                .map(|(i, item)| {
                    estimators
                        .estimate(method, &item.pair, item.inputs(), sentence_seed(seed, r, i))
                        .map_err(|e| e.in_sentence(i))
                })
                .collect()
        })
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Curve from precomputed estimates. Repeat `r` uses `estimates[r % len]`.
pub fn curve_from_estimates<M: TranslationModel + ?Sized>(
    model: &M,
    items: &[TestItem],
    estimates: &[Vec<ImportanceEstimate>],
    spec: &PerturbationSpec,
    pool: Option<&ReplacementPool>,
    decoding: &DecodeOptions,
) -> Result<PerturbationCurve> {
    if items.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    if estimates.is_empty() || estimates.iter().any(|e| e.len() != items.len()) {
        return Err(Error::InvalidInput("estimates do not match the test set".into()));
    }
    let refs: Vec<&[usize]> = items.iter().map(|t| t.reference.as_slice()).collect();
    let hyps: Vec<&[usize]> = items.iter().map(|t| t.pair.target.as_slice()).collect();
    let baseline = bleu(&hyps, &refs)?;
    let repeats = spec.effective_repeats();
    let mut points = vec![CurvePoint {
        k: 0,
        mean_bleu: baseline,
        std: 0.0,
        repeats,
    }];
    let fallbacks = std::sync::atomic::AtomicUsize::new(0);
    for k in 1..=spec.k_max {
        let scores = (0..repeats)
            .map(|r| {
                let est = &estimates[r % estimates.len()];
                let outputs: Vec<Vec<usize>> = items
                    .par_iter()
                    .enumerate()
                    .map(|(i, item)| {
                        let words = item.pair.surface_len();
                        if k > words {
                            log::debug!("sentence {i}: k={k} clamped to {words}");
                        }
                        let p = perturb(
                            &item.pair,
                            &est[i].ranking,
                            k,
                            spec.kind,
                            item.pos.as_deref(),
                            pool,
                            sentence_seed(spec.seed, r, i),
                        )?;
                        fallbacks.fetch_add(p.fallbacks, std::sync::atomic::Ordering::Relaxed);
                        hypothesis(model, &p.embed(model), decoding)
                    })
                    .collect::<Vec<_>>()
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| r.map_err(|e| e.in_sentence(i)))
                    .collect::<Result<_>>()?;
                Ok(corpus_stats(&outputs, &refs)?.score())
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean_bleu, std) = mean_std(&scores);
        points.push(CurvePoint {
            k,
            mean_bleu,
            std,
            repeats,
        });
    }
    let fallbacks = fallbacks.into_inner();
    if fallbacks > 0 {
        log::warn!(
            "{} {}: {fallbacks} selected words had no same-POS replacement and were masked instead",
            spec.estimator,
            spec.kind.name()
        );
    }
    Ok(PerturbationCurve {
        estimator: spec.estimator,
        kind: spec.kind,
        baseline_bleu: baseline,
        points,
    })
}

pub fn run_curve<M: TranslationModel + ?Sized>(
    estimators: &Estimators<'_, M>,
    items: &[TestItem],
    spec: &PerturbationSpec,
    pool: Option<&ReplacementPool>,
) -> Result<PerturbationCurve> {
    let estimates = compute_estimates(estimators, items, spec.estimator, spec.repeats, spec.seed)?;
    curve_from_estimates(estimators.model, items, &estimates, spec, pool, &estimators.decoding)
}

/// `(BLEU₀ − BLEU_kmax) / BLEU₀`.
pub fn relative_decline(curve: &PerturbationCurve) -> Result<f64> {
    let first = curve
        .points
        .first()
        .ok_or_else(|| Error::InvalidInput("empty curve".into()))?;
    let last = curve.points.last().unwrap_or(first);
    if first.mean_bleu == 0.0 {
        return Err(Error::InvalidInput("relative decline from zero BLEU".into()));
    }
    Ok((first.mean_bleu - last.mean_bleu) / first.mean_bleu)
}

/// `estimator,perturbation,k,mean_bleu,std,repeats` rows.
pub fn curves_to_csv(curves: &[PerturbationCurve]) -> String {
    let mut out = String::from("estimator,perturbation,k,mean_bleu,std,repeats\n");
    for c in curves {
        for p in &c.points {
            let _ = writeln!(
                out,
                "{},{},{},{:.10},{:.10},{}",
                c.estimator, c.kind, p.k, p.mean_bleu, p.std, p.repeats
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::{ModelConfig, ToyModel};

    fn pair(words: &[&str], vocab: &mut Vocab) -> SentencePair {
        let ids: Vec<usize> = words.iter().map(|w| vocab.insert(w)).collect();
        SentencePair::unsplit(ids.clone(), ids, vocab)
    }

    #[test]
    fn k_zero_is_identity() {
        let mut v = Vocab::new();
        let p = pair(&["a", "b", "c"], &mut v);
        for kind in PerturbationKind::ALL {
            let out = perturb(&p, &[0, 1, 2], 0, kind, None, None, 0).unwrap();
            assert_eq!(out.tokens, p.source);
            assert!(out.masked.is_empty());
        }
    }

    #[test]
    fn deletion_removes_whole_spans() {
        let mut v = Vocab::new();
        let ids: Vec<usize> = ["ab@@", "c", "d", "e"].iter().map(|w| v.insert(w)).collect();
        let p = SentencePair {
            source: ids.clone(),
            target: ids.clone(),
            source_surface: vec!["abc".into(), "d".into(), "e".into()],
            subword_spans: vec![0..2, 2..3, 3..4],
        };
        let out = perturb(&p, &[0, 2, 1], 2, PerturbationKind::Deletion, None, None, 0).unwrap();
        assert_eq!(out.tokens, vec![ids[2]]);
        let all = perturb(&p, &[0, 2, 1], 3, PerturbationKind::Deletion, None, None, 0).unwrap();
        assert!(all.tokens.is_empty());
        let mask = perturb(&p, &[0, 2, 1], 1, PerturbationKind::Mask, None, None, 0).unwrap();
        assert_eq!(mask.masked, vec![0, 1]);
    }

    #[test]
    fn mask_zeroes_exactly_one_row() {
        let mut v = Vocab::new();
        let p = pair(&["a", "b", "c"], &mut v);
        let model = ToyModel::new(ModelConfig::new(v.len(), 1));
        let out = perturb(&p, &[1, 0, 2], 1, PerturbationKind::Mask, None, None, 0).unwrap();
        let clean = model.embed(&p.source).vectors;
        let masked = out.embed(&model).vectors;
        assert!(masked.is_zero_row(1));
        assert_eq!(masked.row(0), clean.row(0));
        assert_eq!(masked.row(2), clean.row(2));
    }

    #[test]
    fn replacement_draws_a_different_same_pos_word() {
        let mut v = Vocab::new();
        let p = pair(&["cat", "sat"], &mut v);
        let dog = v.insert("dog");
        let pool = ReplacementPool::new([("cat", Pos::Noun), ("dog", Pos::Noun), ("sat", Pos::Verb)], &v);
        let pos = [Pos::Noun, Pos::Verb];
        for seed in 0..20 {
            let out = perturb(&p, &[0, 1], 1, PerturbationKind::Replace, Some(&pos), Some(&pool), seed).unwrap();
            assert_eq!(out.tokens, vec![dog, p.source[1]]);
        }
        // "sat" is alone in its bucket, so it is masked instead.
        let out = perturb(&p, &[1, 0], 1, PerturbationKind::Replace, Some(&pos), Some(&pool), 0).unwrap();
        assert_eq!(out.tokens, p.source);
        assert_eq!(out.masked, vec![1]);
    }

    #[test]
    fn relative_decline_examples() {
        let curve = |a: f64, b: f64| PerturbationCurve {
            estimator: Method::Attribution,
            kind: PerturbationKind::Mask,
            baseline_bleu: a,
            points: vec![
                CurvePoint { k: 0, mean_bleu: a, std: 0.0, repeats: 1 },
                CurvePoint { k: 5, mean_bleu: b, std: 0.0, repeats: 1 },
            ],
        };
        assert_eq!(relative_decline(&curve(0.3, 0.3)).unwrap(), 0.0);
        assert!((relative_decline(&curve(20.0, 9.0)).unwrap() - 0.55).abs() < 1e-12);
        assert!(relative_decline(&curve(0.0, 0.0)).is_err());
    }

    #[test]
    fn kind_names_parse() {
        for k in PerturbationKind::ALL {
            assert_eq!(k.name().parse::<PerturbationKind>().unwrap(), k);
        }
        assert_eq!("replacement".parse::<PerturbationKind>().unwrap(), PerturbationKind::Replace);
    }
}
