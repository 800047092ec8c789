//! Under-translation detection: the least important words of each sentence
//! are predicted to be the ones the model dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bottom `threshold_pct` percent of words by importance, at least one,
/// rounded up. Ties go to the later position.
pub fn least_important(importance: &[f64], threshold_pct: f64) -> Vec<usize> {
    let m = importance.len();
    if m == 0 {
        return Vec::new();
    }
    // Guard the ceiling against 15% of 20 evaluating to 3.0000000000000004.
    let want = ((threshold_pct * m as f64) / 100.0 - 1e-9).ceil().max(1.0) as usize;
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]).then(b.cmp(&a)));
    idx.truncate(want.min(m));
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub threshold_pct: f64,
    pub predicted: usize,
    pub gold: usize,
    pub hits: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Corpus-level F1 of [`least_important`] predictions against gold flags.
pub fn detect_undertranslation(
    importances: &[Vec<f64>],
    gold: &[Vec<bool>],
    threshold_pct: f64,
) -> Result<F1Report> {
    if gold.is_empty() {
        return Err(Error::InvalidInput("no under-translation annotations".into()));
    }
    if importances.len() != gold.len() {
        return Err(Error::InvalidInput(format!(
            "{} importance vectors but {} gold sentences",
            importances.len(),
            gold.len()
        )));
    }
    let (mut predicted, mut gold_n, mut hits) = (0, 0, 0);
    for (i, (imp, flags)) in importances.iter().zip(gold).enumerate() {
        if imp.len() != flags.len() {
            return Err(Error::InvalidInput(format!("{} words but {} gold flags", imp.len(), flags.len())).in_sentence(i));
        }
        let pred = least_important(imp, threshold_pct);
        predicted += pred.len();
        gold_n += flags.iter().filter(|&&f| f).count();
        hits += pred.iter().filter(|&&w| flags[w]).count();
    }
    if gold_n == 0 {
        log::warn!("no word is flagged as under-translated; F1 is 0");
    }
    let precision = if predicted > 0 { hits as f64 / predicted as f64 } else { 0.0 };
    let recall = if gold_n > 0 { hits as f64 / gold_n as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(F1Report {
        threshold_pct,
        predicted,
        gold: gold_n,
        hits,
        precision,
        recall,
        f1,
    })
}

/// Gold flags from sentence-id → position lists, for sentences of the given lengths.
pub fn gold_flags(
    positions: &std::collections::BTreeMap<usize, Vec<usize>>,
    lengths: &[usize],
) -> Result<Vec<Vec<bool>>> {
    let mut flags: Vec<Vec<bool>> = lengths.iter().map(|&m| vec![false; m]).collect();
    for (&id, words) in positions {
        let row = flags
            .get_mut(id)
            .ok_or_else(|| Error::InvalidInput(format!("gold sentence id {id} beyond {} sentences", lengths.len())))?;
        for &w in words {
            let len = row.len();
            *row.get_mut(w).ok_or_else(|| {
                Error::InvalidInput(format!("gold position {w} beyond {len} words")).in_sentence(id)
            })? = true;
        }
    }
    Ok(flags)
}
