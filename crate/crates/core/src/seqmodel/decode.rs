use super::{EmbeddedInput, TranslationModel};
use crate::data::{BOS, EOS};
use crate::error::Result;

use serde::{Deserialize, Serialize};

/// Beam width and length cap used wherever a hypothesis is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeOptions {
    pub beam: usize,
    pub max_len: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { beam: 4, max_len: 48 }
    }
}

/// Decoded hypothesis without its final EOS.
pub fn hypothesis<M: TranslationModel + ?Sized>(
    model: &M,
    embedded: &EmbeddedInput,
    options: &DecodeOptions,
) -> Result<Vec<usize>> {
    let mut out = decode_embedded(model, embedded, options.beam, options.max_len)?;
    if out.last() == Some(&EOS) {
        out.pop();
    }
    Ok(out)
}

/// Beam-search decode of a token-index source.
///
/// The result ends with EOS unless it reached `max_len` tokens first.
/// `beam == 1` is the greedy argmax chain (ties go to the lower token id).
pub fn decode<M: TranslationModel + ?Sized>(
    model: &M,
    source: &[usize],
    beam: usize,
    max_len: usize,
) -> Result<Vec<usize>> {
    decode_embedded(model, &model.embed(source), beam, max_len)
}

#[derive(Clone)]
struct Hyp {
    tokens: Vec<usize>,
    log_prob: f64,
}

/// Beam-search decode of an already embedded (possibly masked or empty) source.
pub fn decode_embedded<M: TranslationModel + ?Sized>(
    model: &M,
    embedded: &EmbeddedInput,
    beam: usize,
    max_len: usize,
) -> Result<Vec<usize>> {
    let beam = beam.max(1);
    let memory = model.encode(embedded)?;
    let mut alive = vec![Hyp {
        tokens: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<Hyp> = Vec::new();
    let mut prefix = Vec::with_capacity(max_len + 1);

    for _ in 0..max_len {
        let mut candidates = Vec::with_capacity(alive.len() * beam);
        for hyp in &alive {
            prefix.clear();
            prefix.push(BOS);
            prefix.extend_from_slice(&hyp.tokens);
            let dist = model.next_distribution(&memory, &prefix)?;
            for (token, p) in top_k(&dist, beam) {
                let mut tokens = hyp.tokens.clone();
                tokens.push(token);
                candidates.push(Hyp {
                    tokens,
                    log_prob: hyp.log_prob + p.ln(),
                });
            }
        }
        // Stable: equal scores keep beam order, then token order.
        candidates.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
        candidates.truncate(beam);
        alive.clear();
        for c in candidates {
            if c.tokens.last() == Some(&EOS) {
                finished.push(c);
            } else {
                alive.push(c);
            }
        }
        let best_finished = finished
            .iter()
            .map(|h| h.log_prob)
            .fold(f64::NEG_INFINITY, f64::max);
        let best_alive = alive
            .iter()
            .map(|h| h.log_prob)
            .fold(f64::NEG_INFINITY, f64::max);
        if alive.is_empty() || (!finished.is_empty() && best_finished >= best_alive) {
            break;
        }
    }

    finished.extend(alive);
    let best = finished
        .into_iter()
        .reduce(|best, h| if h.log_prob > best.log_prob { h } else { best })
        .map(|h| h.tokens)
        .unwrap_or_default();
    Ok(best)
}

/// Indices and values of the `k` largest entries, largest first, lower index on ties.
fn top_k(dist: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    if k == 1 {
        let best = idx
            .into_iter()
            .reduce(|b, i| if dist[i] > dist[b] { i } else { b })
            .unwrap_or(0);
        return vec![(best, dist[best])];
    }
    idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| (i, dist[i])).collect()
}

/// Teacher-forced log-probability of `tokens` (including any final EOS).
pub fn sequence_log_prob<M: TranslationModel + ?Sized>(
    model: &M,
    embedded: &EmbeddedInput,
    tokens: &[usize],
) -> Result<f64> {
    Ok(model
        .target_probs(embedded, tokens)?
        .iter()
        .map(|p| p.ln())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::stubs::ConstantModel;

    #[test]
    fn eos_first_model_stops_immediately() {
        let m = ConstantModel::always(EOS, 6, 3);
        assert_eq!(decode(&m, &[4, 5], 1, 10).unwrap(), vec![EOS]);
        assert_eq!(decode(&m, &[4, 5], 4, 10).unwrap(), vec![EOS]);
    }

    #[test]
    fn output_is_capped_by_max_len() {
        let m = ConstantModel::always(4, 6, 3);
        let out = decode(&m, &[4, 5], 3, 5).unwrap();
        assert_eq!(out, vec![4; 5]);
    }

    #[test]
    fn top_k_orders_by_value_then_index() {
        assert_eq!(top_k(&[0.2, 0.5, 0.2, 0.1], 3), vec![(1, 0.5), (0, 0.2), (2, 0.2)]);
        assert_eq!(top_k(&[0.4, 0.4], 1), vec![(0, 0.4)]);
    }
}
