//! Integrated-gradients contribution matrices and word importance.
//!
//! For source word `m` and output word `n`, the contribution is the path
//! integral of `∂P(y_n | y_<n, x)/∂x_m` along the straight line from the
//! all-zero embedding baseline to `x`, dotted with `x_m`. The integral is
//! approximated from `S + 1` uniformly spaced path points `k/S`,
//! `k = 0..=S`.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_partition, SentencePair};
use crate::error::{Error, Result};
use crate::seqmodel::{EmbeddedInput, TranslationModel};
use crate::tensor::{dot, softmax, Matrix};

pub const DEFAULT_STEPS: usize = 300;

/// How the `S + 1` path gradients are weighted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Endpoints weighted `1/(2S)`, interior points `1/S`. Exact for models
    /// that are linear in the embeddings.
    #[default]
    Trapezoid,
    /// Every point weighted `1/S`. Over-counts one endpoint, so it converges
    /// to the integral only as `S → ∞`.
    PrintedSum,
}

impl Quadrature {
    fn weight(self, k: usize, steps: usize) -> f64 {
        let s = steps as f64;
        match self {
            Quadrature::Trapezoid if k == 0 || k == steps => 0.5 / s,
            _ => 1.0 / s,
        }
    }
}

/// Signed `M×N` attributions of source words to output words.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMatrix {
    pub values: Matrix,
    pub steps_used: usize,
}

impl ContributionMatrix {
    pub fn source_len(&self) -> usize {
        self.values.rows()
    }

    pub fn target_len(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values.get(m, n)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.source_len())
            .map(|m| self.values.row(m).iter().sum())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.target_len())
            .map(|n| (0..self.source_len()).map(|m| self.values.get(m, n)).sum())
            .collect()
    }

    /// CSV: header row of output tokens, first column input tokens.
    pub fn to_csv(&self, input_tokens: &[String], output_tokens: &[String]) -> Result<String> {
        if input_tokens.len() != self.source_len() || output_tokens.len() != self.target_len() {
            return Err(Error::InvalidInput(format!(
                "labels {}x{} do not match matrix {}x{}",
                input_tokens.len(),
                output_tokens.len(),
                self.source_len(),
                self.target_len()
            )));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidInput(e.to_string());
        let mut header = vec![String::new()];
        header.extend(output_tokens.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (m, tok) in input_tokens.iter().enumerate() {
            let mut rec = vec![tok.clone()];
            rec.extend(self.values.row(m).iter().map(|v| format!("{v:+.10e}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Contribution matrix plus the endpoint probabilities it should explain.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub matrix: ContributionMatrix,
    /// `F(x)_n`
    pub output_probs: Vec<f64>,
    /// `F(x')_n` at the zero baseline.
    pub baseline_probs: Vec<f64>,
}

impl Attribution {
    /// `|Σ_m IG(m, n) − (F(x)_n − F(x')_n)|` for every output position.
    pub fn completeness_residuals(&self) -> Vec<f64> {
        self.matrix
            .column_sums()
            .iter()
            .zip(self.output_probs.iter().zip(&self.baseline_probs))
            .map(|(s, (f, b))| (s - (f - b)).abs())
            .collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.completeness_residuals()
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Integrated gradients of every `P(y_n | y_<n, x)` with respect to the
/// source embedding rows, using the trapezoid rule over `steps + 1` points.
pub fn integrated_gradients<M: TranslationModel + ?Sized>(
    model: &M,
    embedded: &EmbeddedInput,
    target: &[usize],
    steps: usize,
) -> Result<Attribution> {
    integrated_gradients_with(model, embedded, target, steps, Quadrature::Trapezoid)
}

pub fn integrated_gradients_with<M: TranslationModel + ?Sized>(
    model: &M,
    embedded: &EmbeddedInput,
    target: &[usize],
    steps: usize,
    quadrature: Quadrature,
) -> Result<Attribution> {
    if steps == 0 {
        return Err(Error::InvalidInput("integrated gradients needs at least one step".into()));
    }
    let (m_len, dim, n_len) = (embedded.len(), embedded.dim(), target.len());

    // Path points are independent; collect in k order and reduce serially so
    // the sum does not depend on scheduling.
    let points: Vec<(Vec<f64>, Vec<Matrix>)> = (0..=steps)
        .into_par_iter()
        .map(|k| {
            let alpha = k as f64 / steps as f64;
            let (probs, grads) = model.target_gradients(&embedded.scaled(alpha), target)?;
            if let Some(n) = grads.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { k, n });
            }
            Ok((probs, grads))
        })
        .collect::<Result<_>>()?;

    let mut summed: Vec<Matrix> = (0..n_len).map(|_| Matrix::zeros(m_len, dim)).collect();
    for (k, (_, grads)) in points.iter().enumerate() {
        let w = quadrature.weight(k, steps);
        for (acc, g) in summed.iter_mut().zip(grads) {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += w * v;
            }
        }
    }
    let mut values = Matrix::zeros(m_len, n_len);
    for (n, g) in summed.iter().enumerate() {
        for m in 0..m_len {
            values.set(m, n, dot(embedded.vectors.row(m), g.row(m)));
        }
    }
    Ok(Attribution {
        matrix: ContributionMatrix {
            values,
            steps_used: steps,
        },
        output_probs: points[steps].0.clone(),
        baseline_probs: points[0].0.clone(),
    })
}

/// Integrated gradients for a pair whose target is the model's own hypothesis.
pub fn attribute_pair<M: TranslationModel + ?Sized>(
    model: &M,
    pair: &SentencePair,
    steps: usize,
) -> Result<Attribution> {
    integrated_gradients(model, &model.embed(&pair.source), &pair.target, steps)
}

/// Per-position importance, optionally normalised to a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl ImportanceVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sums each source row over all output words, then softmaxes the sums.
pub fn word_importance(cm: &ContributionMatrix) -> ImportanceVector {
    ImportanceVector {
        values: softmax(&cm.row_sums()),
        normalized: true,
    }
}

/// Adds subword importances into their surface words and renormalises.
pub fn merge_to_words(iv: &ImportanceVector, spans: &[Range<usize>]) -> Result<ImportanceVector> {
    check_partition(spans, iv.len())?;
    let merged: Vec<f64> = spans
        .iter()
        .map(|s| iv.values[s.clone()].iter().sum())
        .collect();
    let total: f64 = merged.iter().sum();
    let values = if total > 0.0 {
        merged.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / merged.len() as f64; merged.len()]
    };
    Ok(ImportanceVector {
        values,
        normalized: true,
    })
}

/// Completeness residual (max over output positions) for each step count.
pub fn convergence_probe<M: TranslationModel + ?Sized>(
    model: &M,
    pair: &SentencePair,
    schedule: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("step schedule must be strictly increasing".into()));
    }
    schedule
        .iter()
        .map(|&s| Ok((s, attribute_pair(model, pair, s)?.max_residual())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::LinearModel;

    fn cm(rows: &[Vec<f64>]) -> ContributionMatrix {
        ContributionMatrix {
            values: Matrix::from_rows(rows),
            steps_used: 1,
        }
    }

    #[test]
    fn equal_row_sums_give_uniform_importance() {
        let iv = word_importance(&cm(&[vec![1.0, 1.0], vec![1.0, 1.0]]));
        assert_eq!(iv.values, vec![0.5, 0.5]);
        assert!(iv.normalized);
    }

    #[test]
    fn hand_computed_softmax() {
        let iv = word_importance(&cm(&[vec![0.0], vec![3f64.ln()]]));
        assert!((iv.values[0] - 0.25).abs() < 1e-12);
        assert!((iv.values[1] - 0.75).abs() < 1e-12);
        assert_eq!(word_importance(&cm(&[vec![-4.0, 2.5]])).values, vec![1.0]);
    }

    #[test]
    fn merging_spans() {
        let iv = ImportanceVector {
            values: vec![0.2, 0.3, 0.5],
            normalized: true,
        };
        assert_eq!(merge_to_words(&iv, &[0..1, 1..2, 2..3]).unwrap(), iv);
        let merged = merge_to_words(&iv, &[0..2, 2..3]).unwrap();
        assert!((merged.values[0] - 0.5).abs() < 1e-12 && (merged.values[1] - 0.5).abs() < 1e-12);
        assert_eq!(merge_to_words(&iv, &[0..3]).unwrap().values, vec![1.0]);
        assert!(merge_to_words(&iv, &[0..1, 2..3]).is_err());
    }

    #[test]
    fn csv_export_keeps_sign_and_precision() {
        let c = cm(&[vec![-0.123456789012, 2.0]]);
        let text = c
            .to_csv(&["a,b".to_string()], &["x".to_string(), "y".to_string()])
            .unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(",x,y"));
        assert_eq!(lines.next(), Some("\"a,b\",-1.2345678901e-1,+2.0000000000e0"));
    }

    #[test]
    fn linear_model_is_exact_for_any_step_count() {
        let model = LinearModel::new(12, 4, 9);
        let source = [5, 7, 4, 9];
        let target = [6, 8, 10];
        let x = model.embed(&source);
        let one = integrated_gradients(&model, &x, &target, 1).unwrap();
        let many = integrated_gradients(&model, &x, &target, 300).unwrap();
        for m in 0..source.len() {
            for n in 0..target.len() {
                let g = model.grad_input(&x, &target, n).unwrap();
                let expected = dot(g.row(m), x.vectors.row(m));
                assert!((one.matrix.get(m, n) - expected).abs() < 1e-12);
                assert!((many.matrix.get(m, n) - expected).abs() < 1e-12);
            }
        }
        assert!(many.max_residual() < 1e-12);
    }

    #[test]
    fn printed_sum_overcounts_on_linear_models() {
        let model = LinearModel::new(12, 4, 3);
        let x = model.embed(&[4, 5]);
        let t = [6];
        let exact = integrated_gradients(&model, &x, &t, 1).unwrap();
        let printed = integrated_gradients_with(&model, &x, &t, 1, Quadrature::PrintedSum).unwrap();
        for m in 0..2 {
            assert!((printed.matrix.get(m, 0) - 2.0 * exact.matrix.get(m, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_steps_is_rejected() {
        let model = LinearModel::new(8, 2, 1);
        assert!(integrated_gradients(&model, &model.embed(&[4]), &[5], 0).is_err());
    }

    #[test]
    fn probe_schedule_must_increase() {
        let model = LinearModel::new(8, 2, 1);
        let pair = SentencePair {
            source: vec![4, 5],
            target: vec![6],
            source_surface: vec!["a".into(), "b".into()],
            subword_spans: vec![0..1, 1..2],
        };
        assert!(convergence_probe(&model, &pair, &[10, 10]).is_err());
        let probe = convergence_probe(&model, &pair, &[1]).unwrap();
        assert_eq!(probe.len(), 1);
        assert!(probe[0].1 < 1e-12);
    }
}
