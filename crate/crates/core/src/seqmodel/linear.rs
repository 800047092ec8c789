use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, check_prefix, EmbeddedInput, TranslationModel};
use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix};

/// A model whose output probabilities are affine in the source embeddings:
///
/// `P(v | y_<t, x) = base[v] + coeff[v] · Σ_m w_{m mod R} · x_m / (1 + |t − m|)`
///
/// `coeff` sums to zero, so every output sums to one. Entries stay
/// non-negative as long as `|coeff[v] · score| ≤ base[v]`, which holds for
/// embeddings of the magnitude the constructor produces. Integrated
/// gradients are exact on it for every step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub embeddings: Matrix,
    pub position_weights: Matrix,
    pub base: Vec<f64>,
    pub coeff: Vec<f64>,
}

impl LinearModel {
    pub fn new(vocab_size: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embeddings = Matrix::from_fn(vocab_size, embed_dim, |_, _| rng.gen_range(-1.0..1.0));
        let position_weights =
            Matrix::from_fn(8, embed_dim, |_, _| rng.gen_range(-1.0..1.0) / embed_dim as f64);
        let base = vec![1.0 / vocab_size as f64; vocab_size];
        let mut coeff: Vec<f64> = (0..vocab_size).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = coeff.iter().sum::<f64>() / vocab_size as f64;
        let scale = 0.02 / vocab_size as f64;
        for c in &mut coeff {
            *c = (*c - mean) * scale;
        }
        LinearModel {
            embeddings,
            position_weights,
            base,
            coeff,
        }
    }

    fn weight_row(&self, m: usize) -> &[f64] {
        self.position_weights.row(m % self.position_weights.rows())
    }

    fn decay(t: usize, m: usize) -> f64 {
        1.0 / (1.0 + t.abs_diff(m) as f64)
    }

    fn score(&self, x: &Matrix, t: usize) -> f64 {
        (0..x.rows())
            .map(|m| Self::decay(t, m) * dot(self.weight_row(m), x.row(m)))
            .sum()
    }

    fn distribution(&self, x: &Matrix, t: usize) -> Vec<f64> {
        let s = self.score(x, t);
        self.base
            .iter()
            .zip(&self.coeff)
            .map(|(b, c)| b + c * s)
            .collect()
    }
}

impl TranslationModel for LinearModel {
    fn vocab_size(&self) -> usize {
        self.base.len()
    }

    fn embed_dim(&self) -> usize {
        self.embeddings.cols()
    }

    fn embed(&self, source: &[usize]) -> EmbeddedInput {
        let mut m = Matrix::zeros(source.len(), self.embed_dim());
        for (r, &t) in source.iter().enumerate() {
            m.row_mut(r).copy_from_slice(self.embeddings.row(t));
        }
        EmbeddedInput::new(m)
    }

    fn encode(&self, embedded: &EmbeddedInput) -> Result<Matrix> {
        check_dim(embedded, self.embed_dim())?;
        Ok(embedded.vectors.clone())
    }

    fn next_distribution(&self, memory: &Matrix, prefix: &[usize]) -> Result<Vec<f64>> {
        check_prefix(prefix)?;
        Ok(self.distribution(memory, prefix.len() - 1))
    }

    fn target_probs(&self, embedded: &EmbeddedInput, target: &[usize]) -> Result<Vec<f64>> {
        check_dim(embedded, self.embed_dim())?;
        target
            .iter()
            .enumerate()
            .map(|(t, &y)| {
                if y >= self.vocab_size() {
                    return Err(Error::InvalidInput(format!("token {y} outside vocabulary")));
                }
                Ok(self.base[y] + self.coeff[y] * self.score(&embedded.vectors, t))
            })
            .collect()
    }

    fn target_gradients(
        &self,
        embedded: &EmbeddedInput,
        target: &[usize],
    ) -> Result<(Vec<f64>, Vec<Matrix>)> {
        let probs = self.target_probs(embedded, target)?;
        let grads = target
            .iter()
            .enumerate()
            .map(|(t, &y)| {
                Matrix::from_fn(embedded.len(), self.embed_dim(), |m, j| {
                    self.coeff[y] * Self::decay(t, m) * self.weight_row(m)[j]
                })
            })
            .collect();
        Ok((probs, grads))
    }
}
