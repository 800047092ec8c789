//! Small analytic models for exercising the model-facing machinery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_dim, check_prefix, EmbeddedInput, TranslationModel};
use crate::autodiff::Graph;
use crate::error::Result;
use crate::tensor::{softmax, Matrix};

/// Emits the same distribution at every step regardless of input.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    pub distribution: Vec<f64>,
    pub embed_dim: usize,
}

impl ConstantModel {
    /// Always predicts `token` with probability one.
    pub fn always(token: usize, vocab_size: usize, embed_dim: usize) -> Self {
        let mut distribution = vec![0.0; vocab_size];
        distribution[token] = 1.0;
        ConstantModel {
            distribution,
            embed_dim,
        }
    }
}

impl TranslationModel for ConstantModel {
    fn vocab_size(&self) -> usize {
        self.distribution.len()
    }

    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn embed(&self, source: &[usize]) -> EmbeddedInput {
        EmbeddedInput::new(Matrix::from_fn(source.len(), self.embed_dim, |m, j| {
            (source[m] * 31 + j) as f64 * 0.01
        }))
    }

    fn encode(&self, embedded: &EmbeddedInput) -> Result<Matrix> {
        check_dim(embedded, self.embed_dim)?;
        Ok(embedded.vectors.clone())
    }

    fn next_distribution(&self, _memory: &Matrix, prefix: &[usize]) -> Result<Vec<f64>> {
        check_prefix(prefix)?;
        Ok(self.distribution.clone())
    }

    fn target_probs(&self, _embedded: &EmbeddedInput, target: &[usize]) -> Result<Vec<f64>> {
        Ok(target.iter().map(|&t| self.distribution[t]).collect())
    }

    fn target_gradients(
        &self,
        embedded: &EmbeddedInput,
        target: &[usize],
    ) -> Result<(Vec<f64>, Vec<Matrix>)> {
        let probs = self.target_probs(embedded, target)?;
        let grads = target
            .iter()
            .map(|_| Matrix::zeros(embedded.len(), self.embed_dim))
            .collect();
        Ok((probs, grads))
    }
}

/// Position-insensitive model: logits depend on the *sum* of the source
/// embedding rows and on the previous target token only. Deleting a source
/// word and zeroing its row are therefore indistinguishable to it.
#[derive(Debug, Clone)]
pub struct BagOfEmbeddingsModel {
    pub embeddings: Matrix,
    pub source_weights: Matrix,
    pub transition: Matrix,
}

impl BagOfEmbeddingsModel {
    pub fn new(vocab_size: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BagOfEmbeddingsModel {
            embeddings: Matrix::from_fn(vocab_size, embed_dim, |_, _| rng.gen_range(-1.0..1.0)),
            source_weights: Matrix::from_fn(embed_dim, vocab_size, |_, _| rng.gen_range(-1.0..1.0)),
            transition: Matrix::from_fn(vocab_size, vocab_size, |_, _| rng.gen_range(-2.0..2.0)),
        }
    }

    fn logits(&self, g: &mut Graph, x: crate::autodiff::Var, prev: &[usize]) -> crate::autodiff::Var {
        let m = g.value(x).rows();
        let ones = g.constant(Matrix::filled(prev.len(), m, 1.0));
        let bag = g.matmul(ones, x);
        let w = g.constant(self.source_weights.clone());
        let from_source = g.matmul(bag, w);
        let t = g.constant(self.transition.clone());
        let from_prev = g.gather(t, prev);
        g.add(from_source, from_prev)
    }
}

impl TranslationModel for BagOfEmbeddingsModel {
    fn vocab_size(&self) -> usize {
        self.transition.rows()
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
        Ok(if embedded.is_empty() {
            Matrix::zeros(0, self.embed_dim())
        } else {
            embedded.vectors.clone()
        })
    }

    fn next_distribution(&self, memory: &Matrix, prefix: &[usize]) -> Result<Vec<f64>> {
        check_prefix(prefix)?;
        let mut g = Graph::new();
        let x = g.constant(memory.clone());
        let l = self.logits(&mut g, x, &prefix[prefix.len() - 1..]);
        Ok(softmax(g.value(l).row(0)))
    }

    fn target_probs(&self, embedded: &EmbeddedInput, target: &[usize]) -> Result<Vec<f64>> {
        Ok(self.target_gradients(embedded, target)?.0)
    }

    fn target_gradients(
        &self,
        embedded: &EmbeddedInput,
        target: &[usize],
    ) -> Result<(Vec<f64>, Vec<Matrix>)> {
        let memory = self.encode(embedded)?;
        let mut prev = vec![crate::data::BOS];
        prev.extend_from_slice(&target[..target.len().saturating_sub(1)]);
        let mut g = Graph::new();
        let x = g.variable(memory);
        let l = self.logits(&mut g, x, &prev);
        let mut probs = Vec::new();
        let mut grads = Vec::new();
        for (i, &t) in target.iter().enumerate() {
            let p = g.softmax_pick(l, i, t);
            probs.push(g.value(p).get(0, 0));
            grads.push(g.backward(p).take(x).expect("input requires grad"));
        }
        Ok((probs, grads))
    }
}
