//! Micro encoder–decoder translation models.
//!
//! Everything downstream (attribution, estimators, the perturbation harness)
//! talks to a model only through [`TranslationModel`]: next-token
//! distributions, teacher-forced target probabilities, their gradients with
//! respect to the source embedding rows, and encoder–decoder attention.

mod checkpoint;
mod decode;
mod linear;
pub mod stubs;
mod train;
mod transformer;

pub use checkpoint::{AnyModel, Checkpoint};
pub use decode::{decode, decode_embedded, hypothesis, sequence_log_prob, DecodeOptions};
pub use linear::LinearModel;
pub use train::{held_out_nll, token_accuracy, train, Optimizer, TrainConfig, TrainReport};
pub use transformer::{ModelConfig, ToyModel};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Source-side word embeddings fed to a model, one row per source position.
///
/// Gradients are taken with respect to these rows, never through the
/// embedding table. Rows equal to the table rows reproduce the token-index
/// forward pass exactly; zero rows implement masking and the attribution
/// baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedInput {
    pub vectors: Matrix,
}

impl EmbeddedInput {
    pub fn new(vectors: Matrix) -> Self {
        EmbeddedInput { vectors }
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        EmbeddedInput {
            vectors: Matrix::zeros(len, dim),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// `alpha · self`, the point at fraction `alpha` on the straight path
    /// from the all-zero baseline.
    pub fn scaled(&self, alpha: f64) -> Self {
        EmbeddedInput {
            vectors: self.vectors.scale(alpha),
        }
    }

    /// Copy with the given rows replaced by zeros.
    pub fn with_zero_rows(&self, rows: &[usize]) -> Self {
        let mut v = self.vectors.clone();
        for &r in rows {
            v.row_mut(r).iter_mut().for_each(|x| *x = 0.0);
        }
        EmbeddedInput { vectors: v }
    }
}

pub trait TranslationModel: Sync {
    fn vocab_size(&self) -> usize;

    fn embed_dim(&self) -> usize;

    /// Embedding-table rows for `source`.
    fn embed(&self, source: &[usize]) -> EmbeddedInput;

    /// Encoder memory for an embedded source.
    fn encode(&self, embedded: &EmbeddedInput) -> Result<Matrix>;

    /// Distribution over the token following `prefix`; `prefix[0]` is BOS.
    fn next_distribution(&self, memory: &Matrix, prefix: &[usize]) -> Result<Vec<f64>>;

    /// Teacher-forced `P(y_n | y_<n, x)` for every position of `target`.
    fn target_probs(&self, embedded: &EmbeddedInput, target: &[usize]) -> Result<Vec<f64>>;

    /// Teacher-forced probabilities together with
    /// `∂P(y_n | y_<n, x) / ∂embedded` for every `n`.
    fn target_gradients(
        &self,
        embedded: &EmbeddedInput,
        target: &[usize],
    ) -> Result<(Vec<f64>, Vec<Matrix>)>;

    /// Encoder–decoder attention, `M×N`: column `n` is the distribution over
    /// source positions used while predicting `target[n]`.
    fn attention(&self, _embedded: &EmbeddedInput, _target: &[usize]) -> Result<Matrix> {
        Err(Error::Unsupported("attention_scores"))
    }

    /// `P(· | prefix, x)` straight from an embedded source.
    fn forward(&self, embedded: &EmbeddedInput, prefix: &[usize]) -> Result<Vec<f64>> {
        let memory = self.encode(embedded)?;
        self.next_distribution(&memory, prefix)
    }

    /// `∂P(y_n | y_<n, x) / ∂embedded` for a single 0-based output position.
    fn grad_input(&self, embedded: &EmbeddedInput, target: &[usize], n: usize) -> Result<Matrix> {
        if n >= target.len() {
            return Err(Error::PositionOutOfRange {
                n,
                len: target.len(),
            });
        }
        let (_, mut grads) = self.target_gradients(embedded, target)?;
        Ok(grads.swap_remove(n))
    }
}

/// Attention scores for a token-index source; see [`TranslationModel::attention`].
pub fn attention_scores<M: TranslationModel + ?Sized>(
    model: &M,
    source: &[usize],
    target: &[usize],
) -> Result<Matrix> {
    model.attention(&model.embed(source), target)
}

pub(crate) fn check_dim(embedded: &EmbeddedInput, dim: usize) -> Result<()> {
    if embedded.dim() != dim && !embedded.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: embedded.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_prefix(prefix: &[usize]) -> Result<()> {
    if prefix.first() != Some(&crate::data::BOS) {
        return Err(Error::InvalidInput("decoder prefix must start with BOS".into()));
    }
    Ok(())
}
