use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::transformer::{ModelConfig, ToyModel, SRC_EMB};
use super::TranslationModel;
use crate::autodiff::Graph;
use crate::data::{SentencePair, BOS, EOS};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub embed_dim: usize,
    pub ffn_dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Probability of zeroing each source embedding row during training.
    pub word_dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 32,
            ffn_dim: 64,
            optimizer: Optimizer::Adam,
            steps: 2000,
            batch_size: 8,
            learning_rate: 0.003,
            clip_norm: 5.0,
            word_dropout: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: ToyModel,
    /// Mean batch loss for each step.
    pub losses: Vec<f64>,
}

/// Trains a [`ToyModel`] on mini-batches with global-norm gradient clipping.
///
/// Deterministic given `config.seed` and the corpus order.
pub fn train(pairs: &[SentencePair], vocab_size: usize, config: &TrainConfig) -> Result<TrainReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    if let Some(p) = pairs
        .iter()
        .find(|p| p.source.iter().chain(&p.target).any(|&t| t >= vocab_size))
    {
        return Err(Error::InvalidInput(format!(
            "token index outside vocabulary of {vocab_size} in pair {:?}",
            p.source_surface
        )));
    }
    let mut model = ToyModel::new(ModelConfig {
        vocab_size,
        embed_dim: config.embed_dim,
        ffn_dim: config.ffn_dim,
        seed: config.seed,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_7a11);
    let batch = config.batch_size.max(1);
    let mut losses = Vec::with_capacity(config.steps);
    let mut adam = Adam::new(model.params());

    for step in 0..config.steps {
        let mut grads: Vec<Matrix> = model
            .params()
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        let mut loss_sum = 0.0;
        for _ in 0..batch {
            let pair = &pairs[rng.gen_range(0..pairs.len())];
            let keep: Vec<bool> = pair
                .source
                .iter()
                .map(|_| config.word_dropout <= 0.0 || rng.gen::<f64>() >= config.word_dropout)
                .collect();
            let loss = accumulate_pair(&model, pair, &keep, &mut grads);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step, loss });
            }
            loss_sum += loss;
        }
        let scale = 1.0 / batch as f64;
        let norm = grads.iter().map(Matrix::frobenius_sq).sum::<f64>().sqrt() * scale;
        let clip = if norm > config.clip_norm {
            config.clip_norm / norm
        } else {
            1.0
        };
        let grad_scale = scale * clip;
        match config.optimizer {
            Optimizer::Sgd => {
                for (p, g) in model.params_mut().iter_mut().zip(&grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= config.learning_rate * grad_scale * d;
                    }
                }
            }
            Optimizer::Adam => adam.step(model.params_mut(), &grads, grad_scale, config.learning_rate),
        }
        losses.push(loss_sum / batch as f64);
    }
    Ok(TrainReport { model, losses })
}

struct Adam {
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[Matrix]) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Adam {
            first: zeros(),
            second: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], grad_scale: f64, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((w, &d), (mi, vi)) in it {
                let d = d * grad_scale;
                *mi = Self::BETA1 * *mi + (1.0 - Self::BETA1) * d;
                *vi = Self::BETA2 * *vi + (1.0 - Self::BETA2) * d * d;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Adds this pair's loss gradient into `grads`; returns the loss.
fn accumulate_pair(model: &ToyModel, pair: &SentencePair, keep: &[bool], grads: &mut [Matrix]) -> f64 {
    let mut g = Graph::new();
    let p = model.load_params(&mut g, true);
    let mut x = g.gather(p[SRC_EMB], &pair.source);
    if keep.iter().any(|k| !k) {
        let d = model.config.embed_dim;
        let mask = Matrix::from_fn(pair.source.len(), d, |m, _| if keep[m] { 1.0 } else { 0.0 });
        let mask = g.constant(mask);
        x = g.mul(x, mask);
    }
    let memory = model.encoder(&mut g, &p, x);
    let mut dec_in = Vec::with_capacity(pair.target.len() + 1);
    dec_in.push(BOS);
    dec_in.extend_from_slice(&pair.target);
    let mut gold = pair.target.clone();
    gold.push(EOS);
    let fwd = model.decoder(&mut g, &p, memory, &dec_in, false);
    let loss = g.cross_entropy(fwd.logits, &gold);
    let value = g.value(loss).get(0, 0);
    let mut gr = g.backward(loss);
    for (acc, &var) in grads.iter_mut().zip(&p) {
        if let Some(d) = gr.take(var) {
            acc.add_assign(&d);
        }
    }
    value
}

/// Mean per-token negative log-likelihood of `target + EOS` under teacher forcing.
pub fn held_out_nll<M: TranslationModel + ?Sized>(model: &M, pairs: &[SentencePair]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for pair in pairs {
        let mut gold = pair.target.clone();
        gold.push(EOS);
        let probs = model.target_probs(&model.embed(&pair.source), &gold)?;
        total -= probs.iter().map(|p| p.ln()).sum::<f64>();
        count += probs.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Fraction of `target + EOS` tokens that are the teacher-forced argmax.
pub fn token_accuracy<M: TranslationModel + ?Sized>(model: &M, pairs: &[SentencePair]) -> Result<f64> {
    let mut correct = 0usize;
    let mut count = 0usize;
    for pair in pairs {
        let embedded = model.embed(&pair.source);
        let memory = model.encode(&embedded)?;
        let mut prefix = vec![BOS];
        for &gold in pair.target.iter().chain(std::iter::once(&EOS)) {
            let dist = model.next_distribution(&memory, &prefix)?;
            let best = dist
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &p)| if p > b.1 { (i, p) } else { b })
                .0;
            correct += usize::from(best == gold);
            count += 1;
            prefix.push(gold);
        }
    }
    Ok(correct as f64 / count.max(1) as f64)
}
