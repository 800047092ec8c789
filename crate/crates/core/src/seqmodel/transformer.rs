//! Single-block, single-head transformer encoder–decoder.
//!
//! Sinusoidal positions are added *after* the word embeddings enter, so an
//! all-zero embedded input still carries position information. There is no
//! layer normalisation; with one block per side the residual stream stays
//! well scaled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, check_prefix, EmbeddedInput, TranslationModel};
use crate::autodiff::{Graph, Var};
use crate::data::BOS;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub ffn_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, seed: u64) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: 32,
            ffn_dim: 64,
            seed,
        }
    }
}

// Parameter slots.
pub(crate) const SRC_EMB: usize = 0;
const TGT_EMB: usize = 1;
const ENC_Q: usize = 2;
const ENC_K: usize = 3;
const ENC_V: usize = 4;
const ENC_O: usize = 5;
const ENC_F1: usize = 6;
const ENC_B1: usize = 7;
const ENC_F2: usize = 8;
const ENC_B2: usize = 9;
const DEC_Q: usize = 10;
const DEC_K: usize = 11;
const DEC_V: usize = 12;
const DEC_O: usize = 13;
const X_Q: usize = 14;
const X_K: usize = 15;
const X_V: usize = 16;
const X_O: usize = 17;
const DEC_F1: usize = 18;
const DEC_B1: usize = 19;
const DEC_F2: usize = 20;
const DEC_B2: usize = 21;
const OUT_W: usize = 22;
const OUT_B: usize = 23;

pub(crate) const PARAM_NAMES: [&str; 24] = [
    "src_emb", "tgt_emb", "enc_q", "enc_k", "enc_v", "enc_o", "enc_ff1", "enc_b1", "enc_ff2",
    "enc_b2", "dec_q", "dec_k", "dec_v", "dec_o", "cross_q", "cross_k", "cross_v", "cross_o",
    "dec_ff1", "dec_b1", "dec_ff2", "dec_b2", "out_w", "out_b",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub config: ModelConfig,
    pub(crate) params: Vec<Matrix>,
}

/// Graph handles produced by one forward pass.
pub(crate) struct Forward {
    pub logits: Var,
    pub cross_attention: Var,
}

pub(crate) fn positional(len: usize, dim: usize) -> Matrix {
    Matrix::from_fn(len, dim, |pos, i| {
        let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = pos as f64 / rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-a..a))
}

impl ToyModel {
    /// Freshly initialised model.
    pub fn new(config: ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (v, d, f) = (config.vocab_size, config.embed_dim, config.ffn_dim);
        let mut params = Vec::with_capacity(PARAM_NAMES.len());
        for slot in 0..PARAM_NAMES.len() {
            let m = match slot {
                SRC_EMB | TGT_EMB => Matrix::from_fn(v, d, |_, _| rng.gen_range(-1.0..1.0)),
                ENC_F1 | DEC_F1 => xavier(&mut rng, d, f),
                ENC_F2 | DEC_F2 => xavier(&mut rng, f, d),
                ENC_B1 | DEC_B1 => Matrix::zeros(1, f),
                ENC_B2 | DEC_B2 => Matrix::zeros(1, d),
                OUT_W => xavier(&mut rng, d, v),
                OUT_B => Matrix::zeros(1, v),
                _ => xavier(&mut rng, d, d),
            };
            params.push(m);
        }
        ToyModel { config, params }
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn param_names() -> &'static [&'static str] {
        &PARAM_NAMES
    }

    pub(crate) fn from_params(config: ModelConfig, params: Vec<Matrix>) -> Result<Self> {
        let fresh = ToyModel::new(ModelConfig { seed: 0, ..config });
        if params.len() != fresh.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for (i, (a, b)) in params.iter().zip(&fresh.params).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    PARAM_NAMES[i],
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(ToyModel { config, params })
    }

    /// Puts every parameter on `g`, as variables when `trainable`.
    pub(crate) fn load_params(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    g.variable(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect()
    }

    fn attend(
        g: &mut Graph,
        p: &[Var],
        slots: [usize; 4],
        queries: Var,
        keys: Var,
        causal: bool,
        dim: usize,
    ) -> (Var, Var) {
        let q = g.matmul(queries, p[slots[0]]);
        let k = g.matmul(keys, p[slots[1]]);
        let v = g.matmul(keys, p[slots[2]]);
        let scores = g.matmul_t(q, k);
        let scores = g.scale(scores, 1.0 / (dim as f64).sqrt());
        let weights = g.softmax_rows(scores, causal);
        let ctx = g.matmul(weights, v);
        let out = g.matmul(ctx, p[slots[3]]);
        (out, weights)
    }

    fn feed_forward(g: &mut Graph, p: &[Var], slots: [usize; 4], x: Var) -> Var {
        let h = g.matmul(x, p[slots[0]]);
        let h = g.add_row(h, p[slots[1]]);
        let h = g.tanh(h);
        let h = g.matmul(h, p[slots[2]]);
        g.add_row(h, p[slots[3]])
    }

    /// Encoder over embedded source rows `x` (`M×d`).
    pub(crate) fn encoder(&self, g: &mut Graph, p: &[Var], x: Var) -> Var {
        let d = self.config.embed_dim;
        let m = g.value(x).rows();
        let pe = g.constant(positional(m, d));
        let e = g.add(x, pe);
        let (a, _) = Self::attend(g, p, [ENC_Q, ENC_K, ENC_V, ENC_O], e, e, false, d);
        let h = g.add(e, a);
        let f = Self::feed_forward(g, p, [ENC_F1, ENC_B1, ENC_F2, ENC_B2], h);
        g.add(h, f)
    }

    /// Decoder over `dec_in` (BOS-prefixed) attending to `memory`. When
    /// `last_only`, logits are produced for the final row alone.
    pub(crate) fn decoder(
        &self,
        g: &mut Graph,
        p: &[Var],
        memory: Var,
        dec_in: &[usize],
        last_only: bool,
    ) -> Forward {
        let d = self.config.embed_dim;
        let n = dec_in.len();
        let y = g.gather(p[TGT_EMB], dec_in);
        let pe = g.constant(positional(n, d));
        let y = g.add(y, pe);
        let (a, _) = Self::attend(g, p, [DEC_Q, DEC_K, DEC_V, DEC_O], y, y, true, d);
        let s = g.add(y, a);
        let (c, cross_attention) = Self::attend(g, p, [X_Q, X_K, X_V, X_O], s, memory, false, d);
        let h = g.add(s, c);
        let f = Self::feed_forward(g, p, [DEC_F1, DEC_B1, DEC_F2, DEC_B2], h);
        let h = g.add(h, f);
        let h = if last_only { g.slice_rows(h, n - 1, n) } else { h };
        let logits = g.matmul(h, p[OUT_W]);
        let logits = g.add_row(logits, p[OUT_B]);
        Forward {
            logits,
            cross_attention,
        }
    }

    fn source_rows(&self, embedded: &EmbeddedInput) -> Result<Matrix> {
        check_dim(embedded, self.config.embed_dim)?;
        Ok(if embedded.is_empty() {
            Matrix::zeros(0, self.config.embed_dim)
        } else {
            embedded.vectors.clone()
        })
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::InvalidInput(format!(
                "token {t} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Teacher-forced graph: returns (graph, input var, forward handles, target with EOS).
    fn teacher_forced(
        &self,
        embedded: &EmbeddedInput,
        target: &[usize],
        track_input: bool,
    ) -> Result<(Graph, Var, Forward)> {
        self.check_tokens(target)?;
        let rows = self.source_rows(embedded)?;
        let mut g = Graph::new();
        let p = self.load_params(&mut g, false);
        let x = if track_input {
            g.variable(rows)
        } else {
            g.constant(rows)
        };
        let memory = self.encoder(&mut g, &p, x);
        let mut dec_in = Vec::with_capacity(target.len());
        dec_in.push(BOS);
        dec_in.extend_from_slice(&target[..target.len().saturating_sub(1)]);
        let fwd = self.decoder(&mut g, &p, memory, &dec_in, false);
        Ok((g, x, fwd))
    }
}

impl TranslationModel for ToyModel {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    fn embed(&self, source: &[usize]) -> EmbeddedInput {
        let table = &self.params[SRC_EMB];
        let mut m = Matrix::zeros(source.len(), self.config.embed_dim);
        for (r, &t) in source.iter().enumerate() {
            m.row_mut(r).copy_from_slice(table.row(t));
        }
        EmbeddedInput::new(m)
    }

    fn encode(&self, embedded: &EmbeddedInput) -> Result<Matrix> {
        let rows = self.source_rows(embedded)?;
        let mut g = Graph::new();
        let p = self.load_params(&mut g, false);
        let x = g.constant(rows);
        let memory = self.encoder(&mut g, &p, x);
        Ok(g.value(memory).clone())
    }

    fn next_distribution(&self, memory: &Matrix, prefix: &[usize]) -> Result<Vec<f64>> {
        check_prefix(prefix)?;
        self.check_tokens(prefix)?;
        let mut g = Graph::new();
        let p = self.load_params(&mut g, false);
        let mem = g.constant(memory.clone());
        let fwd = self.decoder(&mut g, &p, mem, prefix, true);
        Ok(crate::tensor::softmax(g.value(fwd.logits).row(0)))
    }

    fn target_probs(&self, embedded: &EmbeddedInput, target: &[usize]) -> Result<Vec<f64>> {
        if target.is_empty() {
            return Ok(Vec::new());
        }
        let (g, _, fwd) = self.teacher_forced(embedded, target, false)?;
        let logits = g.value(fwd.logits);
        Ok(target
            .iter()
            .enumerate()
            .map(|(i, &t)| crate::tensor::softmax(logits.row(i))[t])
            .collect())
    }

    fn target_gradients(
        &self,
        embedded: &EmbeddedInput,
        target: &[usize],
    ) -> Result<(Vec<f64>, Vec<Matrix>)> {
        if target.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let (mut g, x, fwd) = self.teacher_forced(embedded, target, true)?;
        let picks: Vec<Var> = target
            .iter()
            .enumerate()
            .map(|(i, &t)| g.softmax_pick(fwd.logits, i, t))
            .collect();
        let mut probs = Vec::with_capacity(picks.len());
        let mut grads = Vec::with_capacity(picks.len());
        for &pick in &picks {
            probs.push(g.value(pick).get(0, 0));
            let mut gr = g.backward(pick);
            grads.push(
                gr.take(x)
                    .unwrap_or_else(|| Matrix::zeros(embedded.len(), self.config.embed_dim)),
            );
        }
        Ok((probs, grads))
    }

    fn attention(&self, embedded: &EmbeddedInput, target: &[usize]) -> Result<Matrix> {
        if target.is_empty() {
            return Ok(Matrix::zeros(embedded.len(), 0));
        }
        let (g, _, fwd) = self.teacher_forced(embedded, target, false)?;
        Ok(g.value(fwd.cross_attention).transpose())
    }
}
