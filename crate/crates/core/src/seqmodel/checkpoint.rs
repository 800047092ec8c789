use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linear::LinearModel;
use super::transformer::{ModelConfig, ToyModel, PARAM_NAMES};
use super::{EmbeddedInput, TranslationModel};
use crate::data::{SubwordSplitter, Vocab};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const FORMAT: &str = "word-importance-checkpoint/1";

/// Any model that can live in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Transformer(ToyModel),
    Linear(LinearModel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelRepr {
    Transformer {
        config: ModelConfig,
        /// Named tensors, each with its `rows`/`cols` header.
        tensors: BTreeMap<String, Matrix>,
    },
    Linear(LinearModel),
}

/// Model plus everything needed to encode new sentences for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    #[serde(with = "model_repr")]
    pub model: AnyModel,
    pub vocab: Vocab,
    pub splitter: SubwordSplitter,
    pub word_counts: BTreeMap<String, u64>,
}

mod model_repr {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(model: &AnyModel, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match model {
            AnyModel::Transformer(m) => ModelRepr::Transformer {
                config: m.config,
                tensors: PARAM_NAMES
                    .iter()
                    .zip(m.params())
                    .map(|(n, t)| (n.to_string(), t.clone()))
                    .collect(),
            },
            AnyModel::Linear(m) => ModelRepr::Linear(m.clone()),
        };
        repr.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<AnyModel, D::Error> {
        match ModelRepr::deserialize(d)? {
            ModelRepr::Transformer {
                config,
                mut tensors,
            } => {
                let mut params = Vec::with_capacity(PARAM_NAMES.len());
                for name in PARAM_NAMES {
                    params.push(tensors.remove(name).ok_or_else(|| {
                        serde::de::Error::custom(format!("missing tensor {name}"))
                    })?);
                }
                ToyModel::from_params(config, params)
                    .map(AnyModel::Transformer)
                    .map_err(serde::de::Error::custom)
            }
            ModelRepr::Linear(m) => Ok(AnyModel::Linear(m)),
        }
    }
}

impl Checkpoint {
    pub fn new(
        model: AnyModel,
        vocab: Vocab,
        splitter: SubwordSplitter,
        word_counts: &HashMap<String, u64>,
    ) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            model,
            vocab,
            splitter,
            word_counts: word_counts.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", c.format)));
        }
        if c.model.vocab_size() != c.vocab.len() {
            return Err(Error::Checkpoint(format!(
                "model vocabulary {} does not match stored vocabulary {}",
                c.model.vocab_size(),
                c.vocab.len()
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn word_counts(&self) -> HashMap<String, u64> {
        self.word_counts.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Transformer($m) => $e,
            AnyModel::Linear($m) => $e,
        }
    };
}

impl TranslationModel for AnyModel {
    fn vocab_size(&self) -> usize {
        delegate!(self, m => m.vocab_size())
    }

    fn embed_dim(&self) -> usize {
        delegate!(self, m => m.embed_dim())
    }

    fn embed(&self, source: &[usize]) -> EmbeddedInput {
        delegate!(self, m => m.embed(source))
    }

    fn encode(&self, embedded: &EmbeddedInput) -> Result<Matrix> {
        delegate!(self, m => m.encode(embedded))
    }

    fn next_distribution(&self, memory: &Matrix, prefix: &[usize]) -> Result<Vec<f64>> {
        delegate!(self, m => m.next_distribution(memory, prefix))
    }

    fn target_probs(&self, embedded: &EmbeddedInput, target: &[usize]) -> Result<Vec<f64>> {
        delegate!(self, m => m.target_probs(embedded, target))
    }

    fn target_gradients(
        &self,
        embedded: &EmbeddedInput,
        target: &[usize],
    ) -> Result<(Vec<f64>, Vec<Matrix>)> {
        delegate!(self, m => m.target_gradients(embedded, target))
    }

    fn attention(&self, embedded: &EmbeddedInput, target: &[usize]) -> Result<Matrix> {
        delegate!(self, m => m.attention(embedded, target))
    }
}
