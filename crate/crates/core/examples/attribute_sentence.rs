//! Translates one sentence and prints its word importance and the
//! piece-by-output contribution matrix, as text and as JSON.
//!
//! cargo run --release --example attribute_sentence

use word_importance::data::{Corpus, SubwordSplitter};
use word_importance::pipeline::attribute_sentence;
use word_importance::seqmodel::{train, AnyModel, Checkpoint, DecodeOptions, TrainConfig};
use word_importance::testbed::{collocation_language, CollocationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = collocation_language(&CollocationConfig::default(), 2000, 5, 1);
    let (sources, targets) = split.train_pairs();
    let corpus = Corpus::build(&sources, &targets, SubwordSplitter::default())?;
    let config = TrainConfig { steps: 3000, word_dropout: 0.15, seed: 1, ..TrainConfig::default() };
    let model = train(&corpus.pairs, corpus.vocab.len(), &config)?.model;
    let checkpoint = Checkpoint::new(AnyModel::Transformer(model), corpus.vocab, corpus.splitter, &corpus.word_counts);

    let sentence = &split.test[0];
    println!("source:    {}", sentence.source.join(" "));
    println!("reference: {}\n", sentence.target.join(" "));
    let report = attribute_sentence(&checkpoint, &sentence.source, 300, &DecodeOptions::default())?;
    println!("{report}\n");
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
