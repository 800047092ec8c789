//! The six word-importance estimators side by side on a few sentences.
//!
//! cargo run --release --example estimators

use word_importance::analysis::Pos;
use word_importance::data::{encode_sentence, Corpus, SentencePair, SubwordSplitter};
use word_importance::estimators::{Estimators, FrequencyTable, Method};
use word_importance::evalharness::prepare_test_set;
use word_importance::seqmodel::{train, DecodeOptions, TrainConfig};
use word_importance::testbed::{collocation_language, CollocationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = collocation_language(&CollocationConfig::default(), 2000, 3, 2);
    let (sources, targets) = split.train_pairs();
    let corpus = Corpus::build(&sources, &targets, SubwordSplitter::default())?;
    let config = TrainConfig { steps: 3000, word_dropout: 0.15, seed: 2, ..TrainConfig::default() };
    let model = train(&corpus.pairs, corpus.vocab.len(), &config)?.model;

    let pairs = split
        .test
        .iter()
        .map(|s| {
            let (source, spans, _) = encode_sentence(&s.source, &corpus.vocab, &corpus.splitter, &corpus.word_counts);
            let pair = SentencePair {
                source,
                target: s.target.iter().map(|w| corpus.vocab.id_or_unk(w)).collect(),
                source_surface: s.source.clone(),
                subword_spans: spans,
            };
            (pair, Some(s.pos.iter().map(|t| Pos::from_tag(t)).collect()))
        })
        .collect();
    let items = prepare_test_set(&model, pairs, &DecodeOptions::default())?;

    // The testbed vocabulary is tiny; the default top-50 cut would exclude every word.
    let frequencies = FrequencyTable::new(&corpus.vocab, 10);
    let estimators = Estimators { model: &model, frequencies: &frequencies, steps: 300, decoding: DecodeOptions::default() };
    for item in &items {
        println!("source      {}", item.pair.source_surface.join(" "));
        println!("hypothesis  {}", corpus.vocab.decode(&item.pair.target).join(" "));
        for method in Method::ALL {
            let e = estimators.estimate(method, &item.pair, item.inputs(), 7)?;
            let top: Vec<&str> = e.ranking.iter().take(3).map(|&w| item.pair.source_surface[w].as_str()).collect();
            let scores: Vec<String> = e.scores.iter().map(|v| format!("{v:5.2}")).collect();
            println!("  {:<11} top {:<18} scores {}", method.name(), top.join(","), scores.join(" "));
        }
        println!();
    }
    Ok(())
}
