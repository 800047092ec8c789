//! Flags the least important source words of each sentence as candidates
//! for under-translation and scores them against gold: here the
//! determiners, which the testbed language never translates.
//!
//! cargo run --release --example under_translation

use std::collections::BTreeMap;

use word_importance::analysis::{detect_undertranslation, gold_flags, Pos};
use word_importance::data::{Corpus, SubwordSplitter};
use word_importance::estimators::{Estimators, FrequencyTable, Method};
use word_importance::evalharness::prepare_test_set;
use word_importance::pipeline::TestData;
use word_importance::seqmodel::{train, AnyModel, Checkpoint, DecodeOptions, TrainConfig};
use word_importance::testbed::{collocation_language, CollocationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = collocation_language(&CollocationConfig::default(), 2000, 60, 4);
    let (sources, targets) = split.train_pairs();
    let corpus = Corpus::build(&sources, &targets, SubwordSplitter::default())?;
    let config = TrainConfig { steps: 3000, word_dropout: 0.15, seed: 4, ..TrainConfig::default() };
    let model = train(&corpus.pairs, corpus.vocab.len(), &config)?.model;
    let checkpoint = Checkpoint::new(AnyModel::Transformer(model), corpus.vocab, corpus.splitter, &corpus.word_counts);

    let gold: BTreeMap<usize, Vec<usize>> = split
        .test
        .iter()
        .enumerate()
        .map(|(i, s)| (i, (0..s.source.len()).filter(|&m| s.pos[m] == "DET").collect::<Vec<_>>()))
        .filter(|(_, d)| !d.is_empty())
        .collect();
    let lengths: Vec<usize> = split.test.iter().map(|s| s.source.len()).collect();
    let flags = gold_flags(&gold, &lengths)?;
    println!("{} gold words in {} sentences", flags.iter().flatten().filter(|&&f| f).count(), flags.len());

    let data = TestData {
        sources: split.test.iter().map(|s| s.source.clone()).collect(),
        references: split.test.iter().map(|s| s.target.clone()).collect(),
        pos: Some(split.test.iter().map(|s| s.pos.iter().map(|t| Pos::from_tag(t)).collect()).collect()),
        alignment: None,
        depth: None,
        gold: Some(gold),
    };
    let items = prepare_test_set(&checkpoint.model, data.encode(&checkpoint), &DecodeOptions::default())?;
    let frequencies = FrequencyTable::new(&checkpoint.vocab, FrequencyTable::DEFAULT_EXCLUDED);
    let estimators = Estimators {
        model: &checkpoint.model,
        frequencies: &frequencies,
        steps: 100,
        decoding: DecodeOptions::default(),
    };

    println!("{:<12} {:>5} {:>9} {:>7} {:>6}", "estimator", "pct", "precision", "recall", "F1");
    for method in [Method::Random, Method::Attention, Method::Erasure, Method::Attribution] {
        let importances = items
            .iter()
            .enumerate()
            .map(|(i, it)| Ok(estimators.estimate(method, &it.pair, it.inputs(), i as u64)?.scores))
            .collect::<word_importance::Result<Vec<_>>>()?;
        for pct in [5.0, 10.0, 15.0] {
            let r = detect_undertranslation(&importances, &flags, pct)?;
            println!("{:<12} {:>4}% {:>9.3} {:>7.3} {:>6.3}", method.name(), pct, r.precision, r.recall, r.f1);
        }
    }
    Ok(())
}
