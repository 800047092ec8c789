//! Which kinds of words does attribution find important? Compares each
//! POS tag's and fertility class's share of tokens with its share of
//! length-normalized importance.
//!
//! cargo run --release --example linguistic_analysis

use word_importance::analysis::{distribution_csv, fertility_distribution, format_delta, pos_distribution, Pos};
use word_importance::data::{Corpus, SubwordSplitter};
use word_importance::evalharness::prepare_test_set;
use word_importance::pipeline::{attribute_all, TestData};
use word_importance::seqmodel::{train, AnyModel, Checkpoint, DecodeOptions, TrainConfig};
use word_importance::testbed::{collocation_language, CollocationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = collocation_language(&CollocationConfig::default(), 2000, 60, 3);
    let (sources, targets) = split.train_pairs();
    let corpus = Corpus::build(&sources, &targets, SubwordSplitter::default())?;
    let config = TrainConfig { steps: 3000, word_dropout: 0.15, seed: 3, ..TrainConfig::default() };
    let model = train(&corpus.pairs, corpus.vocab.len(), &config)?.model;
    let checkpoint = Checkpoint::new(AnyModel::Transformer(model), corpus.vocab, corpus.splitter, &corpus.word_counts);

    let data = TestData {
        sources: split.test.iter().map(|s| s.source.clone()).collect(),
        references: split.test.iter().map(|s| s.target.clone()).collect(),
        pos: Some(split.test.iter().map(|s| s.pos.iter().map(|t| Pos::from_tag(t)).collect()).collect()),
        alignment: Some(split.test.iter().map(|s| s.alignment.clone()).collect()),
        depth: None,
        gold: None,
    };
    let items = prepare_test_set(&checkpoint.model, data.encode(&checkpoint), &DecodeOptions::default())?;
    let importances: Vec<Vec<f64>> = attribute_all(&checkpoint.model, &items, 100)?
        .into_iter()
        .map(|(estimate, _)| estimate.scores)
        .collect();

    let pos_rows = pos_distribution(&importances, data.pos.as_ref().unwrap())?;
    println!("{:<20} {:>6} {:>6} {:>8}", "POS", "Count", "Attri.", "Δ");
    for r in &pos_rows {
        println!("{:<20} {:>6.3} {:>6.3} {:>8}", r.label, r.count_share, r.attr_share, format_delta(r.delta));
    }
    let fertility = fertility_distribution(&importances, &data.fertility().unwrap())?;
    println!("\n{:<20} {:>6} {:>6} {:>8}", "Fertility", "Count", "Attri.", "Δ");
    for r in &fertility {
        println!("{:<20} {:>6.3} {:>6.3} {:>8}", r.label, r.count_share, r.attr_share, format_delta(r.delta));
    }
    println!("\n{}", distribution_csv(&fertility));
    Ok(())
}
