//! Fits a regression tree from one-hot POS, fertility and depth features to
//! each token's importance and reports how much each feature explains.
//!
//! cargo run --release --example tree_correlation

use word_importance::analysis::{depth_buckets, length_normalize, token_features, tree_correlation, FertilityClass, Pos, TreeConfig};
use word_importance::data::{Corpus, SubwordSplitter};
use word_importance::evalharness::prepare_test_set;
use word_importance::pipeline::{attribute_all, TestData};
use word_importance::seqmodel::{train, AnyModel, Checkpoint, DecodeOptions, TrainConfig};
use word_importance::testbed::{collocation_language, CollocationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = collocation_language(&CollocationConfig::default(), 2000, 80, 5);
    let (sources, targets) = split.train_pairs();
    let corpus = Corpus::build(&sources, &targets, SubwordSplitter::default())?;
    let config = TrainConfig { steps: 3000, word_dropout: 0.15, seed: 5, ..TrainConfig::default() };
    let model = train(&corpus.pairs, corpus.vocab.len(), &config)?.model;
    let checkpoint = Checkpoint::new(AnyModel::Transformer(model), corpus.vocab, corpus.splitter, &corpus.word_counts);

    let data = TestData {
        sources: split.test.iter().map(|s| s.source.clone()).collect(),
        references: split.test.iter().map(|s| s.target.clone()).collect(),
        pos: Some(split.test.iter().map(|s| s.pos.iter().map(|t| Pos::from_tag(t)).collect()).collect()),
        alignment: Some(split.test.iter().map(|s| s.alignment.clone()).collect()),
        depth: Some(split.test.iter().map(|s| s.depth.clone()).collect()),
        gold: None,
    };
    let items = prepare_test_set(&checkpoint.model, data.encode(&checkpoint), &DecodeOptions::default())?;
    let target: Vec<f64> = attribute_all(&checkpoint.model, &items, 100)?
        .iter()
        .flat_map(|(estimate, _)| length_normalize(&estimate.scores))
        .collect();

    let pos: Vec<Pos> = data.pos.iter().flatten().flatten().copied().collect();
    let fertility: Vec<FertilityClass> = data.fertility().unwrap().into_iter().flatten().collect();
    let depth: Vec<u32> = data.depth.iter().flatten().flatten().copied().collect();
    let features = token_features(&pos, &fertility, &depth_buckets(&depth))?;
    let report = tree_correlation(&features, &target, &TreeConfig::default())?;

    println!("{} tokens, tree explains {:.1}% of the variance", target.len(), 100.0 * report.total_reduction / report.total_variance);
    for (group, share) in &report.groups {
        println!("  {group:<10} {:5.1}%", share * 100.0);
    }
    println!();
    print!("{}", report.to_csv());
    Ok(())
}
