//! BLEU as the k most important words are deleted, masked or replaced by a
//! same-POS word, for random, erasure and attribution rankings.
//!
//! cargo run --release --example perturbation_curves

use word_importance::analysis::Pos;
use word_importance::data::{encode_sentence, Corpus, SentencePair, SubwordSplitter};
use word_importance::estimators::{Estimators, FrequencyTable, Method};
use word_importance::evalharness::{
    curves_to_csv, prepare_test_set, relative_decline, run_curve, PerturbationKind, PerturbationSpec, ReplacementPool,
};
use word_importance::seqmodel::{train, DecodeOptions, TrainConfig};
use word_importance::testbed::{collocation_language, CollocationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = collocation_language(&CollocationConfig::default(), 2000, 40, 1);
    let (sources, targets) = split.train_pairs();
    let corpus = Corpus::build(&sources, &targets, SubwordSplitter::default())?;
    let config = TrainConfig { steps: 3000, word_dropout: 0.15, seed: 1, ..TrainConfig::default() };
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
    let decoding = DecodeOptions::default();
    let items = prepare_test_set(&model, pairs, &decoding)?;
    let pool = ReplacementPool::new(
        split.train.iter().flat_map(|s| s.source.iter().zip(&s.pos).map(|(w, t)| (w.as_str(), Pos::from_tag(t)))),
        &corpus.vocab,
    );

    let frequencies = FrequencyTable::new(&corpus.vocab, FrequencyTable::DEFAULT_EXCLUDED);
    let estimators = Estimators { model: &model, frequencies: &frequencies, steps: 100, decoding };
    let mut curves = Vec::new();
    for kind in PerturbationKind::ALL {
        for method in [Method::Random, Method::Erasure, Method::Attribution] {
            let mut spec = PerturbationSpec::new(kind, method, 1);
            spec.k_max = 4;
            spec.repeats = 3;
            let curve = run_curve(&estimators, &items, &spec, Some(&pool))?;
            println!("{:<8} {:<12} relative decline at k=4: {:5.1}%", kind.name(), method.name(), relative_decline(&curve)? * 100.0);
            curves.push(curve);
        }
    }
    println!("\n{}", curves_to_csv(&curves));
    Ok(())
}
