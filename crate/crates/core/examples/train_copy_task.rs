//! Trains the micro encoder–decoder on a copy task and saves a checkpoint.
//!
//! cargo run --release --example train_copy_task -- [steps] [checkpoint.json]

use word_importance::data::{encode_sentence, Corpus, SubwordSplitter};
use word_importance::seqmodel::{decode, token_accuracy, train, AnyModel, Checkpoint, TrainConfig};
use word_importance::testbed::copy_task;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map_or(Ok(1500), |s| s.parse())?;
    let out = args.next();

    let split = copy_task(200, 1000, 20, 3..=6, 1);
    let (sources, targets) = split.train_pairs();
    let corpus = Corpus::build(&sources, &targets, SubwordSplitter { min_count: 1, piece_len: 3 })?;
    println!("{} training pairs, vocabulary {}", corpus.pairs.len(), corpus.vocab.len());

    let config = TrainConfig { steps, seed: 1, ..TrainConfig::default() };
    let report = train(&corpus.pairs, corpus.vocab.len(), &config)?;
    for (i, chunk) in report.losses.chunks(steps.div_ceil(5).max(1)).enumerate() {
        println!("steps {:>5}..  mean loss {:.4}", i * steps.div_ceil(5), chunk.iter().sum::<f64>() / chunk.len() as f64);
    }

    let test: Vec<_> = split
        .test
        .iter()
        .map(|s| {
            let (source, spans, _) = encode_sentence(&s.source, &corpus.vocab, &corpus.splitter, &corpus.word_counts);
            word_importance::data::SentencePair {
                source,
                target: s.target.iter().map(|w| corpus.vocab.id_or_unk(w)).collect(),
                source_surface: s.source.clone(),
                subword_spans: spans,
            }
        })
        .collect();
    println!("teacher-forced token accuracy on held-out sentences: {:.3}", token_accuracy(&report.model, &test)?);
    for pair in test.iter().take(3) {
        let hyp = decode(&report.model, &pair.source, 4, 20)?;
        println!("  {}  =>  {}", pair.source_surface.join(" "), corpus.vocab.decode(&hyp).join(" "));
    }

    if let Some(path) = out {
        let checkpoint = Checkpoint::new(AnyModel::Transformer(report.model), corpus.vocab, corpus.splitter, &corpus.word_counts);
        checkpoint.save(std::path::Path::new(&path))?;
        println!("wrote {path}");
    }
    Ok(())
}
