//! Corpus BLEU-4 with brevity penalty, and the add-one smoothed sentence
//! BLEU used for per-sentence deltas.
//!
//! cargo run --example bleu

use word_importance::bleu::{bleu, corpus_stats, sentence_bleu, BleuStats};

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hyps = vec![words("the cat sat on the mat"), words("a b c d")];
    let refs = vec![words("the cat sat on the mat"), words("a b c d e")];

    println!("identity:            {:.4}", bleu(&hyps[..1], &refs[..1])?);
    println!("short hypothesis:    {:.4}", bleu(&hyps[1..], &refs[1..])?);
    println!("corpus of both:      {:.4}", bleu(&hyps, &refs)?);
    println!("no 4-gram overlap:   {:.4}", bleu(&[words("a b c x d e f")], &[words("a b c y d e f")])?);

    let whole = corpus_stats(&hyps, &refs)?;
    let mut merged = BleuStats::from_sentence(&hyps[0], &refs[0]);
    merged += BleuStats::from_sentence(&hyps[1], &refs[1]);
    println!("\nsufficient statistics add up: {}", whole == merged);
    println!("{merged:?}");

    println!("\nsentence BLEU (smoothed), hypothesis missing one word:");
    println!("  {:.4}", sentence_bleu(&words("the cat on the mat"), &words("the cat sat on the mat")));
    Ok(())
}
