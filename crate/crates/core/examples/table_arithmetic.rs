//! Relative change between a category's share of tokens and its share of
//! importance, the Δ column of the distribution tables.
//!
//! cargo run --example table_arithmetic

use word_importance::analysis::{format_delta, relative_change, DistributionRow};

fn main() {
    let rows = [
        DistributionRow::new("Noun", 0.383, 0.407),
        DistributionRow::new("Verb", 0.165, 0.160),
        DistributionRow::new("Dete.", 0.043, 0.043),
        DistributionRow::new(">=2", 0.087, 0.146),
        DistributionRow::new("absent", 0.0, 0.0),
    ];
    println!("{:<8} {:>6} {:>6} {:>8}", "", "Count", "Attri.", "Δ");
    for r in &rows {
        println!("{:<8} {:>6.3} {:>6.3} {:>8}", r.label, r.count_share, r.attr_share, format_delta(r.delta));
    }

    // 0.096 -> 0.120 is exactly +25%; some printed tables round the shares
    // after computing the change, so a recomputed cell can differ.
    println!("\n0.096 -> 0.120: {}", format_delta(relative_change(0.096, 0.120)));
}
