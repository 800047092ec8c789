//! Completeness of integrated gradients: every output probability is split
//! exactly among the source pieces, up to a quadrature residual that shrinks
//! with the number of steps. Linear models are exact at one step.
//!
//! cargo run --release --example completeness

use word_importance::attribution::{integrated_gradients, integrated_gradients_with, Quadrature};
use word_importance::seqmodel::{LinearModel, ModelConfig, ToyModel, TranslationModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = [5, 9, 12, 7];
    let target = [8, 6, 11];

    let linear = LinearModel::new(20, 8, 3);
    let x = linear.embed(&source);
    for steps in [1, 300] {
        let a = integrated_gradients(&linear, &x, &target, steps)?;
        println!("linear model, S = {steps:>3}: max residual {:.1e}", a.max_residual());
    }

    let toy = ToyModel::new(ModelConfig { vocab_size: 20, embed_dim: 16, ffn_dim: 32, seed: 3 });
    let x = toy.embed(&source);
    println!("\nmicro transformer: residual |sum_m c(m,n) - (p_n(x) - p_n(0))| by step count");
    println!("{:>5}  {:>10}  {:>10}", "S", "trapezoid", "plain sum");
    for steps in [1, 3, 10, 30, 100, 300] {
        let t = integrated_gradients(&toy, &x, &target, steps)?;
        let p = integrated_gradients_with(&toy, &x, &target, steps, Quadrature::PrintedSum)?;
        println!("{steps:>5}  {:>10.2e}  {:>10.2e}", t.max_residual(), p.max_residual());
    }

    let a = integrated_gradients(&toy, &x, &target, 300)?;
    println!("\ncolumn sums vs probability gain over the zero baseline");
    for (n, sum) in a.matrix.column_sums().iter().enumerate() {
        println!(
            "  output {n}: sum {sum:+.6}  p(x) - p(0) = {:+.6}",
            a.output_probs[n] - a.baseline_probs[n]
        );
    }
    Ok(())
}
