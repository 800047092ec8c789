//! End-to-end run from a TOML config: train, attribute, evaluate every
//! estimator under every perturbation, analyze, and write a manifest of
//! output hashes.
//!
//! cargo run --release --example pipeline -- [out_dir]

use word_importance::pipeline::{run_pipeline, ExperimentConfig};
use word_importance::testbed::{collocation_language, CollocationConfig};

const CONFIG: &str = r#"
seed = 7

[data]
train_source = "train.src"
train_target = "train.tgt"
test_source = "test.src"
test_reference = "test.ref"

[annotations]
pos = "test.pos"
alignment = "test.align"
depth = "test.depth"

[model]
steps = 1500
word_dropout = 0.15

[attribution]
steps = 50

[evaluation]
k_max = 3
repeats = 3
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "pipeline-out".into());
    let data = std::path::Path::new(&out).join("data");
    collocation_language(&CollocationConfig::default(), 1500, 40, 7).write(&data)?;

    let mut config = ExperimentConfig::from_toml(CONFIG, &data)?;
    config.output_dir = Some(out.clone().into());
    let summary = run_pipeline(&config)?;

    for notice in &summary.manifest.notices {
        println!("notice: {notice}");
    }
    println!("\nmask curves:");
    for c in summary.curves.iter().filter(|c| c.kind.name() == "mask") {
        let bleu: Vec<String> = c.points.iter().map(|p| format!("{:.3}", p.mean_bleu)).collect();
        println!("  {:<12} {}", c.estimator.name(), bleu.join("  "));
    }
    if let Some(tree) = &summary.analysis.tree_correlation {
        println!("\ntree shares: {:?}", tree.groups);
    }
    println!("\noutputs in {}:", summary.output_dir.display());
    for (file, hash) in &summary.manifest.outputs {
        println!("  {file:<36} {}", &hash[..12]);
    }
    Ok(())
}
