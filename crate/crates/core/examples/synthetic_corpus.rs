//! Writes the collocation testbed as plain-text corpus and annotation files,
//! plus an experiment config that `wordimp pipeline --config` accepts.
//!
//! cargo run --release --example synthetic_corpus -- /tmp/colloc [n_train] [n_test]

use std::path::PathBuf;

use word_importance::testbed::{collocation_language, CollocationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "colloc-data".into()));
    let n_train: usize = args.next().map_or(Ok(3000), |s| s.parse())?;
    let n_test: usize = args.next().map_or(Ok(100), |s| s.parse())?;

    let split = collocation_language(&CollocationConfig::default(), n_train, n_test, 1);
    let files = split.write(&dir)?;
    for s in split.test.iter().take(3) {
        println!("{}  =>  {}", s.source.join(" "), s.target.join(" "));
    }

    let gold: String = split
        .test
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let dets: Vec<String> = (0..s.source.len())
                .filter(|&m| s.pos[m] == "DET")
                .map(|m| m.to_string())
                .collect();
            (!dets.is_empty()).then(|| format!("{i} {}\n", dets.join(" ")))
        })
        .collect();
    std::fs::write(dir.join("test.gold"), gold)?;

    let config = format!(
        r#"seed = 1

[data]
train_source = "train.src"
train_target = "train.tgt"
test_source = "test.src"
test_reference = "test.ref"

[annotations]
pos = "test.pos"
alignment = "test.align"
depth = "test.depth"
under_translation = "test.gold"

[model]
steps = 8000
word_dropout = 0.15

[evaluation]
estimators = ["random", "frequency", "content", "attention", "erasure", "attribution"]
perturbations = ["deletion", "mask", "replace"]
"#
    );
    std::fs::write(dir.join("config.toml"), config)?;
    println!("wrote {} and config.toml", files.train_source.parent().unwrap().display());
    Ok(())
}
