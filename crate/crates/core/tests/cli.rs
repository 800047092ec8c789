use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use word_importance::data::{Corpus, SubwordSplitter};
use word_importance::pipeline::SentenceAttribution;
use word_importance::seqmodel::{AnyModel, Checkpoint, LinearModel};
use word_importance::testbed::{collocation_language, CollocationConfig};

fn wordimp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wordimp"))
        .args(args)
        .env_remove("WORDIMP_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_data(dir: &Path, n_test: usize) {
    collocation_language(&CollocationConfig::default(), 150, n_test, 3).write(dir).unwrap();
}

fn small_config(dir: &Path, annotations: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        format!(
            r#"seed = 4
[data]
train_source = "train.src"
train_target = "train.tgt"
test_source = "test.src"
test_reference = "test.ref"
[annotations]
{annotations}
[model]
steps = 60
[attribution]
steps = 10
matrices = 2
[evaluation]
repeats = 2
k_max = 2
"#
        ),
    )
    .unwrap();
    path
}

fn linear_checkpoint(dir: &Path) -> PathBuf {
    let src = vec![
        vec!["a".to_string(), "b".into(), "c".into()],
        vec!["b".into(), "c".into()],
    ];
    let corpus = Corpus::build(&src, &src, SubwordSplitter { min_count: 1, piece_len: 3 }).unwrap();
    let model = LinearModel::new(corpus.vocab.len(), 6, 11);
    let counts = corpus.word_counts.clone();
    let checkpoint = Checkpoint::new(AnyModel::Linear(model), corpus.vocab, corpus.splitter, &counts);
    let path = dir.join("linear.json");
    checkpoint.save(&path).unwrap();
    path
}

fn attribute_json(model: &Path, steps: &str, words: &[&str]) -> SentenceAttribution {
    let mut args = vec!["attribute", "--json", "--beam", "1", "--steps", steps, "--model", model.to_str().unwrap()];
    args.extend_from_slice(words);
    let o = wordimp(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_str(&stdout(&o)).expect("attribute --json prints one JSON document")
}

#[test]
fn usage_errors_exit_with_one() {
    let o = wordimp(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = wordimp(&["attribute"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validation_lists_every_missing_file_and_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), "pos = \"missing.pos\"");
    let o = wordimp(&["pipeline", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for name in ["train.src", "train.tgt", "test.src", "test.ref", "missing.pos"] {
        assert!(err.contains(name), "{name} not reported in:\n{err}");
    }
}

#[test]
fn malformed_alignment_names_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    write_data(tmp.path(), 6);
    let align = tmp.path().join("bad.align");
    std::fs::write(&align, "0-0\n3-x\n0-0\n0-0\n0-0\n0-0\n").unwrap();
    let config = small_config(tmp.path(), "alignment = \"bad.align\"");
    let o = wordimp(&["pipeline", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.align:2"), "{err}");
    assert!(!tmp.path().join("wordimp-out").exists());
}

#[test]
fn unreadable_checkpoint_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let bogus = tmp.path().join("model.json");
    std::fs::write(&bogus, "{\"format\": 99}").unwrap();
    let o = wordimp(&["attribute", "--model", bogus.to_str().unwrap(), "a"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("model.json"), "{}", stderr(&o));
}

#[test]
fn pipeline_without_annotations_skips_analyses() {
    let tmp = tempfile::tempdir().unwrap();
    write_data(tmp.path(), 6);
    let config = small_config(tmp.path(), "");
    let out = tmp.path().join("out");
    let o = wordimp(&["pipeline", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("skipped"), "{text}");
    for f in ["model.json", "importance.json", "curves.csv", "manifest.json", "analysis/report.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(!out.join("analysis/pos_distribution.csv").exists());
    assert!(!out.join("analysis/under_translation.csv").exists());
}

#[test]
fn train_then_evaluate_and_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    write_data(tmp.path(), 40);
    let p = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    let out = p("run");
    let o = wordimp(&["train", "--source", &p("train.src"), "--target", &p("train.tgt"), "--steps", "40", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = format!("{out}/model.json");
    let o = wordimp(&[
        "evaluate", "--model", &model, "--source", &p("test.src"), "--reference", &p("test.ref"),
        "--estimators", "random,attribution", "--perturbations", "mask", "--k-max", "1", "--repeats", "1",
        "--steps", "5", "--out", &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().count() >= 5, "{}", stdout(&o));
    let o = wordimp(&[
        "analyze", "--importance", &format!("{out}/importance.json"), "--pos", &p("test.pos"),
        "--alignment", &p("test.align"), "--depth", &p("test.depth"), "--out", &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(Path::new(&out).join("analysis/pos_distribution.csv").exists());
    assert!(Path::new(&out).join("analysis/tree_correlation.csv").exists());
}

#[test]
fn attribute_json_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let model = linear_checkpoint(tmp.path());
    let a = attribute_json(&model, "20", &["a", "b", "c"]);
    assert_eq!(a.words, ["a", "b", "c"]);
    assert_eq!(a.importance.len(), 3);
    assert!((a.importance.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(a.matrix.len(), a.pieces.len());
    assert!(a.matrix.iter().all(|r| r.len() == a.output.len()));
    let again: SentenceAttribution = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
    assert_eq!(a, again);
}

#[test]
fn single_token_has_all_the_importance() {
    let tmp = tempfile::tempdir().unwrap();
    let model = linear_checkpoint(tmp.path());
    let a = attribute_json(&model, "30", &["b"]);
    assert_eq!(a.importance, vec![1.0]);
}

#[test]
fn linear_checkpoint_is_exact_at_one_step() {
    let tmp = tempfile::tempdir().unwrap();
    let model = linear_checkpoint(tmp.path());
    let one = attribute_json(&model, "1", &["a", "c", "b"]);
    let many = attribute_json(&model, "300", &["a", "c", "b"]);
    assert_eq!(one.output, many.output);
    for (r1, r2) in one.matrix.iter().zip(&many.matrix) {
        for (x, y) in r1.iter().zip(r2) {
            assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }
    assert!(one.max_completeness_residual <= 1e-9);
}

#[test]
fn text_output_shows_importance_and_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let model = linear_checkpoint(tmp.path());
    let o = wordimp(&["attribute", "--model", model.to_str().unwrap(), "a", "b", "zzz"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("word importance") && text.contains("contribution matrix"), "{text}");
    assert!(stderr(&o).contains("UNK"));
}
