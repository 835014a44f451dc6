use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
min_count = 2
max_per_class = 8
[synth]
classes = 3
docs_per_class = 8
background_docs_per_class = 10
[han]
embed_dim = 8
word_hidden = 4
sent_hidden = 4
attn_dim = 4
epochs = 3
[skipgram]
epochs = 1
[paragraph]
epochs = 5
"#;

fn textclust(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textclust"))
        .current_dir(dir)
        .args(["--config", "tiny.toml", "--out-dir", "out"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = textclust(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

#[test]
fn subcommands_chain_end_to_end() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["synth", "--output", "corpus.tsv"]);
    ok(d, &["ingest", "--input", "corpus.tsv", "--fraction", "5"]);
    for f in ["corpus.jsonl", "vocab.json", "split.json"] {
        assert!(d.join("out").join(f).is_file(), "{f}");
    }
    ok(d, &["train-embeddings"]);
    ok(d, &["train-han"]);
    assert!(d.join("out/han.ckpt").is_file());
    ok(d, &["encode"]);
    ok(d, &["cluster", "--algorithm", "k-means,agglom"]);
    let assignment = d.join("out/run_k-means.csv");
    assert!(assignment.is_file());
    let scores = ok(d, &["evaluate", assignment.to_str().unwrap()]);
    assert!(scores.contains("k-means,"), "{scores}");
}

#[test]
fn experiment_writes_table_and_charts() {
    let dir = workspace();
    let d = dir.path();
    let stdout = ok(d, &["experiment", "--variation", "AS", "--fractions", "3,7", "--seed", "2"]);
    assert!(stdout.contains("AS3") && stdout.contains("AS7"), "{stdout}");
    for f in ["AS3_table.csv", "AS7_table.md", "AS3_avg_ev.svg", "AS_homogeneity_k-means.svg", "AS3_provenance.json"] {
        assert!(d.join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = workspace();
    std::fs::write(dir.path().join("tiny.toml"), "no_such_key = 1\n").unwrap();
    let out = textclust(dir.path(), &["experiment"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("config"), "{err}");
}

#[test]
fn errors_name_their_stage() {
    let dir = workspace();
    let out = textclust(dir.path(), &["ingest", "--input", "missing.tsv"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage `config`") && err.contains("missing.tsv"), "{err}");

    let out = textclust(dir.path(), &["train-han"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage `load`") && err.contains("corpus.jsonl"), "{err}");
}

#[test]
fn unknown_variation_is_rejected() {
    let dir = workspace();
    let out = textclust(dir.path(), &["experiment", "--variation", "XY3"]);
    assert!(!out.status.success());
}
