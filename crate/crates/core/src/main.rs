use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use attnclust::clustering::{self, estimate_k_sqrt, read_assignment_csv, Algorithm, PointSet};
use attnclust::corpus::{read_jsonl, write_jsonl, write_records, SplitPair, TokenizedDocument, Vocabulary};
use attnclust::embeddings::{load_pretrained, EmbeddingMatrix};
use attnclust::error::{Error, Result, StageExt};
use attnclust::han::{self, EmbeddingMode, HanConfig};
use attnclust::harness::{self, pipeline, synth, ExperimentConfig, Family, TableFormat, VariationSpec};
use attnclust::metrics::MetricReport;
use attnclust::util;

#[derive(Parser)]
#[command(name = "textclust", version, about = "Attention-based text clustering experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    text_col: Option<String>,
    #[arg(long, global = true)]
    label_col: Option<String>,
    /// Debug logging (RUST_LOG also works).
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic labeled corpus as TSV.
    Synth {
        #[arg(long)]
        output: PathBuf,
        /// Also write background word vectors for AP runs.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Filter and tokenize a corpus; writes corpus.jsonl, vocab.json and
    /// split.json (training fraction n/10) to the output directory.
    Ingest {
        /// Overrides `dataset` from the config.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        fraction: u8,
    },
    /// Self-train skip-gram vectors, or load pretrained ones, for an ingested corpus.
    TrainEmbeddings {
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Train the attention network on the training half.
    TrainHan,
    /// Encode the clustering half (or every document) into vectors.csv.
    Encode {
        #[arg(long)]
        all: bool,
    },
    /// Cluster vectors.csv; writes `<name>_<algorithm>.csv`.
    Cluster {
        #[arg(long, default_value = "all")]
        algorithm: String,
        /// Cluster count for algorithms that take one; defaults to the
        /// number of classes in the clustering half, else round(√n).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        name: String,
    },
    /// Score assignment CSVs against the ingested labels.
    Evaluate {
        #[arg(required = true)]
        assignments: Vec<PathBuf>,
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Run variations end to end: tables, charts and every artifact.
    Experiment {
        /// Comma-separated codes: AS2, AP9, PLAIN, or a bare AS/AP family
        /// expanded over --fractions.
        #[arg(long, default_value = "AS5")]
        variation: String,
        #[arg(long, default_value = "1..9")]
        fractions: String,
    },
}

fn config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(d) = &g.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(c) = &g.text_col {
        cfg.schema.text_col = c.clone();
    }
    if let Some(c) = &g.label_col {
        cfg.schema.label_col = c.clone();
    }
    Ok(cfg)
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    fraction: f64,
    classes: Vec<String>,
    split: SplitPair,
}

struct Ingested {
    docs: Vec<TokenizedDocument>,
    vocab: Vocabulary,
    split: SplitFile,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn load_ingested(dir: &Path) -> Result<Ingested> {
    Ok(Ingested {
        docs: read_jsonl(&dir.join("corpus.jsonl"))?,
        vocab: Vocabulary::load(&dir.join("vocab.json"))?,
        split: read_json(&dir.join("split.json"))?,
    })
}

fn pick(docs: &[TokenizedDocument], idx: &[usize]) -> Vec<TokenizedDocument> {
    idx.iter().map(|&i| docs[i].clone()).collect()
}

fn ingest(cfg: &ExperimentConfig, input: Option<PathBuf>, fraction: u8) -> Result<()> {
    let mut cfg = cfg.clone();
    if input.is_some() {
        cfg.dataset = input;
    }
    cfg.validate().stage("config")?;
    let spec = VariationSpec::new(Family::AS, Some(fraction), cfg.seed).stage("config")?;
    let prepared = pipeline::prepare_corpus(&cfg, cfg.seed)?;
    let split = pipeline::split_for(&prepared, spec.fraction(), cfg.seed).stage("split")?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join("corpus.jsonl"), &prepared.docs)?;
    prepared.vocab.save(&dir.join("vocab.json"))?;
    let file = SplitFile {
        fraction: spec.fraction(),
        classes: prepared.corpus.class_index().labels,
        split,
    };
    util::write_atomic(&dir.join("split.json"), &serde_json::to_vec_pretty(&file)?)?;
    println!(
        "{} documents, {} classes, vocabulary {}, {} training / {} clustering",
        prepared.docs.len(),
        file.classes.len(),
        prepared.vocab.len(),
        file.split.training.len(),
        file.split.clustering.len()
    );
    Ok(())
}

fn train_embeddings(cfg: &ExperimentConfig, pretrained: Option<PathBuf>) -> Result<()> {
    let ing = load_ingested(&cfg.out_dir).stage("load")?;
    let (emb, mode) = match pretrained.or_else(|| cfg.pretrained.clone()) {
        Some(path) => {
            let (m, report) = load_pretrained(&path, &ing.vocab, cfg.han.embed_dim, cfg.seed)?;
            println!("pretrained coverage {:.3} ({} found, {} missing)", report.coverage, report.found, report.missing);
            (m, EmbeddingMode::Pretrained)
        }
        None => (
            pipeline::self_trained_embeddings(cfg, &ing.docs, &ing.vocab, cfg.seed)?,
            EmbeddingMode::SelfTrained,
        ),
    };
    emb.save_json(&cfg.out_dir.join("embeddings.json"))?;
    emb.save_text(&cfg.out_dir.join("embeddings.txt"), &ing.vocab)?;
    util::write_atomic(&cfg.out_dir.join("embedding_mode.json"), &serde_json::to_vec(&mode)?)?;
    Ok(())
}

fn train_han(cfg: &ExperimentConfig) -> Result<()> {
    let dir = &cfg.out_dir;
    let ing = load_ingested(dir).stage("load")?;
    let emb = EmbeddingMatrix::load_json(&dir.join("embeddings.json")).stage("load")?;
    let mode: EmbeddingMode = read_json(&dir.join("embedding_mode.json")).unwrap_or(EmbeddingMode::SelfTrained);
    let han_cfg = HanConfig {
        embedding_mode: mode,
        classes: ing.split.classes.len(),
        seed: util::derive_seed(cfg.seed, "han"),
        ..cfg.han.clone()
    };
    let training = pick(&ing.docs, &ing.split.split.training);
    let (model, history) = han::train(&han_cfg, &training, emb)?;
    han::save_checkpoint(&model, &dir.join("han.ckpt"))?;
    util::write_atomic(&dir.join("han_history.json"), &serde_json::to_vec_pretty(&history)?)?;
    println!(
        "trained on {} documents; final loss {:.4}, accuracy {:.3}",
        training.len(),
        history.loss.last().copied().unwrap_or(f64::NAN),
        history.accuracy.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn encode(cfg: &ExperimentConfig, all: bool) -> Result<()> {
    let dir = &cfg.out_dir;
    let ing = load_ingested(dir).stage("load")?;
    let model = han::load_checkpoint(&dir.join("han.ckpt"), Some(ing.vocab.hash())).stage("load")?;
    let docs: Vec<TokenizedDocument> = if all {
        ing.docs
    } else {
        pick(&ing.docs, &ing.split.split.clustering)
    }
    .into_iter()
    .map(|d| TokenizedDocument { label: None, ..d })
    .collect();
    let vectors = han::encode_corpus(&model, &docs)?;
    han::write_vectors_csv(&dir.join("vectors.csv"), &vectors)?;
    han::write_vectors_jsonl(&dir.join("vectors.jsonl"), &vectors)?;
    println!("{} vectors of dimension {}", vectors.len(), model.config.doc_dim());
    Ok(())
}

fn truth_by_id(dir: &Path) -> Result<HashMap<String, i64>> {
    let docs = read_jsonl(&dir.join("corpus.jsonl"))?;
    Ok(docs.into_iter().map(|d| (d.id, d.label.map_or(-1, |l| l as i64))).collect())
}

fn cluster(cfg: &ExperimentConfig, algorithm: &str, k: Option<usize>, vectors: Option<PathBuf>, name: &str) -> Result<()> {
    let dir = &cfg.out_dir;
    let vectors = han::read_vectors_csv(&vectors.unwrap_or_else(|| dir.join("vectors.csv"))).stage("load")?;
    let points = PointSet::from_vectors(&vectors)?;
    let algs: Vec<Algorithm> = if algorithm.eq_ignore_ascii_case("all") {
        Algorithm::ALL.to_vec()
    } else {
        algorithm.split(',').map(str::parse).collect::<Result<_>>()?
    };
    let k = match k {
        Some(k) => k,
        None => match truth_by_id(dir) {
            Ok(truth) => {
                let mut classes: Vec<i64> = vectors.iter().filter_map(|v| truth.get(&v.doc_id).copied()).collect();
                classes.sort_unstable();
                classes.dedup();
                if classes.is_empty() {
                    estimate_k_sqrt(points.len())
                } else {
                    classes.len()
                }
            }
            Err(_) => estimate_k_sqrt(points.len()),
        },
    };
    let ids: Vec<String> = vectors.iter().map(|v| v.doc_id.clone()).collect();
    for alg in algs {
        let a = clustering::run(alg, &points, k, &cfg.clustering, util::derive_seed(cfg.seed, alg.name())).stage(alg.name())?;
        util::write_atomic(&dir.join(format!("{name}_{alg}.csv")), &a.to_csv(Some(&ids))?)?;
        util::write_atomic(&dir.join(format!("{name}_{alg}.json")), &serde_json::to_vec_pretty(&a.diagnostics)?)?;
        println!("{alg}: {} clusters, {} noise", a.k_found, a.noise_count());
    }
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig, files: &[PathBuf], vectors: Option<PathBuf>) -> Result<()> {
    let dir = &cfg.out_dir;
    let truth = truth_by_id(dir).stage("load")?;
    let vectors = han::read_vectors_csv(&vectors.unwrap_or_else(|| dir.join("vectors.csv"))).stage("load")?;
    let by_id: HashMap<&str, &[f64]> = vectors.iter().map(|v| (v.doc_id.as_str(), v.values.as_slice())).collect();
    println!("{}", harness::table::HEADER.join(","));
    for f in files {
        let rows = read_assignment_csv(f).stage("load")?;
        let mut labels_true = Vec::with_capacity(rows.len());
        let mut labels_pred = Vec::with_capacity(rows.len());
        let mut points = Vec::with_capacity(rows.len());
        for (id, label) in &rows {
            let t = truth.get(id).ok_or_else(|| Error::invalid(format!("{}: unknown doc id `{id}`", f.display())))?;
            let v = by_id.get(id.as_str()).ok_or_else(|| Error::invalid(format!("no vector for doc id `{id}`")))?;
            labels_true.push(*t);
            labels_pred.push(*label);
            points.push(v.to_vec());
        }
        let r = MetricReport::evaluate(&PointSet::from_rows(&points)?, &labels_true, &labels_pred)?;
        let stem = f.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let cells = [r.homo, r.comp, r.v_measure, r.ari, r.ami];
        let mut line: Vec<String> = std::iter::once(stem).chain(cells.iter().map(|&x| harness::table::fmt3(x))).collect();
        line.push(r.silhouette.map_or_else(|| harness::table::ABSENT.into(), harness::table::fmt3));
        line.push(harness::table::fmt3(r.avg_ev));
        println!("{}", line.join(","));
    }
    Ok(())
}

fn experiment(cfg: &ExperimentConfig, variation: &str, fractions: &str) -> Result<()> {
    let mut specs = Vec::new();
    for code in variation.split(',').map(str::trim) {
        match code.to_ascii_uppercase().as_str() {
            "AS" | "AP" => {
                let family = if code.eq_ignore_ascii_case("AS") { Family::AS } else { Family::AP };
                for n in harness::parse_fractions(fractions)? {
                    specs.push(VariationSpec::new(family, Some(n), cfg.seed)?);
                }
            }
            _ => specs.push(VariationSpec::parse(code, cfg.seed)?),
        }
    }
    let tables = harness::run_experiment(cfg, &specs)?;
    for t in &tables {
        println!("{}\n{}", t.code, harness::render(t, TableFormat::Markdown));
    }
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli.global).stage("config")?;
    match cli.command {
        Command::Synth { output, vectors } => {
            let records = synth::generate(&cfg.synth).stage("synth")?;
            write_records(&output, &records, &cfg.schema).stage("synth")?;
            if let Some(v) = vectors {
                let sg = attnclust::embeddings::SkipgramConfig {
                    dim: cfg.han.embed_dim,
                    ..cfg.skipgram.clone()
                };
                synth::write_pretrained_vectors(&cfg.synth, util::derive_seed(cfg.synth.seed, "background-corpus"), &sg, &v)
                    .stage("synth")?;
            }
            println!("{} records written to {}", records.len(), output.display());
            Ok(())
        }
        Command::Ingest { input, fraction } => ingest(&cfg, input, fraction).stage("ingest"),
        Command::TrainEmbeddings { pretrained } => train_embeddings(&cfg, pretrained).stage("train-embeddings"),
        Command::TrainHan => train_han(&cfg).stage("train-han"),
        Command::Encode { all } => encode(&cfg, all).stage("encode"),
        Command::Cluster {
            algorithm,
            k,
            vectors,
            name,
        } => cluster(&cfg, &algorithm, k, vectors, &name).stage("cluster"),
        Command::Evaluate { assignments, vectors } => evaluate(&cfg, &assignments, vectors).stage("evaluate"),
        Command::Experiment { variation, fractions } => experiment(&cfg, &variation, &fractions).stage("experiment"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                msg.push_str(&format!("\n  caused by: {s}"));
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
