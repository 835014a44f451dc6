use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::json;

use super::config::{ExperimentConfig, Family, VariationSpec};
use super::synth;
use super::table::{render, Provenance, ResultTable, TableFormat};
use crate::baseline::{train_doc_vectors, ParagraphVectorConfig};
use crate::clustering::{self, Algorithm, ClusterAssignment, PointSet};
use crate::corpus::{
    filter_classes, load_records, stratified_split, tokenize_corpus, FilteredCorpus, RawRecord, SplitPair,
    TokenizedDocument, Vocabulary,
};
use crate::embeddings::{load_pretrained, train_skipgram, EmbeddingMatrix, SkipgramConfig};
use crate::error::{Error, Result, StageExt};
use crate::han::{self, DocumentVector, EmbeddingMode, HanConfig, HanParams, TrainingHistory};
use crate::metrics::MetricReport;
use crate::util::{self, derive_seed};

/// Filtered, tokenized corpus shared by every variation of one seed.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub corpus: FilteredCorpus,
    pub vocab: Vocabulary,
    /// One per record of `corpus`, labels set.
    pub docs: Vec<TokenizedDocument>,
}

impl PreparedCorpus {
    pub fn classes(&self) -> usize {
        self.corpus.class_counts.len()
    }
}

/// Everything a variation produced; `table` is the part that gets compared.
#[derive(Debug, Clone)]
pub struct VariationRun {
    pub table: ResultTable,
    pub vectors: Vec<DocumentVector>,
    pub assignments: Vec<(Algorithm, ClusterAssignment)>,
    pub history: Option<TrainingHistory>,
    pub model: Option<HanParams>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn load_corpus_records(cfg: &ExperimentConfig) -> Result<Vec<RawRecord>> {
    match &cfg.dataset {
        Some(path) => {
            let loaded = load_records(path, &cfg.schema)?;
            if loaded.dropped_empty > 0 || !loaded.malformed.is_empty() {
                log::warn!(
                    "{}: dropped {} empty rows, skipped {} malformed rows",
                    path.display(),
                    loaded.dropped_empty,
                    loaded.malformed.len()
                );
            }
            Ok(loaded.records)
        }
        None => synth::generate(&cfg.synth),
    }
}

pub fn prepare_corpus(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedCorpus> {
    let records = load_corpus_records(cfg).stage("load")?;
    let corpus = filter_classes(&records, cfg.min_count, cfg.max_per_class, derive_seed(seed, "filter")).stage("filter")?;
    let vocab = Vocabulary::from_texts(corpus.records.iter().map(|r| r.text.as_str()), cfg.min_freq).stage("vocabulary")?;
    let docs = tokenize_corpus(&corpus, &vocab, cfg.limits).stage("tokenize")?;
    Ok(PreparedCorpus { corpus, vocab, docs })
}

/// Split at the variation's fraction; the clustering half must not share a
/// single record id with the training half.
pub fn split_for(prepared: &PreparedCorpus, fraction: f64, seed: u64) -> Result<SplitPair> {
    let outcome = stratified_split(&prepared.corpus, fraction, derive_seed(seed, "split"))?;
    let split = outcome.split;
    let train_ids: HashSet<&str> = split.training.iter().map(|&i| prepared.corpus.records[i].id.as_str()).collect();
    if let Some(&i) = split.clustering.iter().find(|&&i| train_ids.contains(prepared.corpus.records[i].id.as_str())) {
        return Err(Error::invalid(format!(
            "record id `{}` is in both the training and the clustering split",
            prepared.corpus.records[i].id
        )));
    }
    if split.training.is_empty() || split.clustering.is_empty() {
        return Err(Error::invalid(format!(
            "fraction {fraction} leaves an empty half ({} training, {} clustering)",
            split.training.len(),
            split.clustering.len()
        )));
    }
    Ok(split)
}

/// Clustering-half documents with labels stripped, and the hidden truth.
fn hide_labels(prepared: &PreparedCorpus, split: &SplitPair) -> (Vec<TokenizedDocument>, Vec<i64>) {
    split
        .clustering
        .iter()
        .map(|&i| {
            let d = &prepared.docs[i];
            let truth = d.label.map_or(-1, |l| l as i64);
            (
                TokenizedDocument {
                    label: None,
                    ..d.clone()
                },
                truth,
            )
        })
        .unzip()
}

/// Skip-gram vectors over every filtered text (no labels involved).
pub fn self_trained_embeddings(
    cfg: &ExperimentConfig,
    docs: &[TokenizedDocument],
    vocab: &Vocabulary,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    let sg = SkipgramConfig {
        dim: cfg.han.embed_dim,
        seed: derive_seed(seed, "skipgram"),
        ..cfg.skipgram.clone()
    };
    Ok(train_skipgram(docs, vocab.len(), vocab.hash(), &sg)?.embeddings)
}

/// The configured pretrained file, or for the synthetic corpus a file of
/// vectors trained on an independent background corpus (cached in
/// `out_dir`).
pub fn pretrained_path(cfg: &ExperimentConfig) -> Result<PathBuf> {
    if let Some(p) = &cfg.pretrained {
        return Ok(p.clone());
    }
    if cfg.dataset.is_some() {
        return Err(Error::invalid("AP variations need `pretrained` when a dataset is given"));
    }
    let sg = SkipgramConfig {
        dim: cfg.han.embed_dim,
        seed: derive_seed(cfg.synth.lexicon_seed, "background-skipgram"),
        ..cfg.skipgram.clone()
    };
    let key = util::sha256_hex(&serde_json::to_vec(&(&cfg.synth, &sg))?);
    let path = cfg.out_dir.join(format!("background_vectors_{}.txt", &key[..12]));
    if !path.is_file() {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
        let background = derive_seed(cfg.synth.lexicon_seed, "background-corpus");
        synth::write_pretrained_vectors(&cfg.synth, background, &sg, &path)?;
    }
    Ok(path)
}

fn cluster_all(
    cfg: &ExperimentConfig,
    points: &PointSet,
    truth: &[i64],
    seed: u64,
) -> Result<Vec<(Algorithm, ClusterAssignment, MetricReport)>> {
    let k = truth.iter().collect::<BTreeSet<_>>().len();
    Algorithm::ALL
        .par_iter()
        .map(|&alg| {
            let a = clustering::run(alg, points, k, &cfg.clustering, derive_seed(seed, alg.name()))
                .stage(alg.name())?;
            let r = MetricReport::evaluate(points, truth, &a.labels).stage("evaluate")?;
            Ok((alg, a, r))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &VariationSpec,
    cfg: &ExperimentConfig,
    started: u64,
    split: &SplitPair,
    prepared: &PreparedCorpus,
    vectors: Vec<DocumentVector>,
    truth: &[i64],
    mut notes: Vec<String>,
) -> Result<(ResultTable, Vec<DocumentVector>, Vec<(Algorithm, ClusterAssignment)>)> {
    let points = PointSet::from_vectors(&vectors).stage("cluster")?;
    let results = cluster_all(cfg, &points, truth, spec.seed)?;
    for (alg, a, _) in &results {
        notes.extend(a.diagnostics.notes.iter().map(|n| format!("{alg}: {n}")));
        if !a.diagnostics.converged {
            notes.push(format!("{alg}: did not converge"));
        }
    }
    let table = ResultTable {
        code: spec.code(),
        rows: results.iter().map(|(alg, _, r)| (*alg, r.clone())).collect(),
        provenance: Provenance {
            config_hash: cfg.hash()?,
            seed: spec.seed,
            started_unix: started,
            finished_unix: unix_now(),
            training_docs: split.training.len(),
            clustering_docs: split.clustering.len(),
            vocab_size: prepared.vocab.len(),
            k: truth.iter().collect::<BTreeSet<_>>().len(),
            notes,
        },
    };
    let assignments = results.into_iter().map(|(alg, a, _)| (alg, a)).collect();
    Ok((table, vectors, assignments))
}

/// Runs one AS/AP variation end to end on an already prepared corpus.
pub fn run_variation_prepared(spec: &VariationSpec, cfg: &ExperimentConfig, prepared: &PreparedCorpus) -> Result<VariationRun> {
    if spec.family == Family::PLAIN {
        return run_plain_prepared(spec.seed, cfg, prepared);
    }
    let started = unix_now();
    let seed = spec.seed;
    let split = split_for(prepared, spec.fraction(), seed).stage("split")?;
    let mut notes = Vec::new();
    let (embeddings, mode) = match spec.family {
        Family::AS => (
            self_trained_embeddings(cfg, &prepared.docs, &prepared.vocab, seed).stage("embeddings")?,
            EmbeddingMode::SelfTrained,
        ),
        _ => {
            let path = pretrained_path(cfg).stage("embeddings")?;
            let (m, report) = load_pretrained(&path, &prepared.vocab, cfg.han.embed_dim, derive_seed(seed, "pretrained"))
                .stage("embeddings")?;
            notes.push(format!("pretrained coverage {:.3}", report.coverage));
            (m, EmbeddingMode::Pretrained)
        }
    };
    let han_cfg = HanConfig {
        embedding_mode: mode,
        classes: prepared.classes(),
        seed: derive_seed(seed, "han"),
        ..cfg.han.clone()
    };
    let training: Vec<TokenizedDocument> = split.training.iter().map(|&i| prepared.docs[i].clone()).collect();
    let (model, history) = han::train(&han_cfg, &training, embeddings).stage("train-han")?;
    if let Some(acc) = history.accuracy.last() {
        notes.push(format!("final training accuracy {acc:.3}"));
    }
    let (hidden, truth) = hide_labels(prepared, &split);
    let vectors = han::encode_corpus(&model, &hidden).stage("encode")?;
    let (table, vectors, assignments) = finish(spec, cfg, started, &split, prepared, vectors, &truth, notes)?;
    Ok(VariationRun {
        table,
        vectors,
        assignments,
        history: Some(history),
        model: Some(model),
    })
}

/// Paragraph-vector baseline on the even split: vectors are learned for the
/// training half and inferred for the clustering half.
pub fn run_plain_prepared(seed: u64, cfg: &ExperimentConfig, prepared: &PreparedCorpus) -> Result<VariationRun> {
    let started = unix_now();
    let spec = VariationSpec::new(Family::PLAIN, None, seed)?;
    let split = split_for(prepared, spec.fraction(), seed).stage("split")?;
    let pv = ParagraphVectorConfig {
        seed: derive_seed(seed, "paragraph"),
        ..cfg.paragraph.clone()
    };
    let dim = pv.dim.unwrap_or(cfg.han.doc_dim());
    let training: Vec<TokenizedDocument> = split.training.iter().map(|&i| prepared.docs[i].clone()).collect();
    let model = train_doc_vectors(&training, prepared.vocab.len(), dim, &pv).stage("paragraph-vectors")?;
    let (hidden, truth) = hide_labels(prepared, &split);
    let vectors = hidden
        .par_iter()
        .map(|d| model.infer(d))
        .collect::<Result<Vec<_>>>()
        .stage("encode")?;
    let (table, vectors, assignments) = finish(&spec, cfg, started, &split, prepared, vectors, &truth, Vec::new())?;
    Ok(VariationRun {
        table,
        vectors,
        assignments,
        history: None,
        model: None,
    })
}

pub fn run_variation(spec: &VariationSpec, cfg: &ExperimentConfig) -> Result<VariationRun> {
    cfg.validate().stage("config")?;
    let prepared = prepare_corpus(cfg, spec.seed)?;
    run_variation_prepared(spec, cfg, &prepared)
}

pub fn run_plain(cfg: &ExperimentConfig, seed: u64) -> Result<VariationRun> {
    cfg.validate().stage("config")?;
    let prepared = prepare_corpus(cfg, seed)?;
    run_plain_prepared(seed, cfg, &prepared)
}

/// Table paths for a variation code inside `dir`.
pub fn table_path(dir: &Path, code: &str, format: TableFormat) -> PathBuf {
    dir.join(match format {
        TableFormat::Csv => format!("{code}_table.csv"),
        TableFormat::Markdown => format!("{code}_table.md"),
    })
}

/// Writes every artifact of a run under `dir`:
/// `<code>_<algorithm>.csv` (assignments), `<code>_<algorithm>.json`
/// (diagnostics + metrics), `<code>_vectors.csv`, `<code>_table.{csv,md}`,
/// `<code>_provenance.json`, and for attention runs `<code>_han.ckpt`.
pub fn write_run(run: &VariationRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let code = &run.table.code;
    let ids: Vec<String> = run.vectors.iter().map(|v| v.doc_id.clone()).collect();
    for ((alg, a), (_, report)) in run.assignments.iter().zip(&run.table.rows) {
        util::write_atomic(&dir.join(format!("{code}_{alg}.csv")), &a.to_csv(Some(&ids))?)?;
        let detail = json!({ "diagnostics": a.diagnostics, "metrics": report });
        util::write_atomic(&dir.join(format!("{code}_{alg}.json")), &serde_json::to_vec_pretty(&detail)?)?;
    }
    han::write_vectors_csv(&dir.join(format!("{code}_vectors.csv")), &run.vectors)?;
    for format in [TableFormat::Csv, TableFormat::Markdown] {
        util::write_atomic(&table_path(dir, code, format), render(&run.table, format).as_bytes())?;
    }
    let prov = json!({
        "variation": code,
        "provenance": run.table.provenance,
        "training_loss": run.history.as_ref().map(|h| &h.loss),
        "training_accuracy": run.history.as_ref().map(|h| &h.accuracy),
    });
    util::write_atomic(&dir.join(format!("{code}_provenance.json")), &serde_json::to_vec_pretty(&prov)?)?;
    if let Some(model) = &run.model {
        han::save_checkpoint(model, &dir.join(format!("{code}_han.ckpt")))?;
    }
    Ok(())
}
