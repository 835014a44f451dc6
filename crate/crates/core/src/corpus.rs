//! Labeled text records and their hierarchical token representation.
//!
//! The flow is `load_records` → `filter_classes` → `stratified_split`, with
//! `build_vocabulary` and `tokenize_document` turning raw text into
//! sentence/word id lists.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{self, sha256_hex};

pub const PAD_ID: usize = 0;
pub const OOV_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    pub class_label: String,
    /// Columns not used by the pipeline (rating, date, ...).
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

/// Column names for a tabular dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub text_col: String,
    pub label_col: String,
    /// When absent, the 1-based data row number becomes the record id.
    pub id_col: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            text_col: "review".into(),
            label_col: "condition".into(),
            id_col: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedRow {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedRecords {
    pub records: Vec<RawRecord>,
    /// Rows dropped because the text or label cell was empty.
    pub dropped_empty: usize,
    pub malformed: Vec<MalformedRow>,
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => b',',
        _ => b'\t',
    }
}

/// Reads a TSV (or `.csv`) file with a header row.
pub fn load_records(path: &Path, schema: &Schema) -> Result<LoadedRecords> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path))
        .flexible(true)
        .has_headers(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let text_idx = find(&schema.text_col)?;
    let label_idx = find(&schema.label_col)?;
    let id_idx = schema.id_col.as_deref().map(find).transpose()?;

    let mut out = LoadedRecords::default();
    let mut seen = HashSet::new();
    for (row_no, row) in reader.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.malformed.push(MalformedRow {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(row_no as u64 + 2);
        if row.len() != headers.len() {
            out.malformed.push(MalformedRow {
                line,
                message: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
            continue;
        }
        let text = row[text_idx].to_string();
        let label = row[label_idx].trim().to_string();
        if text.trim().is_empty() || label.is_empty() {
            out.dropped_empty += 1;
            continue;
        }
        let id = match id_idx {
            Some(i) => row[i].trim().to_string(),
            None => (row_no + 1).to_string(),
        };
        if !seen.insert(id.clone()) {
            out.malformed.push(MalformedRow {
                line,
                message: format!("duplicate id `{id}`"),
            });
            continue;
        }
        let extra = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != text_idx && *i != label_idx && Some(*i) != id_idx)
            .map(|(i, h)| (h.to_string(), row[i].to_string()))
            .collect();
        out.records.push(RawRecord {
            id,
            text,
            class_label: label,
            extra,
        });
    }
    for m in &out.malformed {
        log::warn!("{}: line {}: {}", path.display(), m.line, m.message);
    }
    Ok(out)
}

/// Writes records as a TSV with `id`, text and label columns.
pub fn write_records(path: &Path, records: &[RawRecord], schema: &Schema) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter_for(path))
        .from_writer(Vec::new());
    let id_col = schema.id_col.clone().unwrap_or_else(|| "id".into());
    w.write_record([id_col.as_str(), &schema.text_col, &schema.label_col])?;
    for r in records {
        w.write_record([&r.id, &r.text, &r.class_label])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv flush: {e}")))?;
    util::write_atomic(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilteredCorpus {
    /// Retained records in their original file order.
    pub records: Vec<RawRecord>,
    pub class_counts: BTreeMap<String, usize>,
}

impl FilteredCorpus {
    /// Dense 0-based class ids, assigned by sorted label string.
    pub fn class_index(&self) -> ClassIndex {
        ClassIndex {
            labels: self.class_counts.keys().cloned().collect(),
        }
    }
}

/// Keeps classes with at least `min_count` records and subsamples any class
/// above `max_per_class` uniformly without replacement.
pub fn filter_classes(
    records: &[RawRecord],
    min_count: usize,
    max_per_class: usize,
    seed: u64,
) -> Result<FilteredCorpus> {
    if min_count == 0 || max_per_class < min_count {
        return Err(Error::invalid(format!(
            "need 1 <= min_count <= max_per_class, got {min_count} and {max_per_class}"
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_class.entry(r.class_label.as_str()).or_default().push(i);
    }
    let mut rng = util::rng(seed);
    let mut keep = Vec::new();
    let mut class_counts = BTreeMap::new();
    for (label, mut idx) in by_class {
        if idx.len() < min_count {
            continue;
        }
        if idx.len() > max_per_class {
            idx.shuffle(&mut rng);
            idx.truncate(max_per_class);
        }
        class_counts.insert(label.to_string(), idx.len());
        keep.extend(idx);
    }
    if keep.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    keep.sort_unstable();
    Ok(FilteredCorpus {
        records: keep.into_iter().map(|i| records[i].clone()).collect(),
        class_counts,
    })
}

/// Indices into [`FilteredCorpus::records`], each half sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPair {
    pub training: Vec<usize>,
    pub clustering: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub split: SplitPair,
    /// Classes with a single record; that record went to the clustering half.
    pub singleton_classes: Vec<String>,
}

/// Number of training records for a class of `count` at `ratio`:
/// `round(ratio·count)` with halves going to training.
pub fn training_share(count: usize, ratio: f64) -> usize {
    if count <= 1 {
        return 0;
    }
    ((ratio * count as f64).round() as usize).min(count)
}

pub fn stratified_split(corpus: &FilteredCorpus, ratio: f64, seed: u64) -> Result<SplitOutcome> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in corpus.records.iter().enumerate() {
        by_class.entry(r.class_label.as_str()).or_default().push(i);
    }
    let mut rng = util::rng(seed);
    let mut training = Vec::new();
    let mut clustering = Vec::new();
    let mut singleton_classes = Vec::new();
    for (label, mut idx) in by_class {
        if idx.len() == 1 {
            log::warn!("class `{label}` has a single record; it goes to the clustering split");
            singleton_classes.push(label.to_string());
        }
        idx.shuffle(&mut rng);
        let cut = training_share(idx.len(), ratio);
        training.extend_from_slice(&idx[..cut]);
        clustering.extend_from_slice(&idx[cut..]);
    }
    training.sort_unstable();
    clustering.sort_unstable();
    Ok(SplitOutcome {
        split: SplitPair {
            training,
            clustering,
        },
        singleton_classes,
    })
}

/// Label string ↔ dense class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassIndex {
    pub labels: Vec<String>,
}

impl ClassIndex {
    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Splits text into sentences of normalized words.
///
/// Sentences end at runs of `.`, `!` or `?` followed by whitespace or end of
/// text (so "3.5" stays one token). Words are whitespace-separated, lowercased
/// and stripped of non-alphanumeric edge characters; empty words and empty
/// sentences vanish.
pub fn segment(text: &str) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            while let Some(&n) = chars.peek() {
                if matches!(n, '.' | '!' | '?') {
                    current.push(n);
                    chars.next();
                } else {
                    break;
                }
            }
            if chars.peek().map_or(true, |n| n.is_whitespace()) {
                sentences.push(std::mem::take(&mut current));
            }
        }
    }
    sentences.push(current);
    sentences
        .iter()
        .map(|s| words(s))
        .filter(|w| !w.is_empty())
        .collect()
}

fn words(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    frequencies: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    pub min_freq: u64,
}

impl Vocabulary {
    /// Ids are assigned by descending frequency, ties by token string; ids 0
    /// and 1 are reserved for padding and out-of-vocabulary tokens.
    pub fn build<'a, I, S>(documents: I, min_freq: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        if min_freq == 0 {
            return Err(Error::invalid("min_freq must be at least 1"));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        let mut total = 0usize;
        for doc in documents {
            for tok in doc {
                *counts.entry(tok.as_ref()).or_default() += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
        }
        let mut entries: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_freq && t != PAD_TOKEN && t != OOV_TOKEN)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens = vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()];
        let mut frequencies = vec![0, 0];
        for (t, c) in entries {
            tokens.push(t.to_string());
            frequencies.push(c);
        }
        Ok(Self::from_parts(tokens, frequencies, min_freq))
    }

    fn from_parts(tokens: Vec<String>, frequencies: Vec<u64>, min_freq: u64) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            frequencies,
            index,
            min_freq,
        }
    }

    /// Builds from raw texts using the standard segmentation.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: u64) -> Result<Self> {
        let flat: Vec<Vec<String>> = texts
            .into_iter()
            .map(|t| segment(t).into_iter().flatten().collect())
            .collect();
        Self::build(flat.iter().map(|d| d.as_slice()), min_freq)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn frequency(&self, id: usize) -> u64 {
        self.frequencies.get(id).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Fingerprint of the id ↔ token assignment.
    pub fn hash(&self) -> u64 {
        let joined = self.tokens.join("\n");
        let hex = sha256_hex(joined.as_bytes());
        u64::from_str_radix(&hex[..16], 16).expect("hex digest")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let v: Vocabulary = serde_json::from_slice(&bytes)?;
        if v.tokens.len() != v.frequencies.len()
            || v.tokens.first().map(String::as_str) != Some(PAD_TOKEN)
            || v.tokens.get(1).map(String::as_str) != Some(OOV_TOKEN)
        {
            return Err(Error::invalid(format!("{}: malformed vocabulary", path.display())));
        }
        Ok(Self::from_parts(v.tokens, v.frequencies, v.min_freq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLimits {
    pub max_sentences: usize,
    pub max_words: usize,
}

impl Default for TokenLimits {
    fn default() -> Self {
        TokenLimits {
            max_sentences: 30,
            max_words: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub id: String,
    #[serde(rename = "label_id")]
    pub label: Option<usize>,
    pub sentences: Vec<Vec<usize>>,
}

impl TokenizedDocument {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.sentences.is_empty() || self.sentences.iter().any(Vec::is_empty) {
            return Err(Error::invalid(format!("document `{}` has an empty sentence list or sentence", self.id)));
        }
        if let Some(&bad) = self.sentences.iter().flatten().find(|&&t| t >= vocab_size) {
            return Err(Error::invalid(format!(
                "document `{}` has token id {bad} outside vocabulary of {vocab_size}",
                self.id
            )));
        }
        Ok(())
    }
}

pub fn tokenize_document(text: &str, vocab: &Vocabulary, limits: TokenLimits) -> Result<TokenizedDocument> {
    if limits.max_sentences == 0 || limits.max_words == 0 {
        return Err(Error::invalid("token limits must be at least 1"));
    }
    let mut sentences: Vec<Vec<usize>> = segment(text)
        .into_iter()
        .take(limits.max_sentences)
        .map(|s| s.iter().take(limits.max_words).map(|w| vocab.id(w)).collect())
        .collect();
    if sentences.is_empty() {
        sentences.push(vec![OOV_ID]);
    }
    Ok(TokenizedDocument {
        id: String::new(),
        label: None,
        sentences,
    })
}

/// Maps ids back to tokens; inverse of [`tokenize_document`] on in-vocabulary text.
pub fn detokenize(doc: &TokenizedDocument, vocab: &Vocabulary) -> Vec<Vec<String>> {
    doc.sentences
        .iter()
        .map(|s| {
            s.iter()
                .map(|&t| vocab.token(t).unwrap_or(OOV_TOKEN).to_string())
                .collect()
        })
        .collect()
}

/// Tokenizes every record of a filtered corpus with dense class ids.
pub fn tokenize_corpus(
    corpus: &FilteredCorpus,
    vocab: &Vocabulary,
    limits: TokenLimits,
) -> Result<Vec<TokenizedDocument>> {
    let classes = corpus.class_index();
    corpus
        .records
        .iter()
        .map(|r| {
            let mut doc = tokenize_document(&r.text, vocab, limits)?;
            doc.id = r.id.clone();
            doc.label = classes.id(&r.class_label);
            Ok(doc)
        })
        .collect()
}

pub fn write_jsonl(path: &Path, docs: &[TokenizedDocument]) -> Result<()> {
    let mut buf = Vec::new();
    for d in docs {
        serde_json::to_writer(&mut buf, d)?;
        buf.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    util::write_atomic(path, &buf)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TokenizedDocument>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(&line).map_err(|e| Error::Parse {
            location: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}
