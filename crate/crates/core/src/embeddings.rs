//! Word-vector tables: random, skip-gram trained on the corpus, or loaded
//! from a pretrained text file.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenizedDocument, Vocabulary, OOV_ID, PAD_ID};
use crate::error::{Error, Result};
use crate::util::{self, dot, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub dim: usize,
    pub vocab_hash: u64,
    /// `vocab_size × dim`, row-major.
    rows: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_rows(dim: usize, vocab_hash: u64, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || rows.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: rows.len(),
            });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding rows".into()));
        }
        Ok(EmbeddingMatrix { dim, vocab_hash, rows })
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.rows[id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.rows[id * self.dim..(id + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|v| v.is_finite())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let rows: Vec<&[f64]> = self.rows.chunks(self.dim).collect();
        let doc = serde_json::json!({ "dim": self.dim, "vocab_hash": self.vocab_hash, "rows": rows });
        util::write_atomic(path, &serde_json::to_vec(&doc)?)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Container {
            dim: usize,
            vocab_hash: u64,
            rows: Vec<Vec<f64>>,
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let c: Container = serde_json::from_slice(&bytes)?;
        if let Some(bad) = c.rows.iter().find(|r| r.len() != c.dim) {
            return Err(Error::DimensionMismatch {
                expected: c.dim,
                found: bad.len(),
            });
        }
        Self::from_rows(c.dim, c.vocab_hash, c.rows.concat())
    }

    /// Writes the `token v1 … vd` text format with a `V d` header line.
    pub fn save_text(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let mut out = format!("{} {}\n", self.vocab_size() - 2, self.dim);
        for id in 2..self.vocab_size() {
            out.push_str(vocab.token(id).unwrap_or("?"));
            for v in self.row(id) {
                out.push_str(&format!(" {v:.6}"));
            }
            out.push('\n');
        }
        util::write_atomic(path, out.as_bytes())
    }
}

/// Uniform in `[−0.5/d, 0.5/d]` with a zero padding row.
pub fn init_random(vocab_size: usize, dim: usize, vocab_hash: u64, seed: u64) -> Result<EmbeddingMatrix> {
    if vocab_size < 2 || dim == 0 {
        return Err(Error::invalid(format!(
            "need vocab_size >= 2 and dim >= 1, got {vocab_size} and {dim}"
        )));
    }
    let mut rng = util::rng(seed);
    let limit = 0.5 / dim as f64;
    let mut rows: Vec<f64> = (0..vocab_size * dim)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    rows[..dim].iter_mut().for_each(|v| *v = 0.0);
    Ok(EmbeddingMatrix { dim, vocab_hash, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 20,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SkipgramModel {
    pub embeddings: EmbeddingMatrix,
    /// Mean negative-sampling loss per (center, context) pair, per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Skip-gram with negative sampling. Pairs are formed within sentences;
/// padding and out-of-vocabulary ids take no part. Negatives come from the
/// corpus unigram distribution raised to 0.75, and the learning rate decays
/// linearly to 1e-4 of its start value.
pub fn train_skipgram(
    docs: &[TokenizedDocument],
    vocab_size: usize,
    vocab_hash: u64,
    config: &SkipgramConfig,
) -> Result<SkipgramModel> {
    if config.dim == 0 || config.window == 0 || config.negatives == 0 || config.learning_rate <= 0.0 {
        return Err(Error::invalid("skip-gram dim, window, negatives and learning rate must be positive"));
    }
    if docs.is_empty() {
        return Err(Error::invalid("skip-gram training on an empty corpus"));
    }
    let mut counts = vec![0u64; vocab_size];
    for t in docs.iter().flat_map(|d| d.sentences.iter().flatten()) {
        if *t >= vocab_size {
            return Err(Error::invalid(format!("token id {t} outside vocabulary of {vocab_size}")));
        }
        if *t != PAD_ID && *t != OOV_ID {
            counts[*t] += 1;
        }
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::invalid("skip-gram needs at least 2 distinct tokens"));
    }

    let mut input = init_random(vocab_size, config.dim, vocab_hash, config.seed)?;
    let mut output = vec![0.0; vocab_size * config.dim];
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = util::rng(util::derive_seed(config.seed, "skipgram"));

    let sentences: Vec<Vec<usize>> = docs
        .iter()
        .flat_map(|d| d.sentences.iter())
        .map(|s| s.iter().copied().filter(|&t| t != PAD_ID && t != OOV_ID).collect::<Vec<_>>())
        .filter(|s| s.len() >= 2)
        .collect();
    let pairs_per_epoch: usize = sentences
        .iter()
        .map(|s| (0..s.len()).map(|i| i.min(config.window) + (s.len() - 1 - i).min(config.window)).sum::<usize>())
        .sum();
    let total_steps = (pairs_per_epoch * config.epochs).max(1) as f64;
    let d = config.dim;
    let mut step = 0usize;
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut grad_in = vec![0.0; d];

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut pairs = 0usize;
        for &si in &order {
            let s = &sentences[si];
            for (i, &center) in s.iter().enumerate() {
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window).min(s.len() - 1);
                for (j, &context) in s.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let lr = config.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4);
                    step += 1;
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    let v = input.row(center).to_vec();
                    let mut targets = Vec::with_capacity(config.negatives + 1);
                    targets.push((context, 1.0));
                    for _ in 0..config.negatives {
                        let neg = noise.sample(&mut rng);
                        if neg != context {
                            targets.push((neg, 0.0));
                        }
                    }
                    for (target, label) in targets {
                        let out = &mut output[target * d..(target + 1) * d];
                        let score = sigmoid(dot(&v, out));
                        loss_sum -= if label == 1.0 { score.max(1e-300).ln() } else { (1.0 - score).max(1e-300).ln() };
                        let g = lr * (label - score);
                        for k in 0..d {
                            grad_in[k] += g * out[k];
                            out[k] += g * v[k];
                        }
                    }
                    input.row_mut(center).iter_mut().zip(&grad_in).for_each(|(w, g)| *w += g);
                    pairs += 1;
                }
            }
        }
        let mean = if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 };
        if !mean.is_finite() {
            return Err(Error::NonFinite("skip-gram loss".into()));
        }
        epoch_loss.push(mean);
    }
    Ok(SkipgramModel {
        embeddings: input,
        epoch_loss,
    })
}

#[derive(Debug, Clone, Default)]
pub struct PretrainedReport {
    /// Found tokens over non-reserved vocabulary size.
    pub coverage: f64,
    pub found: usize,
    pub missing: usize,
    pub duplicates: Vec<String>,
}

/// Loads `token v1 … vd` lines (an optional `V d` header is skipped).
///
/// Vocabulary tokens absent from the file, and the OOV row, get random rows
/// whose spread matches the loaded vectors; the first occurrence of a
/// duplicated token wins.
pub fn load_pretrained(
    path: &Path,
    vocab: &Vocabulary,
    dim_expected: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, PretrainedReport)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let v = vocab.len();
    let mut rows = vec![0.0; v * dim_expected];
    let mut filled = vec![false; v];
    let mut seen = HashSet::new();
    let mut report = PretrainedReport::default();
    for (line_no, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if line_no == 0 && values.len() == 1 && token.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
            continue;
        }
        if values.len() != dim_expected {
            return Err(Error::DimensionMismatch {
                expected: dim_expected,
                found: values.len(),
            });
        }
        if !seen.insert(token.to_string()) {
            log::warn!("{}:{}: duplicate token `{token}`, keeping the first", path.display(), line_no + 1);
            report.duplicates.push(token.to_string());
            continue;
        }
        let Some(id) = vocab.get(token).filter(|&id| id > OOV_ID) else {
            continue;
        };
        let parsed: std::result::Result<Vec<f64>, _> = values.iter().map(|s| s.parse::<f64>()).collect();
        let parsed = parsed.map_err(|e| Error::Parse {
            location: format!("{}:{}", path.display(), line_no + 1),
            message: e.to_string(),
        })?;
        if parsed.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("{}:{}", path.display(), line_no + 1)));
        }
        rows[id * dim_expected..(id + 1) * dim_expected].copy_from_slice(&parsed);
        filled[id] = true;
        report.found += 1;
    }
    let real = v.saturating_sub(2);
    report.missing = real - report.found;
    report.coverage = if real == 0 { 0.0 } else { report.found as f64 / real as f64 };

    let loaded: Vec<f64> = (0..v)
        .filter(|&i| filled[i])
        .flat_map(|i| rows[i * dim_expected..(i + 1) * dim_expected].iter().copied())
        .collect();
    let limit = if loaded.is_empty() {
        0.5 / dim_expected as f64
    } else {
        let mean = loaded.iter().sum::<f64>() / loaded.len() as f64;
        let var = loaded.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / loaded.len() as f64;
        (3.0 * var).sqrt().max(1e-6)
    };
    let mut rng = util::rng(seed);
    for id in OOV_ID..v {
        if !filled[id] {
            for x in &mut rows[id * dim_expected..(id + 1) * dim_expected] {
                *x = rng.gen_range(-limit..=limit);
            }
        }
    }
    let emb = EmbeddingMatrix::from_rows(dim_expected, vocab.hash(), rows)?;
    Ok((emb, report))
}
