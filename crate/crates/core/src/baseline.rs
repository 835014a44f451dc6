//! "Plain clustering" document vectors: distributed-bag-of-words paragraph
//! vectors, plus a mean-of-word-vectors diagnostic.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenizedDocument, OOV_ID, PAD_ID};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::han::DocumentVector;
use crate::neural::Matrix;
use crate::util::{self, dot, sigmoid, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParagraphVectorConfig {
    /// `None` matches the attention document dimension (2·sent_hidden).
    pub dim: Option<usize>,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Gradient steps per held-out document during inference.
    pub infer_epochs: usize,
    pub seed: u64,
}

impl Default for ParagraphVectorConfig {
    fn default() -> Self {
        ParagraphVectorConfig {
            dim: None,
            negatives: 5,
            epochs: 100,
            learning_rate: 0.025,
            infer_epochs: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParagraphVectorModel {
    pub dim: usize,
    /// One row per training document.
    pub doc_vectors: Matrix,
    /// Output (context) word vectors.
    pub word_output: Matrix,
    /// Mean negative-sampling loss per (doc, word) pair, per epoch.
    pub epoch_loss: Vec<f64>,
    doc_ids: Vec<String>,
    noise: WeightedIndex<f64>,
    config: ParagraphVectorConfig,
}

fn doc_words(doc: &TokenizedDocument) -> Vec<usize> {
    doc.sentences
        .iter()
        .flatten()
        .copied()
        .filter(|&t| t != PAD_ID && t != OOV_ID)
        .collect()
}

/// Negative-sampling loss of `v` predicting `word`, and the scaled
/// gradient coefficient for each target row.
fn sgns_coefficients(
    v: &[f64],
    word: usize,
    word_output: &Matrix,
    noise: &WeightedIndex<f64>,
    negatives: usize,
    lr: f64,
    rng: &mut Rng,
) -> (f64, Vec<(usize, f64)>) {
    let mut loss = 0.0;
    let mut coeffs = Vec::with_capacity(negatives + 1);
    let mut targets = vec![(word, 1.0)];
    for _ in 0..negatives {
        let n = noise.sample(rng);
        if n != word {
            targets.push((n, 0.0));
        }
    }
    for (t, label) in targets {
        let s = sigmoid(dot(v, word_output.row(t)));
        loss -= if label == 1.0 { s.max(1e-300).ln() } else { (1.0 - s).max(1e-300).ln() };
        coeffs.push((t, lr * (label - s)));
    }
    (loss, coeffs)
}

fn step_vector(v: &mut [f64], word_output: &Matrix, coeffs: &[(usize, f64)]) {
    let mut grad = vec![0.0; v.len()];
    for &(t, g) in coeffs {
        grad.iter_mut().zip(word_output.row(t)).for_each(|(a, o)| *a += g * o);
    }
    v.iter_mut().zip(&grad).for_each(|(a, b)| *a += b);
}

/// Trains one vector per document to predict its own words against
/// unigram^0.75 negatives. Output order follows the input.
pub fn train_doc_vectors(
    docs: &[TokenizedDocument],
    vocab_size: usize,
    dim: usize,
    config: &ParagraphVectorConfig,
) -> Result<ParagraphVectorModel> {
    if docs.len() < 2 {
        return Err(Error::invalid("paragraph vectors need at least 2 documents"));
    }
    if dim == 0 || config.negatives == 0 || config.learning_rate <= 0.0 {
        return Err(Error::invalid("paragraph-vector dim, negatives and learning rate must be positive"));
    }
    let words: Vec<Vec<usize>> = docs.iter().map(doc_words).collect();
    let mut counts = vec![0.0; vocab_size];
    for &w in words.iter().flatten() {
        if w >= vocab_size {
            return Err(Error::invalid(format!("token id {w} outside vocabulary of {vocab_size}")));
        }
        counts[w] += 1.0;
    }
    let weights: Vec<f64> = counts.iter().map(|c: &f64| c.powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights)
        .map_err(|_| Error::invalid("paragraph vectors need at least one in-vocabulary token"))?;

    let mut doc_vectors = Matrix::uniform(docs.len(), dim, 0.5 / dim as f64, &mut util::rng(config.seed));
    let mut word_output = Matrix::zeros(vocab_size, dim);

    let mut pairs: Vec<(usize, usize)> = words
        .iter()
        .enumerate()
        .flat_map(|(d, ws)| ws.iter().map(move |&w| (d, w)))
        .collect();
    let total = (pairs.len() * config.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut rng = util::rng(util::derive_seed(config.seed, "dbow"));
    for _ in 0..config.epochs {
        pairs.shuffle(&mut rng);
        let mut loss = 0.0;
        for &(d, w) in &pairs {
            let lr = config.learning_rate * (1.0 - step as f64 / total).max(1e-4);
            step += 1;
            let v = doc_vectors.row_mut(d);
            let (l, coeffs) = sgns_coefficients(v, w, &word_output, &noise, config.negatives, lr, &mut rng);
            loss += l;
            let before = v.to_vec();
            step_vector(v, &word_output, &coeffs);
            for (t, g) in coeffs {
                word_output.row_mut(t).iter_mut().zip(&before).for_each(|(o, x)| *o += g * x);
            }
        }
        let mean = loss / pairs.len().max(1) as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("paragraph-vector loss".into()));
        }
        epoch_loss.push(mean);
    }
    Ok(ParagraphVectorModel {
        dim,
        doc_vectors,
        word_output,
        epoch_loss,
        doc_ids: docs.iter().map(|d| d.id.clone()).collect(),
        noise,
        config: config.clone(),
    })
}

impl ParagraphVectorModel {
    pub fn vectors(&self) -> Vec<DocumentVector> {
        self.doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| DocumentVector {
                doc_id: id.clone(),
                values: self.doc_vectors.row(i).to_vec(),
            })
            .collect()
    }

    /// Fits a vector for an unseen document with the word matrix frozen.
    /// Each document gets its own seeded stream, so results do not depend on
    /// which other documents are inferred alongside it.
    pub fn infer(&self, doc: &TokenizedDocument) -> Result<DocumentVector> {
        let words: Vec<usize> = doc_words(doc);
        if let Some(&bad) = words.iter().find(|&&w| w >= self.word_output.rows()) {
            return Err(Error::invalid(format!("token id {bad} outside the trained vocabulary")));
        }
        let mut rng = util::rng(util::derive_seed(self.config.seed, &format!("infer:{}", doc.id)));
        let mut v = Matrix::uniform(1, self.dim, 0.5 / self.dim as f64, &mut rng)
            .as_slice()
            .to_vec();
        let mut order = words.clone();
        let total = (order.len() * self.config.infer_epochs).max(1) as f64;
        let mut step = 0usize;
        for _ in 0..self.config.infer_epochs {
            order.shuffle(&mut rng);
            for &w in &order {
                let lr = self.config.learning_rate * (1.0 - step as f64 / total).max(1e-4);
                step += 1;
                let (_, coeffs) =
                    sgns_coefficients(&v, w, &self.word_output, &self.noise, self.config.negatives, lr, &mut rng);
                step_vector(&mut v, &self.word_output, &coeffs);
            }
        }
        Ok(DocumentVector {
            doc_id: doc.id.clone(),
            values: v,
        })
    }
}

/// Unweighted mean of the word vectors of all non-padding tokens.
pub fn mean_embedding_vector(doc: &TokenizedDocument, emb: &EmbeddingMatrix) -> Result<DocumentVector> {
    let mut sum = vec![0.0; emb.dim];
    let mut n = 0usize;
    for &t in doc.sentences.iter().flatten() {
        if t == PAD_ID {
            continue;
        }
        if t >= emb.vocab_size() {
            return Err(Error::invalid(format!("token id {t} outside embedding table")));
        }
        sum.iter_mut().zip(emb.row(t)).for_each(|(s, v)| *s += v);
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid(format!("document `{}` contains only padding", doc.id)));
    }
    sum.iter_mut().for_each(|s| *s /= n as f64);
    Ok(DocumentVector {
        doc_id: doc.id.clone(),
        values: sum,
    })
}
