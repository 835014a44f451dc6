//! Hierarchical attention network: word encoder + word attention per
//! sentence, sentence encoder + sentence attention per document, and a softmax
//! classifier. After training as a classifier, the pooled document vector
//! (the classifier's input) is what gets clustered.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenizedDocument, PAD_ID};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::neural::{
    attention_backward, attention_pool, bilstm_backward, bilstm_encode_masked, dense_softmax_xent, mat_ref,
    prefixed, vec_ref, AttentionOutput, AttentionParams, BiLstmOutput, LstmCellParams, Matrix, ParamSet,
    TensorRef,
};
use crate::util::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    Random,
    SelfTrained,
    Pretrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HanConfig {
    pub embedding_mode: EmbeddingMode,
    pub embed_dim: usize,
    pub word_hidden: usize,
    pub sent_hidden: usize,
    pub attn_dim: usize,
    pub classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// `None` fine-tunes for random and self-trained embeddings and freezes
    /// pretrained ones.
    pub fine_tune_embeddings: Option<bool>,
}

impl Default for HanConfig {
    fn default() -> Self {
        HanConfig {
            embedding_mode: EmbeddingMode::SelfTrained,
            embed_dim: 100,
            word_hidden: 50,
            sent_hidden: 50,
            attn_dim: 100,
            classes: 2,
            epochs: 60,
            batch_size: 4,
            learning_rate: 0.5,
            lr_decay: 0.5,
            lr_decay_every: 30,
            clip_norm: 5.0,
            seed: 0,
            fine_tune_embeddings: None,
        }
    }
}

impl HanConfig {
    pub fn fine_tunes_embeddings(&self) -> bool {
        self.fine_tune_embeddings
            .unwrap_or(self.embedding_mode != EmbeddingMode::Pretrained)
    }

    pub fn doc_dim(&self) -> usize {
        2 * self.sent_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.embed_dim,
            self.word_hidden,
            self.sent_hidden,
            self.attn_dim,
            self.batch_size,
            self.lr_decay_every,
        ];
        if dims.contains(&0) {
            return Err(Error::invalid("HAN dimensions, batch size and decay period must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::invalid(format!("HAN needs at least 2 classes, got {}", self.classes)));
        }
        if !(self.learning_rate > 0.0 && self.clip_norm > 0.0 && self.lr_decay > 0.0) {
            return Err(Error::invalid("learning rate, decay and clip norm must be positive"));
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HanParams {
    pub config: HanConfig,
    pub embedding: EmbeddingMatrix,
    pub word_fwd: LstmCellParams,
    pub word_bwd: LstmCellParams,
    pub word_attn: AttentionParams,
    pub sent_fwd: LstmCellParams,
    pub sent_bwd: LstmCellParams,
    pub sent_attn: AttentionParams,
    /// (classes × 2·sent_hidden)
    pub classifier_w: Matrix,
    pub classifier_b: Vec<f64>,
}

impl HanParams {
    pub fn init(config: &HanConfig, embedding: EmbeddingMatrix) -> Result<Self> {
        config.validate()?;
        if embedding.dim != config.embed_dim {
            return Err(Error::DimensionMismatch {
                expected: config.embed_dim,
                found: embedding.dim,
            });
        }
        let mut rng = util::rng(util::derive_seed(config.seed, "han-init"));
        let (d, hw, hs, a) = (config.embed_dim, config.word_hidden, config.sent_hidden, config.attn_dim);
        Ok(HanParams {
            config: config.clone(),
            embedding,
            word_fwd: LstmCellParams::new(d, hw, &mut rng),
            word_bwd: LstmCellParams::new(d, hw, &mut rng),
            word_attn: AttentionParams::new(2 * hw, a, &mut rng),
            sent_fwd: LstmCellParams::new(2 * hw, hs, &mut rng),
            sent_bwd: LstmCellParams::new(2 * hw, hs, &mut rng),
            sent_attn: AttentionParams::new(2 * hs, a, &mut rng),
            classifier_w: Matrix::xavier(config.classes, 2 * hs, &mut rng),
            classifier_b: vec![0.0; config.classes],
        })
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let emb = EmbeddingMatrix::from_rows(
            self.embedding.dim,
            self.embedding.vocab_hash,
            vec![0.0; self.embedding.as_slice().len()],
        )
        .expect("shape copied from a valid matrix");
        HanParams {
            config: self.config.clone(),
            embedding: emb,
            word_fwd: LstmCellParams::zeros_like(&self.word_fwd),
            word_bwd: LstmCellParams::zeros_like(&self.word_bwd),
            word_attn: AttentionParams::zeros_like(&self.word_attn),
            sent_fwd: LstmCellParams::zeros_like(&self.sent_fwd),
            sent_bwd: LstmCellParams::zeros_like(&self.sent_bwd),
            sent_attn: AttentionParams::zeros_like(&self.sent_attn),
            classifier_w: Matrix::zeros(self.classifier_w.rows(), self.classifier_w.cols()),
            classifier_b: vec![0.0; self.classifier_b.len()],
        }
    }

    pub fn vocab_hash(&self) -> u64 {
        self.embedding.vocab_hash
    }
}

impl ParamSet for HanParams {
    fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out = vec![(
            "embedding".to_string(),
            TensorRef {
                rows: self.embedding.vocab_size(),
                cols: self.embedding.dim,
                data: self.embedding.as_slice(),
            },
        )];
        out.extend(prefixed("word_fwd", self.word_fwd.tensors()));
        out.extend(prefixed("word_bwd", self.word_bwd.tensors()));
        out.extend(prefixed("word_attn", self.word_attn.tensors()));
        out.extend(prefixed("sent_fwd", self.sent_fwd.tensors()));
        out.extend(prefixed("sent_bwd", self.sent_bwd.tensors()));
        out.extend(prefixed("sent_attn", self.sent_attn.tensors()));
        out.push(("classifier.w".into(), mat_ref(&self.classifier_w)));
        out.push(("classifier.b".into(), vec_ref(&self.classifier_b)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.as_mut_slice()];
        out.extend(self.word_fwd.tensors_mut());
        out.extend(self.word_bwd.tensors_mut());
        out.extend(self.word_attn.tensors_mut());
        out.extend(self.sent_fwd.tensors_mut());
        out.extend(self.sent_bwd.tensors_mut());
        out.extend(self.sent_attn.tensors_mut());
        out.push(self.classifier_w.as_mut_slice());
        out.push(&mut self.classifier_b);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentVector {
    pub doc_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HanForward {
    pub probabilities: Vec<f64>,
    pub document: DocumentVector,
    /// One weight vector per sentence (zeros at padding positions).
    pub word_attention: Vec<Vec<f64>>,
    pub sentence_attention: Vec<f64>,
}

struct SentenceCache {
    inputs: Vec<Vec<f64>>,
    tokens: Vec<usize>,
    enc: BiLstmOutput,
    attn: AttentionOutput,
}

struct DocCache {
    /// `None` for sentences made only of padding.
    sentences: Vec<Option<SentenceCache>>,
    sent_enc: BiLstmOutput,
    sent_attn: AttentionOutput,
}

impl DocCache {
    fn doc_vector(&self) -> &[f64] {
        &self.sent_attn.pooled
    }
}

fn forward_cached(p: &HanParams, doc: &TokenizedDocument) -> Result<DocCache> {
    let vocab_size = p.embedding.vocab_size();
    doc.validate(vocab_size)?;
    let hw = p.config.word_hidden;
    let mut sentences = Vec::with_capacity(doc.sentences.len());
    let mut sent_vectors = Vec::with_capacity(doc.sentences.len());
    for sentence in &doc.sentences {
        let mask: Vec<bool> = sentence.iter().map(|&t| t != PAD_ID).collect();
        if !mask.iter().any(|&m| m) {
            sentences.push(None);
            sent_vectors.push(vec![0.0; 2 * hw]);
            continue;
        }
        let inputs: Vec<Vec<f64>> = sentence.iter().map(|&t| p.embedding.row(t).to_vec()).collect();
        let enc = bilstm_encode_masked(&inputs, &mask, &p.word_fwd, &p.word_bwd)?;
        let attn = attention_pool(&enc.outputs, &p.word_attn, Some(&mask))?;
        sent_vectors.push(attn.pooled.clone());
        sentences.push(Some(SentenceCache {
            inputs,
            tokens: sentence.clone(),
            enc,
            attn,
        }));
    }
    let sent_mask: Vec<bool> = sentences.iter().map(Option::is_some).collect();
    if !sent_mask.iter().any(|&m| m) {
        return Err(Error::invalid(format!("document `{}` contains only padding", doc.id)));
    }
    let sent_enc = bilstm_encode_masked(&sent_vectors, &sent_mask, &p.sent_fwd, &p.sent_bwd)?;
    let sent_attn = attention_pool(&sent_enc.outputs, &p.sent_attn, Some(&sent_mask))?;
    Ok(DocCache {
        sentences,
        sent_enc,
        sent_attn,
    })
}

fn classifier_probabilities(p: &HanParams, v: &[f64]) -> Vec<f64> {
    let mut logits = p.classifier_b.clone();
    p.classifier_w.matvec_acc(v, &mut logits);
    crate::neural::softmax_in_place(&mut logits);
    logits
}

pub fn forward_classify(p: &HanParams, doc: &TokenizedDocument) -> Result<HanForward> {
    let cache = forward_cached(p, doc)?;
    let v = cache.doc_vector().to_vec();
    let word_attention = cache
        .sentences
        .iter()
        .zip(&doc.sentences)
        .map(|(s, toks)| match s {
            Some(s) => s.attn.weights.clone(),
            None => vec![0.0; toks.len()],
        })
        .collect();
    Ok(HanForward {
        probabilities: classifier_probabilities(p, &v),
        document: DocumentVector {
            doc_id: doc.id.clone(),
            values: v,
        },
        word_attention,
        sentence_attention: cache.sent_attn.weights.clone(),
    })
}

/// Cross-entropy of one document; gradients are added into `grads`.
/// Returns `(loss, predicted class)`.
pub fn loss_and_gradient(
    p: &HanParams,
    doc: &TokenizedDocument,
    label: usize,
    grads: &mut HanParams,
    embedding_grads: bool,
) -> Result<(f64, usize)> {
    let cache = forward_cached(p, doc)?;
    let head = dense_softmax_xent(cache.doc_vector(), label, &p.classifier_w, &p.classifier_b)?;
    grads
        .classifier_w
        .as_mut_slice()
        .iter_mut()
        .zip(head.d_weight.as_slice())
        .for_each(|(g, d)| *g += d);
    grads.classifier_b.iter_mut().zip(&head.d_bias).for_each(|(g, d)| *g += d);

    let d_sent_states = attention_backward(
        &cache.sent_attn,
        &cache.sent_enc.outputs,
        &p.sent_attn,
        &head.d_input,
        &mut grads.sent_attn,
    );
    let d_sent_vectors = bilstm_backward(
        &cache.sent_enc,
        &d_sent_states,
        &p.sent_fwd,
        &p.sent_bwd,
        &mut grads.sent_fwd,
        &mut grads.sent_bwd,
    );
    for (s, d_vec) in cache.sentences.iter().zip(&d_sent_vectors) {
        let Some(s) = s else { continue };
        let d_states = attention_backward(&s.attn, &s.enc.outputs, &p.word_attn, d_vec, &mut grads.word_attn);
        let d_inputs = bilstm_backward(
            &s.enc,
            &d_states,
            &p.word_fwd,
            &p.word_bwd,
            &mut grads.word_fwd,
            &mut grads.word_bwd,
        );
        if embedding_grads {
            for (&tok, dx) in s.tokens.iter().zip(&d_inputs) {
                if tok != PAD_ID {
                    grads.embedding.row_mut(tok).iter_mut().zip(dx).for_each(|(g, d)| *g += d);
                }
            }
        }
        debug_assert_eq!(s.inputs.len(), d_inputs.len());
    }
    let predicted = argmax(&head.probabilities);
    Ok((head.loss, predicted))
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Mean cross-entropy over labeled documents.
pub fn mean_loss(p: &HanParams, docs: &[TokenizedDocument]) -> Result<f64> {
    let mut total = 0.0;
    for doc in docs {
        let label = doc_label(doc, p.config.classes)?;
        let cache = forward_cached(p, doc)?;
        let probs = classifier_probabilities(p, cache.doc_vector());
        total -= probs[label].ln();
    }
    Ok(total / docs.len().max(1) as f64)
}

fn doc_label(doc: &TokenizedDocument, classes: usize) -> Result<usize> {
    match doc.label {
        Some(l) if l < classes => Ok(l),
        Some(l) => Err(Error::invalid(format!(
            "document `{}` has label {l}, but the classifier has {classes} classes",
            doc.id
        ))),
        None => Err(Error::invalid(format!("document `{}` has no label", doc.id))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Mean training loss per epoch, accumulated while the epoch ran.
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

/// Mini-batches: documents are bucketed by sentence count (random order within
/// a bucket), cut into batches, and the batch order is shuffled.
fn make_batches(docs: &[TokenizedDocument], batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| docs[i].sentences.len());
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

/// Mini-batch gradient descent on mean cross-entropy with global-norm
/// clipping and step learning-rate decay.
pub fn train(
    config: &HanConfig,
    docs: &[TokenizedDocument],
    embeddings: EmbeddingMatrix,
) -> Result<(HanParams, TrainingHistory)> {
    if docs.is_empty() {
        return Err(Error::invalid("HAN training needs at least one document"));
    }
    let mut params = HanParams::init(config, embeddings)?;
    let labels: Vec<usize> = docs
        .iter()
        .map(|d| doc_label(d, config.classes))
        .collect::<Result<_>>()?;
    let vocab_size = params.embedding.vocab_size();
    for d in docs {
        d.validate(vocab_size)?;
    }
    let fine_tune = config.fine_tunes_embeddings();
    let mut grads = params.zeros_like();
    let mut rng = util::rng(util::derive_seed(config.seed, "han-batches"));
    let mut history = TrainingHistory::default();

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in make_batches(docs, config.batch_size, &mut rng) {
            grads.zero();
            for &i in &batch {
                let (loss, predicted) = loss_and_gradient(&params, &docs[i], labels[i], &mut grads, fine_tune)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                loss_sum += loss;
                correct += usize::from(predicted == labels[i]);
            }
            grads.scale(1.0 / batch.len() as f64);
            let norm = grads.squared_norm().sqrt();
            if !norm.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            if norm > config.clip_norm {
                grads.scale(config.clip_norm / norm);
            }
            let skip = usize::from(!fine_tune);
            for (w, g) in params
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .skip(skip)
            {
                w.iter_mut().zip(g.1.data).for_each(|(w, g)| *w -= lr * g);
            }
        }
        let mean = loss_sum / docs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.loss.push(mean);
        history.accuracy.push(correct as f64 / docs.len() as f64);
        log::debug!("han epoch {epoch}: loss {mean:.4}, accuracy {:.3}", history.accuracy[epoch]);
    }
    Ok((params, history))
}

/// Document vectors (classifier head discarded), in input order.
pub fn encode_corpus(p: &HanParams, docs: &[TokenizedDocument]) -> Result<Vec<DocumentVector>> {
    docs.par_iter()
        .map(|d| {
            let cache = forward_cached(p, d)?;
            Ok(DocumentVector {
                doc_id: d.id.clone(),
                values: cache.doc_vector().to_vec(),
            })
        })
        .collect()
}

const MAGIC: &[u8; 8] = b"HANCKPT\0";
const FORMAT_VERSION: u32 = 1;

/// Layout (all integers little-endian):
/// magic, version u32, config-json length u64 + bytes, vocab hash u64,
/// tensor count u32, then per tensor: name length u32 + bytes, rows u64,
/// cols u64, rows·cols f64 values.
pub fn checkpoint_bytes(p: &HanParams) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&p.config)?;
    out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&p.vocab_hash().to_le_bytes());
    let tensors = p.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols as u64).to_le_bytes());
        for v in t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(p: &HanParams, path: &Path) -> Result<()> {
    util::write_atomic(path, &checkpoint_bytes(p)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("implausible {what} {v}")))
    }
}

/// Parses a checkpoint; when `expected_vocab_hash` is given it must match.
pub fn checkpoint_from_bytes(bytes: &[u8], expected_vocab_hash: Option<u64>) -> Result<HanParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a HAN checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let cfg_len = r.len("config length")?;
    let config: HanConfig = serde_json::from_slice(r.take(cfg_len, "config")?)
        .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let vocab_hash = r.u64("vocabulary hash")?;
    if let Some(expected) = expected_vocab_hash {
        if expected != vocab_hash {
            return Err(Error::VocabMismatch {
                expected: vocab_hash,
                found: expected,
            });
        }
    }
    let count = r.u32("tensor count")? as usize;
    let mut stored = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let name_len = r.u32("tensor name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rows = r.len("rows")?;
        let cols = r.len("cols")?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::Checkpoint(format!("implausible shape {rows}x{cols} for `{name}`")))?;
        let raw = r.take(n * 8, &name)?;
        let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        stored.push((name, rows, cols, values));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let Some((_, v_rows, v_cols, _)) = stored.iter().find(|t| t.0 == "embedding") else {
        return Err(Error::Checkpoint("missing tensor `embedding`".into()));
    };
    let embedding = EmbeddingMatrix::from_rows(*v_cols, vocab_hash, vec![0.0; v_rows * v_cols])?;
    let mut params = HanParams::init(&config, embedding).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let expected: Vec<(String, usize, usize)> = params
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.rows, t.cols))
        .collect();
    if expected.len() != stored.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            expected.len(),
            stored.len()
        )));
    }
    for ((dst, (name, rows, cols)), (sname, srows, scols, values)) in
        params.tensors_mut().into_iter().zip(expected).zip(stored)
    {
        if name != sname || rows != srows || cols != scols {
            return Err(Error::Checkpoint(format!(
                "tensor `{sname}` ({srows}x{scols}) does not match expected `{name}` ({rows}x{cols})"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("non-finite values in `{name}`")));
        }
        dst.copy_from_slice(&values);
    }
    Ok(params)
}

pub fn load_checkpoint(path: &Path, expected_vocab_hash: Option<u64>) -> Result<HanParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, expected_vocab_hash)
}

/// `doc_id, v_0, …, v_{m−1}` with a header row.
pub fn vectors_to_csv(vectors: &[DocumentVector]) -> Result<Vec<u8>> {
    let dim = vectors.first().map_or(0, |v| v.values.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["doc_id".to_string()];
    header.extend((0..dim).map(|i| format!("v_{i}")));
    w.write_record(&header)?;
    for v in vectors {
        if v.values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.values.len(),
            });
        }
        let mut rec = vec![v.doc_id.clone()];
        rec.extend(v.values.iter().map(|x| format!("{x:?}")));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::invalid(e.to_string()))
}

pub fn write_vectors_csv(path: &Path, vectors: &[DocumentVector]) -> Result<()> {
    util::write_atomic(path, &vectors_to_csv(vectors)?)
}

pub fn read_vectors_csv(path: &Path) -> Result<Vec<DocumentVector>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                location: format!("{}:{}", path.display(), i + 2),
                message: e.to_string(),
            })?;
        out.push(DocumentVector {
            doc_id: rec.get(0).unwrap_or_default().to_string(),
            values,
        });
    }
    Ok(out)
}

pub fn write_vectors_jsonl(path: &Path, vectors: &[DocumentVector]) -> Result<()> {
    let mut buf = Vec::new();
    for v in vectors {
        serde_json::to_writer(&mut buf, v)?;
        buf.push(b'\n');
    }
    util::write_atomic(path, &buf)
}
