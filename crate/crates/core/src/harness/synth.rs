//! Synthetic labeled corpus: each class has its own keyword vocabulary,
//! all classes share a filler vocabulary.

use std::collections::BTreeSet;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize_corpus, FilteredCorpus, RawRecord, TokenLimits, Vocabulary};
use crate::embeddings::{train_skipgram, SkipgramConfig};
use crate::error::{Error, Result};
use crate::util::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub docs_per_class: usize,
    pub keywords_per_class: usize,
    pub filler_words: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that a word is one of the document's own class keywords.
    pub keyword_rate: f64,
    /// Probability that a word is a keyword of some other class.
    pub confuser_rate: f64,
    /// Fixes the word lists; documents vary with `seed`.
    pub lexicon_seed: u64,
    /// Per-class size of the background corpus behind the stand-in
    /// pretrained vectors.
    pub background_docs_per_class: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 6,
            docs_per_class: 40,
            keywords_per_class: 15,
            filler_words: 150,
            min_sentences: 3,
            max_sentences: 6,
            min_words: 5,
            max_words: 10,
            keyword_rate: 0.2,
            confuser_rate: 0.05,
            lexicon_seed: 0,
            background_docs_per_class: 200,
            seed: 0,
        }
    }
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

/// Class keyword lists and the filler list, disjoint and deterministic in
/// `lexicon_seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub keywords: Vec<Vec<String>>,
    pub filler: Vec<String>,
}

impl Lexicon {
    pub fn new(cfg: &SynthConfig) -> Self {
        let mut rng = util::rng(util::derive_seed(cfg.lexicon_seed, "lexicon"));
        let mut seen = BTreeSet::new();
        let mut word = |rng: &mut Rng| loop {
            let syllables = rng.gen_range(2..=3);
            let w: String = (0..syllables)
                .map(|_| format!("{}{}", ONSETS[rng.gen_range(0..ONSETS.len())], VOWELS[rng.gen_range(0..VOWELS.len())]))
                .collect();
            if seen.insert(w.clone()) {
                return w;
            }
        };
        let keywords = (0..cfg.classes)
            .map(|_| (0..cfg.keywords_per_class).map(|_| word(&mut rng)).collect())
            .collect();
        let filler = (0..cfg.filler_words).map(|_| word(&mut rng)).collect();
        Lexicon { keywords, filler }
    }
}

pub fn class_label(c: usize) -> String {
    format!("condition_{c:02}")
}

fn zipf(n: usize) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).map_err(|_| Error::invalid("empty word list"))
}

/// Generates `classes × docs_per_class` records, interleaved by class.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<RawRecord>> {
    if cfg.classes == 0 || cfg.docs_per_class == 0 || cfg.keywords_per_class == 0 || cfg.filler_words == 0 {
        return Err(Error::invalid("synthetic corpus needs classes, documents, keywords and filler"));
    }
    if cfg.min_sentences == 0 || cfg.min_sentences > cfg.max_sentences || cfg.min_words == 0 || cfg.min_words > cfg.max_words {
        return Err(Error::invalid("synthetic sentence/word ranges must be non-empty and start at 1 or more"));
    }
    if !(cfg.keyword_rate >= 0.0 && cfg.confuser_rate >= 0.0 && cfg.keyword_rate + cfg.confuser_rate <= 1.0) {
        return Err(Error::invalid("keyword and confuser rates must be probabilities summing to at most 1"));
    }
    let lex = Lexicon::new(cfg);
    let kw_dist = zipf(cfg.keywords_per_class)?;
    let filler_dist = zipf(cfg.filler_words)?;
    let mut rng = util::rng(util::derive_seed(cfg.seed, "synth-docs"));
    let mut records = Vec::with_capacity(cfg.classes * cfg.docs_per_class);
    for i in 0..cfg.docs_per_class {
        for c in 0..cfg.classes {
            let n_sent = rng.gen_range(cfg.min_sentences..=cfg.max_sentences);
            let sentences: Vec<String> = (0..n_sent)
                .map(|_| {
                    let n_words = rng.gen_range(cfg.min_words..=cfg.max_words);
                    let words: Vec<&str> = (0..n_words)
                        .map(|_| {
                            let r: f64 = rng.gen();
                            if r < cfg.keyword_rate {
                                lex.keywords[c][kw_dist.sample(&mut rng)].as_str()
                            } else if r < cfg.keyword_rate + cfg.confuser_rate && cfg.classes > 1 {
                                let other = (c + rng.gen_range(1..cfg.classes)) % cfg.classes;
                                lex.keywords[other][kw_dist.sample(&mut rng)].as_str()
                            } else {
                                lex.filler[filler_dist.sample(&mut rng)].as_str()
                            }
                        })
                        .collect();
                    format!("{}.", words.join(" "))
                })
                .collect();
            records.push(RawRecord {
                id: format!("s{}-{:05}", cfg.seed, i * cfg.classes + c),
                text: sentences.join(" "),
                class_label: class_label(c),
                extra: Default::default(),
            });
        }
    }
    Ok(records)
}

/// Trains skip-gram vectors on an independent background corpus drawn from
/// the same lexicon (documents seeded by `background_seed`) and writes them
/// in the `token v1 … vd` text format with a `V d` header.
pub fn write_pretrained_vectors(
    cfg: &SynthConfig,
    background_seed: u64,
    skipgram: &SkipgramConfig,
    path: &Path,
) -> Result<()> {
    let background = SynthConfig {
        seed: background_seed,
        docs_per_class: cfg.background_docs_per_class,
        ..cfg.clone()
    };
    let records = generate(&background)?;
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let vocab = Vocabulary::from_texts(texts, 1)?;
    let corpus = FilteredCorpus {
        class_counts: Default::default(),
        records,
    };
    let docs = tokenize_corpus(&corpus, &vocab, TokenLimits::default())?;
    let model = train_skipgram(&docs, vocab.len(), vocab.hash(), skipgram)?;
    model.embeddings.save_text(path, &vocab)
}
