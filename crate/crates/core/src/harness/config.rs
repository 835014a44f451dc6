use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synth::SynthConfig;
use crate::baseline::ParagraphVectorConfig;
use crate::clustering::ClusteringParams;
use crate::corpus::{Schema, TokenLimits};
use crate::embeddings::SkipgramConfig;
use crate::error::{Error, Result};
use crate::han::HanConfig;
use crate::util;

/// Everything a run depends on. Loaded from TOML; every field has a default,
/// so an empty file is a valid synthetic-corpus experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// TSV/CSV corpus; `None` generates the synthetic corpus from `synth`.
    pub dataset: Option<PathBuf>,
    pub synth: SynthConfig,
    pub schema: Schema,
    pub min_count: usize,
    pub max_per_class: usize,
    pub min_freq: u64,
    pub limits: TokenLimits,
    pub han: HanConfig,
    /// `dim` is overridden by `han.embed_dim`.
    pub skipgram: SkipgramConfig,
    pub paragraph: ParagraphVectorConfig,
    /// Word vectors for the AP family. With the synthetic corpus and no
    /// file, vectors are trained on an independent background corpus.
    pub pretrained: Option<PathBuf>,
    pub clustering: ClusteringParams,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            synth: SynthConfig::default(),
            schema: Schema::default(),
            min_count: 3,
            max_per_class: 20,
            min_freq: 1,
            limits: TokenLimits::default(),
            han: HanConfig::default(),
            skipgram: SkipgramConfig::default(),
            paragraph: ParagraphVectorConfig::default(),
            pretrained: None,
            clustering: ClusteringParams::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse {
            location: "config".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                location: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::invalid(format!("config serialization: {e}")))
    }

    /// SHA-256 of the canonical JSON form; any field change changes it.
    pub fn hash(&self) -> Result<String> {
        Ok(util::sha256_hex(&serde_json::to_vec(self)?))
    }

    /// Checks referenced files exist and numeric settings are usable.
    pub fn validate(&self) -> Result<()> {
        for p in self.dataset.iter().chain(&self.pretrained) {
            if !p.is_file() {
                return Err(Error::invalid(format!("referenced file {} does not exist", p.display())));
            }
        }
        if self.min_count == 0 || self.max_per_class < self.min_count {
            return Err(Error::invalid("need 1 <= min_count <= max_per_class"));
        }
        if self.min_freq == 0 {
            return Err(Error::invalid("min_freq must be at least 1"));
        }
        let mut han = self.han.clone();
        han.classes = han.classes.max(2);
        han.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    /// Attention clustering, self-trained word vectors.
    AS,
    /// Attention clustering, pretrained word vectors.
    AP,
    /// Paragraph-vector baseline.
    PLAIN,
}

/// One experiment variation: `AS2`, `AP9`, `PLAIN`, …
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariationSpec {
    pub family: Family,
    /// n in n/10; `None` for PLAIN, which always uses the even split.
    pub fraction_tenths: Option<u8>,
    pub seed: u64,
}

impl VariationSpec {
    pub fn new(family: Family, fraction_tenths: Option<u8>, seed: u64) -> Result<Self> {
        match (family, fraction_tenths) {
            (Family::PLAIN, None) => {}
            (Family::AS | Family::AP, Some(1..=9)) => {}
            _ => {
                return Err(Error::invalid(format!(
                    "{family:?} with fraction {fraction_tenths:?}: AS/AP need 1..9, PLAIN takes none"
                )))
            }
        }
        Ok(VariationSpec {
            family,
            fraction_tenths,
            seed,
        })
    }

    /// Parses `AS2`, `ap9`, `PLAIN`.
    pub fn parse(code: &str, seed: u64) -> Result<Self> {
        let upper = code.trim().to_ascii_uppercase();
        let bad = || Error::invalid(format!("variation `{code}` is not AS1..AS9, AP1..AP9 or PLAIN"));
        if upper == "PLAIN" {
            return Self::new(Family::PLAIN, None, seed);
        }
        let family = match upper.get(..2) {
            Some("AS") => Family::AS,
            Some("AP") => Family::AP,
            _ => return Err(bad()),
        };
        let n: u8 = upper[2..].parse().map_err(|_| bad())?;
        Self::new(family, Some(n), seed).map_err(|_| bad())
    }

    /// Training fraction: n/10, or 0.5 for PLAIN.
    pub fn fraction(&self) -> f64 {
        self.fraction_tenths.map_or(0.5, |n| f64::from(n) / 10.0)
    }

    pub fn code(&self) -> String {
        match (self.family, self.fraction_tenths) {
            (Family::PLAIN, _) | (_, None) => "PLAIN".into(),
            (f, Some(n)) => format!("{f:?}{n}"),
        }
    }
}

impl fmt::Display for VariationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for VariationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 0)
    }
}

/// Parses `1..9`, `2,5,9` or `3` into sorted distinct tenths.
pub fn parse_fractions(s: &str) -> Result<Vec<u8>> {
    let bad = || Error::invalid(format!("fractions `{s}` must look like `1..9` or `2,5,9` with values 1..9"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u8, u8) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() || out.iter().any(|n| !(1..=9).contains(n)) {
        return Err(bad());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
