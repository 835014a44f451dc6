//! Result tables: one row per algorithm, rendered at three decimals with the
//! leading zero dropped (`.498`, `1.000`) and `----` for an absent
//! silhouette.

use serde::{Deserialize, Serialize};

use crate::clustering::Algorithm;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;

pub const HEADER: [&str; 8] = ["Algorithm", "Homo", "Comp", "V-me", "ARI", "AMI", "Silh", "AvgEv"];
pub const ABSENT: &str = "----";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub training_docs: usize,
    pub clustering_docs: usize,
    pub vocab_size: usize,
    /// Number of clusters handed to the algorithms that take one.
    pub k: usize,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub code: String,
    pub rows: Vec<(Algorithm, MetricReport)>,
    pub provenance: Provenance,
}

impl ResultTable {
    pub fn row(&self, algorithm: Algorithm) -> Option<&MetricReport> {
        self.rows.iter().find(|(a, _)| *a == algorithm).map(|(_, r)| r)
    }

    /// The row set must be exactly the seven algorithms in table order.
    pub fn check_complete(&self) -> Result<()> {
        let algs: Vec<Algorithm> = self.rows.iter().map(|r| r.0).collect();
        if algs != Algorithm::ALL {
            return Err(Error::invalid(format!("table {} has rows {algs:?}, expected all seven", self.code)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// `0.498 → .498`, `1.0 → 1.000`, `-0.0004 → .000`, `-0.25 → -.250`.
pub fn fmt3(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = if s == "-0.000" { "0.000".to_string() } else { s };
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

fn cells(r: &MetricReport) -> [String; 7] {
    [
        fmt3(r.homo),
        fmt3(r.comp),
        fmt3(r.v_measure),
        fmt3(r.ari),
        fmt3(r.ami),
        r.silhouette.map_or_else(|| ABSENT.to_string(), fmt3),
        fmt3(r.avg_ev),
    ]
}

pub fn render(table: &ResultTable, format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&HEADER.join(","));
            out.push('\n');
            for (alg, r) in &table.rows {
                out.push_str(&format!("{},{}\n", alg.name(), cells(r).join(",")));
            }
        }
        TableFormat::Markdown => {
            out.push_str(&format!("| {} |\n", HEADER.join(" | ")));
            out.push_str(&format!("|{}\n", "---|".repeat(HEADER.len())));
            for (alg, r) in &table.rows {
                out.push_str(&format!("| {} | {} |\n", alg.name(), cells(r).join(" | ")));
            }
        }
    }
    out
}

fn parse_cell(s: &str, line: usize) -> Result<Option<f64>> {
    if s == ABSENT {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse {
        location: format!("table line {line}"),
        message: format!("`{s}` is not a number"),
    })
}

/// Parses either rendering back into rows. Values carry 3-decimal precision.
pub fn parse(text: &str) -> Result<Vec<(Algorithm, MetricReport)>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("|-") {
            continue;
        }
        let fields: Vec<&str> = if line.starts_with('|') {
            line.trim_matches('|').split('|').map(str::trim).collect()
        } else {
            line.split(',').map(str::trim).collect()
        };
        let err = |message: String| Error::Parse {
            location: format!("table line {}", i + 1),
            message,
        };
        if !header_seen {
            if fields != HEADER {
                return Err(err(format!("header {fields:?} differs from {HEADER:?}")));
            }
            header_seen = true;
            continue;
        }
        if fields.len() != HEADER.len() {
            return Err(err(format!("expected {} fields, found {}", HEADER.len(), fields.len())));
        }
        let alg: Algorithm = fields[0].parse()?;
        let v: Vec<Option<f64>> = fields[1..].iter().map(|f| parse_cell(f, i + 1)).collect::<Result<_>>()?;
        let need = |x: Option<f64>| x.ok_or_else(|| err("only Silh may be absent".into()));
        rows.push((
            alg,
            MetricReport {
                homo: need(v[0])?,
                comp: need(v[1])?,
                v_measure: need(v[2])?,
                ari: need(v[3])?,
                ami: need(v[4])?,
                silhouette: v[5],
                avg_ev: need(v[6])?,
                silhouette_defined: v[5].is_some(),
            },
        ));
    }
    if !header_seen {
        return Err(Error::Parse {
            location: "table".into(),
            message: "no header".into(),
        });
    }
    Ok(rows)
}
