//! Experiment orchestration: variations (`AS2`, `AP9`, `PLAIN`, …), result
//! tables, charts and the synthetic corpus.

pub mod charts;
pub mod config;
pub mod pipeline;
pub mod synth;
pub mod table;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use charts::{emit_charts, ChartKind, Metric};
pub use config::{parse_fractions, ExperimentConfig, Family, VariationSpec};
pub use pipeline::{prepare_corpus, run_plain, run_variation, write_run, VariationRun};
pub use table::{render, ResultTable, TableFormat};

use crate::clustering::Algorithm;
use crate::error::{Result, StageExt};

/// Runs the variations (in parallel; each is pure given its seed), writes
/// their artifacts under `cfg.out_dir`, an Avg.Ev. bar chart per variation
/// and, for every family with two or more fractions, a k-means homogeneity
/// line. Tables come back in input order.
pub fn run_experiment(cfg: &ExperimentConfig, specs: &[VariationSpec]) -> Result<Vec<ResultTable>> {
    cfg.validate().stage("config")?;
    if specs.iter().any(|s| s.family == Family::AP) {
        pipeline::pretrained_path(cfg).stage("embeddings")?;
    }
    let mut seeds: Vec<u64> = specs.iter().map(|s| s.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let prepared: BTreeMap<u64, pipeline::PreparedCorpus> = seeds
        .into_iter()
        .map(|s| Ok((s, prepare_corpus(cfg, s)?)))
        .collect::<Result<_>>()?;
    let runs: Vec<VariationRun> = specs
        .par_iter()
        .map(|spec| pipeline::run_variation_prepared(spec, cfg, &prepared[&spec.seed]))
        .collect::<Result<_>>()?;

    let dir = &cfg.out_dir;
    for run in &runs {
        write_run(run, dir).stage("write")?;
        let path = dir.join(format!("{}_avg_ev.svg", run.table.code));
        emit_charts(std::slice::from_ref(&run.table), ChartKind::AvgEvBars, Metric::AvgEv, Algorithm::KMeans, &path)
            .stage("charts")?;
    }
    let tables: Vec<ResultTable> = runs.into_iter().map(|r| r.table).collect();
    for family in [Family::AS, Family::AP] {
        let line: Vec<ResultTable> = tables
            .iter()
            .filter(|t| VariationSpec::parse(&t.code, 0).is_ok_and(|s| s.family == family))
            .cloned()
            .collect();
        if line.len() >= 2 {
            let path = dir.join(format!("{family:?}_homogeneity_{}.svg", Algorithm::KMeans));
            emit_charts(&line, ChartKind::MetricLine, Metric::Homogeneity, Algorithm::KMeans, &path).stage("charts")?;
        }
    }
    Ok(tables)
}
