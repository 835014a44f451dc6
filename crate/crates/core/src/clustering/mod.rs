//! The seven clustering algorithms, all over Euclidean distance.

mod affinity;
mod agglomerative;
mod birch;
mod dbscan;
mod kmeans;
mod mean_shift;

pub use affinity::affinity_propagation;
pub use agglomerative::{agglomerative, agglomerative_weighted, Linkage};
pub use birch::{birch, ClusteringFeature};
pub use dbscan::{dbscan, dbscan_core_points, default_eps};
pub use kmeans::{kmeans, kmeans_with_trace, minibatch_kmeans};
pub use mean_shift::{default_bandwidth, mean_shift};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::han::DocumentVector;
use crate::util;

pub const NOISE: i64 = -1;

/// `n` points of dimension `dim`, row-major. Carries no labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    n: usize,
    dim: usize,
    data: Vec<f64>,
    pub doc_ids: Option<Vec<String>>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "point data of length {} does not form rows of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point set".into()));
        }
        Ok(PointSet {
            n: data.len() / dim,
            dim,
            data,
            doc_ids: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn from_vectors(vectors: &[DocumentVector]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
        let mut ps = Self::from_rows(&rows)?;
        ps.doc_ids = Some(vectors.iter().map(|v| v.doc_id.clone()).collect());
        Ok(ps)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        util::euclidean(self.point(i), self.point(j))
    }

    /// Dense `n × n` Euclidean distance matrix.
    pub fn pairwise_distances(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = self.distance(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    }

    pub fn distinct_points(&self) -> usize {
        let mut rows: Vec<&[f64]> = self.iter().collect();
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        rows.dedup();
        rows.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub algorithm: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub k_found: usize,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster per point, `0..k_found`, or [`NOISE`].
    pub labels: Vec<i64>,
    pub k_found: usize,
    pub diagnostics: Diagnostics,
}

impl ClusterAssignment {
    /// Relabels clusters in order of first appearance so labels are
    /// contiguous from 0; noise stays noise.
    pub fn from_raw(raw: &[i64], mut diagnostics: Diagnostics) -> Self {
        let mut map = HashMap::new();
        let labels: Vec<i64> = raw
            .iter()
            .map(|&l| {
                if l < 0 {
                    NOISE
                } else {
                    let next = map.len() as i64;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        diagnostics.k_found = map.len();
        ClusterAssignment {
            labels,
            k_found: map.len(),
            diagnostics,
        }
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// `doc_id,label` rows; ids fall back to the point index.
    pub fn to_csv(&self, doc_ids: Option<&[String]>) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["doc_id", "label"])?;
        for (i, l) in self.labels.iter().enumerate() {
            let id = doc_ids.and_then(|ids| ids.get(i)).cloned().unwrap_or_else(|| i.to_string());
            w.write_record([id, l.to_string()])?;
        }
        w.into_inner().map_err(|e| Error::invalid(e.to_string()))
    }
}

pub fn read_assignment_csv(path: &std::path::Path) -> Result<Vec<(String, i64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let label = rec.get(1).unwrap_or("").trim().parse::<i64>().map_err(|e| Error::Parse {
            location: format!("{}:{}", path.display(), i + 2),
            message: e.to_string(),
        })?;
        out.push((rec.get(0).unwrap_or("").to_string(), label));
    }
    Ok(out)
}

/// `round(√n)`, at least 1.
pub fn estimate_k_sqrt(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(1)
}

pub(crate) fn check_k(points: &PointSet, k: usize) -> Result<()> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} must be between 1 and the number of points ({})",
            points.len()
        )));
    }
    Ok(())
}

/// Rows of the result tables, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    KMeans,
    Agglomerative,
    Dbscan,
    MeanShift,
    Birch,
    AffinityPropagation,
    MiniBatchKMeans,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::KMeans,
        Algorithm::Agglomerative,
        Algorithm::Dbscan,
        Algorithm::MeanShift,
        Algorithm::Birch,
        Algorithm::AffinityPropagation,
        Algorithm::MiniBatchKMeans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::KMeans => "k-means",
            Algorithm::Agglomerative => "agglom",
            Algorithm::Dbscan => "dbscan",
            Algorithm::MeanShift => "meanshift",
            Algorithm::Birch => "birch_fn",
            Algorithm::AffinityPropagation => "affinity",
            Algorithm::MiniBatchKMeans => "minibkmea",
        }
    }

    /// Whether the algorithm is told the number of clusters.
    pub fn takes_k(self) -> bool {
        matches!(
            self,
            Algorithm::KMeans | Algorithm::Agglomerative | Algorithm::Birch | Algorithm::MiniBatchKMeans
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == lower)
            .or(match lower.as_str() {
                "kmeans" => Some(Algorithm::KMeans),
                "agglomerative" => Some(Algorithm::Agglomerative),
                "mean_shift" | "mean-shift" => Some(Algorithm::MeanShift),
                "birch" => Some(Algorithm::Birch),
                "affinity_propagation" => Some(Algorithm::AffinityPropagation),
                "minibatch" | "minibatch_kmeans" => Some(Algorithm::MiniBatchKMeans),
                _ => None,
            })
            .ok_or_else(|| Error::invalid(format!("unknown algorithm `{s}`")))
    }
}

/// Hyperparameters for every algorithm. `None` means "derive from the data".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringParams {
    pub kmeans_n_init: usize,
    pub kmeans_max_iter: usize,
    pub minibatch_size: usize,
    pub minibatch_max_iter: usize,
    pub minibatch_n_init: usize,
    pub linkage: Linkage,
    pub dbscan_eps: Option<f64>,
    pub dbscan_min_samples: usize,
    pub mean_shift_bandwidth: Option<f64>,
    pub mean_shift_max_iter: usize,
    pub birch_threshold: f64,
    pub birch_branching: usize,
    pub affinity_damping: f64,
    pub affinity_max_iter: usize,
    pub affinity_convergence_iter: usize,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        ClusteringParams {
            kmeans_n_init: 10,
            kmeans_max_iter: 300,
            minibatch_size: 100,
            minibatch_max_iter: 100,
            minibatch_n_init: 3,
            linkage: Linkage::Ward,
            dbscan_eps: None,
            dbscan_min_samples: 4,
            mean_shift_bandwidth: None,
            mean_shift_max_iter: 300,
            birch_threshold: 0.5,
            birch_branching: 50,
            affinity_damping: 0.9,
            affinity_max_iter: 200,
            affinity_convergence_iter: 15,
        }
    }
}

/// Runs one algorithm; `k` is used only by algorithms that take it.
pub fn run(algorithm: Algorithm, points: &PointSet, k: usize, params: &ClusteringParams, seed: u64) -> Result<ClusterAssignment> {
    match algorithm {
        Algorithm::KMeans => kmeans(points, k, params.kmeans_n_init, params.kmeans_max_iter, seed),
        Algorithm::MiniBatchKMeans => minibatch_kmeans(
            points,
            k,
            params.minibatch_size,
            params.minibatch_max_iter,
            params.minibatch_n_init,
            seed,
        ),
        Algorithm::Agglomerative => agglomerative(points, k, params.linkage),
        Algorithm::Dbscan => {
            let eps = params.dbscan_eps.unwrap_or_else(|| default_eps(points, params.dbscan_min_samples));
            dbscan(points, eps, params.dbscan_min_samples)
        }
        Algorithm::MeanShift => {
            let bw = params.mean_shift_bandwidth.unwrap_or_else(|| default_bandwidth(points));
            mean_shift(points, bw, params.mean_shift_max_iter)
        }
        Algorithm::Birch => birch(points, params.birch_threshold, params.birch_branching, k),
        Algorithm::AffinityPropagation => affinity_propagation(
            points,
            params.affinity_damping,
            params.affinity_max_iter,
            params.affinity_convergence_iter,
        ),
    }
}
