//! External validation metrics, silhouette, and the Avg.Ev. aggregate.

use serde::{Deserialize, Serialize};

use crate::clustering::PointSet;
use crate::error::{Error, Result};

/// Counts `n_ij` of true class `i` against predicted cluster `j`. Rows and
/// columns follow the sorted distinct label values; a noise label is just
/// another column.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub classes: Vec<i64>,
    pub clusters: Vec<i64>,
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(labels_true: &[i64], labels_pred: &[i64]) -> Result<Self> {
        if labels_true.len() != labels_pred.len() {
            return Err(Error::DimensionMismatch {
                expected: labels_true.len(),
                found: labels_pred.len(),
            });
        }
        if labels_true.is_empty() {
            return Err(Error::invalid("contingency table of zero points"));
        }
        let distinct = |l: &[i64]| {
            let mut v = l.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        };
        let classes = distinct(labels_true);
        let clusters = distinct(labels_pred);
        let mut counts = vec![vec![0u64; clusters.len()]; classes.len()];
        for (t, p) in labels_true.iter().zip(labels_pred) {
            let i = classes.binary_search(t).expect("present");
            let j = clusters.binary_search(p).expect("present");
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..clusters.len()).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(ContingencyTable {
            classes,
            clusters,
            counts,
            row_sums,
            col_sums,
            n: labels_true.len() as u64,
        })
    }

    pub fn transposed(&self) -> Self {
        ContingencyTable {
            classes: self.clusters.clone(),
            clusters: self.classes.clone(),
            counts: (0..self.clusters.len()).map(|j| self.counts.iter().map(|r| r[j]).collect()).collect(),
            row_sums: self.col_sums.clone(),
            col_sums: self.row_sums.clone(),
            n: self.n,
        }
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &c)| (i, j, c)))
            .filter(|&(_, _, c)| c > 0)
    }
}

fn entropy(marginal: &[u64], n: u64) -> f64 {
    let n = n as f64;
    -marginal
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// H(C|K): entropy of classes given clusters.
fn conditional_entropy(t: &ContingencyTable) -> f64 {
    let n = t.n as f64;
    -t.cells()
        .map(|(_, j, c)| {
            let c = c as f64;
            c / n * (c / t.col_sums[j] as f64).ln()
        })
        .sum::<f64>()
}

fn mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.n as f64;
    t.cells()
        .map(|(i, j, c)| {
            let c = c as f64;
            c / n * (n * c / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln()
        })
        .sum()
}

/// Harmonic mean of homogeneity and completeness; 0 when both are 0.
pub fn v_measure(homo: f64, comp: f64) -> f64 {
    if homo + comp == 0.0 {
        0.0
    } else {
        2.0 * homo * comp / (homo + comp)
    }
}

/// `(homogeneity, completeness, v_measure)` with natural-log entropies.
/// A score whose reference entropy is 0 is 1 by convention.
pub fn homogeneity_completeness_v(t: &ContingencyTable) -> (f64, f64, f64) {
    let score = |t: &ContingencyTable| {
        let h = entropy(&t.row_sums, t.n);
        if h == 0.0 {
            1.0
        } else {
            (1.0 - conditional_entropy(t) / h).clamp(0.0, 1.0)
        }
    };
    let homo = score(t);
    let comp = score(&t.transposed());
    (homo, comp, v_measure(homo, comp))
}

fn choose2(x: u64) -> f64 {
    x as f64 * (x as f64 - 1.0) / 2.0
}

/// Hubert–Arabie adjusted Rand index; 1 when the expected and maximum
/// indices coincide.
pub fn adjusted_rand_index(t: &ContingencyTable) -> f64 {
    let index: f64 = t.cells().map(|(_, _, c)| choose2(c)).sum();
    let a: f64 = t.row_sums.iter().map(|&c| choose2(c)).sum();
    let b: f64 = t.col_sums.iter().map(|&c| choose2(c)).sum();
    let pairs = choose2(t.n);
    if pairs == 0.0 {
        return 1.0;
    }
    let expected = a * b / pairs;
    let max = (a + b) / 2.0;
    if max == expected {
        1.0
    } else {
        (index - expected) / (max - expected)
    }
}

/// Expected mutual information under the hypergeometric permutation model,
/// summed exactly over every feasible cell count.
pub fn expected_mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.n as usize;
    let mut lf = vec![0.0; n + 1];
    for i in 1..=n {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &t.row_sums {
        let a = a as usize;
        for &b in &t.col_sums {
            let b = b as usize;
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            for nij in lo..=hi {
                let log_p = lf[a] + lf[b] + lf[n - a] + lf[n - b]
                    - lf[n]
                    - lf[nij]
                    - lf[a - nij]
                    - lf[b - nij]
                    - lf[n + nij - a - b];
                let x = nij as f64;
                emi += x / nf * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with mean-entropy normalization; 0 when the
/// denominator vanishes.
pub fn adjusted_mutual_info(t: &ContingencyTable) -> f64 {
    let mi = mutual_information(t);
    let emi = expected_mutual_information(t);
    let hc = entropy(&t.row_sums, t.n);
    let hk = entropy(&t.col_sums, t.n);
    let denom = (hc + hk) / 2.0 - emi;
    if denom == 0.0 {
        0.0
    } else {
        (mi - emi) / denom
    }
}

/// Mean silhouette over all points with Euclidean distance. `None` when
/// there are fewer than two clusters or every point is its own cluster.
/// Points in singleton clusters score 0.
pub fn silhouette_score(points: &PointSet, labels: &[i64]) -> Result<Option<f64>> {
    let n = points.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let k = distinct.len();
    if k < 2 || k == n {
        return Ok(None);
    }
    let cluster: Vec<usize> = labels.iter().map(|l| distinct.binary_search(l).expect("present")).collect();
    let mut sizes = vec![0usize; k];
    cluster.iter().for_each(|&c| sizes[c] += 1);
    let d = points.pairwise_distances();
    let mut total = 0.0;
    for i in 0..n {
        let own = cluster[i];
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            sums[cluster[j]] += d[i * n + j];
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k).filter(|&c| c != own).map(|c| sums[c] / sizes[c] as f64).fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(Some(total / n as f64))
}

/// Mean of the six metrics, or of the five external ones when silhouette
/// is absent.
pub fn average_evaluation(homo: f64, comp: f64, v: f64, ari: f64, ami: f64, silhouette: Option<f64>) -> f64 {
    let sum = homo + comp + v + ari + ami;
    match silhouette {
        Some(s) => (sum + s) / 6.0,
        None => sum / 5.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub homo: f64,
    pub comp: f64,
    pub v_measure: f64,
    pub ari: f64,
    pub ami: f64,
    pub silhouette: Option<f64>,
    pub avg_ev: f64,
    pub silhouette_defined: bool,
}

impl MetricReport {
    pub fn from_values(homo: f64, comp: f64, v_measure: f64, ari: f64, ami: f64, silhouette: Option<f64>) -> Self {
        MetricReport {
            homo,
            comp,
            v_measure,
            ari,
            ami,
            silhouette,
            avg_ev: average_evaluation(homo, comp, v_measure, ari, ami, silhouette),
            silhouette_defined: silhouette.is_some(),
        }
    }

    /// Scores a prediction against held-out true labels.
    pub fn evaluate(points: &PointSet, labels_true: &[i64], labels_pred: &[i64]) -> Result<Self> {
        let t = ContingencyTable::new(labels_true, labels_pred)?;
        let (homo, comp, v) = homogeneity_completeness_v(&t);
        Ok(Self::from_values(
            homo,
            comp,
            v,
            adjusted_rand_index(&t),
            adjusted_mutual_info(&t),
            silhouette_score(points, labels_pred)?,
        ))
    }
}
