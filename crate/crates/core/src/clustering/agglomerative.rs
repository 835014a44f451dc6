use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_k, ClusterAssignment, Diagnostics, PointSet};
use crate::error::{Error, Result};
use crate::util::squared_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Ward,
    Complete,
    Average,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Ward => "ward",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        })
    }
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ward" => Ok(Linkage::Ward),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            _ => Err(Error::invalid(format!("unknown linkage `{s}`"))),
        }
    }
}

/// Bottom-up merging to `k` clusters with Lance–Williams updates.
/// Ties go to the smallest `(i, j)` pair.
pub fn agglomerative(points: &PointSet, k: usize, linkage: Linkage) -> Result<ClusterAssignment> {
    agglomerative_weighted(points, &vec![1.0; points.len()], k, linkage)
}

/// As [`agglomerative`], but each input point stands for a cluster of
/// `weights[i]` members located at that point (used for BIRCH's global
/// step). Ward distances are the merge cost `2·ni·nj/(ni+nj)·‖ci−cj‖²`.
pub fn agglomerative_weighted(points: &PointSet, weights: &[f64], k: usize, linkage: Linkage) -> Result<ClusterAssignment> {
    check_k(points, k)?;
    let n = points.len();
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::invalid("cluster weights must be positive"));
    }

    let mut size = weights.to_vec();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let sq = squared_distance(points.point(i), points.point(j));
            let v = match linkage {
                Linkage::Ward => 2.0 * size[i] * size[j] / (size[i] + size[j]) * sq,
                Linkage::Complete | Linkage::Average => sq.sqrt(),
            };
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }

    let mut active = vec![true; n];
    let mut member_of: Vec<usize> = (0..n).collect();
    let mut clusters = n;
    let mut merges = 0;
    while clusters > k {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if d[i * n + j] < best.2 {
                    best = (i, j, d[i * n + j]);
                }
            }
        }
        let (i, j, dij) = best;
        for m in (0..n).filter(|&m| active[m] && m != i && m != j) {
            let (dmi, dmj) = (d[m * n + i], d[m * n + j]);
            let v = match linkage {
                Linkage::Ward => {
                    let (nm, ni, nj) = (size[m], size[i], size[j]);
                    ((nm + ni) * dmi + (nm + nj) * dmj - nm * dij) / (nm + ni + nj)
                }
                Linkage::Complete => dmi.max(dmj),
                Linkage::Average => (size[i] * dmi + size[j] * dmj) / (size[i] + size[j]),
            };
            d[m * n + i] = v;
            d[i * n + m] = v;
        }
        size[i] += size[j];
        active[j] = false;
        member_of.iter_mut().filter(|c| **c == j).for_each(|c| *c = i);
        clusters -= 1;
        merges += 1;
    }

    let raw: Vec<i64> = member_of.iter().map(|&c| c as i64).collect();
    let diag = Diagnostics {
        algorithm: "agglom".into(),
        params: [("k".to_string(), json!(k)), ("linkage".to_string(), json!(linkage.to_string()))].into(),
        iterations: merges,
        converged: true,
        ..Diagnostics::default()
    };
    Ok(ClusterAssignment::from_raw(&raw, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::fixtures::blobs3;
    use crate::metrics::{adjusted_rand_index, ContingencyTable};
    use crate::util;
    use proptest::prelude::*;
    use rand::Rng;

    fn line(xs: &[f64]) -> PointSet {
        PointSet::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn blobs_with_every_linkage() {
        let (p, truth) = blobs3();
        for linkage in [Linkage::Ward, Linkage::Complete, Linkage::Average] {
            let out = agglomerative(&p, 3, linkage).unwrap();
            let ari = adjusted_rand_index(&ContingencyTable::new(&truth, &out.labels).unwrap());
            assert_eq!(ari, 1.0, "{linkage}");
        }
    }

    #[test]
    fn k_equals_n_is_identity() {
        let p = line(&[3.0, 1.0, 2.0, 9.0]);
        assert_eq!(agglomerative(&p, 4, Linkage::Ward).unwrap().labels, vec![0, 1, 2, 3]);
        assert!(agglomerative(&p, 5, Linkage::Ward).is_err());
    }

    #[test]
    fn average_merges_nearest_pair_first() {
        let out = agglomerative(&line(&[0.0, 1.0, 10.0]), 2, Linkage::Average).unwrap();
        assert_eq!(out.labels, vec![0, 0, 1]);
    }

    #[test]
    fn ties_go_to_smallest_pair() {
        // equal gaps: (0,1) is merged before (1,2) or (2,3)
        let out = agglomerative(&line(&[0.0, 1.0, 2.0, 3.0]), 3, Linkage::Complete).unwrap();
        assert_eq!(out.labels, vec![0, 0, 1, 2]);
    }

    #[test]
    fn weighted_ward_respects_mass() {
        // Unit weights merge 0 with 4 (cost 16 < 25); a heavy point at 0
        // nearly doubles that cost, so 4 joins 9 instead.
        let p = line(&[0.0, 4.0, 9.0]);
        let unit = agglomerative_weighted(&p, &[1.0, 1.0, 1.0], 2, Linkage::Ward).unwrap();
        assert_eq!(unit.labels, vec![0, 0, 1]);
        let out = agglomerative_weighted(&p, &[100.0, 1.0, 1.0], 2, Linkage::Ward).unwrap();
        assert_eq!(out.labels, vec![0, 1, 1]);
        assert!(agglomerative_weighted(&p, &[1.0, 0.0, 1.0], 2, Linkage::Ward).is_err());
    }

    /// Oracle: Ward's cost of merging two clusters equals the increase in
    /// total within-cluster sum of squares, so the greedy sequence can be
    /// replayed by recomputing SSE from scratch.
    fn naive_ward(points: &PointSet, k: usize) -> Vec<usize> {
        let n = points.len();
        let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let sse = |g: &[usize]| {
            let dim = points.dim();
            let mean: Vec<f64> = (0..dim).map(|d| g.iter().map(|&i| points.point(i)[d]).sum::<f64>() / g.len() as f64).collect();
            g.iter().map(|&i| squared_distance(points.point(i), &mean)).sum::<f64>()
        };
        while groups.len() > k {
            let mut best = (0, 0, f64::INFINITY);
            for a in 0..groups.len() {
                for b in a + 1..groups.len() {
                    let merged: Vec<usize> = groups[a].iter().chain(&groups[b]).copied().collect();
                    let cost = sse(&merged) - sse(&groups[a]) - sse(&groups[b]);
                    if cost < best.2 - 1e-9 {
                        best = (a, b, cost);
                    }
                }
            }
            let b = groups.remove(best.1);
            groups[best.0].extend(b);
        }
        let mut labels = vec![0; n];
        for (c, g) in groups.iter().enumerate() {
            g.iter().for_each(|&i| labels[i] = c);
        }
        labels
    }

    proptest! {
        #[test]
        fn ward_matches_sse_oracle(seed in 0u64..200, n in 2usize..12, k in 1usize..5) {
            let mut rng = util::rng(seed);
            let data: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let p = PointSet::new(2, data).unwrap();
            let k = k.min(n);
            let ours = agglomerative(&p, k, Linkage::Ward).unwrap();
            let oracle: Vec<i64> = naive_ward(&p, k).into_iter().map(|l| l as i64).collect();
            let ari = adjusted_rand_index(&ContingencyTable::new(&oracle, &ours.labels).unwrap());
            prop_assert!((ari - 1.0).abs() < 1e-12);
        }

        #[test]
        fn exactly_k_clusters(seed in 0u64..200, n in 1usize..30, k in 1usize..6) {
            let mut rng = util::rng(seed);
            let data: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let p = PointSet::new(1, data).unwrap();
            let k = k.min(n);
            for linkage in [Linkage::Ward, Linkage::Complete, Linkage::Average] {
                prop_assert_eq!(agglomerative(&p, k, linkage).unwrap().k_found, k);
            }
        }
    }
}
