use std::collections::VecDeque;

use serde_json::json;

use super::{ClusterAssignment, Diagnostics, PointSet, NOISE};
use crate::error::{Error, Result};

fn neighborhoods(points: &PointSet, eps: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let d = points.pairwise_distances();
    (0..n).map(|i| (0..n).filter(|&j| d[i * n + j] <= eps).collect()).collect()
}

fn check(eps: f64, min_samples: usize) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) || min_samples == 0 {
        return Err(Error::invalid(format!("dbscan needs eps > 0 and min_samples >= 1 (got {eps}, {min_samples})")));
    }
    Ok(())
}

/// Indices of core points: at least `min_samples` points (itself included)
/// within `eps`.
pub fn dbscan_core_points(points: &PointSet, eps: f64, min_samples: usize) -> Result<Vec<usize>> {
    check(eps, min_samples)?;
    Ok(neighborhoods(points, eps)
        .iter()
        .enumerate()
        .filter(|(_, nb)| nb.len() >= min_samples)
        .map(|(i, _)| i)
        .collect())
}

/// Density-based clustering. Border points join the first cluster that
/// reaches them in index order; everything else is [`NOISE`].
pub fn dbscan(points: &PointSet, eps: f64, min_samples: usize) -> Result<ClusterAssignment> {
    check(eps, min_samples)?;
    let nbs = neighborhoods(points, eps);
    let core: Vec<bool> = nbs.iter().map(|nb| nb.len() >= min_samples).collect();
    let mut labels = vec![NOISE; points.len()];
    let mut next = 0i64;
    for start in 0..points.len() {
        if !core[start] || labels[start] != NOISE {
            continue;
        }
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            if !core[p] {
                continue;
            }
            for &q in &nbs[p] {
                if labels[q] == NOISE {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    let diag = Diagnostics {
        algorithm: "dbscan".into(),
        params: [("eps".to_string(), json!(eps)), ("min_samples".to_string(), json!(min_samples))].into(),
        iterations: 1,
        converged: true,
        notes: vec![format!("{} core points", core.iter().filter(|&&c| c).count())],
        ..Diagnostics::default()
    };
    Ok(ClusterAssignment::from_raw(&labels, diag))
}

/// Largest distance from a point to its `min_samples`-th nearest other
/// point: the smallest radius at which every point is a core point, so no
/// point is noise. Sensitive to far outliers (which widen it).
/// Falls back to 1.0 when that distance is 0 (heavy duplication).
pub fn default_eps(points: &PointSet, min_samples: usize) -> f64 {
    let n = points.len();
    let d = points.pairwise_distances();
    let rank = min_samples.min(n - 1);
    let m = (0..n)
        .map(|i| {
            let mut row = d[i * n..(i + 1) * n].to_vec();
            row.sort_by(f64::total_cmp);
            row[rank]
        })
        .fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::fixtures::{all_same, blobs3};
    use crate::metrics::{adjusted_rand_index, ContingencyTable};
    use crate::util;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    #[test]
    fn blobs_explicit_eps() {
        let (p, truth) = blobs3();
        let out = dbscan(&p, 2.0, 4).unwrap();
        assert_eq!(out.k_found, 3);
        assert_eq!(out.noise_count(), 0);
        assert_eq!(adjusted_rand_index(&ContingencyTable::new(&truth, &out.labels).unwrap()), 1.0);
    }

    #[test]
    fn all_same_is_one_cluster() {
        let out = dbscan(&all_same(), 0.1, 3).unwrap();
        assert_eq!(out.k_found, 1);
        assert_eq!(out.noise_count(), 0);
    }

    #[test]
    fn isolated_pair_is_noise() {
        let p = PointSet::new(1, vec![0.0, 5.0]).unwrap();
        let out = dbscan(&p, 1.0, 2).unwrap();
        assert_eq!(out.labels, vec![NOISE, NOISE]);
        assert_eq!(out.k_found, 0);
    }

    #[test]
    fn border_point_goes_to_first_cluster() {
        // 1.0 is a border point reachable from the cores 0.3 and 1.7
        let p = PointSet::new(1, vec![0.0, 0.1, 0.2, 0.3, 1.0, 1.7, 1.8, 1.9, 2.0]).unwrap();
        let out = dbscan(&p, 0.75, 4).unwrap();
        assert_eq!(out.labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(dbscan_core_points(&p, 0.75, 4).unwrap(), vec![0, 1, 2, 3, 5, 6, 7, 8]);
    }

    #[test]
    fn invalid_parameters() {
        let p = all_same();
        assert!(dbscan(&p, 0.0, 3).is_err());
        assert!(dbscan(&p, 1.0, 0).is_err());
    }

    #[test]
    fn default_eps_on_blobs_and_duplicates() {
        let (p, _) = blobs3();
        let eps = default_eps(&p, 4);
        assert!(eps > 0.0 && eps < 2.0, "{eps}");
        let out = dbscan(&p, eps, 4).unwrap();
        assert_eq!((out.k_found, out.noise_count()), (3, 0));
        assert_eq!(default_eps(&all_same(), 4), 1.0);
    }

    proptest! {
        #[test]
        fn core_points_independent_of_order(seed in 0u64..300, n in 1usize..40, eps in 0.1f64..3.0, min_samples in 1usize..6) {
            let mut rng = util::rng(seed);
            let data: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(0.0..5.0)).collect();
            let p = PointSet::new(2, data.clone()).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let shuffled: Vec<f64> = perm.iter().flat_map(|&i| data[2 * i..2 * i + 2].to_vec()).collect();
            let q = PointSet::new(2, shuffled).unwrap();
            let mut a = dbscan_core_points(&p, eps, min_samples).unwrap();
            let mut b: Vec<usize> = dbscan_core_points(&q, eps, min_samples).unwrap().into_iter().map(|i| perm[i]).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(&a, &b);

            // core points are never noise, and clusters of core points agree
            let la = dbscan(&p, eps, min_samples).unwrap().labels;
            let lb = dbscan(&q, eps, min_samples).unwrap().labels;
            for &i in &a {
                prop_assert!(la[i] != NOISE);
            }
            let core_a: Vec<i64> = a.iter().map(|&i| la[i]).collect();
            let inv: Vec<usize> = { let mut v = vec![0; n]; for (pos, &i) in perm.iter().enumerate() { v[i] = pos; } v };
            let core_b: Vec<i64> = a.iter().map(|&i| lb[inv[i]]).collect();
            if !core_a.is_empty() {
                let ari = adjusted_rand_index(&ContingencyTable::new(&core_a, &core_b).unwrap());
                prop_assert!((ari - 1.0).abs() < 1e-12);
            }
        }
    }
}
