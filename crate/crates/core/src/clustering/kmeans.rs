use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::Rng as _;
use serde_json::json;

use super::{check_k, ClusterAssignment, Diagnostics, PointSet};
use crate::error::Result;
use crate::util::{self, squared_distance, Rng};

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = squared_distance(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding.
fn seed_centers(points: &PointSet, k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let first = rng.gen_range(0..n);
    let mut centers = vec![points.point(first).to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point already coincides with a center
            Err(_) => rng.gen_range(0..n),
        };
        let c = points.point(next).to_vec();
        for (d, p) in d2.iter_mut().zip(points.iter()) {
            *d = d.min(squared_distance(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(points: &PointSet, centers: &[Vec<f64>], labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(p, centers);
        labels[i] = c;
        inertia += d;
    }
    inertia
}

/// Gives every empty cluster the point currently farthest from its center.
/// Returns the inertia after repair.
fn repair_empty(points: &PointSet, centers: &mut [Vec<f64>], labels: &mut [usize], k: usize) -> f64 {
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { break };
        let (far, _) = points
            .iter()
            .enumerate()
            .filter(|(i, _)| sizes[labels[*i]] > 1)
            .map(|(i, p)| (i, squared_distance(p, &centers[labels[i]])))
            .fold((usize::MAX, -1.0), |b, (i, d)| if d > b.1 { (i, d) } else { b });
        if far == usize::MAX {
            break;
        }
        labels[far] = empty;
        centers[empty] = points.point(far).to_vec();
    }
    points
        .iter()
        .zip(labels.iter())
        .map(|(p, &l)| squared_distance(p, &centers[l]))
        .sum()
}

fn update_centers(points: &PointSet, labels: &[usize], k: usize, centers: &mut [Vec<f64>]) {
    let dim = points.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
}

struct LloydRun {
    labels: Vec<usize>,
    inertia: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn lloyd(points: &PointSet, k: usize, max_iter: usize, rng: &mut Rng) -> LloydRun {
    let mut centers = seed_centers(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut prev = labels.clone();
    for it in 0..max_iter.max(1) {
        iterations = it + 1;
        assign(points, &centers, &mut labels);
        let inertia = repair_empty(points, &mut centers, &mut labels, k);
        trace.push(inertia);
        if labels == prev {
            converged = true;
            break;
        }
        prev.clone_from(&labels);
        update_centers(points, &labels, k, &mut centers);
    }
    LloydRun {
        inertia: *trace.last().unwrap(),
        labels,
        iterations,
        converged,
        trace,
    }
}

/// Lloyd's algorithm from k-means++ seeds; best of `n_init` restarts by
/// inertia (ties go to the earlier restart).
pub fn kmeans(points: &PointSet, k: usize, n_init: usize, max_iter: usize, seed: u64) -> Result<ClusterAssignment> {
    kmeans_with_trace(points, k, n_init, max_iter, seed).map(|(a, _)| a)
}

/// Also returns the per-iteration inertia of the winning restart.
pub fn kmeans_with_trace(
    points: &PointSet,
    k: usize,
    n_init: usize,
    max_iter: usize,
    seed: u64,
) -> Result<(ClusterAssignment, Vec<f64>)> {
    check_k(points, k)?;
    let mut rng = util::rng(seed);
    let mut best: Option<LloydRun> = None;
    for _ in 0..n_init.max(1) {
        let run = lloyd(points, k, max_iter, &mut rng);
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let raw: Vec<i64> = best.labels.iter().map(|&l| l as i64).collect();
    let diag = Diagnostics {
        algorithm: "k-means".into(),
        params: [
            ("k".to_string(), json!(k)),
            ("n_init".to_string(), json!(n_init)),
            ("max_iter".to_string(), json!(max_iter)),
            ("seed".to_string(), json!(seed)),
        ]
        .into(),
        iterations: best.iterations,
        converged: best.converged,
        inertia: Some(best.inertia),
        ..Diagnostics::default()
    };
    Ok((ClusterAssignment::from_raw(&raw, diag), best.trace))
}

/// Mini-batch k-means: each iteration samples `batch_size` points, assigns
/// them to the nearest center, and moves each center toward its points with
/// per-center rate 1/count. Best of `n_init` seeds by full-data inertia.
pub fn minibatch_kmeans(
    points: &PointSet,
    k: usize,
    batch_size: usize,
    max_iter: usize,
    n_init: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    check_k(points, k)?;
    let n = points.len();
    let batch = batch_size.clamp(1, n);
    let mut rng = util::rng(seed);
    let mut best: Option<(f64, Vec<usize>, usize, bool)> = None;
    for _ in 0..n_init.max(1) {
        let mut centers = seed_centers(points, k, &mut rng);
        let mut counts = vec![0usize; k];
        let mut converged = false;
        let mut iterations = 0;
        for it in 0..max_iter.max(1) {
            iterations = it + 1;
            let sample: Vec<usize> = if batch >= n {
                (0..n).collect()
            } else {
                let mut s = index::sample(&mut rng, n, batch).into_vec();
                s.sort_unstable();
                s
            };
            let assigned: Vec<usize> = sample.iter().map(|&i| nearest(points.point(i), &centers).0).collect();
            let old = centers.clone();
            for (&i, &c) in sample.iter().zip(&assigned) {
                counts[c] += 1;
                let eta = 1.0 / counts[c] as f64;
                centers[c]
                    .iter_mut()
                    .zip(points.point(i))
                    .for_each(|(m, x)| *m += eta * (x - *m));
            }
            let shift: f64 = old.iter().zip(&centers).map(|(a, b)| squared_distance(a, b)).sum();
            if shift <= 1e-12 {
                converged = true;
                break;
            }
        }
        let mut labels = vec![0; n];
        assign(points, &centers, &mut labels);
        let inertia = repair_empty(points, &mut centers, &mut labels, k);
        if best.as_ref().map_or(true, |b| inertia < b.0) {
            best = Some((inertia, labels, iterations, converged));
        }
    }
    let (inertia, labels, iterations, converged) = best.expect("at least one restart");
    let raw: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    let diag = Diagnostics {
        algorithm: "minibkmea".into(),
        params: [
            ("k".to_string(), json!(k)),
            ("batch_size".to_string(), json!(batch_size)),
            ("max_iter".to_string(), json!(max_iter)),
            ("n_init".to_string(), json!(n_init)),
            ("seed".to_string(), json!(seed)),
        ]
        .into(),
        iterations,
        converged,
        inertia: Some(inertia),
        ..Diagnostics::default()
    };
    Ok(ClusterAssignment::from_raw(&raw, diag))
}
