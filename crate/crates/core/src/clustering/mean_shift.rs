use serde_json::json;

use super::{ClusterAssignment, Diagnostics, PointSet};
use crate::error::{Error, Result};
use crate::util::{median, squared_distance};

/// Half the median pairwise distance; 1.0 when that is 0.
pub fn default_bandwidth(points: &PointSet) -> f64 {
    let n = points.len();
    let mut d: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| points.distance(i, j)).collect();
    if d.is_empty() {
        return 1.0;
    }
    let m = median(&mut d) / 2.0;
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Flat-kernel mode seeking from every point. Modes closer than
/// `bandwidth / 2` are merged, better-supported modes first; points take
/// the nearest surviving mode.
pub fn mean_shift(points: &PointSet, bandwidth: f64, max_iter: usize) -> Result<ClusterAssignment> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let bw2 = bandwidth * bandwidth;
    let tol = 1e-3 * bandwidth;
    let dim = points.dim();
    let mut all_converged = true;
    let mut max_steps = 0;
    let mut modes: Vec<(Vec<f64>, usize)> = Vec::with_capacity(points.len());
    for start in points.iter() {
        let mut x = start.to_vec();
        let mut support = 0;
        let mut converged = false;
        for step in 0..max_iter.max(1) {
            let mut mean = vec![0.0; dim];
            support = 0;
            for p in points.iter().filter(|p| squared_distance(p, &x) <= bw2) {
                mean.iter_mut().zip(p).for_each(|(m, v)| *m += v);
                support += 1;
            }
            // the start point is always inside its own first window
            mean.iter_mut().for_each(|m| *m /= support as f64);
            let shift = squared_distance(&mean, &x).sqrt();
            x = mean;
            max_steps = max_steps.max(step + 1);
            if shift <= tol {
                converged = true;
                break;
            }
        }
        all_converged &= converged;
        modes.push((x, support));
    }

    let mut order: Vec<usize> = (0..modes.len()).collect();
    order.sort_by(|&a, &b| modes[b].1.cmp(&modes[a].1).then(a.cmp(&b)));
    let merge2 = bw2 / 4.0;
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for i in order {
        if kept.iter().all(|m| squared_distance(m, &modes[i].0) > merge2) {
            kept.push(modes[i].0.clone());
        }
    }
    let raw: Vec<i64> = points
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, m) in kept.iter().enumerate() {
                let d = squared_distance(p, m);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0 as i64
        })
        .collect();
    let diag = Diagnostics {
        algorithm: "meanshift".into(),
        params: [("bandwidth".to_string(), json!(bandwidth)), ("max_iter".to_string(), json!(max_iter))].into(),
        iterations: max_steps,
        converged: all_converged,
        notes: vec![format!("{} modes", kept.len())],
        ..Diagnostics::default()
    };
    Ok(ClusterAssignment::from_raw(&raw, diag))
}
