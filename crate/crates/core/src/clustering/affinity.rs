use serde_json::json;

use super::{ClusterAssignment, Diagnostics, PointSet};
use crate::error::{Error, Result};
use crate::util::{median, squared_distance};

fn diagnostics(damping: f64, max_iter: usize, convergence_iter: usize, preference: f64) -> Diagnostics {
    Diagnostics {
        algorithm: "affinity".into(),
        params: [
            ("damping".to_string(), json!(damping)),
            ("max_iter".to_string(), json!(max_iter)),
            ("convergence_iter".to_string(), json!(convergence_iter)),
            ("preference".to_string(), json!(preference)),
        ]
        .into(),
        ..Diagnostics::default()
    }
}

/// Responsibility/availability message passing on `s(i,j) = −‖xi−xj‖²`
/// with every preference set to the median off-diagonal similarity.
/// Deterministic: no tie-breaking noise is added. Stops once the exemplar
/// set has been stable for `convergence_iter` iterations; otherwise returns
/// the last state with `converged = false`.
pub fn affinity_propagation(points: &PointSet, damping: f64, max_iter: usize, convergence_iter: usize) -> Result<ClusterAssignment> {
    if !(0.5..1.0).contains(&damping) {
        return Err(Error::invalid(format!("damping must be in [0.5, 1), got {damping}")));
    }
    let n = points.len();
    let mut s = vec![0.0; n * n];
    let mut off = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s[i * n + j] = -squared_distance(points.point(i), points.point(j));
                off.push(s[i * n + j]);
            }
        }
    }
    let preference = if off.is_empty() { 0.0 } else { median(&mut off) };
    let mut diag = diagnostics(damping, max_iter, convergence_iter, preference);

    if off.iter().all(|&v| v == off.first().copied().unwrap_or(0.0)) {
        diag.converged = true;
        diag.notes.push("all similarities equal; single cluster".into());
        return Ok(ClusterAssignment::from_raw(&vec![0; n], diag));
    }
    for i in 0..n {
        s[i * n + i] = preference;
    }

    let mut r = vec![0.0; n * n];
    let mut a = vec![0.0; n * n];
    let mut exemplars: Vec<bool> = vec![false; n];
    let mut stable = 0;
    for it in 0..max_iter {
        // responsibilities
        for i in 0..n {
            let row = i * n;
            let (mut first, mut second, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
            for k in 0..n {
                let v = a[row + k] + s[row + k];
                if v > first {
                    second = first;
                    first = v;
                    arg = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == arg { second } else { first };
                let new = s[row + k] - competitor;
                r[row + k] = damping * r[row + k] + (1.0 - damping) * new;
            }
        }
        // availabilities
        for k in 0..n {
            let positive: f64 = (0..n).filter(|&i| i != k).map(|i| r[i * n + k].max(0.0)).sum();
            for i in 0..n {
                let new = if i == k {
                    positive
                } else {
                    (r[k * n + k] + positive - r[i * n + k].max(0.0)).min(0.0)
                };
                a[i * n + k] = damping * a[i * n + k] + (1.0 - damping) * new;
            }
        }
        let current: Vec<bool> = (0..n).map(|k| r[k * n + k] + a[k * n + k] > 0.0).collect();
        stable = if current == exemplars { stable + 1 } else { 1 };
        exemplars = current;
        diag.iterations = it + 1;
        if stable >= convergence_iter && exemplars.iter().any(|&e| e) {
            diag.converged = true;
            break;
        }
    }

    let mut ex: Vec<usize> = (0..n).filter(|&k| exemplars[k]).collect();
    if ex.is_empty() {
        diag.notes.push("no exemplars emerged; single cluster".into());
        return Ok(ClusterAssignment::from_raw(&vec![0; n], diag));
    }
    let assign = |ex: &[usize]| -> Vec<usize> {
        (0..n)
            .map(|i| match ex.iter().position(|&e| e == i) {
                Some(c) => c,
                None => {
                    let mut best = 0;
                    for c in 1..ex.len() {
                        if s[i * n + ex[c]] > s[i * n + ex[best]] {
                            best = c;
                        }
                    }
                    best
                }
            })
            .collect()
    };
    // refine: each cluster's exemplar becomes its most central member
    let labels = assign(&ex);
    for (c, e) in ex.iter_mut().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let score = |m: usize| members.iter().filter(|&&i| i != m).map(|&i| s[i * n + m]).sum::<f64>();
        let mut best = members[0];
        for &m in &members[1..] {
            if score(m) > score(best) {
                best = m;
            }
        }
        *e = best;
    }
    let labels = assign(&ex);
    diag.notes.push(format!("exemplars {ex:?}"));
    let raw: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    Ok(ClusterAssignment::from_raw(&raw, diag))
}
