use serde_json::json;

use super::{agglomerative_weighted, check_k, ClusterAssignment, Diagnostics, Linkage, PointSet};
use crate::error::{Error, Result};
use crate::util::squared_distance;

/// Clustering feature: count, linear sum and squared-norm sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringFeature {
    pub n: usize,
    pub ls: Vec<f64>,
    pub ss: f64,
}

impl ClusteringFeature {
    pub fn from_point(x: &[f64]) -> Self {
        ClusteringFeature {
            n: 1,
            ls: x.to_vec(),
            ss: x.iter().map(|v| v * v).sum(),
        }
    }

    pub fn merged(&self, other: &Self) -> Self {
        ClusteringFeature {
            n: self.n + other.n,
            ls: self.ls.iter().zip(&other.ls).map(|(a, b)| a + b).collect(),
            ss: self.ss + other.ss,
        }
    }

    pub fn absorb(&mut self, other: &Self) {
        self.n += other.n;
        self.ls.iter_mut().zip(&other.ls).for_each(|(a, b)| *a += b);
        self.ss += other.ss;
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.ls.iter().map(|v| v / self.n as f64).collect()
    }

    /// Root-mean-square distance of members to the centroid.
    pub fn radius(&self) -> f64 {
        let c = self.centroid();
        let c2: f64 = c.iter().map(|v| v * v).sum();
        (self.ss / self.n as f64 - c2).max(0.0).sqrt()
    }
}

struct Entry {
    cf: ClusteringFeature,
    /// Child node for inner entries, subcluster id for leaf entries.
    target: usize,
}

struct Node {
    leaf: bool,
    entries: Vec<Entry>,
}

struct CfTree {
    nodes: Vec<Node>,
    root: usize,
    threshold: f64,
    branching: usize,
    subclusters: usize,
}

fn closest(entries: &[Entry], x: &[f64]) -> Option<usize> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (i, e) in entries.iter().enumerate() {
        let d = squared_distance(&e.cf.centroid(), x);
        if d < best_d {
            best_d = d;
            best = Some(i);
        }
    }
    best
}

fn total(entries: &[Entry]) -> ClusteringFeature {
    let mut it = entries.iter();
    let mut cf = it.next().expect("non-empty node").cf.clone();
    it.for_each(|e| cf.absorb(&e.cf));
    cf
}

impl CfTree {
    fn new(threshold: f64, branching: usize) -> Self {
        CfTree {
            nodes: vec![Node {
                leaf: true,
                entries: Vec::new(),
            }],
            root: 0,
            threshold,
            branching,
            subclusters: 0,
        }
    }

    /// Inserts a point; returns the id of the subcluster it joined.
    fn insert(&mut self, x: &[f64]) -> usize {
        let point = ClusteringFeature::from_point(x);
        let (id, split) = self.insert_at(self.root, &point);
        if let Some(sibling) = split {
            let old = self.root;
            let entries = vec![
                Entry {
                    cf: total(&self.nodes[old].entries),
                    target: old,
                },
                Entry {
                    cf: total(&self.nodes[sibling].entries),
                    target: sibling,
                },
            ];
            self.nodes.push(Node { leaf: false, entries });
            self.root = self.nodes.len() - 1;
        }
        id
    }

    fn insert_at(&mut self, node: usize, point: &ClusteringFeature) -> (usize, Option<usize>) {
        let x = &point.ls;
        let id;
        if self.nodes[node].leaf {
            let entries = &mut self.nodes[node].entries;
            match closest(entries, x) {
                Some(i) if entries[i].cf.merged(point).radius() <= self.threshold => {
                    entries[i].cf.absorb(point);
                    return (entries[i].target, None);
                }
                _ => {
                    id = self.subclusters;
                    self.subclusters += 1;
                    entries.push(Entry {
                        cf: point.clone(),
                        target: id,
                    });
                }
            }
        } else {
            let i = closest(&self.nodes[node].entries, x).expect("inner nodes are non-empty");
            let child = self.nodes[node].entries[i].target;
            let (sub, split) = self.insert_at(child, point);
            id = sub;
            match split {
                None => self.nodes[node].entries[i].cf.absorb(point),
                Some(sibling) => {
                    self.nodes[node].entries[i].cf = total(&self.nodes[child].entries);
                    let cf = total(&self.nodes[sibling].entries);
                    self.nodes[node].entries.push(Entry { cf, target: sibling });
                }
            }
        }
        if self.nodes[node].entries.len() > self.branching {
            (id, Some(self.split(node)))
        } else {
            (id, None)
        }
    }

    /// Splits around the farthest pair of entry centroids; returns the new
    /// sibling node.
    fn split(&mut self, node: usize) -> usize {
        let entries = std::mem::take(&mut self.nodes[node].entries);
        let centroids: Vec<Vec<f64>> = entries.iter().map(|e| e.cf.centroid()).collect();
        let (mut a, mut b, mut far) = (0, 1, -1.0);
        for i in 0..centroids.len() {
            for j in i + 1..centroids.len() {
                let d = squared_distance(&centroids[i], &centroids[j]);
                if d > far {
                    (a, b, far) = (i, j, d);
                }
            }
        }
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for (i, e) in entries.into_iter().enumerate() {
            let to_right = i == b || (i != a && squared_distance(&centroids[i], &centroids[b]) < squared_distance(&centroids[i], &centroids[a]));
            if to_right {
                right.push(e);
            } else {
                left.push(e);
            }
        }
        let leaf = self.nodes[node].leaf;
        self.nodes[node].entries = left;
        self.nodes.push(Node { leaf, entries: right });
        self.nodes.len() - 1
    }

    /// Leaf subclusters as `(id, cf)`, sorted by id.
    fn subclusters(&self) -> Vec<(usize, ClusteringFeature)> {
        let mut out: Vec<(usize, ClusteringFeature)> = self
            .nodes
            .iter()
            .filter(|n| n.leaf)
            .flat_map(|n| n.entries.iter().map(|e| (e.target, e.cf.clone())))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

/// BIRCH: builds a CF tree, then merges the leaf subclusters to `k` with
/// weighted Ward. Each point takes the label of the subcluster it joined.
/// `k` larger than the number of subclusters is clamped (noted in the
/// diagnostics).
pub fn birch(points: &PointSet, threshold: f64, branching: usize, k: usize) -> Result<ClusterAssignment> {
    check_k(points, k)?;
    if !(threshold > 0.0 && threshold.is_finite()) || branching < 2 {
        return Err(Error::invalid(format!(
            "birch needs threshold > 0 and branching >= 2 (got {threshold}, {branching})"
        )));
    }
    let mut tree = CfTree::new(threshold, branching);
    let joined: Vec<usize> = points.iter().map(|p| tree.insert(p)).collect();
    let subs = tree.subclusters();

    let mut notes = vec![format!("{} leaf subclusters", subs.len())];
    let k_used = if k > subs.len() {
        notes.push(format!("k = {k} exceeds the number of subclusters; clamped to {}", subs.len()));
        subs.len()
    } else {
        k
    };
    let centroids: Vec<Vec<f64>> = subs.iter().map(|(_, cf)| cf.centroid()).collect();
    let weights: Vec<f64> = subs.iter().map(|(_, cf)| cf.n as f64).collect();
    let global = agglomerative_weighted(&PointSet::from_rows(&centroids)?, &weights, k_used, Linkage::Ward)?;
    // subcluster ids are 0..subs.len() in order, so they index `global`
    let raw: Vec<i64> = joined.iter().map(|&id| global.labels[id]).collect();

    let diag = Diagnostics {
        algorithm: "birch_fn".into(),
        params: [
            ("threshold".to_string(), json!(threshold)),
            ("branching".to_string(), json!(branching)),
            ("k".to_string(), json!(k)),
        ]
        .into(),
        iterations: 1,
        converged: true,
        notes,
        ..Diagnostics::default()
    };
    Ok(ClusterAssignment::from_raw(&raw, diag))
}
