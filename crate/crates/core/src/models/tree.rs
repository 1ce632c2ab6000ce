//! CART regression trees and bagged forests.
//!
//! Training keeps one index array per feature, presorted by feature value,
//! and partitions all of them stably at each split, so finding the best split
//! of a node costs `O(features * node_size)`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::{derive_seed, seeded_rng};

/// Nodes are stored in preorder: the left child of a split at `i` is `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf(f64),
    Split { feature: u32, threshold: f32, right: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub(crate) fn from_nodes(nodes: Vec<Node>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { right, .. } => 1 + walk(nodes, i + 1).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Goes left when `x[feature] <= threshold`.
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    i = if x[feature as usize] <= f64::from(threshold) {
                        i + 1
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    /// Fits a tree of depth at most `max_depth` (a root-only tree has depth 0).
    pub fn fit(matrix: &[f64], labels: &[f64], n_features: usize, max_depth: usize) -> Result<Self> {
        let presorted = Presorted::new(matrix, labels, n_features)?;
        let all: Vec<u32> = (0..labels.len() as u32).collect();
        Ok(presorted.grow(&presorted.expand(&all), max_depth))
    }
}

/// Column-major copy of the training data plus per-feature sort orders.
struct Presorted<'a> {
    columns: Vec<f64>,
    labels: &'a [f64],
    order: Vec<Vec<u32>>,
}

impl<'a> Presorted<'a> {
    fn new(matrix: &[f64], labels: &'a [f64], n_features: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if n_features == 0 || matrix.len() != n * n_features {
            return Err(Error::FeatureLengthMismatch {
                expected: n * n_features,
                actual: matrix.len(),
            });
        }
        if matrix.iter().chain(labels).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("training data must be finite".to_string()));
        }
        let mut columns = vec![0.0; n * n_features];
        for (i, row) in matrix.chunks_exact(n_features).enumerate() {
            for (f, &v) in row.iter().enumerate() {
                columns[f * n + i] = v;
            }
        }
        let order = (0..n_features)
            .map(|f| {
                let col = &columns[f * n..(f + 1) * n];
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        Ok(Self { columns, labels, order })
    }

    fn value(&self, feature: usize, sample: u32) -> f64 {
        self.columns[feature * self.labels.len() + sample as usize]
    }

    /// Per-feature sorted orders over a multiset of sample indices.
    fn expand(&self, sample: &[u32]) -> Vec<Vec<u32>> {
        let mut counts = vec![0u32; self.labels.len()];
        for &s in sample {
            counts[s as usize] += 1;
        }
        self.order
            .iter()
            .map(|ord| {
                let mut out = Vec::with_capacity(sample.len());
                for &s in ord {
                    for _ in 0..counts[s as usize] {
                        out.push(s);
                    }
                }
                out
            })
            .collect()
    }

    fn grow(&self, order: &[Vec<u32>], max_depth: usize) -> RegressionTree {
        let mut order: Vec<Vec<u32>> = order.to_vec();
        let mut scratch = Vec::with_capacity(order[0].len());
        let mut goes_left = vec![false; self.labels.len()];
        let mut nodes = Vec::new();
        let len = order[0].len();
        self.grow_node(
            &mut order,
            0,
            len,
            0,
            max_depth,
            &mut nodes,
            &mut scratch,
            &mut goes_left,
        );
        RegressionTree { nodes }
    }

    #[allow(clippy::too_many_arguments)]
    fn grow_node(
        &self,
        order: &mut [Vec<u32>],
        lo: usize,
        hi: usize,
        depth: usize,
        max_depth: usize,
        nodes: &mut Vec<Node>,
        scratch: &mut Vec<u32>,
        goes_left: &mut [bool],
    ) {
        let members = &order[0][lo..hi];
        let n = members.len();
        let sum: f64 = members.iter().map(|&s| self.labels[s as usize]).sum();
        let mean = sum / n as f64;
        let split = if depth < max_depth && n >= 2 {
            self.best_split(order, lo, hi, sum)
        } else {
            None
        };
        let Some((feature, threshold)) = split else {
            nodes.push(Node::Leaf(clamp_mean(mean, members, self.labels)));
            return;
        };

        let here = nodes.len();
        nodes.push(Node::Split {
            feature: feature as u32,
            threshold,
            right: 0,
        });
        for &s in &order[feature][lo..hi] {
            goes_left[s as usize] = self.value(feature, s) <= f64::from(threshold);
        }
        let mut n_left = 0;
        for ord in order.iter_mut() {
            let seg = &mut ord[lo..hi];
            scratch.clear();
            let mut w = 0;
            for i in 0..seg.len() {
                let s = seg[i];
                if goes_left[s as usize] {
                    seg[w] = s;
                    w += 1;
                } else {
                    scratch.push(s);
                }
            }
            seg[w..].copy_from_slice(scratch);
            n_left = w;
        }
        let mid = lo + n_left;
        self.grow_node(order, lo, mid, depth + 1, max_depth, nodes, scratch, goes_left);
        let right = nodes.len() as u32;
        if let Node::Split { right: r, .. } = &mut nodes[here] {
            *r = right;
        }
        self.grow_node(order, mid, hi, depth + 1, max_depth, nodes, scratch, goes_left);
    }

    /// Largest reduction in squared error; ties keep the earliest feature and
    /// the smallest threshold.
    fn best_split(&self, order: &[Vec<u32>], lo: usize, hi: usize, sum: f64) -> Option<(usize, f32)> {
        let n = (hi - lo) as f64;
        let base = sum * sum / n;
        let mut best_gain = 0.0;
        let mut best = None;
        for (f, ord) in order.iter().enumerate() {
            let seg = &ord[lo..hi];
            let col = &self.columns[f * self.labels.len()..(f + 1) * self.labels.len()];
            let mut left_sum = 0.0;
            for p in 0..seg.len() - 1 {
                left_sum += self.labels[seg[p] as usize];
                let a = col[seg[p] as usize];
                let b = col[seg[p + 1] as usize];
                if a >= b {
                    continue;
                }
                let nl = (p + 1) as f64;
                let nr = n - nl;
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - base;
                if gain > best_gain * (1.0 + 1e-12) + 1e-12 * base.abs().max(1e-300) {
                    if let Some(t) = threshold_between(a, b) {
                        best_gain = gain;
                        best = Some((f, t));
                    }
                }
            }
        }
        best
    }
}

/// A single-precision threshold `t` with `a <= t < b`, near the midpoint.
pub(crate) fn threshold_between(a: f64, b: f64) -> Option<f32> {
    let mid = (0.5 * a + 0.5 * b) as f32;
    if f64::from(mid) >= a && f64::from(mid) < b {
        return Some(mid);
    }
    let mut t = a as f32;
    if f64::from(t) < a {
        t = t.next_up();
    }
    (f64::from(t) >= a && f64::from(t) < b).then_some(t)
}

/// Guards against the mean drifting outside the member labels by rounding.
fn clamp_mean(mean: f64, members: &[u32], labels: &[f64]) -> f64 {
    let (lo, hi) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
        let y = labels[s as usize];
        (lo.min(y), hi.max(y))
    });
    mean.clamp(lo, hi)
}

/// Bagged trees; tree `t` draws its bootstrap from `derive_seed(seed, t)`.
pub(crate) fn fit_forest(
    matrix: &[f64],
    labels: &[f64],
    n_features: usize,
    trees: usize,
    max_depth: usize,
    seed: u64,
) -> Result<Vec<RegressionTree>> {
    let presorted = Presorted::new(matrix, labels, n_features)?;
    let n = labels.len();
    Ok((0..trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded_rng(derive_seed(seed, t as u64), 0);
            let sample: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            presorted.grow(&presorted.expand(&sample), max_depth)
        })
        .collect())
}
