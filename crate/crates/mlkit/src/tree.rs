// SPDX-License-Identifier: Apache-2.0

//! CART regression trees (variance reduction, axis-aligned splits).
//!
//! Rows are presorted once per feature for a whole ensemble; each node keeps
//! its rows contiguous in every per-feature order, so one tree level costs
//! O(samples x features). Bootstrap duplicates are carried as integer weights.
//!
//! A split stores the largest left-hand training value as its threshold
//! rather than a midpoint, so routing of unseen values is invariant under any
//! monotone rescaling of a feature.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::{check_xy, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_samples_split: 2, min_samples_leaf: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn fit(x: &Matrix, y: &[f64], params: &TreeParams) -> Result<Self> {
        check_xy(x, y, 1)?;
        let pre = Presorted::new(x);
        Ok(Self::fit_weighted(&pre, y, &vec![1; x.rows()], params))
    }

    /// Fits with integer sample multiplicities; a weight of k behaves exactly
    /// like k duplicated rows (bootstrap draws), zero drops the row.
    pub(crate) fn fit_weighted(pre: &Presorted, y: &[f64], weights: &[u32], params: &TreeParams) -> Self {
        let mut b = Builder::new(pre, y, weights, params);
        let Some(n) = b.order.first().map(|o| o.len()) else {
            // no features: the weighted mean is the only possible model
            let total: f64 = weights.iter().map(|&w| w as f64).sum();
            let sum: f64 = weights.iter().zip(y).map(|(&w, v)| w as f64 * v).sum();
            let value = if total > 0.0 { sum / total } else { 0.0 };
            return RegressionTree { nodes: vec![TreeNode::Leaf(value)] };
        };
        if n == 0 {
            return RegressionTree { nodes: vec![TreeNode::Leaf(0.0)] };
        }
        b.grow(0, n, 0);
        RegressionTree { nodes: b.nodes }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf(v) => return *v,
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf(_) => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Every feature's rows sorted once by value, shared by all trees of an
/// ensemble.
pub(crate) struct Presorted {
    sorted: Vec<Vec<Entry>>,
}

#[derive(Clone, Copy)]
struct Entry {
    value: f64,
    row: u32,
}

impl Presorted {
    pub(crate) fn new(x: &Matrix) -> Self {
        let m = x.rows();
        let sorted = (0..x.cols())
            .map(|f| {
                let mut col: Vec<Entry> = (0..m).map(|r| Entry { value: x.get(r, f), row: r as u32 }).collect();
                col.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.row.cmp(&b.row)));
                col
            })
            .collect();
        Presorted { sorted }
    }
}

struct Builder<'a> {
    params: &'a TreeParams,
    ys: &'a [f64],
    ws: Vec<f64>,
    wy: Vec<f64>,
    /// Per feature, entries with nonzero weight in value order. Each node
    /// owns one contiguous range in every feature's list. A feature that is
    /// constant over a node stays constant below it, so its list is no longer
    /// partitioned: the range keeps the right length and value, not the rows.
    order: Vec<Vec<Entry>>,
    /// The node's rows, always partitioned.
    rows: Vec<u32>,
    goes_left: Vec<bool>,
    scratch: Vec<Entry>,
    row_scratch: Vec<u32>,
    nodes: Vec<TreeNode>,
}

impl<'a> Builder<'a> {
    fn new(pre: &Presorted, y: &'a [f64], ws: &[u32], params: &'a TreeParams) -> Self {
        let order: Vec<Vec<Entry>> =
            pre.sorted.iter().map(|o| o.iter().copied().filter(|e| ws[e.row as usize] > 0).collect()).collect();
        let rows = order.first().map_or(Vec::new(), |o| o.iter().map(|e| e.row).collect());
        Builder {
            rows,
            params,
            ys: y,
            ws: ws.iter().map(|&w| w as f64).collect(),
            wy: ws.iter().zip(y).map(|(&w, v)| w as f64 * v).collect(),
            order,
            goes_left: vec![false; y.len()],
            scratch: Vec::with_capacity(y.len()),
            row_scratch: Vec::with_capacity(y.len()),
            nodes: Vec::new(),
        }
    }

    /// (weighted count, weighted sum) of a node's rows.
    fn totals(&self, start: usize, end: usize) -> (f64, f64) {
        let mut n = 0.0;
        let mut s = 0.0;
        for &r in &self.rows[start..end] {
            n += self.ws[r as usize];
            s += self.wy[r as usize];
        }
        (n, s)
    }

    fn grow(&mut self, start: usize, end: usize, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(TreeNode::Leaf(0.0));
        let (n, sum) = self.totals(start, end);
        let value = sum / n;
        let depth_ok = self.params.max_depth.map_or(true, |m| depth < m);
        let split = if depth_ok && n >= self.params.min_samples_split.max(2) as f64 {
            self.best_split(start, end, n, sum)
        } else {
            None
        };
        let Some((feature, pos, threshold)) = split else {
            self.nodes[id as usize] = TreeNode::Leaf(value);
            return id;
        };
        let mid = start + pos;
        self.partition(feature, start, mid, end);
        let left = self.grow(start, mid, depth + 1);
        let right = self.grow(mid, end, depth + 1);
        self.nodes[id as usize] = TreeNode::Split { feature, threshold, left, right };
        id
    }

    /// Returns (feature, left entry count, threshold) of the split with the
    /// largest reduction in squared error, or None when no split helps.
    fn best_split(&self, start: usize, end: usize, n: f64, total: f64) -> Option<(usize, usize, f64)> {
        let min_leaf = self.params.min_samples_leaf.max(1) as f64;
        if n < 2.0 * min_leaf || end - start < 2 {
            return None;
        }
        let mean = total / n;
        let sse: f64 =
            self.rows[start..end].iter().map(|&r| self.ws[r as usize] * (self.ys[r as usize] - mean).powi(2)).sum();
        if sse <= 1e-24 * (1.0 + mean * mean) * n {
            return None;
        }
        let parent = total * total / n;
        let mut best: Option<(usize, usize, f64)> = None;
        let mut best_score = parent + 1e-12 * sse.max(1e-300);
        let (ws, wy) = (&self.ws[..], &self.wy[..]);
        for (f, ord) in self.order.iter().enumerate() {
            let node = &ord[start..end];
            if node[0].value == node[node.len() - 1].value {
                continue;
            }
            let mut left_sum = 0.0;
            let mut left_n = 0.0;
            for (k, pair) in node.windows(2).enumerate() {
                let r = pair[0].row as usize;
                left_sum += wy[r];
                left_n += ws[r];
                if pair[0].value == pair[1].value || left_n < min_leaf || n - left_n < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / left_n + right_sum * right_sum / (n - left_n);
                if score > best_score {
                    best_score = score;
                    best = Some((f, k + 1, pair[0].value));
                }
            }
        }
        best
    }

    fn partition(&mut self, feature: usize, start: usize, mid: usize, end: usize) {
        for (k, e) in self.order[feature][start..end].iter().enumerate() {
            self.goes_left[e.row as usize] = k < mid - start;
        }
        for f in 0..self.order.len() {
            let node = &mut self.order[f][start..end];
            if f == feature || node[0].value == node[node.len() - 1].value {
                continue;
            }
            self.scratch.clear();
            let mut w = 0;
            for k in 0..node.len() {
                let e = node[k];
                if self.goes_left[e.row as usize] {
                    node[w] = e;
                    w += 1;
                } else {
                    self.scratch.push(e);
                }
            }
            node[w..].copy_from_slice(&self.scratch);
        }
        let node = &mut self.rows[start..end];
        let right = &mut self.row_scratch;
        right.clear();
        let mut w = 0;
        for k in 0..node.len() {
            let r = node[k];
            if self.goes_left[r as usize] {
                node[w] = r;
                w += 1;
            } else {
                right.push(r);
            }
        }
        node[w..].copy_from_slice(right);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_is_constant() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let t = RegressionTree::fit(&x, &[3.5], &TreeParams::default()).unwrap();
        assert_eq!(t.predict_row(&[100.0, -4.0]), 3.5);
        assert_eq!(t.n_leaves(), 1);
    }

    #[test]
    fn step_function_is_represented_exactly() {
        let rows: Vec<[f64; 2]> = (0..50).map(|i| [i as f64 * 0.1, (i % 7) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] > 2.05 { 5.0 } else { -1.0 }).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let t = RegressionTree::fit(&x, &y, &TreeParams::default()).unwrap();
        let mse: f64 = t.predict(&x).iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 50.0;
        assert!(mse < 1e-6);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn identical_rows_give_constant_model() {
        let x = Matrix::from_rows(&vec![[1.0, 1.0]; 10]).unwrap();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let t = RegressionTree::fit(&x, &y, &TreeParams::default()).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert!((t.predict_row(&[1.0, 1.0]) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn depth_and_leaf_limits_are_honoured() {
        let rows: Vec<[f64; 1]> = (0..64).map(|i| [i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let t = RegressionTree::fit(&x, &y, &TreeParams { max_depth: Some(3), ..Default::default() }).unwrap();
        assert!(t.depth() <= 3);
        let t = RegressionTree::fit(&x, &y, &TreeParams { min_samples_leaf: 10, ..Default::default() }).unwrap();
        assert!(t.n_leaves() <= 6);
    }
}
