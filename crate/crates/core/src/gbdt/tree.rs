//! Regression trees grown with second-order statistics and L1/L2-regularized leaves.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// `sign(g) * max(0, |g| - alpha)`.
#[inline]
pub fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

/// Optimal leaf weight `-soft_threshold(G, alpha) / (H + lambda)`.
#[inline]
pub fn leaf_weight(g: f64, h: f64, alpha: f64, lambda: f64) -> f64 {
    let t = soft_threshold(g, alpha);
    if t == 0.0 {
        0.0
    } else {
        -t / (h + lambda)
    }
}

/// Structure score `soft_threshold(G, alpha)^2 / (H + lambda)`.
#[inline]
pub fn leaf_score(g: f64, h: f64, alpha: f64, lambda: f64) -> f64 {
    let t = soft_threshold(g, alpha);
    if t == 0.0 {
        0.0
    } else {
        t * t / (h + lambda)
    }
}

/// Loss reduction of splitting a parent `(G, H)` into `(G_L, H_L)` and `(G - G_L, H - H_L)`.
#[inline]
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, alpha: f64, lambda: f64) -> f64 {
    0.5 * (leaf_score(gl, hl, alpha, lambda) + leaf_score(gr, hr, alpha, lambda)
        - leaf_score(gl + gr, hl + hr, alpha, lambda))
}

/// Splitting point between two consecutive distinct sorted values. Rows go left when
/// `x < threshold`.
#[inline]
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Flattened tree. Node `i` is a leaf when `split_feature[i] < 0`; leaves keep their
/// weight in `value`, internal nodes their gain in `gain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub feature_subset: Vec<usize>,
    pub split_feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
    pub gain: Vec<f64>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            feature_subset: Vec::new(),
            split_feature: vec![-1],
            threshold: vec![0.0],
            left: vec![0],
            right: vec![0],
            value: vec![value],
            gain: vec![0.0],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.split_feature.len()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.split_feature[node] < 0
    }

    /// Leaf weight reached by `row`.
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut node = 0usize;
        loop {
            let f = self.split_feature[node];
            if f < 0 {
                return self.value[node];
            }
            node = if row[f as usize] < self.threshold[node] {
                self.left[node] as usize
            } else {
                self.right[node] as usize
            };
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &RegressionTree, node: usize) -> usize {
            if t.is_leaf(node) {
                0
            } else {
                1 + walk(t, t.left[node] as usize).max(walk(t, t.right[node] as usize))
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.split_feature.iter().filter(|&&f| f < 0).count()
    }

    /// Checks node links, reachability from the root, and that splits use sampled columns.
    pub fn check(&self, n_features: usize, max_depth: usize) -> Result<(), String> {
        let n = self.n_nodes();
        if n == 0 {
            return Err("empty tree".into());
        }
        for arr_len in [self.threshold.len(), self.left.len(), self.right.len(), self.value.len(), self.gain.len()] {
            if arr_len != n {
                return Err("node arrays have different lengths".into());
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((node, depth)) = stack.pop() {
            if std::mem::replace(&mut seen[node], true) {
                return Err(format!("node {node} reached twice"));
            }
            let f = self.split_feature[node];
            if f < 0 {
                continue;
            }
            let f = f as usize;
            if f >= n_features || !self.feature_subset.contains(&f) {
                return Err(format!("node {node} splits on feature {f} outside the sampled columns"));
            }
            if depth + 1 > max_depth {
                return Err(format!("tree deeper than {max_depth}"));
            }
            for child in [self.left[node] as usize, self.right[node] as usize] {
                if child >= n || child <= node {
                    return Err(format!("node {node} has bad child {child}"));
                }
                stack.push((child, depth + 1));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err("unreachable nodes".into());
        }
        Ok(())
    }
}

/// Best split found at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Exact greedy search over `features` for rows already sorted per feature.
/// Candidates are visited feature by feature in the given order and by ascending
/// threshold; a later candidate wins only with a strictly larger gain.
pub fn best_split(
    x: &Matrix,
    grad: &[f64],
    hess: &[f64],
    sorted: &[(usize, Vec<usize>)],
    g_total: f64,
    h_total: f64,
    alpha: f64,
    lambda: f64,
) -> Option<Split> {
    let parent = leaf_score(g_total, h_total, alpha, lambda);
    let mut best: Option<Split> = None;
    for (feature, rows) in sorted {
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..rows.len().saturating_sub(1) {
            let r = rows[k];
            gl += grad[r];
            hl += hess[r];
            let lo = x.get(r, *feature);
            let hi = x.get(rows[k + 1], *feature);
            if !(lo < hi) {
                continue;
            }
            let gr = g_total - gl;
            let hr = h_total - hl;
            let gain = 0.5
                * (leaf_score(gl, hl, alpha, lambda) + leaf_score(gr, hr, alpha, lambda) - parent);
            if best.map_or(true, |b| gain > b.gain) {
                best = Some(Split {
                    feature: *feature,
                    threshold: midpoint(lo, hi),
                    gain,
                });
            }
        }
    }
    best
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub min_split_gain: f64,
}

/// Grows one tree. `sorted_by_feature[f]` holds every training row index ordered by
/// column `f`. Writes the leaf weight of each training row into `row_leaf`.
pub(crate) fn grow_tree(
    x: &Matrix,
    grad: &[f64],
    hess: &[f64],
    feature_subset: Vec<usize>,
    sorted_by_feature: &[Vec<usize>],
    params: &TreeParams,
    row_leaf: &mut [f64],
) -> RegressionTree {
    let mut tree = RegressionTree {
        feature_subset,
        split_feature: Vec::new(),
        threshold: Vec::new(),
        left: Vec::new(),
        right: Vec::new(),
        value: Vec::new(),
        gain: Vec::new(),
    };
    let root: Vec<(usize, Vec<usize>)> = tree
        .feature_subset
        .iter()
        .map(|&f| (f, sorted_by_feature[f].clone()))
        .collect();
    let all_rows: Vec<usize> = (0..x.n_rows()).collect();
    let mut goes_left = vec![false; x.n_rows()];
    grow_node(&mut tree, x, grad, hess, root, all_rows, 0, params, row_leaf, &mut goes_left);
    tree
}

#[allow(clippy::too_many_arguments)]
fn grow_node(
    tree: &mut RegressionTree,
    x: &Matrix,
    grad: &[f64],
    hess: &[f64],
    sorted: Vec<(usize, Vec<usize>)>,
    rows: Vec<usize>,
    depth: usize,
    p: &TreeParams,
    row_leaf: &mut [f64],
    goes_left: &mut [bool],
) -> u32 {
    let id = tree.split_feature.len();
    tree.split_feature.push(-1);
    tree.threshold.push(0.0);
    tree.left.push(0);
    tree.right.push(0);
    tree.value.push(0.0);
    tree.gain.push(0.0);

    let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + grad[r], h + hess[r]));
    let split = if depth < p.max_depth && rows.len() >= 2 {
        best_split(x, grad, hess, &sorted, g, h, p.alpha, p.lambda).filter(|s| s.gain > p.min_split_gain)
    } else {
        None
    };

    let Some(split) = split else {
        let w = leaf_weight(g, h, p.alpha, p.lambda);
        tree.value[id] = w;
        for &r in &rows {
            row_leaf[r] = w;
        }
        return id as u32;
    };

    for &r in &rows {
        goes_left[r] = x.get(r, split.feature) < split.threshold;
    }
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| goes_left[r]);
    let mut left_sorted = Vec::with_capacity(sorted.len());
    let mut right_sorted = Vec::with_capacity(sorted.len());
    for (f, list) in sorted {
        let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&r| goes_left[r]);
        left_sorted.push((f, l));
        right_sorted.push((f, r));
    }

    tree.split_feature[id] = split.feature as i32;
    tree.threshold[id] = split.threshold;
    tree.gain[id] = split.gain;
    let l = grow_node(tree, x, grad, hess, left_sorted, left_rows, depth + 1, p, row_leaf, goes_left);
    let r = grow_node(tree, x, grad, hess, right_sorted, right_rows, depth + 1, p, row_leaf, goes_left);
    tree.left[id] = l;
    tree.right[id] = r;
    id as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_leaf_weights() {
        assert_eq!(leaf_weight(5.0, 4.0, 1.0, 1.0), -0.8);
        assert_eq!(leaf_weight(-5.0, 4.0, 1.0, 1.0), 0.8);
        assert_eq!(leaf_weight(0.5, 4.0, 1.0, 1.0), 0.0);
        assert_eq!(soft_threshold(-0.3, 0.0), -0.3);
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a < m && !(b < m));
        assert_eq!(midpoint(0.0, 1.0), 0.5);
    }

    #[test]
    fn hand_traced_tree() {
        // root: x1 < 0.5 ? (x0 < 2 ? 0.25 : -1) : 3
        let t = RegressionTree {
            feature_subset: vec![0, 1],
            split_feature: vec![1, 0, -1, -1, -1],
            threshold: vec![0.5, 2.0, 0.0, 0.0, 0.0],
            left: vec![1, 2, 0, 0, 0],
            right: vec![4, 3, 0, 0, 0],
            value: vec![0.0, 0.0, 0.25, -1.0, 3.0],
            gain: vec![1.0, 0.5, 0.0, 0.0, 0.0],
        };
        assert!(t.check(2, 2).is_ok());
        assert!(t.check(2, 1).is_err());
        assert_eq!(t.leaf_value(&[1.0, 0.0]), 0.25);
        assert_eq!(t.leaf_value(&[2.0, 0.0]), -1.0);
        assert_eq!(t.leaf_value(&[-7.0, 0.5]), 3.0);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.n_leaves(), 3);
    }
}
