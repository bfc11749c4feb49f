use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Matrix, Rng};

use super::{check_training_set, check_width};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per node; `None` means ⌈√d⌉.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_features: None, min_samples_split: 2, bootstrap: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf { counts: Vec<u32> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// CART tree; node 0 is the root. Samples with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn leaf_for(&self, x: &[f64]) -> &[u32] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { counts } => Some(counts.as_slice()),
            TreeNode::Split { .. } => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub n_classes: usize,
    pub max_features: usize,
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    classes: usize,
    max_features: usize,
    min_samples_split: usize,
}

impl Builder<'_> {
    fn counts(&self, samples: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.classes];
        samples.iter().for_each(|&s| c[self.y[s]] += 1);
        c
    }

    /// Best split by Gini among up to `max_features` non-constant features
    /// drawn in random order. The score Σ l²/n_l + Σ r²/n_r is maximal
    /// exactly where the weighted child impurity is minimal.
    fn best_split(&self, samples: &[usize], rng: &mut Rng) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        let mut column: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
        for feature in rng.permutation(self.x.cols()) {
            if visited == self.max_features {
                break;
            }
            column.clear();
            column.extend(samples.iter().map(|&s| (self.x[(s, feature)], self.y[s])));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            if column[0].0 == column[column.len() - 1].0 {
                continue;
            }
            visited += 1;
            let mut left = vec![0u32; self.classes];
            let mut right = self.counts(samples);
            let n = column.len();
            for i in 0..n - 1 {
                let c = column[i].1;
                left[c] += 1;
                right[c] -= 1;
                let (lo, hi) = (column[i].0, column[i + 1].0);
                if lo == hi {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = (n - i - 1) as f64;
                let sq = |v: &[u32]| v.iter().map(|&k| (k as f64) * (k as f64)).sum::<f64>();
                let score = sq(&left) / nl + sq(&right) / nr;
                let better = match &best {
                    None => true,
                    Some(b) => score > b.score || (score == b.score && feature < b.feature),
                };
                if better {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if !(threshold < hi) {
                        threshold = lo;
                    }
                    best = Some(Candidate { score, feature, threshold });
                }
            }
        }
        best
    }

    fn grow(&self, root: Vec<usize>, rng: &mut Rng) -> Tree {
        let mut nodes = vec![TreeNode::Leaf { counts: Vec::new() }];
        let mut pending = vec![(0usize, root)];
        while let Some((at, samples)) = pending.pop() {
            let counts = self.counts(&samples);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let split =
                if pure || samples.len() < self.min_samples_split { None } else { self.best_split(&samples, rng) };
            let Some(split) = split else {
                nodes[at] = TreeNode::Leaf { counts };
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) =
                samples.iter().partition(|&&s| self.x[(s, split.feature)] <= split.threshold);
            let left = nodes.len();
            nodes.push(TreeNode::Leaf { counts: Vec::new() });
            nodes.push(TreeNode::Leaf { counts: Vec::new() });
            nodes[at] = TreeNode::Split { feature: split.feature, threshold: split.threshold, left, right: left + 1 };
            // right first so the left subtree is built (and numbered) first
            pending.push((left + 1, r));
            pending.push((left, l));
        }
        Tree { nodes }
    }
}

/// Bagged CART forest. Each tree draws from its own stream derived from one
/// value of `rng`, so the result does not depend on the thread count.
pub fn rf_fit(x: &Matrix, y: &[usize], n_classes: usize, config: &ForestConfig, rng: &mut Rng) -> Result<ForestModel> {
    check_training_set("rf_fit", x, y, n_classes)?;
    if config.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let d = x.cols();
    let max_features = config.max_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).clamp(1, d);
    let builder =
        Builder { x, y, classes: n_classes, max_features, min_samples_split: config.min_samples_split.max(2) };
    let base = rng.next_u64();
    let n = x.rows();
    let trees = (0..config.n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut tree_rng = Rng::derive(base, t);
            let samples = if config.bootstrap { (0..n).map(|_| tree_rng.below(n)).collect() } else { (0..n).collect() };
            builder.grow(samples, &mut tree_rng)
        })
        .collect();
    Ok(ForestModel { trees, n_features: d, n_classes, max_features })
}

/// Mean over trees of the leaf class frequencies.
pub fn rf_predict_proba(model: &ForestModel, x: &Matrix) -> Result<Matrix> {
    check_width("rf_predict_proba", model.n_features, x)?;
    let mut out = Matrix::zeros(x.rows(), model.n_classes);
    let trees = model.trees.len() as f64;
    for r in 0..x.rows() {
        let row = x.row(r);
        let acc = out.row_mut(r);
        for tree in &model.trees {
            let counts = tree.leaf_for(row);
            let total: u32 = counts.iter().sum();
            for (a, &c) in acc.iter_mut().zip(counts) {
                *a += c as f64 / total as f64;
            }
        }
        acc.iter_mut().for_each(|a| *a /= trees);
    }
    Ok(out)
}
