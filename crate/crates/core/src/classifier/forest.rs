//! Random forest of Gini CART trees on bootstrap samples. Class
//! probabilities are the fraction of trees voting for each class.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::rng::{SeedPath, Stream};
use crate::{math, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Fraction of features drawn at every split, in (0, 1].
    pub max_features: f64,
    #[serde(default = "default_min_split")]
    pub min_samples_split: usize,
}

fn default_min_split() -> usize {
    2
}

impl ForestParams {
    pub fn new(n_trees: usize, max_depth: usize, max_features: f64) -> Self {
        ForestParams {
            n_trees,
            max_depth,
            max_features,
            min_samples_split: default_min_split(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || !(self.max_features > 0.0 && self.max_features <= 1.0) || self.min_samples_split < 2 {
            return Err(Error::InvalidArgument(
                "random forest needs n_trees > 0, max_depth > 0, max_features in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn features_per_split(&self, n_features: usize) -> usize {
        (math::ceil(self.max_features * n_features as f64) as usize).clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Go left when `x[feature] <= threshold`.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf { class: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class as usize,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n) * (c as f64 / n)).sum::<f64>()
}

fn majority(counts: &[usize]) -> u32 {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best as u32
}

struct Builder<'a> {
    x: &'a Matrix<'a>,
    y: &'a [usize],
    n_classes: usize,
    params: &'a ForestParams,
    m_try: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> Builder<'a> {
    fn counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &r in rows {
            counts[self.y[r]] += 1;
        }
        counts
    }

    fn best_split(&self, rows: &[usize], parent: &[usize], rng: &mut Stream) -> Option<BestSplit> {
        let n = rows.len();
        let parent_gini = gini(parent, n);
        let mut features = rng.sample_indices(self.x.cols, self.m_try);
        features.sort_unstable();
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut left = vec![0usize; self.n_classes];
        for &f in &features {
            order.clear();
            order.extend(rows.iter().map(|&r| (self.x.row(r)[f], self.y[r])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            if order[0].0 == order[n - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|c| *c = 0);
            for i in 0..n - 1 {
                left[order[i].1] += 1;
                if order[i].0 == order[i + 1].0 {
                    continue;
                }
                let nl = i + 1;
                let nr = n - nl;
                let right: Vec<usize> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
                let weighted = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                let gain = parent_gini - weighted;
                if gain > 1e-12 && best.as_ref().map_or(true, |b| gain > b.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold: 0.5 * (order[i].0 + order[i + 1].0),
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut Stream) -> u32 {
        let counts = self.counts(&rows);
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { class: majority(&counts) });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || rows.len() < self.params.min_samples_split {
            return id;
        }
        let Some(split) = self.best_split(&rows, &counts, rng) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x.row(i)[split.feature] <= split.threshold);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id as usize] = Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Grows one tree on a bootstrap drawn from `seed`.
pub fn grow_tree(x: &Matrix, y: &[usize], n_classes: usize, p: &ForestParams, seed: SeedPath) -> Tree {
    let mut rng = seed.stream();
    let rows: Vec<usize> = (0..x.rows).map(|_| rng.below(x.rows)).collect();
    let mut b = Builder {
        x,
        y,
        n_classes,
        params: p,
        m_try: p.features_per_split(x.cols),
        nodes: Vec::new(),
    };
    b.build(rows, 0, &mut rng);
    Tree { nodes: b.nodes }
}

pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, p: &ForestParams, seed: u64) -> Result<ForestModel> {
    let root = SeedPath::root(seed).child("forest");
    let trees = (0..p.n_trees)
        .map(|t| grow_tree(x, y, n_classes, p, root.index(t as u64)))
        .collect();
    Ok(ForestModel {
        n_classes,
        n_features: x.cols,
        trees,
    })
}

impl ForestModel {
    /// Per row, the vote count of every class.
    pub fn votes(&self, x: &Matrix) -> Vec<usize> {
        let mut votes = vec![0; x.rows * self.n_classes];
        for r in 0..x.rows {
            for t in &self.trees {
                votes[r * self.n_classes + t.predict(x.row(r))] += 1;
            }
        }
        votes
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        let n = self.trees.len() as f64;
        self.votes(x).into_iter().map(|v| v as f64 / n).collect()
    }
}
