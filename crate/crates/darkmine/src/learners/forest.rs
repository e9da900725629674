//! Bagged randomized decision trees over sparse feature vectors.
//!
//! Trees only ever consider features that are present somewhere in their
//! training sample, so the bloated n-gram dimension is never scanned densely.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::Label;
use crate::textpipe::SparseVector;

use super::FeaturesPerSplit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Tree {
    Leaf {
        votes_relevant: usize,
        votes_not_relevant: usize,
    },
    Node {
        feature: usize,
        threshold: f64,
        left: Box<Tree>,
        right: Box<Tree>,
    },
}

impl Tree {
    /// Majority vote of the leaf this vector routes to; ties break toward
    /// NOT_RELEVANT.
    pub fn vote(&self, x: &SparseVector) -> Label {
        match self {
            Tree::Leaf { votes_relevant, votes_not_relevant } => {
                if votes_relevant > votes_not_relevant {
                    Label::Relevant
                } else {
                    Label::NotRelevant
                }
            }
            Tree::Node { feature, threshold, left, right } => {
                if x.get(*feature) <= *threshold {
                    left.vote(x)
                } else {
                    right.vote(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: Vec<Tree>,
}

impl ForestParams {
    /// Fraction of trees voting RELEVANT.
    pub fn vote_fraction(&self, x: &SparseVector) -> f64 {
        let rel = self.trees.iter().filter(|t| t.vote(x) == Label::Relevant).count();
        rel as f64 / self.trees.len() as f64
    }
}

struct GrowContext<'a> {
    x: &'a [SparseVector],
    y: &'a [Label],
    max_depth: Option<usize>,
    features_per_split: FeaturesPerSplit,
    min_leaf: usize,
}

fn class_counts(y: &[Label], idx: &[usize]) -> (usize, usize) {
    let rel = idx.iter().filter(|&&i| y[i] == Label::Relevant).count();
    (rel, idx.len() - rel)
}

fn gini(rel: usize, not: usize) -> f64 {
    let n = (rel + not) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = rel as f64 / n;
    let q = not as f64 / n;
    1.0 - p * p - q * q
}

fn present_features(x: &[SparseVector], idx: &[usize]) -> Vec<usize> {
    let mut features: Vec<usize> = idx
        .iter()
        .flat_map(|&i| x[i].entries().iter().map(|e| e.0))
        .collect();
    features.sort_unstable();
    features.dedup();
    features
}

fn grow(ctx: &GrowContext, idx: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> Tree {
    let (rel, not) = class_counts(ctx.y, idx);
    let leaf = Tree::Leaf { votes_relevant: rel, votes_not_relevant: not };
    if rel == 0 || not == 0 || idx.len() < 2 * ctx.min_leaf {
        return leaf;
    }
    if let Some(limit) = ctx.max_depth {
        if depth >= limit {
            return leaf;
        }
    }

    let candidates = present_features(ctx.x, idx);
    if candidates.is_empty() {
        return leaf;
    }
    let k = match ctx.features_per_split {
        FeaturesPerSplit::All => candidates.len(),
        FeaturesPerSplit::Sqrt => ((candidates.len() as f64).sqrt().ceil() as usize).max(1),
        FeaturesPerSplit::Count(c) => c.min(candidates.len()).max(1),
    };
    let mut sampled = candidates.clone();
    sampled.shuffle(rng);
    sampled.truncate(k);
    sampled.sort_unstable();

    let parent_impurity = gini(rel, not);
    let mut best: Option<(f64, usize, f64)> = None;
    for &feature in &sampled {
        let mut values: Vec<f64> = idx.iter().map(|&i| ctx.x[i].get(feature)).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        if values.len() < 2 {
            continue;
        }
        for pair in values.windows(2) {
            let threshold = (pair[0] + pair[1]) / 2.0;
            let mut left_rel = 0usize;
            let mut left_not = 0usize;
            let mut left_n = 0usize;
            for &i in idx {
                if ctx.x[i].get(feature) <= threshold {
                    left_n += 1;
                    if ctx.y[i] == Label::Relevant {
                        left_rel += 1;
                    } else {
                        left_not += 1;
                    }
                }
            }
            let right_n = idx.len() - left_n;
            if left_n < ctx.min_leaf || right_n < ctx.min_leaf {
                continue;
            }
            let right_rel = rel - left_rel;
            let right_not = not - left_not;
            let weighted = (left_n as f64 * gini(left_rel, left_not)
                + right_n as f64 * gini(right_rel, right_not))
                / idx.len() as f64;
            // Zero-gain splits are allowed: children are strictly smaller,
            // and an XOR-shaped node needs them to reach purity.
            let gain = parent_impurity - weighted;
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, feature, threshold));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return leaf;
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|&&i| ctx.x[i].get(feature) <= threshold);
    Tree::Node {
        feature,
        threshold,
        left: Box::new(grow(ctx, &left_idx, depth + 1, rng)),
        right: Box::new(grow(ctx, &right_idx, depth + 1, rng)),
    }
}

pub(super) fn train(
    x: &[SparseVector],
    y: &[Label],
    n_trees: usize,
    max_depth: Option<usize>,
    features_per_split: FeaturesPerSplit,
    min_leaf: usize,
    seed: u64,
) -> ForestParams {
    let ctx = GrowContext { x, y, max_depth, features_per_split, min_leaf };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        // A single-tree forest degenerates to one deterministic tree over
        // the full sample; bagging only kicks in with an actual ensemble.
        let idx: Vec<usize> = if n_trees == 1 {
            (0..x.len()).collect()
        } else {
            (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect()
        };
        trees.push(grow(&ctx, &idx, 0, &mut rng));
    }
    ForestParams { trees }
}
