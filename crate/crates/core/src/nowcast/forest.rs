//! Random-forest regression with MSE splits.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `⌈√d⌉`.
    pub feature_subsample: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(seed: u64) -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 2,
            feature_subsample: None,
            bootstrap: false,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Node {
    Leaf { value: f64, samples: usize },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, samples } => Some((value, samples)),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub n_features: usize,
    trees: Vec<Tree>,
    /// Total impurity decrease per feature, normalised to sum to 1 (all
    /// zero when no split was made).
    pub feature_importances: Vec<f64>,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
    gain: f64,
}

impl Builder<'_> {
    fn sse(&self, idx: &[usize]) -> (f64, f64) {
        let n = idx.len() as f64;
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n;
        (mean, idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum())
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let (mean, sse) = self.sse(&idx);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean, samples: idx.len() });
        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == first);
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if pure || !depth_ok || idx.len() < 2 * self.params.min_leaf {
            return slot;
        }
        let Some(best) = self.best_split(&idx, sse, rng) else {
            return slot;
        };
        self.importance[best.feature] += best.gain;
        let left = self.grow(best.left, depth + 1, rng);
        let right = self.grow(best.right, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        slot
    }

    /// Visits features in random order until `mtry` non-constant ones have
    /// been examined; keeps the largest impurity decrease (first found on
    /// ties), accepting zero gain.
    fn best_split(&self, idx: &[usize], sse: f64, rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        let min_leaf = self.params.min_leaf;
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mut best: Option<(usize, usize, f64, f64)> = None;
        let mut best_order: Vec<usize> = Vec::new();
        let mut visited = 0;
        for &f in &features {
            if visited == self.mtry {
                break;
            }
            let mut order = idx.to_vec();
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            if self.x[order[0]][f] == self.x[order[n - 1]][f] {
                continue;
            }
            visited += 1;
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            let total_sq: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
            for pos in 0..n - 1 {
                let v = self.y[order[pos]];
                left_sum += v;
                left_sq += v * v;
                let nl = pos + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let (a, b) = (self.x[order[pos]][f], self.x[order[pos + 1]][f]);
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let sse_l = (left_sq - left_sum * left_sum / nl as f64).max(0.0);
                let sse_r = (total_sq - left_sq - right_sum * right_sum / nr as f64).max(0.0);
                let gain = (sse - sse_l - sse_r).max(0.0);
                if best.is_none_or(|(_, _, _, g)| gain > g) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some((f, nl, threshold, gain));
                    best_order = order.clone();
                }
            }
        }
        let (feature, nl, threshold, gain) = best?;
        let right = best_order.split_off(nl);
        Some(BestSplit { feature, threshold, left: best_order, right, gain })
    }
}

impl ForestModel {
    /// Fits a forest; `x` holds one feature row per observation.
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &ForestParams) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch(x.len(), y.len()));
        }
        if params.min_leaf == 0 || params.n_trees == 0 {
            return Err(Error::invalid("min_leaf and n_trees must be positive"));
        }
        let n = y.len();
        if n < 2 * params.min_leaf {
            return Err(Error::DegenerateTarget { needed: 2 * params.min_leaf, got: n });
        }
        let d = x[0].len();
        if d == 0 {
            return Err(Error::invalid("rows need at least one feature"));
        }
        if let Some(row) = x.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("features and targets must be finite"));
        }
        let mtry = params
            .feature_subsample
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d);

        let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let idx: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = Builder {
                    x,
                    y,
                    params,
                    mtry,
                    nodes: Vec::new(),
                    importance: vec![0.0; d],
                };
                b.grow(idx, 0, &mut rng);
                (Tree { nodes: b.nodes }, b.importance)
            })
            .collect();

        let mut importance = vec![0.0; d];
        for (_, imp) in &grown {
            for (a, b) in importance.iter_mut().zip(imp) {
                *a += b;
            }
        }
        let total: f64 = importance.iter().sum();
        if total > 0.0 {
            importance.iter_mut().for_each(|v| *v /= total);
        }
        Ok(ForestModel {
            params: *params,
            n_features: d,
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            feature_importances: importance,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Mean of the trees' predictions, summed in tree order.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if let Some(row) = x.iter().find(|r| r.len() != self.n_features) {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: row.len() });
        }
        Ok(x.iter()
            .map(|row| {
                let mut sum = 0.0;
                for t in &self.trees {
                    sum += t.predict_row(row);
                }
                sum / self.trees.len() as f64
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn data(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y = x.iter().map(|r| r[0] * 3.0 + (r[1] * 4.0).sin() + rng.random_range(-0.1..0.1)).collect();
        (x, y)
    }

    #[test]
    fn single_full_tree_interpolates() {
        let (x, y) = data(1, 60, 3);
        let params = ForestParams {
            n_trees: 1,
            min_leaf: 1,
            feature_subsample: Some(3),
            ..ForestParams::new(0)
        };
        let f = ForestModel::fit(&x, &y, &params).unwrap();
        assert_eq!(f.predict(&x).unwrap(), y);
    }

    #[test]
    fn zero_gain_splits_separate_xor() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![0.0, 1.0, 1.0, 0.0];
        let params = ForestParams { n_trees: 1, min_leaf: 1, feature_subsample: Some(2), ..ForestParams::new(3) };
        let f = ForestModel::fit(&x, &y, &params).unwrap();
        assert_eq!(f.predict(&x).unwrap(), y);
    }

    #[test]
    fn constant_target() {
        let (x, _) = data(2, 30, 4);
        let f = ForestModel::fit(&x, &[2.5; 30], &ForestParams::new(1)).unwrap();
        assert!(f.predict(&x).unwrap().iter().all(|&v| v == 2.5));
        assert!(f.feature_importances.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn leaves_respect_min_leaf_and_depth() {
        let (x, y) = data(3, 80, 4);
        let params = ForestParams { n_trees: 10, min_leaf: 5, max_depth: Some(3), ..ForestParams::new(9) };
        let f = ForestModel::fit(&x, &y, &params).unwrap();
        for t in f.trees() {
            assert!(t.leaves().all(|(_, s)| s >= 5));
            assert_eq!(t.leaves().map(|(_, s)| s).sum::<usize>(), 80);
            assert!(t.leaves().count() <= 8);
        }
        assert!(f.feature_importances[0] > f.feature_importances[2]);
        assert!((f.feature_importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_trees_and_averaging() {
        // A single feature leaves no randomness, so both trees agree.
        let (x2, y) = data(4, 50, 2);
        let x: Vec<Vec<f64>> = x2.iter().map(|r| vec![r[0]]).collect();
        let params = ForestParams { n_trees: 2, ..ForestParams::new(5) };
        let f = ForestModel::fit(&x, &y, &params).unwrap();
        assert_eq!(f.trees()[0], f.trees()[1]);
        let probe: Vec<Vec<f64>> = data(5, 20, 2).0.iter().map(|r| vec![r[0]]).collect();
        let p = f.predict(&probe).unwrap();
        for (row, v) in probe.iter().zip(p) {
            assert_eq!(v, f.trees()[0].predict_row(row));
        }
    }

    #[test]
    fn errors() {
        let (x, y) = data(6, 3, 2);
        assert!(matches!(
            ForestModel::fit(&x, &y, &ForestParams::new(0)),
            Err(Error::DegenerateTarget { needed: 4, got: 3 })
        ));
        let (x, y) = data(6, 10, 2);
        let f = ForestModel::fit(&x, &y, &ForestParams::new(0)).unwrap();
        assert!(matches!(f.predict(&[vec![1.0]]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn bootstrap_changes_trees_but_stays_deterministic() {
        let (x, y) = data(7, 40, 3);
        let mut params = ForestParams::new(11);
        params.n_trees = 8;
        params.bootstrap = true;
        let a = ForestModel::fit(&x, &y, &params).unwrap();
        let b = ForestModel::fit(&x, &y, &params).unwrap();
        assert_eq!(a, b);
        params.seed = 12;
        assert_ne!(ForestModel::fit(&x, &y, &params).unwrap(), a);
    }

    proptest! {
        #[test]
        fn predictions_within_target_range(seed in 0u64..500) {
            let (x, y) = data(seed, 25, 3);
            let mut params = ForestParams::new(seed);
            params.n_trees = 5;
            let f = ForestModel::fit(&x, &y, &params).unwrap();
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in f.predict(&data(seed + 1, 10, 3).0).unwrap() {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
