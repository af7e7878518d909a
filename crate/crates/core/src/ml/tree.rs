//! Axis-aligned decision tree with class-weighted Gini splits.
//!
//! Nodes live in one flat vector; index 0 is the root. Splits send
//! `x[feature] <= threshold` left. All tie breaks are deterministic: among
//! equally good splits the lowest feature index and then the lowest
//! threshold wins, and a leaf's majority vote prefers the lowest class.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<F> {
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Class-weighted sample distribution, normalized to sum 1.
        distribution: Vec<F>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<F> {
    pub nodes: Vec<Node<F>>,
    pub n_classes: usize,
}

#[derive(Debug, Clone)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features considered per split; `None` means all of them.
    pub features_per_split: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            features_per_split: None,
        }
    }
}

struct Builder<'a, F> {
    x: &'a [Vec<F>],
    y: &'a [usize],
    class_weights: &'a [F],
    n_classes: usize,
    params: &'a TreeParams,
    rng: &'a mut ChaCha12Rng,
    nodes: Vec<Node<F>>,
}

/// Weighted Gini impurity times total weight: sum_w - sum(w_c^2)/sum_w.
/// Using the weight-scaled form lets parent and children compare directly.
fn weighted_gini_cost<F: Scalar>(class_weight_sums: &[F]) -> F {
    let total: F = class_weight_sums.iter().fold(F::zero(), |a, &b| a + b);
    if total == F::zero() {
        return F::zero();
    }
    let sq: F = class_weight_sums
        .iter()
        .fold(F::zero(), |a, &w| a + w * w);
    total - sq / total
}

impl<F: Scalar> Builder<'_, F> {
    fn class_sums(&self, samples: &[usize]) -> Vec<F> {
        let mut sums = vec![F::zero(); self.n_classes];
        for &i in samples {
            sums[self.y[i]] += self.class_weights[self.y[i]];
        }
        sums
    }

    fn leaf(&mut self, sums: Vec<F>) -> usize {
        let total: F = sums.iter().fold(F::zero(), |a, &b| a + b);
        let distribution = if total == F::zero() {
            let u = F::one() / F::from_usize_lossy(self.n_classes);
            vec![u; self.n_classes]
        } else {
            sums.iter().map(|&w| w / total).collect()
        };
        self.nodes.push(Node::Leaf { distribution });
        self.nodes.len() - 1
    }

    /// The order features are tried at one split: everything ascending
    /// when using all features, a fresh random permutation when
    /// subsampling.
    fn feature_order(&mut self) -> Vec<usize> {
        let d = self.x[0].len();
        let mut order: Vec<usize> = (0..d).collect();
        if self.params.features_per_split.is_some() {
            for j in (1..d).rev() {
                order.swap(j, self.rng.random_range(0..=j));
            }
        }
        order
    }

    fn best_split(&mut self, samples: &[usize]) -> Option<(usize, F, F)> {
        let d = self.x[0].len();
        let quota = self
            .params
            .features_per_split
            .unwrap_or(d)
            .clamp(1, d);
        let order = self.feature_order();
        let mut best: Option<(F, usize, F)> = None;
        let mut column: Vec<(F, usize)> = Vec::with_capacity(samples.len());
        let mut informative = 0usize;
        for f in order {
            if informative >= quota {
                break;
            }
            column.clear();
            column.extend(samples.iter().map(|&i| (self.x[i][f], self.y[i])));
            column.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
            let mut split_seen = false;
            let mut left = vec![F::zero(); self.n_classes];
            let mut right = self.class_sums(samples);
            for w in 0..column.len() - 1 {
                let (v, c) = column[w];
                let weight = self.class_weights[c];
                left[c] += weight;
                right[c] = right[c] - weight;
                let next = column[w + 1].0;
                if next == v {
                    continue;
                }
                let threshold = v + (next - v) / F::from_usize_lossy(2);
                // Degenerate midpoints (adjacent floats) cannot separate;
                // the negated form also rejects a NaN midpoint.
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                if !(threshold < next) {
                    continue;
                }
                split_seen = true;
                let cost = weighted_gini_cost(&left) + weighted_gini_cost(&right);
                // Equal costs fall back to the lowest feature index and
                // threshold so the winner never depends on the try order.
                let better = match &best {
                    None => true,
                    Some((bc, bf, bt)) => {
                        cost < *bc || (cost == *bc && (f, threshold) < (*bf, *bt))
                    }
                };
                if better {
                    best = Some((cost, f, threshold));
                }
            }
            // Features constant within this node do not count against the
            // quota; keep drawing so diverse data stays splittable.
            if split_seen {
                informative += 1;
            }
        }
        best.map(|(cost, f, t)| (f, t, cost))
    }

    fn build(&mut self, samples: &[usize], depth: usize) -> usize {
        let sums = self.class_sums(samples);
        let depth_reached = self
            .params
            .max_depth
            .is_some_and(|limit| depth >= limit);
        let pure = sums.iter().filter(|&&w| w > F::zero()).count() <= 1;
        if depth_reached || pure || samples.len() < self.params.min_samples_split {
            return self.leaf(sums);
        }
        // Zero-gain splits are taken on purpose: a locally useless split
        // (XOR-style interactions) can still enable useful ones below.
        let Some((feature, threshold, _)) = self.best_split(samples) else {
            return self.leaf(sums);
        };
        let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.x[i][feature] <= threshold);
        debug_assert!(!left_samples.is_empty() && !right_samples.is_empty());
        // Reserve this node's slot before the children claim theirs.
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            distribution: Vec::new(),
        });
        let left = self.build(&left_samples, depth + 1);
        let right = self.build(&right_samples, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

impl<F: Scalar> DecisionTree<F> {
    /// Fit on the rows named by `samples` (duplicates allowed, enabling
    /// bootstrap training).
    pub fn fit(
        x: &[Vec<F>],
        y: &[usize],
        samples: &[usize],
        n_classes: usize,
        class_weights: &[F],
        params: &TreeParams,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        assert!(!samples.is_empty(), "cannot fit a tree on no samples");
        assert_eq!(class_weights.len(), n_classes);
        let mut builder = Builder {
            x,
            y,
            class_weights,
            n_classes,
            params,
            rng,
            nodes: Vec::new(),
        };
        let root = builder.build(samples, 0);
        debug_assert_eq!(root, 0);
        DecisionTree {
            nodes: builder.nodes,
            n_classes,
        }
    }

    pub fn distribution<'a>(&'a self, row: &[F]) -> &'a [F] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                Node::Leaf { distribution } => return distribution,
            }
        }
    }

    /// Majority class at the reached leaf; ties go to the lowest index.
    pub fn predict(&self, row: &[F]) -> usize {
        let dist = self.distribution(row);
        let mut best = 0usize;
        for (c, &p) in dist.iter().enumerate().skip(1) {
            if p > dist[best] {
                best = c;
            }
        }
        best
    }

    pub fn depth(&self) -> usize {
        fn walk<F>(nodes: &[Node<F>], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn uniform_weights(k: usize) -> Vec<f64> {
        vec![1.0; k]
    }

    #[test]
    fn separable_data_fits_exactly() {
        let x: Vec<Vec<f64>> = vec![
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![8.0, 0.0],
            vec![9.0, 0.0],
        ];
        let y = vec![0, 0, 1, 1];
        let samples: Vec<usize> = (0..4).collect();
        let mut rng = stream_rng(1, 0);
        let tree = DecisionTree::fit(
            &x,
            &y,
            &samples,
            2,
            &uniform_weights(2),
            &TreeParams::default(),
            &mut rng,
        );
        for (row, &label) in x.iter().zip(&y) {
            assert_eq!(tree.predict(row), label);
        }
        // One split suffices: threshold is the midpoint of 2 and 8.
        assert_eq!(tree.depth(), 1);
        match &tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 5.0);
            }
            other => panic!("expected split at root, got {other:?}"),
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        let x: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let y = vec![0, 1, 1, 0];
        let samples: Vec<usize> = (0..4).collect();
        let mut rng = stream_rng(1, 0);
        let tree = DecisionTree::fit(
            &x,
            &y,
            &samples,
            2,
            &uniform_weights(2),
            &TreeParams::default(),
            &mut rng,
        );
        for (row, &label) in x.iter().zip(&y) {
            assert_eq!(tree.predict(row), label);
        }
        assert_eq!(tree.depth(), 2);
    }

    #[test]
    fn depth_limit_is_respected() {
        let mut rng = stream_rng(7, 0);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let y: Vec<usize> = x
            .iter()
            .map(|r| ((r[0] > 0.5) as usize) ^ ((r[1] > 0.5) as usize))
            .collect();
        let samples: Vec<usize> = (0..x.len()).collect();
        let params = TreeParams {
            max_depth: Some(3),
            ..TreeParams::default()
        };
        let tree = DecisionTree::fit(&x, &y, &samples, 2, &uniform_weights(2), &params, &mut rng);
        assert!(tree.depth() <= 3);
    }

    #[test]
    fn class_weights_flip_a_leaf() {
        // A forced single leaf holding 9 samples of class 0 and 1 of
        // class 1 votes 0 unweighted; a heavy class-1 weight flips it.
        let mut x: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 0.5]).collect();
        x.push(vec![2.25]);
        let mut y = vec![0usize; 9];
        y.push(1);
        let samples: Vec<usize> = (0..x.len()).collect();
        let params = TreeParams {
            max_depth: Some(0),
            ..TreeParams::default()
        };
        let mut rng = stream_rng(1, 0);
        let plain = DecisionTree::fit(
            &x,
            &y,
            &samples,
            2,
            &uniform_weights(2),
            &params,
            &mut rng,
        );
        assert_eq!(plain.predict(&[2.25]), 0);
        let weighted = DecisionTree::fit(
            &x,
            &y,
            &samples,
            2,
            &[1.0, 100.0],
            &params,
            &mut rng,
        );
        assert_eq!(weighted.predict(&[2.25]), 1);
    }

    #[test]
    fn duplicate_samples_act_as_bootstrap() {
        let x: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![0, 0, 1];
        // Oversample index 2 so its class dominates the 1.5+ region anyway.
        let samples = vec![0, 1, 2, 2, 2];
        let mut rng = stream_rng(1, 0);
        let tree = DecisionTree::fit(
            &x,
            &y,
            &samples,
            2,
            &uniform_weights(2),
            &TreeParams::default(),
            &mut rng,
        );
        assert_eq!(tree.predict(&[2.0]), 1);
        assert_eq!(tree.predict(&[0.0]), 0);
    }

    #[test]
    fn constant_features_produce_a_single_leaf() {
        let x: Vec<Vec<f64>> = vec![vec![3.0, 3.0]; 6];
        let y = vec![0, 1, 0, 1, 0, 0];
        let samples: Vec<usize> = (0..6).collect();
        let mut rng = stream_rng(1, 0);
        let tree = DecisionTree::fit(
            &x,
            &y,
            &samples,
            2,
            &uniform_weights(2),
            &TreeParams::default(),
            &mut rng,
        );
        assert_eq!(tree.nodes.len(), 1);
        // 4 of 6 samples are class 0.
        assert_eq!(tree.predict(&[3.0, 3.0]), 0);
        match &tree.nodes[0] {
            Node::Leaf { distribution } => {
                assert!((distribution[0] - 4.0 / 6.0).abs() < 1e-15);
            }
            other => panic!("expected leaf, got {other:?}"),
        }
    }

    #[test]
    fn leaf_tie_prefers_lowest_class() {
        let x: Vec<Vec<f64>> = vec![vec![0.0], vec![0.0]];
        let y = vec![2, 1];
        let samples = vec![0, 1];
        let mut rng = stream_rng(1, 0);
        let tree = DecisionTree::fit(
            &x,
            &y,
            &samples,
            3,
            &uniform_weights(3),
            &TreeParams::default(),
            &mut rng,
        );
        assert_eq!(tree.predict(&[0.0]), 1);
    }
}
