//! Random forest: bootstrapped Gini trees with per-split feature
//! subsampling and a class-weighted majority vote.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::scalar::Scalar;

use super::tree::{DecisionTree, TreeParams};
use super::MlError;

#[derive(Debug, Clone)]
pub struct RandomForestParams<F> {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means `floor(sqrt(d))`.
    pub features_per_split: Option<usize>,
    /// Per-class vote and impurity weights; `None` balances by inverse
    /// class frequency.
    pub class_weights: Option<Vec<F>>,
    pub seed: u64,
}

impl<F> Default for RandomForestParams<F> {
    fn default() -> Self {
        RandomForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: None,
            class_weights: None,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel<F> {
    pub trees: Vec<DecisionTree<F>>,
    pub n_classes: usize,
    pub class_weights: Vec<F>,
}

/// Balanced weights: `n / (k * count_c)`, zero for classes absent from the
/// training set.
pub fn balanced_class_weights<F: Scalar>(y: &[usize], n_classes: usize) -> Vec<F> {
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    let n = F::from_usize_lossy(y.len());
    let k = F::from_usize_lossy(n_classes);
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                F::zero()
            } else {
                n / (k * F::from_usize_lossy(c))
            }
        })
        .collect()
}

impl<F: Scalar> RandomForestModel<F> {
    pub fn fit(
        x: &[Vec<F>],
        y: &[usize],
        n_classes: usize,
        params: &RandomForestParams<F>,
    ) -> Result<Self, MlError> {
        if x.is_empty() {
            return Err(MlError::EmptyTrainingSet);
        }
        if x.len() != y.len() {
            return Err(MlError::ShapeMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if y.iter().any(|&c| c >= n_classes) {
            return Err(MlError::BadParams(format!(
                "target class out of range for {n_classes} classes"
            )));
        }
        if y.iter().all(|&c| c == y[0]) {
            return Err(MlError::DegenerateTraining);
        }
        let d = x[0].len();
        let class_weights = params
            .class_weights
            .clone()
            .unwrap_or_else(|| balanced_class_weights(y, n_classes));
        if class_weights.len() != n_classes {
            return Err(MlError::BadParams(format!(
                "{} class weights for {n_classes} classes",
                class_weights.len()
            )));
        }
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_split: params.min_samples_split,
            features_per_split: Some(
                params
                    .features_per_split
                    .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
                    .clamp(1, d),
            ),
        };
        let n = x.len();
        let trees = (0..params.n_trees)
            .map(|t| {
                // Each tree owns an independent stream keyed by its index,
                // so retraining reproduces it no matter the tree count.
                let mut rng: ChaCha12Rng = stream_rng(params.seed, t as u64);
                let bootstrap: Vec<usize> =
                    (0..n).map(|_| rng.random_range(0..n)).collect();
                DecisionTree::fit(
                    x,
                    y,
                    &bootstrap,
                    n_classes,
                    &class_weights,
                    &tree_params,
                    &mut rng,
                )
            })
            .collect();
        Ok(RandomForestModel {
            trees,
            n_classes,
            class_weights,
        })
    }

    /// Class-weighted vote shares, normalized to sum 1.
    pub fn vote_scores(&self, row: &[F]) -> Vec<F> {
        let mut votes = vec![F::zero(); self.n_classes];
        for tree in &self.trees {
            votes[tree.predict(row)] += F::one();
        }
        let mut scores: Vec<F> = votes
            .iter()
            .zip(&self.class_weights)
            .map(|(&v, &w)| v * w)
            .collect();
        let total: F = scores.iter().fold(F::zero(), |a, &b| a + b);
        if total > F::zero() {
            for s in &mut scores {
                *s = *s / total;
            }
        }
        scores
    }

    /// Highest weighted vote wins; ties go to the lowest class index.
    pub fn predict_row(&self, row: &[F]) -> usize {
        let scores = self.vote_scores(row);
        let mut best = 0usize;
        for (c, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = c;
            }
        }
        best
    }

    pub fn predict(&self, x: &[Vec<F>]) -> Vec<usize> {
        x.iter().map(|row| self.predict_row(row)).collect()
    }
}
