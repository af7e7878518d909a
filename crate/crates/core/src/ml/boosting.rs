//! Gradient boosted trees: binary logistic or multiclass softmax loss,
//! shallow regression trees fitted to gradient/hessian pairs, Newton leaf
//! values.
//!
//! Scores start at the training-set log priors, so a zero-round model
//! predicts the majority class. Training records the log-loss after every
//! round for convergence checks.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::MlError;

/// Ridge term keeping Newton leaf values finite when hessians vanish.
const LEAF_RIDGE: f64 = 1e-6;
/// Newton steps are clamped here; sigmoid/softmax saturate far earlier.
const LEAF_CLAMP: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum RegNode<F> {
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
    Leaf {
        value: F,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegressionTree<F> {
    nodes: Vec<RegNode<F>>,
}

impl<F: Scalar> RegressionTree<F> {
    fn value(&self, row: &[F]) -> F {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                RegNode::Split {
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
                RegNode::Leaf { value } => return *value,
            }
        }
    }
}

/// Gain of grouping gradient sum G and hessian sum H into one leaf.
fn leaf_gain(g: f64, h: f64) -> f64 {
    g * g / (h + LEAF_RIDGE)
}

fn newton_value<F: Scalar>(g: f64, h: f64) -> F {
    F::from_f64_lossy((-g / (h + LEAF_RIDGE)).clamp(-LEAF_CLAMP, LEAF_CLAMP))
}

struct RegBuilder<'a, F> {
    x: &'a [Vec<F>],
    grad: &'a [f64],
    hess: &'a [f64],
    max_depth: usize,
    nodes: Vec<RegNode<F>>,
}

impl<F: Scalar> RegBuilder<'_, F> {
    fn sums(&self, samples: &[usize]) -> (f64, f64) {
        samples.iter().fold((0.0, 0.0), |(g, h), &i| {
            (g + self.grad[i], h + self.hess[i])
        })
    }

    fn best_split(&self, samples: &[usize], parent_gain: f64) -> Option<(usize, F)> {
        let d = self.x[0].len();
        let (total_g, total_h) = self.sums(samples);
        let mut best: Option<(f64, usize, F)> = None;
        let mut column: Vec<(F, f64, f64)> = Vec::with_capacity(samples.len());
        for f in 0..d {
            column.clear();
            column.extend(
                samples
                    .iter()
                    .map(|&i| (self.x[i][f], self.grad[i], self.hess[i])),
            );
            column.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..column.len() - 1 {
                let (v, g, h) = column[w];
                gl += g;
                hl += h;
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
                let gain = leaf_gain(gl, hl) + leaf_gain(total_g - gl, total_h - hl);
                if gain > parent_gain
                    && best.as_ref().is_none_or(|(b, _, _)| gain > *b)
                {
                    best = Some((gain, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn build(&mut self, samples: &[usize], depth: usize) -> usize {
        let (g, h) = self.sums(samples);
        if depth >= self.max_depth || samples.len() < 2 {
            self.nodes.push(RegNode::Leaf {
                value: newton_value(g, h),
            });
            return self.nodes.len() - 1;
        }
        let Some((feature, threshold)) = self.best_split(samples, leaf_gain(g, h)) else {
            self.nodes.push(RegNode::Leaf {
                value: newton_value(g, h),
            });
            return self.nodes.len() - 1;
        };
        let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.x[i][feature] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(RegNode::Leaf { value: F::zero() });
        let left = self.build(&left_samples, depth + 1);
        let right = self.build(&right_samples, depth + 1);
        self.nodes[slot] = RegNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

fn fit_regression_tree<F: Scalar>(
    x: &[Vec<F>],
    grad: &[f64],
    hess: &[f64],
    max_depth: usize,
) -> RegressionTree<F> {
    let samples: Vec<usize> = (0..x.len()).collect();
    let mut builder = RegBuilder {
        x,
        grad,
        hess,
        max_depth,
        nodes: Vec::new(),
    };
    builder.build(&samples, 0);
    RegressionTree {
        nodes: builder.nodes,
    }
}

#[derive(Debug, Clone)]
pub struct GradientBoostingParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for GradientBoostingParams {
    fn default() -> Self {
        GradientBoostingParams {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostingModel<F> {
    pub n_classes: usize,
    learning_rate: F,
    /// Log-prior baseline score per class (single entry when binary).
    base_scores: Vec<F>,
    /// One tree per class per round; binary models use one tree per round.
    rounds: Vec<Vec<RegressionTree<F>>>,
    /// Training log-loss after the baseline and after each round.
    pub train_log_loss: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softmax(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

fn clamp_probability(p: f64) -> f64 {
    p.clamp(1e-12, 1.0 - 1e-12)
}

impl<F: Scalar> GradientBoostingModel<F> {
    pub fn fit(
        x: &[Vec<F>],
        y: &[usize],
        n_classes: usize,
        params: &GradientBoostingParams,
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
        if n_classes < 2 {
            return Err(MlError::BadParams("need at least two classes".into()));
        }
        if y.iter().any(|&c| c >= n_classes) {
            return Err(MlError::BadParams(format!(
                "target class out of range for {n_classes} classes"
            )));
        }
        if y.iter().all(|&c| c == y[0]) {
            return Err(MlError::DegenerateTraining);
        }
        let n = x.len();
        let mut counts = vec![0usize; n_classes];
        for &c in y {
            counts[c] += 1;
        }
        let prior = |c: usize| clamp_probability(counts[c] as f64 / n as f64);

        if n_classes == 2 {
            Self::fit_binary(x, y, params, prior(1))
        } else {
            let priors: Vec<f64> = (0..n_classes).map(prior).collect();
            Self::fit_multiclass(x, y, n_classes, params, &priors)
        }
    }

    fn fit_binary(
        x: &[Vec<F>],
        y: &[usize],
        params: &GradientBoostingParams,
        positive_prior: f64,
    ) -> Result<Self, MlError> {
        let n = x.len();
        let base = (positive_prior / (1.0 - positive_prior)).ln();
        let mut scores = vec![base; n];
        let mut model = GradientBoostingModel {
            n_classes: 2,
            learning_rate: F::from_f64_lossy(params.learning_rate),
            base_scores: vec![F::from_f64_lossy(base)],
            rounds: Vec::with_capacity(params.n_rounds),
            train_log_loss: Vec::with_capacity(params.n_rounds + 1),
        };
        let log_loss = |scores: &[f64]| -> f64 {
            scores
                .iter()
                .zip(y)
                .map(|(&s, &label)| {
                    let p = clamp_probability(sigmoid(s));
                    if label == 1 {
                        -p.ln()
                    } else {
                        -(1.0 - p).ln()
                    }
                })
                .sum::<f64>()
                / n as f64
        };
        model.train_log_loss.push(log_loss(&scores));
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..params.n_rounds {
            for i in 0..n {
                let p = sigmoid(scores[i]);
                grad[i] = p - (y[i] == 1) as usize as f64;
                hess[i] = (p * (1.0 - p)).max(1e-16);
            }
            let tree = fit_regression_tree(x, &grad, &hess, params.max_depth);
            for i in 0..n {
                scores[i] += params.learning_rate * tree.value(&x[i]).to_f64_lossy();
            }
            model.rounds.push(vec![tree]);
            model.train_log_loss.push(log_loss(&scores));
        }
        Ok(model)
    }

    fn fit_multiclass(
        x: &[Vec<F>],
        y: &[usize],
        n_classes: usize,
        params: &GradientBoostingParams,
        priors: &[f64],
    ) -> Result<Self, MlError> {
        let n = x.len();
        let base: Vec<f64> = priors.iter().map(|&p| p.ln()).collect();
        let mut scores: Vec<Vec<f64>> = vec![base.clone(); n];
        let mut model = GradientBoostingModel {
            n_classes,
            learning_rate: F::from_f64_lossy(params.learning_rate),
            base_scores: base.iter().map(|&b| F::from_f64_lossy(b)).collect(),
            rounds: Vec::with_capacity(params.n_rounds),
            train_log_loss: Vec::with_capacity(params.n_rounds + 1),
        };
        let log_loss = |scores: &[Vec<f64>]| -> f64 {
            scores
                .iter()
                .zip(y)
                .map(|(row, &label)| {
                    let mut p = row.clone();
                    softmax(&mut p);
                    -clamp_probability(p[label]).ln()
                })
                .sum::<f64>()
                / n as f64
        };
        model.train_log_loss.push(log_loss(&scores));
        let mut prob = vec![vec![0.0; n_classes]; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..params.n_rounds {
            for i in 0..n {
                prob[i].copy_from_slice(&scores[i]);
                softmax(&mut prob[i]);
            }
            let mut round = Vec::with_capacity(n_classes);
            for k in 0..n_classes {
                for i in 0..n {
                    let p = prob[i][k];
                    grad[i] = p - (y[i] == k) as usize as f64;
                    hess[i] = (p * (1.0 - p)).max(1e-16);
                }
                let tree = fit_regression_tree(x, &grad, &hess, params.max_depth);
                for i in 0..n {
                    scores[i][k] += params.learning_rate * tree.value(&x[i]).to_f64_lossy();
                }
                round.push(tree);
            }
            model.rounds.push(round);
            model.train_log_loss.push(log_loss(&scores));
        }
        Ok(model)
    }

    /// Class probabilities for one row.
    pub fn probabilities(&self, row: &[F]) -> Vec<f64> {
        let lr = self.learning_rate.to_f64_lossy();
        if self.n_classes == 2 {
            let mut s = self.base_scores[0].to_f64_lossy();
            for round in &self.rounds {
                s += lr * round[0].value(row).to_f64_lossy();
            }
            let p = sigmoid(s);
            vec![1.0 - p, p]
        } else {
            let mut s: Vec<f64> = self.base_scores.iter().map(|b| b.to_f64_lossy()).collect();
            for round in &self.rounds {
                for (k, tree) in round.iter().enumerate() {
                    s[k] += lr * tree.value(row).to_f64_lossy();
                }
            }
            softmax(&mut s);
            s
        }
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict_row(&self, row: &[F]) -> usize {
        let p = self.probabilities(row);
        let mut best = 0usize;
        for (c, &v) in p.iter().enumerate().skip(1) {
            if v > p[best] {
                best = c;
            }
        }
        best
    }

    pub fn predict(&self, x: &[Vec<F>]) -> Vec<usize> {
        x.iter().map(|row| self.predict_row(row)).collect()
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn blobs(n: usize, seed: u64, k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = stream_rng(seed, 0);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % k;
            x.push(vec![
                class as f64 * 3.0 + rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>(),
            ]);
            y.push(class);
        }
        (x, y)
    }

    #[test]
    fn binary_boosting_learns_blobs() {
        let (x, y) = blobs(300, 11, 2);
        let params = GradientBoostingParams {
            n_rounds: 30,
            ..GradientBoostingParams::default()
        };
        let model = GradientBoostingModel::fit(&x, &y, 2, &params).unwrap();
        let (xt, yt) = blobs(200, 12, 2);
        let correct = model
            .predict(&xt)
            .iter()
            .zip(&yt)
            .filter(|(a, b)| a == b)
            .count();
        assert!(correct >= 190, "only {correct}/200 correct");
    }

    #[test]
    fn multiclass_boosting_learns_blobs() {
        let (x, y) = blobs(300, 13, 3);
        let params = GradientBoostingParams {
            n_rounds: 30,
            ..GradientBoostingParams::default()
        };
        let model = GradientBoostingModel::fit(&x, &y, 3, &params).unwrap();
        let (xt, yt) = blobs(150, 14, 3);
        let correct = model
            .predict(&xt)
            .iter()
            .zip(&yt)
            .filter(|(a, b)| a == b)
            .count();
        assert!(correct >= 140, "only {correct}/150 correct");
    }

    #[test]
    fn zero_rounds_predicts_the_prior() {
        let (x, mut y) = blobs(90, 15, 3);
        // Make class 2 the clear majority.
        for label in y.iter_mut().take(60) {
            *label = 2;
        }
        let params = GradientBoostingParams {
            n_rounds: 0,
            ..GradientBoostingParams::default()
        };
        let model = GradientBoostingModel::fit(&x, &y, 3, &params).unwrap();
        assert!(model.predict(&x).iter().all(|&c| c == 2));

        let (xb, mut yb) = blobs(50, 16, 2);
        for label in yb.iter_mut().take(40) {
            *label = 0;
        }
        let model = GradientBoostingModel::fit(&xb, &yb, 2, &params).unwrap();
        assert!(model.predict(&xb).iter().all(|&c| c == 0));
    }

    #[test]
    fn train_log_loss_never_increases() {
        for k in [2usize, 3] {
            let (x, y) = blobs(200, 17 + k as u64, k);
            let params = GradientBoostingParams {
                n_rounds: 40,
                ..GradientBoostingParams::default()
            };
            let model = GradientBoostingModel::fit(&x, &y, k, &params).unwrap();
            assert_eq!(model.train_log_loss.len(), 41);
            for w in model.train_log_loss.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9,
                    "log-loss rose from {} to {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs(150, 19, 2);
        let params = GradientBoostingParams::default();
        let a = GradientBoostingModel::<f64>::fit(&x, &y, 2, &params).unwrap();
        let b = GradientBoostingModel::<f64>::fit(&x, &y, 2, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (x, y) = blobs(120, 20, 3);
        let model =
            GradientBoostingModel::fit(&x, &y, 3, &GradientBoostingParams::default()).unwrap();
        for row in x.iter().take(10) {
            let p = model.probabilities(row);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn rejects_malformed_input() {
        let x = vec![vec![0.0f64]];
        assert!(matches!(
            GradientBoostingModel::fit(&x, &[0, 1], 2, &GradientBoostingParams::default()),
            Err(MlError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            GradientBoostingModel::<f64>::fit(&[], &[], 2, &GradientBoostingParams::default()),
            Err(MlError::EmptyTrainingSet)
        ));
        assert!(matches!(
            GradientBoostingModel::fit(&x, &[0], 1, &GradientBoostingParams::default()),
            Err(MlError::BadParams(_))
        ));
        let xs = vec![vec![0.0f64], vec![1.0]];
        assert!(matches!(
            GradientBoostingModel::fit(&xs, &[0, 0], 2, &GradientBoostingParams::default()),
            Err(MlError::DegenerateTraining)
        ));
    }
}
