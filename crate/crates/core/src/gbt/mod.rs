//! Multiclass gradient-boosted trees with a softmax objective, written
//! against the three-class preference problem but generic over any small
//! class count.
//!
//! Training is deterministic: there is no row or feature subsampling, split
//! ties resolve to the lowest feature index then lowest threshold, and the
//! base scores are Laplace-smoothed log class priors. Each round fits one
//! tree per class to the softmax gradients g = p - y and diagonal hessians
//! h = p (1 - p); leaves take the damped Newton step -sum(g)/(sum(h)+lambda)
//! and are applied with the learning rate.

mod tree;

pub use tree::{GbtParams, Node, TrainData, Tree};

use tree::fit_tree;

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::occupant::{EnvState, LabeledInstance, PreferenceLabel};

/// Numerically safe softmax: shifts by the max before exponentiating.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in scores.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in scores.iter_mut() {
        *v /= sum;
    }
}

/// Probability floor when scoring log-loss, so a confidently wrong model
/// yields a large finite penalty instead of infinity.
const LOG_LOSS_FLOOR: f64 = 1e-15;

/// A trained boosted ensemble over the generic feature layout of
/// [`TrainData`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoostedEnsemble {
    pub n_classes: usize,
    pub onehot_cardinality: usize,
    pub n_continuous: usize,
    /// Laplace-smoothed log class priors.
    pub base_scores: Vec<f64>,
    /// `trees[round][class]`.
    pub trees: Vec<Vec<Tree>>,
    pub params: GbtParams,
    /// Training multiclass log-loss, index 0 is the base-only model. The
    /// curve is nonincreasing; this is asserted after training.
    pub train_log_loss: Vec<f64>,
}

impl BoostedEnsemble {
    /// Trains an ensemble. Fully deterministic for a fixed data order; the
    /// only order sensitivity is float summation over rows with equal
    /// feature values.
    pub fn train(data: &TrainData, params: &GbtParams) -> Result<Self> {
        params.validate()?;
        data.validate()?;
        let n = data.n_rows();
        let k = data.n_classes;

        let mut counts = vec![0usize; k];
        for &l in data.labels {
            counts[l as usize] += 1;
        }
        let base_scores: Vec<f64> = counts
            .iter()
            .map(|&c| (((c + 1) as f64) / ((n + k) as f64)).ln())
            .collect();

        // Row-major score matrix, updated in place each round.
        let mut scores = vec![0.0f64; n * k];
        for r in 0..n {
            scores[r * k..(r + 1) * k].copy_from_slice(&base_scores);
        }

        let sorted_cols = data.sorted_columns();
        let mut probs = vec![0.0f64; n * k];
        let mut train_log_loss = Vec::with_capacity(params.rounds + 1);
        let mut trees: Vec<Vec<Tree>> = Vec::with_capacity(params.rounds);

        let log_loss = |probs: &[f64]| -> f64 {
            let mut total = 0.0;
            for r in 0..n {
                let p = probs[r * k + data.labels[r] as usize].max(LOG_LOSS_FLOOR);
                total -= p.ln();
            }
            total / n as f64
        };

        let refresh_probs = |scores: &[f64], probs: &mut [f64]| {
            probs.copy_from_slice(scores);
            for r in 0..n {
                softmax_in_place(&mut probs[r * k..(r + 1) * k]);
            }
        };

        refresh_probs(&scores, &mut probs);
        train_log_loss.push(log_loss(&probs));

        let mut g = vec![0.0f64; n];
        let mut h = vec![0.0f64; n];
        for _round in 0..params.rounds {
            let mut round_trees = Vec::with_capacity(k);
            for class in 0..k {
                for r in 0..n {
                    let p = probs[r * k + class];
                    let y = if data.labels[r] as usize == class {
                        1.0
                    } else {
                        0.0
                    };
                    g[r] = p - y;
                    h[r] = p * (1.0 - p);
                }
                let (tree, row_values) = fit_tree(data, &sorted_cols, &g, &h, params);
                for r in 0..n {
                    scores[r * k + class] += params.learning_rate * row_values[r];
                }
                round_trees.push(tree);
            }
            trees.push(round_trees);
            refresh_probs(&scores, &mut probs);
            train_log_loss.push(log_loss(&probs));
        }

        debug_assert!(
            train_log_loss.windows(2).all(|w| w[1] <= w[0] + 1e-9),
            "training log-loss must be nonincreasing: {:?}",
            train_log_loss
        );

        Ok(BoostedEnsemble {
            n_classes: k,
            onehot_cardinality: data.onehot_cardinality,
            n_continuous: data.columns.len(),
            base_scores,
            trees,
            params: *params,
            train_log_loss,
        })
    }

    fn check_shape(&self, code: u32, continuous: &[f64]) -> Result<()> {
        if continuous.len() != self.n_continuous {
            return Err(SimError::Shape(format!(
                "expected {} continuous features, got {}",
                self.n_continuous,
                continuous.len()
            )));
        }
        if self.onehot_cardinality > 0 && code as usize >= self.onehot_cardinality {
            return Err(SimError::Shape(format!(
                "code {code} exceeds one-hot cardinality {}",
                self.onehot_cardinality
            )));
        }
        Ok(())
    }

    /// Raw additive scores (logits) for one row.
    pub fn raw_scores(&self, code: u32, continuous: &[f64]) -> Result<Vec<f64>> {
        self.check_shape(code, continuous)?;
        let card = self.onehot_cardinality;
        let mut scores = self.base_scores.clone();
        for round in &self.trees {
            for (class, tree) in round.iter().enumerate() {
                scores[class] += self.params.learning_rate
                    * tree.predict_with(|f| {
                        let f = f as usize;
                        if f < card {
                            if code == f as u32 {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            continuous[f - card]
                        }
                    });
            }
        }
        Ok(scores)
    }

    /// Class probabilities for one row. Always a valid distribution.
    pub fn predict_proba(&self, code: u32, continuous: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.raw_scores(code, continuous)?))
    }

    /// Split-gain feature importance, normalised to sum to 1. A degenerate
    /// ensemble with no splits reports a uniform vector so downstream
    /// normalisation invariants still hold.
    pub fn feature_gain_importance(&self) -> Vec<f64> {
        let n_features = self.onehot_cardinality + self.n_continuous;
        let mut gains = vec![0.0f64; n_features];
        for round in &self.trees {
            for tree in round {
                tree.accumulate_gain(&mut gains);
            }
        }
        let total: f64 = gains.iter().sum();
        if total > 0.0 {
            for v in &mut gains {
                *v /= total;
            }
        } else {
            let uniform = 1.0 / n_features as f64;
            gains.iter_mut().for_each(|v| *v = uniform);
        }
        gains
    }

    /// Plain-JSON dump of base scores and every tree, for inspection. The
    /// layout mirrors the in-memory structures and is not a stable format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }
}

/// Evaluation metrics for a labelled test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    /// Mean of per-class F1 over all three classes; classes absent from both
    /// predictions and truth contribute zero.
    pub macro_f1: f64,
    pub log_loss: f64,
}

/// The personal comfort model: one shared multitask ensemble over an
/// occupant one-hot block plus the four environment features
/// (indoor temperature, air speed, outdoor temperature, outdoor humidity).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComfortModel {
    pub n_occupants: usize,
    pub ensemble: BoostedEnsemble,
}

/// Number of continuous environment features in the comfort feature vector.
pub const ENV_FEATURE_COUNT: usize = 4;

fn env_features(env: &EnvState) -> [f64; ENV_FEATURE_COUNT] {
    [
        env.indoor_temp_c,
        env.air_speed_ms,
        env.outdoor_temp_c,
        env.outdoor_rh_pct,
    ]
}

impl ComfortModel {
    /// Retrains from scratch on the full labelled set.
    pub fn train(
        instances: &[LabeledInstance],
        n_occupants: usize,
        params: &GbtParams,
    ) -> Result<Self> {
        if n_occupants == 0 {
            return Err(SimError::Training("n_occupants must be positive".into()));
        }
        if instances.is_empty() {
            return Err(SimError::Training("empty training set".into()));
        }
        if let Some(bad) = instances
            .iter()
            .find(|i| i.occupant_id as usize >= n_occupants)
        {
            return Err(SimError::Shape(format!(
                "occupant id {} exceeds population size {}",
                bad.occupant_id, n_occupants
            )));
        }
        let codes: Vec<u32> = instances.iter().map(|i| i.occupant_id).collect();
        let labels: Vec<u8> = instances.iter().map(|i| i.label.index() as u8).collect();
        let mut columns: Vec<Vec<f64>> = (0..ENV_FEATURE_COUNT)
            .map(|_| Vec::with_capacity(instances.len()))
            .collect();
        for inst in instances {
            for (col, v) in columns.iter_mut().zip(env_features(&inst.env)) {
                col.push(v);
            }
        }
        let data = TrainData {
            onehot_cardinality: n_occupants,
            codes: &codes,
            columns: &columns,
            labels: &labels,
            n_classes: PreferenceLabel::COUNT,
        };
        Ok(ComfortModel {
            n_occupants,
            ensemble: BoostedEnsemble::train(&data, params)?,
        })
    }

    pub fn predict_proba(&self, occupant_id: u32, env: &EnvState) -> Result<[f64; 3]> {
        let p = self
            .ensemble
            .predict_proba(occupant_id, &env_features(env))?;
        Ok([p[0], p[1], p[2]])
    }

    /// Highest-probability label; exact ties resolve to no-change first,
    /// then cooler.
    pub fn predict_label(&self, occupant_id: u32, env: &EnvState) -> Result<PreferenceLabel> {
        let p = self.predict_proba(occupant_id, env)?;
        Ok(argmax_label(&p))
    }

    /// Accuracy, macro-F1 and log-loss against a labelled test set.
    pub fn evaluate(&self, test: &[LabeledInstance]) -> Result<EvalMetrics> {
        if test.is_empty() {
            return Err(SimError::Input("empty evaluation set".into()));
        }
        let k = PreferenceLabel::COUNT;
        let mut confusion = [[0usize; 3]; 3]; // [truth][prediction]
        let mut loss = 0.0;
        for inst in test {
            let p = self.predict_proba(inst.occupant_id, &inst.env)?;
            let pred = argmax_label(&p);
            confusion[inst.label.index()][pred.index()] += 1;
            loss -= p[inst.label.index()].max(LOG_LOSS_FLOOR).ln();
        }
        let n = test.len() as f64;
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let mut f1_sum = 0.0;
        for (c, truth_row) in confusion.iter().enumerate() {
            let tp = truth_row[c] as f64;
            let pred_c: f64 = (0..k).map(|t| confusion[t][c]).sum::<usize>() as f64;
            let true_c: f64 = truth_row.iter().sum::<usize>() as f64;
            let precision = if pred_c > 0.0 { tp / pred_c } else { 0.0 };
            let recall = if true_c > 0.0 { tp / true_c } else { 0.0 };
            if precision + recall > 0.0 {
                f1_sum += 2.0 * precision * recall / (precision + recall);
            }
        }
        Ok(EvalMetrics {
            accuracy: correct as f64 / n,
            macro_f1: f1_sum / k as f64,
            log_loss: loss / n,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }
}

/// Argmax with the documented tie order: no-change wins exact ties, then
/// cooler, then warmer.
pub fn argmax_label(p: &[f64; 3]) -> PreferenceLabel {
    let order = [
        PreferenceLabel::NoChange,
        PreferenceLabel::Cooler,
        PreferenceLabel::Warmer,
    ];
    let mut best = order[0];
    for &label in &order[1..] {
        if p[label.index()] > p[best.index()] {
            best = label;
        }
    }
    best
}
