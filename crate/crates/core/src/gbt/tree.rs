//! Single-tree fitting over second-order boosting statistics.
//!
//! Trees are grown level by level. Continuous columns are sorted once per
//! training run and every level is a single filtered walk over each sorted
//! column; the occupant one-hot block is handled as one bucketing pass per
//! level instead of one scan per indicator, which is what keeps per-step
//! retraining affordable inside the control loop.

use serde::Serialize;

use crate::error::{Result, SimError};

/// Boosting hyperparameters, shared by the comfort model, committee members
/// and the feature-selection pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// L2 penalty on leaf values (the lambda in the leaf and gain formulas).
    pub l2_leaf_penalty: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            rounds: 50,
            learning_rate: 0.3,
            max_depth: 3,
            min_samples_leaf: 2,
            l2_leaf_penalty: 1.0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(SimError::Config(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 {
            return Err(SimError::Config("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(SimError::Config(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        if self.l2_leaf_penalty.is_nan() || self.l2_leaf_penalty < 0.0 {
            return Err(SimError::Config(format!(
                "l2_leaf_penalty {} must be nonnegative",
                self.l2_leaf_penalty
            )));
        }
        Ok(())
    }
}

/// Training matrix. Features are indexed as: `0..onehot_cardinality` are the
/// indicator columns of one categorical code, then the continuous columns in
/// order. A cardinality of zero means no categorical block.
pub struct TrainData<'a> {
    pub onehot_cardinality: usize,
    /// One code per row; ignored when `onehot_cardinality` is zero.
    pub codes: &'a [u32],
    /// Continuous columns, column-major.
    pub columns: &'a [Vec<f64>],
    /// Class index per row, each `< n_classes`.
    pub labels: &'a [u8],
    pub n_classes: usize,
}

impl<'a> TrainData<'a> {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.onehot_cardinality + self.columns.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_rows();
        if n == 0 {
            return Err(SimError::Training("empty training set".into()));
        }
        if self.n_classes < 2 {
            return Err(SimError::Training("need at least two classes".into()));
        }
        if self.n_features() == 0 {
            return Err(SimError::Training("no features".into()));
        }
        if self.onehot_cardinality > 0 {
            if self.codes.len() != n {
                return Err(SimError::Training("codes length mismatch".into()));
            }
            if let Some(bad) = self
                .codes
                .iter()
                .find(|&&c| c as usize >= self.onehot_cardinality)
            {
                return Err(SimError::Training(format!(
                    "code {bad} exceeds one-hot cardinality {}",
                    self.onehot_cardinality
                )));
            }
        }
        for (i, col) in self.columns.iter().enumerate() {
            if col.len() != n {
                return Err(SimError::Training(format!("column {i} length mismatch")));
            }
            if !col.iter().all(|v| v.is_finite()) {
                return Err(SimError::Training(format!(
                    "column {i} has non-finite values"
                )));
            }
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l as usize >= self.n_classes) {
            return Err(SimError::Training(format!(
                "label {bad} exceeds n_classes {}",
                self.n_classes
            )));
        }
        Ok(())
    }

    fn feature_value(&self, row: usize, feature: u32) -> f64 {
        let f = feature as usize;
        if f < self.onehot_cardinality {
            if self.codes[row] == feature {
                1.0
            } else {
                0.0
            }
        } else {
            self.columns[f - self.onehot_cardinality][row]
        }
    }

    /// Stable per-column sort indices, computed once per training run.
    pub(crate) fn sorted_columns(&self) -> Vec<Vec<u32>> {
        self.columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        /// Second-order objective gain realised by this split; the raw
        /// material of impurity-based feature importance.
        gain: f64,
        n_samples: u32,
    },
    Leaf {
        /// Unscaled Newton step -sum(g) / (sum(h) + lambda); the learning
        /// rate is applied when scores are accumulated.
        value: f64,
        n_samples: u32,
    },
}

/// One regression tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Evaluates the tree on one encoded row. `lookup` must return the value
    /// of the given feature index.
    pub fn predict_with(&self, lookup: impl Fn(u32) -> f64) -> f64 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if lookup(feature) <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    /// Adds this tree's split gains into a per-feature accumulator.
    pub(crate) fn accumulate_gain(&self, into: &mut [f64]) {
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = node {
                into[*feature as usize] += gain;
            }
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Agg {
    g: f64,
    h: f64,
    n: u32,
}

impl Agg {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.n += 1;
    }

    fn minus(self, other: Agg) -> Agg {
        Agg {
            g: self.g - other.g,
            h: self.h - other.h,
            n: self.n - other.n,
        }
    }
}

fn leaf_value(a: Agg, lambda: f64) -> f64 {
    -a.g / (a.h + lambda)
}

fn half_objective(a: Agg, lambda: f64) -> f64 {
    a.g * a.g / (a.h + lambda)
}

fn split_gain(parent: Agg, left: Agg, right: Agg, lambda: f64) -> f64 {
    0.5 * (half_objective(left, lambda) + half_objective(right, lambda)
        - half_objective(parent, lambda))
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: u32,
    threshold: f64,
    left: Agg,
    right: Agg,
}

/// Candidates are generated in feature order and, within a feature, in
/// ascending threshold order, so strictly-greater acceptance realises the
/// documented tie-break: lowest feature index, then lowest threshold.
fn consider(best: &mut Option<Candidate>, cand: Candidate) {
    let better = match best {
        None => cand.gain > 0.0,
        Some(b) => cand.gain > b.gain,
    };
    if better {
        *best = Some(cand);
    }
}

#[derive(Clone, Copy)]
struct Run {
    acc: Agg,
    last: f64,
    seen: bool,
}

/// Fits one tree to per-row gradients/hessians. Returns the tree and every
/// row's unscaled leaf value.
pub(crate) fn fit_tree(
    data: &TrainData,
    sorted_cols: &[Vec<u32>],
    g: &[f64],
    h: &[f64],
    params: &GbtParams,
) -> (Tree, Vec<f64>) {
    let n = g.len();
    let card = data.onehot_cardinality;
    let lambda = params.l2_leaf_penalty;
    let min_leaf = params.min_samples_leaf as u32;

    let mut root = Agg::default();
    for r in 0..n {
        root.add(g[r], h[r]);
    }
    let mut nodes = vec![Node::Leaf {
        value: leaf_value(root, lambda),
        n_samples: root.n,
    }];
    let mut node_of: Vec<u32> = vec![0; n];
    let mut active: Vec<(u32, Agg)> = vec![(0, root)];

    for _ in 0..params.max_depth {
        if active.is_empty() {
            break;
        }
        let mut slot = vec![-1i32; nodes.len()];
        for (s, (id, _)) in active.iter().enumerate() {
            slot[*id as usize] = s as i32;
        }
        let n_active = active.len();
        let mut best: Vec<Option<Candidate>> = vec![None; n_active];

        if card > 0 {
            let mut buckets = vec![Agg::default(); n_active * card];
            for r in 0..n {
                let s = slot[node_of[r] as usize];
                if s >= 0 {
                    buckets[s as usize * card + data.codes[r] as usize].add(g[r], h[r]);
                }
            }
            for s in 0..n_active {
                let parent = active[s].1;
                for j in 0..card {
                    let right = buckets[s * card + j];
                    if right.n < min_leaf || parent.n - right.n < min_leaf {
                        continue;
                    }
                    let left = parent.minus(right);
                    consider(
                        &mut best[s],
                        Candidate {
                            gain: split_gain(parent, left, right, lambda),
                            feature: j as u32,
                            threshold: 0.5,
                            left,
                            right,
                        },
                    );
                }
            }
        }

        for (ci, sorted) in sorted_cols.iter().enumerate() {
            let col = &data.columns[ci];
            let feature = (card + ci) as u32;
            let mut runs = vec![
                Run {
                    acc: Agg::default(),
                    last: 0.0,
                    seen: false,
                };
                n_active
            ];
            for &r in sorted {
                let r = r as usize;
                let s = slot[node_of[r] as usize];
                if s < 0 {
                    continue;
                }
                let s = s as usize;
                let v = col[r];
                if runs[s].seen && v > runs[s].last {
                    let parent = active[s].1;
                    let left = runs[s].acc;
                    if left.n >= min_leaf && parent.n - left.n >= min_leaf {
                        let right = parent.minus(left);
                        consider(
                            &mut best[s],
                            Candidate {
                                gain: split_gain(parent, left, right, lambda),
                                feature,
                                threshold: 0.5 * (runs[s].last + v),
                                left,
                                right,
                            },
                        );
                    }
                }
                runs[s].acc.add(g[r], h[r]);
                runs[s].last = v;
                runs[s].seen = true;
            }
        }

        let mut next_active = Vec::new();
        for (s, (id, parent)) in active.iter().enumerate() {
            if let Some(c) = best[s] {
                let left_id = nodes.len() as u32;
                let right_id = left_id + 1;
                nodes.push(Node::Leaf {
                    value: leaf_value(c.left, lambda),
                    n_samples: c.left.n,
                });
                nodes.push(Node::Leaf {
                    value: leaf_value(c.right, lambda),
                    n_samples: c.right.n,
                });
                nodes[*id as usize] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: left_id,
                    right: right_id,
                    gain: c.gain,
                    n_samples: parent.n,
                };
                next_active.push((left_id, c.left));
                next_active.push((right_id, c.right));
            }
        }

        for (r, assigned) in node_of.iter_mut().enumerate() {
            let nd = *assigned as usize;
            if nd < slot.len() && slot[nd] >= 0 {
                if let Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } = nodes[nd]
                {
                    *assigned = if data.feature_value(r, feature) <= threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
        active = next_active;
    }

    let row_values = node_of
        .iter()
        .map(|&nd| match nodes[nd as usize] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("rows always end in leaves"),
        })
        .collect();

    (Tree { nodes }, row_values)
}
