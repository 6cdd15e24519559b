//! Feature ranking for the comfort model inputs: split-gain importance from
//! a boosted ensemble, and recursive feature elimination scored by
//! stratified cross-validation.
//!
//! Everything here is deterministic for a fixed seed. Elimination ties
//! resolve to the earliest feature in input order, and fold assignment deals
//! shuffled per-class indices round-robin so class proportions survive the
//! split.

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::gbt::{argmax_label, BoostedEnsemble, GbtParams, TrainData};
use crate::rng::{self, salt};
use rand::seq::SliceRandom;

/// A labelled table of named continuous feature columns.
#[derive(Debug, Clone)]
pub struct TabularData {
    pub feature_names: Vec<String>,
    /// `columns[feature][row]`.
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub n_classes: usize,
}

impl TabularData {
    pub fn validate(&self) -> Result<()> {
        if self.feature_names.len() != self.columns.len() {
            return Err(SimError::Shape(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.columns.len()
            )));
        }
        if self.columns.is_empty() {
            return Err(SimError::Input("no feature columns".into()));
        }
        let n = self.labels.len();
        if n == 0 {
            return Err(SimError::Input("no rows".into()));
        }
        if let Some(col) = self.columns.iter().position(|c| c.len() != n) {
            return Err(SimError::Shape(format!(
                "column {col} has {} rows, labels have {n}",
                self.columns[col].len()
            )));
        }
        if self.n_classes < 2 {
            return Err(SimError::DegenerateDataset(
                "need at least two classes".into(),
            ));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l as usize >= self.n_classes) {
            return Err(SimError::Shape(format!(
                "label {l} out of range for {} classes",
                self.n_classes
            )));
        }
        Ok(())
    }

    fn distinct_label_count(&self) -> usize {
        let mut seen = vec![false; self.n_classes];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

fn train_on(
    data: &TabularData,
    rows: &[u32],
    features: &[usize],
    params: &GbtParams,
) -> Result<BoostedEnsemble> {
    let columns: Vec<Vec<f64>> = features
        .iter()
        .map(|&f| rows.iter().map(|&r| data.columns[f][r as usize]).collect())
        .collect();
    let labels: Vec<u8> = rows.iter().map(|&r| data.labels[r as usize]).collect();
    let codes = vec![0u32; rows.len()];
    let train = TrainData {
        onehot_cardinality: 0,
        codes: &codes,
        columns: &columns,
        labels: &labels,
        n_classes: data.n_classes,
    };
    BoostedEnsemble::train(&train, params)
}

fn fold_accuracy(
    model: &BoostedEnsemble,
    data: &TabularData,
    rows: &[u32],
    features: &[usize],
) -> Result<f64> {
    let mut correct = 0usize;
    let mut row_buf = vec![0.0f64; features.len()];
    for &r in rows {
        for (slot, &f) in row_buf.iter_mut().zip(features) {
            *slot = data.columns[f][r as usize];
        }
        let p = model.predict_proba(0, &row_buf)?;
        // Reuse the three-class argmax when possible; fall back to a plain
        // first-max scan for other class counts.
        let pred = if p.len() == 3 {
            argmax_label(&[p[0], p[1], p[2]]).index()
        } else {
            p.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0)
        };
        if pred == data.labels[r as usize] as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}

/// Importance of every feature from one ensemble trained on the full table,
/// normalised to sum to 1.
pub fn impurity_importance(data: &TabularData, params: &GbtParams) -> Result<Vec<f64>> {
    data.validate()?;
    if data.distinct_label_count() < 2 {
        return Err(SimError::DegenerateDataset(
            "all rows share one label".into(),
        ));
    }
    let rows: Vec<u32> = (0..data.labels.len() as u32).collect();
    let features: Vec<usize> = (0..data.columns.len()).collect();
    let model = train_on(data, &rows, &features, params)?;
    Ok(model.feature_gain_importance())
}

/// Stratified fold assignment: `result[i]` is the fold of row `i`.
pub fn stratified_folds(labels: &[u8], n_classes: usize, n_folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, salt::FOLDS, n_folds as u64, 0);
    let mut assignment = vec![0usize; labels.len()];
    let mut dealt = 0usize;
    for class in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i] as usize == class)
            .collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = dealt % n_folds;
            dealt += 1;
        }
    }
    assignment
}

/// Ranking of one feature after recursive elimination.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureRank {
    pub name: String,
    /// Mean elimination rank over folds; 1 is the last survivor.
    pub mean_rank: f64,
    /// Split-gain importance from the full-data ensemble.
    pub importance: f64,
}

/// Full output of the elimination study.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureReport {
    /// In input feature order.
    pub ranks: Vec<FeatureRank>,
    /// `mean_accuracy_by_count[k]` is the cross-validated accuracy with the
    /// best `k + 1` features, averaged over folds.
    pub mean_accuracy_by_count: Vec<f64>,
    /// Feature count with the highest mean accuracy; ties go to the
    /// smaller count.
    pub best_count: usize,
}

impl FeatureReport {
    /// CSV with one row per feature, best first.
    pub fn to_csv(&self) -> String {
        let mut ordered: Vec<&FeatureRank> = self.ranks.iter().collect();
        ordered.sort_by(|a, b| {
            a.mean_rank
                .total_cmp(&b.mean_rank)
                .then(b.importance.total_cmp(&a.importance))
                .then(a.name.cmp(&b.name))
        });
        let mut out = String::from("feature,mean_rank,importance\n");
        for r in ordered {
            out.push_str(&format!("{},{},{}\n", r.name, r.mean_rank, r.importance));
        }
        out
    }
}

/// Recursive feature elimination under stratified k-fold cross-validation.
///
/// Within each fold the model retrains on the training split after every
/// elimination; the feature with the lowest importance drops, ties breaking
/// to the earliest input position. A feature eliminated with `m` features
/// still active receives rank `m`; the survivor gets rank 1.
pub fn rfecv_rank(
    data: &TabularData,
    params: &GbtParams,
    n_folds: usize,
    seed: u64,
) -> Result<FeatureReport> {
    data.validate()?;
    if n_folds < 2 {
        return Err(SimError::Config(format!(
            "cross-validation needs at least 2 folds, got {n_folds}"
        )));
    }
    if n_folds > data.labels.len() {
        return Err(SimError::Config(format!(
            "{n_folds} folds for {} rows",
            data.labels.len()
        )));
    }
    if data.distinct_label_count() < 2 {
        return Err(SimError::DegenerateDataset(
            "all rows share one label".into(),
        ));
    }

    let n_features = data.columns.len();
    let assignment = stratified_folds(&data.labels, data.n_classes, n_folds, seed);
    let mut rank_sums = vec![0.0f64; n_features];
    let mut acc_sums = vec![0.0f64; n_features];

    for fold in 0..n_folds {
        let train_rows: Vec<u32> = (0..data.labels.len() as u32)
            .filter(|&r| assignment[r as usize] != fold)
            .collect();
        let valid_rows: Vec<u32> = (0..data.labels.len() as u32)
            .filter(|&r| assignment[r as usize] == fold)
            .collect();
        if train_rows.is_empty() || valid_rows.is_empty() {
            return Err(SimError::Config(format!(
                "fold {fold} left an empty split; reduce the fold count"
            )));
        }

        let mut active: Vec<usize> = (0..n_features).collect();
        loop {
            let model = train_on(data, &train_rows, &active, params)?;
            acc_sums[active.len() - 1] += fold_accuracy(&model, data, &valid_rows, &active)?;
            if active.len() == 1 {
                rank_sums[active[0]] += 1.0;
                break;
            }
            let importance = model.feature_gain_importance();
            let mut drop_at = 0usize;
            for (pos, &imp) in importance.iter().enumerate() {
                if imp < importance[drop_at] {
                    drop_at = pos;
                }
            }
            rank_sums[active[drop_at]] += active.len() as f64;
            active.remove(drop_at);
        }
    }

    let ranks = (0..n_features)
        .map(|f| FeatureRank {
            name: data.feature_names[f].clone(),
            mean_rank: rank_sums[f] / n_folds as f64,
            importance: 0.0,
        })
        .collect::<Vec<_>>();
    let mut ranks = ranks;
    for (rank, imp) in ranks.iter_mut().zip(impurity_importance(data, params)?) {
        rank.importance = imp;
    }

    let mean_accuracy_by_count: Vec<f64> = acc_sums.iter().map(|s| s / n_folds as f64).collect();
    let mut best_count = 1usize;
    for (i, &acc) in mean_accuracy_by_count.iter().enumerate() {
        if acc > mean_accuracy_by_count[best_count - 1] {
            best_count = i + 1;
        }
    }

    Ok(FeatureReport {
        ranks,
        mean_accuracy_by_count,
        best_count,
    })
}

/// The `k` best features: lowest mean rank, then highest importance, then
/// name, in that order.
pub fn select_top_features(report: &FeatureReport, k: usize) -> Vec<String> {
    let mut ordered: Vec<&FeatureRank> = report.ranks.iter().collect();
    ordered.sort_by(|a, b| {
        a.mean_rank
            .total_cmp(&b.mean_rank)
            .then(b.importance.total_cmp(&a.importance))
            .then(a.name.cmp(&b.name))
    });
    ordered.iter().take(k).map(|r| r.name.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Step-function labels on the first column, a second column of noise.
    fn step_plus_noise(n: usize) -> TabularData {
        let sep: Vec<f64> = (0..n).map(|i| i as f64).collect();
        // Deterministic pseudo-noise decoupled from the labels.
        let noise: Vec<f64> = (0..n).map(|i| ((i * 2654435761) % 97) as f64).collect();
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
        TabularData {
            feature_names: vec!["separator".into(), "noise".into()],
            columns: vec![sep, noise],
            labels,
            n_classes: 2,
        }
    }

    fn quick_params() -> GbtParams {
        GbtParams {
            rounds: 8,
            ..GbtParams::default()
        }
    }

    #[test]
    fn importance_lands_entirely_on_a_clean_separator() {
        let mut data = step_plus_noise(40);
        // Make the second column constant so it can never split.
        data.columns[1] = vec![5.0; 40];
        let imp = impurity_importance(&data, &quick_params()).unwrap();
        assert!((imp[0] - 1.0).abs() < 1e-12);
        assert_eq!(imp[1], 0.0);
    }

    #[test]
    fn separator_outranks_noise() {
        let data = step_plus_noise(60);
        let report = rfecv_rank(&data, &quick_params(), 3, 11).unwrap();
        assert_eq!(report.ranks[0].mean_rank, 1.0);
        assert_eq!(report.ranks[1].mean_rank, 2.0);
        assert_eq!(
            select_top_features(&report, 1),
            vec!["separator".to_string()]
        );
    }

    #[test]
    fn duplicate_columns_rank_one_and_two() {
        let sep: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let data = TabularData {
            feature_names: vec!["first_copy".into(), "second_copy".into()],
            columns: vec![sep.clone(), sep],
            labels,
            n_classes: 2,
        };
        // Split ties inside the trees go to the lower feature index, so the
        // second copy never accrues gain and is always eliminated first.
        let report = rfecv_rank(&data, &quick_params(), 4, 3).unwrap();
        assert_eq!(report.ranks[0].mean_rank, 1.0);
        assert_eq!(report.ranks[1].mean_rank, 2.0);
    }

    #[test]
    fn too_few_folds_is_rejected() {
        let data = step_plus_noise(20);
        assert!(matches!(
            rfecv_rank(&data, &quick_params(), 1, 0),
            Err(SimError::Config(_))
        ));
        assert!(matches!(
            rfecv_rank(&data, &quick_params(), 21, 0),
            Err(SimError::Config(_))
        ));
    }

    #[test]
    fn single_label_dataset_is_rejected() {
        let mut data = step_plus_noise(20);
        data.labels = vec![1; 20];
        assert!(matches!(
            impurity_importance(&data, &quick_params()),
            Err(SimError::DegenerateDataset(_))
        ));
        assert!(matches!(
            rfecv_rank(&data, &quick_params(), 2, 0),
            Err(SimError::DegenerateDataset(_))
        ));
    }

    #[test]
    fn stratified_folds_preserve_class_balance() {
        // 30 of class 0, 15 of class 1, 3 folds: every fold must hold
        // exactly 10 and 5.
        let labels: Vec<u8> = (0..45).map(|i| u8::from(i % 3 == 2)).collect();
        let folds = stratified_folds(&labels, 2, 3, 42);
        for fold in 0..3 {
            let class0 = labels
                .iter()
                .zip(&folds)
                .filter(|&(l, f)| *l == 0 && *f == fold)
                .count();
            let class1 = labels
                .iter()
                .zip(&folds)
                .filter(|&(l, f)| *l == 1 && *f == fold)
                .count();
            assert_eq!(class0, 10);
            assert_eq!(class1, 5);
        }
    }

    #[test]
    fn fold_assignment_is_seed_deterministic() {
        let labels: Vec<u8> = (0..50).map(|i| (i % 3) as u8).collect();
        assert_eq!(
            stratified_folds(&labels, 3, 5, 7),
            stratified_folds(&labels, 3, 5, 7)
        );
        assert_ne!(
            stratified_folds(&labels, 3, 5, 7),
            stratified_folds(&labels, 3, 5, 8)
        );
    }

    /// Independent oracle: with one depth-1 round, the root split of the
    /// first-class tree must match an exhaustive scan over every feature and
    /// midpoint threshold using the same gain formula.
    #[test]
    fn depth_one_root_split_matches_exhaustive_search() {
        let n = 24;
        let col0: Vec<f64> = (0..n)
            .map(|i| (i as f64 * 1.37).sin() * 3.0 + 26.0)
            .collect();
        let col1: Vec<f64> = (0..n)
            .map(|i| (i as f64 * 0.91).cos() * 2.0 + 0.5)
            .collect();
        let labels: Vec<u8> = (0..n).map(|i| ((i * 7) % 3) as u8).collect();
        let data = TabularData {
            feature_names: vec!["a".into(), "b".into()],
            columns: vec![col0.clone(), col1.clone()],
            labels: labels.clone(),
            n_classes: 3,
        };
        let params = GbtParams {
            rounds: 1,
            max_depth: 1,
            min_samples_leaf: 1,
            ..GbtParams::default()
        };
        let rows: Vec<u32> = (0..n as u32).collect();
        let model = train_on(&data, &rows, &[0, 1], &params).unwrap();

        // Recompute the class-0 gradients from the smoothed priors.
        let mut counts = [0usize; 3];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        let total: f64 = counts.iter().map(|&c| (c + 1) as f64).sum();
        let p0 = (counts[0] + 1) as f64 / total;
        let g: Vec<f64> = labels
            .iter()
            .map(|&l| p0 - if l == 0 { 1.0 } else { 0.0 })
            .collect();
        let h: Vec<f64> = vec![p0 * (1.0 - p0); n];

        let lambda = params.l2_leaf_penalty;
        let half = |gs: f64, hs: f64| 0.5 * gs * gs / (hs + lambda);
        let g_total: f64 = g.iter().sum();
        let h_total: f64 = h.iter().sum();
        let mut best_gain = 0.0;
        let mut best = None;
        for (f, col) in [&col0, &col1].iter().enumerate() {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..n - 1 {
                gl += g[order[w]];
                hl += h[order[w]];
                if col[order[w + 1]] > col[order[w]] {
                    let threshold = 0.5 * (col[order[w]] + col[order[w + 1]]);
                    let gain =
                        half(gl, hl) + half(g_total - gl, h_total - hl) - half(g_total, h_total);
                    if gain > best_gain {
                        best_gain = gain;
                        best = Some((f as u32, threshold));
                    }
                }
            }
        }

        let (exp_feature, exp_threshold) = best.expect("some split must have positive gain");
        match model.trees[0][0].nodes[0] {
            crate::gbt::Node::Split {
                feature,
                threshold,
                gain,
                ..
            } => {
                assert_eq!(feature, exp_feature);
                assert!((threshold - exp_threshold).abs() < 1e-12);
                assert!((gain - best_gain).abs() < 1e-9);
            }
            _ => panic!("expected the root to split"),
        }
    }

    #[test]
    fn report_csv_orders_best_feature_first() {
        let data = step_plus_noise(60);
        let report = rfecv_rank(&data, &quick_params(), 3, 11).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "feature,mean_rank,importance");
        assert!(lines.next().unwrap().starts_with("separator,1"));
    }
}
