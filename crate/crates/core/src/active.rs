//! Query-by-committee label acquisition.
//!
//! A committee of models trained on bootstrap resamples of the labelled pool
//! votes on each candidate query; disagreement is measured with hard-vote
//! entropy and only candidates above a threshold (or the top k) earn a label
//! request. Labelling effort is the fraction of candidates that were
//! actually labelled.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::gbt::{argmax_label, ComfortModel, GbtParams};
use crate::occupant::{Candidate, LabeledInstance};
use crate::rng::{self, salt};

/// How selected queries are chosen from the scored candidate batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionPolicy {
    /// Every candidate with entropy strictly above `theta`.
    Threshold { theta: f64 },
    /// The `k` highest-entropy candidates; ties go to the lower occupant id,
    /// then the earlier batch position.
    TopK { k: usize },
}

/// Bootstrap committee over the labelled pool.
#[derive(Debug, Clone)]
pub struct Committee {
    pub members: Vec<ComfortModel>,
}

impl Committee {
    /// Hard votes of every member for one candidate, tallied per class.
    pub fn vote(&self, c: &Candidate) -> Result<[u32; 3]> {
        let mut votes = [0u32; 3];
        for member in &self.members {
            let p = member.predict_proba(c.occupant_id, &c.env)?;
            votes[argmax_label(&p).index()] += 1;
        }
        Ok(votes)
    }

    /// Vote entropy for every candidate in the batch.
    pub fn score(&self, candidates: &[Candidate]) -> Result<Vec<f64>> {
        candidates
            .iter()
            .map(|c| Ok(vote_entropy(&self.vote(c)?)))
            .collect()
    }
}

/// Trains `m` committee members on bootstrap resamples (with replacement,
/// original pool size) of the labelled pool. `build_index` distinguishes
/// successive rebuilds under one run seed; member `i` draws its resample from
/// an independent stream.
pub fn build_committee(
    pool: &[LabeledInstance],
    n_occupants: usize,
    params: &GbtParams,
    m: usize,
    seed: u64,
    build_index: u64,
) -> Result<Committee> {
    if pool.is_empty() {
        return Err(SimError::ColdStart);
    }
    if m < 2 {
        return Err(SimError::Config(format!(
            "a committee needs at least 2 members, got {m}"
        )));
    }
    let members: Vec<Result<ComfortModel>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, salt::COMMITTEE, build_index, i as u64);
            let sample: Vec<LabeledInstance> = (0..pool.len())
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .collect();
            ComfortModel::train(&sample, n_occupants, params)
        })
        .collect();
    let mut out = Vec::with_capacity(m);
    for member in members {
        out.push(member?);
    }
    Ok(Committee { members: out })
}

/// Entropy of a hard-vote tally: -sum (v/m) ln(v/m) over classes with votes.
/// Zero when unanimous; at most ln(3) for a three-way split.
pub fn vote_entropy(votes: &[u32; 3]) -> f64 {
    let m: u32 = votes.iter().sum();
    if m == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &v in votes {
        if v > 0 {
            let p = v as f64 / m as f64;
            h -= p * p.ln();
        }
    }
    h
}

/// Indices of the candidates to label, per the policy. Scores and candidates
/// run in parallel; the returned indices are sorted ascending.
pub fn select_informative(
    scores: &[f64],
    candidates: &[Candidate],
    policy: SelectionPolicy,
) -> Result<Vec<usize>> {
    if scores.len() != candidates.len() {
        return Err(SimError::Shape(format!(
            "{} scores for {} candidates",
            scores.len(),
            candidates.len()
        )));
    }
    match policy {
        SelectionPolicy::Threshold { theta } => {
            if theta < 0.0 {
                return Err(SimError::Config(format!(
                    "entropy threshold must be nonnegative, got {theta}"
                )));
            }
            Ok((0..scores.len()).filter(|&i| scores[i] > theta).collect())
        }
        SelectionPolicy::TopK { k } => {
            if k > scores.len() {
                return Err(SimError::Config(format!(
                    "cannot pick top {k} of {} candidates",
                    scores.len()
                )));
            }
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| {
                scores[b]
                    .total_cmp(&scores[a])
                    .then(candidates[a].occupant_id.cmp(&candidates[b].occupant_id))
                    .then(a.cmp(&b))
            });
            let mut picked: Vec<usize> = order.into_iter().take(k).collect();
            picked.sort_unstable();
            Ok(picked)
        }
    }
}

/// Fraction of offered candidates that were labelled.
pub fn labelling_effort(labelled: usize, candidates: usize) -> Result<f64> {
    if candidates == 0 {
        return Err(SimError::UndefinedEffort);
    }
    Ok(labelled as f64 / candidates as f64)
}

/// The pool can sustain a committee once it holds at least `min_labels`
/// instances spanning at least two preference classes.
pub fn pool_ready(pool: &[LabeledInstance], min_labels: usize) -> bool {
    if pool.len() < min_labels {
        return false;
    }
    let mut seen = [false; 3];
    for inst in pool {
        seen[inst.label.index()] = true;
    }
    seen.iter().filter(|&&s| s).count() >= 2
}
