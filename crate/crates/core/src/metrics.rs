//! Cross-run accounting: energy totals and savings against the fixed
//! baseline, acceptability split at the convergence step, labelling effort.
//!
//! The split point is where the active-learning and conventional setpoint
//! series agree through the end of the horizon. Strategies are scored before
//! and after that step separately because early steps reflect cold-start and
//! exploratory setpoints rather than the learned operating point.

use serde::Serialize;

use crate::control::{detect_convergence, RunResult, StepRecord, Strategy};
use crate::error::{Result, SimError};
use crate::zone::EnergyBreakdown;

/// Figures for one run, split at the convergence step when one exists.
#[derive(Debug, Clone, Serialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub energy: EnergyBreakdown,
    /// Fractional saving against the fixed baseline, (E_base - E) / E_base.
    pub energy_reduction: f64,
    pub candidates_offered: usize,
    pub labels_queried: usize,
    /// Fraction of offered queries collected; absent when nothing was offered.
    pub labelling_effort: Option<f64>,
    pub mean_acceptability_before: Option<f64>,
    pub mean_acceptability_after: Option<f64>,
    pub mean_model_acceptability_before: Option<f64>,
    pub mean_model_acceptability_after: Option<f64>,
    /// Mean setpoint over occupied steps from the convergence step on.
    pub mean_setpoint_after: Option<f64>,
}

/// Whole-experiment summary across strategies sharing one seed.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    /// First step from which the active-learning and conventional setpoints
    /// stay together through the end; absent unless both runs are present
    /// and actually converge.
    pub convergence_step: Option<u64>,
    /// Effort saving of active learning over conventional,
    /// 1 - effort_al / effort_conv.
    pub effort_reduction: Option<f64>,
    pub baseline: StrategySummary,
    pub strategies: Vec<StrategySummary>,
}

/// Energy drawn over a span of steps, by end use.
pub fn total_energy(steps: &[StepRecord]) -> EnergyBreakdown {
    let mut total = EnergyBreakdown::default();
    for s in steps {
        total.add(&s.energy);
    }
    total
}

/// Energy per calendar week, last week possibly short. The sum over weeks
/// equals the run total.
pub fn weekly_energy(result: &RunResult, steps_per_week: usize) -> Result<Vec<EnergyBreakdown>> {
    if steps_per_week == 0 {
        return Err(SimError::Input("steps_per_week must be positive".into()));
    }
    Ok(result
        .steps
        .chunks(steps_per_week)
        .map(total_energy)
        .collect())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn summarize(run: &RunResult, e_base: &EnergyBreakdown, split: usize) -> StrategySummary {
    let energy = total_energy(&run.steps);
    let (before, after) = run.steps.split_at(split.min(run.steps.len()));
    // A zero-energy horizon leaves nothing to save.
    let energy_reduction = if e_base.total_kwh() > 0.0 {
        (e_base.total_kwh() - energy.total_kwh()) / e_base.total_kwh()
    } else {
        0.0
    };
    StrategySummary {
        strategy: run.strategy,
        energy,
        energy_reduction,
        candidates_offered: run.candidates_offered,
        labels_queried: run.labels_queried,
        labelling_effort: run.effort().ok(),
        mean_acceptability_before: mean(before.iter().filter_map(|s| s.acceptability)),
        mean_acceptability_after: mean(after.iter().filter_map(|s| s.acceptability)),
        mean_model_acceptability_before: mean(before.iter().filter_map(|s| s.model_acceptability)),
        mean_model_acceptability_after: mean(after.iter().filter_map(|s| s.model_acceptability)),
        mean_setpoint_after: mean(after.iter().filter(|s| s.occupied).map(|s| s.setpoint_c)),
    }
}

/// Cross-strategy summary against a shared-horizon baseline run. Without a
/// detected convergence the whole horizon counts as "before".
pub fn metrics_summary(
    results: &[RunResult],
    baseline: &RunResult,
    tolerance_c: f64,
    window_steps: usize,
) -> Result<Summary> {
    for r in results {
        if r.steps.len() != baseline.steps.len() {
            return Err(SimError::Input(format!(
                "horizon mismatch: {} ran {} steps, baseline ran {}",
                r.strategy,
                r.steps.len(),
                baseline.steps.len()
            )));
        }
    }

    let find = |wanted: Strategy| results.iter().find(|r| r.strategy == wanted);
    let convergence_step = match (find(Strategy::ActiveLearning), find(Strategy::Conventional)) {
        (Some(al), Some(conv)) => detect_convergence(
            &al.setpoint_series(),
            &conv.setpoint_series(),
            tolerance_c,
            window_steps,
        )?,
        _ => None,
    };
    let split = convergence_step
        .map(|s| s as usize)
        .unwrap_or(baseline.steps.len());

    let e_base = total_energy(&baseline.steps);
    let strategies: Vec<StrategySummary> = results
        .iter()
        .map(|r| summarize(r, &e_base, split))
        .collect();

    let effort_of = |wanted: Strategy| {
        strategies
            .iter()
            .find(|s| s.strategy == wanted)
            .and_then(|s| s.labelling_effort)
    };
    let effort_reduction = match (
        effort_of(Strategy::ActiveLearning),
        effort_of(Strategy::Conventional),
    ) {
        (Some(al), Some(conv)) if conv > 0.0 => Some(1.0 - al / conv),
        _ => None,
    };

    Ok(Summary {
        convergence_step,
        effort_reduction,
        baseline: summarize(baseline, &e_base, split),
        strategies,
    })
}
