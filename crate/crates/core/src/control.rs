//! The closed control loop: poll occupants, learn their comfort, aggregate a
//! zone setpoint, run the zone, repeat.
//!
//! One run simulates a fixed horizon at a fixed control cadence under one of
//! four strategies. During occupied steps the occupant-centric strategies
//! poll a handful of distinct occupants, decide which answers to collect,
//! retrain the comfort model from scratch whenever the pool grew, and
//! re-aggregate the setpoint. The fixed baseline skips all of that and
//! serves one temperature. Outside office hours every strategy serves the
//! same setback and nobody is polled.
//!
//! Under the default replay source, polling offers each chosen occupant's
//! recorded survey answer nearest to the current conditions. An offered
//! answer is spent whether or not it is collected: the polling moment passes
//! either way, and declining a query forgoes that answer for good. Every
//! strategy therefore drains the survey at the same rate, and once it is
//! exhausted the pool, the model and the setpoint all freeze. Labelling
//! effort is the fraction of offered queries actually collected.
//!
//! All randomness is derived from the run seed with purpose-specific stream
//! salts, so two runs with equal inputs are bit-identical and compare
//! strategies against the same population, weather and survey.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::active::{build_committee, pool_ready, select_informative};
use crate::config::{PollingSource, SimConfig};
use crate::error::{Result, SimError};
use crate::gbt::{ComfortModel, EvalMetrics};
use crate::occupant::{
    choose_distinct, gen_dataset, generate_population, nearest_instances_oracle,
    nearest_unconsumed_row, sample_label, Candidate, EnvState, LabeledInstance, OccupantParams,
};
use crate::profiles::{
    aggregate_setpoint, generate_profile, model_acceptability, oracle_acceptability, ComfortProfile,
};
use crate::rng::{self, salt};
use crate::weather::{synth_weather, WeatherSeries};
use crate::zone::{zone_step, EnergyBreakdown, ZoneState};

/// Setpoint strategy of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Query-by-committee label acquisition.
    ActiveLearning,
    /// Labels every candidate query.
    Conventional,
    /// Constant occupied setpoint, no occupant feedback.
    FixedBaseline,
    /// Labels as many candidates per step as a reference run did, chosen
    /// uniformly instead of by informativeness.
    RandomQuery,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::ActiveLearning,
        Strategy::Conventional,
        Strategy::FixedBaseline,
        Strategy::RandomQuery,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::ActiveLearning => "al",
            Strategy::Conventional => "conventional",
            Strategy::FixedBaseline => "baseline",
            Strategy::RandomQuery => "random",
        }
    }

    /// Whether the strategy polls occupants and drives a learned setpoint.
    pub fn queries_occupants(&self) -> bool {
        !matches!(self, Strategy::FixedBaseline)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "al" | "active" | "active_learning" => Ok(Strategy::ActiveLearning),
            "conventional" => Ok(Strategy::Conventional),
            "baseline" | "fixed" => Ok(Strategy::FixedBaseline),
            "random" => Ok(Strategy::RandomQuery),
            other => Err(SimError::Input(format!(
                "unknown strategy '{other}' (expected al, conventional, baseline or random)"
            ))),
        }
    }
}

/// Everything that happened in one control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub time_min: u64,
    pub occupied: bool,
    /// Setpoint served during the step.
    pub setpoint_c: f64,
    /// Zone temperature at the end of the step.
    pub zone_temp_c: f64,
    pub q_cool_w: f64,
    pub energy: EnergyBreakdown,
    /// Candidate queries offered this step.
    pub candidates: usize,
    /// Queries actually labelled this step.
    pub labelled: usize,
    /// Fraction of occupants comfortable at the achieved conditions;
    /// recorded only while occupied.
    pub acceptability: Option<f64>,
    /// Fraction of learned profiles whose comfort set contains the served
    /// setpoint; recorded while occupied once a model exists.
    pub model_acceptability: Option<f64>,
}

/// Holdout evaluation taken during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LearningPoint {
    pub step: u64,
    pub pool_size: usize,
    pub metrics: EvalMetrics,
}

/// Full outcome of one simulated run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub pool: Vec<LabeledInstance>,
    pub candidates_offered: usize,
    pub labels_queried: usize,
    pub learning_curve: Vec<LearningPoint>,
    pub model: Option<ComfortModel>,
}

impl RunResult {
    /// Labels queried at each step, suitable as the budget of a matched
    /// random-query run.
    pub fn label_counts(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.labelled).collect()
    }

    /// Setpoint served at each step, for cross-run convergence detection.
    pub fn setpoint_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.setpoint_c).collect()
    }

    pub fn effort(&self) -> Result<f64> {
        crate::active::labelling_effort(self.labels_queried, self.candidates_offered)
    }
}

/// Synthetic labelled holdout spanning the survey condition box and the
/// weather envelope. Labels are sampled from the oracle's preference
/// distribution.
pub fn build_holdout(
    population: &[OccupantParams],
    cfg: &SimConfig,
    seed: u64,
) -> Result<Vec<LabeledInstance>> {
    if population.is_empty() {
        return Err(SimError::EmptyPopulation);
    }
    let mut rng = rng::stream(seed, salt::HOLDOUT, 0, 0);
    let w = &cfg.weather;
    let d = &cfg.dataset;
    Ok((0..cfg.sim.holdout_size)
        .map(|i| {
            let occ = &population[rng.gen_range(0..population.len())];
            let outdoor = rng.gen_range(
                w.mean_temp_c - w.daily_amplitude_c..=w.mean_temp_c + w.daily_amplitude_c,
            );
            let env = EnvState {
                indoor_temp_c: rng.gen_range(d.indoor_lo_c..=d.indoor_hi_c),
                air_speed_ms: rng.gen_range(d.air_lo_ms..=d.air_hi_ms),
                outdoor_temp_c: outdoor,
                outdoor_rh_pct: w.rh_at(outdoor),
            };
            let label = sample_label(occ, &env, &mut rng);
            LabeledInstance {
                timestep: i as u64,
                occupant_id: occ.id,
                env,
                label,
            }
        })
        .collect())
}

/// The queries offered at one replay-mode step: up to `candidates_per_step`
/// distinct occupants who still have unoffered survey rows, each offering
/// the remaining row nearest to the current conditions. Returns the
/// candidates and, parallel to them, the survey row each one came from.
fn replay_candidates(
    cfg: &SimConfig,
    seed: u64,
    step: u64,
    env: &EnvState,
    survey: &[LabeledInstance],
    consumed: &[bool],
    remaining: &[usize],
) -> (Vec<Candidate>, Vec<Option<usize>>) {
    let ids: Vec<u32> = (0..remaining.len() as u32)
        .filter(|&id| remaining[id as usize] > 0)
        .collect();
    let k = cfg.polling.candidates_per_step.min(ids.len());
    if k == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut rng = rng::stream(seed, salt::CANDIDATES, step, 0);
    let mut batch = Vec::with_capacity(k);
    let mut rows = Vec::with_capacity(k);
    for occupant_id in choose_distinct(&ids, k, &mut rng) {
        let row = nearest_unconsumed_row(survey, consumed, occupant_id, env)
            .expect("occupants with no rows left were filtered out");
        let inst = &survey[row];
        batch.push(Candidate {
            occupant_id,
            env: inst.env,
            timestep: inst.timestep,
            known_label: Some(inst.label),
        });
        rows.push(Some(row));
    }
    (batch, rows)
}

/// Runs one simulation. `random_counts` supplies the per-step label budget
/// and is required by (and only by) the random-query strategy; take it from
/// [`RunResult::label_counts`] of a matched active-learning run.
pub fn run_simulation(
    cfg: &SimConfig,
    seed: u64,
    strategy: Strategy,
    random_counts: Option<&[usize]>,
) -> Result<RunResult> {
    cfg.validate()?;
    let total_steps = cfg.total_steps();
    if strategy == Strategy::RandomQuery {
        let counts = random_counts.ok_or_else(|| {
            SimError::Input(
                "the random strategy needs per-step label counts from a reference run".into(),
            )
        })?;
        if counts.len() != total_steps as usize {
            return Err(SimError::Shape(format!(
                "expected {total_steps} label counts, got {}",
                counts.len()
            )));
        }
    }

    let population = generate_population(cfg.sim.n_occupants, seed, &cfg.population)?;
    let weather = synth_weather(
        total_steps as usize,
        cfg.sim.control_step_minutes,
        seed,
        &cfg.weather,
    )?;
    let holdout = if strategy.queries_occupants() {
        build_holdout(&population, cfg, seed)?
    } else {
        Vec::new()
    };
    let survey = if strategy.queries_occupants() && cfg.polling.source == PollingSource::Replay {
        gen_dataset(&population, &cfg.dataset, &cfg.weather, seed)?
    } else {
        Vec::new()
    };
    let mut consumed = vec![false; survey.len()];
    let mut remaining = vec![0usize; population.len()];
    for r in &survey {
        remaining[r.occupant_id as usize] += 1;
    }

    let dt_s = cfg.step_seconds();
    let mut zone = ZoneState {
        temp_c: cfg.control.initial_zone_temp_c,
    };
    let mut pool: Vec<LabeledInstance> = Vec::new();
    let mut model: Option<ComfortModel> = None;
    let mut profiles: Option<Vec<ComfortProfile>> = None;
    let mut committee_builds: u64 = 0;
    let mut retrains: usize = 0;
    let mut decision: Option<f64> = None;
    let mut steps = Vec::with_capacity(total_steps as usize);
    let mut learning_curve = Vec::new();
    let mut candidates_offered = 0usize;
    let mut labels_queried = 0usize;

    for step in 0..total_steps {
        let time_min = step * cfg.sim.control_step_minutes;
        let occupied = cfg.schedule.is_occupied(time_min);
        let (outdoor_temp_c, outdoor_rh_pct) = weather.sample(time_min);

        let mut step_offered = 0usize;
        let mut step_labelled = 0usize;

        if occupied && strategy.queries_occupants() {
            let env_now = EnvState {
                indoor_temp_c: zone.temp_c,
                air_speed_ms: cfg.polling.air_speed_ms,
                outdoor_temp_c,
                outdoor_rh_pct,
            };
            let (batch, rows) = match cfg.polling.source {
                PollingSource::Replay => {
                    replay_candidates(cfg, seed, step, &env_now, &survey, &consumed, &remaining)
                }
                PollingSource::Oracle => {
                    let mut rng = rng::stream(seed, salt::CANDIDATES, step, 0);
                    let batch = nearest_instances_oracle(
                        &population,
                        &env_now,
                        step,
                        cfg.polling.candidates_per_step,
                        &mut rng,
                    )?;
                    let rows = vec![None; batch.len()];
                    (batch, rows)
                }
            };
            step_offered = batch.len();
            // An offered row is spent whether or not it gets collected, so
            // every strategy walks the survey in the same order and a
            // confidently skipped answer can never block the ones behind it.
            for &row in rows.iter().flatten() {
                consumed[row] = true;
                remaining[survey[row].occupant_id as usize] -= 1;
            }

            let ready = pool_ready(&pool, cfg.al.cold_start_min_labels);
            let selected: Vec<usize> = if batch.is_empty() {
                Vec::new()
            } else {
                match strategy {
                    Strategy::Conventional => (0..batch.len()).collect(),
                    Strategy::ActiveLearning => {
                        if ready {
                            // The committee is a fresh bootstrap draw every
                            // round, so a round over an unchanged pool can
                            // still split on a candidate the previous draw
                            // agreed on; a single confident draw never
                            // silences querying for good.
                            let committee = build_committee(
                                &pool,
                                population.len(),
                                &cfg.gbt,
                                cfg.al.committee_size,
                                seed,
                                committee_builds,
                            )?;
                            committee_builds += 1;
                            let scores = committee.score(&batch)?;
                            select_informative(&scores, &batch, cfg.al.selection_policy())?
                        } else {
                            (0..batch.len()).collect()
                        }
                    }
                    Strategy::RandomQuery => {
                        let budget =
                            random_counts.expect("checked above")[step as usize].min(batch.len());
                        let mut rng = rng::stream(seed, salt::RANDOM_PICK, step, 0);
                        let indices: Vec<u32> = (0..batch.len() as u32).collect();
                        let mut picked: Vec<usize> = choose_distinct(&indices, budget, &mut rng)
                            .into_iter()
                            .map(|i| i as usize)
                            .collect();
                        picked.sort_unstable();
                        picked
                    }
                    Strategy::FixedBaseline => unreachable!("baseline never queries"),
                }
            };

            for &j in &selected {
                let c = &batch[j];
                let inst = match rows[j] {
                    // A collected replay answer enters the pool as recorded.
                    Some(row) => survey[row],
                    None => {
                        let occ = &population[c.occupant_id as usize];
                        let mut rng = rng::stream(seed, salt::LABEL, step, j as u64);
                        LabeledInstance {
                            timestep: step,
                            occupant_id: c.occupant_id,
                            env: c.env,
                            label: sample_label(occ, &c.env, &mut rng),
                        }
                    }
                };
                pool.push(inst);
            }
            step_labelled = selected.len();
            candidates_offered += step_offered;
            labels_queried += step_labelled;

            // Training is deterministic, so an unchanged pool would reproduce
            // the previous model and decision exactly; skip the wasted work.
            if pool_ready(&pool, cfg.al.cold_start_min_labels)
                && (step_labelled > 0 || model.is_none())
            {
                let trained = ComfortModel::train(&pool, population.len(), &cfg.gbt)?;
                retrains += 1;
                if retrains == 1 || retrains.is_multiple_of(cfg.sim.learning_curve_every) {
                    learning_curve.push(LearningPoint {
                        step,
                        pool_size: pool.len(),
                        metrics: trained.evaluate(&holdout)?,
                    });
                }

                // Profiles are evaluated at reference conditions (the usual
                // fan setting, mean weather) rather than the conditions of
                // the minute: the profile describes the occupant, and the
                // true response has no outdoor dependence, so this keeps
                // weather noise from reaching the setpoint through spurious
                // learned sensitivity to the outdoor features.
                let mut fresh = Vec::with_capacity(population.len());
                for occ in &population {
                    fresh.push(generate_profile(
                        &trained,
                        occ.id,
                        &cfg.grid,
                        cfg.polling.air_speed_ms,
                        cfg.weather.mean_temp_c,
                        cfg.weather.rh_mean_pct,
                    )?);
                }
                decision = Some(aggregate_setpoint(&fresh, &cfg.grid, decision)?);
                profiles = Some(fresh);
                model = Some(trained);
            }
        }

        let setpoint_c = if !occupied {
            cfg.control.unoccupied_setpoint_c
        } else if strategy == Strategy::FixedBaseline {
            cfg.baseline.setpoint_c
        } else {
            decision.unwrap_or(cfg.control.initial_setpoint_c)
        };
        let q_internal_w = if occupied {
            cfg.zone.q_internal_occupied_w
        } else {
            cfg.zone.q_internal_unoccupied_w
        };
        let outcome = zone_step(
            zone,
            setpoint_c,
            outdoor_temp_c,
            q_internal_w,
            dt_s,
            &cfg.zone,
        );
        zone = outcome.state;

        let acceptability = if occupied {
            let air = if strategy == Strategy::FixedBaseline {
                cfg.baseline.air_speed_ms
            } else {
                cfg.polling.air_speed_ms
            };
            let env = EnvState {
                indoor_temp_c: zone.temp_c,
                air_speed_ms: air,
                outdoor_temp_c,
                outdoor_rh_pct,
            };
            Some(oracle_acceptability(&population, &env)?)
        } else {
            None
        };
        let model_accept = match (&profiles, occupied && cfg.grid.contains(setpoint_c)) {
            (Some(p), true) => Some(model_acceptability(p, &cfg.grid, setpoint_c)?),
            _ => None,
        };

        steps.push(StepRecord {
            step,
            time_min,
            occupied,
            setpoint_c,
            zone_temp_c: zone.temp_c,
            q_cool_w: outcome.q_cool_w,
            energy: outcome.energy,
            candidates: step_offered,
            labelled: step_labelled,
            acceptability,
            model_acceptability: model_accept,
        });
    }

    Ok(RunResult {
        strategy,
        seed,
        steps,
        pool,
        candidates_offered,
        labels_queried,
        learning_curve,
        model,
    })
}

/// Earliest step from which two setpoint series agree within `tolerance_c`
/// all the way to the end. The agreeing suffix must span at least
/// `window_steps` steps; returns `None` if the series re-diverge too late
/// for that.
pub fn detect_convergence(
    run_a: &[f64],
    run_b: &[f64],
    tolerance_c: f64,
    window_steps: usize,
) -> Result<Option<u64>> {
    if run_a.len() != run_b.len() {
        return Err(SimError::Input(format!(
            "setpoint series lengths differ: {} vs {}",
            run_a.len(),
            run_b.len()
        )));
    }
    let mut stable_from = 0usize;
    for (i, (a, b)) in run_a.iter().zip(run_b).enumerate() {
        if (a - b).abs() > tolerance_c {
            stable_from = i + 1;
        }
    }
    if run_a.len() - stable_from >= window_steps {
        Ok(Some(stable_from as u64))
    } else {
        Ok(None)
    }
}

/// Sampling of the weather actually used by a run, for export.
pub fn run_weather(cfg: &SimConfig, seed: u64) -> Result<WeatherSeries> {
    synth_weather(
        cfg.total_steps() as usize,
        cfg.sim.control_step_minutes,
        seed,
        &cfg.weather,
    )
}
