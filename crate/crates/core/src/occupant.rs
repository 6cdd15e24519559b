//! Synthetic occupant population, the ground-truth preference oracle, and
//! dataset ingestion.
//!
//! Each occupant is an ordered-logit responder over an air-speed-corrected
//! effective temperature: raising the air speed shifts the whole preference
//! curve exactly like lowering the dry-bulb temperature by `airspeed_gain`
//! degrees per m/s. The oracle is what the learned comfort models are measured
//! against; it is never visible to them except through sampled labels.

use crate::error::{Result, SimError};
use crate::rng;
use crate::weather::WeatherConfig;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// Reference air speed at which no correction is applied. Matches the low end
/// of the survey protocol's fan range.
pub const REFERENCE_AIR_SPEED_MS: f64 = 0.1;

/// Scaling ranges for replay-mode nearest-instance distances. Indoor
/// temperature spans 24-28 degC and air speed 0.1-0.8 m/s in the survey data,
/// so one unit of scaled distance corresponds to the full survey range.
const REPLAY_TEMP_RANGE_C: f64 = 4.0;
const REPLAY_SPEED_RANGE_MS: f64 = 0.7;

/// Thermal preference vote. The discriminant order (cooler < no_change <
/// warmer) is the canonical class index order used everywhere: probabilities,
/// gradients and confusion matrices all index classes this way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PreferenceLabel {
    Cooler,
    NoChange,
    Warmer,
}

impl PreferenceLabel {
    pub const ALL: [PreferenceLabel; 3] = [
        PreferenceLabel::Cooler,
        PreferenceLabel::NoChange,
        PreferenceLabel::Warmer,
    ];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            PreferenceLabel::Cooler => 0,
            PreferenceLabel::NoChange => 1,
            PreferenceLabel::Warmer => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<PreferenceLabel> {
        Self::ALL.get(i).copied()
    }

    /// Parses the CSV token, case-insensitively.
    pub fn parse(s: &str) -> Result<PreferenceLabel> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cooler" => Ok(PreferenceLabel::Cooler),
            "no_change" => Ok(PreferenceLabel::NoChange),
            "warmer" => Ok(PreferenceLabel::Warmer),
            _ => Err(SimError::UnknownLabel(s.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PreferenceLabel::Cooler => "cooler",
            PreferenceLabel::NoChange => "no_change",
            PreferenceLabel::Warmer => "warmer",
        }
    }
}

impl fmt::Display for PreferenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Indoor/outdoor conditions attached to one labelled vote or candidate query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub indoor_temp_c: f64,
    pub air_speed_ms: f64,
    pub outdoor_temp_c: f64,
    pub outdoor_rh_pct: f64,
}

impl EnvState {
    /// Plausibility ranges for ingested data. Internally generated states
    /// always satisfy these by construction.
    pub fn validate(&self) -> Result<()> {
        if !(20.0..=35.0).contains(&self.indoor_temp_c) || !self.indoor_temp_c.is_finite() {
            return Err(SimError::Input(format!(
                "indoor_temp_c {} outside [20, 35]",
                self.indoor_temp_c
            )));
        }
        if !(0.0..=2.0).contains(&self.air_speed_ms) {
            return Err(SimError::Input(format!(
                "air_speed_ms {} outside [0, 2]",
                self.air_speed_ms
            )));
        }
        if !self.outdoor_temp_c.is_finite() {
            return Err(SimError::Input("outdoor_temp_c not finite".into()));
        }
        if !(0.0..=100.0).contains(&self.outdoor_rh_pct) {
            return Err(SimError::Input(format!(
                "outdoor_rh_pct {} outside [0, 100]",
                self.outdoor_rh_pct
            )));
        }
        Ok(())
    }
}

/// Ground-truth response parameters for one occupant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupantParams {
    pub id: u32,
    /// Effective temperature at which cooler/warmer urges balance.
    pub neutral_temp_c: f64,
    /// Logit steepness per degC; larger means more decisive votes.
    pub slope_per_c: f64,
    /// Half-width of the no-change band in degC.
    pub band_halfwidth_c: f64,
    /// Cooling-equivalent effect of air movement, degC per m/s.
    pub airspeed_gain_c_per_ms: f64,
}

/// One labelled survey instance, either sampled from the oracle or read from
/// a recorded dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub timestep: u64,
    pub occupant_id: u32,
    pub env: EnvState,
    pub label: PreferenceLabel,
}

/// Distribution settings for population generation. Draws are normal and then
/// clipped to the stated bounds, so zero-variance settings reproduce the means
/// exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub neutral_mean_c: f64,
    pub neutral_std_c: f64,
    pub neutral_lo_c: f64,
    pub neutral_hi_c: f64,
    pub slope_mean: f64,
    pub slope_std: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
    pub band_mean_c: f64,
    pub band_std_c: f64,
    pub band_lo_c: f64,
    pub band_hi_c: f64,
    pub airspeed_gain_mean: f64,
    pub airspeed_gain_std: f64,
    pub airspeed_gain_lo: f64,
    pub airspeed_gain_hi: f64,
}

impl Default for PopulationConfig {
    /// A heat-acclimatized population for a fan-assisted tropical office:
    /// warm-side tolerance extends past the surveyed temperature range, so
    /// discomfort inside the survey box is always on the cool side and the
    /// warmer/no-change boundary is the surface the models must learn.
    fn default() -> Self {
        PopulationConfig {
            neutral_mean_c: 29.0,
            neutral_std_c: 0.1,
            neutral_lo_c: 28.8,
            neutral_hi_c: 29.2,
            slope_mean: 10.0,
            slope_std: 0.5,
            slope_lo: 9.0,
            slope_hi: 11.0,
            band_mean_c: 5.5,
            band_std_c: 0.075,
            band_lo_c: 5.35,
            band_hi_c: 5.65,
            airspeed_gain_mean: 2.9,
            airspeed_gain_std: 0.1,
            airspeed_gain_lo: 2.65,
            airspeed_gain_hi: 3.15,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.neutral_mean_c,
            self.neutral_std_c,
            self.neutral_lo_c,
            self.neutral_hi_c,
            self.slope_mean,
            self.slope_std,
            self.slope_lo,
            self.slope_hi,
            self.band_mean_c,
            self.band_std_c,
            self.band_lo_c,
            self.band_hi_c,
            self.airspeed_gain_mean,
            self.airspeed_gain_std,
            self.airspeed_gain_lo,
            self.airspeed_gain_hi,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(SimError::Config(
                "population settings must be finite".into(),
            ));
        }
        for (name, lo, hi) in [
            ("neutral", self.neutral_lo_c, self.neutral_hi_c),
            ("slope", self.slope_lo, self.slope_hi),
            ("band", self.band_lo_c, self.band_hi_c),
            (
                "airspeed_gain",
                self.airspeed_gain_lo,
                self.airspeed_gain_hi,
            ),
        ] {
            if lo >= hi {
                return Err(SimError::Config(format!(
                    "{name} bounds {lo}..{hi} are inverted"
                )));
            }
        }
        if self.neutral_std_c < 0.0
            || self.slope_std < 0.0
            || self.band_std_c < 0.0
            || self.airspeed_gain_std < 0.0
        {
            return Err(SimError::Config(
                "population standard deviations must be nonnegative".into(),
            ));
        }
        if self.slope_lo <= 0.0 || self.band_lo_c <= 0.0 || self.airspeed_gain_lo < 0.0 {
            return Err(SimError::Config(
                "slope and band bounds must be positive, air-speed gain nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Coverage of the pre-collected preference survey: how many query slots each
/// occupant answered and the condition box the slots were randomised over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub instances_per_occupant: usize,
    pub indoor_lo_c: f64,
    pub indoor_hi_c: f64,
    pub air_lo_ms: f64,
    pub air_hi_ms: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            instances_per_occupant: 27,
            indoor_lo_c: 24.0,
            indoor_hi_c: 28.0,
            air_lo_ms: 0.1,
            air_hi_ms: 0.8,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances_per_occupant == 0 {
            return Err(SimError::Config(
                "the survey needs at least one instance per occupant".into(),
            ));
        }
        if !(20.0..=35.0).contains(&self.indoor_lo_c)
            || !(20.0..=35.0).contains(&self.indoor_hi_c)
            || self.indoor_lo_c >= self.indoor_hi_c
        {
            return Err(SimError::Config(format!(
                "survey indoor range {}..{} must be increasing within 20..35",
                self.indoor_lo_c, self.indoor_hi_c
            )));
        }
        if !(0.0..=2.0).contains(&self.air_lo_ms)
            || !(0.0..=2.0).contains(&self.air_hi_ms)
            || self.air_lo_ms >= self.air_hi_ms
        {
            return Err(SimError::Config(format!(
                "survey air-speed range {}..{} must be increasing within 0..2",
                self.air_lo_ms, self.air_hi_ms
            )));
        }
        Ok(())
    }
}

/// Draws `n` occupants with ids `0..n`. Deterministic for a fixed seed.
pub fn generate_population(
    n: usize,
    seed: u64,
    cfg: &PopulationConfig,
) -> Result<Vec<OccupantParams>> {
    if n == 0 {
        return Err(SimError::EmptyPopulation);
    }
    cfg.validate()?;
    let mut rng = rng::stream(seed, rng::salt::POPULATION, 0, 0);
    let dist =
        |mean: f64, std: f64| Normal::new(mean, std).expect("validated nonnegative std deviation");
    let neutral = dist(cfg.neutral_mean_c, cfg.neutral_std_c);
    let slope = dist(cfg.slope_mean, cfg.slope_std);
    let band = dist(cfg.band_mean_c, cfg.band_std_c);
    let gain = dist(cfg.airspeed_gain_mean, cfg.airspeed_gain_std);

    Ok((0..n)
        .map(|id| OccupantParams {
            id: id as u32,
            neutral_temp_c: neutral
                .sample(&mut rng)
                .clamp(cfg.neutral_lo_c, cfg.neutral_hi_c),
            slope_per_c: slope.sample(&mut rng).clamp(cfg.slope_lo, cfg.slope_hi),
            band_halfwidth_c: band.sample(&mut rng).clamp(cfg.band_lo_c, cfg.band_hi_c),
            airspeed_gain_c_per_ms: gain
                .sample(&mut rng)
                .clamp(cfg.airspeed_gain_lo, cfg.airspeed_gain_hi),
        })
        .collect())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Air-speed-corrected temperature the occupant actually responds to.
pub fn effective_temp(occ: &OccupantParams, env: &EnvState) -> f64 {
    env.indoor_temp_c - occ.airspeed_gain_c_per_ms * (env.air_speed_ms - REFERENCE_AIR_SPEED_MS)
}

/// Ground-truth `[p_cooler, p_no_change, p_warmer]` for one occupant in one
/// environment. Always a valid distribution; the middle class absorbs the
/// remainder of the two ordered logits.
pub fn preference_probabilities(occ: &OccupantParams, env: &EnvState) -> [f64; 3] {
    let dev = occ.slope_per_c * (effective_temp(occ, env) - occ.neutral_temp_c);
    let band = occ.slope_per_c * occ.band_halfwidth_c;
    let p_cooler = sigmoid(dev - band);
    let p_warmer = sigmoid(-dev - band);
    // Nonnegative analytically; the max guards the last bit of roundoff.
    let p_no_change = (1.0 - p_cooler - p_warmer).max(0.0);
    [p_cooler, p_no_change, p_warmer]
}

/// Samples one vote from the oracle distribution.
pub fn sample_label(occ: &OccupantParams, env: &EnvState, rng: &mut impl Rng) -> PreferenceLabel {
    let p = preference_probabilities(occ, env);
    let u: f64 = rng.gen();
    if u < p[0] {
        PreferenceLabel::Cooler
    } else if u < p[0] + p[1] {
        PreferenceLabel::NoChange
    } else {
        PreferenceLabel::Warmer
    }
}

/// True iff the occupant's most likely ground-truth vote at `env` is
/// no-change. Strict comparison: ties do not count as comfortable.
pub fn oracle_comfortable(occ: &OccupantParams, env: &EnvState) -> bool {
    let p = preference_probabilities(occ, env);
    p[1] > p[0] && p[1] > p[2]
}

/// Synthesises the pre-collected preference survey replayed by the control
/// loop. Each occupant answers one query per collection slot; indoor
/// temperature and personal fan speed are randomised per answer across the
/// survey box, outdoor conditions are drawn from the weather envelope, and
/// each vote is sampled from the oracle once, at collection time. Rows are
/// ordered slot-major, occupants in id order within a slot.
pub fn gen_dataset(
    population: &[OccupantParams],
    survey: &DatasetConfig,
    weather: &WeatherConfig,
    seed: u64,
) -> Result<Vec<LabeledInstance>> {
    if population.is_empty() {
        return Err(SimError::EmptyPopulation);
    }
    survey.validate()?;
    weather.validate()?;
    let mut rng = rng::stream(seed, rng::salt::DATA_GEN, 0, 0);
    let mut out = Vec::with_capacity(population.len() * survey.instances_per_occupant);
    for slot in 0..survey.instances_per_occupant as u64 {
        for occ in population {
            let outdoor = rng.gen_range(
                weather.mean_temp_c - weather.daily_amplitude_c
                    ..=weather.mean_temp_c + weather.daily_amplitude_c,
            );
            let env = EnvState {
                indoor_temp_c: rng.gen_range(survey.indoor_lo_c..=survey.indoor_hi_c),
                air_speed_ms: rng.gen_range(survey.air_lo_ms..=survey.air_hi_ms),
                outdoor_temp_c: outdoor,
                outdoor_rh_pct: weather.rh_at(outdoor),
            };
            let label = sample_label(occ, &env, &mut rng);
            out.push(LabeledInstance {
                timestep: slot,
                occupant_id: occ.id,
                env,
                label,
            });
        }
    }
    Ok(out)
}

const DATASET_HEADER: [&str; 7] = [
    "timestep",
    "occupant_id",
    "indoor_temp_c",
    "air_speed_ms",
    "outdoor_temp_c",
    "outdoor_rh_pct",
    "label",
];

/// Reads a labelled dataset. The header must match the canonical schema and
/// every row must parse; errors name the offending row and column.
pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<Vec<LabeledInstance>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => SimError::io(path, std::io::Error::other(e)),
            _ => SimError::Csv(e),
        })?;

    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(SimError::DatasetFormat {
            row: 1,
            column: headers.iter().next().unwrap_or("").to_string(),
            message: format!("header must be {}", DATASET_HEADER.join(",")),
        });
    }

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // header occupies row 1
        let record = record?;
        if record.len() != DATASET_HEADER.len() {
            return Err(SimError::DatasetFormat {
                row,
                column: String::new(),
                message: format!(
                    "expected {} fields, found {}",
                    DATASET_HEADER.len(),
                    record.len()
                ),
            });
        }
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let parse_f64 = |idx: usize| -> Result<f64> {
            field(idx)
                .parse::<f64>()
                .map_err(|e| SimError::DatasetFormat {
                    row,
                    column: DATASET_HEADER[idx].to_string(),
                    message: e.to_string(),
                })
        };
        let timestep = field(0)
            .parse::<u64>()
            .map_err(|e| SimError::DatasetFormat {
                row,
                column: "timestep".into(),
                message: e.to_string(),
            })?;
        let occupant_id = field(1)
            .parse::<u32>()
            .map_err(|e| SimError::DatasetFormat {
                row,
                column: "occupant_id".into(),
                message: e.to_string(),
            })?;
        let env = EnvState {
            indoor_temp_c: parse_f64(2)?,
            air_speed_ms: parse_f64(3)?,
            outdoor_temp_c: parse_f64(4)?,
            outdoor_rh_pct: parse_f64(5)?,
        };
        env.validate().map_err(|e| SimError::DatasetFormat {
            row,
            column: "env".into(),
            message: e.to_string(),
        })?;
        let label = PreferenceLabel::parse(field(6))?;
        out.push(LabeledInstance {
            timestep,
            occupant_id,
            env,
            label,
        });
    }
    Ok(out)
}

/// Writes a dataset in the canonical schema. Floats use the shortest
/// round-tripping representation, so load(write(x)) == x.
pub fn write_dataset_csv(path: impl AsRef<Path>, rows: &[LabeledInstance]) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => SimError::io(path, std::io::Error::other(e)),
        _ => SimError::Csv(e),
    })?;
    writer.write_record(DATASET_HEADER)?;
    for r in rows {
        writer.write_record(&[
            r.timestep.to_string(),
            r.occupant_id.to_string(),
            r.env.indoor_temp_c.to_string(),
            r.env.air_speed_ms.to_string(),
            r.env.outdoor_temp_c.to_string(),
            r.env.outdoor_rh_pct.to_string(),
            r.label.as_str().to_string(),
        ])?;
    }
    writer.flush().map_err(|e| SimError::io(path, e))?;
    Ok(())
}

/// An unlabelled query candidate surfaced to the active learner.
/// `known_label` carries the recorded vote in replay mode; in oracle mode the
/// label is drawn only if the candidate is selected for querying.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub occupant_id: u32,
    pub env: EnvState,
    pub timestep: u64,
    pub known_label: Option<PreferenceLabel>,
}

/// Uniformly picks `k` distinct values from `ids` (order of `ids` defines the
/// deterministic draw; callers pass sorted ids).
pub fn choose_distinct(ids: &[u32], k: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut pool: Vec<u32> = ids.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let j = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(j));
    }
    out
}

/// Oracle-mode candidate sampling: `k` distinct occupants, each carrying the
/// current environment.
pub fn nearest_instances_oracle(
    population: &[OccupantParams],
    env: &EnvState,
    timestep: u64,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Candidate>> {
    if k == 0 || k > population.len() {
        return Err(SimError::Pool(format!(
            "requested {k} candidates from a population of {}",
            population.len()
        )));
    }
    let ids: Vec<u32> = population.iter().map(|o| o.id).collect();
    Ok(choose_distinct(&ids, k, rng)
        .into_iter()
        .map(|occupant_id| Candidate {
            occupant_id,
            env: *env,
            timestep,
            known_label: None,
        })
        .collect())
}

/// Scaled distance between a query environment and a pool instance over the
/// two controllable dimensions.
fn replay_distance(env: &EnvState, inst: &LabeledInstance) -> f64 {
    let dt = (env.indoor_temp_c - inst.env.indoor_temp_c) / REPLAY_TEMP_RANGE_C;
    let dv = (env.air_speed_ms - inst.env.air_speed_ms) / REPLAY_SPEED_RANGE_MS;
    (dt * dt + dv * dv).sqrt()
}

/// Replay-mode candidate sampling: `k` distinct occupants drawn from those
/// present in the pool; for each, the recorded instance nearest to the current
/// conditions (ties broken by lowest timestep).
pub fn nearest_instances_replay(
    pool: &[LabeledInstance],
    env: &EnvState,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Candidate>> {
    let mut ids: Vec<u32> = pool.iter().map(|r| r.occupant_id).collect();
    ids.sort_unstable();
    ids.dedup();
    if k == 0 || k > ids.len() {
        return Err(SimError::Pool(format!(
            "requested {k} candidates but the pool covers {} occupants",
            ids.len()
        )));
    }
    let chosen = choose_distinct(&ids, k, rng);
    let mut out = Vec::with_capacity(k);
    for occupant_id in chosen {
        let best = pool
            .iter()
            .filter(|r| r.occupant_id == occupant_id)
            .min_by(|a, b| {
                replay_distance(env, a)
                    .total_cmp(&replay_distance(env, b))
                    .then(a.timestep.cmp(&b.timestep))
            })
            .expect("occupant id came from the pool");
        out.push(Candidate {
            occupant_id,
            env: best.env,
            timestep: best.timestep,
            known_label: Some(best.label),
        });
    }
    Ok(out)
}

/// Index of the unconsumed pool row for `occupant_id` nearest to the current
/// conditions, with the same metric and tie-breaking as replay sampling.
/// `None` when every row of that occupant has been consumed.
pub fn nearest_unconsumed_row(
    pool: &[LabeledInstance],
    consumed: &[bool],
    occupant_id: u32,
    env: &EnvState,
) -> Option<usize> {
    (0..pool.len())
        .filter(|&i| !consumed[i] && pool[i].occupant_id == occupant_id)
        .min_by(|&a, &b| {
            replay_distance(env, &pool[a])
                .total_cmp(&replay_distance(env, &pool[b]))
                .then(pool[a].timestep.cmp(&pool[b].timestep))
        })
}
