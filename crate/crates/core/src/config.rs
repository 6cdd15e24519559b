//! Simulation configuration, loaded from TOML. Every field has a default,
//! so a config file only states what it changes; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::active::SelectionPolicy;
use crate::error::{Result, SimError};
use crate::gbt::GbtParams;
use crate::occupant::{DatasetConfig, PopulationConfig};
use crate::profiles::TempGrid;
use crate::weather::WeatherConfig;
use crate::zone::{Schedule, ZoneParams};

/// Horizon, cadence and evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub horizon_days: u64,
    pub control_step_minutes: u64,
    pub n_occupants: usize,
    /// A setpoint trace counts as converged only when it stays within the
    /// tolerance of its final value for at least this long.
    pub convergence_window_days: u64,
    pub convergence_tolerance_c: f64,
    /// Size of the synthetic labelled holdout used for learning curves.
    pub holdout_size: usize,
    /// Evaluate the holdout every this many retrains.
    pub learning_curve_every: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            horizon_days: 56,
            control_step_minutes: 30,
            n_occupants: 58,
            convergence_window_days: 7,
            convergence_tolerance_c: 0.051,
            holdout_size: 2000,
            learning_curve_every: 10,
        }
    }
}

/// Initial and fallback setpoints of the control loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    /// Served while no aggregated comfort decision exists yet.
    pub initial_setpoint_c: f64,
    pub initial_zone_temp_c: f64,
    /// Setback outside office hours, shared by every strategy.
    pub unoccupied_setpoint_c: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            initial_setpoint_c: 24.0,
            initial_zone_temp_c: 24.0,
            unoccupied_setpoint_c: 30.0,
        }
    }
}

/// Where a queried candidate's label comes from. `Replay` serves each polled
/// occupant's recorded survey instance nearest to the current conditions and
/// reveals its vote, consuming the instance; `Oracle` samples a fresh vote at
/// the current conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PollingSource {
    Replay,
    Oracle,
}

/// How occupants are polled for preference feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PollingSection {
    /// Distinct occupants polled per occupied step.
    pub candidates_per_step: usize,
    /// The occupants' usual fan setting: comfort profiles are evaluated at
    /// this air speed and replay queries are matched against it.
    pub air_speed_ms: f64,
    pub source: PollingSource,
}

impl Default for PollingSection {
    fn default() -> Self {
        PollingSection {
            candidates_per_step: 6,
            air_speed_ms: 0.7,
            source: PollingSource::Replay,
        }
    }
}

/// Which candidates the query selector keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Threshold,
    TopK,
}

/// Query-by-committee settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveSection {
    pub committee_size: usize,
    pub policy: PolicyKind,
    /// Vote-entropy threshold; a candidate is queried only above it.
    pub theta: f64,
    /// Batch size under the top-k policy.
    pub top_k: usize,
    /// Labels collected unconditionally before the committee takes over.
    pub cold_start_min_labels: usize,
}

impl Default for ActiveSection {
    fn default() -> Self {
        ActiveSection {
            committee_size: 5,
            policy: PolicyKind::Threshold,
            theta: 0.2,
            top_k: 2,
            cold_start_min_labels: 12,
        }
    }
}

impl ActiveSection {
    pub fn selection_policy(&self) -> SelectionPolicy {
        match self.policy {
            PolicyKind::Threshold => SelectionPolicy::Threshold { theta: self.theta },
            PolicyKind::TopK => SelectionPolicy::TopK { k: self.top_k },
        }
    }
}

/// The fixed-setpoint comparison case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub setpoint_c: f64,
    /// Air movement assumed when scoring baseline comfort.
    pub air_speed_ms: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            setpoint_c: 27.0,
            air_speed_ms: 0.94,
        }
    }
}

/// Complete simulation configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub sim: SimSection,
    pub control: ControlSection,
    pub polling: PollingSection,
    pub population: PopulationConfig,
    pub dataset: DatasetConfig,
    pub grid: TempGrid,
    pub al: ActiveSection,
    pub gbt: GbtParams,
    pub zone: ZoneParams,
    pub weather: WeatherConfig,
    pub schedule: Schedule,
    pub baseline: BaselineSection,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| SimError::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        self.dataset.validate()?;
        self.grid.validate()?;
        self.gbt.validate()?;
        self.zone.validate()?;
        self.weather.validate()?;

        let s = &self.sim;
        if s.horizon_days == 0 {
            return Err(SimError::Config("horizon must be at least one day".into()));
        }
        if s.control_step_minutes == 0 || 1440 % s.control_step_minutes != 0 {
            return Err(SimError::Config(format!(
                "control step must divide a day, got {} minutes",
                s.control_step_minutes
            )));
        }
        if s.n_occupants == 0 {
            return Err(SimError::EmptyPopulation);
        }
        if s.convergence_window_days >= s.horizon_days {
            return Err(SimError::Config(format!(
                "convergence window of {} days cannot fit a {}-day horizon",
                s.convergence_window_days, s.horizon_days
            )));
        }
        if s.convergence_tolerance_c <= 0.0 {
            return Err(SimError::Config(
                "convergence tolerance must be positive".into(),
            ));
        }
        if s.holdout_size == 0 || s.learning_curve_every == 0 {
            return Err(SimError::Config(
                "holdout size and learning-curve cadence must be positive".into(),
            ));
        }

        for (name, v) in [
            ("initial setpoint", self.control.initial_setpoint_c),
            ("initial zone temperature", self.control.initial_zone_temp_c),
            ("unoccupied setpoint", self.control.unoccupied_setpoint_c),
            ("baseline setpoint", self.baseline.setpoint_c),
        ] {
            if !(20.0..=35.0).contains(&v) {
                return Err(SimError::Config(format!(
                    "{name} {v} is outside the modelled 20..35 range"
                )));
            }
        }
        if self.grid.lo_c < 20.0 || self.grid.hi_c > 35.0 {
            return Err(SimError::Config(
                "setpoint grid must stay within the modelled 20..35 range".into(),
            ));
        }

        let p = &self.polling;
        if p.candidates_per_step == 0 || p.candidates_per_step > s.n_occupants {
            return Err(SimError::Config(format!(
                "candidates_per_step {} must be between 1 and the population size {}",
                p.candidates_per_step, s.n_occupants
            )));
        }
        for (name, v) in [
            ("profile air speed", p.air_speed_ms),
            ("baseline air speed", self.baseline.air_speed_ms),
        ] {
            if !(0.0..=2.0).contains(&v) {
                return Err(SimError::Config(format!(
                    "{name} {v} is outside the modelled 0..2 m/s range"
                )));
            }
        }

        let al = &self.al;
        if al.committee_size < 2 {
            return Err(SimError::Config(format!(
                "a committee needs at least 2 members, got {}",
                al.committee_size
            )));
        }
        if al.theta < 0.0 {
            return Err(SimError::Config(format!(
                "entropy threshold must be nonnegative, got {}",
                al.theta
            )));
        }
        if matches!(al.policy, PolicyKind::TopK)
            && (al.top_k == 0 || al.top_k > p.candidates_per_step)
        {
            return Err(SimError::Config(format!(
                "top_k {} must be between 1 and candidates_per_step {}",
                al.top_k, p.candidates_per_step
            )));
        }
        if al.cold_start_min_labels == 0 {
            return Err(SimError::Config(
                "cold start needs at least one label".into(),
            ));
        }
        if self.schedule.start_hour >= self.schedule.end_hour || self.schedule.end_hour > 24 {
            return Err(SimError::Config(format!(
                "office hours {}..{} are invalid",
                self.schedule.start_hour, self.schedule.end_hour
            )));
        }
        Ok(())
    }

    pub fn steps_per_day(&self) -> u64 {
        1440 / self.sim.control_step_minutes
    }

    pub fn total_steps(&self) -> u64 {
        self.sim.horizon_days * self.steps_per_day()
    }

    pub fn step_seconds(&self) -> f64 {
        self.sim.control_step_minutes as f64 * 60.0
    }
}
