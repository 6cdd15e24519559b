//! Single-zone thermal response and cooling energy accounting.
//!
//! The zone is one thermal mass behind one envelope conductance. Within a
//! control step all inputs are constant, so the temperature follows the
//! exact exponential response rather than an Euler approximation. The ideal
//! cooling controller solves that response for the heat extraction rate that
//! lands exactly on the setpoint, then clamps to the coil capacity.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Thermal and plant parameters of the conditioned zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoneParams {
    pub heat_capacity_j_per_k: f64,
    pub ua_w_per_k: f64,
    pub q_internal_occupied_w: f64,
    pub q_internal_unoccupied_w: f64,
    pub q_cool_max_w: f64,
    /// Flow-normalising rating for the fan and pump power laws.
    pub q_cool_nominal_w: f64,
    pub fan_power_nominal_w: f64,
    pub pump_power_nominal_w: f64,
    /// Coefficient of performance of the district-cooling heat exchange.
    pub cop: f64,
}

impl Default for ZoneParams {
    fn default() -> Self {
        ZoneParams {
            heat_capacity_j_per_k: 5.0e6,
            ua_w_per_k: 120.0,
            q_internal_occupied_w: 900.0,
            q_internal_unoccupied_w: 100.0,
            q_cool_max_w: 6000.0,
            q_cool_nominal_w: 4000.0,
            fan_power_nominal_w: 400.0,
            pump_power_nominal_w: 150.0,
            cop: 4.0,
        }
    }
}

impl ZoneParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("heat capacity", self.heat_capacity_j_per_k),
            ("envelope conductance", self.ua_w_per_k),
            ("coil capacity", self.q_cool_max_w),
            ("nominal coil rating", self.q_cool_nominal_w),
            ("cop", self.cop),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(SimError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let nonneg = [
            ("occupied internal gain", self.q_internal_occupied_w),
            ("unoccupied internal gain", self.q_internal_unoccupied_w),
            ("fan rating", self.fan_power_nominal_w),
            ("pump rating", self.pump_power_nominal_w),
        ];
        for (name, v) in nonneg {
            if v < 0.0 {
                return Err(SimError::Config(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Weekday office hours: occupied 08:00 to 18:00, Monday through Friday.
/// Day zero of the simulation is a Monday.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub start_hour: u64,
    pub end_hour: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            start_hour: 8,
            end_hour: 18,
        }
    }
}

impl Schedule {
    pub fn is_occupied(&self, time_min: u64) -> bool {
        let day = (time_min / 1440) % 7;
        if day >= 5 {
            return false;
        }
        let hour = (time_min % 1440) / 60;
        (self.start_hour..self.end_hour).contains(&hour)
    }
}

/// Instantaneous zone condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneState {
    pub temp_c: f64,
}

/// Site energy drawn over one control step, split by end use.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyBreakdown {
    pub district_kwh: f64,
    pub fan_kwh: f64,
    pub pump_kwh: f64,
}

impl EnergyBreakdown {
    pub fn total_kwh(&self) -> f64 {
        self.district_kwh + self.fan_kwh + self.pump_kwh
    }

    pub fn add(&mut self, other: &EnergyBreakdown) {
        self.district_kwh += other.district_kwh;
        self.fan_kwh += other.fan_kwh;
        self.pump_kwh += other.pump_kwh;
    }
}

/// Outcome of one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneStepResult {
    pub state: ZoneState,
    /// Heat extraction actually delivered, after the capacity clamp.
    pub q_cool_w: f64,
    pub energy: EnergyBreakdown,
}

/// Energy used to deliver `q_cool_w` of cooling for `dt_s` seconds.
pub fn cooling_energy(q_cool_w: f64, dt_s: f64, params: &ZoneParams) -> EnergyBreakdown {
    let dt_h = dt_s / 3600.0;
    let flow = q_cool_w / params.q_cool_nominal_w;
    EnergyBreakdown {
        district_kwh: q_cool_w * dt_h / 1000.0 / params.cop,
        fan_kwh: params.fan_power_nominal_w * flow.powi(3) * dt_h / 1000.0,
        pump_kwh: params.pump_power_nominal_w * flow * dt_h / 1000.0,
    }
}

/// Advances the zone one step of `dt_s` seconds toward `setpoint_c` under
/// constant outdoor temperature and internal gains.
///
/// The free response relaxes toward `T_out + q_net / UA` with the exact
/// factor `a = exp(-dt UA / C)`; the controller extracts whatever heat rate
/// puts the end-of-step temperature on the setpoint, never heating and never
/// exceeding the coil capacity.
pub fn zone_step(
    state: ZoneState,
    setpoint_c: f64,
    outdoor_temp_c: f64,
    q_internal_w: f64,
    dt_s: f64,
    params: &ZoneParams,
) -> ZoneStepResult {
    let tau = params.heat_capacity_j_per_k / params.ua_w_per_k;
    let a = (-dt_s / tau).exp();
    let t0 = state.temp_c;

    // Heat rate that lands exactly on the setpoint at the end of the step.
    let q_needed = params.ua_w_per_k * outdoor_temp_c + q_internal_w
        - params.ua_w_per_k * (setpoint_c - a * t0) / (1.0 - a);
    let q_cool = q_needed.clamp(0.0, params.q_cool_max_w);

    let t_ss = outdoor_temp_c + (q_internal_w - q_cool) / params.ua_w_per_k;
    let t1 = t_ss + (t0 - t_ss) * a;

    ZoneStepResult {
        state: ZoneState { temp_c: t1 },
        q_cool_w: q_cool,
        energy: cooling_energy(q_cool, dt_s, params),
    }
}
