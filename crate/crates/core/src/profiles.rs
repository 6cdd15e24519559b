//! Per-occupant comfort profiles over a setpoint grid, and their
//! aggregation into one zone setpoint.
//!
//! A profile is the model's preference distribution evaluated along a fixed
//! temperature grid at the occupant's usual air speed. A grid point belongs
//! to an occupant's comfort set when no-change strictly beats both cooler
//! and warmer. The zone setpoint is the grid point the most comfort sets
//! agree on; ties go to the warmest such point because cooling is the only
//! conditioning mode.

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::gbt::ComfortModel;
use crate::occupant::{preference_probabilities, EnvState, OccupantParams};

/// Uniform candidate setpoint grid, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TempGrid {
    pub lo_c: f64,
    pub hi_c: f64,
    pub step_c: f64,
}

impl Default for TempGrid {
    fn default() -> Self {
        TempGrid {
            lo_c: 24.5,
            hi_c: 28.0,
            step_c: 0.1,
        }
    }
}

impl TempGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo_c.is_finite() && self.hi_c.is_finite() && self.step_c.is_finite()) {
            return Err(SimError::Config("grid bounds must be finite".into()));
        }
        if self.step_c <= 0.0 {
            return Err(SimError::Config(format!(
                "grid step must be positive, got {}",
                self.step_c
            )));
        }
        if self.hi_c < self.lo_c {
            return Err(SimError::Config(format!(
                "grid upper bound {} below lower bound {}",
                self.hi_c, self.lo_c
            )));
        }
        let span = (self.hi_c - self.lo_c) / self.step_c;
        if (span - span.round()).abs() > 1e-9 {
            return Err(SimError::Config(format!(
                "grid step {} does not divide the span {}..{}",
                self.step_c, self.lo_c, self.hi_c
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.hi_c - self.lo_c) / self.step_c).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn at(&self, index: usize) -> f64 {
        self.lo_c + self.step_c * index as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.at(i)).collect()
    }

    /// Central grid point, the setpoint of last resort when no comfort
    /// information exists at all.
    pub fn midpoint(&self) -> f64 {
        self.at(self.len() / 2)
    }

    /// Whether `temp` lies on the grid within rounding error.
    pub fn contains(&self, temp: f64) -> bool {
        if temp < self.lo_c - 1e-9 || temp > self.hi_c + 1e-9 {
            return false;
        }
        let steps = (temp - self.lo_c) / self.step_c;
        (steps - steps.round()).abs() < 1e-6
    }
}

/// One occupant's modelled preference distribution along the grid.
#[derive(Debug, Clone, Serialize)]
pub struct ComfortProfile {
    pub occupant_id: u32,
    /// `probs[i] = [p_cooler, p_nochange, p_warmer]` at grid point `i`.
    pub probs: Vec<[f64; 3]>,
    /// Strict comfort: no-change beats both alternatives.
    pub comfortable: Vec<bool>,
}

impl ComfortProfile {
    fn from_probs(occupant_id: u32, probs: Vec<[f64; 3]>) -> Self {
        let comfortable = probs.iter().map(|p| p[1] > p[0] && p[1] > p[2]).collect();
        ComfortProfile {
            occupant_id,
            probs,
            comfortable,
        }
    }

    pub fn comfort_set_size(&self) -> usize {
        self.comfortable.iter().filter(|&&c| c).count()
    }
}

/// Profile of one occupant under the trained model. The grid sweeps indoor
/// temperature; air speed and the outdoor state are held at the conditions
/// the profile is being generated for.
pub fn generate_profile(
    model: &ComfortModel,
    occupant_id: u32,
    grid: &TempGrid,
    air_speed_ms: f64,
    outdoor_temp_c: f64,
    outdoor_rh_pct: f64,
) -> Result<ComfortProfile> {
    grid.validate()?;
    let mut probs = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let env = EnvState {
            indoor_temp_c: grid.at(i),
            air_speed_ms,
            outdoor_temp_c,
            outdoor_rh_pct,
        };
        probs.push(model.predict_proba(occupant_id, &env)?);
    }
    Ok(ComfortProfile::from_probs(occupant_id, probs))
}

/// Ground-truth profile straight from the occupant's preference parameters.
pub fn oracle_profile(
    occ: &OccupantParams,
    grid: &TempGrid,
    air_speed_ms: f64,
    outdoor_temp_c: f64,
    outdoor_rh_pct: f64,
) -> Result<ComfortProfile> {
    grid.validate()?;
    let probs = (0..grid.len())
        .map(|i| {
            let env = EnvState {
                indoor_temp_c: grid.at(i),
                air_speed_ms,
                outdoor_temp_c,
                outdoor_rh_pct,
            };
            preference_probabilities(occ, &env)
        })
        .collect();
    Ok(ComfortProfile::from_probs(occ.id, probs))
}

/// Aggregates comfort profiles into one setpoint.
///
/// Counts, per grid point, how many occupants hold that point in their
/// comfort set; returns the point with the highest agreement, warmest on
/// ties. Occupants with empty comfort sets abstain. When nobody is
/// comfortable anywhere the previous aggregated decision is kept, or the
/// grid midpoint if there is none yet.
pub fn aggregate_setpoint(
    profiles: &[ComfortProfile],
    grid: &TempGrid,
    previous: Option<f64>,
) -> Result<f64> {
    grid.validate()?;
    if profiles.is_empty() {
        return Err(SimError::EmptyPopulation);
    }
    let n = grid.len();
    for p in profiles {
        if p.comfortable.len() != n {
            return Err(SimError::Shape(format!(
                "profile for occupant {} has {} grid points, expected {n}",
                p.occupant_id,
                p.comfortable.len()
            )));
        }
    }
    let mut counts = vec![0usize; n];
    for p in profiles {
        for (c, &ok) in counts.iter_mut().zip(&p.comfortable) {
            *c += usize::from(ok);
        }
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    if best == 0 {
        return Ok(previous.unwrap_or_else(|| grid.midpoint()));
    }
    // Ascending scan keeping >= so the warmest maximal point wins.
    let mut at = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if c >= counts[at] {
            at = i;
        }
    }
    Ok(grid.at(at))
}

/// Fraction of profiles whose comfort set contains the given grid point.
pub fn model_acceptability(
    profiles: &[ComfortProfile],
    grid: &TempGrid,
    setpoint_c: f64,
) -> Result<f64> {
    grid.validate()?;
    if profiles.is_empty() {
        return Err(SimError::EmptyPopulation);
    }
    let idx = (0..grid.len())
        .find(|&i| (grid.at(i) - setpoint_c).abs() < 1e-9)
        .ok_or_else(|| SimError::Input(format!("setpoint {setpoint_c} is not a grid point")))?;
    let happy = profiles
        .iter()
        .filter(|p| p.comfortable.get(idx).copied().unwrap_or(false))
        .count();
    Ok(happy as f64 / profiles.len() as f64)
}

/// Fraction of occupants whose ground-truth preference at `env` is
/// no-change.
pub fn oracle_acceptability(population: &[OccupantParams], env: &EnvState) -> Result<f64> {
    if population.is_empty() {
        return Err(SimError::EmptyPopulation);
    }
    let happy = population
        .iter()
        .filter(|occ| crate::occupant::oracle_comfortable(occ, env))
        .count();
    Ok(happy as f64 / population.len() as f64)
}

/// Writes profiles in long form: one row per occupant and grid point.
pub fn profiles_to_csv(profiles: &[ComfortProfile], grid: &TempGrid) -> String {
    let mut out = String::from("occupant_id,temp_c,p_cooler,p_nochange,p_warmer,comfortable\n");
    for p in profiles {
        for (i, probs) in p.probs.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.1},{:.6},{:.6},{:.6},{}\n",
                p.occupant_id,
                grid.at(i),
                probs[0],
                probs[1],
                probs[2],
                u8::from(p.comfortable[i])
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn profile_from_band(occ: u32, grid: &TempGrid, lo: f64, hi: f64) -> ComfortProfile {
        let comfortable: Vec<bool> = (0..grid.len())
            .map(|i| {
                let t = grid.at(i);
                t >= lo - 1e-9 && t <= hi + 1e-9
            })
            .collect();
        let probs = comfortable
            .iter()
            .map(|&c| if c { [0.1, 0.8, 0.1] } else { [0.8, 0.1, 0.1] })
            .collect();
        ComfortProfile {
            occupant_id: occ,
            probs,
            comfortable,
        }
    }

    #[test]
    fn default_grid_has_36_points_and_a_central_fallback() {
        let grid = TempGrid::default();
        grid.validate().unwrap();
        assert_eq!(grid.len(), 36);
        assert_eq!(grid.at(0), 24.5);
        assert!((grid.at(35) - 28.0).abs() < 1e-9);
        assert!((grid.midpoint() - 26.3).abs() < 1e-9);
        assert!(grid.contains(26.3));
        assert!(!grid.contains(24.0));
        assert!(!grid.contains(26.35));
    }

    #[test]
    fn bad_grids_are_rejected() {
        for bad in [
            TempGrid {
                lo_c: 24.5,
                hi_c: 28.0,
                step_c: 0.3,
            },
            TempGrid {
                lo_c: 24.5,
                hi_c: 28.0,
                step_c: 0.0,
            },
            TempGrid {
                lo_c: 28.0,
                hi_c: 24.5,
                step_c: 0.1,
            },
        ] {
            assert!(matches!(bad.validate(), Err(SimError::Config(_))));
        }
    }

    #[test]
    fn overlapping_bands_agree_on_the_shared_point() {
        let grid = TempGrid::default();
        let profiles = vec![
            profile_from_band(0, &grid, 26.0, 27.0),
            profile_from_band(1, &grid, 26.5, 27.5),
            profile_from_band(2, &grid, 27.0, 28.0),
        ];
        let setpoint = aggregate_setpoint(&profiles, &grid, None).unwrap();
        assert!((setpoint - 27.0).abs() < 1e-9, "got {setpoint}");
    }

    #[test]
    fn agreement_ties_resolve_to_the_warmest_point() {
        let grid = TempGrid::default();
        let profiles = vec![
            profile_from_band(0, &grid, 26.0, 27.0),
            profile_from_band(1, &grid, 26.0, 27.0),
        ];
        let setpoint = aggregate_setpoint(&profiles, &grid, None).unwrap();
        assert!((setpoint - 27.0).abs() < 1e-9, "got {setpoint}");
    }

    #[test]
    fn aggregation_ignores_profile_order() {
        let grid = TempGrid::default();
        let mut profiles = vec![
            profile_from_band(0, &grid, 25.0, 26.0),
            profile_from_band(1, &grid, 25.5, 26.5),
            profile_from_band(2, &grid, 26.4, 27.4),
            profile_from_band(3, &grid, 24.5, 25.1),
        ];
        let a = aggregate_setpoint(&profiles, &grid, None).unwrap();
        profiles.reverse();
        let b = aggregate_setpoint(&profiles, &grid, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_comfort_sets_abstain() {
        let grid = TempGrid::default();
        let profiles = vec![
            profile_from_band(0, &grid, 25.0, 25.4),
            profile_from_band(1, &grid, 30.0, 31.0), // empty set on this grid
        ];
        let setpoint = aggregate_setpoint(&profiles, &grid, None).unwrap();
        assert!((setpoint - 25.4).abs() < 1e-9);
    }

    #[test]
    fn no_agreement_keeps_the_previous_decision_or_the_midpoint() {
        let grid = TempGrid::default();
        let profiles = vec![profile_from_band(0, &grid, 30.0, 31.0)];
        let kept = aggregate_setpoint(&profiles, &grid, Some(27.9)).unwrap();
        assert_eq!(kept, 27.9);
        let fresh = aggregate_setpoint(&profiles, &grid, None).unwrap();
        assert!((fresh - 26.3).abs() < 1e-9);
        assert!(matches!(
            aggregate_setpoint(&[], &grid, None),
            Err(SimError::EmptyPopulation)
        ));
    }

    #[test]
    fn aggregation_matches_exhaustive_enumeration() {
        let grid = TempGrid::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..200 {
            let n_occ = 1 + rng.gen_range(0..6);
            let profiles: Vec<ComfortProfile> = (0..n_occ)
                .map(|id| {
                    let comfortable: Vec<bool> =
                        (0..grid.len()).map(|_| rng.gen_bool(0.3)).collect();
                    let probs = comfortable
                        .iter()
                        .map(|&c| if c { [0.0, 1.0, 0.0] } else { [1.0, 0.0, 0.0] })
                        .collect();
                    ComfortProfile {
                        occupant_id: id,
                        probs,
                        comfortable,
                    }
                })
                .collect();
            let previous = if rng.gen_bool(0.5) { Some(27.1) } else { None };
            let got = aggregate_setpoint(&profiles, &grid, previous).unwrap();

            // Independent brute force over every grid point.
            let mut best_count = 0usize;
            let mut best_temp = None;
            for i in 0..grid.len() {
                let count = profiles.iter().filter(|p| p.comfortable[i]).count();
                if count > 0 && count >= best_count {
                    best_count = count;
                    best_temp = Some(grid.at(i));
                }
            }
            let expected = best_temp.unwrap_or(previous.unwrap_or(26.3));
            assert_eq!(got, expected, "case {case}");
        }
    }

    #[test]
    fn exactly_uniform_probabilities_are_not_comfortable() {
        let third = 1.0 / 3.0;
        let p = ComfortProfile::from_probs(0, vec![[third, third, third]]);
        assert!(!p.comfortable[0]);
        assert_eq!(p.comfort_set_size(), 0);
    }

    #[test]
    fn oracle_profile_brackets_the_neutral_temperature() {
        let occ = OccupantParams {
            id: 3,
            neutral_temp_c: 26.5,
            slope_per_c: 1.5,
            band_halfwidth_c: 1.3,
            airspeed_gain_c_per_ms: 2.0,
        };
        let grid = TempGrid::default();
        // Reference air speed, so effective equals indoor temperature.
        let p = oracle_profile(&occ, &grid, 0.1, 29.0, 70.0).unwrap();
        let idx_neutral = 20; // 24.5 + 2.0
        assert!(p.comfortable[idx_neutral]);
        assert!(!p.comfortable[0], "24.5 is far below neutral");
        assert!(!p.comfortable[35], "28.0 is far above neutral");
        assert!(p.comfort_set_size() > 10);
        // Higher air speed shifts the comfortable band upward.
        let fast = oracle_profile(&occ, &grid, 1.1, 29.0, 70.0).unwrap();
        assert!(fast.comfortable[35]);
        assert!(!fast.comfortable[idx_neutral - 10]);
    }

    #[test]
    fn oracle_acceptability_counts_the_comfortable_fraction() {
        let make = |id, neutral| OccupantParams {
            id,
            neutral_temp_c: neutral,
            slope_per_c: 1.5,
            band_halfwidth_c: 1.3,
            airspeed_gain_c_per_ms: 2.0,
        };
        let pop = vec![make(0, 26.5), make(1, 26.7), make(2, 23.0)];
        let env = EnvState {
            indoor_temp_c: 26.6,
            air_speed_ms: 0.1,
            outdoor_temp_c: 29.0,
            outdoor_rh_pct: 70.0,
        };
        let frac = oracle_acceptability(&pop, &env).unwrap();
        assert!((frac - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            oracle_acceptability(&[], &env),
            Err(SimError::EmptyPopulation)
        ));
    }

    #[test]
    fn model_acceptability_is_the_containing_fraction() {
        let grid = TempGrid::default();
        let profiles = vec![
            profile_from_band(0, &grid, 25.0, 27.0),
            profile_from_band(1, &grid, 26.0, 28.0),
            profile_from_band(2, &grid, 26.5, 27.5),
        ];
        assert_eq!(model_acceptability(&profiles, &grid, 26.5).unwrap(), 1.0);
        assert!((model_acceptability(&profiles, &grid, 25.5).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            model_acceptability(&profiles, &grid, 28.0).unwrap(),
            1.0 / 3.0
        );
        assert!(matches!(
            model_acceptability(&profiles, &grid, 24.0),
            Err(SimError::Input(_))
        ));
        assert!(matches!(
            model_acceptability(&[], &grid, 26.5),
            Err(SimError::EmptyPopulation)
        ));
    }

    #[test]
    fn profile_csv_is_one_row_per_grid_point() {
        let grid = TempGrid::default();
        let profiles = vec![profile_from_band(4, &grid, 26.0, 27.0)];
        let csv = profiles_to_csv(&profiles, &grid);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 36);
        assert_eq!(
            lines[0],
            "occupant_id,temp_c,p_cooler,p_nochange,p_warmer,comfortable"
        );
        assert!(lines[1].starts_with("4,24.5,"));
        assert!(lines[1].ends_with(",0"));
        let at_26_5 = lines.iter().find(|l| l.starts_with("4,26.5,")).unwrap();
        assert!(at_26_5.ends_with(",1"));
    }
}
