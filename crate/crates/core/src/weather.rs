//! Synthetic tropical weather: a diurnal sine plus AR(1) noise for outdoor
//! temperature, with relative humidity moving against temperature.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::{self, salt};

/// Weather generator parameters. Defaults describe a hot, humid climate
/// with a mild daily swing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherConfig {
    pub mean_temp_c: f64,
    pub daily_amplitude_c: f64,
    pub rh_mean_pct: f64,
    /// Humidity drop per degree of outdoor temperature above the mean.
    pub rh_slope_pct_per_c: f64,
    pub ar_phi: f64,
    pub ar_sigma_c: f64,
}

impl Default for WeatherConfig {
    fn default() -> Self {
        WeatherConfig {
            mean_temp_c: 28.0,
            daily_amplitude_c: 1.0,
            rh_mean_pct: 75.0,
            rh_slope_pct_per_c: 1.5,
            ar_phi: 0.8,
            ar_sigma_c: 0.5,
        }
    }
}

impl WeatherConfig {
    /// Humidity paired with an outdoor temperature by the linear
    /// anti-correlation rule, clamped to a plausible tropical band.
    pub fn rh_at(&self, outdoor_temp_c: f64) -> f64 {
        (self.rh_mean_pct - self.rh_slope_pct_per_c * (outdoor_temp_c - self.mean_temp_c))
            .clamp(40.0, 100.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ar_phi) {
            return Err(SimError::Config(format!(
                "AR coefficient must be in [0, 1), got {}",
                self.ar_phi
            )));
        }
        if self.ar_sigma_c < 0.0 || self.daily_amplitude_c < 0.0 {
            return Err(SimError::Config(
                "noise and amplitude must be nonnegative".into(),
            ));
        }
        if !(0.0..=100.0).contains(&self.rh_mean_pct) {
            return Err(SimError::Config(format!(
                "mean humidity must be a percentage, got {}",
                self.rh_mean_pct
            )));
        }
        Ok(())
    }
}

/// One weather sample on the simulation time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherPoint {
    pub time_min: u64,
    pub outdoor_temp_c: f64,
    pub outdoor_rh_pct: f64,
}

/// Regularly spaced weather trace.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub points: Vec<WeatherPoint>,
}

/// Hour of day at which the diurnal sine crosses its mean going up; the
/// daily peak lands six hours later.
const SINE_ZERO_HOUR: f64 = 9.0;

/// Generates `n_steps + 1` samples spaced `step_min` apart, starting at
/// minute zero. The AR(1) disturbance starts at zero and evolves once per
/// sample.
pub fn synth_weather(
    n_steps: usize,
    step_min: u64,
    seed: u64,
    cfg: &WeatherConfig,
) -> Result<WeatherSeries> {
    cfg.validate()?;
    if step_min == 0 {
        return Err(SimError::Config("weather step must be positive".into()));
    }
    let mut rng = rng::stream(seed, salt::WEATHER, step_min, 0);
    let noise = Normal::new(0.0, cfg.ar_sigma_c)
        .map_err(|e| SimError::Config(format!("bad weather noise width: {e}")))?;
    let mut ar = 0.0f64;
    let mut points = Vec::with_capacity(n_steps + 1);
    for i in 0..=n_steps {
        let time_min = i as u64 * step_min;
        let hour = time_min as f64 / 60.0;
        let sine = (2.0 * std::f64::consts::PI * (hour - SINE_ZERO_HOUR) / 24.0).sin();
        let temp = cfg.mean_temp_c + cfg.daily_amplitude_c * sine + ar;
        let rh = cfg.rh_at(temp);
        points.push(WeatherPoint {
            time_min,
            outdoor_temp_c: temp,
            outdoor_rh_pct: rh,
        });
        ar = cfg.ar_phi * ar + noise.sample(&mut rng);
    }
    Ok(WeatherSeries { points })
}

impl WeatherSeries {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(SimError::WeatherFormat("empty weather series".into()));
        }
        for w in self.points.windows(2) {
            if w[1].time_min <= w[0].time_min {
                return Err(SimError::WeatherFormat(format!(
                    "times must increase strictly: {} then {}",
                    w[0].time_min, w[1].time_min
                )));
            }
        }
        Ok(())
    }

    /// Linear interpolation at `time_min`, clamped to the series ends.
    pub fn sample(&self, time_min: u64) -> (f64, f64) {
        let pts = &self.points;
        if time_min <= pts[0].time_min {
            return (pts[0].outdoor_temp_c, pts[0].outdoor_rh_pct);
        }
        let last = pts[pts.len() - 1];
        if time_min >= last.time_min {
            return (last.outdoor_temp_c, last.outdoor_rh_pct);
        }
        let at = pts.partition_point(|p| p.time_min <= time_min);
        let (a, b) = (pts[at - 1], pts[at]);
        let f = (time_min - a.time_min) as f64 / (b.time_min - a.time_min) as f64;
        (
            a.outdoor_temp_c + f * (b.outdoor_temp_c - a.outdoor_temp_c),
            a.outdoor_rh_pct + f * (b.outdoor_rh_pct - a.outdoor_rh_pct),
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(SimError::Csv)?;
        w.write_record(["time_min", "outdoor_temp_c", "outdoor_rh_pct"])?;
        for p in &self.points {
            w.write_record([
                p.time_min.to_string(),
                format!("{:.4}", p.outdoor_temp_c),
                format!("{:.4}", p.outdoor_rh_pct),
            ])?;
        }
        w.flush().map_err(|e| SimError::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(SimError::Csv)?;
        let headers = r.headers()?.clone();
        let expected = ["time_min", "outdoor_temp_c", "outdoor_rh_pct"];
        if headers.iter().ne(expected) {
            return Err(SimError::WeatherFormat(format!(
                "expected header {expected:?}, got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut points = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let row = i + 2;
            let field = |j: usize, name: &str| -> Result<f64> {
                record
                    .get(j)
                    .ok_or_else(|| SimError::WeatherFormat(format!("row {row}: missing {name}")))?
                    .parse::<f64>()
                    .map_err(|e| SimError::WeatherFormat(format!("row {row}, {name}: {e}")))
            };
            points.push(WeatherPoint {
                time_min: field(0, "time_min")? as u64,
                outdoor_temp_c: field(1, "outdoor_temp_c")?,
                outdoor_rh_pct: field(2, "outdoor_rh_pct")?,
            });
        }
        let series = WeatherSeries { points };
        series.validate()?;
        Ok(series)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless() -> WeatherConfig {
        WeatherConfig {
            ar_sigma_c: 0.0,
            ..WeatherConfig::default()
        }
    }

    #[test]
    fn noiseless_sine_hits_mean_at_nine_and_peak_at_fifteen() {
        let series = synth_weather(48, 30, 1, &noiseless()).unwrap();
        let (at_9h, _) = series.sample(9 * 60);
        assert!((at_9h - 28.0).abs() < 1e-12);
        let (at_15h, _) = series.sample(15 * 60);
        assert!((at_15h - 29.0).abs() < 1e-12);
        let (at_3h, _) = series.sample(3 * 60);
        assert!((at_3h - 27.0).abs() < 1e-12);
    }

    #[test]
    fn humidity_moves_against_temperature_within_bounds() {
        let series = synth_weather(48, 30, 2, &noiseless()).unwrap();
        let (t_peak, rh_peak) = series.sample(15 * 60);
        let (t_low, rh_low) = series.sample(3 * 60);
        assert!(t_peak > t_low);
        assert!(rh_peak < rh_low);
        assert!((rh_peak - (75.0 - 1.5 * 1.0)).abs() < 1e-12);
        for p in &series.points {
            assert!((40.0..=100.0).contains(&p.outdoor_rh_pct));
        }
    }

    #[test]
    fn ar_noise_matches_its_stationary_spread() {
        let cfg = WeatherConfig::default();
        let n = 20_000;
        let series = synth_weather(n, 30, 3, &cfg).unwrap();
        // Remove the deterministic part, leaving the AR(1) residual.
        let clean = synth_weather(n, 30, 3, &noiseless()).unwrap();
        let resid: Vec<f64> = series
            .points
            .iter()
            .zip(&clean.points)
            .map(|(a, b)| a.outdoor_temp_c - b.outdoor_temp_c)
            .collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / resid.len() as f64;
        let expected = cfg.ar_sigma_c / (1.0 - cfg.ar_phi * cfg.ar_phi).sqrt();
        let ratio = var.sqrt() / expected;
        assert!(
            (0.7..1.3).contains(&ratio),
            "residual spread {} vs stationary {expected}",
            var.sqrt()
        );
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let cfg = WeatherConfig::default();
        let a = synth_weather(100, 30, 9, &cfg).unwrap();
        let b = synth_weather(100, 30, 9, &cfg).unwrap();
        assert_eq!(a, b);
        let c = synth_weather(100, 30, 10, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_interpolates_and_clamps() {
        let series = WeatherSeries {
            points: vec![
                WeatherPoint {
                    time_min: 0,
                    outdoor_temp_c: 24.0,
                    outdoor_rh_pct: 80.0,
                },
                WeatherPoint {
                    time_min: 60,
                    outdoor_temp_c: 26.0,
                    outdoor_rh_pct: 70.0,
                },
            ],
        };
        series.validate().unwrap();
        assert_eq!(series.sample(30), (25.0, 75.0));
        assert_eq!(series.sample(0), (24.0, 80.0));
        assert_eq!(series.sample(600), (26.0, 70.0));
    }

    #[test]
    fn nonincreasing_times_are_rejected() {
        let series = WeatherSeries {
            points: vec![
                WeatherPoint {
                    time_min: 30,
                    outdoor_temp_c: 24.0,
                    outdoor_rh_pct: 80.0,
                },
                WeatherPoint {
                    time_min: 30,
                    outdoor_temp_c: 26.0,
                    outdoor_rh_pct: 70.0,
                },
            ],
        };
        assert!(matches!(series.validate(), Err(SimError::WeatherFormat(_))));
    }

    #[test]
    fn csv_round_trip_preserves_the_trace_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weather.csv");
        let series = synth_weather(20, 30, 4, &WeatherConfig::default()).unwrap();
        series.write_csv(&path).unwrap();
        let back = WeatherSeries::read_csv(&path).unwrap();
        assert_eq!(back.points.len(), series.points.len());
        for (a, b) in series.points.iter().zip(&back.points) {
            assert_eq!(a.time_min, b.time_min);
            assert!((a.outdoor_temp_c - b.outdoor_temp_c).abs() < 1e-3);
        }
    }
}
