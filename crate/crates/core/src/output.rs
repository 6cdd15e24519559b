//! Result artifacts: step, summary and learning-curve CSVs plus small
//! self-contained SVG charts assembled from format strings.
//!
//! Floats in CSVs use Rust's shortest round-trip formatting, so re-parsing a
//! file recovers the exact values and repeated runs produce byte-identical
//! bytes. Charts are plain SVG 1.1 with no external references.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::control::{RunResult, Strategy};
use crate::error::{Result, SimError};
use crate::metrics::{weekly_energy, Summary};
use crate::profiles::{ComfortProfile, TempGrid};

pub const STEP_HEADER: &str =
    "step,time_min,strategy,setpoint_c,zone_temp_c,q_cool_w,district_kwh,fan_kwh,pump_kwh";

/// Per-step trace of one run.
pub fn step_csv(r: &RunResult) -> String {
    let mut out = String::with_capacity(64 * (r.steps.len() + 1));
    out.push_str(STEP_HEADER);
    out.push('\n');
    for s in &r.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.step,
            s.time_min,
            r.strategy,
            s.setpoint_c,
            s.zone_temp_c,
            s.q_cool_w,
            s.energy.district_kwh,
            s.energy.fan_kwh,
            s.energy.pump_kwh
        );
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Cross-strategy summary table, baseline row first. `annual_scale`, when
/// present, appends a totals column extrapolated to that multiple of the
/// simulated horizon.
pub fn summary_csv(s: &Summary, annual_scale: Option<f64>) -> String {
    let mut out = String::from(
        "strategy,total_kwh,district_kwh,fan_kwh,pump_kwh,energy_reduction_pct,\
         candidates_offered,labels_queried,labelling_effort,effort_reduction_pct,\
         mean_acceptability_before,mean_acceptability_after,\
         mean_model_acceptability_before,mean_model_acceptability_after,\
         mean_setpoint_after,convergence_step",
    );
    if annual_scale.is_some() {
        out.push_str(",annualized_total_kwh_extrapolated");
    }
    out.push('\n');
    for row in std::iter::once(&s.baseline).chain(s.strategies.iter()) {
        let effort_reduction = (row.strategy == Strategy::ActiveLearning)
            .then_some(s.effort_reduction)
            .flatten();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.strategy,
            row.energy.total_kwh(),
            row.energy.district_kwh,
            row.energy.fan_kwh,
            row.energy.pump_kwh,
            row.energy_reduction * 100.0,
            row.candidates_offered,
            row.labels_queried,
            opt(row.labelling_effort),
            opt(effort_reduction.map(|e| e * 100.0)),
            opt(row.mean_acceptability_before),
            opt(row.mean_acceptability_after),
            opt(row.mean_model_acceptability_before),
            opt(row.mean_model_acceptability_after),
            opt(row.mean_setpoint_after),
            opt(s.convergence_step),
        );
        if let Some(scale) = annual_scale {
            let _ = write!(out, ",{}", row.energy.total_kwh() * scale);
        }
        out.push('\n');
    }
    out
}

/// Holdout metrics at each retrain checkpoint, all strategies stacked.
pub fn learning_curve_csv(results: &[RunResult]) -> String {
    let mut out = String::from("strategy,step,cumulative_labels,accuracy,macro_f1,log_loss\n");
    for r in results {
        for p in &r.learning_curve {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.strategy,
                p.step,
                p.pool_size,
                p.metrics.accuracy,
                p.metrics.macro_f1,
                p.metrics.log_loss
            );
        }
    }
    out
}

/// Modelled preference distribution per occupant along the grid.
pub fn profiles_csv(profiles: &[ComfortProfile], grid: &TempGrid) -> String {
    let mut out = String::from("occupant_id,temp_c,p_cooler,p_nochange,p_warmer,comfortable\n");
    for p in profiles {
        for (i, probs) in p.probs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.occupant_id,
                grid.at(i),
                probs[0],
                probs[1],
                probs[2],
                p.comfortable[i]
            );
        }
    }
    out
}

fn strategy_color(s: Strategy) -> &'static str {
    match s {
        Strategy::ActiveLearning => "#1f77b4",
        Strategy::Conventional => "#d62728",
        Strategy::FixedBaseline => "#7f7f7f",
        Strategy::RandomQuery => "#2ca02c",
    }
}

/// Linear mapping from data coordinates to a pixel frame with margins.
struct Frame {
    w: f64,
    h: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        Frame {
            w: 860.0,
            h: 420.0,
            left: 62.0,
            right: 20.0,
            top: 38.0,
            bottom: 46.0,
            x_lo,
            x_hi,
            y_lo,
            y_hi,
        }
    }

    fn x(&self, v: f64) -> f64 {
        let span = (self.x_hi - self.x_lo).max(f64::MIN_POSITIVE);
        self.left + (v - self.x_lo) / span * (self.w - self.left - self.right)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_hi - self.y_lo).max(f64::MIN_POSITIVE);
        self.h - self.bottom - (v - self.y_lo) / span * (self.h - self.top - self.bottom)
    }

    fn open(&self, title: &str) -> String {
        format!(
            concat!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
                "viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n",
                "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
                "<text x=\"{tx}\" y=\"20\" font-size=\"14\">{title}</text>\n"
            ),
            w = self.w,
            h = self.h,
            tx = self.left,
            title = title,
        )
    }

    fn axes(&self, x_label: &str, y_label: &str) -> String {
        format!(
            concat!(
                "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#333\"/>\n",
                "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"#333\"/>\n",
                "<text x=\"{xc}\" y=\"{xy}\" text-anchor=\"middle\">{xl}</text>\n",
                "<text x=\"14\" y=\"{yc}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {yc})\">{yl}</text>\n"
            ),
            l = self.left,
            r = self.w - self.right,
            t = self.top,
            b = self.h - self.bottom,
            xc = (self.left + self.w - self.right) / 2.0,
            xy = self.h - 10.0,
            xl = x_label,
            yc = (self.top + self.h - self.bottom) / 2.0,
            yl = y_label,
        )
    }

    fn x_tick(&self, v: f64, label: &str) -> String {
        let x = self.x(v);
        let b = self.h - self.bottom;
        format!(
            "<line x1=\"{x:.1}\" y1=\"{b}\" x2=\"{x:.1}\" y2=\"{b2}\" stroke=\"#333\"/>\n<text x=\"{x:.1}\" y=\"{ty}\" text-anchor=\"middle\">{label}</text>\n",
            b2 = b + 4.0,
            ty = b + 16.0,
        )
    }

    fn y_tick(&self, v: f64, label: &str) -> String {
        let y = self.y(v);
        format!(
            "<line x1=\"{l2}\" y1=\"{y:.1}\" x2=\"{l}\" y2=\"{y:.1}\" stroke=\"#333\"/>\n<text x=\"{tx}\" y=\"{ty:.1}\" text-anchor=\"end\">{label}</text>\n",
            l = self.left,
            l2 = self.left - 4.0,
            tx = self.left - 7.0,
            ty = y + 4.0,
        )
    }

    fn legend(&self, entries: &[(&str, &str)]) -> String {
        let mut out = String::new();
        let mut x = self.left + 8.0;
        for (label, color) in entries {
            let _ = write!(
                out,
                "<rect x=\"{x:.1}\" y=\"{y}\" width=\"18\" height=\"4\" fill=\"{color}\"/>\n<text x=\"{tx:.1}\" y=\"{ly}\">{label}</text>\n",
                y = self.top - 8.0,
                tx = x + 22.0,
                ly = self.top - 2.0,
            );
            x += 22.0 + 7.0 * label.len() as f64 + 18.0;
        }
        out
    }
}

fn nice_y_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.abs().max(1e-12).log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(mag * 10.0);
    let mut v = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    while v <= hi + 1e-9 {
        ticks.push(v);
        v += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

/// Setpoint trace per strategy, one polyline each, x in days.
pub fn setpoint_chart(results: &[RunResult], steps_per_day: usize) -> String {
    let spd = steps_per_day.max(1) as f64;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    let mut x_hi: f64 = 1.0;
    for r in results {
        x_hi = x_hi.max(r.steps.len() as f64 / spd);
        for s in &r.steps {
            y_lo = y_lo.min(s.setpoint_c);
            y_hi = y_hi.max(s.setpoint_c);
        }
    }
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (20.0, 30.0);
    }
    let f = Frame::new(0.0, x_hi, y_lo - 0.5, y_hi + 0.5);

    let mut svg = f.open("Zone setpoint by strategy");
    svg.push_str(&f.axes("day", "setpoint (degC)"));
    for t in nice_y_ticks(f.y_lo, f.y_hi) {
        svg.push_str(&f.y_tick(t, &fmt_tick(t)));
    }
    let day_step = if x_hi > 21.0 { 7 } else { 1 };
    let mut d = 0;
    while (d as f64) <= x_hi {
        svg.push_str(&f.x_tick(d as f64, &d.to_string()));
        d += day_step;
    }
    for r in results {
        let mut points = String::new();
        for s in &r.steps {
            let _ = write!(
                points,
                "{:.1},{:.1} ",
                f.x(s.step as f64 / spd),
                f.y(s.setpoint_c)
            );
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>",
            strategy_color(r.strategy),
            points.trim_end()
        );
    }
    svg.push_str(
        &f.legend(
            &results
                .iter()
                .map(|r| (r.strategy.as_str(), strategy_color(r.strategy)))
                .collect::<Vec<_>>(),
        ),
    );
    svg.push_str("</svg>\n");
    svg
}

/// Weekly energy bars, one bar per strategy per week, stacked district, fan
/// and pump at decreasing opacity.
pub fn weekly_energy_chart(results: &[RunResult], steps_per_week: usize) -> Result<String> {
    let weekly: Vec<_> = results
        .iter()
        .map(|r| weekly_energy(r, steps_per_week))
        .collect::<Result<_>>()?;
    let weeks = weekly.iter().map(|w| w.len()).max().unwrap_or(0);
    let y_hi = weekly
        .iter()
        .flatten()
        .map(|e| e.total_kwh())
        .fold(1e-9, f64::max);
    let f = Frame::new(0.0, weeks.max(1) as f64, 0.0, y_hi * 1.08);

    let mut svg = f.open("Weekly energy by component (stack: district, fan, pump)");
    svg.push_str(&f.axes("week", "energy (kWh)"));
    for t in nice_y_ticks(0.0, f.y_hi) {
        svg.push_str(&f.y_tick(t, &fmt_tick(t)));
    }
    for wk in 0..weeks {
        svg.push_str(&f.x_tick(wk as f64 + 0.5, &(wk + 1).to_string()));
    }

    let group_w = (f.x(1.0) - f.x(0.0)).max(1.0);
    let bar_w = (group_w * 0.8 / results.len().max(1) as f64).max(1.0);
    for (ri, (r, weeks_of)) in results.iter().zip(&weekly).enumerate() {
        let color = strategy_color(r.strategy);
        for (wk, e) in weeks_of.iter().enumerate() {
            let x = f.x(wk as f64) + group_w * 0.1 + ri as f64 * bar_w;
            let mut base = 0.0;
            for (kwh, opacity) in [
                (e.district_kwh, "1"),
                (e.fan_kwh, "0.62"),
                (e.pump_kwh, "0.3"),
            ] {
                let y1 = f.y(base + kwh);
                let height = f.y(base) - y1;
                let _ = writeln!(
                    svg,
                    "<rect x=\"{x:.1}\" y=\"{y1:.1}\" width=\"{bar_w:.1}\" height=\"{height:.1}\" fill=\"{color}\" fill-opacity=\"{opacity}\"/>",
                );
                base += kwh;
            }
        }
    }
    svg.push_str(
        &f.legend(
            &results
                .iter()
                .map(|r| (r.strategy.as_str(), strategy_color(r.strategy)))
                .collect::<Vec<_>>(),
        ),
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Holdout macro-F1 against cumulative labels, one polyline per strategy
/// that produced a learning curve.
pub fn learning_chart(results: &[RunResult]) -> String {
    let curves: Vec<&RunResult> = results
        .iter()
        .filter(|r| !r.learning_curve.is_empty())
        .collect();
    let x_hi = curves
        .iter()
        .flat_map(|r| r.learning_curve.iter())
        .map(|p| p.pool_size as f64)
        .fold(1.0, f64::max);
    let f = Frame::new(0.0, x_hi, 0.0, 1.0);

    let mut svg = f.open("Holdout macro-F1 against labels collected");
    svg.push_str(&f.axes("labels collected", "macro-F1"));
    for t in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        svg.push_str(&f.y_tick(t, &format!("{t:.1}")));
    }
    for t in nice_y_ticks(0.0, x_hi) {
        svg.push_str(&f.x_tick(t, &fmt_tick(t)));
    }
    for r in &curves {
        let mut points = String::new();
        for p in &r.learning_curve {
            let _ = write!(
                points,
                "{:.1},{:.1} ",
                f.x(p.pool_size as f64),
                f.y(p.metrics.macro_f1)
            );
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
            strategy_color(r.strategy),
            points.trim_end()
        );
    }
    svg.push_str(
        &f.legend(
            &curves
                .iter()
                .map(|r| (r.strategy.as_str(), strategy_color(r.strategy)))
                .collect::<Vec<_>>(),
        ),
    );
    svg.push_str("</svg>\n");
    svg
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| SimError::io(&path, e))?;
    Ok(path)
}

/// Writes the full artifact set for one compared run: a step CSV per
/// strategy, the summary table, the learning-curve table and three charts.
/// Returns the created paths.
pub fn emit_outputs(
    results: &[RunResult],
    summary: &Summary,
    steps_per_day: usize,
    annual_scale: Option<f64>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let mut paths = Vec::new();
    for r in results {
        paths.push(write_file(
            dir,
            &format!("steps_{}.csv", r.strategy),
            &step_csv(r),
        )?);
    }
    paths.push(write_file(
        dir,
        "summary.csv",
        &summary_csv(summary, annual_scale),
    )?);
    paths.push(write_file(
        dir,
        "learning_curve.csv",
        &learning_curve_csv(results),
    )?);
    paths.push(write_file(
        dir,
        "setpoint.svg",
        &setpoint_chart(results, steps_per_day),
    )?);
    paths.push(write_file(
        dir,
        "weekly_energy.svg",
        &weekly_energy_chart(results, steps_per_day * 7)?,
    )?);
    paths.push(write_file(
        dir,
        "learning_curve.svg",
        &learning_chart(results),
    )?);
    Ok(paths)
}
