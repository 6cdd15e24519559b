//! Command-line front end: synthesize survey data, rank model features, run
//! individual control strategies, compare them on one seed, and regenerate
//! charts from a saved output directory.

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use occsim_core::config::SimConfig;
use occsim_core::control::{run_simulation, LearningPoint, RunResult, StepRecord, Strategy};
use occsim_core::featsel::{rfecv_rank, select_top_features, TabularData};
use occsim_core::gbt::EvalMetrics;
use occsim_core::metrics::metrics_summary;
use occsim_core::occupant::{
    gen_dataset, generate_population, load_dataset_csv, write_dataset_csv,
};
use occsim_core::output;
use occsim_core::profiles::generate_profile;
use occsim_core::zone::EnergyBreakdown;

#[derive(Parser)]
#[command(
    name = "occsim",
    version,
    about = "Occupant-centric HVAC control simulator with active-learning comfort models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the pre-collected preference survey as a CSV
    GenData(GenDataArgs),
    /// Rank comfort-model features by cross-validated recursive elimination
    SelectFeatures(SelectFeaturesArgs),
    /// Run one strategy and write its step trace
    Run(RunArgs),
    /// Run every strategy on one seed and write the full artifact set
    Compare(CompareArgs),
    /// Regenerate charts from a directory written by compare or run
    Plot(PlotArgs),
    /// Print the active configuration as TOML
    PrintConfig(ConfigOpt),
}

#[derive(Args)]
struct ConfigOpt {
    /// Configuration file (TOML); defaults apply for every omitted key
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

impl ConfigOpt {
    fn load(&self) -> Result<SimConfig> {
        match &self.config {
            Some(path) => {
                SimConfig::load(path).with_context(|| format!("loading config {}", path.display()))
            }
            None => Ok(SimConfig::default()),
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    config: ConfigOpt,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV path
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct SelectFeaturesArgs {
    #[command(flatten)]
    config: ConfigOpt,
    /// Survey CSV to rank on; synthesized from the config when omitted
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Cross-validation folds
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Write the ranking table here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigOpt,
    /// al, conventional, baseline or random
    #[arg(long)]
    strategy: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Also write the final comfort profiles over the setpoint grid
    #[arg(long)]
    profiles: bool,
    /// Also write the trained ensemble as JSON
    #[arg(long)]
    model: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigOpt,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Add energy columns scaled from the horizon to a full year
    #[arg(long)]
    annualize: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory holding steps_*.csv (and optionally learning_curve.csv)
    #[arg(long = "in", value_name = "DIR")]
    dir: PathBuf,
}

fn main() -> Result<()> {
    let matches = Cli::command()
        .after_long_help(config_keys_help())
        .get_matches();
    let cli = Cli::from_arg_matches(&matches)?;
    match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::SelectFeatures(args) => select_features(args),
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
        Command::Plot(args) => plot(args),
        Command::PrintConfig(args) => {
            print!("{}", toml::to_string_pretty(&args.load()?)?);
            Ok(())
        }
    }
}

fn config_keys_help() -> String {
    let defaults = toml::to_string_pretty(&SimConfig::default())
        .expect("the default configuration serializes");
    format!(
        "Configuration keys (TOML), shown with their defaults; \
         a --config file may set any subset:\n\n{defaults}"
    )
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let population = generate_population(cfg.sim.n_occupants, args.seed, &cfg.population)?;
    let rows = gen_dataset(&population, &cfg.dataset, &cfg.weather, args.seed)?;
    write_dataset_csv(&args.out, &rows)?;

    let mut counts = [0usize; 3];
    for r in &rows {
        counts[r.label.index()] += 1;
    }
    println!(
        "wrote {} rows for {} occupants to {} (cooler {}, no_change {}, warmer {})",
        rows.len(),
        cfg.sim.n_occupants,
        args.out.display(),
        counts[0],
        counts[1],
        counts[2],
    );
    Ok(())
}

fn select_features(args: SelectFeaturesArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let rows = match &args.data {
        Some(path) => {
            load_dataset_csv(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => {
            let population = generate_population(cfg.sim.n_occupants, args.seed, &cfg.population)?;
            gen_dataset(&population, &cfg.dataset, &cfg.weather, args.seed)?
        }
    };

    let names = [
        "indoor_temp_c",
        "air_speed_ms",
        "outdoor_temp_c",
        "outdoor_rh_pct",
        "occupant_id",
    ];
    let mut columns = vec![Vec::with_capacity(rows.len()); names.len()];
    let mut labels = Vec::with_capacity(rows.len());
    for r in &rows {
        columns[0].push(r.env.indoor_temp_c);
        columns[1].push(r.env.air_speed_ms);
        columns[2].push(r.env.outdoor_temp_c);
        columns[3].push(r.env.outdoor_rh_pct);
        columns[4].push(r.occupant_id as f64);
        labels.push(r.label.index() as u8);
    }
    let data = TabularData {
        feature_names: names.iter().map(|s| s.to_string()).collect(),
        columns,
        labels,
        n_classes: 3,
    };

    let report = rfecv_rank(&data, &cfg.gbt, args.folds, args.seed)?;
    let table = report.to_csv();
    match &args.out {
        Some(path) => {
            fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{table}"),
    }
    println!(
        "best feature count {}: keep {}",
        report.best_count,
        select_top_features(&report, report.best_count).join(", ")
    );
    Ok(())
}

/// Runs one strategy; the random strategy first runs a matched
/// active-learning pass to borrow its per-step label budget.
fn run_strategy(cfg: &SimConfig, seed: u64, strategy: Strategy) -> Result<RunResult> {
    let result = match strategy {
        Strategy::RandomQuery => {
            let reference = run_simulation(cfg, seed, Strategy::ActiveLearning, None)?;
            run_simulation(cfg, seed, strategy, Some(&reference.label_counts()))?
        }
        _ => run_simulation(cfg, seed, strategy, None)?,
    };
    Ok(result)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let strategy = Strategy::from_str(&args.strategy)?;
    let result = run_strategy(&cfg, args.seed, strategy)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let steps_path = args.out.join(format!("steps_{strategy}.csv"));
    fs::write(&steps_path, output::step_csv(&result))?;
    println!("wrote {}", steps_path.display());

    if !result.learning_curve.is_empty() {
        let path = args.out.join("learning_curve.csv");
        fs::write(
            &path,
            output::learning_curve_csv(std::slice::from_ref(&result)),
        )?;
        println!("wrote {}", path.display());
    }

    if args.profiles || args.model {
        let Some(model) = &result.model else {
            bail!("strategy {strategy} never trains a model");
        };
        if args.profiles {
            let profiles = (0..cfg.sim.n_occupants as u32)
                .map(|id| {
                    generate_profile(
                        model,
                        id,
                        &cfg.grid,
                        cfg.polling.air_speed_ms,
                        cfg.weather.mean_temp_c,
                        cfg.weather.rh_mean_pct,
                    )
                })
                .collect::<occsim_core::Result<Vec<_>>>()?;
            let path = args.out.join("profiles.csv");
            fs::write(&path, output::profiles_csv(&profiles, &cfg.grid))?;
            println!("wrote {}", path.display());
        }
        if args.model {
            let path = args.out.join("model.json");
            fs::write(&path, model.to_json())?;
            println!("wrote {}", path.display());
        }
    }

    let energy = total_energy(&result);
    println!(
        "strategy {strategy}, seed {}: {} steps, {} queries offered, {} labelled, {:.1} kWh",
        args.seed,
        result.steps.len(),
        result.candidates_offered,
        result.labels_queried,
        energy.total_kwh(),
    );
    Ok(())
}

fn total_energy(result: &RunResult) -> EnergyBreakdown {
    let mut total = EnergyBreakdown::default();
    for s in &result.steps {
        total.add(&s.energy);
    }
    total
}

fn compare(args: CompareArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let al = run_strategy(&cfg, args.seed, Strategy::ActiveLearning)?;
    let conventional = run_strategy(&cfg, args.seed, Strategy::Conventional)?;
    let random = run_simulation(
        &cfg,
        args.seed,
        Strategy::RandomQuery,
        Some(&al.label_counts()),
    )?;
    let baseline = run_strategy(&cfg, args.seed, Strategy::FixedBaseline)?;

    let occupant_centric = [al, conventional, random];
    let steps_per_day = cfg.steps_per_day() as usize;
    let window_steps = cfg.sim.convergence_window_days as usize * steps_per_day;
    let summary = metrics_summary(
        &occupant_centric,
        &baseline,
        cfg.sim.convergence_tolerance_c,
        window_steps,
    )?;

    match summary.convergence_step {
        Some(step) => println!(
            "setpoints converge at step {step} (day {})",
            step as usize / steps_per_day
        ),
        None => println!("setpoints do not converge within the horizon"),
    }
    if let Some(reduction) = summary.effort_reduction {
        println!("labelling-effort reduction: {:.1}%", reduction * 100.0);
    }
    for s in &summary.strategies {
        println!(
            "{}: {:.1} kWh ({:+.1}% vs baseline), acceptability after convergence {}",
            s.strategy,
            s.energy.total_kwh(),
            -s.energy_reduction * 100.0,
            s.mean_acceptability_after
                .map_or_else(|| "n/a".into(), |a| format!("{a:.3}")),
        );
    }

    let annual_scale = args.annualize.then(|| 365.0 / cfg.sim.horizon_days as f64);
    let mut results = occupant_centric.to_vec();
    results.push(baseline);
    let paths = output::emit_outputs(&results, &summary, steps_per_day, annual_scale, &args.out)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let mut step_files: Vec<PathBuf> = fs::read_dir(&args.dir)
        .with_context(|| format!("reading {}", args.dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("steps_") && n.ends_with(".csv"))
        })
        .collect();
    step_files.sort();
    if step_files.is_empty() {
        bail!("no steps_*.csv files in {}", args.dir.display());
    }

    let mut results = Vec::new();
    for path in &step_files {
        results.push(parse_steps_csv(path)?);
    }

    let curve_path = args.dir.join("learning_curve.csv");
    if curve_path.exists() {
        attach_learning_curves(&curve_path, &mut results)?;
    }

    let steps_per_day = steps_per_day_of(&results);
    fs::write(
        args.dir.join("setpoint.svg"),
        output::setpoint_chart(&results, steps_per_day),
    )?;
    fs::write(
        args.dir.join("weekly_energy.svg"),
        output::weekly_energy_chart(&results, steps_per_day * 7)?,
    )?;
    fs::write(
        args.dir.join("learning_curve.svg"),
        output::learning_chart(&results),
    )?;
    for name in ["setpoint.svg", "weekly_energy.svg", "learning_curve.svg"] {
        println!("wrote {}", args.dir.join(name).display());
    }
    Ok(())
}

/// Rebuilds the slice of a run that the charts draw from. Fields absent from
/// the step CSV (pool, query counts, occupancy) stay empty.
fn parse_steps_csv(path: &PathBuf) -> Result<RunResult> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == output::STEP_HEADER => {}
        _ => bail!("{} is not a step CSV", path.display()),
    }

    let mut strategy = None;
    let mut steps = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            bail!("{} line {}: expected 9 fields", path.display(), i + 2);
        }
        let num = |j: usize| -> Result<f64> {
            fields[j]
                .parse::<f64>()
                .with_context(|| format!("{} line {} field {}", path.display(), i + 2, j + 1))
        };
        strategy = Some(Strategy::from_str(fields[2])?);
        steps.push(StepRecord {
            step: num(0)? as u64,
            time_min: num(1)? as u64,
            occupied: false,
            setpoint_c: num(3)?,
            zone_temp_c: num(4)?,
            q_cool_w: num(5)?,
            energy: EnergyBreakdown {
                district_kwh: num(6)?,
                fan_kwh: num(7)?,
                pump_kwh: num(8)?,
            },
            candidates: 0,
            labelled: 0,
            acceptability: None,
            model_acceptability: None,
        });
    }
    let Some(strategy) = strategy else {
        bail!("{} has no data rows", path.display());
    };
    Ok(RunResult {
        strategy,
        seed: 0,
        steps,
        pool: Vec::new(),
        candidates_offered: 0,
        labels_queried: 0,
        learning_curve: Vec::new(),
        model: None,
    })
}

fn attach_learning_curves(path: &PathBuf, results: &mut [RunResult]) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            bail!("{} line {}: expected 6 fields", path.display(), i + 1);
        }
        let strategy = Strategy::from_str(fields[0])?;
        let num = |j: usize| -> Result<f64> {
            fields[j]
                .parse::<f64>()
                .with_context(|| format!("{} line {} field {}", path.display(), i + 1, j + 1))
        };
        let point = LearningPoint {
            step: num(1)? as u64,
            pool_size: num(2)? as usize,
            metrics: EvalMetrics {
                accuracy: num(3)?,
                macro_f1: num(4)?,
                log_loss: num(5)?,
            },
        };
        if let Some(r) = results.iter_mut().find(|r| r.strategy == strategy) {
            r.learning_curve.push(point);
        }
    }
    Ok(())
}

/// Control cadence recovered from the step timestamps; one step per day is
/// the floor so a short trace still charts.
fn steps_per_day_of(results: &[RunResult]) -> usize {
    results
        .iter()
        .find(|r| r.steps.len() >= 2)
        .map(|r| {
            let dt = r.steps[1].time_min.saturating_sub(r.steps[0].time_min);
            1440u64
                .checked_div(dt)
                .map_or(1, |per_day| per_day.max(1) as usize)
        })
        .unwrap_or(48)
}
