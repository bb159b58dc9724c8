//! Batch front end: run missions, parameter sweeps and CRB maps, and emit
//! plot-ready CSV/JSON files.
//!
//! Every run writes a `manifest.json` recording the fully resolved scenario,
//! experiment knobs and artifact version, so any output is reproducible from
//! the manifest alone. Exit codes: 0 ok, 1 usage/config error, 2 infeasible
//! problem, 3 numeric failure.

use clap::{Args, Parser, Subcommand};
use isac_core::mission::{compare_strategies, mission_stats, run_mission, MissionOptions};
use isac_core::scenario::{load_config, ExperimentConfig, Scenario, Strategy, CONFIG_ENV_VAR};
use isac_core::{crb, Error, Point};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

mod output;

#[derive(Parser)]
#[command(name = "isac-sim", version, about = "UAV joint communication/sensing trajectory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Scenario/experiment config file (TOML). Falls back to $ISAC_SIM_CONFIG,
    /// then to built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trade-off weight in [0, 1].
    #[arg(long)]
    eta: Option<f64>,
    /// On-board energy in kJ.
    #[arg(long = "e-tot-kj")]
    e_tot_kj: Option<f64>,
    /// Waypoints per full stage.
    #[arg(long = "n-stg")]
    n_stg: Option<u32>,
    /// Fixed total waypoint budget (0 = derive from energy).
    #[arg(long = "n-tot")]
    n_tot: Option<u32>,
    /// Measurement-noise scale constant.
    #[arg(long)]
    a: Option<f64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo repetitions.
    #[arg(long)]
    runs: Option<u32>,
    /// Flight strategy: multi-stage | one-stage | straight | comm-only | sense-only.
    #[arg(long)]
    strategy: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one mission and write its trajectory and iteration traces.
    Optimize(CommonOpts),
    /// Run Monte-Carlo mission simulations and write a mission report.
    Simulate(CommonOpts),
    /// Sweep a parameter axis across strategies.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Axis to sweep: e-tot | eta | a | n-stg.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values (kJ for e-tot).
        #[arg(long)]
        values: String,
        /// Comma-separated strategies to compare.
        #[arg(long, default_value = "multi-stage")]
        strategies: String,
    },
    /// Evaluate the CRB over a grid of candidate target positions.
    CrbMap {
        #[command(flatten)]
        common: CommonOpts,
        /// Trajectory CSV whose hover rows supply the hover points.
        #[arg(long)]
        hovers: Option<PathBuf>,
        /// Explicit hover point "x,y"; repeatable.
        #[arg(long = "hover")]
        hover_points: Vec<String>,
        /// Grid resolution in m.
        #[arg(long, default_value_t = 25.0)]
        resolution: f64,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Infeasible(_) => 2,
        Error::SolverFailure(_) | Error::SingularFim { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Resolve config file + flag overrides into a scenario and experiment.
fn resolve(common: &CommonOpts) -> Result<(Scenario, ExperimentConfig), Error> {
    let path = common
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV_VAR).map(PathBuf::from));
    let (mut scenario, mut exp) = match path {
        Some(p) => load_config(&p)?,
        None => (Scenario::default(), ExperimentConfig::default()),
    };
    if let Some(eta) = common.eta {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidArgument(format!("--eta must be in [0, 1], got {eta}")));
        }
        exp.eta = eta;
    }
    if let Some(kj) = common.e_tot_kj {
        if kj <= 0.0 {
            return Err(Error::InvalidArgument("--e-tot-kj must be positive".into()));
        }
        scenario.energy.e_tot = kj * 1e3;
    }
    if let Some(n) = common.n_stg {
        if n == 0 {
            return Err(Error::InvalidArgument("--n-stg must be at least 1".into()));
        }
        exp.n_stg = n;
    }
    if let Some(n) = common.n_tot {
        exp.n_tot = if n == 0 { None } else { Some(n) };
    }
    if let Some(a) = common.a {
        if a <= 0.0 {
            return Err(Error::InvalidArgument("--a must be positive".into()));
        }
        scenario.sys.noise_scale_a = a;
    }
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    if let Some(runs) = common.runs {
        if runs == 0 {
            return Err(Error::InvalidArgument("--runs must be at least 1".into()));
        }
        exp.runs = runs;
    }
    if let Some(s) = &common.strategy {
        exp.strategy = s.parse()?;
    }
    Ok((scenario, exp))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Optimize(common) => cmd_optimize(&common),
        Command::Simulate(common) => cmd_simulate(&common),
        Command::Sweep { common, axis, values, strategies } => {
            cmd_sweep(&common, &axis, &values, &strategies)
        }
        Command::CrbMap { common, hovers, hover_points, resolution } => {
            cmd_crb_map(&common, hovers.as_deref(), &hover_points, resolution)
        }
    }
}

fn cmd_optimize(common: &CommonOpts) -> Result<(), Error> {
    let (scenario, exp) = resolve(common)?;
    let opts = MissionOptions::from_experiment(&exp).with_label("optimize");
    let report = run_mission(&scenario, &opts)?;
    output::ensure_dir(&common.out)?;
    output::write(&common.out, "trajectory.csv", &output::trajectory_csv(&report.trajectory))?;
    output::write(&common.out, "trace.csv", &output::trace_csv(&report.traces))?;
    output::write(
        &common.out,
        "summary.json",
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    output::write_manifest(&common.out, "optimize", &scenario, &exp)?;
    println!(
        "optimize: {} stages, {} waypoints, {} hovers, avg rate {:.4e} bit/s, crb(true) {}",
        report.stage_count,
        report.n_tot,
        report.k_tot,
        report.avg_rate,
        report
            .crb_true
            .map(|c| format!("{c:.4e} m^2"))
            .unwrap_or_else(|| "singular".into()),
    );
    Ok(())
}

fn cmd_simulate(common: &CommonOpts) -> Result<(), Error> {
    let (scenario, exp) = resolve(common)?;
    let opts = MissionOptions::from_experiment(&exp);
    let stats = mission_stats(&scenario, &opts, exp.runs, "simulate")?;
    let exemplar = run_mission(&scenario, &opts.clone().with_label("simulate/run0"))?;
    output::ensure_dir(&common.out)?;
    #[derive(serde::Serialize)]
    struct SimReport<'a> {
        stats: &'a isac_core::mission::StrategyStats,
        exemplar: &'a isac_core::mission::MissionReport,
    }
    output::write(
        &common.out,
        "report.json",
        &serde_json::to_string_pretty(&SimReport { stats: &stats, exemplar: &exemplar })
            .expect("report serializes"),
    )?;
    output::write(&common.out, "trajectory.csv", &output::trajectory_csv(&exemplar.trajectory))?;
    output::write(&common.out, "measurements.csv", &exemplar.measurements.to_csv())?;
    output::write_manifest(&common.out, "simulate", &scenario, &exp)?;
    println!(
        "simulate: {} runs, mse {:.4e} m^2, crb(true, median) {:.4e} m^2, avg rate {:.4e} bit/s",
        stats.runs, stats.mse, stats.crb_true, stats.avg_rate
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>, Error> {
    let vals: Result<Vec<T>, _> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse::<T>)
        .collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::InvalidArgument(format!("cannot parse {what} list `{text}`"))),
    }
}

fn cmd_sweep(common: &CommonOpts, axis: &str, values: &str, strategies: &str) -> Result<(), Error> {
    let (scenario, exp) = resolve(common)?;
    let strategies: Vec<Strategy> = strategies
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    if strategies.is_empty() {
        return Err(Error::InvalidArgument("no strategies given".into()));
    }
    let base = MissionOptions::from_experiment(&exp);
    let mut rows = Vec::new();
    let mut axis_values = Vec::new();
    match axis {
        "e-tot" => {
            let kj: Vec<f64> = parse_list("e-tot", values)?;
            let joules: Vec<f64> = kj.iter().map(|v| v * 1e3).collect();
            rows = compare_strategies(&scenario, &base, &strategies, &[exp.eta], &joules, exp.runs)?;
            axis_values = rows.iter().map(|r| r.e_tot / 1e3).collect();
        }
        "eta" => {
            let etas: Vec<f64> = parse_list("eta", values)?;
            rows = compare_strategies(
                &scenario,
                &base,
                &strategies,
                &etas,
                &[scenario.energy.e_tot],
                exp.runs,
            )?;
            axis_values = rows.iter().map(|r| r.eta).collect();
        }
        "a" => {
            for a in parse_list::<f64>("a", values)? {
                let mut sc = scenario.clone();
                sc.sys.noise_scale_a = a;
                for &strategy in &strategies {
                    let mut o = base.clone();
                    o.strategy = strategy;
                    let label = format!("sweep-a/{}/{a}", strategy.as_str());
                    rows.push(mission_stats(&sc, &o, exp.runs, &label)?);
                    axis_values.push(a);
                }
            }
        }
        "n-stg" => {
            for n in parse_list::<u32>("n-stg", values)? {
                let mut o = base.clone();
                o.n_stg = n;
                for &strategy in &strategies {
                    o.strategy = strategy;
                    let label = format!("sweep-nstg/{}/{n}", strategy.as_str());
                    rows.push(mission_stats(&scenario, &o, exp.runs, &label)?);
                    axis_values.push(n as f64);
                }
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown sweep axis `{other}` (expected e-tot, eta, a or n-stg)"
            )))
        }
    }
    for (value, r) in axis_values.iter().zip(&rows) {
        println!(
            "sweep point: axis={axis} value={value} strategy={} mse={:.4e} runtime={:.2}s",
            r.strategy.as_str(),
            r.mse,
            r.runtime_s
        );
    }
    output::ensure_dir(&common.out)?;
    output::write(&common.out, "sweep.csv", &output::sweep_csv(&axis_values, &rows))?;
    output::write_manifest(&common.out, "sweep", &scenario, &exp)?;
    Ok(())
}

fn parse_hover(text: &str) -> Result<Point, Error> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!("hover point `{text}` is not `x,y`")));
    }
    let x: f64 = parts[0]
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad hover x `{}`", parts[0])))?;
    let y: f64 = parts[1]
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad hover y `{}`", parts[1])))?;
    Ok(Point::new(x, y))
}

/// Hover points from a trajectory CSV (rows with is_hover > 0, with
/// multiplicity).
fn hovers_from_csv(path: &Path) -> Result<Vec<Point>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut hovers = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 5 {
            return Err(Error::InvalidArgument(format!(
                "{}:{}: expected trajectory CSV (index,x,y,speed,is_hover)",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |s: &str| -> Result<f64, Error> {
            s.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("{}:{}: bad number `{s}`", path.display(), lineno + 1))
            })
        };
        let x = parse(cols[1])?;
        let y = parse(cols[2])?;
        let count = parse(cols[4])? as u32;
        for _ in 0..count {
            hovers.push(Point::new(x, y));
        }
    }
    Ok(hovers)
}

fn cmd_crb_map(
    common: &CommonOpts,
    hovers_file: Option<&Path>,
    hover_flags: &[String],
    resolution: f64,
) -> Result<(), Error> {
    let (scenario, exp) = resolve(common)?;
    if resolution <= 0.0 {
        return Err(Error::InvalidArgument("--resolution must be positive".into()));
    }
    let mut hovers = Vec::new();
    if let Some(path) = hovers_file {
        hovers.extend(hovers_from_csv(path)?);
    }
    for h in hover_flags {
        hovers.push(parse_hover(h)?);
    }
    if hovers.is_empty() {
        return Err(Error::InvalidArgument(
            "no hover points: give --hovers <trajectory.csv> or --hover x,y".into(),
        ));
    }

    // Cell-center grid: halving the resolution exactly quadruples the cells.
    let nx = (scenario.sys.lx / resolution).floor().max(1.0) as usize;
    let ny = (scenario.sys.ly / resolution).floor().max(1.0) as usize;
    let mut csv = String::from("x,y,crb_sum,singular\n");
    for ix in 0..nx {
        let x = (ix as f64 + 0.5) * resolution;
        for iy in 0..ny {
            let y = (iy as f64 + 0.5) * resolution;
            match crb::crb_sum(&hovers, Point::new(x, y), &scenario) {
                Ok(c) => csv.push_str(&format!("{x},{y},{},0\n", c.crb_sum)),
                Err(_) => csv.push_str(&format!("{x},{y},-1,1\n")),
            }
        }
    }
    output::ensure_dir(&common.out)?;
    output::write(&common.out, "crb_map.csv", &csv)?;
    output::write_manifest(&common.out, "crb-map", &scenario, &exp)?;
    println!("crb-map: {} hover points, {}x{} grid at {resolution} m", hovers.len(), nx, ny);
    Ok(())
}
