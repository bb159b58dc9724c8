//! Output file writers. CSV for arrays, JSON for scalars and manifests; no
//! timestamps anywhere so reruns with the same seed are byte-identical.

use isac_core::mission::StrategyStats;
use isac_core::scenario::{ExperimentConfig, Scenario};
use isac_core::sca::IterationRecord;
use isac_core::trajectory::Trajectory;
use isac_core::Error;
use std::path::Path;

pub fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

pub fn write(dir: &Path, name: &str, content: &str) -> Result<(), Error> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Columns: waypoint index (1-based), x, y, segment speed, hover count.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("index,x,y,speed,is_hover\n");
    for (i, ((w, v), h)) in traj
        .waypoints
        .iter()
        .zip(&traj.velocities)
        .zip(&traj.hover_counts)
        .enumerate()
    {
        out.push_str(&format!("{},{},{},{},{}\n", i + 1, w.x, w.y, v.norm(), h));
    }
    out
}

/// Columns: stage, iteration, crb, rate, objective, omega, solver status.
/// A singular CRB is written as `nan`.
pub fn trace_csv(traces: &[Vec<IterationRecord>]) -> String {
    let mut out = String::from("stage,iteration,crb,rate,objective,omega,solver_status\n");
    for (m, trace) in traces.iter().enumerate() {
        for r in trace {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                m + 1,
                r.iteration,
                r.crb.map(|c| c.to_string()).unwrap_or_else(|| "nan".into()),
                r.rate,
                r.objective,
                r.omega,
                r.solver_status
            ));
        }
    }
    out
}

/// Columns exactly: axis value, strategy, mse, crb, avg_rate, hover_count,
/// runtime_s.
pub fn sweep_csv(axis_values: &[f64], rows: &[StrategyStats]) -> String {
    let mut out = String::from("value,strategy,mse,crb,avg_rate,hover_count,runtime_s\n");
    for (v, r) in axis_values.iter().zip(rows) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3}\n",
            v,
            r.strategy.as_str(),
            r.mse,
            r.crb_true,
            r.avg_rate,
            r.hover_count,
            r.runtime_s
        ));
    }
    out
}

/// Everything needed to reproduce a run: resolved scenario (canonical linear
/// SI), experiment knobs, command and artifact version.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    scenario: &Scenario,
    exp: &ExperimentConfig,
) -> Result<(), Error> {
    #[derive(serde::Serialize)]
    struct Manifest<'a> {
        command: &'a str,
        version: &'a str,
        seed: u64,
        scenario_config: String,
        experiment: &'a ExperimentConfig,
    }
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: scenario.seed,
        scenario_config: scenario.to_config_string(),
        experiment: exp,
    };
    write(
        dir,
        "manifest.json",
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
}
