//! End-to-end checks of the command-line interface: exit codes, file
//! schemas, overrides and rerun determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isac-sim"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .env_remove("ISAC_SIM_CONFIG")
        .output()
        .expect("binary runs")
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("isac-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(
        &path,
        r#"
[scenario]
base = [100.0, 100.0]
user = [1200.0, 650.0]
target = [400.0, 500.0]
seed = 3

[experiment]
eta = 0.5
n_stg = 25
runs = 4
"#,
    )
    .unwrap();
    path
}

#[test]
fn optimize_writes_consistent_outputs() {
    let dir = tempdir("optimize");
    let cfg = write_config(&dir);
    let out = run_in(&dir, &["optimize", "--config", cfg.to_str().unwrap(), "--e-tot-kj", "20", "--out", "o1"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let traj = std::fs::read_to_string(dir.join("o1/trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next().unwrap(), "index,x,y,speed,is_hover");
    let rows: Vec<&str> = lines.collect();
    // One row per waypoint, hover rows at the cadence: floor(N/5).
    let hovers = rows
        .iter()
        .filter(|r| r.split(',').next_back().unwrap().parse::<u32>().unwrap() > 0)
        .count();
    assert_eq!(hovers, rows.len() / 5);

    let trace = std::fs::read_to_string(dir.join("o1/trace.csv")).unwrap();
    let mut header = trace.lines();
    assert_eq!(header.next().unwrap(), "stage,iteration,crb,rate,objective,omega,solver_status");
    // Objective column non-increasing within each stage.
    let mut last: Option<(u32, f64)> = None;
    for line in trace.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let stage: u32 = cols[0].parse().unwrap();
        let obj: f64 = cols[4].parse().unwrap();
        if let Some((s, prev)) = last {
            if s == stage {
                assert!(obj <= prev + 1e-9 * prev.abs().max(1.0), "objective must not increase");
            }
        }
        last = Some((stage, obj));
    }

    assert!(dir.join("o1/summary.json").exists());
    let manifest = std::fs::read_to_string(dir.join("o1/manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"optimize\""));
    assert!(manifest.contains("scenario_config"));
}

#[test]
fn optimize_rerun_is_byte_identical() {
    let dir = tempdir("repro");
    let cfg = write_config(&dir);
    for out in ["a", "b"] {
        let res = run_in(
            &dir,
            &["optimize", "--config", cfg.to_str().unwrap(), "--e-tot-kj", "15", "--seed", "9", "--out", out],
        );
        assert!(res.status.success());
    }
    for file in ["trajectory.csv", "trace.csv", "summary.json", "manifest.json"] {
        let a = std::fs::read(dir.join("a").join(file)).unwrap();
        let b = std::fs::read(dir.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} must be byte-identical across reruns");
    }
}

#[test]
fn simulate_writes_report_and_measurements() {
    let dir = tempdir("simulate");
    let cfg = write_config(&dir);
    let out = run_in(
        &dir,
        &["simulate", "--config", cfg.to_str().unwrap(), "--e-tot-kj", "15", "--runs", "3", "--out", "s1"],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("s1/report.json")).unwrap()).unwrap();
    assert_eq!(report["stats"]["runs"], 3);
    assert!(report["exemplar"]["trajectory"]["waypoints"].is_array());
    let meas = std::fs::read_to_string(dir.join("s1/measurements.csv")).unwrap();
    assert!(meas.starts_with("stage,hover,x,y,d_hat,variance\n"));
    assert!(meas.lines().count() > 1);
}

#[test]
fn sweep_emits_one_row_per_point_and_prints_runtime() {
    let dir = tempdir("sweep");
    let cfg = write_config(&dir);
    let out = run_in(
        &dir,
        &[
            "sweep", "--config", cfg.to_str().unwrap(), "--axis", "a", "--values", "10,50",
            "--strategies", "straight", "--runs", "3", "--e-tot-kj", "15", "--out", "sw",
        ],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("runtime="), "sweep must print per-point runtime");
    let csv = std::fs::read_to_string(dir.join("sw/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,strategy,mse,crb,avg_rate,hover_count,runtime_s");
    assert_eq!(lines.len(), 3, "one row per sweep point");
    // Larger measurement noise cannot help the straight baseline's MSE
    // ordering columns parse as numbers.
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 7);
        cols[2].parse::<f64>().unwrap();
    }
}

#[test]
fn empty_sweep_values_is_a_usage_error() {
    let dir = tempdir("sweep-usage");
    let out = run_in(&dir, &["sweep", "--axis", "eta", "--values", "", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempdir("usage");
    let out = run_in(&dir, &["optimize", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_budget_exits_2() {
    let dir = tempdir("infeasible");
    let cfg = write_config(&dir);
    let out = run_in(
        &dir,
        &["optimize", "--config", cfg.to_str().unwrap(), "--e-tot-kj", "0.2", "--out", "x"],
    );
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_config_exits_1() {
    let dir = tempdir("badcfg");
    let path = dir.join("bad.toml");
    std::fs::write(&path, "[scenario]\ntarget = [9999.0, 0.0]\n").unwrap();
    let out = run_in(&dir, &["optimize", "--config", path.to_str().unwrap(), "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_env_var_is_honored() {
    let dir = tempdir("envvar");
    let cfg = write_config(&dir);
    let out = bin()
        .args(["crb-map", "--hover", "700,700", "--hover", "900,700", "--hover", "800,900", "--resolution", "500", "--out", "m"])
        .current_dir(&dir)
        .env("ISAC_SIM_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.join("m/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 3"), "config from env var must be loaded");
}

#[test]
fn crb_map_grid_schema_and_resolution() {
    let dir = tempdir("crbmap");
    let args_base = [
        "crb-map", "--hover", "700,700", "--hover", "900,700", "--hover", "800,900",
    ];
    let out = run_in(&dir, &[&args_base[..], &["--resolution", "500", "--out", "m1"]].concat());
    assert!(out.status.success());
    let csv1 = std::fs::read_to_string(dir.join("m1/crb_map.csv")).unwrap();
    assert!(csv1.starts_with("x,y,crb_sum,singular\n"));
    let rows1 = csv1.lines().count() - 1;
    let out = run_in(&dir, &[&args_base[..], &["--resolution", "250", "--out", "m2"]].concat());
    assert!(out.status.success());
    let rows2 = std::fs::read_to_string(dir.join("m2/crb_map.csv")).unwrap().lines().count() - 1;
    // Halving the resolution quadruples the cells (3x3 -> 6x6 grids here).
    assert_eq!(rows1, 9);
    assert_eq!(rows2, 36);
    assert_eq!(rows2, 4 * rows1);
}

#[test]
fn crb_map_symmetric_config_is_symmetric_and_singular_cells_flagged() {
    let dir = tempdir("crbmap-sym");
    // Cross of hovers around the area center.
    let out = run_in(
        &dir,
        &[
            "crb-map", "--hover", "1050,750", "--hover", "450,750", "--hover", "750,1050",
            "--hover", "750,450", "--resolution", "150", "--out", "m",
        ],
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("m/crb_map.csv")).unwrap();
    let mut grid = std::collections::HashMap::new();
    for line in csv.lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        let x: f64 = c[0].parse().unwrap();
        let y: f64 = c[1].parse().unwrap();
        let v: f64 = c[2].parse().unwrap();
        grid.insert((x as i64, y as i64), v);
    }
    // Mirror symmetry across the center in both axes (cell centers mirror
    // onto cell centers since the resolution divides the area).
    for (&(x, y), &v) in &grid {
        let mx = 1500 - x;
        if let Some(&mv) = grid.get(&(mx, y)) {
            if v > 0.0 && mv > 0.0 {
                assert!((v - mv).abs() <= 1e-9 * v.abs().max(mv.abs()), "asymmetry at ({x},{y})");
            }
        }
        let my = 1500 - y;
        if let Some(&mv) = grid.get(&(x, my)) {
            if v > 0.0 && mv > 0.0 {
                assert!((v - mv).abs() <= 1e-9 * v.abs().max(mv.abs()));
            }
        }
    }
    // The map minimum sits within one cell of the hover centroid.
    let mut cells: Vec<(&(i64, i64), &f64)> = grid.iter().filter(|(_, v)| **v > 0.0).collect();
    cells.sort_by(|a, b| a.0.cmp(b.0));
    let (argmin, _) = cells
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let (ax, ay) = *argmin;
    assert!(
        (ax - 750).abs() <= 150 && (ay - 750).abs() <= 150,
        "map minimum at ({ax},{ay}) is not near the centroid (750,750)"
    );
}

#[test]
fn crb_map_without_hovers_is_usage_error() {
    let dir = tempdir("crbmap-usage");
    let out = run_in(&dir, &["crb-map", "--out", "m"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn crb_map_reads_hovers_from_trajectory_csv() {
    let dir = tempdir("crbmap-file");
    let cfg = write_config(&dir);
    let out = run_in(
        &dir,
        &["optimize", "--config", cfg.to_str().unwrap(), "--e-tot-kj", "15", "--out", "o"],
    );
    assert!(out.status.success());
    let out = run_in(
        &dir,
        &["crb-map", "--hovers", "o/trajectory.csv", "--resolution", "750", "--out", "m"],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let msg = String::from_utf8_lossy(&out.stdout);
    assert!(msg.contains("hover points"), "stdout: {msg}");
}
