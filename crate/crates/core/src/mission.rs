//! The multi-stage fly/measure/re-estimate protocol and baseline strategies.
//!
//! A mission starts from a coarse target estimate. Each stage optimizes its
//! trajectory against the current estimate (weighted CRB/rate trade-off over
//! everything flown so far), the UAV flies it and collects one range
//! measurement per hovering point, and the maximum-likelihood estimate is
//! refreshed from all measurements before the next stage is planned. Full
//! stages of `n_stg` waypoints repeat while the remaining energy exceeds the
//! straight-cruise cost of one more stage; the leftover budget buys a final
//! partial stage. Baselines: designing every waypoint at once against the
//! initial estimate (`one-stage`), flying straight to the estimate/user
//! midpoint and hovering there until the energy runs out (`straight`), and
//! the trade-off extremes (`comm-only`, `sense-only`).

use crate::channel::rate_sum;
use crate::crb::crb_sum;
use crate::energy::{hover_power, max_waypoints_for_energy, min_stage_energy, power, trajectory_energy};
use crate::estimator::{
    ideal_measurement, mle_estimate, simulate_measurement, MeasurementSet, MleOptions,
};
use crate::scenario::{new_rng, ExperimentConfig, InitialEstimate, Scenario, Strategy};
use crate::sca::{
    initial_iterate, optimize_stage, stage_trajectory, IterationRecord, StageProblem,
};
use crate::trajectory::Trajectory;
use crate::{Error, Point, Result};
use rayon::prelude::*;

/// Mission-level knobs (a subset of [`ExperimentConfig`] plus a stream label).
#[derive(Debug, Clone)]
pub struct MissionOptions {
    pub eta: f64,
    pub n_stg: u32,
    /// Fixed total waypoint budget; `None` lets the energy decide.
    pub n_tot: Option<u32>,
    pub strategy: Strategy,
    pub initial_estimate: InitialEstimate,
    pub mle_fixed_variance: bool,
    pub noiseless: bool,
    /// RNG stream namespace; distinct labels give independent missions.
    pub run_label: String,
}

impl MissionOptions {
    pub fn from_experiment(exp: &ExperimentConfig) -> Self {
        MissionOptions {
            eta: exp.eta,
            n_stg: exp.n_stg,
            n_tot: exp.n_tot,
            strategy: exp.strategy,
            initial_estimate: exp.initial_estimate,
            mle_fixed_variance: exp.mle_fixed_variance,
            noiseless: exp.noiseless,
            run_label: "mission".to_string(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.run_label = label.into();
        self
    }
}

/// Per-stage bookkeeping of one executed mission.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StageSummary {
    pub stage: u32,
    pub n_wp: u32,
    pub k_hover: u32,
    pub energy_spent: f64,
    pub energy_remaining: f64,
    /// Estimate after this stage's measurements were folded in.
    pub estimate: Point,
    /// CRB at that estimate over all hovers so far (None if singular).
    pub crb_believed: Option<f64>,
    /// Pooled average rate through this stage, bit/s.
    pub rate_pooled: f64,
    pub sca_iterations: u32,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EnergyLedger {
    pub budget: f64,
    pub spent: f64,
    pub flight: f64,
    pub hover: f64,
}

/// Outcome of one mission realization.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MissionReport {
    pub strategy: Strategy,
    pub eta: f64,
    pub seed: u64,
    pub n_tot: u32,
    pub k_tot: u32,
    pub stage_count: u32,
    pub final_estimate: Point,
    /// Squared error of the final estimate against the true target, m^2.
    pub sq_error: f64,
    /// Pooled average downlink rate over the executed waypoints, bit/s.
    pub avg_rate: f64,
    /// CRB at the true target over the executed hover geometry.
    pub crb_true: Option<f64>,
    /// CRB at the final estimate.
    pub crb_believed: Option<f64>,
    pub energy: EnergyLedger,
    pub stages: Vec<StageSummary>,
    pub trajectory: Trajectory,
    pub measurements: MeasurementSet,
    /// Per-stage optimizer traces.
    pub traces: Vec<Vec<IterationRecord>>,
}

/// Run one mission realization.
pub fn run_mission(scenario: &Scenario, opts: &MissionOptions) -> Result<MissionReport> {
    match opts.strategy {
        Strategy::MultiStage => protocol_mission(scenario, opts, opts.eta),
        Strategy::CommOnly => protocol_mission(scenario, opts, 0.0),
        Strategy::SenseOnly => protocol_mission(scenario, opts, 1.0),
        Strategy::OneStage => one_stage_mission(scenario, opts),
        Strategy::Straight => straight_mission(scenario, opts),
    }
}

struct MissionState {
    estimate: Point,
    e_remaining: f64,
    start: Point,
    prior_hovers: Vec<Vec<Point>>,
    prior_waypoints: usize,
    prior_rate_sum: f64,
    trajectory: Option<Trajectory>,
    measurements: MeasurementSet,
    stages: Vec<StageSummary>,
    traces: Vec<Vec<IterationRecord>>,
}

impl MissionState {
    fn new(scenario: &Scenario, estimate: Point) -> Self {
        MissionState {
            estimate,
            e_remaining: scenario.energy.e_tot,
            start: scenario.base,
            prior_hovers: Vec::new(),
            prior_waypoints: 0,
            prior_rate_sum: 0.0,
            trajectory: None,
            measurements: MeasurementSet::new(),
            stages: Vec::new(),
            traces: Vec::new(),
        }
    }

    /// Optimize, fly and measure one stage; update the estimate.
    #[allow(clippy::too_many_arguments)]
    fn run_stage(
        &mut self,
        scenario: &Scenario,
        opts: &MissionOptions,
        stage_index: u32,
        n_wp: usize,
        eta: f64,
        update_estimate: bool,
        e_reserve: f64,
    ) -> Result<()> {
        let prob = StageProblem {
            stage_index,
            n_wp,
            k_hover: n_wp / scenario.sys.mu as usize,
            start: self.start,
            prior_hovers: self.prior_hovers.clone(),
            prior_waypoint_count: self.prior_waypoints,
            prior_rate_sum: self.prior_rate_sum,
            target_estimate: self.estimate,
            e_budget: self.e_remaining - e_reserve,
            eta,
        };
        let init = initial_iterate(&prob, scenario)?;
        let (it, trace) = optimize_stage(&prob, scenario, init)?;
        let traj = stage_trajectory(&prob, scenario, &it.waypoints);
        let spent = trajectory_energy(&traj, scenario)?.total;

        // Collect one measurement per hover.
        let hovers = prob.hovers_of(&it.waypoints, scenario);
        let mut rng = new_rng(
            scenario.seed,
            &format!("{}/stage{}", opts.run_label, stage_index),
        );
        for (j, &h) in hovers.iter().enumerate() {
            let m = if opts.noiseless {
                ideal_measurement(stage_index, j as u32 + 1, h, scenario)
            } else {
                simulate_measurement(stage_index, j as u32 + 1, h, scenario, &mut rng)
            };
            self.measurements.push(m);
        }

        if update_estimate && !self.measurements.is_empty() {
            let mle_opts = MleOptions { fixed_variance: opts.mle_fixed_variance };
            if let Ok(rep) = mle_estimate(&self.measurements, scenario, mle_opts) {
                if !rep.ambiguous {
                    self.estimate = rep.estimate;
                }
                // Ambiguous geometry: keep the previous estimate.
            }
        }

        self.e_remaining -= spent;
        self.start = traj.last_waypoint().unwrap_or(self.start);
        self.prior_rate_sum += rate_sum(&it.waypoints, scenario);
        self.prior_waypoints += n_wp;
        self.prior_hovers.push(hovers);
        match &mut self.trajectory {
            Some(t) => t.extend(&traj)?,
            None => self.trajectory = Some(traj),
        }
        let all_hover_events: Vec<Point> = self.prior_hovers.iter().flatten().copied().collect();
        self.stages.push(StageSummary {
            stage: stage_index,
            n_wp: n_wp as u32,
            k_hover: prob.k_hover as u32,
            energy_spent: spent,
            energy_remaining: self.e_remaining,
            estimate: self.estimate,
            crb_believed: crb_sum(&all_hover_events, self.estimate, scenario)
                .ok()
                .map(|c| c.crb_sum),
            rate_pooled: self.prior_rate_sum / self.prior_waypoints as f64,
            sca_iterations: trace.len() as u32,
        });
        self.traces.push(trace);
        Ok(())
    }

    fn into_report(
        self,
        scenario: &Scenario,
        opts: &MissionOptions,
        eta: f64,
    ) -> Result<MissionReport> {
        let trajectory = self.trajectory.ok_or_else(|| {
            Error::Infeasible("mission produced no trajectory (no affordable stage)".into())
        })?;
        let energy = trajectory_energy(&trajectory, scenario)?;
        debug_assert!(
            energy.total <= scenario.energy.e_tot * (1.0 + 1e-6),
            "executed energy {} J exceeds the budget {} J",
            energy.total,
            scenario.energy.e_tot
        );
        let hover_events = trajectory.hover_points();
        let waypoints = &trajectory.waypoints;
        let avg_rate = rate_sum(waypoints, scenario) / waypoints.len() as f64;
        Ok(MissionReport {
            strategy: opts.strategy,
            eta,
            seed: scenario.seed,
            n_tot: waypoints.len() as u32,
            k_tot: trajectory.hover_total(),
            stage_count: self.stages.len() as u32,
            final_estimate: self.estimate,
            sq_error: self.estimate.dist_sq(scenario.target_true),
            avg_rate,
            crb_true: crb_sum(&hover_events, scenario.target_true, scenario)
                .ok()
                .map(|c| c.crb_sum),
            crb_believed: crb_sum(&hover_events, self.estimate, scenario)
                .ok()
                .map(|c| c.crb_sum),
            energy: EnergyLedger {
                budget: scenario.energy.e_tot,
                spent: energy.total,
                flight: energy.total - energy.hover,
                hover: energy.hover,
            },
            stages: self.stages,
            trajectory,
            measurements: self.measurements,
            traces: self.traces,
        })
    }
}

/// The staged protocol: full stages while the energy guard allows, then the
/// final partial stage sized by the remaining budget (or by the fixed total
/// waypoint count when one is given).
/// Energy to reserve for `remaining` not-yet-designed waypoints: the cost of
/// parking through them (the cheapest way to complete the waypoint budget).
fn stationary_reserve(remaining: usize, scenario: &Scenario) -> f64 {
    if remaining == 0 {
        return 0.0;
    }
    let hovers = remaining / scenario.sys.mu as usize;
    let p_hover = hover_power(&scenario.energy);
    (remaining as f64 * scenario.sys.t_fly * p_hover
        + hovers as f64 * scenario.sys.t_hover * p_hover)
        * 1.001
}

fn protocol_mission(scenario: &Scenario, opts: &MissionOptions, eta: f64) -> Result<MissionReport> {
    let mut st = MissionState::new(scenario, opts.initial_estimate.resolve(scenario));
    let e_min = min_stage_energy(opts.n_stg, scenario);
    let mut stage_index = 1u32;
    loop {
        let n_wp = match opts.n_tot {
            Some(total) => {
                let remaining = total as usize - st.prior_waypoints;
                if remaining == 0 {
                    break;
                }
                remaining.min(opts.n_stg as usize)
            }
            None => {
                if st.e_remaining > e_min {
                    opts.n_stg as usize
                } else {
                    // Final partial stage from the leftover budget.
                    let (n_lst, _) = max_waypoints_for_energy(st.e_remaining, scenario);
                    if n_lst == 0 {
                        break;
                    }
                    n_lst as usize
                }
            }
        };
        let is_final = match opts.n_tot {
            Some(total) => st.prior_waypoints + n_wp >= total as usize,
            None => st.e_remaining <= e_min,
        };
        // With a fixed waypoint budget, keep enough energy back for the
        // waypoints that still have to be flown after this stage.
        let reserve = match opts.n_tot {
            Some(total) => {
                stationary_reserve(total as usize - st.prior_waypoints - n_wp, scenario)
            }
            None => 0.0,
        };
        st.run_stage(scenario, opts, stage_index, n_wp, eta, true, reserve)?;
        if is_final {
            break;
        }
        stage_index += 1;
    }
    st.into_report(scenario, opts, eta)
}

/// All waypoints designed at once against the initial estimate; no estimate
/// refresh between measurements.
fn one_stage_mission(scenario: &Scenario, opts: &MissionOptions) -> Result<MissionReport> {
    let n_tot = match opts.n_tot {
        Some(t) => t as usize,
        None => max_waypoints_for_energy(scenario.energy.e_tot, scenario).0 as usize,
    };
    if n_tot == 0 {
        return Err(Error::Infeasible(
            "energy budget does not afford a single waypoint".into(),
        ));
    }
    let mut st = MissionState::new(scenario, opts.initial_estimate.resolve(scenario));
    st.run_stage(scenario, opts, 1, n_tot, opts.eta, false, 0.0)?;
    // A single MLE from the complete measurement set.
    if !st.measurements.is_empty() {
        let mle_opts = MleOptions { fixed_variance: opts.mle_fixed_variance };
        if let Ok(rep) = mle_estimate(&st.measurements, scenario, mle_opts) {
            if !rep.ambiguous {
                st.estimate = rep.estimate;
            }
        }
    }
    if let Some(s) = st.stages.last_mut() {
        s.estimate = st.estimate;
    }
    st.into_report(scenario, opts, opts.eta)
}

/// Fly straight to the user/initial-estimate midpoint at the cruise speed,
/// then hover there, one sensing stop after another, until the energy runs
/// out.
fn straight_mission(scenario: &Scenario, opts: &MissionOptions) -> Result<MissionReport> {
    let sys = &scenario.sys;
    let est0 = opts.initial_estimate.resolve(scenario);
    let midpoint = ((est0 + scenario.user) * 0.5).clamp_to_area(sys.lx, sys.ly);
    let mut e_rem = scenario.energy.e_tot;
    let step = sys.v_str * sys.t_fly;

    let mut waypoints = Vec::new();
    let mut velocities = Vec::new();
    let mut pos = scenario.base;
    loop {
        let left = midpoint.dist(pos);
        if left < 1e-9 {
            break;
        }
        let (next, speed) = if left >= step {
            (pos + (midpoint - pos) * (step / left), sys.v_str)
        } else {
            (midpoint, left / sys.t_fly)
        };
        let cost = sys.t_fly * power(speed, &scenario.energy);
        if cost > e_rem {
            break;
        }
        velocities.push((next - pos) * (1.0 / sys.t_fly));
        waypoints.push(next);
        pos = next;
        e_rem -= cost;
    }
    if waypoints.is_empty() {
        // Already at the midpoint (or nothing affordable): park in place.
        let cost = sys.t_fly * hover_power(&scenario.energy);
        if cost > e_rem {
            return Err(Error::Infeasible(
                "energy budget does not afford a single waypoint".into(),
            ));
        }
        waypoints.push(pos);
        velocities.push(Point::ZERO);
        e_rem -= cost;
    }

    let hover_cost = sys.t_hover * hover_power(&scenario.energy);
    let n_hover = (e_rem / hover_cost).floor() as u32;
    let mut hover_counts = vec![0u32; waypoints.len()];
    *hover_counts.last_mut().unwrap() = n_hover;

    let trajectory = Trajectory {
        start: scenario.base,
        waypoints,
        velocities,
        hover_counts,
    };

    let mut st = MissionState::new(scenario, est0);
    let hover_at = trajectory.last_waypoint().unwrap();
    let mut rng = new_rng(scenario.seed, &format!("{}/stage1", opts.run_label));
    for j in 0..n_hover {
        let m = if opts.noiseless {
            ideal_measurement(1, j + 1, hover_at, scenario)
        } else {
            simulate_measurement(1, j + 1, hover_at, scenario, &mut rng)
        };
        st.measurements.push(m);
    }
    if !st.measurements.is_empty() {
        let mle_opts = MleOptions { fixed_variance: opts.mle_fixed_variance };
        if let Ok(rep) = mle_estimate(&st.measurements, scenario, mle_opts) {
            if !rep.ambiguous {
                st.estimate = rep.estimate;
            }
        }
    }
    let spent = trajectory_energy(&trajectory, scenario)?.total;
    st.e_remaining -= spent;
    st.prior_waypoints = trajectory.len();
    st.prior_rate_sum = rate_sum(&trajectory.waypoints, scenario);
    st.prior_hovers = vec![trajectory.hover_points()];
    st.stages.push(StageSummary {
        stage: 1,
        n_wp: trajectory.len() as u32,
        k_hover: n_hover,
        energy_spent: spent,
        energy_remaining: st.e_remaining,
        estimate: st.estimate,
        crb_believed: crb_sum(&trajectory.hover_points(), st.estimate, scenario)
            .ok()
            .map(|c| c.crb_sum),
        rate_pooled: st.prior_rate_sum / trajectory.len() as f64,
        sca_iterations: 0,
    });
    st.traces.push(Vec::new());
    st.trajectory = Some(trajectory);
    st.into_report(scenario, opts, opts.eta)
}

/// One row of a strategy/parameter comparison.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StrategyStats {
    pub strategy: Strategy,
    pub eta: f64,
    pub e_tot: f64,
    pub runs: u32,
    /// Monte-Carlo mean squared estimation error, m^2.
    pub mse: f64,
    /// Median CRB at the true target over runs (median: a single degenerate
    /// geometry would otherwise poison the mean with an infinity).
    pub crb_true: f64,
    pub avg_rate: f64,
    pub hover_count: f64,
    pub runtime_s: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    if v.is_empty() {
        return f64::NAN;
    }
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn compensated_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut count = 0usize;
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
        count += 1;
    }
    (sum + comp) / count as f64
}

/// Monte-Carlo statistics of one mission configuration; runs execute in
/// parallel on independent derived streams and aggregate in run order.
pub fn mission_stats(
    scenario: &Scenario,
    opts: &MissionOptions,
    runs: u32,
    label: &str,
) -> Result<StrategyStats> {
    let started = std::time::Instant::now();
    let reports: Vec<Result<MissionReport>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let o = opts.clone().with_label(format!("{label}/run{run}"));
            run_mission(scenario, &o)
        })
        .collect();
    let mut sq = Vec::with_capacity(runs as usize);
    let mut crb = Vec::with_capacity(runs as usize);
    let mut rate = Vec::with_capacity(runs as usize);
    let mut hovers = Vec::with_capacity(runs as usize);
    for r in reports {
        let r = r?;
        sq.push(r.sq_error);
        crb.push(r.crb_true.unwrap_or(f64::INFINITY));
        rate.push(r.avg_rate);
        hovers.push(r.k_tot as f64);
    }
    Ok(StrategyStats {
        strategy: opts.strategy,
        eta: opts.eta,
        e_tot: scenario.energy.e_tot,
        runs,
        mse: compensated_mean(sq.into_iter()),
        crb_true: median(crb),
        avg_rate: compensated_mean(rate.into_iter()),
        hover_count: compensated_mean(hovers.into_iter()),
        runtime_s: started.elapsed().as_secs_f64(),
    })
}

/// Monte-Carlo comparison across strategies, trade-off weights and energy
/// budgets; deterministic given the scenario seed.
pub fn compare_strategies(
    scenario: &Scenario,
    base: &MissionOptions,
    strategies: &[Strategy],
    eta_list: &[f64],
    e_tot_list: &[f64],
    runs: u32,
) -> Result<Vec<StrategyStats>> {
    if strategies.is_empty() || eta_list.is_empty() || e_tot_list.is_empty() {
        return Err(Error::InvalidArgument(
            "strategy, eta and e_tot lists must be non-empty".into(),
        ));
    }
    let mut rows = Vec::new();
    for &e_tot in e_tot_list {
        let mut sc = scenario.clone();
        sc.energy.e_tot = e_tot;
        for &strategy in strategies {
            // The trade-off weight only matters for strategies that use it.
            let etas: &[f64] = match strategy {
                Strategy::MultiStage | Strategy::OneStage => eta_list,
                _ => &[base.eta],
            };
            for &eta in etas {
                let mut opts = base.clone();
                opts.strategy = strategy;
                opts.eta = eta;
                let label = format!("cmp/{}/{eta}/{e_tot}", strategy.as_str());
                rows.push(mission_stats(&sc, &opts, runs, &label)?);
            }
        }
    }
    Ok(rows)
}
