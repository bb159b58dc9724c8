//! Per-stage trajectory optimization.
//!
//! Each stage solves a weighted trade-off between the pooled downlink rate
//! and the CRB of the target estimate, subject to speed, area and energy
//! constraints. The non-convex pieces are handled by successive convex
//! approximation: around the current iterate, the induced-power slack
//! constraints are replaced by their first-order lower bounds and the CRB by
//! its gradient model, the resulting convex program is solved by an interior
//! point method, and the true objective is then minimized along the segment
//! from the iterate to the subproblem optimum (the segment is feasible
//! because every constraint of the convexified set is convex and both
//! endpoints satisfy it).

mod newton;
mod subproblem;

pub use newton::{solve_subproblem, Solution, SolveStatus};
pub use subproblem::{build_subproblem, Layout, Subproblem};

use crate::channel::rate_sum;
use crate::crb::crb_sum_multistage;
use crate::energy::{induced_slack, trajectory_energy};
use crate::scenario::Scenario;
use crate::trajectory::{derive_velocities, Trajectory};
use crate::{Error, Point, Result};

/// Step-size grid for the descent-direction search, including both endpoints.
pub const OMEGA_GRID_LEN: usize = 21;

/// Stopping rule for the outer SCA loop.
pub const SCA_REL_TOL: f64 = 1e-4;
pub const SCA_MAX_ITERS: usize = 30;

/// Everything that defines one stage's optimization problem.
#[derive(Debug, Clone)]
pub struct StageProblem {
    /// 1-based stage index.
    pub stage_index: u32,
    /// Waypoints in this stage.
    pub n_wp: usize,
    /// Hovering points in this stage: floor(n_wp / mu).
    pub k_hover: usize,
    /// First segment origin: the previous stage's last waypoint, or the base.
    pub start: Point,
    /// Hover sets of stages 1..m-1 (fixed contributions to the CRB).
    pub prior_hovers: Vec<Vec<Point>>,
    /// Waypoint count of previous stages (rate pooling denominator).
    pub prior_waypoint_count: usize,
    /// Sum of per-waypoint rates over previous stages, bit/s.
    pub prior_rate_sum: f64,
    /// Target estimate the sensing metric is evaluated at.
    pub target_estimate: Point,
    /// Energy available to this stage, J.
    pub e_budget: f64,
    /// Trade-off weight in [0, 1].
    pub eta: f64,
}

impl StageProblem {
    pub fn new(
        stage_index: u32,
        n_wp: usize,
        start: Point,
        target_estimate: Point,
        e_budget: f64,
        eta: f64,
        scenario: &Scenario,
    ) -> Self {
        StageProblem {
            stage_index,
            n_wp,
            k_hover: n_wp / scenario.sys.mu as usize,
            start,
            prior_hovers: Vec::new(),
            prior_waypoint_count: 0,
            prior_rate_sum: 0.0,
            target_estimate,
            e_budget,
            eta,
        }
    }

    /// Hover positions aliased to every mu-th waypoint.
    pub fn hovers_of(&self, waypoints: &[Point], scenario: &Scenario) -> Vec<Point> {
        (1..=self.k_hover)
            .map(|j| waypoints[j * scenario.sys.mu as usize - 1])
            .collect()
    }
}

/// One SCA iterate: stage variables plus the true objective at them.
#[derive(Debug, Clone)]
pub struct StageIterate {
    pub waypoints: Vec<Point>,
    pub velocities: Vec<Point>,
    pub slack_delta: Vec<f64>,
    pub slack_xi: Vec<f64>,
    /// True stage objective `eta * CRB - (1 - eta) * pooled rate`.
    pub objective: f64,
    /// CRB component (None when eta = 0 or the information is singular).
    pub crb: Option<f64>,
    /// Pooled average rate component, bit/s.
    pub rate: f64,
    pub feasible: bool,
}

/// Per-iteration trace record emitted by [`optimize_stage`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub crb: Option<f64>,
    pub rate: f64,
    pub objective: f64,
    pub omega: f64,
    pub solver_status: String,
}

/// Objective normalizer for the rate term: the rate at the best possible
/// UAV position, directly above the user.
pub fn rate_reference(scenario: &Scenario) -> f64 {
    crate::channel::comm_rate(scenario.user, scenario).rate
}

/// True (non-convexified) stage objective at the given waypoints.
///
/// Returns `(objective, crb, rate)` with the rate reported in bit/s; a
/// singular information matrix under `eta > 0` yields an infinite objective.
///
/// Inside the objective the rate enters normalized by its achievable
/// maximum ([`rate_reference`]), making both terms dimensionless: the CRB is
/// a few m^2 while the raw rate is ~1e7 bit/s, and without a common scale
/// the trade-off weight would be numerically inert at every setting except
/// the extremes.
pub fn stage_objective(
    prob: &StageProblem,
    scenario: &Scenario,
    waypoints: &[Point],
) -> (f64, Option<f64>, f64) {
    let n_pool = (prob.prior_waypoint_count + waypoints.len()) as f64;
    let rate = (prob.prior_rate_sum + rate_sum(waypoints, scenario)) / n_pool;
    let rate_obj = rate / rate_reference(scenario);
    // Without a single hovering point anywhere there is nothing to sense:
    // the stage contributes communication only.
    let no_hovers = prob.k_hover == 0 && prob.prior_hovers.iter().all(|h| h.is_empty());
    if prob.eta == 0.0 || no_hovers {
        return (-(1.0 - prob.eta) * rate_obj, None, rate);
    }
    let mut stages = prob.prior_hovers.clone();
    stages.push(prob.hovers_of(waypoints, scenario));
    match crb_sum_multistage(&stages, prob.target_estimate, scenario) {
        Ok(c) => (
            prob.eta * c.crb_sum - (1.0 - prob.eta) * rate_obj,
            Some(c.crb_sum),
            rate,
        ),
        Err(_) => (f64::INFINITY, None, rate),
    }
}

/// Check the original (non-convexified) stage constraints.
pub fn stage_feasible(prob: &StageProblem, scenario: &Scenario, waypoints: &[Point]) -> bool {
    let sys = &scenario.sys;
    let tol = 1e-8;
    let vmax_step = sys.vmax * sys.t_fly;
    let mut prev = prob.start;
    for w in waypoints {
        if w.dist(prev) > vmax_step * (1.0 + tol) {
            return false;
        }
        if w.x < -tol * sys.lx || w.x > sys.lx * (1.0 + tol) || w.y < -tol * sys.ly || w.y > sys.ly * (1.0 + tol) {
            return false;
        }
        prev = *w;
    }
    let traj = stage_trajectory(prob, scenario, waypoints);
    match trajectory_energy(&traj, scenario) {
        Ok(e) => e.total <= prob.e_budget * (1.0 + tol),
        Err(_) => false,
    }
}

/// Trajectory realizing this stage's waypoints with the hover cadence.
pub fn stage_trajectory(prob: &StageProblem, scenario: &Scenario, waypoints: &[Point]) -> Trajectory {
    Trajectory::from_waypoints(
        prob.start,
        waypoints.to_vec(),
        scenario.sys.t_fly,
        scenario.sys.mu,
    )
}

/// Build the canonical iterate for a set of waypoints: velocities from the
/// segment map, slacks tight at the actual speeds, true objective attached.
pub fn canonical_iterate(
    prob: &StageProblem,
    scenario: &Scenario,
    waypoints: Vec<Point>,
) -> StageIterate {
    let velocities = derive_velocities(prob.start, &waypoints, scenario.sys.t_fly);
    let slack_delta: Vec<f64> = velocities
        .iter()
        .map(|v| induced_slack(v.norm(), scenario.energy.v0))
        .collect();
    let slack_xi: Vec<f64> = slack_delta.iter().map(|d| d * d).collect();
    let (objective, crb, rate) = stage_objective(prob, scenario, &waypoints);
    let feasible = stage_feasible(prob, scenario, &waypoints);
    StageIterate {
        waypoints,
        velocities,
        slack_delta,
        slack_xi,
        objective,
        crb,
        rate,
        feasible,
    }
}

/// Straight-line initial iterate: march from the stage start toward the
/// midpoint of the target estimate and the user at the cruise speed, clipped
/// to the area; scale the speed down if the energy budget demands it.
pub fn initial_iterate(prob: &StageProblem, scenario: &Scenario) -> Result<StageIterate> {
    let sys = &scenario.sys;
    let midpoint = (prob.target_estimate + scenario.user) * 0.5;
    let dir = midpoint - prob.start;
    let dist = dir.norm();
    let unit = if dist > 1e-9 { dir * (1.0 / dist) } else { Point::ZERO };

    let waypoints_at = |zeta: f64| -> Vec<Point> {
        (1..=prob.n_wp)
            .map(|i| {
                let p = prob.start + unit * (zeta * sys.v_str * sys.t_fly * i as f64);
                p.clamp_to_area(sys.lx, sys.ly)
            })
            .collect()
    };

    let energy_at = |zeta: f64| -> f64 {
        let traj = stage_trajectory(prob, scenario, &waypoints_at(zeta));
        trajectory_energy(&traj, scenario).expect("constructed trajectory is consistent").total
    };

    let budget = prob.e_budget;
    let mut zeta = 1.0;
    if energy_at(1.0) > budget {
        // Power is not monotone in speed, so scan for the fastest feasible
        // scale; leave a small margin for the interior-point start.
        let target = budget * (1.0 - 1e-6);
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        match grid.iter().rev().find(|&&z| energy_at(z) <= target) {
            Some(&z) => zeta = z,
            None => {
                return Err(Error::Infeasible(format!(
                    "stage {}: even a stationary path costs {:.1} J against a budget of {:.1} J",
                    prob.stage_index,
                    energy_at(0.0),
                    budget
                )))
            }
        }
    }

    let it = canonical_iterate(prob, scenario, waypoints_at(zeta));
    if !it.feasible {
        return Err(Error::Infeasible(format!(
            "stage {}: initial trajectory violates the stage constraints",
            prob.stage_index
        )));
    }
    Ok(it)
}

/// Evaluate the true objective along the segment from `prev` to `opt` on the
/// fixed step grid and return the best point. The same step applies to every
/// variable; `omega = 0` reproduces `prev`, `omega = 1` reproduces `opt`.
pub fn line_search(
    prob: &StageProblem,
    scenario: &Scenario,
    prev: &StageIterate,
    opt: &StageIterate,
) -> (StageIterate, f64) {
    let mut best: Option<(f64, StageIterate)> = None;
    for step in 0..OMEGA_GRID_LEN {
        let omega = step as f64 / (OMEGA_GRID_LEN - 1) as f64;
        let candidate = if step == 0 {
            prev.clone()
        } else if step == OMEGA_GRID_LEN - 1 {
            opt.clone()
        } else {
            interpolate(prob, scenario, prev, opt, omega)
        };
        let better = match &best {
            None => true,
            Some((_, b)) => candidate.objective < b.objective,
        };
        if better {
            best = Some((omega, candidate));
        }
    }
    let (omega, it) = best.expect("omega grid is non-empty");
    (it, omega)
}

fn interpolate(
    prob: &StageProblem,
    scenario: &Scenario,
    a: &StageIterate,
    b: &StageIterate,
    omega: f64,
) -> StageIterate {
    let lerp = |x: f64, y: f64| x + omega * (y - x);
    let waypoints: Vec<Point> = a
        .waypoints
        .iter()
        .zip(&b.waypoints)
        .map(|(p, q)| Point::new(lerp(p.x, q.x), lerp(p.y, q.y)))
        .collect();
    let velocities: Vec<Point> = a
        .velocities
        .iter()
        .zip(&b.velocities)
        .map(|(p, q)| Point::new(lerp(p.x, q.x), lerp(p.y, q.y)))
        .collect();
    let slack_delta: Vec<f64> = a.slack_delta.iter().zip(&b.slack_delta).map(|(x, y)| lerp(*x, *y)).collect();
    let slack_xi: Vec<f64> = a.slack_xi.iter().zip(&b.slack_xi).map(|(x, y)| lerp(*x, *y)).collect();
    let (objective, crb, rate) = stage_objective(prob, scenario, &waypoints);
    let feasible = stage_feasible(prob, scenario, &waypoints);
    StageIterate {
        waypoints,
        velocities,
        slack_delta,
        slack_xi,
        objective,
        crb,
        rate,
        feasible,
    }
}

/// Turn a solver point into a stage iterate (true objective attached).
pub fn iterate_from_solution(
    prob: &StageProblem,
    scenario: &Scenario,
    sub: &Subproblem,
    x: &[f64],
) -> StageIterate {
    let waypoints = sub.waypoints_of(x);
    let velocities = derive_velocities(prob.start, &waypoints, scenario.sys.t_fly);
    let (objective, crb, rate) = stage_objective(prob, scenario, &waypoints);
    let feasible = stage_feasible(prob, scenario, &waypoints);
    StageIterate {
        waypoints,
        velocities,
        slack_delta: sub.deltas_of(x),
        slack_xi: sub.xis_of(x),
        objective,
        crb,
        rate,
        feasible,
    }
}

/// Run the SCA loop from a feasible initial iterate.
///
/// Returns the final iterate and the per-iteration trace; the trace objective
/// is non-increasing by the line-search fallback to `omega = 0`.
pub fn optimize_stage(
    prob: &StageProblem,
    scenario: &Scenario,
    init: StageIterate,
) -> Result<(StageIterate, Vec<IterationRecord>)> {
    let mut current = canonical_iterate(prob, scenario, init.waypoints);
    let mut trace = Vec::new();
    for iteration in 1..=SCA_MAX_ITERS {
        let sub = build_subproblem(prob, scenario, &current.waypoints, &current.slack_delta)?;
        let sol = solve_subproblem(&sub)?;
        let opt = iterate_from_solution(prob, scenario, &sub, &sol.x);
        let (next, omega) = line_search(prob, scenario, &current, &opt);
        trace.push(IterationRecord {
            iteration: iteration as u32,
            crb: next.crb,
            rate: next.rate,
            objective: next.objective,
            omega,
            solver_status: sol.status.as_str().to_string(),
        });
        let prev_obj = current.objective;
        current = canonical_iterate(prob, scenario, next.waypoints);
        let scale = current.objective.abs().max(1.0);
        if (prev_obj - current.objective).abs() <= SCA_REL_TOL * scale {
            break;
        }
    }
    Ok((current, trace))
}
