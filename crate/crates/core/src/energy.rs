//! Rotary-wing propulsion power and trajectory energy accounting.
//!
//! Propulsion power at speed `V` is the sum of a blade profile term
//! `P0 (1 + 3V^2/Utip^2)`, an induced term `PI * delta(V)` with
//! `delta(V) = (sqrt(1 + V^4/(4 v0^4)) - V^2/(2 v0^2))^(1/2)`, and a parasite
//! term `0.5 D0 rho s A V^3`. A trajectory costs `t_fly * P(V)` per segment
//! plus `t_hover * P(0)` per sensing hover.

use crate::scenario::{EnergyParams, Scenario};
use crate::trajectory::Trajectory;
use crate::{Error, Result};

/// Energy split of one flown trajectory, all in J.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EnergyBreakdown {
    /// Blade profile energy over flight segments.
    pub blade_profile: f64,
    /// Induced energy over flight segments.
    pub induced: f64,
    /// Parasite (fuselage drag) energy over flight segments.
    pub parasite: f64,
    /// Energy spent hovering for sensing.
    pub hover: f64,
    pub total: f64,
}

/// The induced-power slack `delta(V)`; equals 1 at `V = 0` and satisfies
/// `1/delta^2 - delta^2 = V^2/v0^2`.
pub fn induced_slack(speed: f64, v0: f64) -> f64 {
    let q = speed * speed / (2.0 * v0 * v0);
    ((1.0 + q * q).sqrt() - q).sqrt()
}

/// Propulsion power at the given speed.
pub fn propulsion_power(speed: f64, params: &EnergyParams) -> Result<f64> {
    if speed.is_nan() || speed < 0.0 {
        return Err(Error::NegativeSpeed(speed));
    }
    Ok(power(speed, params))
}

/// Hover power `P(0) = P0 + PI`.
pub fn hover_power(params: &EnergyParams) -> f64 {
    params.p0 + params.pi
}

pub(crate) fn power(speed: f64, p: &EnergyParams) -> f64 {
    let v2 = speed * speed;
    let blade = p.p0 * (1.0 + 3.0 * v2 / (p.u_tip * p.u_tip));
    let induced = p.pi * induced_slack(speed, p.v0);
    let parasite = 0.5 * p.d0 * p.rho * p.s * p.area_a * v2 * speed;
    blade + induced + parasite
}

/// Energy of one trajectory: flight segments at segment-average speed plus
/// hover stops.
pub fn trajectory_energy(traj: &Trajectory, scenario: &Scenario) -> Result<EnergyBreakdown> {
    traj.validate()?;
    let p = &scenario.energy;
    let tf = scenario.sys.t_fly;
    let th = scenario.sys.t_hover;

    let mut blade = 0.0;
    let mut induced = 0.0;
    let mut parasite = 0.0;
    for v in &traj.velocities {
        let speed = v.norm();
        let v2 = speed * speed;
        blade += tf * p.p0 * (1.0 + 3.0 * v2 / (p.u_tip * p.u_tip));
        induced += tf * p.pi * induced_slack(speed, p.v0);
        parasite += tf * 0.5 * p.d0 * p.rho * p.s * p.area_a * v2 * speed;
    }
    let hover = th * hover_power(p) * traj.hover_total() as f64;
    Ok(EnergyBreakdown {
        blade_profile: blade,
        induced,
        parasite,
        hover,
        total: blade + induced + parasite + hover,
    })
}

/// Per-waypoint cost of a straight cruise at `v_str`, counting the hover at
/// every `mu`-th waypoint: the budget model behind stage sizing.
fn straight_cost(n: u64, scenario: &Scenario) -> f64 {
    let k = n / scenario.sys.mu as u64;
    n as f64 * scenario.sys.t_fly * power(scenario.sys.v_str, &scenario.energy)
        + k as f64 * scenario.sys.t_hover * hover_power(&scenario.energy)
}

/// Largest waypoint count (and its hover count) whose straight-cruise cost
/// fits the remaining energy. Returns `(0, 0)` when the budget is too small
/// for a single segment.
pub fn max_waypoints_for_energy(e_remaining: f64, scenario: &Scenario) -> (u32, u32) {
    if e_remaining <= 0.0 {
        return (0, 0);
    }
    let mut n: u64 = 0;
    while straight_cost(n + 1, scenario) <= e_remaining {
        n += 1;
        if n > 10_000_000 {
            break; // budget effectively unbounded for this model
        }
    }
    (n as u32, (n / scenario.sys.mu as u64) as u32)
}

/// Energy needed to fly one more full stage of `n_stg` waypoints at the
/// straight-cruise budget model: the loop guard of the multi-stage protocol.
pub fn min_stage_energy(n_stg: u32, scenario: &Scenario) -> f64 {
    straight_cost(n_stg as u64, scenario)
}
