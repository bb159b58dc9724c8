//! Assembly of the per-iteration convex subproblem.
//!
//! Decision variables are the stage waypoints `s(1..N)` plus the induced-power
//! slacks `delta(1..N)` and `xi(1..N)`; segment velocities are the affine map
//! `v(i) = (s(i) - s(i-1)) / t_fly` and are eliminated. The constraint set is
//!
//! - per-segment speed cap `||v(i)|| <= vmax` (as a squared-norm quadratic),
//! - the area box on every waypoint,
//! - the convex energy budget with the induced term `PI * delta(i)`,
//! - the two first-order lower bounds tying `delta`/`xi` to the velocities
//!   around the expansion point,
//! - sign constraints on `delta` and `xi`.
//!
//! The objective is the linearized sensing metric (gradient of the CRB at the
//! expansion hovers) plus a concave lower bound of the pooled rate: per
//! waypoint, the rate as a function of the squared user distance is convex,
//! so its tangent at the expansion point bounds it globally from below and
//! turns into a positive-coefficient quadratic in the waypoint. Every
//! constraint is scaled to O(1) so feasibility tolerances are meaningful.

use crate::energy::hover_power;
use crate::scenario::Scenario;
use crate::{Error, Point, Result};

use super::StageProblem;

/// Index layout inside the flat variable vector.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub n: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        4 * self.n
    }
    pub fn sx(&self, i: usize) -> usize {
        2 * i
    }
    pub fn sy(&self, i: usize) -> usize {
        2 * i + 1
    }
    pub fn delta(&self, i: usize) -> usize {
        2 * self.n + i
    }
    pub fn xi(&self, i: usize) -> usize {
        3 * self.n + i
    }
}

/// One convexified stage subproblem, frozen at an expansion point.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub layout: Layout,
    /// Hover slots: waypoint indices (0-based) aliased to hovering points.
    pub hover_idx: Vec<usize>,

    // Geometry and limits.
    pub start: Point,
    pub lx: f64,
    pub ly: f64,
    pub vmax: f64,
    pub t_fly: f64,

    // Energy model.
    pub e_budget: f64,
    pub p0: f64,
    pub pi: f64,
    pub u_tip: f64,
    /// `0.5 * d0 * rho * s * A`.
    pub parasite_coeff: f64,
    /// Fixed hover energy `t_hover * K * P(0)`.
    pub hover_energy: f64,
    pub v0: f64,

    // Expansion point (linearization data).
    pub v_bar: Vec<Point>,
    pub delta_bar: Vec<f64>,
    /// Expansion-point variable vector; also the solver warm start.
    pub x_bar: Vec<f64>,

    // Objective pieces (raw, unscaled).
    /// Positive coefficient on `||s(i) - user||^2` from the rate bound.
    pub rate_coeff: Vec<f64>,
    pub user: Point,
    /// `eta`-weighted CRB gradient per hover slot.
    pub crb_grad: Vec<Point>,
    /// Constant completing the objective so it matches the true objective at
    /// the expansion point.
    pub obj_const: f64,

    // Scales.
    pub speed_scale: f64,
    pub e_scale: f64,
    pub tv_scale: f64,
    /// Objective normalization used by the barrier solver.
    pub f_scale: f64,
}

impl Subproblem {
    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// speed(n) + box(4n) + energy(1) + tv(n) + td(n) + dpos(n) + xpos(n)
    pub fn num_constraints(&self) -> usize {
        9 * self.layout.n + 1
    }

    pub fn waypoints_of(&self, x: &[f64]) -> Vec<Point> {
        let l = self.layout;
        (0..l.n).map(|i| Point::new(x[l.sx(i)], x[l.sy(i)])).collect()
    }

    pub fn deltas_of(&self, x: &[f64]) -> Vec<f64> {
        let l = self.layout;
        (0..l.n).map(|i| x[l.delta(i)]).collect()
    }

    pub fn xis_of(&self, x: &[f64]) -> Vec<f64> {
        let l = self.layout;
        (0..l.n).map(|i| x[l.xi(i)]).collect()
    }

    pub fn pack(&self, waypoints: &[Point], deltas: &[f64], xis: &[f64]) -> Vec<f64> {
        let l = self.layout;
        let mut x = vec![0.0; l.dim()];
        for i in 0..l.n {
            x[l.sx(i)] = waypoints[i].x;
            x[l.sy(i)] = waypoints[i].y;
            x[l.delta(i)] = deltas[i];
            x[l.xi(i)] = xis[i];
        }
        x
    }

    fn seg(&self, x: &[f64], i: usize) -> Point {
        let l = self.layout;
        let prev = if i == 0 {
            self.start
        } else {
            Point::new(x[l.sx(i - 1)], x[l.sy(i - 1)])
        };
        Point::new(x[l.sx(i)] - prev.x, x[l.sy(i)] - prev.y)
    }

    /// Modeled energy use of a variable vector (flight + slack + hover).
    pub fn model_energy(&self, x: &[f64]) -> f64 {
        let l = self.layout;
        let mut e = self.hover_energy;
        let tf2 = self.t_fly * self.t_fly;
        for i in 0..l.n {
            let ds = self.seg(x, i);
            let d2 = ds.norm_sq();
            let d3 = d2 * ds.norm();
            e += self.t_fly
                * (self.p0 * (1.0 + 3.0 * d2 / (tf2 * self.u_tip * self.u_tip))
                    + self.parasite_coeff * d3 / (tf2 * self.t_fly)
                    + self.pi * x[l.delta(i)]);
        }
        e
    }

    /// All scaled constraint values; feasible points satisfy `g <= 0`.
    ///
    /// Order: speed(0..n), box(n..5n), energy(5n), tv, td, dpos, xpos.
    /// Delegates to the solver's constraint enumeration so every feasibility
    /// check in the crate sees bit-identical values.
    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        super::newton::constraints_full(self, x, false)
            .into_iter()
            .map(|c| c.g)
            .collect()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraint_values(x).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Raw subproblem objective, constants included: equals the true stage
    /// objective at the expansion point.
    pub fn objective_raw(&self, x: &[f64]) -> f64 {
        let l = self.layout;
        let mut f = self.obj_const;
        for i in 0..l.n {
            let s = Point::new(x[l.sx(i)], x[l.sy(i)]);
            f += self.rate_coeff[i] * s.dist_sq(self.user);
        }
        for (slot, grad) in self.hover_idx.iter().zip(&self.crb_grad) {
            f += grad.x * x[l.sx(*slot)] + grad.y * x[l.sy(*slot)];
        }
        f
    }

    /// Gradient of the raw objective.
    pub fn objective_grad(&self, x: &[f64], out: &mut [f64]) {
        let l = self.layout;
        out.fill(0.0);
        for i in 0..l.n {
            out[l.sx(i)] = 2.0 * self.rate_coeff[i] * (x[l.sx(i)] - self.user.x);
            out[l.sy(i)] = 2.0 * self.rate_coeff[i] * (x[l.sy(i)] - self.user.y);
        }
        for (slot, grad) in self.hover_idx.iter().zip(&self.crb_grad) {
            out[l.sx(*slot)] += grad.x;
            out[l.sy(*slot)] += grad.y;
        }
    }
}

/// Normalized rate as a function of the squared slant distance, with its
/// derivative: the convex function whose tangent bounds the rate from below.
/// `norm` is the objective normalizer of `stage_objective`.
fn rate_of_zsq(z: f64, gamma: f64, bandwidth: f64, norm: f64) -> (f64, f64) {
    let rate = bandwidth * (1.0 + gamma / z).log2() / norm;
    let drate = -bandwidth * gamma / (std::f64::consts::LN_2 * z * (z + gamma)) / norm;
    (rate, drate)
}

/// Build the convex subproblem around a feasible expansion point.
pub fn build_subproblem(
    prob: &StageProblem,
    scenario: &Scenario,
    waypoints: &[Point],
    deltas: &[f64],
) -> Result<Subproblem> {
    let n = prob.n_wp;
    assert_eq!(waypoints.len(), n);
    assert_eq!(deltas.len(), n);
    let sys = &scenario.sys;
    let en = &scenario.energy;
    let layout = Layout { n };

    let hover_energy = sys.t_hover * prob.k_hover as f64 * hover_power(en);
    if hover_energy >= prob.e_budget {
        return Err(Error::Infeasible(format!(
            "stage {} hover cost {:.1} J exceeds energy budget {:.1} J",
            prob.stage_index, hover_energy, prob.e_budget
        )));
    }

    let hover_idx: Vec<usize> = (1..=prob.k_hover).map(|j| j * sys.mu as usize - 1).collect();

    let v_bar = crate::trajectory::derive_velocities(prob.start, waypoints, sys.t_fly);

    // Rate tangent at the expansion waypoints.
    let gamma = sys.tx_power * sys.alpha0 / sys.noise_power();
    let h2 = sys.altitude * sys.altitude;
    let n_pool = (prob.prior_waypoint_count + n) as f64;
    let comm_weight = (1.0 - prob.eta) / n_pool;
    let rate_norm = super::rate_reference(scenario);
    let mut rate_coeff = vec![0.0; n];
    let mut obj_const = -comm_weight * prob.prior_rate_sum / rate_norm;
    if prob.eta < 1.0 {
        for i in 0..n {
            let zbar = h2 + waypoints[i].dist_sq(scenario.user);
            let (r, dr) = rate_of_zsq(zbar, gamma, sys.bandwidth, rate_norm);
            // -(1-eta)/n_pool * [r + dr * (h2 + ||s-u||^2 - zbar)]
            rate_coeff[i] = -comm_weight * dr;
            obj_const += -comm_weight * (r + dr * (h2 - zbar));
        }
    }

    // Linearized sensing metric at the expansion hovers. A stage with no
    // hovering point anywhere has no sensing term (communication only).
    let mut crb_grad = vec![Point::ZERO; prob.k_hover];
    let any_hover = prob.k_hover > 0 || prob.prior_hovers.iter().any(|h| !h.is_empty());
    if prob.eta > 0.0 && any_hover {
        let hovers: Vec<Point> = hover_idx.iter().map(|&i| waypoints[i]).collect();
        let fixed: Vec<Point> = prob.prior_hovers.iter().flatten().copied().collect();
        let (grads, crb) = crate::crb::crb_gradient(&fixed, &hovers, prob.target_estimate, scenario)
            .map_err(|e| Error::SolverFailure(format!(
                "cannot linearize sensing metric at stage {} expansion point: {e}",
                prob.stage_index
            )))?;
        let mut lin_at_bar = 0.0;
        for (g, h) in grads.iter().zip(&hovers) {
            lin_at_bar += g.x * h.x + g.y * h.y;
        }
        obj_const += prob.eta * (crb.crb_sum - lin_at_bar);
        crb_grad = grads.into_iter().map(|g| g * prob.eta).collect();
    }

    let x_bar = {
        let xis: Vec<f64> = deltas.iter().map(|d| d * d).collect();
        let mut x = vec![0.0; layout.dim()];
        for i in 0..n {
            x[layout.sx(i)] = waypoints[i].x;
            x[layout.sy(i)] = waypoints[i].y;
            x[layout.delta(i)] = deltas[i];
            x[layout.xi(i)] = xis[i];
        }
        x
    };

    let mut sub = Subproblem {
        layout,
        hover_idx,
        start: prob.start,
        lx: sys.lx,
        ly: sys.ly,
        vmax: sys.vmax,
        t_fly: sys.t_fly,
        e_budget: prob.e_budget,
        p0: en.p0,
        pi: en.pi,
        u_tip: en.u_tip,
        parasite_coeff: 0.5 * en.d0 * en.rho * en.s * en.area_a,
        hover_energy,
        v0: en.v0,
        v_bar,
        delta_bar: deltas.to_vec(),
        x_bar,
        rate_coeff,
        user: scenario.user,
        crb_grad,
        obj_const,
        speed_scale: (sys.vmax * sys.t_fly) * (sys.vmax * sys.t_fly),
        e_scale: prob.e_budget.max(1.0),
        tv_scale: sys.vmax * sys.vmax / (en.v0 * en.v0),
        f_scale: 1.0,
    };

    // Objective normalization: largest gradient entry times the characteristic
    // variable range, so the scaled objective changes O(1) per step.
    let mut grad = vec![0.0; sub.dim()];
    sub.objective_grad(&sub.x_bar, &mut grad);
    let step = sys.vmax * sys.t_fly;
    let mut f_scale = 0.0f64;
    for i in 0..n {
        f_scale = f_scale
            .max(grad[layout.sx(i)].abs() * step)
            .max(grad[layout.sy(i)].abs() * step);
    }
    sub.f_scale = f_scale.max(1e-9);
    Ok(sub)
}
