//! Log-barrier interior-point solver for the stage subproblem.
//!
//! Standard two-phase scheme: a damped-Newton centering loop on
//! `t * f(x) + sum_i -ln(-g_i(x))` with a geometric `t` schedule, preceded by
//! a phase-I solve `min w  s.t.  g_i(x) <= w` whenever the warm start is not
//! strictly interior (the expansion point usually sits on the slack-equality
//! boundary). All `g_i` are pre-scaled to O(1) by the subproblem, so the
//! feasibility margin and duality-gap targets below are meaningful across
//! problem sizes.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::subproblem::Subproblem;
use crate::{Error, Result};

/// Duality-gap target (scaled objective units): m / t_final. The objective
/// scale normalization makes this far tighter than the 1e-6 relative
/// objective tolerance the callers need.
const GAP_TOL: f64 = 1e-6;
/// Newton decrement threshold for a centering round.
const CENTER_TOL: f64 = 1e-10;
/// Barrier parameter multiplier.
const T_MULT: f64 = 20.0;
/// Newton steps allowed in one centering round; a round that has not
/// centered by then is numerically wedged and the loop moves on.
const ROUND_CAP: usize = 80;
/// Total Newton step budget across all centering rounds.
const NEWTON_BUDGET: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// Step budget ran out; the returned point is feasible but may miss the
    /// stated objective tolerance.
    MaxIterations,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub objective_raw: f64,
}

/// One constraint as (value, sparse gradient, sparse Hessian lower data).
pub(super) struct ConstraintData {
    pub(super) g: f64,
    grad: Vec<(usize, f64)>,
    hess: Vec<(usize, usize, f64)>,
}

/// Enumerate every scaled constraint with first/second derivatives.
///
/// This is the solver's single source of constraint values: the backtracking
/// value path reuses the same `g` computation (`with_derivs = false` skips
/// the derivative fill), because an ulp-level disagreement between two
/// independent evaluations is enough to flip feasibility right on the
/// central path at large barrier parameters.
pub(super) fn constraints_full(sub: &Subproblem, x: &[f64], with_derivs: bool) -> Vec<ConstraintData> {
    let l = sub.layout;
    let n = l.n;
    let mut out = Vec::with_capacity(sub.num_constraints());

    // Speed cones: ||s_i - s_{i-1}||^2 / S - 1.
    let s = sub.speed_scale;
    for i in 0..n {
        let (px, py) = if i == 0 {
            (sub.start.x, sub.start.y)
        } else {
            (x[l.sx(i - 1)], x[l.sy(i - 1)])
        };
        let dx = x[l.sx(i)] - px;
        let dy = x[l.sy(i)] - py;
        let g = (dx * dx + dy * dy) / s - 1.0;
        let mut grad = Vec::new();
        let mut hess = Vec::new();
        if with_derivs {
            grad.push((l.sx(i), 2.0 * dx / s));
            grad.push((l.sy(i), 2.0 * dy / s));
            hess.push((l.sx(i), l.sx(i), 2.0 / s));
            hess.push((l.sy(i), l.sy(i), 2.0 / s));
            if i > 0 {
                grad.push((l.sx(i - 1), -2.0 * dx / s));
                grad.push((l.sy(i - 1), -2.0 * dy / s));
                hess.push((l.sx(i - 1), l.sx(i - 1), 2.0 / s));
                hess.push((l.sy(i - 1), l.sy(i - 1), 2.0 / s));
                hess.push((l.sx(i), l.sx(i - 1), -2.0 / s));
                hess.push((l.sx(i - 1), l.sx(i), -2.0 / s));
                hess.push((l.sy(i), l.sy(i - 1), -2.0 / s));
                hess.push((l.sy(i - 1), l.sy(i), -2.0 / s));
            }
        }
        out.push(ConstraintData { g, grad, hess });
    }

    // Area box.
    for i in 0..n {
        for (idx, lim) in [(l.sx(i), sub.lx), (l.sy(i), sub.ly)] {
            let dgrad = |v: f64| if with_derivs { vec![(idx, v)] } else { Vec::new() };
            out.push(ConstraintData {
                g: -x[idx] / lim,
                grad: dgrad(-1.0 / lim),
                hess: vec![],
            });
            out.push(ConstraintData {
                g: (x[idx] - lim) / lim,
                grad: dgrad(1.0 / lim),
                hess: vec![],
            });
        }
    }

    // Energy budget.
    {
        let es = sub.e_scale;
        let tf = sub.t_fly;
        let blade_c = 6.0 * sub.p0 / (tf * sub.u_tip * sub.u_tip);
        let para_c = 3.0 * sub.parasite_coeff / (tf * tf);
        let mut grad = Vec::with_capacity(3 * n + 2);
        let mut hess = Vec::with_capacity(12 * n);
        let mut e = sub.hover_energy;
        let mut grad_s = vec![(0.0, 0.0); n + 1]; // accumulated on s_0..s_n (s_0 = start, dropped)
        for i in 0..n {
            let (px, py) = if i == 0 {
                (sub.start.x, sub.start.y)
            } else {
                (x[l.sx(i - 1)], x[l.sy(i - 1)])
            };
            let dx = x[l.sx(i)] - px;
            let dy = x[l.sy(i)] - py;
            let d2 = dx * dx + dy * dy;
            let d = d2.sqrt();
            e += tf
                * (sub.p0 * (1.0 + 3.0 * d2 / (tf * tf * sub.u_tip * sub.u_tip))
                    + sub.parasite_coeff * d2 * d / (tf * tf * tf)
                    + sub.pi * x[l.delta(i)]);
            if !with_derivs {
                continue;
            }
            // dE/d(ds) = blade_c * ds + para_c * |ds| * ds
            let c1 = blade_c + para_c * d;
            let gx = c1 * dx;
            let gy = c1 * dy;
            grad_s[i + 1].0 += gx;
            grad_s[i + 1].1 += gy;
            if i > 0 {
                grad_s[i].0 -= gx;
                grad_s[i].1 -= gy;
            }
            // d2E/d(ds)2 = c1 * I + para_c * ds dsT / |ds|
            let (axx, axy, ayy) = if d > 1e-12 {
                (
                    c1 + para_c * dx * dx / d,
                    para_c * dx * dy / d,
                    c1 + para_c * dy * dy / d,
                )
            } else {
                (c1, 0.0, c1)
            };
            let push_block = |hess: &mut Vec<(usize, usize, f64)>, ia: usize, ib: usize, sign: f64| {
                hess.push((l.sx(ia), l.sx(ib), sign * axx / es));
                hess.push((l.sx(ia), l.sy(ib), sign * axy / es));
                hess.push((l.sy(ia), l.sx(ib), sign * axy / es));
                hess.push((l.sy(ia), l.sy(ib), sign * ayy / es));
            };
            push_block(&mut hess, i, i, 1.0);
            if i > 0 {
                push_block(&mut hess, i - 1, i - 1, 1.0);
                push_block(&mut hess, i, i - 1, -1.0);
                push_block(&mut hess, i - 1, i, -1.0);
            }
        }
        if with_derivs {
            for i in 0..n {
                let (gx, gy) = grad_s[i + 1];
                if gx != 0.0 {
                    grad.push((l.sx(i), gx / es));
                }
                if gy != 0.0 {
                    grad.push((l.sy(i), gy / es));
                }
                grad.push((l.delta(i), tf * sub.pi / es));
            }
        }
        out.push(ConstraintData {
            g: (e - sub.e_budget) / es,
            grad,
            hess,
        });
    }

    // Velocity Taylor bound: (1/delta^2 - xi - lin(v)) / T.
    {
        let ts = sub.tv_scale;
        let v0sq = sub.v0 * sub.v0;
        for i in 0..n {
            let d = x[l.delta(i)];
            let vb = sub.v_bar[i];
            let (px, py) = if i == 0 {
                (sub.start.x, sub.start.y)
            } else {
                (x[l.sx(i - 1)], x[l.sy(i - 1)])
            };
            let vx = (x[l.sx(i)] - px) / sub.t_fly;
            let vy = (x[l.sy(i)] - py) / sub.t_fly;
            let lin = (2.0 * (vb.x * vx + vb.y * vy) - vb.norm_sq()) / v0sq;
            let g = if d > 0.0 {
                (1.0 / (d * d) - x[l.xi(i)] - lin) / ts
            } else {
                f64::INFINITY
            };
            let mut grad = Vec::new();
            let mut hess = Vec::new();
            if with_derivs {
                let cs = 2.0 / (v0sq * sub.t_fly * ts);
                grad.push((l.delta(i), -2.0 / (d * d * d) / ts));
                grad.push((l.xi(i), -1.0 / ts));
                grad.push((l.sx(i), -cs * vb.x));
                grad.push((l.sy(i), -cs * vb.y));
                if i > 0 {
                    grad.push((l.sx(i - 1), cs * vb.x));
                    grad.push((l.sy(i - 1), cs * vb.y));
                }
                hess.push((l.delta(i), l.delta(i), 6.0 / (d * d * d * d) / ts));
            }
            out.push(ConstraintData { g, grad, hess });
        }
    }

    // Slack Taylor bound: xi + db^2 - 2 db delta.
    for i in 0..n {
        let db = sub.delta_bar[i];
        out.push(ConstraintData {
            g: x[l.xi(i)] + db * db - 2.0 * db * x[l.delta(i)],
            grad: if with_derivs {
                vec![(l.xi(i), 1.0), (l.delta(i), -2.0 * db)]
            } else {
                Vec::new()
            },
            hess: vec![],
        });
    }

    // Sign constraints.
    for i in 0..n {
        out.push(ConstraintData {
            g: -x[l.delta(i)],
            grad: if with_derivs { vec![(l.delta(i), -1.0)] } else { Vec::new() },
            hess: vec![],
        });
    }
    for i in 0..n {
        out.push(ConstraintData {
            g: -x[l.xi(i)],
            grad: if with_derivs { vec![(l.xi(i), -1.0)] } else { Vec::new() },
            hess: vec![],
        });
    }

    out
}

struct FullEval {
    phi: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Barrier evaluation for the subproblem itself (phase II).
fn eval_main(sub: &Subproblem, x: &[f64], t: f64, f_ref: f64) -> Option<FullEval> {
    let dim = sub.dim();
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);

    // Objective, scaled and re-centered.
    let f = (sub.objective_raw(x) - f_ref) / sub.f_scale;
    let mut fgrad = vec![0.0; dim];
    sub.objective_grad(x, &mut fgrad);
    let l = sub.layout;
    for j in 0..dim {
        grad[j] = t * fgrad[j] / sub.f_scale;
    }
    for i in 0..l.n {
        let c = t * 2.0 * sub.rate_coeff[i] / sub.f_scale;
        hess[(l.sx(i), l.sx(i))] += c;
        hess[(l.sy(i), l.sy(i))] += c;
    }

    let mut phi = t * f;
    for c in constraints_full(sub, x, true) {
        if c.g.is_nan() || c.g >= 0.0 {
            return None;
        }
        let u = -1.0 / c.g;
        phi += -(-c.g).ln();
        for &(j, gj) in &c.grad {
            grad[j] += u * gj;
        }
        for &(j, gj) in &c.grad {
            for &(k, gk) in &c.grad {
                hess[(j, k)] += u * u * gj * gk;
            }
        }
        for &(j, k, v) in &c.hess {
            hess[(j, k)] += u * v;
        }
    }
    Some(FullEval { phi, grad, hess })
}

fn value_main(sub: &Subproblem, x: &[f64], t: f64, f_ref: f64) -> Option<f64> {
    let mut phi = t * (sub.objective_raw(x) - f_ref) / sub.f_scale;
    for c in constraints_full(sub, x, false) {
        if c.g.is_nan() || c.g >= 0.0 {
            return None;
        }
        phi += -(-c.g).ln();
    }
    Some(phi)
}

/// Barrier evaluation for phase I over y = [x; w]: min w s.t. g_i(x) <= w.
fn eval_phase1(sub: &Subproblem, y: &[f64], t: f64) -> Option<FullEval> {
    let dim = sub.dim() + 1;
    let w = y[dim - 1];
    let x = &y[..dim - 1];
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    grad[dim - 1] = t;
    let mut phi = t * w;
    for c in constraints_full(sub, x, true) {
        let slack = w - c.g;
        if slack.is_nan() || slack <= 0.0 {
            return None;
        }
        let u = 1.0 / slack;
        phi += -slack.ln();
        for &(j, gj) in &c.grad {
            grad[j] += u * gj;
        }
        grad[dim - 1] -= u;
        for &(j, gj) in &c.grad {
            for &(k, gk) in &c.grad {
                hess[(j, k)] += u * u * gj * gk;
            }
            hess[(j, dim - 1)] -= u * u * gj;
            hess[(dim - 1, j)] -= u * u * gj;
        }
        hess[(dim - 1, dim - 1)] += u * u;
        for &(j, k, v) in &c.hess {
            hess[(j, k)] += u * v;
        }
    }
    Some(FullEval { phi, grad, hess })
}

fn value_phase1(sub: &Subproblem, y: &[f64], t: f64) -> Option<f64> {
    let dim = sub.dim() + 1;
    let w = y[dim - 1];
    let mut phi = t * w;
    for c in constraints_full(sub, &y[..dim - 1], false) {
        let slack = w - c.g;
        if slack.is_nan() || slack <= 0.0 {
            return None;
        }
        phi += -slack.ln();
    }
    Some(phi)
}

fn solve_newton_system(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let dim = hess.nrows();
    let mut ridge = 0.0;
    for attempt in 0..8 {
        let mut h = hess.clone();
        if attempt > 0 {
            ridge = if ridge == 0.0 {
                1e-12 * (hess.trace().abs() / dim as f64).max(1e-12)
            } else {
                ridge * 100.0
            };
            for j in 0..dim {
                h[(j, j)] += ridge;
            }
        }
        if let Some(ch) = Cholesky::new(h) {
            return Some(ch.solve(&(-grad)));
        }
    }
    None
}

/// Damped Newton to the centering tolerance; returns false when the step
/// budget runs out first.
fn center<FE, FV>(x: &mut Vec<f64>, t: f64, full: FE, value: FV, budget: &mut usize) -> Result<bool>
where
    FE: Fn(&[f64], f64) -> Option<FullEval>,
    FV: Fn(&[f64], f64) -> Option<f64>,
{
    let mut round = 0;
    loop {
        if *budget == 0 || round == ROUND_CAP {
            return Ok(false);
        }
        *budget -= 1;
        round += 1;
        let ev = full(x, t).ok_or_else(|| {
            Error::SolverFailure(format!(
                "barrier iterate left the feasible domain at t={t:.1e} (round step {round})"
            ))
        })?;
        let step = solve_newton_system(&ev.hess, &ev.grad)
            .ok_or_else(|| Error::SolverFailure("Newton system not positive definite".into()))?;
        let decrement = -ev.grad.dot(&step);
        if decrement * 0.5 <= CENTER_TOL {
            return Ok(true);
        }
        // Backtracking with out-of-domain rejection.
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi + alpha * si).collect();
            if let Some(phi_new) = value(&cand, t) {
                if phi_new <= ev.phi - 0.01 * alpha * decrement {
                    *x = cand;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            // Objective can no longer be resolved at this t; treat as centered.
            return Ok(true);
        }
    }
}

/// Find a strictly interior starting point for the barrier, via a cheap
/// perturbation of the expansion point or a phase-I solve.
fn interior_start(sub: &Subproblem) -> Result<Vec<f64>> {
    let l = sub.layout;
    let n = l.n;
    // Nudge clamped waypoints off the box edge.
    let mut base = sub.x_bar.clone();
    for i in 0..n {
        let mx = 1e-9 * sub.lx;
        let my = 1e-9 * sub.ly;
        base[l.sx(i)] = base[l.sx(i)].clamp(mx, sub.lx - mx);
        base[l.sy(i)] = base[l.sy(i)].clamp(my, sub.ly - my);
    }
    let v0sq = sub.v0 * sub.v0;
    for w in [1e-7, 1e-5, 1e-3, 1e-2, 5e-2] {
        let mut x = base.clone();
        for i in 0..n {
            let db = sub.delta_bar[i];
            let d = db * (1.0 + w);
            x[l.delta(i)] = d;
            // Feasible band for xi at this delta.
            let (px, py) = if i == 0 {
                (sub.start.x, sub.start.y)
            } else {
                (x[l.sx(i - 1)], x[l.sy(i - 1)])
            };
            let vb = sub.v_bar[i];
            let vx = (x[l.sx(i)] - px) / sub.t_fly;
            let vy = (x[l.sy(i)] - py) / sub.t_fly;
            let lin = (2.0 * (vb.x * vx + vb.y * vy) - vb.norm_sq()) / v0sq;
            let lo = (1.0 / (d * d) - lin).max(0.0);
            let hi = 2.0 * db * d - db * db;
            if hi.is_nan() || hi <= lo {
                x[l.xi(i)] = f64::NAN; // poison; rejected below
                break;
            }
            x[l.xi(i)] = 0.5 * (lo + hi);
        }
        if x.iter().all(|v| v.is_finite()) && sub.max_violation(&x) < -1e-13 {
            return Ok(x);
        }
    }

    // Phase I.
    let dim = sub.dim() + 1;
    let mut y = base;
    let w0 = sub.max_violation(&y).max(0.0) + 1.0;
    y.push(w0);
    let m = sub.num_constraints() as f64;
    let mut t = 1.0;
    let mut budget = NEWTON_BUDGET;
    loop {
        center(
            &mut y,
            t,
            |p, tt| eval_phase1(sub, p, tt),
            |p, tt| value_phase1(sub, p, tt),
            &mut budget,
        )?;
        if y[dim - 1] < -1e-6 {
            break; // comfortably interior
        }
        if m / t <= GAP_TOL || budget == 0 {
            break;
        }
        t *= T_MULT;
    }
    if y[dim - 1] >= 0.0 {
        return Err(Error::Infeasible(format!(
            "no strictly feasible point (phase-I slack {:.3e})",
            y[dim - 1]
        )));
    }
    y.pop();
    Ok(y)
}

/// Minimize the subproblem objective over its constraint set.
///
/// The returned point is strictly feasible; `status` reports whether the
/// duality-gap target was reached within the step budget.
pub fn solve_subproblem(sub: &Subproblem) -> Result<Solution> {
    let debug = std::env::var_os("ISAC_SOLVER_DEBUG").is_some();
    let mut x = interior_start(sub)?;
    let m = sub.num_constraints() as f64;
    let mut t = 1.0;
    let mut budget = NEWTON_BUDGET;
    let mut converged = false;
    loop {
        let before = budget;
        let f_ref = sub.objective_raw(&x);
        let centered = center(
            &mut x,
            t,
            |p, tt| eval_main(sub, p, tt, f_ref),
            |p, tt| value_main(sub, p, tt, f_ref),
            &mut budget,
        )?;
        if debug {
            eprintln!(
                "t={t:.1e}: {} newton steps, centered={centered}",
                before - budget
            );
        }
        if m / t <= GAP_TOL {
            converged = centered;
            break;
        }
        if budget == 0 {
            break;
        }
        t *= T_MULT;
    }
    let objective_raw = sub.objective_raw(&x);
    debug_assert!(sub.max_violation(&x) < 0.0);
    Ok(Solution {
        x,
        status: if converged { SolveStatus::Converged } else { SolveStatus::MaxIterations },
        objective_raw,
    })
}
