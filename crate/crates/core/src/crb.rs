//! Fisher information and Cramér-Rao bound for the target's planar position
//! estimated from round-trip ranging at the hovering points.
//!
//! Two computation paths are provided. [`fim_closed_form`] accumulates the
//! closed-form entries
//!
//! ```text
//! Theta_a = sum_k  kappa (x_k - x_t)^2 / d^6  +  8 (x_k - x_t)^2 / d^4
//! ```
//!
//! (and the analogous `Theta_b`, `Theta_c`) with `kappa = P Gp beta0 / (a sigma0^2)`.
//! [`fim_numeric`] instead builds the Fisher information of the range vector
//! from the Gaussian density with range-dependent covariance and pushes it
//! through the range-to-position Jacobian; it exists as an independent oracle
//! for the closed form. The `8/d^4` part comes from the derivative of the
//! covariance and can be switched off (`crb_covariance_term`) for ablations.

use crate::channel::meas_var_coeff;
use crate::scenario::Scenario;
use crate::{Error, Point, Result};
use nalgebra::{DMatrix, Matrix2};

/// Condition number above which the FIM is reported singular.
pub const COND_LIMIT: f64 = 1e12;

/// CRB of the target coordinates for one hover geometry.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CrbResult {
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_c: f64,
    pub crb_x: f64,
    pub crb_y: f64,
    /// `crb_x + crb_y`, the scalar sensing metric.
    pub crb_sum: f64,
    /// Fisher information matrix entries [[theta_a, theta_c], [theta_c, theta_b]].
    #[serde(skip)]
    pub fim: Matrix2<f64>,
}

fn kappa(scenario: &Scenario) -> f64 {
    let sys = &scenario.sys;
    sys.tx_power * sys.proc_gain * sys.beta0 / (sys.noise_scale_a * sys.noise_power())
}

/// Closed-form Fisher information of the target position.
pub fn fim_closed_form(hovers: &[Point], target: Point, scenario: &Scenario) -> Matrix2<f64> {
    let kap = kappa(scenario);
    let h2 = scenario.sys.altitude * scenario.sys.altitude;
    let cov_term = scenario.sys.crb_covariance_term;

    let mut ta = 0.0;
    let mut tb = 0.0;
    let mut tc = 0.0;
    for h in hovers {
        let px = h.x - target.x;
        let py = h.y - target.y;
        let d2 = h2 + px * px + py * py;
        let d4 = d2 * d2;
        let d6 = d4 * d2;
        let w = kap / d6 + if cov_term { 8.0 / d4 } else { 0.0 };
        ta += w * px * px;
        tb += w * py * py;
        tc += w * px * py;
    }
    Matrix2::new(ta, tc, tc, tb)
}

/// Matrix-assembly oracle for [`fim_closed_form`].
///
/// Builds the diagonal covariance `C = c * diag(d_k^4)` of the range vector,
/// evaluates the Gaussian Fisher information of the ranges term by term
/// (`C^-1` quadratic form plus the half-trace of the covariance derivatives),
/// and maps it through the Jacobian `Q` of ranges with respect to position.
pub fn fim_numeric(hovers: &[Point], target: Point, scenario: &Scenario) -> Matrix2<f64> {
    let k = hovers.len();
    if k == 0 {
        return Matrix2::zeros();
    }
    let c_coeff = meas_var_coeff(scenario);
    let h2 = scenario.sys.altitude * scenario.sys.altitude;
    let cov_term = scenario.sys.crb_covariance_term;

    let d: Vec<f64> = hovers
        .iter()
        .map(|h| (h2 + h.dist_sq(target)).sqrt())
        .collect();

    // C and C^-1 as full matrices; the diagonal structure is not exploited so
    // that this path stays an independent check.
    let cov = DMatrix::from_fn(k, k, |p, q| if p == q { c_coeff * d[p].powi(4) } else { 0.0 });
    let cov_inv = cov.clone().try_inverse().expect("diagonal covariance with positive entries");

    let mut j_ranges = DMatrix::zeros(k, k);
    for p in 0..k {
        for q in 0..k {
            // First term: e_p^T C^-1 e_q.
            let mut val = cov_inv[(p, q)];
            if cov_term {
                // Second term: (1/2) tr(C^-1 dC/dd_p C^-1 dC/dd_q).
                let mut dc_p = DMatrix::zeros(k, k);
                dc_p[(p, p)] = 4.0 * c_coeff * d[p].powi(3);
                let mut dc_q = DMatrix::zeros(k, k);
                dc_q[(q, q)] = 4.0 * c_coeff * d[q].powi(3);
                let prod = &cov_inv * dc_p * &cov_inv * dc_q;
                val += 0.5 * prod.trace();
            }
            j_ranges[(p, q)] = val;
        }
    }

    // Jacobian of the range vector with respect to the target position.
    let q_jac = DMatrix::from_fn(2, k, |row, col| {
        let off = if row == 0 {
            hovers[col].x - target.x
        } else {
            hovers[col].y - target.y
        };
        off / d[col]
    });

    let j_u = &q_jac * j_ranges * q_jac.transpose();
    Matrix2::new(j_u[(0, 0)], j_u[(0, 1)], j_u[(1, 0)], j_u[(1, 1)])
}

fn crb_from_fim(fim: Matrix2<f64>) -> Result<CrbResult> {
    let ta = fim[(0, 0)];
    let tb = fim[(1, 1)];
    let tc = fim[(0, 1)];
    let det = ta * tb - tc * tc;
    if det <= 1e-30 {
        return Err(Error::SingularFim {
            detail: format!("determinant {det:.3e} <= 1e-30"),
        });
    }
    // Symmetric 2x2 eigenvalues for the condition number.
    let mean = 0.5 * (ta + tb);
    let disc = (0.25 * (ta - tb) * (ta - tb) + tc * tc).sqrt();
    let lam_min = mean - disc;
    let lam_max = mean + disc;
    if lam_min <= 0.0 || lam_max / lam_min > COND_LIMIT {
        return Err(Error::SingularFim {
            detail: format!("condition number {:.3e} > {COND_LIMIT:.0e}", lam_max / lam_min),
        });
    }
    Ok(CrbResult {
        theta_a: ta,
        theta_b: tb,
        theta_c: tc,
        crb_x: tb / det,
        crb_y: ta / det,
        crb_sum: (ta + tb) / det,
        fim,
    })
}

/// CRB of the target coordinates from one hover set. Errors out on singular
/// or ill-conditioned information instead of returning a huge finite number.
pub fn crb_sum(hovers: &[Point], target: Point, scenario: &Scenario) -> Result<CrbResult> {
    crb_from_fim(fim_closed_form(hovers, target, scenario))
}

/// CRB accumulated over several stages' hover sets, with every distance
/// evaluated to the current target estimate.
pub fn crb_sum_multistage(
    stage_hovers: &[Vec<Point>],
    target_estimate: Point,
    scenario: &Scenario,
) -> Result<CrbResult> {
    let mut fim = Matrix2::zeros();
    for stage in stage_hovers {
        fim += fim_closed_form(stage, target_estimate, scenario);
    }
    crb_from_fim(fim)
}

/// Gradient of `crb_sum` with respect to the coordinates of `var_hovers`,
/// with `fixed_hovers` contributing to the information but held constant.
///
/// Returns the per-hover gradient and the `CrbResult` at the evaluation
/// point. Used by the per-stage optimizer to linearize the sensing metric.
pub fn crb_gradient(
    fixed_hovers: &[Point],
    var_hovers: &[Point],
    target: Point,
    scenario: &Scenario,
) -> Result<(Vec<Point>, CrbResult)> {
    let mut fim = fim_closed_form(fixed_hovers, target, scenario);
    fim += fim_closed_form(var_hovers, target, scenario);
    let crb = crb_from_fim(fim)?;

    let (ta, tb, tc) = (crb.theta_a, crb.theta_b, crb.theta_c);
    let det = ta * tb - tc * tc;
    let sum = ta + tb;
    // Partial derivatives of (ta + tb) / det.
    let dphi_dta = (det - sum * tb) / (det * det);
    let dphi_dtb = (det - sum * ta) / (det * det);
    let dphi_dtc = 2.0 * sum * tc / (det * det);

    let kap = kappa(scenario);
    let h2 = scenario.sys.altitude * scenario.sys.altitude;
    let cov_term = scenario.sys.crb_covariance_term;

    let grads = var_hovers
        .iter()
        .map(|h| {
            let px = h.x - target.x;
            let py = h.y - target.y;
            let d2 = h2 + px * px + py * py;
            let d4 = d2 * d2;
            let d6 = d4 * d2;
            let d8 = d4 * d4;
            let (c8_4, c8_6) = if cov_term { (8.0, 8.0) } else { (0.0, 0.0) };

            // d(theta)/d(px), d(theta)/d(py) for this hover's contribution.
            let dta_dx = kap * (2.0 * px / d6 - 6.0 * px * px * px / d8)
                + c8_4 * (2.0 * px / d4 - 4.0 * px * px * px / d6);
            let dta_dy = kap * (-6.0 * px * px * py / d8) + c8_4 * (-4.0 * px * px * py / d6);
            let dtb_dx = kap * (-6.0 * py * py * px / d8) + c8_4 * (-4.0 * py * py * px / d6);
            let dtb_dy = kap * (2.0 * py / d6 - 6.0 * py * py * py / d8)
                + c8_4 * (2.0 * py / d4 - 4.0 * py * py * py / d6);
            let dtc_dx = kap * (py / d6 - 6.0 * px * px * py / d8)
                + c8_6 * (py / d4 - 4.0 * px * px * py / d6);
            let dtc_dy = kap * (px / d6 - 6.0 * py * py * px / d8)
                + c8_6 * (px / d4 - 4.0 * py * py * px / d6);

            Point::new(
                dphi_dta * dta_dx + dphi_dtb * dtb_dx + dphi_dtc * dtc_dx,
                dphi_dta * dta_dy + dphi_dtb * dtb_dy + dphi_dtc * dtc_dy,
            )
        })
        .collect();

    Ok((grads, crb))
}
