//! Line-of-sight downlink and radar link models.
//!
//! Both links use free-space path loss from the UAV at altitude `H`. The
//! downlink gain falls off with the square of the UAV-user distance; the
//! two-way radar gain falls off with the fourth power of the UAV-target
//! distance, and the range measurement variance is inversely proportional to
//! the received echo SNR.

use crate::scenario::Scenario;
use crate::{Error, Point, Result};

/// Downlink quantities at one UAV position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommSample {
    /// UAV-user distance including altitude, m.
    pub distance: f64,
    /// Received SNR (linear).
    pub snr: f64,
    /// Achievable downlink rate, bit/s.
    pub rate: f64,
}

/// Radar link quantities for one hover/target pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarLink {
    /// UAV-target distance including altitude, m.
    pub distance: f64,
    /// Two-way channel power gain (linear).
    pub two_way_gain: f64,
    /// Received echo SNR after processing gain (linear).
    pub snr: f64,
    /// Range measurement variance, m^2.
    pub meas_var: f64,
}

/// Downlink rate for a UAV hovering or passing over `uav_xy`.
pub fn comm_rate(uav_xy: Point, scenario: &Scenario) -> CommSample {
    let sys = &scenario.sys;
    let d_sq = sys.altitude * sys.altitude + uav_xy.dist_sq(scenario.user);
    let gain = sys.alpha0 / d_sq;
    let snr = sys.tx_power * gain / sys.noise_power();
    CommSample {
        distance: d_sq.sqrt(),
        snr,
        rate: sys.bandwidth * (1.0 + snr).log2(),
    }
}

/// Arithmetic mean of the per-waypoint rate. For waypoints pooled from
/// several stages this is the pooled mean over all of them.
pub fn avg_rate(waypoints: &[Point], scenario: &Scenario) -> Result<f64> {
    if waypoints.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(rate_sum(waypoints, scenario) / waypoints.len() as f64)
}

/// Sum of per-waypoint rates (compensated so the value is stable under
/// pooling order).
pub fn rate_sum(waypoints: &[Point], scenario: &Scenario) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &w in waypoints {
        let r = comm_rate(w, scenario).rate;
        let t = sum + r;
        comp += if sum.abs() >= r.abs() { (sum - t) + r } else { (r - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Radar link to an arbitrary (true or hypothesized) target position.
pub fn radar_link(hover_xy: Point, target_xy: Point, scenario: &Scenario) -> RadarLink {
    let sys = &scenario.sys;
    let d_sq = sys.altitude * sys.altitude + hover_xy.dist_sq(target_xy);
    let d4 = d_sq * d_sq;
    let gain = sys.beta0 / d4;
    let snr = sys.tx_power * sys.proc_gain * gain / sys.noise_power();
    RadarLink {
        distance: d_sq.sqrt(),
        two_way_gain: gain,
        snr,
        meas_var: sys.noise_scale_a / snr,
    }
}

/// Measurement variance coefficient `c` with `sigma^2 = c * d^4`.
pub fn meas_var_coeff(scenario: &Scenario) -> f64 {
    let sys = &scenario.sys;
    sys.noise_scale_a * sys.noise_power() / (sys.tx_power * sys.proc_gain * sys.beta0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Scenario {
        Scenario::default()
    }

    #[test]
    fn rate_above_user_matches_hand_value() {
        let sc = reference();
        let s = comm_rate(sc.user, &sc);
        // SNR = P*alpha0 / (sigma0^2 * H^2) = 0.1 * 1e-5 / (1e-14 * 4e4) = 2500
        assert!((s.snr - 2500.0).abs() < 1e-6);
        let expected = 1.0e6 * (2501.0f64).log2();
        assert!((s.rate - expected).abs() / expected < 1e-12);
        assert!((s.rate - 1.129e7).abs() / 1.129e7 < 1e-3);
    }

    #[test]
    fn rate_decays_to_zero_with_distance() {
        let sc = reference();
        let mut last = f64::INFINITY;
        for k in 1..=60 {
            let p = sc.user + Point::new(500.0 * k as f64, 0.0);
            let r = comm_rate(p, &sc).rate;
            assert!(r < last, "rate must decay monotonically");
            last = r;
        }
        assert!(last < 0.02 * comm_rate(sc.user, &sc).rate);
    }

    #[test]
    fn equidistant_positions_have_equal_rate() {
        let sc = reference();
        let a = comm_rate(sc.user + Point::new(300.0, 0.0), &sc).rate;
        let b = comm_rate(sc.user + Point::new(0.0, -300.0), &sc).rate;
        assert!((a - b).abs() / a < 1e-14);
    }

    #[test]
    fn avg_rate_reduces_to_single_sample() {
        let sc = reference();
        let p = Point::new(700.0, 700.0);
        let avg = avg_rate(&[p], &sc).unwrap();
        assert_eq!(avg, comm_rate(p, &sc).rate);
        let avg3 = avg_rate(&[p, p, p], &sc).unwrap();
        assert!((avg3 - avg).abs() / avg < 1e-14);
    }

    #[test]
    fn avg_rate_of_two_points_is_their_mean() {
        let sc = reference();
        let p1 = Point::new(200.0, 200.0);
        let p2 = Point::new(900.0, 1100.0);
        let r1 = comm_rate(p1, &sc).rate;
        let r2 = comm_rate(p2, &sc).rate;
        let avg = avg_rate(&[p1, p2], &sc).unwrap();
        assert!((avg - 0.5 * (r1 + r2)).abs() / avg < 1e-14);
    }

    #[test]
    fn avg_rate_rejects_empty_input() {
        assert!(matches!(avg_rate(&[], &reference()), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn radar_variance_matches_hand_value() {
        let sc = reference();
        // Hover directly above the target: d = H = 200 m, a = 10.
        let link = radar_link(sc.target_true, sc.target_true, &sc);
        assert!((link.distance - 200.0).abs() < 1e-9);
        let expected = 10.0 * 1.0e-14 * 1.6e9 / (0.1 * 1.0e5 * 10f64.powf(-4.7));
        assert!((link.meas_var - expected).abs() / expected < 1e-12);
        assert!((link.meas_var - 8.02e-4).abs() / 8.02e-4 < 2e-3);
    }

    #[test]
    fn variance_is_linear_in_noise_scale() {
        let mut sc = reference();
        let hover = Point::new(600.0, 800.0);
        let v10 = radar_link(hover, sc.target_true, &sc).meas_var;
        sc.sys.noise_scale_a = 50.0;
        let v50 = radar_link(hover, sc.target_true, &sc).meas_var;
        assert!((v50 / v10 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn variance_follows_fourth_power_of_distance() {
        let sc = reference();
        let t = Point::new(750.0, 750.0);
        let d1 = 250.0f64;
        let planar1 = (d1 * d1 - sc.sys.altitude * sc.sys.altitude).sqrt();
        let planar2 = ((2.0 * d1) * (2.0 * d1) - sc.sys.altitude * sc.sys.altitude).sqrt();
        let v1 = radar_link(t + Point::new(planar1, 0.0), t, &sc).meas_var;
        let v2 = radar_link(t + Point::new(planar2, 0.0), t, &sc).meas_var;
        assert!((v2 / v1 - 16.0).abs() < 1e-9);
    }

    #[test]
    fn variance_times_snr_is_constant() {
        let sc = reference();
        for (hx, hy) in [(0.0, 0.0), (400.0, 900.0), (1500.0, 1500.0), (750.0, 10.0)] {
            let link = radar_link(Point::new(hx, hy), sc.target_true, &sc);
            assert!((link.meas_var * link.snr - sc.sys.noise_scale_a).abs() < 1e-9);
        }
    }
}
