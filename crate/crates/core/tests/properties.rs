//! Cross-module property tests: model invariants that must hold for any
//! admissible inputs, not just the worked examples.

use isac_core::channel::{avg_rate, comm_rate, radar_link};
use isac_core::crb::{crb_sum, fim_closed_form};
use isac_core::energy::{induced_slack, propulsion_power, trajectory_energy};
use isac_core::scenario::{parse_config_str, EnergyParams, Scenario};
use isac_core::trajectory::Trajectory;
use isac_core::Point;
use proptest::prelude::*;

fn point_in_area() -> impl Strategy<Value = Point> {
    (0.0..1500.0f64, 0.0..1500.0f64).prop_map(|(x, y)| Point::new(x, y))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn comm_rate_decreases_with_planar_distance(
        dir in 0.0..std::f64::consts::TAU,
        r1 in 0.0..700.0f64,
        extra in 1.0..700.0f64,
    ) {
        let sc = Scenario::default();
        let u = Point::new(750.0, 750.0);
        let mut sc = sc;
        sc.user = u;
        let p1 = u + Point::new(r1 * dir.cos(), r1 * dir.sin());
        let p2 = u + Point::new((r1 + extra) * dir.cos(), (r1 + extra) * dir.sin());
        let a = comm_rate(p1, &sc).rate;
        let b = comm_rate(p2, &sc).rate;
        prop_assert!(b < a, "rate must strictly decrease: {a} -> {b}");
    }

    #[test]
    fn avg_rate_is_permutation_invariant(mut pts in proptest::collection::vec(point_in_area(), 1..24), seed in 0u64..1000) {
        let sc = Scenario::default();
        let before = avg_rate(&pts, &sc).unwrap();
        // Deterministic shuffle.
        let n = pts.len();
        for i in 0..n {
            let j = ((seed as usize).wrapping_mul(31).wrapping_add(i * 17)) % n;
            pts.swap(i, j);
        }
        let after = avg_rate(&pts, &sc).unwrap();
        prop_assert!(rel_close(before, after, 1e-12));
    }

    #[test]
    fn radar_variance_times_snr_is_the_noise_constant(h in point_in_area(), t in point_in_area()) {
        let sc = Scenario::default();
        let link = radar_link(h, t, &sc);
        prop_assert!(rel_close(link.meas_var * link.snr, sc.sys.noise_scale_a, 1e-9));
    }

    #[test]
    fn fim_is_additive_over_partitions(
        pts in proptest::collection::vec(point_in_area(), 2..16),
        split in 1usize..15,
        t in point_in_area(),
    ) {
        let sc = Scenario::default();
        let k = split.min(pts.len() - 1);
        let joint = fim_closed_form(&pts, t, &sc);
        let sum = fim_closed_form(&pts[..k], t, &sc) + fim_closed_form(&pts[k..], t, &sc);
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!(rel_close(joint[(i, j)], sum[(i, j)], 1e-12));
            }
        }
    }

    #[test]
    fn adding_information_never_hurts(
        pts in proptest::collection::vec(point_in_area(), 3..12),
        extra in point_in_area(),
        t in point_in_area(),
    ) {
        let sc = Scenario::default();
        if let Ok(before) = crb_sum(&pts, t, &sc) {
            let mut more = pts.clone();
            more.push(extra);
            let after = crb_sum(&more, t, &sc).unwrap();
            prop_assert!(after.crb_sum <= before.crb_sum * (1.0 + 1e-12));
        }
    }

    #[test]
    fn crb_sum_is_trace_of_inverse(pts in proptest::collection::vec(point_in_area(), 3..12), t in point_in_area()) {
        let sc = Scenario::default();
        if let Ok(crb) = crb_sum(&pts, t, &sc) {
            // Independent 2x2 inverse via Gaussian elimination.
            let m = crb.fim;
            let inv = invert_2x2_gauss([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]).unwrap();
            prop_assert!(rel_close(crb.crb_sum, inv[0][0] + inv[1][1], 1e-8));
            prop_assert!(rel_close(crb.crb_x, inv[0][0], 1e-8));
        }
    }

    #[test]
    fn slack_identity_holds_for_any_speed(v in 0.0..30.0f64) {
        let p = EnergyParams::default();
        let d = induced_slack(v, p.v0);
        let lhs = v * v / (p.v0 * p.v0);
        let rhs = 1.0 / (d * d) - d * d;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn power_is_positive_and_continuous(v in 0.0..30.0f64) {
        let p = EnergyParams::default();
        let a = propulsion_power(v, &p).unwrap();
        let b = propulsion_power(v + 1e-6, &p).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() < 1e-3);
    }

    #[test]
    fn trajectory_energy_is_additive(
        pts in proptest::collection::vec(point_in_area(), 2..20),
        split in 1usize..19,
    ) {
        let sc = Scenario::default();
        let k = split.min(pts.len() - 1);
        let whole = Trajectory::from_waypoints(Point::new(100.0, 100.0), pts.clone(), sc.sys.t_fly, sc.sys.mu);
        // Split with hover counts copied so both halves see the same stops.
        let mut first = Trajectory::from_waypoints(Point::new(100.0, 100.0), pts[..k].to_vec(), sc.sys.t_fly, sc.sys.mu);
        let mut second = Trajectory::from_waypoints(pts[k - 1], pts[k..].to_vec(), sc.sys.t_fly, sc.sys.mu);
        first.hover_counts.copy_from_slice(&whole.hover_counts[..k]);
        second.hover_counts.copy_from_slice(&whole.hover_counts[k..]);
        let e_whole = trajectory_energy(&whole, &sc).unwrap().total;
        let e_split = trajectory_energy(&first, &sc).unwrap().total + trajectory_energy(&second, &sc).unwrap().total;
        prop_assert!(rel_close(e_whole, e_split, 1e-12));
    }

    #[test]
    fn config_round_trip_is_exact(
        // TOML integers are i64, which caps representable seeds.
        seed in 0u64..=(i64::MAX as u64),
        tx in 400.0..1100.0f64,
        ty in 400.0..1100.0f64,
        a in 1.0..100.0f64,
    ) {
        let mut sc = Scenario { seed, target_true: Point::new(tx, ty), ..Scenario::default() };
        sc.sys.noise_scale_a = a;
        let (back, _) = parse_config_str(&sc.to_config_string()).unwrap();
        prop_assert_eq!(sc, back);
    }
}

fn invert_2x2_gauss(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    // Gauss-Jordan with partial pivoting on the augmented [m | I].
    let mut a = [
        [m[0][0], m[0][1], 1.0, 0.0],
        [m[1][0], m[1][1], 0.0, 1.0],
    ];
    if a[0][0].abs() < a[1][0].abs() {
        a.swap(0, 1);
    }
    if a[0][0] == 0.0 {
        return None;
    }
    let f = a[1][0] / a[0][0];
    let pivot = a[0];
    for (x, p) in a[1].iter_mut().zip(pivot) {
        *x -= f * p;
    }
    if a[1][1] == 0.0 {
        return None;
    }
    let f = a[0][1] / a[1][1];
    let pivot = a[1];
    for (x, p) in a[0].iter_mut().zip(pivot) {
        *x -= f * p;
    }
    for j in 2..4 {
        a[0][j] /= a[0][0];
        a[1][j] /= a[1][1];
    }
    Some([[a[0][2], a[0][3]], [a[1][2], a[1][3]]])
}
