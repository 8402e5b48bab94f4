use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use theta_bsde::ambient::AmbientPoint;
use theta_bsde::drivers::{DriverSpec, StateFn};
use theta_bsde::engine::Terminal;
use theta_bsde::uncertainty::UncertaintySet;

fn pt(c: &[f64]) -> AmbientPoint {
    AmbientPoint::new(c.to_vec()).unwrap()
}

fn any_box() -> impl Strategy<Value = UncertaintySet> {
    (-3.0..3.0f64, 0.01..2.0f64, -3.0..3.0f64, 0.01..2.0f64)
        .prop_map(|(x, w, y, h)| UncertaintySet::boxed(pt(&[x, y]), pt(&[x + w, y + h])).unwrap())
}

fn any_ball() -> impl Strategy<Value = UncertaintySet> {
    (-3.0..3.0f64, -3.0..3.0f64, 0.01..2.0f64)
        .prop_map(|(x, y, r)| UncertaintySet::ball(pt(&[x, y]), r).unwrap())
}

fn any_set() -> impl Strategy<Value = UncertaintySet> {
    prop_oneof![
        any_box(),
        any_ball(),
        (any_box(), any_ball()).prop_filter_map("members overlap", |(a, b)| UncertaintySet::union(
            vec![a, b]
        )
        .ok()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_lands_in_set_and_is_nearest_sampled(set in any_set(), qx in -6.0..6.0f64, qy in -6.0..6.0f64, seed in any::<u64>()) {
        let q = pt(&[qx, qy]);
        let proj = set.project(&q).unwrap();
        prop_assert!(set.contains(&proj.point, 1e-9).unwrap());
        prop_assert!(set.project(&proj.point).unwrap().distance <= 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let a = set.sample(&mut rng);
            prop_assert!(q.distance(&a).unwrap() >= proj.distance - 1e-9);
        }
    }

    #[test]
    fn linear_max_dominates_samples(set in any_set(), cx in -3.0..3.0f64, cy in -3.0..3.0f64, seed in any::<u64>()) {
        let (best, at) = set.linear_max(&pt(&[cx, cy])).unwrap();
        prop_assert!(set.contains(&at, 1e-9).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let a = set.sample(&mut rng);
            prop_assert!(cx * a.coords()[0] + cy * a.coords()[1] <= best + 1e-9);
        }
    }

    #[test]
    fn effective_driver_dominates_every_action(
        set in any_set(),
        eps in 0.01..2.0f64,
        (x, y, z) in (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64),
        seed in any::<u64>(),
    ) {
        let g = StateFn { c0: vec![0.1, -0.2], cx: vec![vec![1.0], vec![0.0]], cz: vec![vec![0.5], vec![1.0]], ..StateFn::zero(2) };
        let driver = DriverSpec::RegularizedProjection { h: StateFn { cy: vec![0.3], ..StateFn::zero(1) }, g, eps };
        let (value, a_star) = driver.effective_driver(&set, 0.0, &[x], y, &[z]).unwrap();
        prop_assert!(set.contains(&a_star.unwrap(), 1e-9).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let a = set.sample(&mut rng);
            prop_assert!(value >= driver.evaluate(0.0, &[x], y, &[z], &a).unwrap() - 1e-9);
        }
    }

    #[test]
    fn regularized_g_driver_is_sandwiched(lo in -2.0..2.0f64, w in 0.01..2.0f64, frac in 0.0..1.0f64, eps in 0.01..2.0f64, z in -3.0..3.0f64) {
        let set = UncertaintySet::interval(lo, lo + w).unwrap();
        let a0 = pt(&[lo + frac * w]);
        let reg = DriverSpec::GRegularized { eps, a0: a0.clone() };
        let (value, _) = reg.effective_driver(&set, 0.0, &[0.0], 0.0, &[z]).unwrap();
        let (limit, _) = DriverSpec::GLimit.effective_driver(&set, 0.0, &[0.0], 0.0, &[z]).unwrap();
        let spread = set.sup_sq_distance_from(a0.coords());
        prop_assert!(value <= limit + 1e-12);
        prop_assert!(value >= limit - 0.5 * eps * spread - 1e-12);
    }

    #[test]
    fn clamped_terminal_stays_in_bounds(x in -100.0..100.0f64, lo in -5.0..0.0f64, hi in 0.0..5.0f64) {
        let v = Terminal::power(1, 0, 3).clamped(lo, hi).evaluate(&[x]);
        prop_assert!((lo..=hi).contains(&v));
    }
}
