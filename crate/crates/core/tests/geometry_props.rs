use proptest::prelude::*;
use safebar::geometry::*;
use safebar::{state, StateVector};

fn pt() -> impl Strategy<Value = StateVector> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| state(&[a, b]))
}

fn cloud() -> impl Strategy<Value = Vec<StateVector>> {
    prop::collection::vec(pt(), 1..12)
}

fn sets() -> Vec<SetSpec> {
    let ellipse = SetSpec::sublevel(
        ScalarFn::from_expr("x1^2/4 + x2^2", 2).unwrap(),
        1.0,
        SearchGrid {
            bounds: Aabb::cube(2, 4.0),
            per_axis: 41,
        },
    )
    .unwrap();
    vec![
        SetSpec::ball(state(&[0.5, -0.2]), 1.0).unwrap(),
        SetSpec::boxed(state(&[-1.0, -0.5]), state(&[0.5, 1.0])).unwrap(),
        SetSpec::halfspace(state(&[1.0, 1.0]), 0.3).unwrap(),
        SetSpec::point(state(&[0.0, 0.0])),
        SetSpec::ball(state(&[0.0, 0.0]), 1.0).unwrap().complement(),
        ellipse,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_one_lipschitz(x in pt(), y in pt()) {
        for s in sets() {
            let (dx, dy) = (s.distance(&x).unwrap(), s.distance(&y).unwrap());
            // Sublevel distances are estimates refined from a grid.
            let slack = if matches!(s, SetSpec::Sublevel { .. }) { 1e-4 } else { 1e-12 };
            prop_assert!((dx - dy).abs() <= (&x - &y).norm() + slack, "{s:?}: {dx} {dy}");
        }
    }

    #[test]
    fn hausdorff_is_a_pseudometric(a in cloud(), b in cloud(), c in cloud()) {
        let ab = hausdorff_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, hausdorff_distance(&b, &a).unwrap());
        prop_assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        let (bc, ac) = (hausdorff_distance(&b, &c).unwrap(), hausdorff_distance(&a, &c).unwrap());
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn cone_residual_shrinks_with_more_steps(
        pick in 0usize..16,
        vx in -2.0..2.0f64,
        vy in -2.0..2.0f64,
        extra in 1usize..4,
    ) {
        let v = state(&[vx, vy]);
        let coarse: Vec<f64> = (1..=3).map(|i| 10f64.powi(-i)).collect();
        let fine: Vec<f64> = (1..=3 + extra as i32).map(|i| 10f64.powi(-i)).collect();
        for s in sets() {
            let xs: Vec<StateVector> = s
                .sample_boundary(16, &Aabb::cube(2, 3.0), 0)
                .unwrap()
                .into_iter()
                .filter(|x| s.distance(x).unwrap() <= 1e-9)
                .collect();
            let Some(x) = xs.get(pick % xs.len().max(1)) else { continue };
            let mode = ConeMode::Contingent;
            let r1 = cone_residual(&ConeProbe::with_steps(x.clone(), v.clone(), coarse.clone(), mode).unwrap(), &s, 1e-6).unwrap();
            let r2 = cone_residual(&ConeProbe::with_steps(x.clone(), v.clone(), fine.clone(), mode).unwrap(), &s, 1e-6).unwrap();
            prop_assert!(r2 <= r1, "{s:?}: {r2} > {r1}");
        }
    }

    #[test]
    fn clarke_samples_track_smooth_gradient(x in pt(), radius in 1e-4..1e-2f64) {
        let f = ScalarFn::new("quadratic", |y: &[f64]| y[0] * y[0] * y[1] + 3.0 * y[1] * y[1] - y[0]);
        let grad = |y: &StateVector| state(&[2.0 * y[0] * y[1] - 1.0, y[0] * y[0] + 6.0 * y[1]]);
        let fd = 1e-6;
        let zs = clarke_gradient_sample(&f, &x, radius, 9, fd).unwrap();
        prop_assert!(!zs.is_empty());
        // Hessian entries are bounded by 2|x| + 6 on the sampled region.
        let c = 2.0 * (x.norm() + radius) + 6.0;
        for z in zs {
            prop_assert!((&z - grad(&x)).norm() <= 2.0 * c * radius + 1e-6, "{}", (&z - grad(&x)).norm());
        }
    }
}

#[test]
fn sublevel_distances_are_flagged_as_estimates() {
    let s = sets().pop().unwrap();
    let d = distance_to_set(&state(&[3.0, 0.0]), &s).unwrap();
    assert_eq!(d.mode, DistanceMode::Estimated);
    assert!((d.value - 1.0).abs() < 1e-4);
    let b = distance_to_set(&state(&[3.0, 0.0]), &SetSpec::ball(state(&[0.0, 0.0]), 1.0).unwrap()).unwrap();
    assert_eq!(b.mode, DistanceMode::Exact);
    assert_eq!(b.value, 2.0);
}

#[test]
fn sampling_is_reproducible() {
    let bounds = Aabb::cube(2, 2.0);
    for s in sets() {
        assert_eq!(s.sample_interior(20, &bounds, 3), s.sample_interior(20, &bounds, 3));
        assert_eq!(s.sample_boundary(20, &bounds, 3).unwrap(), s.sample_boundary(20, &bounds, 3).unwrap());
    }
}
