use proptest::prelude::*;
use safebar::dynamics::*;
use safebar::geometry::{ScalarFn, SetSpec};
use safebar::{state, StateVector};

fn pt() -> impl Strategy<Value = StateVector> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| state(&[a, b]))
}

fn inclusions() -> Vec<InclusionSpec> {
    let lin = FieldHandle::builtin("linear_safe").unwrap();
    let twist = FieldHandle::from_exprs(&["-x2 + sin(x1)", "x1*x2"]).unwrap();
    vec![
        InclusionSpec::singleton(FieldHandle::builtin("counterexample2d").unwrap()),
        InclusionSpec::ball(lin.clone(), 0.1).unwrap(),
        InclusionSpec::hull(vec![lin, twist, FieldHandle::constant(state(&[0.3, -0.1]))]).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selections_lie_in_the_inclusion(x in pt(), t in 0.0..5.0f64) {
        let plan = BundlePlan { directions: 8, switches: 3, switch_period: None };
        for f in inclusions() {
            let value = eval_inclusion(&f, &x).unwrap();
            for s in selector_family(&f, &plan, 5.0).unwrap() {
                let v = select(&f, &x, &s, t).unwrap();
                prop_assert!(value.distance(&v) <= 1e-12, "{}", value.distance(&v));
            }
        }
    }

    #[test]
    fn double_negation_is_identity(x in pt()) {
        for f in inclusions() {
            prop_assert_eq!(eval_inclusion(&negate(&negate(&f)), &x).unwrap(), eval_inclusion(&f, &x).unwrap());
        }
    }

    #[test]
    fn rescaled_field_is_shorter(x in pt()) {
        let v = ScalarFn::squared_distance_to(SetSpec::point(state(&[0.0, 0.0])));
        for name in BUILTIN_SYSTEMS {
            let f = FieldHandle::builtin(name).unwrap();
            if f.dim() != 2 {
                continue;
            }
            let g = rescale_field(&f, &v);
            prop_assert!(g.eval(&x).unwrap().norm() <= f.eval(&x).unwrap().norm());
        }
    }
}

#[test]
fn counterexample_matches_its_polar_form() {
    let f = FieldHandle::builtin("counterexample2d").unwrap();
    let mut rng = 0x2545f4914f6cdd1du64;
    let mut next = || {
        rng ^= rng << 13;
        rng ^= rng >> 7;
        rng ^= rng << 17;
        (rng >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..1000 {
        let r = 0.01 + 1.5 * next();
        let a = std::f64::consts::TAU * next();
        let x = state(&[r * a.cos(), r * a.sin()]);
        let v = f.eval(&x).unwrap();
        let radial = x.dot(&v) / r;
        let expected = 0.5 * r * r * (1.0 / r).sin().powi(2);
        assert!((radial - expected).abs() <= 1e-10, "r = {r}");
        let angular = (x[0] * v[1] - x[1] * v[0]) / (r * r);
        assert!((angular - 1.0).abs() <= 1e-10);
        let polar = builtin_field("counterexample_radial", &state(&[r])).unwrap();
        assert!((polar[0] - expected).abs() <= 1e-10);
    }
    assert_eq!(f.eval(&state(&[0.0, 0.0])).unwrap(), state(&[0.0, 0.0]));
}
