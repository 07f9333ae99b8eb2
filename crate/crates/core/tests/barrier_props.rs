use proptest::prelude::*;
use safebar::barrier::*;
use safebar::dynamics::{linear_safe_matrix, lipschitz_estimate, BundlePlan, FieldHandle, InclusionSpec};
use safebar::geometry::{Aabb, SetSpec};
use safebar::reachability::ReachResolution;
use safebar::solver::IntegratorConfig;
use safebar::{state, StateVector};

const STEP: f64 = 0.01;

fn pt() -> impl Strategy<Value = StateVector> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| state(&[a, b]))
}

fn disk() -> SetSpec {
    SetSpec::ball(state(&[0.0, 0.0]), 1.0).unwrap()
}

fn systems() -> Vec<InclusionSpec> {
    let lin = FieldHandle::builtin("linear_safe").unwrap();
    vec![InclusionSpec::singleton(lin.clone()), InclusionSpec::ball(lin, 0.1).unwrap()]
}

fn marginal(f: &InclusionSpec) -> BarrierFn {
    marginal_barrier(f, &disk(), &IntegratorConfig::rk4(STEP), &ReachResolution::new(BundlePlan::constant(8), 1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn marginal_is_nonincreasing_in_time(x in pt(), ks in prop::collection::vec(0usize..60, 2..6)) {
        let mut ts: Vec<f64> = ks.iter().map(|k| *k as f64 * STEP).collect();
        ts.sort_by(f64::total_cmp);
        for f in systems() {
            let vals = marginal(&f).eval_many(&ts, &x).unwrap();
            prop_assert!(vals.windows(2).all(|w| w[1].value <= w[0].value));
            if disk().contains(&x) {
                prop_assert!(vals.iter().all(|v| v.value == 0.0));
            }
        }
    }

    #[test]
    fn marginal_respects_the_filippov_factor(x in pt(), dx in -0.2..0.2f64, dy in -0.2..0.2f64, k in 0usize..40) {
        let y = &x + state(&[dx, dy]);
        let t = k as f64 * STEP;
        let region = SetSpec::boxed(state(&[-3.0, -3.0]), state(&[3.0, 3.0])).unwrap();
        for f in systems() {
            let lambda = lipschitz_estimate(&f, &region, 7).unwrap();
            let b = marginal(&f);
            let gap = (b.value(t, &x).unwrap() - b.value(t, &y).unwrap()).abs();
            prop_assert!(gap <= (lambda * t).exp() * (&x - &y).norm() + 1e-6, "{gap}");
        }
    }

    #[test]
    fn smooth_margins_match_the_analytic_derivative(seed in 0u64..1000) {
        let b = BarrierFn::user("x1^2/10 + x2^2 - 1", 2).unwrap();
        let f = InclusionSpec::builtin("linear_safe").unwrap();
        let mut cfg = InfinitesimalConfig::new(DiffMode::Smooth, Region::Everywhere, Aabb::cube(2, 3.0));
        cfg.samples = 50;
        cfg.seed = seed;
        let h = cfg.fd_step;
        for m in infinitesimal_margins(&b, &f, &cfg).unwrap() {
            let analytic = -m.x[0] * m.x[0] / 5.0;
            // Truncation vanishes on a quadratic, leaving O(h^2) slack plus cancellation of size eps |B| |f| / h.
            let speed = (linear_safe_matrix() * &m.x).norm();
            let rounding = 8.0 * f64::EPSILON * (1.0 + m.value.abs()) * speed / h;
            prop_assert!((m.margin - analytic).abs() <= h * h + rounding, "{} vs {analytic}", m.margin);
        }
    }

    #[test]
    fn closed_form_matches_marginal_off_the_circles(r in 0.05..1.0f64, a in 0.0..std::f64::consts::TAU, k in 0usize..20) {
        let near_circle = (1..=7).any(|j| (r - 1.0 / (j as f64 * std::f64::consts::PI)).abs() < 1e-3);
        prop_assume!(!near_circle);
        let f = InclusionSpec::builtin("counterexample2d").unwrap();
        let x_o = SetSpec::point(state(&[0.0, 0.0]));
        let m = marginal_barrier(&f, &x_o, &IntegratorConfig::rk4(STEP), &ReachResolution::new(BundlePlan::constant(1), 1)).unwrap();
        let x = state(&[r * a.cos(), r * a.sin()]);
        let t = 0.25 * k as f64;
        let exact = counterexample_barrier(t, &x);
        let got = m.value(t, &x).unwrap();
        prop_assert!((got - exact).abs() <= 5e-3 * exact, "{got} vs {exact}");
    }
}

#[test]
fn closed_form_is_the_norm_at_time_zero() {
    for i in 0..1000 {
        let r = 0.02 + 1.5 * (i as f64 + 0.5) / 1000.0;
        let x = state(&[r * (i as f64).cos(), r * (i as f64).sin()]);
        assert!((counterexample_barrier(0.0, &x) - r).abs() <= 1e-12);
    }
}
