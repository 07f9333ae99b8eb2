use proptest::prelude::*;
use safebar::dynamics::{BundlePlan, FieldHandle, InclusionSpec};
use safebar::reachability::*;
use safebar::solver::IntegratorConfig;
use safebar::{state, StateVector};

const STEP: f64 = 0.01;

fn pt() -> impl Strategy<Value = StateVector> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| state(&[a, b]))
}

fn perturbed() -> InclusionSpec {
    InclusionSpec::ball(FieldHandle::builtin("linear_safe").unwrap(), 0.1).unwrap()
}

fn res(stride: usize) -> ReachResolution {
    ReachResolution::new(BundlePlan::constant(8), stride)
}

fn contains(cloud: &ReachCloud, p: &StateVector) -> bool {
    cloud.points.iter().any(|q| q == p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tubes_nest(x in pt(), k1 in 1usize..40, dk in 0usize..40, back in any::<bool>()) {
        let sign = if back { -1.0 } else { 1.0 };
        let cfg = IntegratorConfig::rk4(STEP);
        let (t1, t2) = (sign * k1 as f64 * STEP, sign * (k1 + dk) as f64 * STEP);
        let small = reach(&perturbed(), &x, t1, &cfg, &res(1)).unwrap();
        let big = reach(&perturbed(), &x, t2, &cfg, &res(1)).unwrap();
        prop_assert!(small.points.iter().all(|p| contains(&big, p)));
    }

    #[test]
    fn endpoints_lie_in_the_tube(x in pt(), k in 1usize..60, stride in 1usize..5) {
        let cfg = IntegratorConfig::rk4(STEP);
        let t = k as f64 * STEP;
        let ends = reach_endpoint(&perturbed(), &x, t, &cfg, &res(stride)).unwrap();
        let tube = reach(&perturbed(), &x, t, &cfg, &res(stride)).unwrap();
        prop_assert!(ends.points.iter().all(|p| contains(&tube, p)));
    }

    #[test]
    fn backward_and_forward_endpoints_are_dual(x in pt(), t in 0.1..1.5f64) {
        for name in ["linear_safe", "counterexample2d"] {
            let f = InclusionSpec::builtin(name).unwrap();
            let cfg = IntegratorConfig::rk45(1e-10, 1e-12);
            let back = reach_endpoint(&f, &x, -t, &cfg, &res(1)).unwrap();
            for z in &back.points {
                let fwd = reach_endpoint(&f, z, t, &cfg, &res(1)).unwrap();
                let d = fwd.points.iter().map(|p| (p - &x).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(d <= 10.0 * cfg.tol, "{name}: {d}");
            }
        }
    }

    #[test]
    fn cache_roundtrip_is_bit_identical(xs in prop::collection::vec(pt(), 1..4), t in -1.0..1.0f64) {
        let cfg = IntegratorConfig::rk4(STEP);
        let cache = ReachCache::new();
        let clouds: Vec<ReachCloud> = xs.iter().map(|x| cache.reach(&perturbed(), x, t, &cfg, &res(3)).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.rch1");
        cache.save(&path).unwrap();
        let loaded = ReachCache::load(&path).unwrap();
        prop_assert_eq!(loaded.len(), cache.len());
        for (x, c) in xs.iter().zip(&clouds) {
            let key = CacheKey::new(&perturbed().id(), x, t, res(3).key(&cfg));
            let back = loaded.get(&key).unwrap();
            prop_assert_eq!(&back, c);
            for (a, b) in back.points.iter().zip(&c.points) {
                prop_assert!(a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            }
        }
    }
}

#[test]
fn single_cloud_binary_roundtrip() {
    let cfg = IntegratorConfig::rk4(STEP);
    let cloud = reach(&perturbed(), &state(&[0.3, -0.4]), -0.5, &cfg, &res(2)).unwrap();
    let mut buf = Vec::new();
    write_cloud_binary(&cloud, &perturbed().id(), &res(2).key(&cfg), &mut buf).unwrap();
    assert_eq!(&buf[..4], b"RCH1");
    let entries = read_cloud_binary(&buf[..]).unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0].1, cloud);
    assert!(read_cloud_binary(&buf[..buf.len() - 3]).is_err());
}
