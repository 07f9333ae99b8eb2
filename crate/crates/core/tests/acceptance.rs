//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safebar::barrier::*;
use safebar::dynamics::{lipschitz_estimate, selector_family, BundlePlan, FieldHandle, InclusionSpec, Selector};
use safebar::geometry::{Aabb, SetSpec};
use safebar::reachability::{filippov_check, ReachResolution};
use safebar::smoothing::*;
use safebar::solver::{integrate, Direction, IntegratorConfig};
use safebar::verify::*;
use safebar::{state, StateVector};

// Pinned tolerances.
const CLOSED_FORM_REL: f64 = 5e-3;
const CYCLE_DRIFT: f64 = 1e-6;
const NORM_IDENTITY: f64 = 1e-12;
const FD_MATCH: f64 = 1e-6;
const FILIPPOV: f64 = 1e-6;
const MONOTONE_FACTOR: f64 = 10.0;
const HERMITE_VALUE: f64 = 1e-12;
const HERMITE_SLOPE: f64 = 1e-6;
const CONVERSE_DECREASE: f64 = 1e-4;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn origin() -> SetSpec {
    SetSpec::point(state(&[0.0, 0.0]))
}

fn disk() -> SetSpec {
    SetSpec::ball(state(&[0.0, 0.0]), 1.0).unwrap()
}

fn upper() -> SetSpec {
    SetSpec::halfspace(state(&[0.0, -1.0]), -2.0).unwrap()
}

fn off_circles(r: f64) -> f64 {
    // Nudge radii out of the 1e-3 neighbourhoods of the limit cycles.
    let mut r = r;
    for k in 1..=8 {
        let c = 1.0 / (k as f64 * PI);
        if (r - c).abs() < 1e-3 {
            r = if r >= c { c + 1.5e-3 } else { c - 1.5e-3 };
        }
    }
    r
}

fn closed_form_equivalence() -> Outcome {
    let f = InclusionSpec::builtin("counterexample2d").unwrap();
    let res = ReachResolution::new(BundlePlan::constant(1), 1);
    let b = marginal_barrier(&f, &origin(), &IntegratorConfig::rk4(0.01), &res).map_err(|e| e.to_string())?;
    let ts: Vec<f64> = (0..=20).map(|i| 0.25 * i as f64).collect();
    let mut worst = 0.0f64;
    for i in 0..40 {
        let r = off_circles(0.05 + 0.95 * i as f64 / 39.0);
        let a = 0.37 * i as f64;
        let x = state(&[r * a.cos(), r * a.sin()]);
        let vals = b.eval_many(&ts, &x).map_err(|e| e.to_string())?;
        for (t, v) in ts.iter().zip(vals) {
            let exact = counterexample_barrier(*t, &x);
            worst = worst.max((v.value - exact).abs() / exact);
        }
    }
    verdict(worst <= CLOSED_FORM_REL, format!("max relative error {worst:.3e} over 840 points (limit {CLOSED_FORM_REL:.0e})"))
}

fn limit_cycles() -> Outcome {
    let f = InclusionSpec::builtin("counterexample2d").unwrap();
    let cfg = IntegratorConfig::rk45(1e-12, 1e-14);
    let mut worst = 0.0f64;
    for k in 1..=4 {
        let r = 1.0 / (k as f64 * PI);
        let tr = integrate(&f, &Selector::none(), &state(&[r, 0.0]), TAU, Direction::Forward, &cfg).map_err(|e| e.to_string())?;
        let drift = tr.states.iter().map(|x| (x.norm() - r).abs()).fold(0.0, f64::max);
        worst = worst.max(drift);
    }
    verdict(worst <= CYCLE_DRIFT, format!("max radius drift {worst:.3e} (limit {CYCLE_DRIFT:.0e})"))
}

fn norm_identity() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let r = off_circles(0.01 + 1.99 * (i as f64 + 0.5) / 1000.0);
        let a = 2.399963 * i as f64;
        let x = state(&[r * a.cos(), r * a.sin()]);
        worst = worst.max((counterexample_barrier(0.0, &x) - x.norm()).abs());
    }
    verdict(worst <= NORM_IDENTITY, format!("max |B(0,x) - |x|| = {worst:.3e} over 1000 radii"))
}

fn linear_example() -> Outcome {
    let f = InclusionSpec::builtin("linear_safe").unwrap();
    let b = BarrierFn::user("x1^2/10 + x2^2 - 1", 2).map_err(|e| e.to_string())?;
    let mut cfg = InfinitesimalConfig::new(DiffMode::Smooth, Region::Everywhere, Aabb::cube(2, 3.0));
    cfg.samples = 400;
    let inf = infinitesimal_check(&b, &f, &cfg).map_err(|e| e.to_string())?;
    let fd_gap = infinitesimal_margins(&b, &f, &cfg)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|m| (m.margin + m.x[0] * m.x[0] / 5.0).abs())
        .fold(0.0, f64::max);

    let p = SafetyProblem::new(f.clone(), SafetyRoles::Safety { x_o: disk(), x_u: upper() }, 50.0, Aabb::cube(2, 4.0));
    let safety = simulate_safety_check(&p).map_err(|e| e.to_string())?;
    let starts = safety.coverage.boundary_samples + safety.coverage.interior_samples;

    let nag = nagumo_check(&f, &disk(), NagumoMode::Boundary, &NagumoConfig::new(Aabb::cube(2, 2.0))).map_err(|e| e.to_string())?;
    let diag = nag
        .failures
        .iter()
        .find(|(w, _)| (w.x[0] + FRAC_1_SQRT_2).abs() < 1e-9 && (w.x[1] - FRAC_1_SQRT_2).abs() < 1e-9)
        .map(|(_, m)| *m);

    let ok = inf.verdict == Verdict::Pass
        && fd_gap <= FD_MATCH
        && safety.verdict == SafetyVerdict::NoViolationFound
        && starts == 96
        && nag.verdict == Verdict::Fail
        && diag.is_some_and(|m| (m - 4.0).abs() < 1e-4);
    verdict(
        ok,
        format!(
            "infinitesimal {:?} (fd gap {fd_gap:.2e}), safety {:?} from {starts} starts, nagumo {:?} with <x,Ax> = {} at (-sqrt2/2, sqrt2/2)",
            inf.verdict,
            safety.verdict,
            nag.verdict,
            diag.map_or("none".into(), |m| format!("{m:.6}")),
        ),
    )
}

fn filippov_bound() -> Outcome {
    let field = FieldHandle::builtin("linear_safe").unwrap();
    let region = SetSpec::boxed(state(&[-3.0, -3.0]), state(&[3.0, 3.0])).unwrap();
    let lambda = lipschitz_estimate(&InclusionSpec::singleton(field.clone()), &region, 21).map_err(|e| e.to_string())?;
    let cfg = IntegratorConfig::rk45(1e-10, 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let x = state(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let (r, a): (f64, f64) = (rng.gen_range(0.0..0.5), rng.gen_range(0.0..TAU));
        let y = &x + state(&[r * a.cos(), r * a.sin()]);
        let rep = filippov_check(&field, &x, &y, 1.0, lambda, &cfg, &region).map_err(|e| e.to_string())?;
        worst = worst.max(rep.max_violation);
    }
    verdict(worst <= FILIPPOV, format!("lambda {lambda:.4}, max violation {worst:.3e} over 20 pairs (limit {FILIPPOV:.0e})"))
}

fn monotonicity() -> Outcome {
    let cfg = IntegratorConfig::rk4(0.01);
    let limit = MONOTONE_FACTOR * cfg.tol;
    let res = ReachResolution::new(BundlePlan::constant(1), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut lines = Vec::new();
    let mut ok = true;
    for name in safebar::dynamics::BUILTIN_SYSTEMS {
        let f = InclusionSpec::builtin(name).unwrap();
        let x_o = if name == "linear_safe" {
            disk()
        } else {
            SetSpec::point(StateVector::zeros(f.dim()))
        };
        let b = marginal_barrier(&f, &x_o, &cfg, &res).map_err(|e| e.to_string())?;
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..50 {
            let x0 = StateVector::from_iterator(f.dim(), (0..f.dim()).map(|_| rng.gen_range(-1.0..1.0)));
            let tr = integrate(&f, &Selector::none(), &x0, 2.0, Direction::Forward, &cfg).map_err(|e| e.to_string())?;
            let rep = monotonicity_check(&b, &tr, limit).map_err(|e| e.to_string())?;
            worst = worst.max(rep.worst_margin);
        }
        ok &= worst <= limit;
        lines.push(format!("{name} {worst:.2e}"));
    }
    verdict(ok, format!("max increment per system [{}] (limit {limit:.0e})", lines.join(", ")))
}

fn smoothing_sandwich() -> Outcome {
    let h = BarrierFn::from_fn(2, Provenance::User { expression: "exp(-t)*|x|".into() }, |t, x| (-t).exp() * x.norm());
    let grid: Vec<StateVector> = Aabb::cube(2, 1.0).grid(50).into_iter().filter(|x| (0.5..=1.0).contains(&x.norm())).collect();
    let k_max = 3;
    let partition = build_time_partition(&h, &grid, k_max).map_err(|e| e.to_string())?;
    let g = smooth_on_compact(&h, &grid, partition, 0.05).map_err(|e| e.to_string())?;
    let ts: Vec<f64> = (0..50).map(|j| k_max as f64 * j as f64 / 49.0).collect();
    let mut bad = 0usize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in &grid {
        let gv = g.eval_many(&ts, x).map_err(|e| e.to_string())?;
        for (j, (t, v)) in ts.iter().zip(&gv).enumerate() {
            let hv = (-t).exp() * x.norm();
            lo = lo.min(v / hv);
            hi = hi.max(v / hv);
            let sandwich = *v >= 0.5 * hv && *v <= 2.0 * hv;
            let monotone = j == 0 || *v <= gv[j - 1] + 1e-12;
            bad += usize::from(!(sandwich && monotone));
        }
    }
    verdict(
        bad == 0,
        format!("{} points x 50 times, g/h in [{lo:.4}, {hi:.4}], {bad} violations", grid.len()),
    )
}

fn hermite_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut value_err, mut slope) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let t0 = rng.gen_range(-10.0..10.0);
        let len = rng.gen_range(0.1..10.0);
        let t1 = t0 + len;
        let (w0, w1) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let p = |t: f64| hermite_segment(t, t0, t1, w0, w1).unwrap();
        let mid = p(t0 + 0.5 * len);
        value_err = value_err.max((p(t0) - w0).abs()).max((p(t1) - w1).abs()).max((mid - 0.5 * (w0 + w1)).abs());
        // One-sided Richardson difference cancels the leading curvature term.
        let d = 1e-5 * len;
        let d0 = 2.0 * (p(t0 + d) - w0) / d - (p(t0 + 2.0 * d) - w0) / (2.0 * d);
        let d1 = 2.0 * (w1 - p(t1 - d)) / d - (w1 - p(t1 - 2.0 * d)) / (2.0 * d);
        slope = slope.max(d0.abs()).max(d1.abs());
    }
    verdict(
        value_err <= HERMITE_VALUE && slope <= HERMITE_SLOPE,
        format!("1000 segments, value error {value_err:.2e}, endpoint slope {slope:.2e}"),
    )
}

fn converse_pipeline() -> Outcome {
    let field = FieldHandle::builtin("counterexample2d").unwrap();
    let mut cfg = ConverseConfig::new(Aabb::cube(2, 1.0));
    cfg.t_max = 0.2;
    let b = converse_smooth_barrier(&field, &origin(), &cfg).map_err(|e| e.to_string())?;
    let ts = [0.0, 0.05, 0.1, 0.2];
    let on_target = b
        .eval_many(&ts, &state(&[0.0, 0.0]))
        .map_err(|e| e.to_string())?
        .iter()
        .map(|v| v.value.abs())
        .fold(0.0, f64::max);
    let mut min_off = f64::INFINITY;
    for x in Aabb::cube(2, 1.0).grid(30) {
        for v in b.eval_many(&ts, &x).map_err(|e| e.to_string())? {
            min_off = min_off.min(v.value);
        }
    }
    let f = InclusionSpec::singleton(field);
    let mut icfg = InfinitesimalConfig::new(DiffMode::Smooth, Region::MarginBand(0.05), Aabb::cube(2, 0.1));
    icfg.samples = 200;
    icfg.t_grid = vec![0.05, 0.1, 0.15, 0.19];
    icfg.exclude = Some(SetSpec::ball(state(&[0.0, 0.0]), 0.011).unwrap());
    let margins = infinitesimal_margins(&b, &f, &icfg).map_err(|e| e.to_string())?;
    let finite: Vec<f64> = margins.iter().map(|m| m.margin).filter(|m| m.is_finite()).collect();
    let worst = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    verdict(
        on_target == 0.0 && min_off > 0.0 && finite.len() >= 200 && worst <= CONVERSE_DECREASE,
        format!(
            "max |B| on X_o {on_target:.1e}, min B off X_o {min_off:.3e}, worst decrease margin {worst:.3e} over {} band samples",
            finite.len()
        ),
    )
}

fn perturbed_safety() -> Outcome {
    let f = InclusionSpec::ball(FieldHandle::builtin("linear_safe").unwrap(), 0.1).unwrap();
    let mut p = SafetyProblem::new(f.clone(), SafetyRoles::Safety { x_o: disk(), x_u: upper() }, 50.0, Aabb::cube(2, 4.0));
    p.bundle = BundlePlan::constant(16);
    let selectors = selector_family(&f, &p.bundle, 50.0).map_err(|e| e.to_string())?.len();
    let r = simulate_safety_check(&p).map_err(|e| e.to_string())?;
    let disclaimer = r.disclaimers.iter().any(|d| d.contains("under-approximate"));
    verdict(
        r.verdict == SafetyVerdict::NoViolationFound && disclaimer && selectors == 16,
        format!("{:?} with {selectors} selectors, disclaimer present: {disclaimer}", r.verdict),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("closed-form barrier equivalence", closed_form_equivalence),
        ("limit cycles", limit_cycles),
        ("t=0 norm identity", norm_identity),
        ("linear example", linear_example),
        ("filippov bound", filippov_bound),
        ("marginal monotonicity", monotonicity),
        ("smoothing sandwich", smoothing_sandwich),
        ("hermite contract", hermite_contract),
        ("smooth converse pipeline", converse_pipeline),
        ("perturbed safety", perturbed_safety),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1}s]", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
