use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;
use serde::Serialize;

use safebar::barrier::{
    candidate_sign_check, infinitesimal_check, monotonicity_check, BarrierFn, CheckReport, InfinitesimalConfig,
    SignCheckConfig, Verdict,
};
use safebar::dynamics::selector_family;
use safebar::geometry::SetSpec;
use safebar::reachability::{reach, reach_endpoint, write_cloud_binary, ReachMode, ReachResolution};
use safebar::smoothing::{build_time_partition, smooth_on_compact};
use safebar::solver::{fmt_f64, integrate, Direction};
use safebar::verify::{
    nagumo_check, prop1_check, simulate_safety_check, NagumoConfig, Prop1Config, SafetyProblem, SafetyRoles,
    SamplePlan,
};
use safebar::{state, StateVector};

use crate::artifacts::Artifacts;
use crate::config::{CheckKind, SafetyModeName, ScenarioConfig, SmoothConfig};

/// What a command established, for the exit status.
pub enum Outcome {
    Done,
    Checks(Vec<(String, Verdict)>),
}

fn starts(cfg: &ScenarioConfig) -> Result<Vec<StateVector>> {
    if let Some(s) = &cfg.sampling.starts {
        return Ok(s.iter().map(|p| state(p)).collect());
    }
    let x_o = cfg.set("x_o")?;
    Ok(x_o.sample_boundary(cfg.sampling.trajectories, &cfg.bounds()?, cfg.seed)?)
}

pub fn simulate(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<Outcome> {
    let f = cfg.inclusion()?;
    let horizon = cfg.sampling.horizon;
    let selectors = selector_family(&f, &cfg.bundle, horizon)?;
    let icfg = cfg.integrator();
    let jobs: Vec<(usize, usize, StateVector)> = starts(cfg)?
        .into_iter()
        .enumerate()
        .flat_map(|(i, x)| (0..selectors.len()).map(move |j| (i, j, x.clone())))
        .collect();
    let csvs: Vec<(String, String)> = jobs
        .par_iter()
        .map(|(i, j, x)| -> Result<(String, String)> {
            let traj = integrate(&f, &selectors[*j], x, horizon, Direction::Forward, &icfg)?;
            Ok((format!("trajectories/traj_{i}_{j}.csv"), traj.to_csv_string()))
        })
        .collect::<Result<_>>()?;
    for (name, text) in csvs {
        out.write(&name, text.as_bytes())?;
    }
    Ok(Outcome::Done)
}

pub fn reach_cmd(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<Outcome> {
    let rc = cfg.reach.as_ref().ok_or_else(|| anyhow!("the reach command needs a [reach] section"))?;
    let f = cfg.inclusion()?;
    let icfg = cfg.integrator();
    let res = ReachResolution::new(cfg.bundle.clone(), rc.node_stride);
    let system = f.id();
    let key = res.key(&icfg);
    for (i, p) in rc.starts.iter().enumerate() {
        let x = state(p);
        let cloud = match rc.mode {
            ReachMode::FullTube => reach(&f, &x, rc.horizon, &icfg, &res)?,
            ReachMode::EndpointsOnly => reach_endpoint(&f, &x, rc.horizon, &icfg, &res)?,
        };
        let mut csv = Vec::new();
        cloud.write_csv(&mut csv)?;
        out.write(&format!("reach/cloud_{i}.csv"), &csv)?;
        let mut bin = Vec::new();
        write_cloud_binary(&cloud, &system, &key, &mut bin)?;
        out.write(&format!("reach/cloud_{i}.rch1"), &bin)?;
    }
    Ok(Outcome::Done)
}

/// CSV `t, x1..xn, <column>` of `b` over `points` at each time.
fn grid_csv(b: &BarrierFn, ts: &[f64], points: &[StateVector], column: &str) -> Result<(String, Vec<Vec<f64>>)> {
    let rows: Vec<Vec<f64>> = points.par_iter().map(|x| b.eval_many(ts, x)).collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|vals| vals.into_iter().map(|v| v.value).collect())
        .collect();
    let n = b.dim();
    let mut text: String = std::iter::once("t".to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .chain(std::iter::once(column.to_string()))
        .collect::<Vec<_>>()
        .join(",");
    text.push('\n');
    for (j, t) in ts.iter().enumerate() {
        for (x, vals) in points.iter().zip(&rows) {
            text.push_str(&fmt_f64(*t));
            for v in x.iter() {
                text.push(',');
                text.push_str(&fmt_f64(*v));
            }
            text.push(',');
            text.push_str(&fmt_f64(vals[j]));
            text.push('\n');
        }
    }
    Ok((text, rows))
}

#[derive(Serialize)]
struct GridSummary {
    barrier: String,
    points: usize,
    times: Vec<f64>,
    /// Largest value at grid points of `X_o`; `None` when no point lies in it.
    max_on_x_o: Option<f64>,
    /// Smallest value at grid points of `X_u`.
    min_on_x_u: Option<f64>,
}

fn extremes(rows: &[Vec<f64>], points: &[StateVector], keep: impl Fn(&StateVector) -> bool, max: bool) -> Option<f64> {
    let vals = points
        .iter()
        .zip(rows)
        .filter(|(x, _)| keep(x))
        .flat_map(|(_, r)| r.iter().copied());
    if max {
        vals.reduce(f64::max)
    } else {
        vals.reduce(f64::min)
    }
}

fn unsafe_set(cfg: &ScenarioConfig) -> Result<Option<SetSpec>> {
    if cfg.sets.contains_key("x_u") {
        return Ok(Some(cfg.set("x_u")?));
    }
    if cfg.sets.contains_key("x_s") {
        return Ok(Some(cfg.set("x_s")?.complement()));
    }
    Ok(None)
}

fn safe_set(cfg: &ScenarioConfig) -> Result<SetSpec> {
    if cfg.sets.contains_key("x_s") {
        return cfg.set("x_s");
    }
    unsafe_set(cfg)?
        .map(|u| u.complement())
        .ok_or_else(|| anyhow!("this check needs sets.x_s or sets.x_u"))
}

pub fn barrier_eval(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<Outcome> {
    let b = cfg.barrier()?;
    let points = cfg.bounds()?.grid(cfg.sampling.per_axis);
    let ts = &cfg.sampling.t_grid;
    let (csv, rows) = grid_csv(&b, ts, &points, "B")?;
    out.write("barrier_grid.csv", csv.as_bytes())?;
    let x_o = cfg.sets.contains_key("x_o").then(|| cfg.set("x_o")).transpose()?;
    let x_u = unsafe_set(cfg)?;
    out.write_json(
        "barrier_summary.json",
        &GridSummary {
            barrier: b.provenance().to_string(),
            points: points.len(),
            times: ts.clone(),
            max_on_x_o: x_o.and_then(|k| extremes(&rows, &points, |x| k.contains(x), true)),
            min_on_x_u: x_u.and_then(|u| extremes(&rows, &points, |x| u.contains(x), false)),
        },
    )?;
    Ok(Outcome::Done)
}

/// One report from several: worst margin over the parts, samples summed.
fn merge_reports(name: &str, tol: f64, parts: Vec<CheckReport>) -> CheckReport {
    let samples = parts.iter().map(|r| r.samples).sum();
    let inconclusive = parts.iter().filter(|r| r.verdict == Verdict::Inconclusive).count();
    let margins: Vec<_> = parts
        .into_iter()
        .filter_map(|r| Some((r.witness?, r.worst_margin)))
        .collect();
    let mut r = CheckReport::from_margins(name, tol, margins);
    r.samples = samples;
    if inconclusive > 0 {
        r.notes.push(format!("{inconclusive} trajectories had no samples"));
    }
    r
}

fn monotonicity(cfg: &ScenarioConfig, b: &BarrierFn, out: &mut Artifacts) -> Result<CheckReport> {
    let mc = &cfg.checks.monotonicity;
    let f = cfg.inclusion()?;
    let bounds = cfg.bounds()?;
    let region = SetSpec::boxed(state(&bounds.lo), state(&bounds.hi))?;
    let xs = region.sample_interior(mc.trajectories, &bounds, cfg.seed);
    let selectors = selector_family(&f, &cfg.bundle, mc.horizon)?;
    let icfg = cfg.integrator();
    let results: Vec<(String, CheckReport)> = xs
        .par_iter()
        .enumerate()
        .map(|(k, x)| -> Result<(String, CheckReport)> {
            let traj = integrate(&f, &selectors[k % selectors.len()], x, mc.horizon, Direction::Forward, &icfg)?;
            Ok((traj.to_csv_string(), monotonicity_check(b, &traj, mc.tol)?))
        })
        .collect::<Result<_>>()?;
    let mut parts = Vec::with_capacity(results.len());
    for (k, (csv, r)) in results.into_iter().enumerate() {
        out.write(&format!("checks/monotonicity/traj_{k}.csv"), csv.as_bytes())?;
        parts.push(r);
    }
    Ok(merge_reports("monotonicity", mc.tol, parts))
}

pub fn check(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<Outcome> {
    if cfg.checks.run.is_empty() {
        bail!("checks.run lists no checks");
    }
    let mut kinds = cfg.checks.run.clone();
    kinds.sort();
    kinds.dedup();
    let bounds = cfg.bounds()?;
    let f = cfg.inclusion()?;
    let needs_barrier = kinds
        .iter()
        .any(|k| matches!(k, CheckKind::Sign | CheckKind::Monotonicity | CheckKind::Infinitesimal | CheckKind::Prop1));
    let b = if needs_barrier { Some(cfg.barrier()?) } else { None };
    let barrier = || b.as_ref().expect("barrier built above");
    let mut verdicts = Vec::new();
    for kind in kinds {
        let report = match kind {
            CheckKind::Sign => {
                let x_u = unsafe_set(cfg)?.ok_or_else(|| anyhow!("the sign check needs sets.x_u or sets.x_s"))?;
                let mut sc = SignCheckConfig::new(bounds.clone());
                sc.n_o_boundary = cfg.sampling.boundary;
                sc.n_o_interior = cfg.sampling.interior;
                sc.n_u = cfg.sampling.n_u;
                sc.seed = cfg.seed;
                candidate_sign_check(barrier(), &cfg.set("x_o")?, &x_u, &cfg.sampling.t_grid, &sc)?
            }
            CheckKind::Monotonicity => monotonicity(cfg, barrier(), out)?,
            CheckKind::Infinitesimal => {
                let s = &cfg.checks.infinitesimal;
                let mut ic = InfinitesimalConfig::new(s.mode, s.region(), bounds.clone());
                ic.g = s.relax.build()?;
                ic.t_grid = cfg.sampling.t_grid.clone();
                ic.samples = s.samples;
                ic.fd_step = s.fd_step;
                ic.tol = s.tol;
                ic.seed = cfg.seed;
                if let Some(r) = s.exclude_radius {
                    ic.exclude = Some(exclusion(cfg, r)?);
                }
                infinitesimal_check(barrier(), &f, &ic)?
            }
            CheckKind::Safety => {
                let r = safety(cfg)?;
                out.write_json("checks/safety.json", &r)?;
                out.write("checks/safety.txt", r.summary().as_bytes())?;
                let v = if r.violated() { Verdict::Fail } else { Verdict::Pass };
                verdicts.push(("safety".to_string(), v));
                continue;
            }
            CheckKind::Nagumo => {
                let s = &cfg.checks.nagumo;
                let mut nc = NagumoConfig::new(bounds.clone());
                nc.samples = s.samples;
                nc.tol = s.tol;
                nc.seed = cfg.seed;
                nagumo_check(&f, &cfg.set(&s.set)?, s.mode, &nc)?
            }
            CheckKind::Prop1 => {
                let s = &cfg.checks.prop1;
                let mut pc = Prop1Config::new(bounds.clone());
                pc.region_samples = s.samples;
                pc.tol = s.tol;
                pc.seed = cfg.seed;
                prop1_check(&f, &cfg.set("x_o")?, &safe_set(cfg)?, barrier(), &s.relax.build()?, s.mode, &pc)?
            }
        };
        let name = check_name(kind);
        out.write_json(&format!("checks/{name}.json"), &report)?;
        verdicts.push((name.to_string(), report.verdict));
    }
    Ok(Outcome::Checks(verdicts))
}

fn check_name(kind: CheckKind) -> &'static str {
    match kind {
        CheckKind::Sign => "sign",
        CheckKind::Monotonicity => "monotonicity",
        CheckKind::Infinitesimal => "infinitesimal",
        CheckKind::Safety => "safety",
        CheckKind::Nagumo => "nagumo",
        CheckKind::Prop1 => "prop1",
    }
}

/// Points within `r` of `X_o`.
fn exclusion(cfg: &ScenarioConfig, r: f64) -> Result<SetSpec> {
    let x_o = cfg.set("x_o")?;
    Ok(match x_o {
        SetSpec::Ball { center, radius } => SetSpec::ball(center, radius + r)?,
        SetSpec::Points(ps) if ps.len() == 1 => SetSpec::ball(ps[0].clone(), r)?,
        other => bail!("exclude_radius needs a ball or single-point X_o, got {other:?}"),
    })
}

fn safety(cfg: &ScenarioConfig) -> Result<safebar::verify::SafetyReport> {
    let s = &cfg.checks.safety;
    let roles = match s.mode {
        SafetyModeName::Safety => SafetyRoles::Safety {
            x_o: cfg.set("x_o")?,
            x_u: unsafe_set(cfg)?.ok_or_else(|| anyhow!("the safety check needs sets.x_u or sets.x_s"))?,
        },
        SafetyModeName::Conditional => SafetyRoles::Conditional {
            x_o: cfg.set("x_o")?,
            x_s: safe_set(cfg)?,
        },
        SafetyModeName::PreInvariance => SafetyRoles::PreInvariance { x_s: safe_set(cfg)? },
    };
    let mut p = SafetyProblem::new(cfg.inclusion()?, roles, cfg.sampling.horizon, cfg.bounds()?);
    p.samples = SamplePlan {
        boundary: cfg.sampling.boundary,
        interior: cfg.sampling.interior,
    };
    p.bundle = cfg.bundle.clone();
    p.integrator = cfg.integrator();
    p.tol = s.tol;
    p.seed = cfg.seed;
    Ok(simulate_safety_check(&p)?)
}

#[derive(Serialize)]
struct ConverseSummary {
    barrier: String,
    times: Vec<f64>,
    points: usize,
    /// Largest value on samples of the target set.
    max_on_target: f64,
    /// Smallest value at grid points outside the target.
    min_off_target: Option<f64>,
}

pub fn smooth(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<Outcome> {
    let sc = cfg.smooth.as_ref().ok_or_else(|| anyhow!("the smooth command needs a [smooth] section"))?;
    let bounds = cfg.bounds()?;
    let grid = bounds.grid(cfg.sampling.per_axis);
    match sc {
        SmoothConfig::Compact {
            set,
            inner,
            outer,
            k_max,
            bandwidth,
        } => {
            let k = cfg.set(set)?;
            let mut pts = Vec::new();
            for x in grid {
                let d = k.distance(&x)?;
                if d >= *inner && d <= *outer {
                    pts.push(x);
                }
            }
            if pts.is_empty() {
                bail!("no grid point lies in the smoothing shell [{inner}, {outer}] around `{set}`");
            }
            let h = cfg.barrier()?;
            let partition = build_time_partition(&h, &pts, *k_max)?;
            let g = smooth_on_compact(&h, &pts, partition, *bandwidth)?;
            let ts = cfg.sampling.t_grid.iter().filter(|t| **t <= g.horizon());
            for (j, t) in ts.enumerate() {
                let mut csv = Vec::new();
                g.write_grid_csv(*t, &pts, &mut csv)?;
                out.write(&format!("smooth/grid_{j}.csv"), &csv)?;
            }
            out.write_json("smooth/validation.json", g.report())?;
        }
        SmoothConfig::Converse {
            target,
            t_max,
            per_axis,
            inner_radius,
        } => {
            let b = cfg.converse(target, *t_max, *per_axis, *inner_radius)?;
            let k = cfg.set(target)?;
            let mut ts: Vec<f64> = cfg.sampling.t_grid.iter().copied().filter(|t| *t <= *t_max).collect();
            if ts.is_empty() {
                ts = vec![0.0, *t_max];
            }
            let ts = &ts;
            let (csv, rows) = grid_csv(&b, ts, &grid, "B")?;
            out.write("smooth/grid.csv", csv.as_bytes())?;
            let on = k.sample_interior(cfg.sampling.interior.max(1), &bounds, cfg.seed);
            let mut max_on = f64::NEG_INFINITY;
            for x in &on {
                for t in ts {
                    max_on = max_on.max(b.value(*t, x)?);
                }
            }
            out.write_json(
                "smooth/validation.json",
                &ConverseSummary {
                    barrier: b.provenance().to_string(),
                    times: ts.clone(),
                    points: grid.len(),
                    max_on_target: max_on,
                    min_off_target: extremes(&rows, &grid, |x| !k.contains(x), false),
                },
            )?;
        }
    }
    Ok(Outcome::Done)
}
