//! Barrier validity checks: sign conditions, monotonicity along solutions
//! and the infinitesimal decrease conditions in smooth, Clarke and
//! proximal form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BarrierFn, RelaxFn};
use crate::dynamics::{eval_inclusion, InclusionSpec};
use crate::error::{Error, Result};
use crate::geometry::{
    clarke_gradient_sample_with, fd_gradient, halton_point, proximal_subgradient_test_with, Aabb, SetSpec,
    SubgradientCandidate,
};
use crate::solver::{Direction, Trajectory};
use crate::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub eta: Option<Vec<f64>>,
    pub zeta: Option<Vec<f64>>,
}

impl Witness {
    pub fn at(t: f64, x: &StateVector) -> Self {
        Witness {
            t,
            x: x.iter().copied().collect(),
            eta: None,
            zeta: None,
        }
    }
}

/// Outcome of one check. Margins are violation amounts: the check fails iff
/// the worst (largest) margin exceeds its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub samples: usize,
    pub worst_margin: f64,
    pub witness: Option<Witness>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Every sample whose margin exceeded the tolerance (largest first).
    #[serde(skip)]
    pub failures: Vec<(Witness, f64)>,
}

const MAX_FAILURES: usize = 1000;

impl CheckReport {
    pub fn from_margins(check: impl Into<String>, tol: f64, margins: Vec<(Witness, f64)>) -> Self {
        let samples = margins.len();
        if samples == 0 {
            return CheckReport {
                check: check.into(),
                samples,
                worst_margin: f64::NAN,
                witness: None,
                verdict: Verdict::Inconclusive,
                notes: vec!["no samples in the check region".into()],
                failures: vec![],
            };
        }
        let mut worst_idx = 0;
        for (i, (_, m)) in margins.iter().enumerate() {
            if *m > margins[worst_idx].1 {
                worst_idx = i;
            }
        }
        let worst_margin = margins[worst_idx].1;
        let witness = Some(margins[worst_idx].0.clone());
        let mut failures: Vec<(Witness, f64)> = margins.into_iter().filter(|(_, m)| *m > tol).collect();
        failures.sort_by(|a, b| b.1.total_cmp(&a.1));
        failures.truncate(MAX_FAILURES);
        CheckReport {
            check: check.into(),
            samples,
            worst_margin,
            witness,
            verdict: if worst_margin > tol { Verdict::Fail } else { Verdict::Pass },
            notes: vec![],
            failures,
        }
    }

    pub fn inconclusive(check: impl Into<String>, note: impl Into<String>) -> Self {
        let mut r = Self::from_margins(check, 0.0, vec![]);
        r.notes = vec![note.into()];
        r
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Clone, Debug)]
pub struct SignCheckConfig {
    pub bounds: Aabb,
    pub n_o_boundary: usize,
    pub n_o_interior: usize,
    pub n_u: usize,
    /// Strict positivity on `X_u` is tested as `B >= pos_tol`.
    pub pos_tol: f64,
    /// Allowed rounding above zero on `X_o`.
    pub zero_tol: f64,
    pub seed: u64,
}

impl SignCheckConfig {
    pub fn new(bounds: Aabb) -> Self {
        SignCheckConfig {
            bounds,
            n_o_boundary: 64,
            n_o_interior: 32,
            n_u: 200,
            pos_tol: 1e-9,
            zero_tol: 1e-12,
            seed: 0,
        }
    }
}

/// `B <= 0` on samples of `X_o` and `B >= pos_tol` on samples of `X_u`,
/// at every time of `t_grid`.
pub fn candidate_sign_check(
    b: &BarrierFn,
    x_o: &SetSpec,
    x_u: &SetSpec,
    t_grid: &[f64],
    cfg: &SignCheckConfig,
) -> Result<CheckReport> {
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("sign check needs a nonempty time grid".into()));
    }
    let mut o_samples = x_o.sample_boundary(cfg.n_o_boundary, &cfg.bounds, cfg.seed)?;
    o_samples.extend(x_o.sample_interior(cfg.n_o_interior, &cfg.bounds, cfg.seed));
    let u_samples = x_u.sample_interior(cfg.n_u, &cfg.bounds, cfg.seed);
    if o_samples.is_empty() || u_samples.is_empty() {
        return Ok(CheckReport::inconclusive("candidate_sign", "empty X_o or X_u sample set"));
    }
    let jobs: Vec<(bool, StateVector)> = o_samples
        .into_iter()
        .map(|x| (true, x))
        .chain(u_samples.into_iter().map(|x| (false, x)))
        .collect();
    let per: Vec<Vec<(Witness, f64)>> = jobs
        .par_iter()
        .map(|(in_o, x)| -> Result<Vec<(Witness, f64)>> {
            let vals = b.eval_many(t_grid, x)?;
            Ok(t_grid
                .iter()
                .zip(vals)
                .map(|(t, v)| {
                    let m = if *in_o { v.value - cfg.zero_tol } else { cfg.pos_tol - v.value };
                    (Witness::at(*t, x), m)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(CheckReport::from_margins("candidate_sign", 0.0, per.into_iter().flatten().collect()))
}

/// Worst increase of `t -> B(t, φ(t))` between consecutive stored nodes.
pub fn monotonicity_check(b: &BarrierFn, traj: &Trajectory, tol: f64) -> Result<CheckReport> {
    if traj.direction != Direction::Forward {
        return Err(Error::Precondition("monotonicity check needs a forward trajectory".into()));
    }
    let vals: Vec<f64> = traj
        .times
        .par_iter()
        .zip(traj.states.par_iter())
        .map(|(t, x)| b.value(*t, x))
        .collect::<Result<_>>()?;
    let margins = (1..vals.len())
        .map(|i| (Witness::at(traj.times[i], &traj.states[i]), vals[i] - vals[i - 1]))
        .collect();
    Ok(CheckReport::from_margins("monotonicity", tol, margins))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffMode {
    Smooth,
    Clarke,
    Proximal,
}

/// Where the decrease condition is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `{(t,x) : 0 < B(t,x) <= width}`, a realization of `U(K) \ K`.
    MarginBand(f64),
    Everywhere,
    /// `{|B| <= tol}` reached by Newton projection of the samples.
    Boundary(f64),
}

#[derive(Clone, Debug)]
pub struct InfinitesimalConfig {
    pub mode: DiffMode,
    pub region: Region,
    pub g: RelaxFn,
    pub bounds: Aabb,
    pub t_grid: Vec<f64>,
    pub samples: usize,
    pub fd_step: f64,
    pub tol: f64,
    pub seed: u64,
    pub clarke_radius: f64,
    pub clarke_samples: usize,
    /// Samples inside this set are skipped.
    pub exclude: Option<SetSpec>,
}

impl InfinitesimalConfig {
    pub fn new(mode: DiffMode, region: Region, bounds: Aabb) -> Self {
        InfinitesimalConfig {
            mode,
            region,
            g: RelaxFn::Zero,
            bounds,
            t_grid: vec![0.0],
            samples: 400,
            fd_step: 1e-5,
            tol: 1e-6,
            seed: 0,
            clarke_radius: 1e-3,
            clarke_samples: 9,
            exclude: None,
        }
    }
}

/// One sampled instance of the decrease condition.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMargin {
    pub t: f64,
    pub x: StateVector,
    pub value: f64,
    pub eta: StateVector,
    pub zeta: StateVector,
    /// `<ζ, (1, η)> - g(B)` maximized over `η ∈ F(x)` (and over ζ for the
    /// nonsmooth modes); `-inf` when no proximal subgradient was admitted.
    pub margin: f64,
}

const PROXIMAL_EPS: [f64; 4] = [0.0, 1.0, 10.0, 100.0];

fn project_to_zero(b: &BarrierFn, t: f64, x: &StateVector, h: f64) -> Result<StateVector> {
    let mut y = x.clone();
    for _ in 0..40 {
        let v = b.value(t, &y)?;
        if v.abs() <= 1e-14 {
            break;
        }
        let g = fd_gradient(|z| b.value(t, z).unwrap_or(f64::NAN), &y, h)?;
        let gn = g.norm_squared();
        if !(gn > 0.0) {
            break;
        }
        y -= g * (v / gn);
    }
    Ok(y)
}

fn sample_region(b: &BarrierFn, cfg: &InfinitesimalConfig) -> Result<Vec<(f64, StateVector, f64)>> {
    let n = b.dim();
    let budget = match cfg.region {
        Region::Everywhere => cfg.samples * 4,
        _ => cfg.samples * 200,
    };
    let chunk = (cfg.samples * 2).max(64);
    let mut out = Vec::with_capacity(cfg.samples);
    let mut start = 1;
    while out.len() < cfg.samples && start <= budget {
        let end = (start + chunk).min(budget + 1);
        let batch: Vec<Option<(f64, StateVector, f64)>> = (start..end)
            .into_par_iter()
            .map(|i| -> Result<Option<(f64, StateVector, f64)>> {
                let mut x = cfg.bounds.from_unit(&halton_point(i, n, cfg.seed));
                let t = cfg.t_grid[(i - 1) % cfg.t_grid.len()];
                if let Region::Boundary(_) = cfg.region {
                    x = project_to_zero(b, t, &x, cfg.fd_step)?;
                    if !cfg.bounds.contains(&x) {
                        return Ok(None);
                    }
                }
                if let Some(ex) = &cfg.exclude {
                    if ex.contains(&x) {
                        return Ok(None);
                    }
                }
                let v = b.value(t, &x)?;
                let keep = match cfg.region {
                    Region::Everywhere => true,
                    Region::MarginBand(w) => v > 0.0 && v <= w,
                    Region::Boundary(tol) => v.abs() <= tol,
                };
                Ok(keep.then_some((t, x, v)))
            })
            .collect::<Result<_>>()?;
        out.extend(batch.into_iter().flatten());
        start = end;
    }
    out.truncate(cfg.samples);
    Ok(out)
}

fn time_derivative(b: &BarrierFn, t: f64, x: &StateVector, h: f64) -> Result<f64> {
    if b.is_static() {
        return Ok(0.0);
    }
    if t >= h {
        Ok((b.value(t + h, x)? - b.value(t - h, x)?) / (2.0 * h))
    } else {
        let f0 = b.value(t, x)?;
        let f1 = b.value(t + h, x)?;
        let f2 = b.value(t + 2.0 * h, x)?;
        Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
    }
}

fn margin_at(
    b: &BarrierFn,
    f: &InclusionSpec,
    cfg: &InfinitesimalConfig,
    t: f64,
    x: &StateVector,
    v: f64,
) -> Result<SampleMargin> {
    let fx = eval_inclusion(f, x)?;
    let gb = cfg.g.eval(v);
    let h = cfg.fd_step;
    let evaluate = |zeta_t: f64, zeta_x: &StateVector| {
        let (s, eta) = fx.support(zeta_x);
        (zeta_t + s - gb, eta)
    };
    match cfg.mode {
        DiffMode::Smooth => {
            let gx = fd_gradient(|z| b.value(t, z).unwrap_or(f64::NAN), x, h)?;
            let gt = time_derivative(b, t, x, h)?;
            let (margin, eta) = evaluate(gt, &gx);
            let zeta = if b.is_static() {
                gx
            } else {
                StateVector::from_iterator(x.len() + 1, std::iter::once(gt).chain(gx.iter().copied()))
            };
            Ok(SampleMargin {
                t,
                x: x.clone(),
                value: v,
                eta,
                zeta,
                margin,
            })
        }
        DiffMode::Clarke | DiffMode::Proximal => {
            let (zetas, static_b) = generators(b, cfg, t, x)?;
            let mut best: Option<(f64, StateVector, StateVector)> = None;
            for z in zetas {
                let (zt, zx) = split(&z, static_b);
                if cfg.mode == DiffMode::Proximal && !proximal_admits(b, cfg, t, x, &z, static_b)? {
                    continue;
                }
                let (m, eta) = evaluate(zt, &zx);
                if best.as_ref().map_or(true, |(bm, _, _)| m > *bm) {
                    best = Some((m, eta, z));
                }
            }
            Ok(match best {
                Some((margin, eta, zeta)) => SampleMargin {
                    t,
                    x: x.clone(),
                    value: v,
                    eta,
                    zeta,
                    margin,
                },
                None => SampleMargin {
                    t,
                    x: x.clone(),
                    value: v,
                    eta: StateVector::zeros(x.len()),
                    zeta: StateVector::zeros(x.len()),
                    margin: f64::NEG_INFINITY,
                },
            })
        }
    }
}

fn split(z: &StateVector, static_b: bool) -> (f64, StateVector) {
    if static_b {
        (0.0, z.clone())
    } else {
        (z[0], z.rows(1, z.len() - 1).into_owned())
    }
}

/// Gradient samples in `x` (static `B`) or in `(t, x)`.
fn generators(b: &BarrierFn, cfg: &InfinitesimalConfig, t: f64, x: &StateVector) -> Result<(Vec<StateVector>, bool)> {
    let n = x.len();
    let m = cfg.clarke_samples.max(2 * (n + 1) + 1);
    if b.is_static() {
        let g = clarke_gradient_sample_with(|y| b.value(t, y).unwrap_or(f64::NAN), x, cfg.clarke_radius, m, cfg.fd_step)?;
        return Ok((g, true));
    }
    let tc = t.max(cfg.clarke_radius + cfg.fd_step);
    let center = StateVector::from_iterator(n + 1, std::iter::once(tc).chain(x.iter().copied()));
    let g = clarke_gradient_sample_with(
        |z| b.value(z[0], &z.rows(1, n).into_owned()).unwrap_or(f64::NAN),
        &center,
        cfg.clarke_radius,
        m,
        cfg.fd_step,
    )?;
    Ok((g, false))
}

fn proximal_admits(
    b: &BarrierFn,
    cfg: &InfinitesimalConfig,
    t: f64,
    x: &StateVector,
    zeta: &StateVector,
    static_b: bool,
) -> Result<bool> {
    let n = x.len();
    for eps in PROXIMAL_EPS {
        let ok = if static_b {
            let cand = SubgradientCandidate::new(x.clone(), zeta.clone(), cfg.clarke_radius, eps)?;
            proximal_subgradient_test_with(&cand, |y| b.value(t, y).unwrap_or(f64::NAN), 20, 1e-9)?.holds
        } else {
            let tc = t.max(cfg.clarke_radius + cfg.fd_step);
            let center = StateVector::from_iterator(n + 1, std::iter::once(tc).chain(x.iter().copied()));
            let cand = SubgradientCandidate::new(center, zeta.clone(), cfg.clarke_radius, eps)?;
            proximal_subgradient_test_with(&cand, |z| b.value(z[0], &z.rows(1, n).into_owned()).unwrap_or(f64::NAN), 20, 1e-9)?
                .holds
        };
        if ok {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Per-sample margins of the decrease condition `<ζ, (1, η)> <= g(B)`.
pub fn infinitesimal_margins(b: &BarrierFn, f: &InclusionSpec, cfg: &InfinitesimalConfig) -> Result<Vec<SampleMargin>> {
    if b.dim() != f.dim() || cfg.bounds.dim() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: b.dim(),
        });
    }
    if cfg.t_grid.is_empty() || cfg.t_grid.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidArgument("time grid must be nonempty and nonnegative".into()));
    }
    let pts = sample_region(b, cfg)?;
    pts.par_iter().map(|(t, x, v)| margin_at(b, f, cfg, *t, x, *v)).collect()
}

/// Aggregates [`infinitesimal_margins`] into a report.
pub fn infinitesimal_check(b: &BarrierFn, f: &InclusionSpec, cfg: &InfinitesimalConfig) -> Result<CheckReport> {
    let margins = infinitesimal_margins(b, f, cfg)?;
    let vacuous = margins.iter().filter(|m| m.margin == f64::NEG_INFINITY).count();
    let name = format!(
        "infinitesimal_{}",
        match cfg.mode {
            DiffMode::Smooth => "smooth",
            DiffMode::Clarke => "clarke",
            DiffMode::Proximal => "proximal",
        }
    );
    let entries = margins
        .into_iter()
        .filter(|m| m.margin > f64::NEG_INFINITY)
        .map(|m| {
            (
                Witness {
                    t: m.t,
                    x: m.x.iter().copied().collect(),
                    eta: Some(m.eta.iter().copied().collect()),
                    zeta: Some(m.zeta.iter().copied().collect()),
                },
                m.margin,
            )
        })
        .collect();
    let mut report = CheckReport::from_margins(name, cfg.tol, entries);
    if vacuous > 0 {
        report
            .notes
            .push(format!("{vacuous} samples had no admitted proximal subgradient"));
    }
    Ok(report)
}
