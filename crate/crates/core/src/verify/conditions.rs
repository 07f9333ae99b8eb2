use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierFn, CheckReport, RelaxFn, Witness};
use crate::dynamics::{eval_inclusion, InclusionSpec};
use crate::error::{Error, Result};
use crate::geometry::{clarke_gradient_sample_with, cone_limit, halton_point, Aabb, ConeMode, ConeProbe, SetSpec};
use crate::StateVector;

/// Default neighborhood width relative to the set scale.
pub const SHELL_RELATIVE_WIDTH: f64 = 1e-3;

fn shell_width(explicit: Option<f64>, set: &SetSpec, bounds: &Aabb) -> f64 {
    explicit.unwrap_or_else(|| {
        let scale = set.bounding_box().map_or(bounds.diameter(), |b| b.diameter());
        SHELL_RELATIVE_WIDTH * if scale > 0.0 { scale } else { bounds.diameter() }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NagumoMode {
    /// `F(x) ⊂ T_K(x)` on `∂K`.
    Boundary,
    /// `F(x) ⊂ E_K(x)` on a thin shell outside `K`.
    Exterior,
}

#[derive(Clone, Debug)]
pub struct NagumoConfig {
    pub bounds: Aabb,
    pub samples: usize,
    pub shell_width: Option<f64>,
    pub tol: f64,
    /// Extreme points taken from ball-valued `F(x)`.
    pub ball_vertices: usize,
    pub seed: u64,
}

impl NagumoConfig {
    pub fn new(bounds: Aabb) -> Self {
        NagumoConfig {
            bounds,
            samples: 200,
            shell_width: None,
            tol: 1e-6,
            ball_vertices: 16,
            seed: 0,
        }
    }
}

/// Cone residual of every inclusion vertex at samples of `∂K` (contingent
/// cone) or of an outer shell of `K` (external contingent cone).
pub fn nagumo_check(f: &InclusionSpec, k: &SetSpec, mode: NagumoMode, cfg: &NagumoConfig) -> Result<CheckReport> {
    if cfg.bounds.dim() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: cfg.bounds.dim(),
        });
    }
    let (name, cone, pts) = match mode {
        NagumoMode::Boundary => {
            let pts: Vec<StateVector> = k
                .sample_boundary(cfg.samples, &cfg.bounds, cfg.seed)?
                .into_iter()
                .filter(|x| !k.interior_contains(x) && k.distance(x).map_or(false, |d| d <= cfg.tol))
                .collect();
            ("nagumo_boundary", ConeMode::Contingent, pts)
        }
        NagumoMode::Exterior => {
            let w = shell_width(cfg.shell_width, k, &cfg.bounds);
            ("nagumo_exterior", ConeMode::External, k.sample_shell(cfg.samples, w, &cfg.bounds, cfg.seed)?)
        }
    };
    if pts.is_empty() {
        return Ok(CheckReport::inconclusive(name, "no samples in the cone check region"));
    }
    let per: Vec<Vec<(Witness, f64)>> = pts
        .par_iter()
        .map(|x| -> Result<Vec<(Witness, f64)>> {
            eval_inclusion(f, x)?
                .extreme_points(cfg.ball_vertices)
                .into_iter()
                .map(|eta| {
                    let r = cone_limit(&ConeProbe::new(x.clone(), eta.clone(), cone), k, cfg.tol)?;
                    let mut w = Witness::at(0.0, x);
                    w.eta = Some(eta.iter().copied().collect());
                    Ok((w, r))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(CheckReport::from_margins(name, cfg.tol, per.into_iter().flatten().collect()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prop1Mode {
    /// `B > 0` on `U(X_s) \ X_s`, `B <= 0` on `∂X_o`, decrease on `U(X_s) \ X_o`.
    Conditional,
    /// `B > 0` on `∂X_s`, `B <= 0` on `∂X_o`, decrease on `X_s \ X_o`.
    Strict,
}

#[derive(Clone, Debug)]
pub struct Prop1Config {
    pub bounds: Aabb,
    pub boundary_samples: usize,
    pub shell_samples: usize,
    pub region_samples: usize,
    /// Width of `U(X_s) \ X_s`.
    pub shell_width: Option<f64>,
    pub pos_tol: f64,
    pub zero_tol: f64,
    /// Allowed excess in `<ζ, η> <= g(B)`.
    pub tol: f64,
    pub clarke_radius: f64,
    pub clarke_samples: usize,
    pub fd_step: f64,
    pub seed: u64,
}

impl Prop1Config {
    pub fn new(bounds: Aabb) -> Self {
        Prop1Config {
            bounds,
            boundary_samples: 64,
            shell_samples: 200,
            region_samples: 400,
            shell_width: None,
            pos_tol: 1e-9,
            zero_tol: 1e-12,
            tol: 1e-4,
            clarke_radius: 1e-6,
            clarke_samples: 9,
            fd_step: 1e-7,
            seed: 0,
        }
    }
}

fn region_samples(
    cfg: &Prop1Config,
    n: usize,
    keep: impl Fn(&StateVector) -> Result<bool> + Sync,
) -> Result<Vec<StateVector>> {
    let budget = 200 * cfg.region_samples.max(1);
    let chunk = (4 * cfg.region_samples).max(256);
    let mut out = Vec::with_capacity(cfg.region_samples);
    let mut start = 1;
    while out.len() < cfg.region_samples && start <= budget {
        let end = (start + chunk).min(budget + 1);
        let batch: Vec<Option<StateVector>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let x = cfg.bounds.from_unit(&halton_point(i, n, cfg.seed));
                Ok(keep(&x)?.then_some(x))
            })
            .collect::<Result<_>>()?;
        out.extend(batch.into_iter().flatten());
        start = end;
    }
    out.truncate(cfg.region_samples);
    Ok(out)
}

/// Sign and Clarke decrease conditions for conditional (or strict
/// conditional) invariance of `X_s` with respect to `X_o`, for a
/// time-independent `B` and a minimal function `g`.
///
/// All parts share one report. Sign margins are the violation amounts of
/// `B >= pos_tol` and `B <= zero_tol`; decrease margins are reported net of
/// `cfg.tol`, so the report fails iff some margin is positive.
pub fn prop1_check(
    f: &InclusionSpec,
    x_o: &SetSpec,
    x_s: &SetSpec,
    b: &BarrierFn,
    g: &RelaxFn,
    mode: Prop1Mode,
    cfg: &Prop1Config,
) -> Result<CheckReport> {
    let n = f.dim();
    if b.dim() != n || cfg.bounds.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            got: if b.dim() != n { b.dim() } else { cfg.bounds.dim() },
        });
    }
    if !b.is_static() {
        return Err(Error::Precondition("the conditional invariance check needs a time-independent B".into()));
    }
    if !g.is_minimal_variant() {
        return Err(Error::Precondition(format!("g must be a minimal function, got {}", g.describe())));
    }
    let name = match mode {
        Prop1Mode::Conditional => "prop1_conditional",
        Prop1Mode::Strict => "prop1_strict",
    };
    let o_boundary = x_o.sample_boundary(cfg.boundary_samples, &cfg.bounds, cfg.seed)?;
    if mode == Prop1Mode::Strict {
        if let Some(x) = o_boundary.iter().find(|x| !x_s.interior_contains(x)) {
            return Err(Error::Precondition(format!(
                "X_o must lie in the interior of X_s; {:?} does not",
                x.as_slice()
            )));
        }
    }
    let positive: Vec<StateVector> = match mode {
        Prop1Mode::Conditional => {
            let w = shell_width(cfg.shell_width, x_s, &cfg.bounds);
            x_s.sample_shell(cfg.shell_samples, w, &cfg.bounds, cfg.seed)?
        }
        Prop1Mode::Strict => x_s.sample_boundary(cfg.shell_samples, &cfg.bounds, cfg.seed)?,
    };
    let width = shell_width(cfg.shell_width, x_s, &cfg.bounds);
    let region = region_samples(cfg, n, |x| {
        if x_o.contains(x) {
            return Ok(false);
        }
        Ok(match mode {
            Prop1Mode::Conditional => x_s.distance(x)? <= width,
            Prop1Mode::Strict => x_s.contains(x),
        })
    })?;
    let parts = [
        ("B > 0 region", positive.len()),
        ("boundary of X_o", o_boundary.len()),
        ("decrease region", region.len()),
    ];
    if let Some((what, _)) = parts.iter().find(|(_, c)| *c == 0) {
        return Ok(CheckReport::inconclusive(name, format!("no samples in the {what}")));
    }

    let value = |x: &StateVector| b.value(0.0, x);
    let mut pos: Vec<(Witness, f64)> = Vec::with_capacity(positive.len());
    for x in &positive {
        pos.push((Witness::at(0.0, x), cfg.pos_tol - value(x)?));
    }
    let mut neg: Vec<(Witness, f64)> = Vec::with_capacity(o_boundary.len());
    for x in &o_boundary {
        neg.push((Witness::at(0.0, x), value(x)? - cfg.zero_tol));
    }
    let m = cfg.clarke_samples.max(2 * n + 1);
    let dec: Vec<(Witness, f64)> = region
        .par_iter()
        .map(|x| -> Result<(Witness, f64)> {
            let fx = eval_inclusion(f, x)?;
            let gb = g.eval(value(x)?);
            let zetas = clarke_gradient_sample_with(
                |y| b.value(0.0, y).unwrap_or(f64::NAN),
                x,
                cfg.clarke_radius,
                m,
                cfg.fd_step,
            )?;
            let mut best = (f64::NEG_INFINITY, StateVector::zeros(n), StateVector::zeros(n));
            for z in zetas {
                let (s, eta) = fx.support(&z);
                if s - gb > best.0 {
                    best = (s - gb, eta, z);
                }
            }
            let mut w = Witness::at(0.0, x);
            w.eta = Some(best.1.iter().copied().collect());
            w.zeta = Some(best.2.iter().copied().collect());
            Ok((w, best.0 - cfg.tol))
        })
        .collect::<Result<_>>()?;

    let worst = |v: &[(Witness, f64)]| v.iter().map(|(_, m)| *m).fold(f64::NEG_INFINITY, f64::max);
    let notes = vec![
        format!("B > 0 part: {} samples, worst margin {:e}", pos.len(), worst(&pos)),
        format!("B <= 0 on the boundary of X_o: {} samples, worst margin {:e}", neg.len(), worst(&neg)),
        format!(
            "decrease part: {} samples, worst margin {:e} (net of tol {:e})",
            dec.len(),
            worst(&dec),
            cfg.tol
        ),
    ];
    let mut report = CheckReport::from_margins(name, 0.0, pos.into_iter().chain(neg).chain(dec).collect());
    report.notes = notes;
    Ok(report)
}
