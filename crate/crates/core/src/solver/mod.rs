//! Trajectory integration for selections of an inclusion, forward and
//! backward, with escape detection and time rescaling.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{select, selector_family, BundlePlan, FieldHandle, InclusionSpec, Selector};
use crate::error::{Error, Result};
use crate::geometry::{ScalarFn, SetSpec};
use crate::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Classical fixed-step Runge–Kutta.
    Rk4,
    /// Dormand–Prince 5(4) with step-size control.
    Rk45,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step (RK4) or initial step (RK45).
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub escape_radius: f64,
    pub max_steps: usize,
    /// RK4 only: substep so that each substep is at most `factor * |x|^2`
    /// (floored at 1e-6). Outer node times are unaffected.
    pub radial_clamp: Option<f64>,
    /// Nominal accuracy used by downstream consistency checks.
    pub tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            step: 0.01,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            escape_radius: 1e6,
            max_steps: 10_000_000,
            radial_clamp: None,
            tol: 1e-6,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            step,
            ..Default::default()
        }
    }

    pub fn rk45(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk45,
            step: 1e-3,
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.step) || !pos(self.rel_tol) || !pos(self.abs_tol) || !pos(self.escape_radius) || !pos(self.tol) {
            return Err(Error::InvalidArgument(
                "integrator step, tolerances and escape radius must be positive".into(),
            ));
        }
        if let Some(c) = self.radial_clamp {
            if !pos(c) {
                return Err(Error::InvalidArgument("radial clamp factor must be positive".into()));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    Escape,
    SetHit(String),
    StepLimit,
}

/// Time-stamped states. Backward trajectories store `ψ(t) = φ(-t)` with
/// nonnegative times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub termination: Termination,
    pub direction: Direction,
}

impl Trajectory {
    pub fn endpoint(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least its initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least its initial time")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t, x1..xn`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("x{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(w, "{}", fmt_f64(*t))?;
            for v in x.iter() {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }
}

/// Round-trip float formatting used in every CSV artifact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

type Rhs<'a> = dyn Fn(f64, &StateVector) -> Result<StateVector> + Sync + 'a;

struct Outcome {
    times: Vec<f64>,
    states: Vec<StateVector>,
    termination: Termination,
}

fn wrap_field_error(e: Error, t: f64, last: &StateVector) -> Error {
    match e {
        Error::FieldEvaluation { .. } | Error::NonFinite { .. } => Error::Integration {
            t,
            last_valid: last.iter().copied().collect(),
        },
        other => other,
    }
}

struct StopRule<'a> {
    set: &'a SetSpec,
    id: &'a str,
    tol: f64,
}

impl StopRule<'_> {
    fn hit(&self, x: &StateVector) -> Result<bool> {
        Ok(self.set.distance(x)? <= self.tol)
    }
}

fn rk4_step(rhs: &Rhs, t_sel: f64, x: &StateVector, h: f64) -> Result<StateVector> {
    let k1 = rhs(t_sel, x)?;
    let k2 = rhs(t_sel, &(x + &k1 * (0.5 * h)))?;
    let k3 = rhs(t_sel, &(x + &k2 * (0.5 * h)))?;
    let k4 = rhs(t_sel, &(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

fn run_rk4(rhs: &Rhs, x0: &StateVector, horizon: f64, cfg: &IntegratorConfig, stop: Option<&StopRule>) -> Result<Outcome> {
    let h = cfg.step;
    let full = ((horizon / h) * (1.0 + 1e-12)).floor() as usize;
    let aligned = ((full as f64) * h - horizon).abs() <= 1e-9 * h;
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    if let Some(s) = stop {
        if s.hit(x0)? {
            return Ok(Outcome {
                times,
                states,
                termination: Termination::SetHit(s.id.to_string()),
            });
        }
    }
    let total = if aligned { full } else { full + 1 };
    let mut steps = 0usize;
    for k in 0..total {
        let t0 = k as f64 * h;
        let t1 = if k + 1 <= full { (k + 1) as f64 * h } else { horizon };
        let dt = t1 - t0;
        if dt <= 0.0 {
            break;
        }
        let x = states.last().unwrap().clone();
        let subs = match cfg.radial_clamp {
            Some(c) => {
                let cap = (c * x.norm_squared()).max(1e-6);
                ((dt / cap).ceil() as usize).max(1)
            }
            None => 1,
        };
        let hs = dt / subs as f64;
        let mut y = x.clone();
        for _ in 0..subs {
            y = rk4_step(rhs, t0, &y, hs).map_err(|e| wrap_field_error(e, t0, &x))?;
            steps += 1;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration {
                t: t0,
                last_valid: x.iter().copied().collect(),
            });
        }
        let escaped = y.norm() > cfg.escape_radius;
        times.push(t1);
        states.push(y);
        if escaped {
            return Ok(Outcome {
                times,
                states,
                termination: Termination::Escape,
            });
        }
        if let Some(s) = stop {
            if s.hit(states.last().unwrap())? {
                return Ok(Outcome {
                    times,
                    states,
                    termination: Termination::SetHit(s.id.to_string()),
                });
            }
        }
        if steps >= cfg.max_steps {
            return Ok(Outcome {
                times,
                states,
                termination: Termination::StepLimit,
            });
        }
    }
    Ok(Outcome {
        times,
        states,
        termination: Termination::Horizon,
    })
}

const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn run_rk45(
    rhs: &Rhs,
    x0: &StateVector,
    horizon: f64,
    cfg: &IntegratorConfig,
    checkpoints: &[f64],
    stop: Option<&StopRule>,
) -> Result<Outcome> {
    let mut marks: Vec<f64> = checkpoints.iter().copied().filter(|c| *c > 0.0 && *c < horizon).collect();
    marks.push(horizon);
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    if let Some(s) = stop {
        if s.hit(x0)? {
            return Ok(Outcome {
                times,
                states,
                termination: Termination::SetHit(s.id.to_string()),
            });
        }
    }
    let mut t = 0.0;
    let mut x = x0.clone();
    let mut h = cfg.step.min(horizon);
    let mut steps = 0usize;
    let mut mark = 0usize;
    let mut seg_start = 0.0;
    let mut k1 = rhs(seg_start, &x).map_err(|e| wrap_field_error(e, t, &x))?;
    while mark < marks.len() {
        let target = marks[mark];
        let landing = t + h >= target * (1.0 - 1e-14) - 1e-300;
        let hh = if landing { target - t } else { h };
        let mut k = Vec::with_capacity(7);
        k.push(k1.clone());
        for i in 1..7 {
            let mut y = x.clone();
            for (j, kj) in k.iter().enumerate().take(i) {
                let a = DP_A[i][j];
                if a != 0.0 {
                    y += kj * (a * hh);
                }
            }
            k.push(rhs(seg_start, &y).map_err(|e| wrap_field_error(e, t, &x))?);
        }
        let mut xn = x.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            let b = DP_A[6][j];
            if b != 0.0 {
                xn += kj * (b * hh);
            }
        }
        let mut err = 0.0;
        for d in 0..x.len() {
            let e: f64 = (0..7).map(|i| DP_E[i] * k[i][d]).sum::<f64>() * hh;
            let sc = cfg.abs_tol + cfg.rel_tol * x[d].abs().max(xn[d].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / x.len().max(1) as f64).sqrt();
        steps += 1;
        if steps >= cfg.max_steps {
            return Ok(Outcome {
                times,
                states,
                termination: Termination::StepLimit,
            });
        }
        if !err.is_finite() || xn.iter().any(|v| !v.is_finite()) {
            if hh < 1e-14 * target.max(1.0) {
                return Err(Error::Integration {
                    t,
                    last_valid: x.iter().copied().collect(),
                });
            }
            h = hh * 0.2;
            continue;
        }
        if err <= 1.0 {
            t = if landing { target } else { t + hh };
            x = xn;
            k1 = k[6].clone();
            times.push(t);
            states.push(x.clone());
            if x.norm() > cfg.escape_radius {
                return Ok(Outcome {
                    times,
                    states,
                    termination: Termination::Escape,
                });
            }
            if let Some(s) = stop {
                if s.hit(&x)? {
                    return Ok(Outcome {
                        times,
                        states,
                        termination: Termination::SetHit(s.id.to_string()),
                    });
                }
            }
            if landing {
                mark += 1;
                // Selector values may change at a mark; restart the FSAL stage.
                seg_start = t;
                k1 = rhs(seg_start, &x).map_err(|e| wrap_field_error(e, t, &x))?;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = if landing { h.max(hh) } else { hh * fac };
        } else {
            h = hh * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            if h < 1e-14 * target.max(1.0) {
                return Err(Error::Integration {
                    t,
                    last_valid: x.iter().copied().collect(),
                });
            }
        }
    }
    Ok(Outcome {
        times,
        states,
        termination: Termination::Horizon,
    })
}

fn check_horizon(x0: &StateVector, horizon: f64) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive and finite, got {horizon}")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("initial state", x0));
    }
    Ok(())
}

fn switch_times(s: &Selector) -> Vec<f64> {
    match s {
        Selector::Constant(_) => vec![],
        Selector::Piecewise { switches, .. } => switches.clone(),
    }
}

fn drive(
    rhs: &Rhs,
    x0: &StateVector,
    horizon: f64,
    dir: Direction,
    cfg: &IntegratorConfig,
    checkpoints: &[f64],
    stop: Option<&StopRule>,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_horizon(x0, horizon)?;
    let out = match cfg.method {
        Method::Rk4 => run_rk4(rhs, x0, horizon, cfg, stop)?,
        Method::Rk45 => run_rk45(rhs, x0, horizon, cfg, checkpoints, stop)?,
    };
    Ok(Trajectory {
        times: out.times,
        states: out.states,
        termination: out.termination,
        direction: dir,
    })
}

/// Integrates `ẋ = select(F, x, s, t)` (negated when backward) over `[0, T]`.
/// Selector values are held at their value at the start of each step.
pub fn integrate(
    f: &InclusionSpec,
    s: &Selector,
    x0: &StateVector,
    horizon: f64,
    dir: Direction,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_inner(f, s, x0, horizon, dir, cfg, None)
}

/// As [`integrate`] but stops at the first node within `cfg.tol` of `stop`.
pub fn integrate_until(
    f: &InclusionSpec,
    s: &Selector,
    x0: &StateVector,
    horizon: f64,
    dir: Direction,
    cfg: &IntegratorConfig,
    stop: &SetSpec,
    stop_id: &str,
) -> Result<Trajectory> {
    let rule = StopRule {
        set: stop,
        id: stop_id,
        tol: cfg.tol,
    };
    integrate_inner(f, s, x0, horizon, dir, cfg, Some(&rule))
}

fn integrate_inner(
    f: &InclusionSpec,
    s: &Selector,
    x0: &StateVector,
    horizon: f64,
    dir: Direction,
    cfg: &IntegratorConfig,
    stop: Option<&StopRule>,
) -> Result<Trajectory> {
    if x0.len() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: x0.len(),
        });
    }
    s.validate_for(f)?;
    let sign = match dir {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let rhs = move |t: f64, x: &StateVector| -> Result<StateVector> {
        let v = select(f, x, s, t)?;
        Ok(if sign < 0.0 { -v } else { v })
    };
    drive(&rhs, x0, horizon, dir, cfg, &switch_times(s), stop)
}

/// Integrates a single field, forcing RK45 to land on every checkpoint.
pub fn integrate_field(
    f: &FieldHandle,
    x0: &StateVector,
    horizon: f64,
    dir: Direction,
    cfg: &IntegratorConfig,
    checkpoints: &[f64],
) -> Result<Trajectory> {
    if x0.len() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: x0.len(),
        });
    }
    let sign = if dir == Direction::Forward { 1.0 } else { -1.0 };
    let rhs = move |_t: f64, x: &StateVector| -> Result<StateVector> { Ok(f.eval(x)? * sign) };
    drive(&rhs, x0, horizon, dir, cfg, checkpoints, None)
}

/// One trajectory per selector of [`selector_family`], in selector order.
pub fn solution_bundle(
    f: &InclusionSpec,
    x0: &StateVector,
    horizon: f64,
    dir: Direction,
    cfg: &IntegratorConfig,
    plan: &BundlePlan,
) -> Result<Vec<Trajectory>> {
    let family = selector_family(f, plan, horizon)?;
    family
        .par_iter()
        .map(|s| integrate(f, s, x0, horizon, dir, cfg))
        .collect()
}

/// `τ(t_i) = t_i + ∫_0^{t_i} ds / V(φ(s))` by the trapezoidal rule.
pub fn time_rescale_tau(traj: &Trajectory, v: &ScalarFn) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let w = v.at(x);
        if !(w > 0.0) {
            return Err(Error::RescaleThroughZero { t: *t });
        }
        if let Some((tp, wp)) = prev {
            acc += 0.5 * (t - tp) * (1.0 / wp + 1.0 / w);
        }
        prev = Some((*t, w));
        out.push(t + acc);
    }
    Ok(out)
}
