use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use super::compact::{build_compact, validate_point, Compact, SmoothDomain, SmoothedFn, ValidationReport};
use super::partition::build_time_partition;
use crate::barrier::{BarrierEval, BarrierFn, BarrierValue};
use crate::error::{Error, Result};
use crate::geometry::SetSpec;
use crate::StateVector;

/// Number of unit intervals used for each shell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShellHorizon {
    Uniform(usize),
    /// Enough for `τ = t + ∫ ds / V` with `t <= t_max` when `V` along the
    /// path stays above `max(2^{s-3}, v_floor)`.
    RescaledTime { t_max: f64, v_floor: f64 },
}

impl ShellHorizon {
    fn units(&self, s: i32) -> usize {
        match self {
            ShellHorizon::Uniform(k) => (*k).max(1),
            ShellHorizon::RescaledTime { t_max, v_floor } => {
                let v = 2f64.powi(s - 3).max(*v_floor);
                (1.25 * t_max * (1.0 + 1.0 / v)).ceil() as usize + 1
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct GlobalOptions {
    /// Inclusive shell index range; derived from the grid when absent.
    pub s_range: Option<(i32, i32)>,
    pub horizon: ShellHorizon,
    /// Time samples per validation point (spread over the covering horizon).
    pub validation_times: usize,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        GlobalOptions {
            s_range: None,
            horizon: ShellHorizon::Uniform(4),
            validation_times: 9,
        }
    }
}

/// Bump weight of shell `s` at `log2 |x|_K^2 = l`: `sin²(π u / 7)` with
/// `u = l - (s - 3)`, supported on `u ∈ (0, 7)`.
pub fn shell_weight(s: i32, l: f64) -> f64 {
    let u = l - (s - 3) as f64;
    if u <= 0.0 || u >= 7.0 {
        0.0
    } else {
        (PI * u / 7.0).sin().powi(2)
    }
}

fn shells_touching(l: f64) -> std::ops::RangeInclusive<i32> {
    // Open interval s ∈ (l - 4, l + 3).
    let lo = (l - 4.0).floor() as i32 + 1;
    let hi = (l + 3.0).ceil() as i32 - 1;
    lo..=hi
}

fn in_shell(s: i32, v: f64) -> bool {
    v >= 2f64.powi(s - 3) && v <= 2f64.powi(s + 4)
}

struct Global {
    k: SetSpec,
    shells: Vec<(i32, Compact)>,
}

impl Global {
    fn eval_values(&self, ts: &[f64], x: &StateVector) -> Result<Vec<f64>> {
        let d = self.k.distance(x)?;
        let v = d * d;
        if v == 0.0 {
            return Ok(vec![0.0; ts.len()]);
        }
        let l = v.log2();
        let mut acc = vec![0.0; ts.len()];
        let mut total = 0.0;
        for (s, c) in &self.shells {
            let lam = shell_weight(*s, l);
            if lam == 0.0 {
                continue;
            }
            for (a, g) in acc.iter_mut().zip(c.eval_many(ts, x)?) {
                *a += lam * g;
            }
            total += lam;
        }
        if total == 0.0 {
            return Err(Error::UncoveredShells(shells_touching(l).collect()));
        }
        Ok(acc.into_iter().map(|a| a / total).collect())
    }

    /// Largest time every shell active at `x` can serve.
    fn horizon_at(&self, x: &StateVector) -> Result<f64> {
        let d = self.k.distance(x)?;
        if d == 0.0 {
            return Ok(f64::INFINITY);
        }
        let l = (d * d).log2();
        Ok(self
            .shells
            .iter()
            .filter(|(s, _)| shell_weight(*s, l) > 0.0)
            .map(|(_, c)| c.horizon())
            .fold(f64::INFINITY, f64::min))
    }
}

impl BarrierEval for Global {
    fn eval(&self, t: f64, x: &StateVector) -> Result<BarrierValue> {
        Ok(self.eval_many(&[t], x)?[0])
    }

    fn eval_many(&self, ts: &[f64], x: &StateVector) -> Result<Vec<BarrierValue>> {
        Ok(self.eval_values(ts, x)?.into_iter().map(BarrierValue::exact).collect())
    }
}

/// Glues per-shell smoothings over `I_s = {2^{s-3} <= |x|_K^2 <= 2^{s+4}}`
/// with bump weights in `log2 |x|_K^2`. Each shell is smoothed over the grid
/// points it contains; the grid doubles as the validation grid.
pub fn smooth_global(h: &BarrierFn, k: &SetSpec, grid: &[StateVector], opts: &GlobalOptions) -> Result<SmoothedFn> {
    let n = h.dim();
    if n > 2 {
        return Err(Error::InvalidArgument(format!(
            "global smoothing supports dimension at most 2, got {n}"
        )));
    }
    if grid.is_empty() {
        return Err(Error::EmptySet("smoothing grid is empty".into()));
    }
    let sq: Vec<f64> = grid
        .iter()
        .map(|x| k.distance(x).map(|d| d * d))
        .collect::<Result<_>>()?;
    for (x, v) in grid.iter().zip(&sq) {
        if *v == 0.0 {
            let hv = h.value(0.0, x)?;
            if hv.abs() > 1e-12 {
                return Err(Error::Precondition(format!("h must vanish on K, got {hv:e} at {:?}", x.as_slice())));
            }
        }
    }
    let mut needed = BTreeSet::new();
    for v in sq.iter().filter(|v| **v > 0.0) {
        needed.extend(shells_touching(v.log2()));
    }
    if needed.is_empty() {
        return Err(Error::EmptySet("every grid point lies in K".into()));
    }
    let (lo, hi) = opts
        .s_range
        .unwrap_or((*needed.first().expect("nonempty"), *needed.last().expect("nonempty")));
    if lo > hi {
        return Err(Error::InvalidArgument("empty shell range".into()));
    }
    let uncovered: BTreeSet<i32> = sq
        .iter()
        .filter(|v| **v > 0.0)
        .filter(|v| !shells_touching(v.log2()).any(|s| (lo..=hi).contains(&s)))
        .flat_map(|v| shells_touching(v.log2()))
        .collect();
    if !uncovered.is_empty() {
        return Err(Error::UncoveredShells(uncovered.into_iter().collect()));
    }

    let shells: Vec<(i32, Compact, ValidationReport)> = (lo..=hi)
        .into_par_iter()
        .map(|s| -> Result<Option<(i32, Compact, ValidationReport)>> {
            let pts: Vec<StateVector> = grid
                .iter()
                .zip(&sq)
                .filter(|(_, v)| in_shell(s, **v))
                .map(|(x, _)| x.clone())
                .collect();
            if pts.is_empty() {
                return Ok(None);
            }
            let part = build_time_partition(h, &pts, opts.horizon.units(s))?;
            let sigma0 = 0.05 * 2f64.powf(0.5 * (s - 3) as f64);
            let (c, r) = build_compact(h, &pts, part, sigma0)?;
            Ok(Some((s, c, r)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut report = ValidationReport {
        points: 0,
        times: 0,
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
        worst_increase: f64::NEG_INFINITY,
        bandwidths: shells.iter().map(|(_, c, _)| c.sigma).collect(),
    };
    let global = Global {
        k: k.clone(),
        shells: shells.into_iter().map(|(s, c, _)| (s, c)).collect(),
    };
    let m = opts.validation_times.max(2);
    let reports: Vec<ValidationReport> = grid
        .par_iter()
        .map(|x| -> Result<ValidationReport> {
            let top = global.horizon_at(x)?;
            let top = if top.is_finite() { top } else { 1.0 };
            let ts: Vec<f64> = (0..m).map(|j| top * j as f64 / (m - 1) as f64).collect();
            let hv: Vec<f64> = h.eval_many(&ts, x)?.into_iter().map(|b| b.value).collect();
            let gv = global.eval_values(&ts, x)?;
            let mut r = ValidationReport {
                bandwidths: vec![],
                ..report.clone()
            };
            validate_point(x, &ts, &hv, &gv, &mut r)?;
            Ok(r)
        })
        .collect::<Result<_>>()?;
    for r in &reports {
        report.merge(r);
    }
    let horizon = global.shells.iter().map(|(_, c)| c.horizon()).fold(f64::INFINITY, f64::min);
    Ok(SmoothedFn {
        dim: n,
        source: h.provenance().to_string(),
        domain: SmoothDomain::Global,
        horizon,
        inner: Arc::new(global),
        report,
    })
}
