use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::global::{smooth_global, GlobalOptions, ShellHorizon};
use super::SmoothedFn;
use crate::barrier::{BarrierEval, BarrierFn, BarrierValue, Provenance};
use crate::dynamics::{rescale_field, FieldHandle};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, ScalarFn, SetSpec};
use crate::solver::{integrate_field, time_rescale_tau, Direction, IntegratorConfig, Termination};
use crate::StateVector;

const CACHE_LIMIT: usize = 200_000;

/// Forward path of one start point, extended lazily on the fixed segments
/// `[0,1], [1,2], [2,4], ...` so the stored nodes never depend on the query.
struct Path {
    times: Vec<f64>,
    states: Vec<StateVector>,
    running_min: Vec<f64>,
    end: f64,
    escaped: bool,
}

/// `h(τ, x0) = min { |y|_{X_o} : y on the forward path of x0 up to τ }`, with
/// the running minimum interpolated linearly between stored nodes (so `h`
/// is continuous and nonincreasing in `τ`).
pub(crate) struct ForwardMarginal {
    f: FieldHandle,
    x_o: SetSpec,
    cfg: IntegratorConfig,
    cache: RwLock<HashMap<Vec<u64>, Arc<Path>>>,
}

impl ForwardMarginal {
    pub(crate) fn new(f: FieldHandle, x_o: SetSpec, cfg: IntegratorConfig) -> Self {
        ForwardMarginal {
            f,
            x_o,
            cfg,
            cache: RwLock::new(HashMap::new()),
        }
    }

    fn extend(&self, mut path: Path, upto: f64) -> Result<Path> {
        while path.end < upto && !path.escaped {
            let next = if path.end == 0.0 { 1.0 } else { 2.0 * path.end };
            let start = path.states.last().expect("path has a start").clone();
            let tr = integrate_field(&self.f, &start, next - path.end, Direction::Forward, &self.cfg, &[])?;
            for (t, x) in tr.times.iter().zip(&tr.states).skip(1) {
                let d = self.x_o.distance(x)?;
                let m = path.running_min.last().expect("path has a start").min(d);
                path.times.push(path.end + t);
                path.states.push(x.clone());
                path.running_min.push(m);
            }
            if tr.termination != Termination::Horizon {
                path.escaped = true;
            } else {
                path.end = next;
                if let Some(t) = path.times.last_mut() {
                    *t = next;
                }
            }
        }
        Ok(path)
    }

    fn path(&self, x: &StateVector, upto: f64) -> Result<Arc<Path>> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(p) = self.cache.read().expect("path cache lock").get(&key) {
            if p.end >= upto || p.escaped {
                return Ok(p.clone());
            }
        }
        let existing = self.cache.read().expect("path cache lock").get(&key).cloned();
        let base = match existing {
            Some(p) => Path {
                times: p.times.clone(),
                states: p.states.clone(),
                running_min: p.running_min.clone(),
                end: p.end,
                escaped: p.escaped,
            },
            None => Path {
                times: vec![0.0],
                states: vec![x.clone()],
                running_min: vec![self.x_o.distance(x)?],
                end: 0.0,
                escaped: false,
            },
        };
        let p = Arc::new(self.extend(base, upto)?);
        let mut cache = self.cache.write().expect("path cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, p.clone());
        Ok(p)
    }
}

impl BarrierEval for ForwardMarginal {
    fn eval(&self, t: f64, x: &StateVector) -> Result<BarrierValue> {
        Ok(self.eval_many(&[t], x)?[0])
    }

    fn eval_many(&self, ts: &[f64], x: &StateVector) -> Result<Vec<BarrierValue>> {
        if let Some(bad) = ts.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("rescaled time must be nonnegative, got {bad}")));
        }
        if self.x_o.distance(x)? == 0.0 {
            return Ok(vec![BarrierValue::exact(0.0); ts.len()]);
        }
        let top = ts.iter().copied().fold(0.0, f64::max);
        let p = self.path(x, top)?;
        Ok(ts
            .iter()
            .map(|&t| {
                let last = p.times.len() - 1;
                if t >= p.times[last] {
                    return BarrierValue {
                        value: p.running_min[last],
                        lower_bound_only: p.escaped && t > p.times[last],
                    };
                }
                let i = p.times.partition_point(|s| *s <= t) - 1;
                let th = (t - p.times[i]) / (p.times[i + 1] - p.times[i]);
                BarrierValue::exact(p.running_min[i] + th * (p.running_min[i + 1] - p.running_min[i]))
            })
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct ConverseConfig {
    /// Largest original time `t` served by the barrier.
    pub t_max: f64,
    pub bounds: Aabb,
    pub per_axis: usize,
    /// The barrier is served where `|x|_{X_o} >= inner_radius` (and on
    /// `X_o`); the rescaled time grows like `t / |x|²_{X_o}` below it.
    pub inner_radius: f64,
    pub ring_angles: usize,
    /// Backward solution `χ` of the original field.
    pub backward: IntegratorConfig,
    /// Forward solutions of the rescaled field.
    pub forward: IntegratorConfig,
    pub validation_times: usize,
}

impl ConverseConfig {
    pub fn new(bounds: Aabb) -> Self {
        ConverseConfig {
            t_max: 0.25,
            bounds,
            per_axis: 12,
            inner_radius: 0.01,
            ring_angles: 12,
            backward: IntegratorConfig::rk4(0.01),
            forward: IntegratorConfig::rk45(1e-9, 1e-12),
            validation_times: 5,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) || !(self.inner_radius > 0.0) || self.per_axis < 2 {
            return Err(Error::InvalidArgument(
                "converse config needs t_max > 0, inner_radius > 0 and per_axis >= 2".into(),
            ));
        }
        self.backward.validate()?;
        self.forward.validate()
    }
}

/// Box grid plus rings of log-spaced radii around the center of `X_o`.
fn smoothing_grid(x_o: &SetSpec, cfg: &ConverseConfig) -> Vec<StateVector> {
    let mut grid = cfg.bounds.grid(cfg.per_axis);
    let n = cfg.bounds.dim();
    if let Some(b) = x_o.bounding_box() {
        let c = StateVector::from_iterator(n, (0..n).map(|d| 0.5 * (b.lo[d] + b.hi[d])));
        let reach = 0.5 * cfg.bounds.diameter();
        let mut r = cfg.inner_radius;
        while r < reach {
            let dirs: Vec<StateVector> = if n == 1 {
                vec![StateVector::from_element(1, 1.0), StateVector::from_element(1, -1.0)]
            } else {
                (0..cfg.ring_angles)
                    .map(|j| {
                        let a = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / cfg.ring_angles as f64;
                        StateVector::from_vec(vec![a.cos(), a.sin()])
                    })
                    .collect()
            };
            for d in dirs {
                let p = &c + d * r;
                if cfg.bounds.contains(&p) {
                    grid.push(p);
                }
            }
            r *= 2f64.sqrt();
        }
    }
    grid
}

struct ConverseEval {
    f: FieldHandle,
    x_o: SetSpec,
    v: ScalarFn,
    g: SmoothedFn,
    cfg: ConverseConfig,
}

impl BarrierEval for ConverseEval {
    fn eval(&self, t: f64, x: &StateVector) -> Result<BarrierValue> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("barrier needs t >= 0, got {t}")));
        }
        if t > self.cfg.t_max {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.cfg.t_max,
            });
        }
        if self.x_o.contains(x) {
            return Ok(BarrierValue::exact(0.0));
        }
        let floor = self.cfg.inner_radius;
        let below = |p: &StateVector| -> Result<Error> {
            Ok(Error::Precondition(format!(
                "distance {:e} to X_o is below the inner radius {floor:e}",
                self.x_o.distance(p)?
            )))
        };
        if self.x_o.distance(x)? < floor {
            return Err(below(x)?);
        }
        if t == 0.0 {
            return Ok(BarrierValue::exact(self.g.eval(0.0, x)?));
        }
        let chi = integrate_field(&self.f, x, t, Direction::Backward, &self.cfg.backward, &[])?;
        if chi.states.iter().any(|p| self.x_o.contains(p)) {
            return Ok(BarrierValue::exact(0.0));
        }
        let x0 = chi.endpoint();
        if self.x_o.distance(x0)? < floor {
            return Err(below(x0)?);
        }
        let tau = *time_rescale_tau(&chi, &self.v)?.last().expect("trajectory has nodes");
        let value = self.g.eval(tau, x0)?;
        Ok(BarrierValue {
            value,
            lower_bound_only: chi.termination != Termination::Horizon,
        })
    }
}

/// Smooth converse barrier for a single-valued field:
/// `B(t,x) = g(τ(t, χ(-t,x)), χ(-t,x))` when the backward path `χ([-t,0],x)`
/// avoids `X_o`, else 0. Here `g` smooths the forward marginal distance of
/// the rescaled field `f V / (1 + V)` with `V = |x|²_{X_o}`.
pub fn converse_smooth_barrier(f: &FieldHandle, x_o: &SetSpec, cfg: &ConverseConfig) -> Result<BarrierFn> {
    cfg.validate()?;
    if matches!(x_o, SetSpec::Complement(_)) {
        return Err(Error::Precondition("X_o must be a closed variant, not a complement".into()));
    }
    x_o.validate()?;
    if cfg.bounds.dim() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: cfg.bounds.dim(),
        });
    }
    let v = ScalarFn::squared_distance_to(x_o.clone());
    let rescaled = rescale_field(f, &v);
    let h = BarrierFn::new(
        f.dim(),
        Provenance::Marginal {
            system: rescaled.id(),
            target: format!("{x_o:?}"),
            resolution: "forward".into(),
        },
        Arc::new(ForwardMarginal::new(rescaled, x_o.clone(), cfg.forward.clone())),
    );
    let grid = smoothing_grid(x_o, cfg);
    let g = smooth_global(
        &h,
        x_o,
        &grid,
        &GlobalOptions {
            s_range: None,
            horizon: ShellHorizon::RescaledTime {
                t_max: cfg.t_max,
                v_floor: 0.25 * cfg.inner_radius * cfg.inner_radius,
            },
            validation_times: cfg.validation_times,
        },
    )?;
    let reference = format!("converse({})", f.id());
    Ok(BarrierFn::new(
        f.dim(),
        Provenance::Smoothed { reference },
        Arc::new(ConverseEval {
            f: f.clone(),
            x_o: x_o.clone(),
            v,
            g,
            cfg: cfg.clone(),
        }),
    ))
}
