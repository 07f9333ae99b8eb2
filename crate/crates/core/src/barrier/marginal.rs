//! The marginal barrier `B(t,x) = min { |y|_{X_o} : y ∈ R(-t,x) }`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use super::{BarrierEval, BarrierFn, BarrierValue, Provenance};
use crate::dynamics::InclusionSpec;
use crate::error::{Error, Result};
use crate::geometry::SetSpec;
use crate::reachability::ReachResolution;
use crate::solver::{solution_bundle, Direction, IntegratorConfig, Termination};
use crate::StateVector;

type Key = (Vec<u64>, u64);

/// Lazily evaluated marginal barrier with a value cache.
///
/// For several times at one state a single backward bundle to the largest
/// time is integrated; each `B(t_j, x)` is the minimum over nodes up to
/// `t_j`. On step-aligned times this is exactly the tube of `R(-t_j, x)`.
pub struct MarginalBarrier {
    f: InclusionSpec,
    x_o: SetSpec,
    cfg: IntegratorConfig,
    res: ReachResolution,
    cache: RwLock<HashMap<Key, BarrierValue>>,
}

impl std::fmt::Debug for MarginalBarrier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarginalBarrier")
            .field("system", &self.f.id())
            .field("x_o", &self.x_o)
            .finish()
    }
}

impl MarginalBarrier {
    pub fn new(f: InclusionSpec, x_o: SetSpec, cfg: IntegratorConfig, res: ReachResolution) -> Result<Self> {
        if matches!(x_o, SetSpec::Complement(_)) {
            return Err(Error::Precondition("X_o must be a closed variant, not a complement".into()));
        }
        x_o.validate()?;
        cfg.validate()?;
        if res.node_stride == 0 {
            return Err(Error::InvalidArgument("node stride must be positive".into()));
        }
        Ok(MarginalBarrier {
            f,
            x_o,
            cfg,
            res,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn inclusion(&self) -> &InclusionSpec {
        &self.f
    }

    pub fn target(&self) -> &SetSpec {
        &self.x_o
    }

    fn key(t: f64, x: &StateVector) -> Key {
        (x.iter().map(|v| v.to_bits()).collect(), t.to_bits())
    }

    fn compute(&self, ts: &[f64], x: &StateVector) -> Result<Vec<BarrierValue>> {
        let d0 = self.x_o.distance(x)?;
        if d0 == 0.0 {
            return Ok(vec![BarrierValue::exact(0.0); ts.len()]);
        }
        let horizon = ts.iter().copied().fold(0.0, f64::max);
        if horizon == 0.0 {
            return Ok(vec![BarrierValue::exact(d0); ts.len()]);
        }
        let trajs = solution_bundle(&self.f, x, horizon, Direction::Backward, &self.cfg, &self.res.bundle)?;
        let dists: Vec<Vec<f64>> = trajs
            .par_iter()
            .map(|tr| tr.states.iter().map(|p| self.x_o.distance(p)).collect::<Result<Vec<f64>>>())
            .collect::<Result<_>>()?;
        let stride = self.res.node_stride;
        Ok(ts
            .iter()
            .map(|&t| {
                let limit = t + 1e-9 * self.cfg.step;
                let mut best = d0;
                let mut truncated = false;
                for (tr, ds) in trajs.iter().zip(&dists) {
                    let upto = tr.times.partition_point(|s| *s <= limit);
                    for (i, d) in ds.iter().enumerate().take(upto) {
                        if i % stride == 0 || i + 1 == upto {
                            best = best.min(*d);
                        }
                    }
                    if matches!(tr.termination, Termination::Escape | Termination::StepLimit)
                        && tr.final_time() < t
                    {
                        truncated = true;
                    }
                }
                BarrierValue {
                    value: best,
                    lower_bound_only: truncated,
                }
            })
            .collect())
    }
}

impl BarrierEval for MarginalBarrier {
    fn eval(&self, t: f64, x: &StateVector) -> Result<BarrierValue> {
        Ok(self.eval_many(&[t], x)?[0])
    }

    fn eval_many(&self, ts: &[f64], x: &StateVector) -> Result<Vec<BarrierValue>> {
        if let Some(bad) = ts.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("marginal barrier needs t >= 0, got {bad}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("barrier argument", x));
        }
        {
            let cache = self.cache.read().expect("barrier cache lock");
            let hits: Option<Vec<BarrierValue>> = ts.iter().map(|t| cache.get(&Self::key(*t, x)).copied()).collect();
            if let Some(h) = hits {
                return Ok(h);
            }
        }
        let vals = self.compute(ts, x)?;
        let mut cache = self.cache.write().expect("barrier cache lock");
        for (t, v) in ts.iter().zip(&vals) {
            cache.insert(Self::key(*t, x), *v);
        }
        Ok(vals)
    }
}

/// Wraps a [`MarginalBarrier`] as a [`BarrierFn`].
pub fn marginal_barrier(
    f: &InclusionSpec,
    x_o: &SetSpec,
    cfg: &IntegratorConfig,
    res: &ReachResolution,
) -> Result<BarrierFn> {
    let m = MarginalBarrier::new(f.clone(), x_o.clone(), cfg.clone(), res.clone())?;
    Ok(BarrierFn::new(
        f.dim(),
        Provenance::Marginal {
            system: f.id(),
            target: format!("{x_o:?}"),
            resolution: res.key(cfg),
        },
        Arc::new(m),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::counterexample_barrier;
    use crate::state;
    use std::f64::consts::PI;

    fn origin() -> SetSpec {
        SetSpec::point(state(&[0.0, 0.0]))
    }

    #[test]
    fn identity_at_zero_time_and_on_target() {
        let f = InclusionSpec::builtin("linear_safe").unwrap();
        let disk = SetSpec::ball(state(&[0.0, 0.0]), 1.0).unwrap();
        let b = marginal_barrier(&f, &disk, &Default::default(), &Default::default()).unwrap();
        assert!((b.value(0.0, &state(&[3.0, 4.0])).unwrap() - 4.0).abs() < 1e-15);
        assert_eq!(b.value(7.0, &state(&[0.1, 0.2])).unwrap(), 0.0);
        assert!(b.value(-1.0, &state(&[0.1, 0.2])).is_err());
        let open = SetSpec::ball(state(&[0.0, 0.0]), 1.0).unwrap().complement();
        assert!(marginal_barrier(&f, &open, &Default::default(), &Default::default()).is_err());
    }

    #[test]
    fn counterexample_value() {
        let f = InclusionSpec::builtin("counterexample2d").unwrap();
        let b = marginal_barrier(&f, &origin(), &Default::default(), &Default::default()).unwrap();
        let x = state(&[2.0 / PI, 0.0]);
        let v = b.value(2.0, &x).unwrap();
        let exact = counterexample_barrier(2.0, &x);
        assert!((v - exact).abs() / exact < 1e-6, "{v} vs {exact}");
        assert!((exact - 4.0 / (3.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn profile_is_nonincreasing_and_cached() {
        let f = InclusionSpec::builtin("counterexample2d").unwrap();
        let b = marginal_barrier(&f, &origin(), &Default::default(), &Default::default()).unwrap();
        let ts: Vec<f64> = (0..=20).map(|i| 0.25 * i as f64).collect();
        let x = state(&[0.3, -0.4]);
        let vals = b.eval_many(&ts, &x).unwrap();
        for w in vals.windows(2) {
            assert!(w[1].value <= w[0].value);
        }
        assert_eq!(b.eval_many(&ts, &x).unwrap(), vals);
    }
}
