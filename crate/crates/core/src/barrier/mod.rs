//! Barrier function candidates `B(t,x)`: the converse marginal barrier, the
//! closed-form counterexample barrier, user expressions, and the validity
//! checks run against them.

mod checks;
mod closed_form;
mod marginal;
mod relax;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use checks::{
    candidate_sign_check, infinitesimal_check, infinitesimal_margins, monotonicity_check, CheckReport, DiffMode,
    InfinitesimalConfig, Region, SampleMargin, SignCheckConfig, Verdict, Witness,
};
pub use closed_form::{counterexample_barrier, counterexample_barrier_fn};
pub use marginal::{marginal_barrier, MarginalBarrier};
pub use relax::RelaxFn;

use crate::error::{Error, Result};
use crate::expr::CompiledExpr;
use crate::StateVector;

/// A barrier value; `lower_bound_only` marks values computed from a
/// truncated backward tube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierValue {
    pub value: f64,
    pub lower_bound_only: bool,
}

impl BarrierValue {
    pub fn exact(value: f64) -> Self {
        BarrierValue {
            value,
            lower_bound_only: false,
        }
    }
}

/// Anything that evaluates `B(t,x)`.
pub trait BarrierEval: Send + Sync {
    fn eval(&self, t: f64, x: &StateVector) -> Result<BarrierValue>;

    /// Several times at one state; implementations may share work.
    fn eval_many(&self, ts: &[f64], x: &StateVector) -> Result<Vec<BarrierValue>> {
        ts.iter().map(|t| self.eval(*t, x)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Marginal { system: String, target: String, resolution: String },
    ClosedformCounterexample,
    Smoothed { reference: String },
    User { expression: String },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Marginal { system, .. } => write!(f, "marginal({system})"),
            Provenance::ClosedformCounterexample => write!(f, "closedform_counterexample"),
            Provenance::Smoothed { reference } => write!(f, "smoothed({reference})"),
            Provenance::User { expression } => write!(f, "user({expression})"),
        }
    }
}

/// A time-varying barrier candidate with its provenance and the width of
/// the margin band used to realize the neighborhood `U(K) \ K`.
#[derive(Clone)]
pub struct BarrierFn {
    dim: usize,
    eval: Arc<dyn BarrierEval>,
    provenance: Provenance,
    band_width: Option<f64>,
    static_in_time: bool,
}

impl fmt::Debug for BarrierFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierFn")
            .field("dim", &self.dim)
            .field("provenance", &self.provenance)
            .field("band_width", &self.band_width)
            .finish()
    }
}

struct ClosureEval<F>(F);

impl<F> BarrierEval for ClosureEval<F>
where
    F: Fn(f64, &StateVector) -> f64 + Send + Sync,
{
    fn eval(&self, t: f64, x: &StateVector) -> Result<BarrierValue> {
        let v = (self.0)(t, x);
        if !v.is_finite() {
            return Err(Error::non_finite("barrier value", x));
        }
        Ok(BarrierValue::exact(v))
    }
}

impl BarrierFn {
    pub fn new(dim: usize, provenance: Provenance, eval: Arc<dyn BarrierEval>) -> Self {
        BarrierFn {
            dim,
            eval,
            provenance,
            band_width: None,
            static_in_time: false,
        }
    }

    pub fn from_fn(
        dim: usize,
        provenance: Provenance,
        f: impl Fn(f64, &StateVector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(dim, provenance, Arc::new(ClosureEval(f)))
    }

    /// User expression over `t, x1..xn`. Expressions that do not mention
    /// `t` are treated as time-independent.
    pub fn user(source: &str, dim: usize) -> Result<Self> {
        let mut names = vec!["t".to_string()];
        names.extend((1..=dim).map(|i| format!("x{i}")));
        let expr = CompiledExpr::parse(source, &names)?;
        let uses_t = {
            let probe: Vec<f64> = (0..=dim).map(|i| 0.37 + 0.11 * i as f64).collect();
            let mut shifted = probe.clone();
            shifted[0] += 1.234;
            expr.eval(&probe).to_bits() != expr.eval(&shifted).to_bits()
        };
        let mut b = Self::from_fn(
            dim,
            Provenance::User {
                expression: source.to_string(),
            },
            move |t, x| {
                let mut vals = Vec::with_capacity(x.len() + 1);
                vals.push(t);
                vals.extend(x.iter().copied());
                expr.eval(&vals)
            },
        );
        b.static_in_time = !uses_t;
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn band_width(&self) -> Option<f64> {
        self.band_width
    }

    pub fn with_band_width(mut self, w: f64) -> Result<Self> {
        if !(w > 0.0) {
            return Err(Error::InvalidArgument("band width must be positive".into()));
        }
        self.band_width = Some(w);
        Ok(self)
    }

    pub fn is_static(&self) -> bool {
        self.static_in_time
    }

    pub fn mark_static(mut self) -> Self {
        self.static_in_time = true;
        self
    }

    pub fn eval(&self, t: f64, x: &StateVector) -> Result<BarrierValue> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        self.eval.eval(t, x)
    }

    pub fn eval_many(&self, ts: &[f64], x: &StateVector) -> Result<Vec<BarrierValue>> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        self.eval.eval_many(ts, x)
    }

    pub fn value(&self, t: f64, x: &StateVector) -> Result<f64> {
        self.eval(t, x).map(|v| v.value)
    }

    /// 10% of the median of `B` over the given samples.
    pub fn default_band_width(&self, samples: &[(f64, StateVector)]) -> Result<f64> {
        let mut vals: Vec<f64> = samples
            .iter()
            .map(|(t, x)| self.value(*t, x))
            .collect::<Result<_>>()?;
        if vals.is_empty() {
            return Err(Error::EmptySet("no samples for the band width".into()));
        }
        vals.sort_by(f64::total_cmp);
        let mid = vals.len() / 2;
        let median = if vals.len() % 2 == 1 {
            vals[mid]
        } else {
            0.5 * (vals[mid - 1] + vals[mid])
        };
        if !(median > 0.0) {
            return Err(Error::Precondition(format!("median barrier value on X_u is {median}, not positive")));
        }
        Ok(0.1 * median)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub in_k: bool,
    pub value: f64,
}

/// Membership in `K = {(t,x) : B(t,x) <= 0}`.
pub fn sublevel_membership(b: &BarrierFn, t: f64, x: &StateVector) -> Result<Membership> {
    let value = b.value(t, x)?;
    Ok(Membership {
        in_k: value <= 0.0,
        value,
    })
}
