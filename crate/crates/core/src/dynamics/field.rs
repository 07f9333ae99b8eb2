//! Single-valued vector fields and the built-in systems.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::CompiledExpr;
use crate::geometry::ScalarFn;
use crate::StateVector;

/// Names accepted by [`FieldHandle::builtin`].
pub const BUILTIN_SYSTEMS: [&str; 3] = ["counterexample2d", "counterexample_radial", "linear_safe"];

/// Where a field came from; used for cache keys and manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    Builtin(String),
    Expressions(Vec<String>),
    Linear(Vec<Vec<f64>>),
    Derived(String),
}

impl fmt::Display for FieldSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSource::Builtin(name) => write!(f, "{name}"),
            FieldSource::Expressions(es) => write!(f, "expr[{}]", es.join(";")),
            FieldSource::Linear(rows) => {
                let rows: Vec<String> = rows
                    .iter()
                    .map(|r| r.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","))
                    .collect();
                write!(f, "linear[{}]", rows.join(";"))
            }
            FieldSource::Derived(label) => write!(f, "{label}"),
        }
    }
}

type FieldFn = dyn Fn(&StateVector) -> StateVector + Send + Sync;

/// An evaluable vector field `R^n -> R^n`.
#[derive(Clone)]
pub struct FieldHandle {
    dim: usize,
    source: FieldSource,
    f: Arc<FieldFn>,
}

impl fmt::Debug for FieldHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldHandle({}, n={})", self.source, self.dim)
    }
}

const ORIGIN_GUARD: f64 = 1e-12;

fn counterexample2d(x: &StateVector) -> StateVector {
    let r = x.norm();
    if r < ORIGIN_GUARD {
        return StateVector::zeros(2);
    }
    // Radial rate (r^2/2) sin^2(1/r), angular rate 1.
    let s = 0.5 * r * (1.0 / r).sin().powi(2);
    StateVector::from_vec(vec![-x[1] + x[0] * s, x[0] + x[1] * s])
}

fn counterexample_radial(x: &StateVector) -> StateVector {
    let r = x[0];
    if r.abs() < ORIGIN_GUARD {
        return StateVector::zeros(1);
    }
    StateVector::from_element(1, 0.5 * r * r * (1.0 / r).sin().powi(2))
}

/// The linear safe example's matrix.
pub fn linear_safe_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-1.0, -10.0, 1.0, 0.0])
}

impl FieldHandle {
    /// Wraps an arbitrary closure; `label` identifies it in caches and reports.
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        f: impl Fn(&StateVector) -> StateVector + Send + Sync + 'static,
    ) -> Self {
        FieldHandle {
            dim,
            source: FieldSource::Derived(label.into()),
            f: Arc::new(f),
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (dim, f): (usize, Arc<FieldFn>) = match name {
            "counterexample2d" => (2, Arc::new(counterexample2d)),
            "counterexample_radial" => (1, Arc::new(counterexample_radial)),
            "linear_safe" => {
                let a = linear_safe_matrix();
                (2, Arc::new(move |x: &StateVector| &a * x))
            }
            other => return Err(Error::UnknownSystem(other.to_string())),
        };
        Ok(FieldHandle {
            dim,
            source: FieldSource::Builtin(name.to_string()),
            f,
        })
    }

    /// One expression per component, over `x1..xn`.
    pub fn from_exprs<S: AsRef<str>>(components: &[S]) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::InvalidArgument("field needs at least one component".into()));
        }
        let exprs: Vec<CompiledExpr> = components
            .iter()
            .map(|c| CompiledExpr::parse_state(c.as_ref(), n))
            .collect::<Result<_>>()?;
        Ok(FieldHandle {
            dim: n,
            source: FieldSource::Expressions(components.iter().map(|c| c.as_ref().to_string()).collect()),
            f: Arc::new(move |x: &StateVector| {
                StateVector::from_iterator(exprs.len(), exprs.iter().map(|e| e.eval(x.as_slice())))
            }),
        })
    }

    pub fn linear(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::InvalidArgument("linear field needs a nonempty square matrix".into()));
        }
        let rows = (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect();
        Ok(FieldHandle {
            dim: a.nrows(),
            source: FieldSource::Linear(rows),
            f: Arc::new(move |x: &StateVector| &a * x),
        })
    }

    pub fn constant(v: StateVector) -> Self {
        let label = format!("const{:?}", v.as_slice());
        FieldHandle::new(v.len(), label, move |_| v.clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &FieldSource {
        &self.source
    }

    pub fn id(&self) -> String {
        self.source.to_string()
    }

    /// Evaluates and checks dimension and finiteness.
    pub fn eval(&self, x: &StateVector) -> Result<StateVector> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        let v = (self.f)(x);
        if v.len() != self.dim || v.iter().any(|c| !c.is_finite()) {
            return Err(Error::FieldEvaluation {
                message: format!("{} returned {:?}", self.source, v.as_slice()),
                location: x.iter().copied().collect(),
            });
        }
        Ok(v)
    }

    /// Raw evaluation without checks.
    #[inline]
    pub fn call(&self, x: &StateVector) -> StateVector {
        (self.f)(x)
    }

    /// `x -> -f(x)`.
    pub fn negated(&self) -> FieldHandle {
        let inner = self.f.clone();
        FieldHandle {
            dim: self.dim,
            source: FieldSource::Derived(format!("neg({})", self.source)),
            f: Arc::new(move |x| -inner(x)),
        }
    }
}

/// Evaluates a built-in system by name.
pub fn builtin_field(name: &str, x: &StateVector) -> Result<StateVector> {
    FieldHandle::builtin(name)?.eval(x)
}

/// `x -> f(x) V(x) / (1 + V(x))`, which vanishes exactly where `V` does.
pub fn rescale_field(f: &FieldHandle, v: &ScalarFn) -> FieldHandle {
    let inner = f.f.clone();
    let v = v.clone();
    FieldHandle {
        dim: f.dim,
        source: FieldSource::Derived(format!("rescaled({};{})", f.source, v.label())),
        f: Arc::new(move |x| {
            let w = v.at(x);
            if w == 0.0 {
                return StateVector::zeros(x.len());
            }
            inner(x) * (w / (1.0 + w))
        }),
    }
}
