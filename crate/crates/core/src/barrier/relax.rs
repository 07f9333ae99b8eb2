//! Relaxation functions `g` for the barrier decrease condition
//! `<∇B, (1, η)> <= g(B)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::expr::CompiledExpr;

#[derive(Clone)]
pub enum RelaxFn {
    Zero,
    /// `g(b) = L b`; locally Lipschitz, hence both a uniqueness and a
    /// minimal function.
    Linear(f64),
    /// Strictly increasing with `g(0) = 0`, over the variable `b`.
    ExtendedClassK(CompiledExpr),
    /// Any minimal (or uniqueness) function, over the variable `b`.
    Minimal(CompiledExpr),
}

impl fmt::Debug for RelaxFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelaxFn::Zero => write!(f, "zero"),
            RelaxFn::Linear(l) => write!(f, "linear({l})"),
            RelaxFn::ExtendedClassK(e) => write!(f, "extended_class_k({})", e.source()),
            RelaxFn::Minimal(e) => write!(f, "minimal({})", e.source()),
        }
    }
}

impl RelaxFn {
    pub fn linear(l: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidArgument(format!("linear relaxation needs L > 0, got {l}")));
        }
        Ok(RelaxFn::Linear(l))
    }

    /// Parses and checks `g(0) = 0` and strict increase on a probe grid
    /// over `[-10, 10]`.
    pub fn extended_class_k(source: &str) -> Result<Self> {
        let e = CompiledExpr::parse(source, &["b"])?;
        let g0 = e.eval(&[0.0]);
        if g0.abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("extended class-K function needs g(0) = 0, got {g0}")));
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=400 {
            let b = -10.0 + 0.05 * i as f64;
            let v = e.eval(&[b]);
            if !(v > prev) {
                return Err(Error::InvalidArgument(format!("`{source}` is not strictly increasing near b = {b}")));
            }
            prev = v;
        }
        Ok(RelaxFn::ExtendedClassK(e))
    }

    pub fn minimal(source: &str) -> Result<Self> {
        Ok(RelaxFn::Minimal(CompiledExpr::parse(source, &["b"])?))
    }

    pub fn eval(&self, b: f64) -> f64 {
        match self {
            RelaxFn::Zero => 0.0,
            RelaxFn::Linear(l) => l * b,
            RelaxFn::ExtendedClassK(e) | RelaxFn::Minimal(e) => e.eval(&[b]),
        }
    }

    /// Admissible in the minimal-function role required by conditional
    /// invariance checks.
    pub fn is_minimal_variant(&self) -> bool {
        !matches!(self, RelaxFn::ExtendedClassK(_))
    }

    pub fn describe(&self) -> String {
        format!("{self:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants() {
        assert_eq!(RelaxFn::Zero.eval(3.0), 0.0);
        assert_eq!(RelaxFn::linear(2.0).unwrap().eval(1.5), 3.0);
        assert!(RelaxFn::linear(0.0).is_err());
        let k = RelaxFn::extended_class_k("b^3 + b").unwrap();
        assert_eq!(k.eval(1.0), 2.0);
        assert!(RelaxFn::extended_class_k("b^2").is_err());
        assert!(RelaxFn::extended_class_k("b + 1").is_err());
        let m = RelaxFn::minimal("b*abs(ln(abs(b)))").unwrap();
        assert!(m.eval(0.5) > 0.0);
    }
}
