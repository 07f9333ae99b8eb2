//! Arithmetic expressions over named variables, parsed once and evaluated
//! many times. Parsing is delegated to `meval`; variables and the function
//! table are resolved here so compiled expressions are `Send + Sync`.

use std::fmt;
use std::sync::Arc;

use meval::{ContextProvider, FuncEvalError};

use crate::error::{Error, Result};

/// A parsed expression bound to an ordered list of variable names.
#[derive(Clone)]
pub struct CompiledExpr {
    source: String,
    vars: Arc<[String]>,
    expr: meval::Expr,
}

struct Bindings<'a> {
    names: &'a [String],
    values: &'a [f64],
}

impl ContextProvider for Bindings<'_> {
    fn get_var(&self, name: &str) -> Option<f64> {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return self.values.get(i).copied();
        }
        match name {
            "pi" => Some(std::f64::consts::PI),
            "e" => Some(std::f64::consts::E),
            _ => None,
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> Result<f64, FuncEvalError> {
        let unary = |f: fn(f64) -> f64| match args {
            [a] => Ok(f(*a)),
            [] => Err(FuncEvalError::TooFewArguments),
            _ => Err(FuncEvalError::TooManyArguments),
        };
        match name {
            "sin" => unary(f64::sin),
            "cos" => unary(f64::cos),
            "tan" => unary(f64::tan),
            "atan" => unary(f64::atan),
            "sqrt" => unary(f64::sqrt),
            "abs" => unary(f64::abs),
            "exp" => unary(f64::exp),
            "ln" => unary(f64::ln),
            "tanh" => unary(f64::tanh),
            "signum" => unary(f64::signum),
            "atan2" => match args {
                [y, x] => Ok(y.atan2(*x)),
                _ => Err(FuncEvalError::NumberArgs(2)),
            },
            "max" if !args.is_empty() => Ok(args.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            "min" if !args.is_empty() => Ok(args.iter().copied().fold(f64::INFINITY, f64::min)),
            _ => Err(FuncEvalError::UnknownFunction),
        }
    }
}

impl CompiledExpr {
    /// Parses `source` and checks that it only references `vars`, the
    /// constants `pi`/`e` and supported functions.
    pub fn parse<S: AsRef<str>>(source: &str, vars: &[S]) -> Result<Self> {
        let expr: meval::Expr = source.parse().map_err(|e: meval::Error| Error::Expression {
            source_text: source.to_string(),
            message: e.to_string(),
        })?;
        let vars: Arc<[String]> = vars.iter().map(|v| v.as_ref().to_string()).collect();
        let compiled = CompiledExpr {
            source: source.to_string(),
            vars,
            expr,
        };
        // A probe evaluation surfaces unknown variables and functions at parse time.
        let probe = vec![0.5; compiled.vars.len()];
        compiled
            .expr
            .eval_with_context(compiled.bindings(&probe))
            .map_err(|e| Error::Expression {
                source_text: source.to_string(),
                message: e.to_string(),
            })?;
        Ok(compiled)
    }

    /// Variables `x1..xn`.
    pub fn parse_state(source: &str, dim: usize) -> Result<Self> {
        let names: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        Self::parse(source, &names)
    }

    fn bindings<'a>(&'a self, values: &'a [f64]) -> Bindings<'a> {
        Bindings {
            names: &self.vars,
            values,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Evaluates with `values` bound positionally to the variable list.
    /// Evaluation failures (domain errors) come back as NaN.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.expr
            .eval_with_context(self.bindings(values))
            .unwrap_or(f64::NAN)
    }
}

impl fmt::Debug for CompiledExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompiledExpr")
            .field("source", &self.source)
            .field("vars", &self.vars)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_state_expressions() {
        let e = CompiledExpr::parse_state("x1^2/10 + x2^2 - 1", 2).unwrap();
        assert!((e.eval(&[1.0, 1.0]) - 0.1).abs() < 1e-15);
        let e = CompiledExpr::parse_state("sqrt(abs(x1)) + sin(pi*x2)", 2).unwrap();
        assert!((e.eval(&[4.0, 0.5]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_names() {
        assert!(CompiledExpr::parse_state("x3 + 1", 2).is_err());
        assert!(CompiledExpr::parse_state("foo(x1)", 2).is_err());
        assert!(CompiledExpr::parse_state("x1 +", 2).is_err());
    }

    #[test]
    fn custom_variable_names() {
        let e = CompiledExpr::parse("2*b + b^3", &["b"]).unwrap();
        assert_eq!(e.eval(&[1.0]), 3.0);
    }
}
