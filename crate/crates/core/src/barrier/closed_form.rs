//! Closed-form barrier of the counterexample system.

use std::f64::consts::PI;

use super::{BarrierFn, Provenance};
use crate::StateVector;

const SNAP: f64 = 1e-12;

/// `B(t,x)` for the counterexample: 0 at the origin, `1/(kπ)` on the limit
/// cycle `|x| = 1/(kπ)`, otherwise `1 / (arccot(cot(1/|x|) - t/2) + kπ)`
/// with `k = floor(1/(π|x|))` and `arccot` valued in `(0, π)`.
pub fn counterexample_barrier(t: f64, x: &StateVector) -> f64 {
    let r = x.norm();
    if r == 0.0 {
        return 0.0;
    }
    let u = 1.0 / r;
    let j = (u / PI).round();
    if j >= 1.0 && (r - 1.0 / (j * PI)).abs() <= SNAP {
        return 1.0 / (j * PI);
    }
    let k = (u / PI).floor();
    let cot = u.cos() / u.sin();
    let arccot = 1f64.atan2(cot - 0.5 * t);
    1.0 / (arccot + k * PI)
}

pub fn counterexample_barrier_fn() -> BarrierFn {
    BarrierFn::from_fn(2, Provenance::ClosedformCounterexample, counterexample_barrier)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    #[test]
    fn origin_and_cycles() {
        assert_eq!(counterexample_barrier(4.0, &state(&[0.0, 0.0])), 0.0);
        let r = 1.0 / (3.0 * PI);
        let x = state(&[r * 0.6, r * 0.8]);
        for t in [0.0, 1.0, 10.0] {
            assert!((counterexample_barrier(t, &x) - r).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_time_is_norm() {
        for r in [0.05, 0.1, 0.2, 0.5, 0.9, 1.0] {
            let x = state(&[r, 0.0]);
            assert!((counterexample_barrier(0.0, &x) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn decreasing_in_time_toward_inner_cycle() {
        let x = state(&[2.0 / PI, 0.0]);
        let mut prev = counterexample_barrier(0.0, &x);
        for i in 1..50 {
            let b = counterexample_barrier(i as f64 * 0.5, &x);
            assert!(b < prev && b > 1.0 / (2.0 * PI));
            prev = b;
        }
    }
}
