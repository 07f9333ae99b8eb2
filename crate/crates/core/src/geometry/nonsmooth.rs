//! Sampled Clarke generalized gradients and proximal subgradient tests.

use serde::{Deserialize, Serialize};

use super::sampling::ball_points;
use super::sets::ScalarFn;
use crate::error::{Error, Result};
use crate::StateVector;

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&StateVector) -> f64, x: &StateVector, step: f64) -> Result<StateVector> {
    let n = x.len();
    let mut g = StateVector::zeros(n);
    let mut y = x.clone();
    for d in 0..n {
        let orig = y[d];
        y[d] = orig + step;
        let fp = f(&y);
        y[d] = orig - step;
        let fm = f(&y);
        y[d] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::non_finite("function value", x));
        }
        g[d] = (fp - fm) / (2.0 * step);
    }
    Ok(g)
}

/// Finite-difference gradients at `m` deterministic points of the
/// `radius`-ball around `x` (the first one at `x` itself). The list is a
/// generator set for the Clarke gradient.
pub fn clarke_gradient_sample_with(
    f: impl Fn(&StateVector) -> f64,
    x: &StateVector,
    radius: f64,
    m: usize,
    fd_step: f64,
) -> Result<Vec<StateVector>> {
    let n = x.len();
    if m < 2 * n + 1 {
        return Err(Error::InvalidArgument(format!("clarke sampling needs m >= 2n+1 = {}, got {m}", 2 * n + 1)));
    }
    if !(radius > 0.0) || !(fd_step > 0.0) {
        return Err(Error::InvalidArgument("radius and fd step must be positive".into()));
    }
    let mut points = vec![x.clone()];
    points.extend(ball_points(x, radius, m - 1, 1));
    points
        .iter()
        .map(|p| fd_gradient(&f, p, fd_step).map_err(|_| Error::non_finite("function value near sample", p)))
        .collect()
}

pub fn clarke_gradient_sample(b: &ScalarFn, x: &StateVector, radius: f64, m: usize, fd_step: f64) -> Result<Vec<StateVector>> {
    clarke_gradient_sample_with(|y| b.at(y), x, radius, m, fd_step)
}

#[derive(Clone, Debug)]
pub struct SubgradientCandidate {
    pub x: StateVector,
    pub zeta: StateVector,
    pub radius: f64,
    pub epsilon: f64,
}

impl SubgradientCandidate {
    pub fn new(x: StateVector, zeta: StateVector, radius: f64, epsilon: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("subgradient radius must be positive".into()));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidArgument("curvature bound must be nonnegative".into()));
        }
        if x.len() != zeta.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: zeta.len(),
            });
        }
        Ok(SubgradientCandidate { x, zeta, radius, epsilon })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProximalOutcome {
    pub holds: bool,
    pub worst_margin: f64,
}

/// Checks `B(y) >= B(x) + <zeta, y-x> - eps |y-x|^2` at `m` deterministic
/// points `y` of the candidate's ball (plus the axis points at full radius).
pub fn proximal_subgradient_test_with(
    cand: &SubgradientCandidate,
    f: impl Fn(&StateVector) -> f64,
    m: usize,
    tol: f64,
) -> Result<ProximalOutcome> {
    if m < 10 {
        return Err(Error::InvalidArgument(format!("proximal test needs m >= 10, got {m}")));
    }
    let bx = f(&cand.x);
    if !bx.is_finite() {
        return Err(Error::non_finite("function value", &cand.x));
    }
    let n = cand.x.len();
    let mut ys = ball_points(&cand.x, cand.radius, m, 2);
    for d in 0..n {
        for sign in [-1.0, 1.0] {
            let mut y = cand.x.clone();
            y[d] += sign * cand.radius;
            ys.push(y);
        }
    }
    let mut worst = f64::INFINITY;
    for y in &ys {
        let by = f(y);
        if !by.is_finite() {
            return Err(Error::non_finite("function value", y));
        }
        let dy = y - &cand.x;
        let margin = by - bx - cand.zeta.dot(&dy) + cand.epsilon * dy.norm_squared();
        worst = worst.min(margin);
    }
    Ok(ProximalOutcome {
        holds: worst >= -tol,
        worst_margin: worst,
    })
}

pub fn proximal_subgradient_test(cand: &SubgradientCandidate, b: &ScalarFn, m: usize, tol: f64) -> Result<ProximalOutcome> {
    proximal_subgradient_test_with(cand, |y| b.at(y), m, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    #[test]
    fn smooth_point_gradients() {
        let b = ScalarFn::new("norm", |x| (x[0] * x[0] + x[1] * x[1]).sqrt());
        for g in clarke_gradient_sample(&b, &state(&[1.0, 0.0]), 1e-3, 9, 1e-6).unwrap() {
            assert!((g[0] - 1.0).abs() < 2e-3 && g[1].abs() < 2e-3, "{g}");
        }
        // At a tiny radius the samples converge to the true gradient.
        for g in clarke_gradient_sample(&b, &state(&[1.0, 0.0]), 1e-9, 9, 1e-6).unwrap() {
            assert!((g[0] - 1.0).abs() < 1e-6 && g[1].abs() < 1e-6, "{g}");
        }
    }

    #[test]
    fn kink_splits_signs() {
        let b = ScalarFn::new("abs1", |x| x[0].abs());
        let gs = clarke_gradient_sample(&b, &state(&[0.0, 0.0]), 1e-3, 41, 1e-9).unwrap();
        let plus = gs.iter().filter(|g| (g[0] - 1.0).abs() < 1e-6).count();
        let minus = gs.iter().filter(|g| (g[0] + 1.0).abs() < 1e-6).count();
        assert!(plus >= 10 && minus >= 10, "{plus} {minus}");
        assert!(gs.iter().all(|g| g[0].abs() <= 1.0 + 1e-9));
    }

    #[test]
    fn quadratic_gradient() {
        let b = ScalarFn::from_expr("x1^2/10 + x2^2 - 1", 2).unwrap();
        for g in clarke_gradient_sample(&b, &state(&[1.0, 1.0]), 1e-6, 5, 1e-5).unwrap() {
            assert!((g[0] - 0.2).abs() < 1e-5 && (g[1] - 2.0).abs() < 1e-5);
        }
        assert!(clarke_gradient_sample(&b, &state(&[1.0, 1.0]), 1e-6, 4, 1e-5).is_err());
    }

    #[test]
    fn proximal_examples() {
        let sq = ScalarFn::new("sq", |x| x[0] * x[0] + x[1] * x[1]);
        let zero = state(&[0.0, 0.0]);
        let c = SubgradientCandidate::new(zero.clone(), zero.clone(), 1e-2, 0.0).unwrap();
        assert!(proximal_subgradient_test(&c, &sq, 20, 1e-12).unwrap().holds);

        let negnorm = ScalarFn::new("-norm", |x| -(x[0] * x[0] + x[1] * x[1]).sqrt());
        for zeta in [state(&[0.0, 0.0]), state(&[1.0, 0.0]), state(&[-0.3, 0.7])] {
            let c = SubgradientCandidate::new(zero.clone(), zeta, 1e-2, 1.0).unwrap();
            assert!(!proximal_subgradient_test(&c, &negnorm, 20, 1e-12).unwrap().holds);
        }

        let norm = ScalarFn::new("norm", |x| (x[0] * x[0] + x[1] * x[1]).sqrt());
        let c = SubgradientCandidate::new(zero, state(&[0.5, 0.0]), 1e-2, 0.0).unwrap();
        assert!(proximal_subgradient_test(&c, &norm, 20, 1e-12).unwrap().holds);
    }
}
