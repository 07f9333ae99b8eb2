//! Finite-step surrogates for the contingent, external and Clarke tangent
//! cones of a closed set.

use serde::{Deserialize, Serialize};

use super::sampling::ball_points;
use super::sets::SetSpec;
use crate::error::{Error, Result};
use crate::StateVector;

/// Default admission tolerance for cone residuals.
pub const CONE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeMode {
    Contingent,
    External,
    ClarkeTangent,
}

#[derive(Clone, Debug)]
pub struct ConeProbe {
    pub x: StateVector,
    pub v: StateVector,
    steps: Vec<f64>,
    pub mode: ConeMode,
}

impl ConeProbe {
    /// Probe with the default steps `10^-1, ..., 10^-6`.
    pub fn new(x: StateVector, v: StateVector, mode: ConeMode) -> Self {
        ConeProbe {
            x,
            v,
            steps: (1..=6).map(|i| 10f64.powi(-i)).collect(),
            mode,
        }
    }

    pub fn with_steps(x: StateVector, v: StateVector, steps: Vec<f64>, mode: ConeMode) -> Result<Self> {
        if steps.len() < 3 {
            return Err(Error::InvalidArgument("cone probe needs at least 3 steps".into()));
        }
        if steps.iter().any(|h| !(*h > 0.0) || !h.is_finite()) || steps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidArgument("cone probe steps must be positive and strictly decreasing".into()));
        }
        Ok(ConeProbe { x, v, steps, mode })
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }
}

/// Difference quotient at every step of the probe.
pub fn cone_quotients(probe: &ConeProbe, s: &SetSpec, tol: f64) -> Result<Vec<f64>> {
    if probe.x.len() != probe.v.len() {
        return Err(Error::Dimension {
            expected: probe.x.len(),
            got: probe.v.len(),
        });
    }
    let base = s.distance(&probe.x)?;
    match probe.mode {
        ConeMode::Contingent | ConeMode::ClarkeTangent if base > tol => {
            return Err(Error::BasePointNotInSet { distance: base });
        }
        _ => {}
    }
    let mut out = Vec::with_capacity(probe.steps.len());
    for &h in &probe.steps {
        let q = match probe.mode {
            ConeMode::Contingent => s.distance(&(&probe.x + &probe.v * h))? / h,
            ConeMode::External => (s.distance(&(&probe.x + &probe.v * h))? - base) / h,
            ConeMode::ClarkeTangent => {
                // Worst quotient over members of S within h of x.
                let mut worst = s.distance(&(&probe.x + &probe.v * h))? / h;
                for y in ball_points(&probe.x, h, 24, 5) {
                    if s.contains(&y) {
                        worst = worst.max(s.distance(&(&y + &probe.v * h))? / h);
                    }
                }
                worst
            }
        };
        out.push(q);
    }
    Ok(out)
}

/// Minimum difference quotient over the probe's steps; a value `<= tol`
/// admits the direction.
pub fn cone_residual(probe: &ConeProbe, s: &SetSpec, tol: f64) -> Result<f64> {
    Ok(cone_quotients(probe, s, tol)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Like [`cone_residual`] but also extrapolates the last two quotients
/// linearly in `h` to `h = 0`, which admits tangent directions whose
/// quotient decays only like `O(h)`.
pub fn cone_limit(probe: &ConeProbe, s: &SetSpec, tol: f64) -> Result<f64> {
    let q = cone_quotients(probe, s, tol)?;
    let raw = q.iter().copied().fold(f64::INFINITY, f64::min);
    let m = q.len();
    let rho = probe.steps[m - 1] / probe.steps[m - 2];
    let extrapolated = ((q[m - 1] - rho * q[m - 2]) / (1.0 - rho)).max(0.0);
    Ok(raw.min(extrapolated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    fn disk() -> SetSpec {
        SetSpec::ball(state(&[0.0, 0.0]), 1.0).unwrap()
    }

    #[test]
    fn inward_and_outward() {
        let inward = ConeProbe::new(state(&[1.0, 0.0]), state(&[-1.0, 0.0]), ConeMode::Contingent);
        assert!(cone_residual(&inward, &disk(), CONE_TOL).unwrap() <= 1e-9);
        let outward = ConeProbe::new(state(&[1.0, 0.0]), state(&[1.0, 0.0]), ConeMode::Contingent);
        assert!((cone_residual(&outward, &disk(), CONE_TOL).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tangent_needs_extrapolation() {
        let tangent = ConeProbe::new(state(&[1.0, 0.0]), state(&[0.0, 1.0]), ConeMode::Contingent);
        let raw = cone_residual(&tangent, &disk(), CONE_TOL).unwrap();
        assert!(raw > 1e-7 && raw < 1e-6);
        assert!(cone_limit(&tangent, &disk(), CONE_TOL).unwrap() < 1e-9);
    }

    #[test]
    fn base_point_must_be_in_set() {
        let p = ConeProbe::new(state(&[2.0, 0.0]), state(&[1.0, 0.0]), ConeMode::Contingent);
        assert!(matches!(cone_residual(&p, &disk(), CONE_TOL), Err(Error::BasePointNotInSet { .. })));
        let ext = ConeProbe::new(state(&[2.0, 0.0]), state(&[-1.0, 0.0]), ConeMode::External);
        assert!((cone_residual(&ext, &disk(), CONE_TOL).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn step_validation() {
        let x = state(&[0.0]);
        assert!(ConeProbe::with_steps(x.clone(), x.clone(), vec![0.1, 0.01], ConeMode::Contingent).is_err());
        assert!(ConeProbe::with_steps(x.clone(), x.clone(), vec![0.1, 0.2, 0.01], ConeMode::Contingent).is_err());
        assert!(ConeProbe::with_steps(x.clone(), x, vec![0.1, 0.01, 0.001], ConeMode::Contingent).is_ok());
    }

    #[test]
    fn clarke_tangent_on_disk() {
        let inward = ConeProbe::new(state(&[1.0, 0.0]), state(&[-1.0, 0.0]), ConeMode::ClarkeTangent);
        assert!(cone_residual(&inward, &disk(), CONE_TOL).unwrap() <= 1e-9);
        let outward = ConeProbe::new(state(&[1.0, 0.0]), state(&[1.0, 0.0]), ConeMode::ClarkeTangent);
        assert!(cone_residual(&outward, &disk(), CONE_TOL).unwrap() > 0.5);
    }
}
