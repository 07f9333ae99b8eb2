//! Hausdorff distance between finite point clouds.

use crate::error::{Error, Result};
use crate::StateVector;

/// `sup_{a in A} inf_{b in B} |a - b|`.
pub fn directed_hausdorff(a: &[StateVector], b: &[StateVector]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance; both clouds must be nonempty.
pub fn hausdorff_distance(a: &[StateVector], b: &[StateVector]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet("hausdorff distance of an empty cloud".into()));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}
