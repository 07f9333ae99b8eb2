//! Smoothing of time-nonincreasing functions: time partitions, cubic
//! Hermite gluing, shell-wise partitions of unity, and the smooth converse
//! barrier built on a rescaled time.

mod compact;
mod converse;
mod global;
mod partition;

pub use compact::{smooth_on_compact, ContinuityReport, SmoothDomain, SmoothedFn, ValidationReport};
pub use converse::{converse_smooth_barrier, ConverseConfig};
pub use global::{shell_weight, smooth_global, GlobalOptions, ShellHorizon};
pub use partition::{build_time_partition, TimePartition, SUBDIVISION_CAP};

use crate::error::{Error, Result};

/// `w_i + (w_{i+1} - w_i)(3s² - 2s³)` with `s = (t - t_i)/(t_{i+1} - t_i)`.
pub fn hermite_segment(t: f64, t_i: f64, t_next: f64, w_i: f64, w_next: f64) -> Result<f64> {
    if !(t_next > t_i) {
        return Err(Error::InvalidArgument(format!("empty segment [{t_i}, {t_next}]")));
    }
    if !(t >= t_i && t <= t_next) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [{t_i}, {t_next}]")));
    }
    let s = (t - t_i) / (t_next - t_i);
    Ok(w_i + (w_next - w_i) * (3.0 * s * s - 2.0 * s * s * s))
}
