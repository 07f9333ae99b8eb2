use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::BarrierFn;
use crate::error::{Error, Result};
use crate::StateVector;

/// Largest per-unit subdivision tried before giving up.
pub const SUBDIVISION_CAP: u32 = 1 << 16;

const PROBES_PER_UNIT: usize = 4;

/// Partition of `[0, k_max]` refined on each unit interval, with the floor
/// values `η_k` and the slack sequence `ζ_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    /// `u_k` for `k = 1..=k_max` (stored at index `k - 1`).
    pub u: Vec<u32>,
    /// `j_k` for `k = 1..=k_max + 1`.
    pub offsets: Vec<usize>,
    pub nodes: Vec<f64>,
    pub eta: Vec<f64>,
    /// One entry per node.
    pub zeta: Vec<f64>,
}

impl TimePartition {
    pub fn k_max(&self) -> usize {
        self.u.len()
    }

    pub fn horizon(&self) -> f64 {
        self.k_max() as f64
    }

    /// Index of the last node.
    pub fn last(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `i` with `t ∈ [t_i, t_{i+1}]`.
    pub fn segment(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
        }
        let h = self.horizon();
        if t > h {
            return Err(Error::OutOfHorizon { t, horizon: h });
        }
        let i = self.nodes.partition_point(|s| *s <= t);
        Ok(i.saturating_sub(1).min(self.last() - 1))
    }

    /// `Σ_{l >= i} ζ_l`.
    pub fn tail_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.zeta.len()];
        let mut acc = 0.0;
        for i in (0..self.zeta.len()).rev() {
            acc += self.zeta[i];
            out[i] = acc;
        }
        out
    }
}

fn sorted_unique(mut ts: Vec<f64>) -> Vec<f64> {
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// Builds the partition for `h` over the grid points of a compact set that
/// avoids the zero locus of `h`.
///
/// `u_k` is found by doubling from 1 until `h(t_i,x) - h(t_{i+1},x) < η_k/4`
/// on every grid point. The slack is `ζ_i = min_{k' <= k(i)} η_{k'} / (8 (N - j_{k'} + 2))`
/// with `N` the last node index, so `Σ_{i >= j_k} ζ_i < η_k / 8`.
pub fn build_time_partition(h: &BarrierFn, grid: &[StateVector], k_max: usize) -> Result<TimePartition> {
    if grid.is_empty() {
        return Err(Error::EmptySet("partition grid is empty".into()));
    }
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let probes: Vec<f64> = (0..=PROBES_PER_UNIT * k_max)
        .map(|j| j as f64 / PROBES_PER_UNIT as f64)
        .collect();
    let profiles: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|x| h.eval_many(&probes, x).map(|v| v.into_iter().map(|b| b.value).collect()))
        .collect::<Result<_>>()?;
    for (x, prof) in grid.iter().zip(&profiles) {
        for (j, v) in prof.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(Error::ZeroLocus {
                    location: x.iter().copied().collect(),
                    value: *v,
                });
            }
            if j > 0 && *v > prof[j - 1] + 1e-12 * (1.0 + prof[j - 1].abs()) {
                return Err(Error::NotMonotone {
                    t: probes[j],
                    x: x.iter().copied().collect(),
                    increase: v - prof[j - 1],
                });
            }
        }
    }
    let mut eta = Vec::with_capacity(k_max);
    let mut floor = f64::INFINITY;
    for k in 1..=k_max {
        for p in &profiles {
            for v in &p[PROBES_PER_UNIT * (k - 1)..=PROBES_PER_UNIT * k] {
                floor = floor.min(*v);
            }
        }
        eta.push(floor);
    }

    let mut u: Vec<Option<u32>> = vec![None; k_max];
    let mut level = 0u32;
    loop {
        let count = 1u32 << level;
        let open: Vec<usize> = (0..k_max).filter(|k| u[*k].is_none()).collect();
        if open.is_empty() {
            break;
        }
        if count > SUBDIVISION_CAP {
            return Err(Error::SubdivisionCap { k: open[0] + 1 });
        }
        let node_times = |k: usize| (0..=count).map(move |r| k as f64 + r as f64 / count as f64);
        let ts = sorted_unique(open.iter().flat_map(|k| node_times(*k)).collect());
        let vals: Vec<Vec<f64>> = grid
            .par_iter()
            .map(|x| h.eval_many(&ts, x).map(|v| v.into_iter().map(|b| b.value).collect()))
            .collect::<Result<_>>()?;
        for k in open {
            let ok = vals.iter().all(|prof| {
                node_times(k).collect::<Vec<_>>().windows(2).all(|w| {
                    let a = prof[ts.partition_point(|s| *s < w[0])];
                    let b = prof[ts.partition_point(|s| *s < w[1])];
                    a - b < eta[k] / 4.0
                })
            });
            if ok {
                u[k] = Some(count);
            }
        }
        level += 1;
    }
    let u: Vec<u32> = u.into_iter().map(|c| c.expect("all unit intervals settled")).collect();

    let mut offsets = vec![0usize];
    let mut nodes = vec![0.0];
    for (k, uk) in u.iter().enumerate() {
        for r in 1..=*uk {
            nodes.push(if r == *uk { (k + 1) as f64 } else { k as f64 + r as f64 / *uk as f64 });
        }
        offsets.push(offsets[k] + *uk as usize);
    }
    let last = nodes.len() - 1;
    let a: Vec<f64> = (0..k_max)
        .map(|k| eta[k] / (8.0 * (last - offsets[k] + 2) as f64))
        .collect();
    let mut zeta = Vec::with_capacity(nodes.len());
    let mut running = f64::INFINITY;
    for k in 0..k_max {
        running = running.min(a[k]);
        for _ in offsets[k]..offsets[k + 1] {
            zeta.push(running);
        }
    }
    zeta.push(running);
    Ok(TimePartition {
        u,
        offsets,
        nodes,
        eta,
        zeta,
    })
}
