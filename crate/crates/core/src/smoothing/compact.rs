use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::partition::TimePartition;
use super::hermite_segment;
use crate::barrier::{BarrierEval, BarrierFn, BarrierValue, Provenance};
use crate::error::{Error, Result};
use crate::solver::fmt_f64;
use crate::StateVector;

const MAX_ROUNDS: u32 = 40;

/// Degree-3 cubature for a centered Gaussian: `±σ√n e_d`, equal weights.
fn cubature(n: usize, sigma: f64) -> Vec<StateVector> {
    let r = sigma * (n as f64).sqrt();
    let mut out = Vec::with_capacity(2 * n);
    for d in 0..n {
        for s in [1.0, -1.0] {
            let mut e = StateVector::zeros(n);
            e[d] = s * r;
            out.push(e);
        }
    }
    out
}

fn values(h: &BarrierFn, ts: &[f64], x: &StateVector) -> Result<Vec<f64>> {
    Ok(h.eval_many(ts, x)?.into_iter().map(|b| b.value).collect())
}

/// The smoothed function on one compact set: Hermite interpolation in time
/// of `w_i = w̃_i + Σ_{l >= i} ζ_l`, where `w̃_i` is `h(t_i, ·)` averaged with
/// one bandwidth for all `i`. Positive weights keep `w̃_{i+1} <= w̃_i`
/// wherever `h` is nonincreasing in time.
#[derive(Clone)]
pub(crate) struct Compact {
    h: BarrierFn,
    pub(crate) partition: TimePartition,
    pub(crate) sigma: f64,
    tails: Vec<f64>,
}

impl Compact {
    pub(crate) fn horizon(&self) -> f64 {
        self.partition.horizon()
    }

    fn smoothed_snapshots(&self, ts: &[f64], x: &StateVector) -> Result<Vec<f64>> {
        if self.sigma == 0.0 {
            return values(&self.h, ts, x);
        }
        let pts = cubature(x.len(), self.sigma);
        let w = 1.0 / pts.len() as f64;
        let mut acc = vec![0.0; ts.len()];
        for p in pts {
            for (a, v) in acc.iter_mut().zip(values(&self.h, ts, &(x + p))?) {
                *a += w * v;
            }
        }
        Ok(acc)
    }

    pub(crate) fn eval_many(&self, ts: &[f64], x: &StateVector) -> Result<Vec<f64>> {
        let segs: Vec<usize> = ts.iter().map(|t| self.partition.segment(*t)).collect::<Result<_>>()?;
        let mut idx: Vec<usize> = segs.iter().flat_map(|i| [*i, i + 1]).collect();
        idx.sort_unstable();
        idx.dedup();
        let node_ts: Vec<f64> = idx.iter().map(|i| self.partition.nodes[*i]).collect();
        let snaps = self.smoothed_snapshots(&node_ts, x)?;
        let w = |i: usize| snaps[idx.binary_search(&i).expect("node requested")] + self.tails[i];
        ts.iter()
            .zip(segs)
            .map(|(t, i)| {
                let (a, b) = (self.partition.nodes[i], self.partition.nodes[i + 1]);
                hermite_segment(t.clamp(a, b), a, b, w(i), w(i + 1))
            })
            .collect()
    }
}

/// Summary of the grid validation done before a [`SmoothedFn`] is returned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub points: usize,
    pub times: usize,
    /// Smallest and largest `g / h` over validated points with `h > 0`.
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Largest `g(t_{j+1},x) - g(t_j,x)` over consecutive validation times.
    pub worst_increase: f64,
    pub bandwidths: Vec<f64>,
}

impl ValidationReport {
    fn empty() -> Self {
        ValidationReport {
            points: 0,
            times: 0,
            min_ratio: f64::INFINITY,
            max_ratio: f64::NEG_INFINITY,
            worst_increase: f64::NEG_INFINITY,
            bandwidths: vec![],
        }
    }

    pub(crate) fn merge(&mut self, other: &ValidationReport) {
        self.points += other.points;
        self.times = self.times.max(other.times);
        self.min_ratio = self.min_ratio.min(other.min_ratio);
        self.max_ratio = self.max_ratio.max(other.max_ratio);
        self.worst_increase = self.worst_increase.max(other.worst_increase);
        self.bandwidths.extend_from_slice(&other.bandwidths);
    }
}

pub(crate) const MONOTONE_SLACK: f64 = 1e-12;

/// Checks `½h <= g <= 2h` and monotonicity of `g` in time for one point.
pub(crate) fn validate_point(
    x: &StateVector,
    ts: &[f64],
    hv: &[f64],
    gv: &[f64],
    report: &mut ValidationReport,
) -> Result<()> {
    for (j, ((t, h), g)) in ts.iter().zip(hv).zip(gv).enumerate() {
        if !(*g >= 0.5 * h && *g <= 2.0 * h) {
            return Err(Error::Sandwich {
                t: *t,
                x: x.iter().copied().collect(),
                h: *h,
                g: *g,
            });
        }
        if *h > 0.0 {
            report.min_ratio = report.min_ratio.min(g / h);
            report.max_ratio = report.max_ratio.max(g / h);
        }
        if j > 0 {
            let inc = g - gv[j - 1];
            report.worst_increase = report.worst_increase.max(inc);
            if inc > MONOTONE_SLACK {
                return Err(Error::NotMonotone {
                    t: *t,
                    x: x.iter().copied().collect(),
                    increase: inc,
                });
            }
        }
    }
    report.points += 1;
    report.times = ts.len();
    Ok(())
}

/// Picks the bandwidth by shrinking from `sigma0` until
/// `|w̃_i - h(t_i,·)| < ζ_i / 2` at every grid point and node, then validates.
pub(crate) fn build_compact(
    h: &BarrierFn,
    grid: &[StateVector],
    partition: TimePartition,
    sigma0: f64,
) -> Result<(Compact, ValidationReport)> {
    if grid.is_empty() {
        return Err(Error::EmptySet("smoothing grid is empty".into()));
    }
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidArgument("initial bandwidth must be positive".into()));
    }
    let nodes = partition.nodes.clone();
    let base: Vec<Vec<f64>> = grid.par_iter().map(|x| values(h, &nodes, x)).collect::<Result<_>>()?;
    let tails = partition.tail_sums();
    let mut compact = Compact {
        h: h.clone(),
        partition,
        sigma: 0.0,
        tails,
    };
    // Shrink assuming the averaging error scales like σ².
    let mut sigma = sigma0;
    for round in 0..=MAX_ROUNDS {
        compact.sigma = sigma;
        let worst = grid
            .par_iter()
            .zip(&base)
            .map(|(x, hb)| -> Result<f64> {
                let w = compact.smoothed_snapshots(&nodes, x)?;
                Ok(w.iter()
                    .zip(hb)
                    .zip(&compact.partition.zeta)
                    .map(|((a, b), z)| (a - b).abs() / (0.5 * z))
                    .fold(0.0, f64::max))
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if worst < 1.0 {
            break;
        }
        if round == MAX_ROUNDS {
            compact.sigma = 0.0;
        }
        sigma *= (0.7 / worst.sqrt()).min(0.5);
    }

    let mut ts = Vec::with_capacity(2 * nodes.len());
    for w in nodes.windows(2) {
        ts.push(w[0]);
        ts.push(0.5 * (w[0] + w[1]));
    }
    ts.push(*nodes.last().expect("partition has nodes"));
    let reports: Vec<ValidationReport> = grid
        .par_iter()
        .map(|x| -> Result<ValidationReport> {
            let hv = values(h, &ts, x)?;
            let gv = compact.eval_many(&ts, x)?;
            let mut r = ValidationReport::empty();
            validate_point(x, &ts, &hv, &gv, &mut r)?;
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let mut report = ValidationReport::empty();
    for r in &reports {
        report.merge(r);
    }
    report.bandwidths = vec![compact.sigma];
    Ok((compact, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothDomain {
    Compact,
    Global,
}

/// A smoothed, time-nonincreasing approximation `g` of `h` with
/// `½h <= g <= 2h` on its validation grid.
#[derive(Clone)]
pub struct SmoothedFn {
    pub(crate) dim: usize,
    pub(crate) source: String,
    pub(crate) domain: SmoothDomain,
    pub(crate) horizon: f64,
    pub(crate) inner: Arc<dyn BarrierEval>,
    pub(crate) report: ValidationReport,
}

impl std::fmt::Debug for SmoothedFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothedFn")
            .field("source", &self.source)
            .field("domain", &self.domain)
            .field("horizon", &self.horizon)
            .finish()
    }
}

/// Finite-difference continuity of the spatial gradient: the largest change
/// of a central-difference gradient when the step is halved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub points: usize,
    pub step: f64,
    pub max_gradient_change: f64,
}

struct CompactEval(Compact);

impl BarrierEval for CompactEval {
    fn eval(&self, t: f64, x: &StateVector) -> Result<BarrierValue> {
        Ok(self.eval_many(&[t], x)?[0])
    }

    fn eval_many(&self, ts: &[f64], x: &StateVector) -> Result<Vec<BarrierValue>> {
        Ok(self.0.eval_many(ts, x)?.into_iter().map(BarrierValue::exact).collect())
    }
}

impl SmoothedFn {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn domain(&self) -> SmoothDomain {
        self.domain
    }

    /// Every time up to this is served; later times may fail with
    /// `OutOfHorizon`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn eval(&self, t: f64, x: &StateVector) -> Result<f64> {
        self.inner.eval(t, x).map(|v| v.value)
    }

    pub fn eval_many(&self, ts: &[f64], x: &StateVector) -> Result<Vec<f64>> {
        Ok(self.inner.eval_many(ts, x)?.into_iter().map(|v| v.value).collect())
    }

    pub fn into_barrier(self) -> BarrierFn {
        BarrierFn::new(
            self.dim,
            Provenance::Smoothed {
                reference: self.source.clone(),
            },
            self.inner,
        )
    }

    pub fn continuity_report(&self, t: f64, points: &[StateVector], step: f64) -> Result<ContinuityReport> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument("step must be positive".into()));
        }
        let grad = |x: &StateVector, d: f64| -> Result<StateVector> {
            let mut g = StateVector::zeros(x.len());
            for i in 0..x.len() {
                let mut p = x.clone();
                let mut m = x.clone();
                p[i] += d;
                m[i] -= d;
                g[i] = (self.eval(t, &p)? - self.eval(t, &m)?) / (2.0 * d);
            }
            Ok(g)
        };
        let changes: Vec<f64> = points
            .par_iter()
            .map(|x| Ok((grad(x, step)? - grad(x, 0.5 * step)?).norm()))
            .collect::<Result<_>>()?;
        Ok(ContinuityReport {
            points: points.len(),
            step,
            max_gradient_change: changes.into_iter().fold(0.0, f64::max),
        })
    }

    /// CSV rows `t, x1..xn, g` over a set of points at one time.
    pub fn write_grid_csv(&self, t: f64, points: &[StateVector], mut w: impl Write) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim).map(|i| format!("x{i}")))
            .chain(std::iter::once("g".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for x in points {
            let g = self.eval(t, x)?;
            let row: Vec<String> = std::iter::once(fmt_f64(t))
                .chain(x.iter().map(|v| fmt_f64(*v)))
                .chain(std::iter::once(fmt_f64(g)))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Smooths `h` over the grid points of a compact set `𝓘` disjoint from the
/// zero locus of `h`, using a partition from
/// [`build_time_partition`](super::build_time_partition).
pub fn smooth_on_compact(
    h: &BarrierFn,
    grid: &[StateVector],
    partition: TimePartition,
    bandwidth: f64,
) -> Result<SmoothedFn> {
    let horizon = partition.horizon();
    let (compact, report) = build_compact(h, grid, partition, bandwidth)?;
    Ok(SmoothedFn {
        dim: h.dim(),
        source: h.provenance().to_string(),
        domain: SmoothDomain::Compact,
        horizon,
        inner: Arc::new(CompactEval(compact)),
        report,
    })
}
