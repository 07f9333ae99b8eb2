//! Sampled reach maps `R(t,x)` and `R^b(t,x)`, the Filippov bound and
//! regularity probes.
//!
//! Clouds are finite under-approximations: they hold the stored nodes of
//! finitely many selections.

mod cache;

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{read_cloud_binary, write_cloud_binary, CacheKey, ReachCache};

use crate::dynamics::{BundlePlan, FieldHandle, InclusionSpec};
use crate::error::{Error, Result};
use crate::geometry::{hausdorff_distance, SetSpec};
use crate::solver::{fmt_f64, integrate, solution_bundle, Direction, IntegratorConfig, Termination, Trajectory};
use crate::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReachMode {
    FullTube,
    EndpointsOnly,
}

/// Bundle plan plus the stride at which trajectory nodes are kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachResolution {
    pub bundle: BundlePlan,
    #[serde(default = "one")]
    pub node_stride: usize,
}

fn one() -> usize {
    1
}

impl Default for ReachResolution {
    fn default() -> Self {
        ReachResolution {
            bundle: BundlePlan::default(),
            node_stride: 1,
        }
    }
}

impl ReachResolution {
    pub fn new(bundle: BundlePlan, node_stride: usize) -> Self {
        ReachResolution { bundle, node_stride }
    }

    /// Canonical text used in cache keys; includes the integrator settings
    /// that affect node placement.
    pub fn key(&self, cfg: &IntegratorConfig) -> String {
        format!(
            "m={};k={};p={:?};stride={};{:?};h={:e};rtol={:e};atol={:e};clamp={:?};esc={:e}",
            self.bundle.directions,
            self.bundle.switches,
            self.bundle.switch_period,
            self.node_stride,
            cfg.method,
            cfg.step,
            cfg.rel_tol,
            cfg.abs_tol,
            cfg.radial_clamp,
            cfg.escape_radius
        )
    }
}

/// Finite approximation of `R(t,x)` (full tube) or `R^b(t,x)` (endpoints).
/// A negative horizon means backward reach.
#[derive(Clone, Debug, PartialEq)]
pub struct ReachCloud {
    pub base: StateVector,
    pub horizon: f64,
    pub points: Vec<StateVector>,
    /// Node index along the producing trajectory for each point.
    pub s_index: Vec<u32>,
    pub mode: ReachMode,
    pub bundle_size: u32,
    pub node_stride: u32,
    /// Some trajectory stopped early (escape or step limit).
    pub truncated: bool,
}

impl ReachCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Minimum distance from the cloud to `s`.
    pub fn min_distance(&self, s: &SetSpec) -> Result<f64> {
        let mut best = f64::INFINITY;
        for p in &self.points {
            best = best.min(s.distance(p)?);
            if best == 0.0 {
                break;
            }
        }
        Ok(best)
    }

    /// CSV with columns `s_index, x1..xn`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let n = self.base.len();
        let header: Vec<String> = std::iter::once("s_index".to_string())
            .chain((1..=n).map(|i| format!("x{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (p, s) in self.points.iter().zip(&self.s_index) {
            write!(w, "{s}")?;
            for v in p.iter() {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn direction_of(t: f64) -> Direction {
    if t < 0.0 {
        Direction::Backward
    } else {
        Direction::Forward
    }
}

fn bits(x: &StateVector) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

fn trivial(x: &StateVector, t: f64, mode: ReachMode, res: &ReachResolution) -> ReachCloud {
    ReachCloud {
        base: x.clone(),
        horizon: t,
        points: vec![x.clone()],
        s_index: vec![0],
        mode,
        bundle_size: res.bundle.directions as u32,
        node_stride: res.node_stride as u32,
        truncated: false,
    }
}

fn check_args(f: &InclusionSpec, x: &StateVector, t: f64, res: &ReachResolution) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument("reach horizon must be finite".into()));
    }
    if res.node_stride == 0 {
        return Err(Error::InvalidArgument("node stride must be positive".into()));
    }
    if x.len() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

fn truncated(trajs: &[Trajectory]) -> bool {
    trajs
        .iter()
        .any(|tr| matches!(tr.termination, Termination::Escape | Termination::StepLimit))
}

/// Union of the stored nodes (every `node_stride`-th plus the last) of a
/// solution bundle over `[0, |t|]`, in bundle order with exact duplicates
/// removed.
pub fn reach(
    f: &InclusionSpec,
    x: &StateVector,
    t: f64,
    cfg: &IntegratorConfig,
    res: &ReachResolution,
) -> Result<ReachCloud> {
    check_args(f, x, t, res)?;
    if t == 0.0 {
        return Ok(trivial(x, t, ReachMode::FullTube, res));
    }
    let trajs = solution_bundle(f, x, t.abs(), direction_of(t), cfg, &res.bundle)?;
    Ok(tube_from(x, t, &trajs, res))
}

/// Builds the full-tube cloud from already integrated trajectories.
pub fn tube_from(x: &StateVector, t: f64, trajs: &[Trajectory], res: &ReachResolution) -> ReachCloud {
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    let mut s_index = Vec::new();
    for tr in trajs {
        let last = tr.states.len() - 1;
        for (i, p) in tr.states.iter().enumerate() {
            if i % res.node_stride != 0 && i != last {
                continue;
            }
            if seen.insert(bits(p)) {
                points.push(p.clone());
                s_index.push(i as u32);
            }
        }
    }
    ReachCloud {
        base: x.clone(),
        horizon: t,
        points,
        s_index,
        mode: ReachMode::FullTube,
        bundle_size: trajs.len() as u32,
        node_stride: res.node_stride as u32,
        truncated: truncated(trajs),
    }
}

/// The final node of each bundle trajectory.
pub fn reach_endpoint(
    f: &InclusionSpec,
    x: &StateVector,
    t: f64,
    cfg: &IntegratorConfig,
    res: &ReachResolution,
) -> Result<ReachCloud> {
    check_args(f, x, t, res)?;
    if t == 0.0 {
        return Ok(trivial(x, t, ReachMode::EndpointsOnly, res));
    }
    let trajs = solution_bundle(f, x, t.abs(), direction_of(t), cfg, &res.bundle)?;
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    let mut s_index = Vec::new();
    for tr in &trajs {
        let p = tr.endpoint();
        if seen.insert(bits(p)) {
            points.push(p.clone());
            s_index.push((tr.states.len() - 1) as u32);
        }
    }
    Ok(ReachCloud {
        base: x.clone(),
        horizon: t,
        points,
        s_index,
        mode: ReachMode::EndpointsOnly,
        bundle_size: trajs.len() as u32,
        node_stride: res.node_stride as u32,
        truncated: truncated(&trajs),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilippovReport {
    /// `max_s |φ(s,x)|_{R^b(s,y)} - e^{λ s} |x - y|`.
    pub max_violation: f64,
    pub worst_time: f64,
    pub nodes: usize,
    pub holds: bool,
}

/// Empirical Filippov bound for a single-valued field: at every stored node
/// `s`, the distance from `φ(s,x)` to the endpoint cloud `R^b(s,y)` must
/// not exceed `e^{λ s} |x - y|`.
pub fn filippov_check(
    f: &FieldHandle,
    x: &StateVector,
    y: &StateVector,
    horizon: f64,
    lambda: f64,
    cfg: &IntegratorConfig,
    lipschitz_box: &SetSpec,
) -> Result<FilippovReport> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    let inc = InclusionSpec::singleton(f.clone());
    let sel = crate::dynamics::Selector::none();
    let tx = integrate(&inc, &sel, x, horizon, Direction::Forward, cfg)?;
    // Adaptive steps differ between starts, so `y` is advanced onto the nodes of `x`.
    let mut ys = vec![y.clone()];
    for w in tx.times.windows(2) {
        let seg = integrate(&inc, &sel, ys.last().expect("nonempty"), w[1] - w[0], Direction::Forward, cfg)?;
        ys.push(seg.endpoint().clone());
    }
    for p in tx.states.iter().chain(&ys) {
        if !lipschitz_box.contains(p) {
            return Err(Error::EnlargeBox {
                location: p.iter().copied().collect(),
            });
        }
    }
    let d0 = (x - y).norm();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_time = 0.0;
    let nodes = tx.len();
    for i in 0..nodes {
        let s = tx.times[i];
        let v = (&tx.states[i] - &ys[i]).norm() - (lambda * s).exp() * d0;
        if v > worst {
            worst = v;
            worst_time = s;
        }
    }
    Ok(FilippovReport {
        max_violation: worst,
        worst_time,
        nodes,
        holds: worst <= cfg.tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// `d_H(R(t_i,x), R(t_{i+1},x)) / (t_{i+1} - t_i)`.
    pub temporal: Vec<f64>,
    /// `d_H(R(t,x), R(t,x+δ)) / |δ|` for every `t` of the grid and every `δ`.
    pub spatial: Vec<f64>,
    pub max_temporal: f64,
    pub max_spatial: f64,
}

/// Empirical continuity and Lipschitz moduli of the reach map; diagnostics,
/// not proofs.
pub fn reach_regularity_probe(
    f: &InclusionSpec,
    x: &StateVector,
    t_grid: &[f64],
    perturbations: &[StateVector],
    cfg: &IntegratorConfig,
    res: &ReachResolution,
) -> Result<RegularityReport> {
    let base: Vec<ReachCloud> = t_grid
        .par_iter()
        .map(|t| reach(f, x, *t, cfg, res))
        .collect::<Result<_>>()?;
    let mut temporal = Vec::new();
    for i in 0..t_grid.len().saturating_sub(1) {
        let dt = (t_grid[i + 1] - t_grid[i]).abs();
        if dt > 0.0 {
            temporal.push(hausdorff_distance(&base[i].points, &base[i + 1].points)? / dt);
        }
    }
    let jobs: Vec<(usize, &StateVector)> = (0..t_grid.len())
        .flat_map(|i| perturbations.iter().map(move |d| (i, d)))
        .collect();
    let spatial: Vec<f64> = jobs
        .par_iter()
        .map(|(i, d)| -> Result<f64> {
            let dn = d.norm();
            if dn == 0.0 {
                return Ok(0.0);
            }
            let other = reach(f, &(x + *d), t_grid[*i], cfg, res)?;
            Ok(hausdorff_distance(&base[*i].points, &other.points)? / dn)
        })
        .collect::<Result<_>>()?;
    let max_temporal = temporal.iter().copied().fold(0.0, f64::max);
    let max_spatial = spatial.iter().copied().fold(0.0, f64::max);
    Ok(RegularityReport {
        temporal,
        spatial,
        max_temporal,
        max_spatial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    #[test]
    fn zero_horizon_and_equilibrium() {
        let f = InclusionSpec::builtin("linear_safe").unwrap();
        let x = state(&[1.0, 0.5]);
        let c = reach(&f, &x, 0.0, &Default::default(), &Default::default()).unwrap();
        assert_eq!(c.points, vec![x.clone()]);
        let zero = InclusionSpec::singleton(FieldHandle::constant(state(&[0.0, 0.0])));
        let c = reach(&zero, &x, -3.0, &Default::default(), &Default::default()).unwrap();
        assert_eq!(c.points, vec![x]);
    }

    #[test]
    fn endpoint_in_tube() {
        let f = InclusionSpec::ball(FieldHandle::builtin("linear_safe").unwrap(), 0.1).unwrap();
        let res = ReachResolution::new(BundlePlan::constant(8), 3);
        let x = state(&[0.5, 0.5]);
        let tube = reach(&f, &x, 0.5, &Default::default(), &res).unwrap();
        let ends = reach_endpoint(&f, &x, 0.5, &Default::default(), &res).unwrap();
        assert_eq!(ends.len(), 8);
        for p in &ends.points {
            assert!(tube.points.contains(p));
        }
    }

    #[test]
    fn filippov_expanding_needs_rate() {
        let f = FieldHandle::new(2, "id", |x| x.clone());
        let bx = SetSpec::boxed(state(&[-10.0, -10.0]), state(&[10.0, 10.0])).unwrap();
        let cfg = IntegratorConfig::default();
        let x = state(&[0.1, 0.0]);
        let y = state(&[0.2, 0.0]);
        assert!(!filippov_check(&f, &x, &y, 1.0, 0.0, &cfg, &bx).unwrap().holds);
        assert!(filippov_check(&f, &x, &y, 1.0, 1.0 + 1e-6, &cfg, &bx).unwrap().holds);
        let small = SetSpec::boxed(state(&[-0.15, -0.1]), state(&[0.15, 0.1])).unwrap();
        assert!(matches!(
            filippov_check(&f, &x, &y, 1.0, 1.0, &cfg, &small),
            Err(Error::EnlargeBox { .. })
        ));
    }

    #[test]
    fn regularity_of_rest() {
        let zero = InclusionSpec::singleton(FieldHandle::constant(state(&[0.0, 0.0])));
        let r = reach_regularity_probe(
            &zero,
            &state(&[1.0, 1.0]),
            &[0.0, 0.5, 1.0],
            &[state(&[1e-3, 0.0])],
            &Default::default(),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(r.max_temporal, 0.0);
        assert!((r.max_spatial - 1.0).abs() < 1e-9);
    }
}
