use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{selector_family, BundlePlan, InclusionSpec, Selector};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, SetSpec};
use crate::solver::{integrate, Direction, IntegratorConfig, Termination, Trajectory};
use crate::StateVector;

/// Which sets play the initial and forbidden roles.
#[derive(Clone, Debug)]
pub enum SafetyRoles {
    /// Solutions from `x_o` must avoid `x_u`.
    Safety { x_o: SetSpec, x_u: SetSpec },
    /// Solutions from `x_o` must stay in `x_s`.
    Conditional { x_o: SetSpec, x_s: SetSpec },
    /// Solutions from `x_s` must stay in `x_s`.
    PreInvariance { x_s: SetSpec },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyMode {
    Safety,
    Conditional,
    PreInvariance,
}

impl SafetyRoles {
    pub fn mode(&self) -> SafetyMode {
        match self {
            SafetyRoles::Safety { .. } => SafetyMode::Safety,
            SafetyRoles::Conditional { .. } => SafetyMode::Conditional,
            SafetyRoles::PreInvariance { .. } => SafetyMode::PreInvariance,
        }
    }

    fn initial(&self) -> &SetSpec {
        match self {
            SafetyRoles::Safety { x_o, .. } | SafetyRoles::Conditional { x_o, .. } => x_o,
            SafetyRoles::PreInvariance { x_s } => x_s,
        }
    }

    /// Forbidden set: `X_u`, or the complement of `X_s`.
    pub fn unsafe_set(&self) -> SetSpec {
        match self {
            SafetyRoles::Safety { x_u, .. } => x_u.clone(),
            SafetyRoles::Conditional { x_s, .. } | SafetyRoles::PreInvariance { x_s } => x_s.clone().complement(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePlan {
    pub boundary: usize,
    pub interior: usize,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            boundary: 64,
            interior: 32,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SafetyProblem {
    pub f: InclusionSpec,
    pub roles: SafetyRoles,
    pub horizon: f64,
    pub samples: SamplePlan,
    pub bundle: BundlePlan,
    pub integrator: IntegratorConfig,
    /// Sampling window for sets without a closed-form sampler.
    pub bounds: Aabb,
    /// A node violates when it comes within `tol` of `X_u`, or lies
    /// farther than `tol` outside `X_s`.
    pub tol: f64,
    pub seed: u64,
}

impl SafetyProblem {
    pub fn new(f: InclusionSpec, roles: SafetyRoles, horizon: f64, bounds: Aabb) -> Self {
        SafetyProblem {
            f,
            roles,
            horizon,
            samples: SamplePlan::default(),
            bundle: BundlePlan::default(),
            integrator: IntegratorConfig::default(),
            bounds,
            tol: 1e-6,
            seed: 0,
        }
    }

    /// Clearance of a node and whether it violates: `d(x, X_u) - tol`
    /// (violating when `<= 0`) or `tol - d(x, X_s)` (violating when `< 0`).
    fn clearance(&self, x: &StateVector) -> Result<(f64, bool)> {
        Ok(match &self.roles {
            SafetyRoles::Safety { x_u, .. } => {
                let c = x_u.distance(x)? - self.tol;
                (c, c <= 0.0)
            }
            SafetyRoles::Conditional { x_s, .. } | SafetyRoles::PreInvariance { x_s } => {
                let c = self.tol - x_s.distance(x)?;
                (c, c < 0.0)
            }
        })
    }

    fn initial_samples(&self) -> Result<(Vec<StateVector>, usize)> {
        let s = self.roles.initial();
        let mut pts = s.sample_boundary(self.samples.boundary, &self.bounds, self.seed)?;
        let nb = pts.len();
        pts.extend(s.sample_interior(self.samples.interior, &self.bounds, self.seed));
        Ok((pts, nb))
    }

    fn check_roles(&self, starts: &[StateVector]) -> Result<()> {
        match &self.roles {
            SafetyRoles::Safety { x_o, x_u } => {
                for x in starts {
                    if x_u.distance(x)? <= self.tol {
                        return Err(Error::Precondition(format!(
                            "X_o and X_u overlap: sample {:?} lies in X_u",
                            x.as_slice()
                        )));
                    }
                }
                for y in x_u.sample_interior(starts.len(), &self.bounds, self.seed) {
                    if x_o.distance(&y)? <= self.tol {
                        return Err(Error::Precondition(format!(
                            "X_o and X_u overlap: sample {:?} lies in X_o",
                            y.as_slice()
                        )));
                    }
                }
            }
            SafetyRoles::Conditional { x_s, .. } => {
                for x in starts {
                    if x_s.distance(x)? > self.tol {
                        return Err(Error::Precondition(format!(
                            "X_o is not contained in X_s: sample {:?}",
                            x.as_slice()
                        )));
                    }
                }
            }
            SafetyRoles::PreInvariance { .. } => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationWitness {
    pub start: Vec<f64>,
    pub sample_index: usize,
    pub selector_index: usize,
    pub hit_time: f64,
    pub hit_state: Vec<f64>,
    /// Distance from the hit state to the forbidden set.
    pub hit_distance: f64,
    /// Nodes up to and including the hit.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SafetyVerdict {
    NoViolationFound,
    Violation(Box<ViolationWitness>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub boundary_samples: usize,
    pub interior_samples: usize,
    pub selectors: usize,
    pub trajectories: usize,
    pub nodes_checked: usize,
    pub escaped: usize,
    pub step_limited: usize,
    /// Smallest node clearance (see [`SafetyProblem`]'s `tol`).
    pub min_clearance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub mode: SafetyMode,
    pub horizon: f64,
    pub verdict: SafetyVerdict,
    pub coverage: Coverage,
    pub disclaimers: Vec<String>,
}

impl SafetyReport {
    pub fn violated(&self) -> bool {
        matches!(self.verdict, SafetyVerdict::Violation(_))
    }

    pub fn witness(&self) -> Option<&ViolationWitness> {
        match &self.verdict {
            SafetyVerdict::Violation(w) => Some(w),
            SafetyVerdict::NoViolationFound => None,
        }
    }

    /// Plain-text summary for terminals and logs.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let mode = match self.mode {
            SafetyMode::Safety => "safety",
            SafetyMode::Conditional => "conditional invariance",
            SafetyMode::PreInvariance => "forward pre-invariance",
        };
        let _ = writeln!(s, "{mode} check over [0, {}]", self.horizon);
        match &self.verdict {
            SafetyVerdict::NoViolationFound => {
                let _ = writeln!(s, "verdict: no violation found");
            }
            SafetyVerdict::Violation(w) => {
                let _ = writeln!(s, "verdict: violation");
                let _ = writeln!(s, "  start {:?} (selector {})", w.start, w.selector_index);
                let _ = writeln!(s, "  hit at t = {} in state {:?}", w.hit_time, w.hit_state);
            }
        }
        let c = &self.coverage;
        let _ = writeln!(
            s,
            "coverage: {} boundary + {} interior starts, {} selectors, {} trajectories, {} nodes",
            c.boundary_samples, c.interior_samples, c.selectors, c.trajectories, c.nodes_checked
        );
        if c.escaped + c.step_limited > 0 {
            let _ = writeln!(s, "  stopped early: {} escaped, {} hit the step limit", c.escaped, c.step_limited);
        }
        let _ = writeln!(s, "  min clearance: {:e}", c.min_clearance);
        for d in &self.disclaimers {
            let _ = writeln!(s, "note: {d}");
        }
        s
    }
}

struct Hit {
    sample: usize,
    selector: usize,
    node: usize,
    traj: Trajectory,
}

struct RunStats {
    nodes: usize,
    escaped: usize,
    step_limited: usize,
    min_clearance: f64,
    hit: Option<Hit>,
}

fn run_one(p: &SafetyProblem, sample: usize, x0: &StateVector, selectors: &[Selector]) -> Result<RunStats> {
    let mut st = RunStats {
        nodes: 0,
        escaped: 0,
        step_limited: 0,
        min_clearance: f64::INFINITY,
        hit: None,
    };
    for (j, s) in selectors.iter().enumerate() {
        let tr = integrate(&p.f, s, x0, p.horizon, Direction::Forward, &p.integrator)?;
        match tr.termination {
            Termination::Escape => st.escaped += 1,
            Termination::StepLimit => st.step_limited += 1,
            _ => {}
        }
        let mut first = None;
        for (i, x) in tr.states.iter().enumerate() {
            let (c, bad) = p.clearance(x)?;
            st.min_clearance = st.min_clearance.min(c);
            if bad && first.is_none() {
                first = Some(i);
            }
        }
        st.nodes += tr.len();
        if let Some(i) = first {
            let earlier = st.hit.as_ref().map_or(true, |h| tr.times[i] < h.traj.times[h.node]);
            if earlier {
                st.hit = Some(Hit {
                    sample,
                    selector: j,
                    node: i,
                    traj: tr,
                });
            }
        }
    }
    Ok(st)
}

const DISCLAIMERS: [&str; 2] = [
    "no violation found is not a proof of safety: only finitely many initial states were simulated",
    "finitely many selections under-approximate the solution set of each initial state",
];

/// Simulates solution bundles from samples of the initial set and reports
/// the earliest node that violates the roles of `p`.
pub fn simulate_safety_check(p: &SafetyProblem) -> Result<SafetyReport> {
    if p.samples.boundary + p.samples.interior == 0 {
        return Err(Error::InvalidArgument("initial sample plan is empty".into()));
    }
    if !(p.horizon > 0.0) || !p.horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", p.horizon)));
    }
    if !(p.tol >= 0.0) {
        return Err(Error::InvalidArgument("tolerance must be nonnegative".into()));
    }
    p.integrator.validate()?;
    let selectors = selector_family(&p.f, &p.bundle, p.horizon)?;
    let (starts, nb) = p.initial_samples()?;
    if starts.is_empty() {
        return Err(Error::EmptySet("no initial samples inside the sampling bounds".into()));
    }
    p.check_roles(&starts)?;
    let runs: Vec<RunStats> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x)| run_one(p, i, x, &selectors))
        .collect::<Result<_>>()?;

    let mut coverage = Coverage {
        boundary_samples: nb,
        interior_samples: starts.len() - nb,
        selectors: selectors.len(),
        trajectories: starts.len() * selectors.len(),
        nodes_checked: 0,
        escaped: 0,
        step_limited: 0,
        min_clearance: f64::INFINITY,
    };
    let mut best: Option<Hit> = None;
    for r in runs {
        coverage.nodes_checked += r.nodes;
        coverage.escaped += r.escaped;
        coverage.step_limited += r.step_limited;
        coverage.min_clearance = coverage.min_clearance.min(r.min_clearance);
        if let Some(h) = r.hit {
            if best.as_ref().map_or(true, |b| h.traj.times[h.node] < b.traj.times[b.node]) {
                best = Some(h);
            }
        }
    }
    let mut disclaimers: Vec<String> = DISCLAIMERS.iter().map(|s| s.to_string()).collect();
    if coverage.escaped + coverage.step_limited > 0 {
        disclaimers.push(format!(
            "{} trajectories stopped before the horizon; their tails were not checked",
            coverage.escaped + coverage.step_limited
        ));
    }
    let verdict = match best {
        None => SafetyVerdict::NoViolationFound,
        Some(h) => {
            let x = &h.traj.states[h.node];
            SafetyVerdict::Violation(Box::new(ViolationWitness {
                start: starts[h.sample].iter().copied().collect(),
                sample_index: h.sample,
                selector_index: h.selector,
                hit_time: h.traj.times[h.node],
                hit_state: x.iter().copied().collect(),
                hit_distance: p.roles.unsafe_set().distance(x)?,
                times: h.traj.times[..=h.node].to_vec(),
                states: h.traj.states[..=h.node].iter().map(|s| s.iter().copied().collect()).collect(),
            }))
        }
    };
    Ok(SafetyReport {
        mode: p.roles.mode(),
        horizon: p.horizon,
        verdict,
        coverage,
        disclaimers,
    })
}

/// Re-integrates the witness selection from its start and returns the
/// distance from the state at the hit time to the forbidden set.
pub fn replay_witness(p: &SafetyProblem, w: &ViolationWitness) -> Result<f64> {
    let selectors = selector_family(&p.f, &p.bundle, p.horizon)?;
    let s = selectors
        .get(w.selector_index)
        .ok_or_else(|| Error::InvalidArgument(format!("selector {} out of range", w.selector_index)))?;
    let x0 = StateVector::from_vec(w.start.clone());
    let tr = integrate(&p.f, s, &x0, p.horizon, Direction::Forward, &p.integrator)?;
    let i = tr.times.partition_point(|t| *t < w.hit_time).min(tr.len() - 1);
    p.roles.unsafe_set().distance(&tr.states[i])
}
