//! State-space regions and distance queries.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::CompiledExpr;
use crate::StateVector;

/// A scalar function of the state, optionally backed by a parsed expression
/// (which makes it serializable).
#[derive(Clone)]
pub struct ScalarFn {
    label: String,
    expr: Option<CompiledExpr>,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl ScalarFn {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn {
            label: label.into(),
            expr: None,
            f: Arc::new(f),
        }
    }

    /// Parses an expression over `x1..x{dim}`.
    pub fn from_expr(source: &str, dim: usize) -> Result<Self> {
        let compiled = CompiledExpr::parse_state(source, dim)?;
        let inner = compiled.clone();
        Ok(ScalarFn {
            label: source.to_string(),
            expr: Some(compiled),
            f: Arc::new(move |x| inner.eval(x)),
        })
    }

    /// Squared Euclidean distance to `set`; the default rescaling weight.
    pub fn squared_distance_to(set: SetSpec) -> Self {
        ScalarFn::new("squared-distance", move |x| {
            set.distance(&StateVector::from_column_slice(x))
                .map(|d| d * d)
                .unwrap_or(f64::NAN)
        })
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    #[inline]
    pub fn at(&self, x: &StateVector) -> f64 {
        (self.f)(x.as_slice())
    }

    pub fn source(&self) -> Option<&str> {
        self.expr.as_ref().map(|e| e.source())
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.label)
    }
}

/// Axis-aligned box used for grids and sampling domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidArgument("box requires finite lo <= hi componentwise".into()));
        }
        Ok(Aabb { lo, hi })
    }

    /// The cube `[-half, half]^dim`.
    pub fn cube(dim: usize, half: f64) -> Self {
        Aabb {
            lo: vec![-half; dim],
            hi: vec![half; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &StateVector) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Tensor grid with `per_axis` nodes per axis (endpoints included).
    pub fn grid(&self, per_axis: usize) -> Vec<StateVector> {
        let n = self.dim();
        let per_axis = per_axis.max(1);
        let total = per_axis.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let p: Vec<f64> = (0..n)
                .map(|d| {
                    if per_axis == 1 {
                        0.5 * (self.lo[d] + self.hi[d])
                    } else {
                        self.lo[d] + (self.hi[d] - self.lo[d]) * idx[d] as f64 / (per_axis - 1) as f64
                    }
                })
                .collect();
            out.push(StateVector::from_vec(p));
            for d in 0..n {
                idx[d] += 1;
                if idx[d] < per_axis {
                    break;
                }
                idx[d] = 0;
            }
        }
        out
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> StateVector {
        StateVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|d| self.lo[d] + (self.hi[d] - self.lo[d]) * u[d]),
        )
    }
}

/// Declared search grid for projection-based distance estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub bounds: Aabb,
    pub per_axis: usize,
}

/// Symbolic description of a state-space region.
///
/// Distances are always to the closure of the region. Half-spaces are
/// `{x : <normal, x> <= offset}`.
#[derive(Clone, Debug)]
pub enum SetSpec {
    Ball { center: StateVector, radius: f64 },
    Box { lo: StateVector, hi: StateVector },
    Halfspace { normal: StateVector, offset: f64 },
    Sublevel { func: ScalarFn, level: f64, grid: SearchGrid },
    Points(Vec<StateVector>),
    Complement(Box<SetSpec>),
    Union(Vec<SetSpec>),
    Intersection(Vec<SetSpec>),
}

/// Whether a distance value is closed-form or a search-based upper estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    Exact,
    Estimated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distance {
    pub value: f64,
    pub mode: DistanceMode,
}

impl Distance {
    fn exact(value: f64) -> Self {
        Distance {
            value,
            mode: DistanceMode::Exact,
        }
    }

    fn estimated(value: f64) -> Self {
        Distance {
            value,
            mode: DistanceMode::Estimated,
        }
    }

    fn combine(self, other: Distance, value: f64) -> Distance {
        let mode = if self.mode == DistanceMode::Exact && other.mode == DistanceMode::Exact {
            DistanceMode::Exact
        } else {
            DistanceMode::Estimated
        };
        Distance { value, mode }
    }
}

const MEMBER_TOL: f64 = 1e-12;

impl SetSpec {
    pub fn ball(center: StateVector, radius: f64) -> Result<Self> {
        let s = SetSpec::Ball { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn boxed(lo: StateVector, hi: StateVector) -> Result<Self> {
        let s = SetSpec::Box { lo, hi };
        s.validate()?;
        Ok(s)
    }

    pub fn halfspace(normal: StateVector, offset: f64) -> Result<Self> {
        let s = SetSpec::Halfspace { normal, offset };
        s.validate()?;
        Ok(s)
    }

    pub fn point(p: StateVector) -> Self {
        SetSpec::Points(vec![p])
    }

    pub fn sublevel(func: ScalarFn, level: f64, grid: SearchGrid) -> Result<Self> {
        let s = SetSpec::Sublevel { func, level, grid };
        s.validate()?;
        Ok(s)
    }

    pub fn complement(self) -> Self {
        SetSpec::Complement(Box::new(self))
    }

    /// Checks the structural invariants and the ball/box emptiness tests.
    pub fn validate(&self) -> Result<()> {
        match self {
            SetSpec::Ball { center, radius } => {
                if !(*radius >= 0.0) || !radius.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidArgument(format!("ball radius must be finite and >= 0, got {radius}")));
                }
            }
            SetSpec::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::Dimension {
                        expected: lo.len(),
                        got: hi.len(),
                    });
                }
                if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
                    return Err(Error::InvalidArgument("box requires lo <= hi componentwise".into()));
                }
            }
            SetSpec::Halfspace { normal, offset } => {
                if normal.norm() == 0.0 || !offset.is_finite() {
                    return Err(Error::InvalidArgument("halfspace normal must be nonzero".into()));
                }
            }
            SetSpec::Sublevel { grid, .. } => {
                if grid.per_axis < 2 {
                    return Err(Error::InvalidArgument("sublevel search grid needs >= 2 nodes per axis".into()));
                }
            }
            SetSpec::Points(ps) => {
                if ps.is_empty() {
                    return Err(Error::EmptySet("point list is empty".into()));
                }
            }
            SetSpec::Complement(inner) => inner.validate()?,
            SetSpec::Union(parts) => {
                if parts.is_empty() {
                    return Err(Error::EmptySet("union of nothing".into()));
                }
                for p in parts {
                    p.validate()?;
                }
            }
            SetSpec::Intersection(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidArgument("intersection needs at least one part".into()));
                }
                for p in parts {
                    p.validate()?;
                }
                for (i, a) in parts.iter().enumerate() {
                    for b in &parts[i + 1..] {
                        if provably_disjoint(a, b) {
                            return Err(Error::EmptySet("intersection of provably disjoint parts".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// State dimension, when the variant pins it down.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            SetSpec::Ball { center, .. } => Some(center.len()),
            SetSpec::Box { lo, .. } => Some(lo.len()),
            SetSpec::Halfspace { normal, .. } => Some(normal.len()),
            SetSpec::Sublevel { grid, .. } => Some(grid.bounds.dim()),
            SetSpec::Points(ps) => ps.first().map(|p| p.len()),
            SetSpec::Complement(inner) => inner.dimension(),
            SetSpec::Union(parts) | SetSpec::Intersection(parts) => parts.iter().find_map(|p| p.dimension()),
        }
    }

    /// `inf { |x - y| : y in closure(S) }`.
    pub fn distance(&self, x: &StateVector) -> Result<f64> {
        distance_to_set(x, self).map(|d| d.value)
    }

    /// Membership in the closure of the set (with a 1e-12 slack).
    pub fn contains(&self, x: &StateVector) -> bool {
        match self {
            SetSpec::Ball { .. } | SetSpec::Box { .. } | SetSpec::Halfspace { .. } => {
                primitive_signed_distance(self, x).map_or(false, |d| d <= MEMBER_TOL)
            }
            SetSpec::Sublevel { func, level, .. } => func.at(x) <= level + MEMBER_TOL,
            SetSpec::Points(ps) => ps.iter().any(|p| (x - p).norm() <= MEMBER_TOL),
            SetSpec::Complement(inner) => !inner.interior_contains(x),
            SetSpec::Union(parts) => parts.iter().any(|p| p.contains(x)),
            SetSpec::Intersection(parts) => parts.iter().all(|p| p.contains(x)),
        }
    }

    /// Membership in the interior (strict, with a 1e-12 margin).
    pub fn interior_contains(&self, x: &StateVector) -> bool {
        match self {
            SetSpec::Ball { .. } | SetSpec::Box { .. } | SetSpec::Halfspace { .. } => {
                primitive_signed_distance(self, x).map_or(false, |d| d < -MEMBER_TOL)
            }
            SetSpec::Sublevel { func, level, .. } => func.at(x) < level - MEMBER_TOL,
            SetSpec::Points(_) => false,
            SetSpec::Complement(inner) => !inner.contains(x),
            SetSpec::Union(parts) => parts.iter().any(|p| p.interior_contains(x)),
            SetSpec::Intersection(parts) => parts.iter().all(|p| p.interior_contains(x)),
        }
    }

    /// Bounding box of the set, if it is bounded by construction.
    pub fn bounding_box(&self) -> Option<Aabb> {
        match self {
            SetSpec::Ball { center, radius } => Some(Aabb {
                lo: center.iter().map(|c| c - radius).collect(),
                hi: center.iter().map(|c| c + radius).collect(),
            }),
            SetSpec::Box { lo, hi } => Some(Aabb {
                lo: lo.iter().copied().collect(),
                hi: hi.iter().copied().collect(),
            }),
            SetSpec::Points(ps) => {
                let n = ps[0].len();
                let lo = (0..n).map(|d| ps.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min)).collect();
                let hi = (0..n).map(|d| ps.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
                Some(Aabb { lo, hi })
            }
            SetSpec::Union(parts) => {
                let boxes: Option<Vec<Aabb>> = parts.iter().map(|p| p.bounding_box()).collect();
                let boxes = boxes?;
                let n = boxes[0].dim();
                Some(Aabb {
                    lo: (0..n).map(|d| boxes.iter().map(|b| b.lo[d]).fold(f64::INFINITY, f64::min)).collect(),
                    hi: (0..n).map(|d| boxes.iter().map(|b| b.hi[d]).fold(f64::NEG_INFINITY, f64::max)).collect(),
                })
            }
            SetSpec::Intersection(parts) => parts.iter().find_map(|p| p.bounding_box()),
            _ => None,
        }
    }
}

/// Signed distance for ball/box/halfspace (negative inside); `None` for
/// other variants.
fn primitive_signed_distance(s: &SetSpec, x: &StateVector) -> Option<f64> {
    match s {
        SetSpec::Ball { center, radius } => Some((x - center).norm() - radius),
        SetSpec::Box { lo, hi } => {
            let mut outside = 0.0;
            let mut inside = f64::NEG_INFINITY;
            for d in 0..x.len() {
                let c = 0.5 * (lo[d] + hi[d]);
                let half = 0.5 * (hi[d] - lo[d]);
                let q = (x[d] - c).abs() - half;
                outside += q.max(0.0).powi(2);
                inside = inside.max(q);
            }
            Some(outside.sqrt() + inside.min(0.0))
        }
        SetSpec::Halfspace { normal, offset } => Some((normal.dot(x) - offset) / normal.norm()),
        _ => None,
    }
}

fn provably_disjoint(a: &SetSpec, b: &SetSpec) -> bool {
    use SetSpec::*;
    match (a, b) {
        (Ball { center: c1, radius: r1 }, Ball { center: c2, radius: r2 }) => (c1 - c2).norm() > r1 + r2,
        (Box { .. }, Box { .. }) | (Ball { .. }, Box { .. }) | (Box { .. }, Ball { .. }) => {
            // Box-box: separated along some axis. Ball-box: clamped center too far.
            match (a, b) {
                (Box { lo: l1, hi: h1 }, Box { lo: l2, hi: h2 }) => {
                    (0..l1.len()).any(|d| h1[d] < l2[d] || h2[d] < l1[d])
                }
                (Ball { center, radius }, bx @ Box { .. }) | (bx @ Box { .. }, Ball { center, radius }) => {
                    primitive_signed_distance(bx, center).map_or(false, |d| d > *radius)
                }
                _ => false,
            }
        }
        (Halfspace { normal, offset }, Ball { center, radius }) | (Ball { center, radius }, Halfspace { normal, offset }) => {
            normal.dot(center) - radius * normal.norm() > *offset
        }
        (Halfspace { normal, offset }, Box { lo, hi }) | (Box { lo, hi }, Halfspace { normal, offset }) => {
            let min_val: f64 = (0..lo.len()).map(|d| (normal[d] * lo[d]).min(normal[d] * hi[d])).sum();
            min_val > *offset
        }
        _ => false,
    }
}

/// `inf { |x - y| : y ∈ closure(S) }`.
///
/// Ball, box, half-space and point variants are closed-form. Sublevel sets
/// are projected from seeds on their declared grid and refined by local
/// tangent/Newton steps; boolean combinations without a closed form use a
/// membership search around `x`. Search-based values are upper estimates
/// achieved by an actual member and are flagged [`DistanceMode::Estimated`].
pub fn distance_to_set(x: &StateVector, s: &SetSpec) -> Result<Distance> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("query point", x));
    }
    if let Some(n) = s.dimension() {
        if n != x.len() {
            return Err(Error::Dimension {
                expected: n,
                got: x.len(),
            });
        }
    }
    match s {
        SetSpec::Ball { .. } | SetSpec::Box { .. } | SetSpec::Halfspace { .. } => {
            Ok(Distance::exact(primitive_signed_distance(s, x).unwrap().max(0.0)))
        }
        SetSpec::Points(ps) => {
            if ps.is_empty() {
                return Err(Error::EmptySet("point list is empty".into()));
            }
            Ok(Distance::exact(ps.iter().map(|p| (x - p).norm()).fold(f64::INFINITY, f64::min)))
        }
        SetSpec::Sublevel { func, level, grid } => {
            if func.at(x) <= *level {
                return Ok(Distance::exact(0.0));
            }
            sublevel_projection(x, func, *level, grid, Side::Below).map(Distance::estimated)
        }
        SetSpec::Complement(inner) => complement_distance(x, inner),
        SetSpec::Union(parts) => {
            if parts.is_empty() {
                return Err(Error::EmptySet("union of nothing".into()));
            }
            let mut best: Option<Distance> = None;
            for p in parts {
                let d = distance_to_set(x, p)?;
                best = Some(match best {
                    None => d,
                    Some(b) => b.combine(d, b.value.min(d.value)),
                });
            }
            Ok(best.unwrap())
        }
        SetSpec::Intersection(parts) => {
            s.validate()?;
            if s.contains(x) {
                return Ok(Distance::exact(0.0));
            }
            let mut lower = 0.0f64;
            for p in parts {
                lower = lower.max(distance_to_set(x, p)?.value);
            }
            search_distance(x, s, lower).map(Distance::estimated)
        }
    }
}

fn complement_distance(x: &StateVector, inner: &SetSpec) -> Result<Distance> {
    match inner {
        SetSpec::Ball { .. } | SetSpec::Box { .. } | SetSpec::Halfspace { .. } => {
            Ok(Distance::exact((-primitive_signed_distance(inner, x).unwrap()).max(0.0)))
        }
        // The closure of the complement of a finite set is everything.
        SetSpec::Points(_) => Ok(Distance::exact(0.0)),
        SetSpec::Sublevel { func, level, grid } => {
            if func.at(x) >= *level {
                return Ok(Distance::exact(0.0));
            }
            sublevel_projection(x, func, *level, grid, Side::Above).map(Distance::estimated)
        }
        SetSpec::Complement(s) => distance_to_set(x, s),
        SetSpec::Union(_) | SetSpec::Intersection(_) => {
            let whole = SetSpec::Complement(Box::new(inner.clone()));
            if whole.contains(x) {
                return Ok(Distance::exact(0.0));
            }
            search_distance(x, &whole, 0.0).map(Distance::estimated)
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    /// Target is `{f <= level}`.
    Below,
    /// Target is `{f >= level}`.
    Above,
}

pub(crate) fn fd_grad(f: &ScalarFn, x: &StateVector) -> StateVector {
    let n = x.len();
    let mut g = StateVector::zeros(n);
    let mut y = x.clone();
    for d in 0..n {
        let h = 1e-7 * x[d].abs().max(1.0);
        let orig = y[d];
        y[d] = orig + h;
        let fp = f.at(&y);
        y[d] = orig - h;
        let fm = f.at(&y);
        y[d] = orig;
        g[d] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Nearest point of the level set `{f = level}` reachable from the seeds,
/// returned as a distance from `x`. `x` lies strictly on the far side.
fn sublevel_projection(x: &StateVector, func: &ScalarFn, level: f64, grid: &SearchGrid, side: Side) -> Result<f64> {
    let in_target = |v: f64| match side {
        Side::Below => v <= level,
        Side::Above => v >= level,
    };
    let mut seeds: Vec<(f64, StateVector)> = grid
        .bounds
        .grid(grid.per_axis)
        .into_iter()
        .filter(|p| in_target(func.at(p)))
        .map(|p| ((&p - x).norm(), p))
        .collect();
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    seeds.truncate(6);

    // Newton descent from x itself can find the set when the grid misses it.
    let mut y = x.clone();
    for _ in 0..60 {
        let v = func.at(&y) - level;
        if in_target(v + level) {
            seeds.push(((&y - x).norm(), y.clone()));
            break;
        }
        let g = fd_grad(func, &y);
        let gn = g.norm_squared();
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        y -= &g * (v / gn) * 1.0000001;
    }
    if seeds.is_empty() {
        return Err(Error::EmptySet(format!(
            "sublevel set {{{} <= {}}} has no member on its declared grid",
            func.label(),
            level
        )));
    }

    let mut best = f64::INFINITY;
    for (_, seed) in seeds {
        // Bisect the segment x -> seed to land on the level set.
        let (mut a, mut b) = (x.clone(), seed);
        for _ in 0..80 {
            let m = (&a + &b) * 0.5;
            if in_target(func.at(&m)) {
                b = m;
            } else {
                a = m;
            }
        }
        let mut p = b;
        let mut dist = (&p - x).norm();
        // Slide along the level set toward the foot of the perpendicular.
        for _ in 0..200 {
            let g = fd_grad(func, &p);
            let gn = g.norm();
            if gn == 0.0 || !gn.is_finite() {
                break;
            }
            let u = &g / gn;
            let r = x - &p;
            let tangential = &r - &u * u.dot(&r);
            let mut q = &p + tangential;
            for _ in 0..20 {
                let v = func.at(&q) - level;
                let gq = fd_grad(func, &q);
                let gqn = gq.norm_squared();
                if gqn == 0.0 {
                    break;
                }
                q -= &gq * (v / gqn);
                if v.abs() <= 1e-15 * level.abs().max(1.0) {
                    break;
                }
            }
            // Nudge onto the target side so the estimate stays an upper bound.
            let mut tries = 0;
            while !in_target(func.at(&q)) && tries < 50 {
                let gq = fd_grad(func, &q);
                let step = match side {
                    Side::Below => -1.0,
                    Side::Above => 1.0,
                };
                q += &gq * (step * 1e-15 / gq.norm().max(1e-300)) * (1u64 << tries.min(40)) as f64;
                tries += 1;
            }
            if !in_target(func.at(&q)) {
                break;
            }
            let dq = (&q - x).norm();
            let moved = (&q - &p).norm();
            if dq < dist {
                dist = dq;
                p = q;
            } else {
                break;
            }
            if moved <= 1e-16 * dist.max(1.0) {
                break;
            }
        }
        best = best.min(dist);
    }
    Ok(best)
}

/// Expanding-cube membership search around `x` followed by segment bisection
/// and pattern refinement; returns the distance to the best member found.
fn search_distance(x: &StateVector, s: &SetSpec, lower: f64) -> Result<f64> {
    let n = x.len();
    let per_axis = match n {
        1 => 201,
        2 => 65,
        3 => 25,
        _ => 0,
    };
    let mut half = (2.0 * lower).max(1e-3);
    let mut found: Option<StateVector> = None;
    for _ in 0..60 {
        let cube = Aabb {
            lo: x.iter().map(|v| v - half).collect(),
            hi: x.iter().map(|v| v + half).collect(),
        };
        let candidates: Vec<StateVector> = if per_axis > 0 {
            cube.grid(per_axis)
        } else {
            (0..20_000).map(|i| cube.from_unit(&super::sampling::halton_point(i + 1, n, 0))).collect()
        };
        found = candidates
            .into_iter()
            .filter(|p| s.contains(p))
            .min_by(|a, b| (a - x).norm().total_cmp(&(b - x).norm()));
        if found.is_some() {
            break;
        }
        half *= 2.0;
    }
    let Some(mut best) = found else {
        return Err(Error::EmptySet("no member found by search".into()));
    };
    let mut step = half / per_axis.max(8) as f64;
    for _ in 0..60 {
        let (mut a, mut b) = (x.clone(), best.clone());
        for _ in 0..60 {
            let m = (&a + &b) * 0.5;
            if s.contains(&m) {
                b = m;
            } else {
                a = m;
            }
        }
        best = b;
        let mut improved = false;
        for d in 0..n {
            for sign in [-1.0, 1.0] {
                let mut y = best.clone();
                y[d] += sign * step;
                if s.contains(&y) && (&y - x).norm() < (&best - x).norm() {
                    best = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
        if step < 1e-15 {
            break;
        }
    }
    Ok((&best - x).norm())
}
