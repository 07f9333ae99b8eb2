//! Set-valued right-hand sides `F`, their selections and derived variants.

use serde::{Deserialize, Serialize};

use super::field::{rescale_field, FieldHandle};
use crate::error::{Error, Result};
use crate::geometry::{halton_point, hausdorff_distance, unit_directions, Aabb, ScalarFn, SetSpec};
use crate::StateVector;

/// Right-hand side of `ẋ ∈ F(x)`.
#[derive(Clone, Debug)]
pub enum InclusionSpec {
    Singleton(FieldHandle),
    Ball { field: FieldHandle, epsilon: f64 },
    Hull(Vec<FieldHandle>),
}

/// The value `F(x)`: a finitely generated hull or a ball.
#[derive(Clone, Debug, PartialEq)]
pub enum InclusionValue {
    Vertices(Vec<StateVector>),
    Ball { center: StateVector, radius: f64 },
}

impl InclusionSpec {
    pub fn singleton(f: FieldHandle) -> Self {
        InclusionSpec::Singleton(f)
    }

    pub fn ball(field: FieldHandle, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("ball radius must be finite and >= 0, got {epsilon}")));
        }
        Ok(InclusionSpec::Ball { field, epsilon })
    }

    pub fn hull(fields: Vec<FieldHandle>) -> Result<Self> {
        let Some(first) = fields.first() else {
            return Err(Error::InvalidArgument("hull needs at least one field".into()));
        };
        let n = first.dim();
        if let Some(bad) = fields.iter().find(|f| f.dim() != n) {
            return Err(Error::Dimension {
                expected: n,
                got: bad.dim(),
            });
        }
        Ok(InclusionSpec::Hull(fields))
    }

    pub fn builtin(name: &str) -> Result<Self> {
        Ok(InclusionSpec::Singleton(FieldHandle::builtin(name)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            InclusionSpec::Singleton(f) | InclusionSpec::Ball { field: f, .. } => f.dim(),
            InclusionSpec::Hull(fs) => fs[0].dim(),
        }
    }

    pub fn is_singleton(&self) -> bool {
        matches!(self, InclusionSpec::Singleton(_))
    }

    /// Stable identifier for cache keys.
    pub fn id(&self) -> String {
        match self {
            InclusionSpec::Singleton(f) => f.id(),
            InclusionSpec::Ball { field, epsilon } => format!("ball({};{epsilon:e})", field.id()),
            InclusionSpec::Hull(fs) => {
                format!("hull({})", fs.iter().map(|f| f.id()).collect::<Vec<_>>().join("|"))
            }
        }
    }

    /// Applies `op` to every field, keeping the variant and radius.
    pub fn map_fields(&self, op: impl Fn(&FieldHandle) -> FieldHandle) -> InclusionSpec {
        match self {
            InclusionSpec::Singleton(f) => InclusionSpec::Singleton(op(f)),
            InclusionSpec::Ball { field, epsilon } => InclusionSpec::Ball {
                field: op(field),
                epsilon: *epsilon,
            },
            InclusionSpec::Hull(fs) => InclusionSpec::Hull(fs.iter().map(op).collect()),
        }
    }
}

/// `F(x)`.
pub fn eval_inclusion(f: &InclusionSpec, x: &StateVector) -> Result<InclusionValue> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("inclusion argument", x));
    }
    Ok(match f {
        InclusionSpec::Singleton(h) => InclusionValue::Vertices(vec![h.eval(x)?]),
        InclusionSpec::Ball { field, epsilon } => InclusionValue::Ball {
            center: field.eval(x)?,
            radius: *epsilon,
        },
        InclusionSpec::Hull(fs) => InclusionValue::Vertices(fs.iter().map(|h| h.eval(x)).collect::<Result<_>>()?),
    })
}

/// The backward inclusion `ẋ ∈ -F(x)`.
pub fn negate(f: &InclusionSpec) -> InclusionSpec {
    f.map_fields(|h| h.negated())
}

/// Time-rescaled inclusion `F(x) V(x) / (1 + V(x))`; a ball radius is
/// kept as is, so only singleton and hull variants are exact.
pub fn rescale_inclusion(f: &InclusionSpec, v: &ScalarFn) -> InclusionSpec {
    f.map_fields(|h| rescale_field(h, v))
}

impl InclusionValue {
    /// Generators used by vertex-wise checks; a ball contributes its center
    /// plus `m` extreme points.
    pub fn extreme_points(&self, m: usize) -> Vec<StateVector> {
        match self {
            InclusionValue::Vertices(vs) => vs.clone(),
            InclusionValue::Ball { center, radius } => {
                if *radius == 0.0 {
                    return vec![center.clone()];
                }
                unit_directions(center.len(), m)
                    .into_iter()
                    .map(|u| center + u * *radius)
                    .collect()
            }
        }
    }

    /// `max { <zeta, eta> : eta ∈ F(x) }` together with a maximizer.
    pub fn support(&self, zeta: &StateVector) -> (f64, StateVector) {
        match self {
            InclusionValue::Vertices(vs) => vs
                .iter()
                .map(|v| (zeta.dot(v), v.clone()))
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .expect("nonempty vertex list"),
            InclusionValue::Ball { center, radius } => {
                let zn = zeta.norm();
                let eta = if zn > 0.0 { center + zeta * (*radius / zn) } else { center.clone() };
                (zeta.dot(center) + radius * zn, eta)
            }
        }
    }

    /// Euclidean distance from `v` to the set.
    pub fn distance(&self, v: &StateVector) -> f64 {
        match self {
            InclusionValue::Ball { center, radius } => ((v - center).norm() - radius).max(0.0),
            InclusionValue::Vertices(vs) => hull_distance(vs, v),
        }
    }
}

/// Largest vertex count for which [`hull_distance`] enumerates faces.
const EXACT_HULL_VERTICES: usize = 16;

/// Distance from `v` to `conv(vs)`. The nearest point lies in the relative
/// interior of a face spanned by at most `n + 1` vertices, so small hulls
/// are solved exactly by projecting onto the affine hull of every such
/// subset; larger ones fall back to projected gradient.
fn hull_distance(vs: &[StateVector], v: &StateVector) -> f64 {
    match vs.len() {
        0 => f64::INFINITY,
        1 => (v - &vs[0]).norm(),
        k if k <= EXACT_HULL_VERTICES => {
            let max_size = (v.len() + 1).min(k);
            let mut best = vs.iter().map(|a| (v - a).norm()).fold(f64::INFINITY, f64::min);
            for mask in 1u32..(1 << k) {
                let size = mask.count_ones() as usize;
                if size < 2 || size > max_size {
                    continue;
                }
                let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
                if let Some(d) = face_distance(vs, &idx, v) {
                    best = best.min(d);
                }
            }
            best
        }
        k => projected_gradient_distance(vs, v, k),
    }
}

/// Distance to the affine hull of `vs[idx]` when the projection has
/// nonnegative barycentric weights.
fn face_distance(vs: &[StateVector], idx: &[usize], v: &StateVector) -> Option<f64> {
    let a0 = &vs[idx[0]];
    let m = idx.len() - 1;
    let d = nalgebra::DMatrix::from_fn(v.len(), m, |r, c| vs[idx[c + 1]][r] - a0[r]);
    let gram = d.transpose() * &d;
    let c = gram.clone().cholesky()?.solve(&(d.transpose() * (v - a0)));
    // Reject nearly degenerate faces; their sub-faces cover them.
    if gram.determinant().abs() <= 1e-24 * gram.diagonal().iter().product::<f64>().max(1e-300) {
        return None;
    }
    let w0 = 1.0 - c.sum();
    if w0 < -1e-12 || c.iter().any(|ci| *ci < -1e-12) {
        return None;
    }
    Some((a0 + &d * c - v).norm())
}

fn projected_gradient_distance(vs: &[StateVector], v: &StateVector, k: usize) -> f64 {
    let lip: f64 = vs.iter().map(|a| a.norm_squared()).sum::<f64>().max(1e-300);
    let mut w = vec![1.0 / k as f64; k];
    let combo = |w: &[f64]| {
        let mut p = StateVector::zeros(v.len());
        for (wi, a) in w.iter().zip(vs) {
            p += a * *wi;
        }
        p
    };
    let mut best = (combo(&w) - v).norm();
    for _ in 0..5000 {
        let r = combo(&w) - v;
        let grad: Vec<f64> = vs.iter().map(|a| a.dot(&r)).collect();
        let y: Vec<f64> = w.iter().zip(&grad).map(|(wi, g)| wi - g / lip).collect();
        w = project_simplex(&y);
        let d = (combo(&w) - v).norm();
        if best - d < 1e-16 * best.max(1.0) {
            best = best.min(d);
            break;
        }
        best = d;
    }
    best
}

fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// A parameterization of a solution: the unit direction (ball variant) or
/// hull weights held on each interval between switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Selector {
    Constant(Vec<f64>),
    Piecewise { switches: Vec<f64>, values: Vec<Vec<f64>> },
}

impl Selector {
    /// The selector used for singleton inclusions.
    pub fn none() -> Self {
        Selector::Constant(vec![])
    }

    pub fn piecewise(switches: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != switches.len() + 1 {
            return Err(Error::InvalidArgument("piecewise selector needs one more value than switches".into()));
        }
        if switches.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("switch times must be increasing".into()));
        }
        Ok(Selector::Piecewise { switches, values })
    }

    /// Value in force at time `t` (switches are right-continuous).
    pub fn value_at(&self, t: f64) -> &[f64] {
        match self {
            Selector::Constant(v) => v,
            Selector::Piecewise { switches, values } => {
                let idx = switches.partition_point(|s| *s <= t);
                &values[idx]
            }
        }
    }

    fn values(&self) -> Vec<&Vec<f64>> {
        match self {
            Selector::Constant(v) => vec![v],
            Selector::Piecewise { values, .. } => values.iter().collect(),
        }
    }

    /// Checks the selector against the variant of `f`.
    pub fn validate_for(&self, f: &InclusionSpec) -> Result<()> {
        match f {
            InclusionSpec::Singleton(_) => Ok(()),
            InclusionSpec::Ball { field, .. } => {
                for u in self.values() {
                    if u.len() != field.dim() {
                        return Err(Error::IncompatibleSelector(format!(
                            "ball selector needs a {}-vector, got {}",
                            field.dim(),
                            u.len()
                        )));
                    }
                    let n = u.iter().map(|c| c * c).sum::<f64>().sqrt();
                    if (n - 1.0).abs() > 1e-9 {
                        return Err(Error::IncompatibleSelector(format!("ball direction has norm {n}, expected 1")));
                    }
                }
                Ok(())
            }
            InclusionSpec::Hull(fs) => {
                for w in self.values() {
                    if w.len() != fs.len() {
                        return Err(Error::IncompatibleSelector(format!(
                            "hull selector needs {} weights, got {}",
                            fs.len(),
                            w.len()
                        )));
                    }
                    let sum: f64 = w.iter().sum();
                    if w.iter().any(|c| *c < -1e-12) || (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::IncompatibleSelector("hull weights must be nonnegative and sum to 1".into()));
                    }
                }
                Ok(())
            }
        }
    }
}

/// `f(x)`, `f(x) + eps u(t)` or `sum w_i(t) f_i(x)`; always an element of `F(x)`.
pub fn select(f: &InclusionSpec, x: &StateVector, s: &Selector, t: f64) -> Result<StateVector> {
    match f {
        InclusionSpec::Singleton(h) => h.eval(x),
        InclusionSpec::Ball { field, epsilon } => {
            let u = s.value_at(t);
            if u.len() != field.dim() {
                return Err(Error::IncompatibleSelector(format!(
                    "ball selector needs a {}-vector, got {}",
                    field.dim(),
                    u.len()
                )));
            }
            Ok(field.eval(x)? + StateVector::from_column_slice(u) * *epsilon)
        }
        InclusionSpec::Hull(fs) => {
            let w = s.value_at(t);
            if w.len() != fs.len() {
                return Err(Error::IncompatibleSelector(format!(
                    "hull selector needs {} weights, got {}",
                    fs.len(),
                    w.len()
                )));
            }
            let mut acc = StateVector::zeros(x.len());
            for (wi, h) in w.iter().zip(fs) {
                if *wi != 0.0 {
                    acc += h.eval(x)? * *wi;
                }
            }
            Ok(acc)
        }
    }
}

/// How many selections a bundle integrates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundlePlan {
    /// Constant selections: ball directions or hull weight vectors.
    pub directions: usize,
    /// Switches per piecewise-constant selection; 0 disables them.
    #[serde(default)]
    pub switches: usize,
    /// Fixed spacing of switch times. When unset the switches are spread
    /// uniformly over the horizon.
    #[serde(default)]
    pub switch_period: Option<f64>,
}

impl Default for BundlePlan {
    fn default() -> Self {
        BundlePlan {
            directions: 16,
            switches: 0,
            switch_period: None,
        }
    }
}

impl BundlePlan {
    pub fn constant(directions: usize) -> Self {
        BundlePlan {
            directions,
            ..Default::default()
        }
    }
}

/// The selections a bundle integrates, in a fixed order: constant ones
/// first, then piecewise-constant ones.
pub fn selector_family(f: &InclusionSpec, plan: &BundlePlan, horizon: f64) -> Result<Vec<Selector>> {
    if plan.directions == 0 {
        return Err(Error::InvalidArgument("bundle needs at least one direction".into()));
    }
    let bases: Vec<Vec<f64>> = match f {
        InclusionSpec::Singleton(_) => return Ok(vec![Selector::none()]),
        InclusionSpec::Ball { field, .. } => unit_directions(field.dim(), plan.directions)
            .into_iter()
            .map(|u| u.iter().copied().collect())
            .collect(),
        InclusionSpec::Hull(fs) => hull_weights(fs.len(), plan.directions),
    };
    let mut out: Vec<Selector> = bases.iter().cloned().map(Selector::Constant).collect();
    let switches: Vec<f64> = match plan.switch_period {
        Some(p) if p > 0.0 => (1..).map(|j| j as f64 * p).take_while(|s| *s < horizon).collect(),
        Some(_) => return Err(Error::InvalidArgument("switch period must be positive".into())),
        None => (1..=plan.switches)
            .map(|j| horizon * j as f64 / (plan.switches + 1) as f64)
            .collect(),
    };
    if (plan.switches > 0 || plan.switch_period.is_some()) && !switches.is_empty() {
        let m = bases.len();
        for j in 0..m {
            let values = (0..=switches.len()).map(|l| bases[(j + l * (j + 1)) % m].clone()).collect();
            out.push(Selector::piecewise(switches.clone(), values)?);
        }
    }
    Ok(out)
}

/// Vertex weights first, then deterministic interior points of the simplex.
fn hull_weights(k: usize, m: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..k.min(m))
        .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut i = 1;
    while out.len() < m {
        let u = halton_point(i, k, 3);
        i += 1;
        let e: Vec<f64> = u.iter().map(|c| -(1.0 - c).ln()).collect();
        let s: f64 = e.iter().sum();
        if s > 0.0 {
            out.push(e.iter().map(|c| c / s).collect());
        }
    }
    out
}

/// `max d_H(F(x), F(y)) / |x - y|` over all pairs of a tensor grid on the
/// box. Hull and singleton values are compared as vertex clouds, balls by
/// their centers.
pub fn lipschitz_estimate(f: &InclusionSpec, region: &SetSpec, grid: usize) -> Result<f64> {
    let bounds: Aabb = match region {
        SetSpec::Box { lo, hi } => Aabb::new(lo.iter().copied().collect(), hi.iter().copied().collect())?,
        other => other
            .bounding_box()
            .ok_or_else(|| Error::InvalidArgument("lipschitz estimate needs a bounded region".into()))?,
    };
    if grid < 2 {
        return Err(Error::InvalidArgument("lipschitz grid needs >= 2 nodes per axis".into()));
    }
    if bounds.dim() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: bounds.dim(),
        });
    }
    let pts = bounds.grid(grid);
    let clouds: Vec<Vec<StateVector>> = pts
        .iter()
        .map(|p| {
            Ok(match eval_inclusion(f, p)? {
                InclusionValue::Vertices(vs) => vs,
                InclusionValue::Ball { center, .. } => vec![center],
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let dx = (&pts[i] - &pts[j]).norm();
            if dx == 0.0 {
                continue;
            }
            let dh = hausdorff_distance(&clouds[i], &clouds[j])?;
            best = best.max(dh / dx);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    fn lin() -> FieldHandle {
        FieldHandle::builtin("linear_safe").unwrap()
    }

    #[test]
    fn eval_variants() {
        let x = state(&[1.0, 0.0]);
        let s = InclusionSpec::singleton(lin());
        assert_eq!(eval_inclusion(&s, &x).unwrap(), InclusionValue::Vertices(vec![state(&[-1.0, 1.0])]));
        let b = InclusionSpec::ball(lin(), 0.0).unwrap();
        assert!(matches!(eval_inclusion(&b, &x).unwrap(), InclusionValue::Ball { radius, .. } if radius == 0.0));
        let h = InclusionSpec::hull(vec![lin(), lin().negated()]).unwrap();
        assert_eq!(
            eval_inclusion(&h, &x).unwrap(),
            InclusionValue::Vertices(vec![state(&[-1.0, 1.0]), state(&[1.0, -1.0])])
        );
        assert!(InclusionSpec::ball(lin(), -0.1).is_err());
        assert!(InclusionSpec::hull(vec![]).is_err());
    }

    #[test]
    fn selections() {
        let zero = FieldHandle::constant(state(&[0.0, 0.0]));
        let b = InclusionSpec::ball(zero, 0.1).unwrap();
        let v = select(&b, &state(&[3.0, 3.0]), &Selector::Constant(vec![1.0, 0.0]), 0.0).unwrap();
        assert_eq!(v, state(&[0.1, 0.0]));
        let h = InclusionSpec::hull(vec![lin(), lin().negated()]).unwrap();
        let v = select(&h, &state(&[1.0, 2.0]), &Selector::Constant(vec![0.5, 0.5]), 0.0).unwrap();
        assert!(v.norm() < 1e-15);
        assert!(select(&h, &state(&[1.0, 2.0]), &Selector::Constant(vec![1.0]), 0.0).is_err());
        assert!(Selector::Constant(vec![0.7, 0.7]).validate_for(&b).is_err());
        let s = InclusionSpec::singleton(lin());
        assert_eq!(select(&s, &state(&[1.0, 0.0]), &Selector::none(), 5.0).unwrap(), state(&[-1.0, 1.0]));
    }

    #[test]
    fn piecewise_values() {
        let s = Selector::piecewise(vec![1.0, 2.0], vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(s.value_at(0.5), &[0.0]);
        assert_eq!(s.value_at(1.0), &[1.0]);
        assert_eq!(s.value_at(7.0), &[2.0]);
    }

    #[test]
    fn negate_ball_keeps_radius() {
        let b = InclusionSpec::ball(lin(), 0.3).unwrap();
        let nb = negate(&b);
        let x = state(&[0.5, -1.0]);
        match eval_inclusion(&nb, &x).unwrap() {
            InclusionValue::Ball { center, radius } => {
                assert_eq!(radius, 0.3);
                assert_eq!(center, -lin().eval(&x).unwrap());
            }
            _ => panic!("variant changed"),
        }
    }

    #[test]
    fn hull_distance_projects() {
        let vs = vec![state(&[0.0, 0.0]), state(&[1.0, 0.0]), state(&[0.0, 1.0])];
        let val = InclusionValue::Vertices(vs);
        assert!(val.distance(&state(&[0.2, 0.2])) < 1e-12);
        assert!((val.distance(&state(&[1.0, 1.0])) - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn lipschitz_examples() {
        let bx = SetSpec::boxed(state(&[0.0, 0.0]), state(&[1.0, 1.0])).unwrap();
        let c = InclusionSpec::singleton(FieldHandle::constant(state(&[2.0, 1.0])));
        assert_eq!(lipschitz_estimate(&c, &bx, 5).unwrap(), 0.0);
        let id = InclusionSpec::singleton(FieldHandle::new(2, "id", |x| x.clone()));
        assert!((lipschitz_estimate(&id, &bx, 5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn family_sizes() {
        let s = InclusionSpec::singleton(lin());
        assert_eq!(selector_family(&s, &BundlePlan::constant(8), 1.0).unwrap().len(), 1);
        let b = InclusionSpec::ball(lin(), 0.1).unwrap();
        let plan = BundlePlan {
            directions: 8,
            switches: 3,
            switch_period: None,
        };
        let fam = selector_family(&b, &plan, 1.0).unwrap();
        assert_eq!(fam.len(), 16);
        for sel in &fam {
            sel.validate_for(&b).unwrap();
        }
        let h = InclusionSpec::hull(vec![lin(), lin().negated(), FieldHandle::constant(state(&[1.0, 0.0]))]).unwrap();
        for sel in selector_family(&h, &BundlePlan::constant(10), 1.0).unwrap() {
            sel.validate_for(&h).unwrap();
        }
    }
}
