//! Deterministic low-discrepancy sampling (Halton sequences).

use std::f64::consts::PI;

use super::sets::{Aabb, SetSpec};
use crate::error::{Error, Result};
use crate::StateVector;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= b;
        r += f * (index % base as u64) as f64;
        index /= base as u64;
    }
    r
}

/// Point `index` of the `dim`-dimensional Halton sequence in `[0,1)^dim`.
/// Different seeds select disjoint windows of the sequence.
pub fn halton_point(index: usize, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton sampling supports up to {} dimensions", PRIMES.len());
    let i = (index as u64).wrapping_add(seed.wrapping_mul(1_000_003));
    (0..dim).map(|d| halton(i, PRIMES[d])).collect()
}

/// `m` points in the closed ball of `radius` around `center`, spread
/// deterministically. The center itself is never returned.
pub fn ball_points(center: &StateVector, radius: f64, m: usize, seed: u64) -> Vec<StateVector> {
    let n = center.len();
    let mut out = Vec::with_capacity(m);
    let mut i = 1usize;
    while out.len() < m {
        let u = halton_point(i, n.max(2), seed);
        i += 1;
        let offset: Vec<f64> = if n == 1 {
            vec![2.0 * u[0] - 1.0]
        } else if n == 2 {
            let r = u[0].sqrt();
            let a = 2.0 * PI * u[1];
            vec![r * a.cos(), r * a.sin()]
        } else {
            let v: Vec<f64> = u.iter().take(n).map(|c| 2.0 * c - 1.0).collect();
            if v.iter().map(|c| c * c).sum::<f64>() > 1.0 {
                continue;
            }
            v
        };
        if offset.iter().all(|c| *c == 0.0) {
            continue;
        }
        out.push(center + StateVector::from_vec(offset) * radius);
    }
    out
}

/// `m` unit vectors in `R^n`: a regular polygon in 2-D, a Fibonacci sphere
/// in 3-D, `±e_1` in 1-D and normalized Halton points otherwise.
pub fn unit_directions(n: usize, m: usize) -> Vec<StateVector> {
    match n {
        0 => vec![],
        1 => (0..m)
            .map(|i| StateVector::from_element(1, if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect(),
        2 => (0..m)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / m as f64;
                StateVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    StateVector::from_vec(vec![r * a.cos(), r * a.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut out = Vec::with_capacity(m);
            let mut i = 1;
            while out.len() < m {
                let v = StateVector::from_vec(halton_point(i, n, 7).iter().map(|c| 2.0 * c - 1.0).collect());
                i += 1;
                let nv = v.norm();
                if nv > 0.1 && nv <= 1.0 {
                    out.push(v / nv);
                }
            }
            out
        }
    }
}

/// Points on the sphere of `radius` around `center`.
pub fn sphere_points(center: &StateVector, radius: f64, m: usize) -> Vec<StateVector> {
    unit_directions(center.len(), m)
        .into_iter()
        .map(|u| center + u * radius)
        .collect()
}

impl SetSpec {
    /// Up to `count` deterministic members of the set inside `bounds`.
    pub fn sample_interior(&self, count: usize, bounds: &Aabb, seed: u64) -> Vec<StateVector> {
        if let SetSpec::Ball { center, radius } = self {
            let mut pts = ball_points(center, *radius, count.saturating_sub(1), seed);
            pts.insert(0, center.clone());
            pts.truncate(count);
            return pts;
        }
        if let SetSpec::Points(ps) = self {
            return ps.iter().take(count).cloned().collect();
        }
        let region = self.bounding_box().map(|b| intersect_boxes(&b, bounds)).unwrap_or_else(|| bounds.clone());
        let n = region.dim();
        let mut out = Vec::with_capacity(count);
        let budget = 1000 * count.max(1);
        for i in 1..=budget {
            if out.len() >= count {
                break;
            }
            let p = region.from_unit(&halton_point(i, n, seed));
            if self.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    /// Up to `count` deterministic points on the boundary inside `bounds`.
    pub fn sample_boundary(&self, count: usize, bounds: &Aabb, seed: u64) -> Result<Vec<StateVector>> {
        let n = bounds.dim();
        match self {
            SetSpec::Ball { center, radius } => Ok(sphere_points(center, *radius, count)),
            SetSpec::Points(ps) => Ok(ps.iter().take(count).cloned().collect()),
            SetSpec::Complement(inner) => inner.sample_boundary(count, bounds, seed),
            SetSpec::Box { lo, hi } => {
                let faces = 2 * n;
                let mut out = Vec::with_capacity(count);
                for i in 0..count {
                    let face = i % faces;
                    let (axis, upper) = (face / 2, face % 2 == 1);
                    let u = halton_point(i + 1, n, seed);
                    let mut p: Vec<f64> = (0..n).map(|d| lo[d] + (hi[d] - lo[d]) * u[d]).collect();
                    p[axis] = if upper { hi[axis] } else { lo[axis] };
                    out.push(StateVector::from_vec(p));
                }
                Ok(out)
            }
            SetSpec::Halfspace { normal, offset } => {
                let nn = normal.norm_squared();
                Ok((0..count)
                    .map(|i| {
                        let p = bounds.from_unit(&halton_point(i + 1, n, seed));
                        let excess = (normal.dot(&p) - offset) / nn;
                        p - normal * excess
                    })
                    .collect())
            }
            SetSpec::Sublevel { func, level, .. } => {
                // Newton steps along the gradient carry bulk samples onto the level set.
                let mut out = Vec::with_capacity(count);
                for i in 1..=50 * count.max(1) {
                    if out.len() >= count {
                        break;
                    }
                    let mut p = bounds.from_unit(&halton_point(i, n, seed));
                    for _ in 0..50 {
                        let v = func.at(&p) - level;
                        if v.abs() <= 1e-13 * level.abs().max(1.0) {
                            break;
                        }
                        let g = super::sets::fd_grad(func, &p);
                        let gn = g.norm_squared();
                        if !(gn > 0.0) || !gn.is_finite() {
                            break;
                        }
                        p -= g * (v / gn);
                    }
                    if (func.at(&p) - level).abs() <= 1e-10 * level.abs().max(1.0) && bounds.contains(&p) {
                        out.push(p);
                    }
                }
                Ok(out)
            }
            SetSpec::Union(_) | SetSpec::Intersection(_) => {
                // Project bulk samples onto the boundary by distance queries
                // from both sides and keep the feet that land on it.
                let complement = SetSpec::Complement(Box::new(self.clone()));
                let mut out = Vec::with_capacity(count);
                let budget = 50 * count.max(1);
                for i in 1..=budget {
                    if out.len() >= count {
                        break;
                    }
                    let p = bounds.from_unit(&halton_point(i, n, seed));
                    let target = if self.contains(&p) { &complement } else { self };
                    if let Some(foot) = boundary_foot(&p, target)? {
                        if self.contains(&foot) && !self.interior_contains(&foot) {
                            out.push(foot);
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Up to `count` points `p` with `0 < d(p, S) <= width`, i.e. a thin
    /// outer shell of the set.
    pub fn sample_shell(&self, count: usize, width: f64, bounds: &Aabb, seed: u64) -> Result<Vec<StateVector>> {
        if !(width > 0.0) {
            return Err(Error::InvalidArgument("shell width must be positive".into()));
        }
        let n = bounds.dim();
        let boundary = self.sample_boundary(count.max(8), bounds, seed)?;
        if boundary.is_empty() {
            return Ok(vec![]);
        }
        let dirs = unit_directions(n, 8);
        let mut out = Vec::with_capacity(count);
        let mut i = 0usize;
        while out.len() < count && i < 40 * count.max(1) {
            let b = &boundary[i % boundary.len()];
            let u = halton_point(i + 1, 1, seed.wrapping_add(11))[0];
            let v = &dirs[(i / boundary.len()) % dirs.len()];
            i += 1;
            let p = b + v * (width * (0.05 + 0.9 * u));
            let d = self.distance(&p)?;
            if d > 0.0 && d <= width {
                out.push(p);
            }
        }
        Ok(out)
    }
}

fn intersect_boxes(a: &Aabb, b: &Aabb) -> Aabb {
    let lo: Vec<f64> = a.lo.iter().zip(&b.lo).map(|(x, y)| x.max(*y)).collect();
    let hi: Vec<f64> = a.hi.iter().zip(&b.hi).zip(&lo).map(|((x, y), l)| x.min(*y).max(*l)).collect();
    Aabb { lo, hi }
}

/// Nearest point of `target` from `p` along the straight search used by the
/// distance estimate (bisection toward the closest grid member).
fn boundary_foot(p: &StateVector, target: &SetSpec) -> Result<Option<StateVector>> {
    let d = target.distance(p)?;
    if d == 0.0 {
        return Ok(Some(p.clone()));
    }
    // Walk in a few directions at distance d and keep the one on the set.
    let n = p.len();
    let dirs = unit_directions(n, if n == 2 { 720 } else { 256 });
    let mut best: Option<(f64, StateVector)> = None;
    for v in dirs {
        let q = p + &v * d;
        let dq = target.distance(&q)?;
        if best.as_ref().map_or(true, |(b, _)| dq < *b) {
            best = Some((dq, q));
        }
    }
    Ok(best.and_then(|(dq, q)| if dq <= 1e-3 * d.max(1e-9) { Some(q) } else { None }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    #[test]
    fn halton_base2_prefix() {
        let v: Vec<f64> = (1..5).map(|i| halton(i, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn ball_points_inside() {
        let c = state(&[1.0, -1.0]);
        for p in ball_points(&c, 0.5, 200, 3) {
            assert!((&p - &c).norm() <= 0.5 + 1e-15);
        }
        assert_eq!(ball_points(&state(&[0.0; 3]), 1.0, 50, 0).len(), 50);
    }

    #[test]
    fn directions_are_unit() {
        for n in 1..=5 {
            for v in unit_directions(n, 16) {
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boundary_and_shell_samples() {
        let disk = SetSpec::ball(state(&[0.0, 0.0]), 1.0).unwrap();
        let bounds = Aabb::cube(2, 3.0);
        for p in disk.sample_boundary(64, &bounds, 0).unwrap() {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        let shell = disk.sample_shell(40, 1e-3, &bounds, 0).unwrap();
        assert_eq!(shell.len(), 40);
        for p in shell {
            let d = p.norm() - 1.0;
            assert!(d > 0.0 && d <= 1e-3);
        }
        let hs = SetSpec::halfspace(state(&[0.0, -1.0]), -2.0).unwrap();
        for p in hs.sample_boundary(10, &bounds, 0).unwrap() {
            assert!((p[1] - 2.0).abs() < 1e-12);
        }
    }
}
