//! Two-dimensional quadrature over convex planar regions with integrable
//! point singularities.
//!
//! Each singular point gets a polar sub-cell around it, integrated in polar
//! coordinates with a radial substitution `r = u^q` that removes the
//! `r^{-α}` singularity; the remainder of the region is integrated in polar
//! coordinates around the first singular point with the sub-cells carved out
//! ray by ray.

use crate::error::{Error, Result};
use crate::geometry::{distance, Point};
use crate::quadrature::{adaptive_kronrod, GaussLegendre};
use crate::scalar::{KahanSum, Real};

/// Intersection of an optional axis-aligned box with a list of disks.
#[derive(Clone, Debug)]
pub(crate) struct ConvexRegion<T> {
    pub rect: Option<(Point<T>, Point<T>)>,
    pub disks: Vec<(Point<T>, T)>,
}

impl<T: Real> ConvexRegion<T> {
    pub fn rect(lo: Point<T>, hi: Point<T>) -> Self {
        Self { rect: Some((lo, hi)), disks: Vec::new() }
    }

    pub fn with_disk(mut self, center: Point<T>, radius: T) -> Self {
        self.disks.push((center, radius));
        self
    }

    /// Parameter interval `{r ≥ 0 : o + r·dir ∈ region}`; `None` if empty.
    fn ray_interval(&self, o: Point<T>, dir: (T, T)) -> Option<(T, T)> {
        let mut lo = T::zero();
        let mut hi = T::infinity();
        if let Some((a, b)) = self.rect {
            for (oc, d, min, max) in [(o.x, dir.0, a.x, b.x), (o.y, dir.1, a.y, b.y)] {
                if d == T::zero() {
                    if oc < min || oc > max {
                        return None;
                    }
                } else {
                    let t1 = (min - oc) / d;
                    let t2 = (max - oc) / d;
                    lo = lo.max(t1.min(t2));
                    hi = hi.min(t1.max(t2));
                }
            }
        }
        for &(c, radius) in &self.disks {
            let (a, b) = disk_ray(o, dir, c, radius)?;
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (hi > lo).then_some((lo, hi))
    }

    fn diameter_bound(&self) -> T {
        let mut d = T::infinity();
        if let Some((a, b)) = self.rect {
            d = d.min((b.x - a.x).hypot(b.y - a.y));
        }
        for &(_, r) in &self.disks {
            d = d.min(T::two() * r);
        }
        d
    }
}

/// Ray/disk intersection parameters (unclamped below zero).
fn disk_ray<T: Real>(o: Point<T>, dir: (T, T), c: Point<T>, radius: T) -> Option<(T, T)> {
    let (px, py) = (o.x - c.x, o.y - c.y);
    let bq = dir.0 * px + dir.1 * py;
    let cq = px * px + py * py - radius * radius;
    let disc = bq * bq - cq;
    if disc <= T::zero() {
        return None;
    }
    let s = disc.sqrt();
    Some((-bq - s, -bq + s))
}

/// A point singularity and the radial substitution power used around it.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Singularity<T> {
    pub at: Point<T>,
    pub power: T,
}

/// Accuracy knobs; `level` 0 is the working rule, `level` 1 the refinement
/// used to certify convergence.
#[derive(Clone, Copy, Debug)]
pub(crate) struct RegionRule {
    pub level: usize,
}

impl RegionRule {
    fn order(&self) -> usize {
        8 + 4 * self.level
    }
    fn angular_tol(&self) -> f64 {
        1e-9 * 0.01f64.powi(self.level as i32)
    }
    fn tensor_panels(&self) -> usize {
        2 + 2 * self.level
    }
}

/// Integrates `f` over `region`. Singular points must be distinct.
#[cfg(test)]
pub(crate) fn integrate<T: Real, F: Fn(Point<T>) -> T>(
    region: &ConvexRegion<T>,
    singular: &[Singularity<T>],
    f: &F,
    rule: RegionRule,
) -> T {
    integrate_with_kink(region, singular, f, None, rule)
}

/// Integrates over `region`, for integrands with a kink on the zero set of `level`;
/// radial segments are split at sign changes of `level`.
pub(crate) fn integrate_with_kink<T: Real, F: Fn(Point<T>) -> T>(
    region: &ConvexRegion<T>,
    singular: &[Singularity<T>],
    f: &F,
    level: Option<&dyn Fn(Point<T>) -> T>,
    rule: RegionRule,
) -> T {
    let gl = GaussLegendre::<T>::new(rule.order());
    if singular.is_empty() {
        let (lo, hi) = region
            .rect
            .expect("regions without singular points must be boxes");
        assert!(region.disks.is_empty(), "smooth disk regions are integrated around a center");
        return tensor_box(&gl, lo, hi, f, rule.tensor_panels());
    }
    let diam = region.diameter_bound();
    let radii: Vec<T> = singular
        .iter()
        .enumerate()
        .map(|(i, s)| {
            singular
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| distance(s.at, o.at) * T::half())
                .fold(T::infinity(), T::min)
        })
        .collect();

    let mut total = KahanSum::new();
    for (s, &rho) in singular.iter().zip(&radii) {
        let cell = if rho.is_finite() {
            region.clone().with_disk(s.at, rho)
        } else {
            region.clone()
        };
        total.add(polar(&gl, &cell, s.at, s.power, &[], f, level, rule));
    }
    let finite: Vec<(Point<T>, T)> = singular
        .iter()
        .zip(&radii)
        .filter(|(_, r)| r.is_finite() && **r < diam * T::lit(4.0))
        .map(|(s, &r)| (s.at, r))
        .collect();
    if !finite.is_empty() {
        total.add(polar(&gl, region, singular[0].at, T::one(), &finite, f, level, rule));
    }
    total.total()
}

/// Integrates over `region` in polar coordinates around `o`, with the
/// disks in `excluded` removed along each ray.
fn polar<T: Real, F: Fn(Point<T>) -> T>(
    gl: &GaussLegendre<T>,
    region: &ConvexRegion<T>,
    o: Point<T>,
    power: T,
    excluded: &[(Point<T>, T)],
    f: &F,
    level: Option<&dyn Fn(Point<T>) -> T>,
    rule: RegionRule,
) -> T {
    let radial = |theta: T| -> T {
        let dir = (theta.cos(), theta.sin());
        let Some((lo, hi)) = region.ray_interval(o, dir) else {
            return T::zero();
        };
        let mut pieces = vec![(lo, hi)];
        for &(c, r) in excluded {
            if let Some((a, b)) = disk_ray(o, dir, c, r) {
                pieces = subtract(&pieces, a.max(T::zero()), b);
            }
        }
        let mut acc = KahanSum::new();
        for (a, b) in pieces {
            match level {
                None => acc.add(radial_segment(gl, o, dir, a, b, power, f)),
                Some(level) => {
                    let mut lo = a;
                    for r in kinks_on_ray(o, dir, a, b, power, level) {
                        acc.add(radial_segment(gl, o, dir, lo, r, power, f));
                        lo = r;
                    }
                    acc.add(radial_segment(gl, o, dir, lo, b, power, f));
                }
            }
        }
        acc.total()
    };
    // a tolerance below the scalar's resolution would refine to full depth
    let tol = T::lit(rule.angular_tol()).max(T::epsilon() * T::lit(16.0));
    let (v, _) = adaptive_kronrod(radial, T::zero(), T::two() * T::PI(), tol, tol, 18);
    v
}

fn subtract<T: Real>(pieces: &[(T, T)], a: T, b: T) -> Vec<(T, T)> {
    let mut out = Vec::with_capacity(pieces.len() + 1);
    for &(lo, hi) in pieces {
        if b <= lo || a >= hi {
            out.push((lo, hi));
            continue;
        }
        if a > lo {
            out.push((lo, a));
        }
        if b < hi {
            out.push((b, hi));
        }
    }
    out
}

/// Sign changes of `level` along the ray segment, located by bisection on a
/// sample uniform in the substituted variable.
fn kinks_on_ray<T: Real>(
    o: Point<T>,
    dir: (T, T),
    a: T,
    b: T,
    power: T,
    level: &dyn Fn(Point<T>) -> T,
) -> Vec<T> {
    const SAMPLES: usize = 96;
    let at = |r: T| o.offset(r * dir.0, r * dir.1);
    let inv = power.recip();
    let (ua, ub) = (a.max(T::zero()).powf(inv), b.powf(inv));
    let r_of = |k: usize| -> T {
        let t = T::from_usize_lossy(k) / T::from_usize_lossy(SAMPLES);
        (ua + (ub - ua) * t).powf(power)
    };
    let mut out = Vec::new();
    // the sample starts just off the origin, where singular integrands blow up
    let mut r_prev = r_of(0).max((b - a) * T::lit(1e-12) + a);
    let mut v_prev = level(at(r_prev));
    for k in 1..=SAMPLES {
        let r = r_of(k);
        let v = level(at(r));
        if (v_prev > T::zero()) != (v > T::zero()) {
            let (mut lo, mut hi) = (r_prev, r);
            for _ in 0..80 {
                let mid = (lo + hi) * T::half();
                if (level(at(mid)) > T::zero()) == (v_prev > T::zero()) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push((lo + hi) * T::half());
        }
        r_prev = r;
        v_prev = v;
    }
    out
}

/// `∫_a^b f(o + r·dir) r dr`, substituting `r = u^power` when `a = 0`.
fn radial_segment<T: Real, F: Fn(Point<T>) -> T>(
    gl: &GaussLegendre<T>,
    o: Point<T>,
    dir: (T, T),
    a: T,
    b: T,
    power: T,
    f: &F,
) -> T {
    let at = |r: T| o.offset(r * dir.0, r * dir.1);
    if b <= a {
        return T::zero();
    }
    if a <= T::zero() {
        let umax = b.powf(power.recip());
        let g = |u: T| {
            if u <= T::zero() {
                return T::zero();
            }
            let r = u.powf(power);
            let p = at(r);
            // graded nodes can round onto the center in low precision
            if p == o {
                return T::zero();
            }
            f(p) * r * power * u.powf(power - T::one())
        };
        gl.integrate_graded(g, T::zero(), umax, 24)
    } else {
        // geometric panels toward the origin keep near-singular rays accurate
        let ratio = (b / a).ln() / T::LN_2();
        let panels = ratio.ceil().to_usize().unwrap_or(1).clamp(1, 64);
        let q = (b / a).powf(T::from_usize_lossy(panels).recip());
        let mut acc = KahanSum::new();
        let mut lo = a;
        for p in 0..panels {
            let hi = if p + 1 == panels { b } else { lo * q };
            acc.add(gl.integrate(|r| f(at(r)) * r, lo, hi));
            lo = hi;
        }
        acc.total()
    }
}

fn tensor_box<T: Real, F: Fn(Point<T>) -> T>(
    gl: &GaussLegendre<T>,
    lo: Point<T>,
    hi: Point<T>,
    f: &F,
    panels: usize,
) -> T {
    let mut acc = KahanSum::new();
    let wx = (hi.x - lo.x) / T::from_usize_lossy(panels);
    let wy = (hi.y - lo.y) / T::from_usize_lossy(panels);
    for px in 0..panels {
        let x0 = lo.x + wx * T::from_usize_lossy(px);
        for py in 0..panels {
            let y0 = lo.y + wy * T::from_usize_lossy(py);
            for (x, wxq) in gl.mapped(x0, x0 + wx) {
                for (y, wyq) in gl.mapped(y0, y0 + wy) {
                    acc.add(wxq * wyq * f(Point::new(x, y)));
                }
            }
        }
    }
    acc.total()
}

/// Integrates at two rule levels and fails when they disagree by more than
/// `rel_tol` relative to the larger magnitude (plus `abs_floor`).
pub(crate) fn integrate_checked<T: Real, F: Fn(Point<T>) -> T>(
    region: &ConvexRegion<T>,
    singular: &[Singularity<T>],
    f: &F,
    rel_tol: T,
    abs_floor: T,
    what: &str,
) -> Result<T> {
    integrate_checked_with_kink(region, singular, f, None, rel_tol, abs_floor, what)
}

pub(crate) fn integrate_checked_with_kink<T: Real, F: Fn(Point<T>) -> T>(
    region: &ConvexRegion<T>,
    singular: &[Singularity<T>],
    f: &F,
    level: Option<&dyn Fn(Point<T>) -> T>,
    rel_tol: T,
    abs_floor: T,
    what: &str,
) -> Result<T> {
    let coarse = integrate_with_kink(region, singular, f, level, RegionRule { level: 0 });
    let fine = integrate_with_kink(region, singular, f, level, RegionRule { level: 1 });
    let scale = coarse.abs().max(fine.abs());
    // in single precision the rounding of the sums alone is near 1e-6
    let rel_tol = rel_tol.max(T::epsilon() * T::lit(64.0));
    if (coarse - fine).abs() > rel_tol * scale + abs_floor {
        return Err(Error::Accuracy(format!(
            "{what}: refinements differ ({coarse:e} vs {fine:e})"
        )));
    }
    Ok(fine)
}
