//! Potentials `V`, the Kato-class functional and the truncation split
//! `V = V0 + V1`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{distance, DomainSpec, Point, Shape};
use crate::region::{self, ConvexRegion, Singularity};
use crate::scalar::{KahanSum, Real};

/// Boxed real-valued function on the plane.
pub type PlaneFn<T> = Arc<dyn Fn(Point<T>) -> T + Send + Sync>;

/// One additive term of a potential.
#[derive(Clone)]
pub enum PotentialTerm<T> {
    Zero,
    Constant(T),
    /// Bounded function with a known bound on `|f|`.
    Bounded { name: String, sup: T, f: PlaneFn<T> },
    /// `strength · |x − center|^{−alpha}`.
    InversePower { center: Point<T>, alpha: T, strength: T },
}

impl<T: fmt::Display> fmt::Debug for PotentialTerm<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialTerm::Zero => write!(f, "Zero"),
            PotentialTerm::Constant(c) => write!(f, "Constant({c})"),
            PotentialTerm::Bounded { name, sup, .. } => write!(f, "Bounded({name}, sup={sup})"),
            PotentialTerm::InversePower { center, alpha, strength } => write!(
                f,
                "InversePower(center=({}, {}), alpha={alpha}, strength={strength})",
                center.x, center.y
            ),
        }
    }
}

impl<T: Real> PotentialTerm<T> {
    fn value(&self, x: Point<T>) -> T {
        match self {
            PotentialTerm::Zero => T::zero(),
            PotentialTerm::Constant(c) => *c,
            PotentialTerm::Bounded { f, .. } => f(x),
            PotentialTerm::InversePower { center, alpha, strength } => {
                *strength * distance(x, *center).powf(-*alpha)
            }
        }
    }
}

/// Finite sum of potential terms.
#[derive(Clone, Default)]
pub struct PotentialSpec<T> {
    pub terms: Vec<PotentialTerm<T>>,
}

impl<T: fmt::Display> fmt::Debug for PotentialSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.terms).finish()
    }
}

impl<T: Real> PotentialSpec<T> {
    pub fn zero() -> Self {
        Self { terms: vec![PotentialTerm::Zero] }
    }

    pub fn constant(c: T) -> Self {
        Self { terms: vec![PotentialTerm::Constant(c)] }
    }

    pub fn inverse_power(center: Point<T>, alpha: T, strength: T) -> Self {
        Self { terms: vec![PotentialTerm::InversePower { center, alpha, strength }] }
    }

    pub fn bounded(
        name: impl Into<String>,
        sup: T,
        f: impl Fn(Point<T>) -> T + Send + Sync + 'static,
    ) -> Self {
        Self { terms: vec![PotentialTerm::Bounded { name: name.into(), sup, f: Arc::new(f) }] }
    }

    pub fn plus(mut self, other: Self) -> Self {
        self.terms.extend(other.terms);
        self
    }

    /// Checks the admissibility conditions: finite parameters and
    /// `0 < α < 2` for every inverse-power term.
    pub fn validate(&self) -> Result<()> {
        for term in &self.terms {
            match term {
                PotentialTerm::Zero => {}
                PotentialTerm::Constant(c) if !c.is_finite() => {
                    return Err(Error::invalid("constant potential must be finite"))
                }
                PotentialTerm::Constant(_) => {}
                PotentialTerm::Bounded { sup, .. } if !(*sup >= T::zero()) || !sup.is_finite() => {
                    return Err(Error::invalid("bounded term needs a finite nonnegative sup bound"))
                }
                PotentialTerm::Bounded { .. } => {}
                PotentialTerm::InversePower { center, alpha, strength } => {
                    if !(*alpha > T::zero() && *alpha < T::two()) {
                        return Err(Error::invalid(format!(
                            "inverse-power exponent must lie in (0, 2) for Kato admissibility in the plane, got {alpha}"
                        )));
                    }
                    if !strength.is_finite() || !center.x.is_finite() || !center.y.is_finite() {
                        return Err(Error::invalid("inverse-power parameters must be finite"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_identically_zero(&self) -> bool {
        self.terms.iter().all(|t| match t {
            PotentialTerm::Zero => true,
            PotentialTerm::Constant(c) => *c == T::zero(),
            PotentialTerm::InversePower { strength, .. } => *strength == T::zero(),
            PotentialTerm::Bounded { .. } => false,
        })
    }

    /// `Σ terms(x)`; fails exactly at a singular center.
    pub fn evaluate(&self, x: Point<T>) -> Result<T> {
        for term in &self.terms {
            if let PotentialTerm::InversePower { center, strength, .. } = term {
                if *strength != T::zero() && distance(x, *center) == T::zero() {
                    return Err(Error::SingularPoint { x: x.x.to_f64_lossy(), y: x.y.to_f64_lossy() });
                }
            }
        }
        Ok(self.value_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: Point<T>) -> T {
        let mut acc = KahanSum::new();
        for term in &self.terms {
            acc.add(term.value(x));
        }
        acc.total()
    }

    /// Distinct singular centers with the radial substitution power that
    /// smooths `r^{1−α}` (the strongest exponent at each center wins).
    pub(crate) fn singularities(&self) -> Vec<Singularity<T>> {
        let mut out: Vec<(Point<T>, T)> = Vec::new();
        for term in &self.terms {
            if let PotentialTerm::InversePower { center, alpha, strength } = term {
                if *strength == T::zero() {
                    continue;
                }
                match out.iter_mut().find(|(c, _)| *c == *center) {
                    Some((_, a)) => *a = a.max(*alpha),
                    None => out.push((*center, *alpha)),
                }
            }
        }
        out.into_iter()
            .map(|(at, alpha)| Singularity { at, power: substitution_power(alpha) })
            .collect()
    }

    /// `Σ |c| + Σ sup` when the spec has no singular terms.
    pub fn sup_bound(&self) -> Option<T> {
        let mut total = T::zero();
        for term in &self.terms {
            match term {
                PotentialTerm::Zero => {}
                PotentialTerm::Constant(c) => total += c.abs(),
                PotentialTerm::Bounded { sup, .. } => total += *sup,
                PotentialTerm::InversePower { strength, .. } => {
                    if *strength != T::zero() {
                        return None;
                    }
                }
            }
        }
        Some(total)
    }

    /// Canonical expression in the configuration grammar.
    pub fn to_expression(&self) -> String {
        if self.terms.is_empty() {
            return "zero()".into();
        }
        self.terms
            .iter()
            .map(|t| match t {
                PotentialTerm::Zero => "zero()".to_string(),
                PotentialTerm::Constant(c) => format!("constant({c})"),
                PotentialTerm::Bounded { name, .. } => format!("bounded({name})"),
                PotentialTerm::InversePower { center, alpha, strength } => format!(
                    "inverse_power(x0={},y0={},alpha={alpha},strength={strength})",
                    center.x, center.y
                ),
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

fn substitution_power<T: Real>(alpha: T) -> T {
    (T::two() - alpha).recip().clamp(T::one(), T::lit(8.0))
}

impl<T: Real> std::str::FromStr for PotentialSpec<T> {
    type Err = Error;

    /// Parses `inverse_power(x0=..,y0=..,alpha=..,strength=..) + constant(c) + zero()`.
    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for raw in split_terms(s)? {
            let raw = raw.trim();
            let (name, args) = match raw.find('(') {
                Some(open) => {
                    let close = raw
                        .rfind(')')
                        .filter(|&c| c == raw.len() - 1)
                        .ok_or_else(|| Error::Parse(format!("unbalanced term `{raw}`")))?;
                    (raw[..open].trim(), &raw[open + 1..close])
                }
                None => (raw, ""),
            };
            let args = parse_args(args)?;
            let num = |key: &str, pos: usize| -> Result<T> {
                args.iter()
                    .find(|(k, _)| k.as_deref() == Some(key))
                    .or_else(|| args.get(pos).filter(|(k, _)| k.is_none()))
                    .map(|(_, v)| T::lit(*v))
                    .ok_or_else(|| Error::Parse(format!("`{name}` is missing `{key}`")))
            };
            let term = match name {
                "zero" => PotentialTerm::Zero,
                "constant" => PotentialTerm::Constant(num("value", 0)?),
                "inverse_power" => PotentialTerm::InversePower {
                    center: Point::new(num("x0", 0)?, num("y0", 1)?),
                    alpha: num("alpha", 2)?,
                    strength: num("strength", 3)?,
                },
                "bounded" => {
                    return Err(Error::Parse(
                        "bounded terms carry a function handle and cannot be parsed".into(),
                    ))
                }
                other => return Err(Error::Parse(format!("unknown potential term `{other}`"))),
            };
            terms.push(term);
        }
        let spec = PotentialSpec { terms };
        spec.validate().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(spec)
    }
}

fn split_terms(s: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            '+' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(Error::Parse(format!("unbalanced parentheses in `{s}`")));
        }
    }
    if depth != 0 {
        return Err(Error::Parse(format!("unbalanced parentheses in `{s}`")));
    }
    out.push(&s[start..]);
    if out.iter().any(|t| t.trim().is_empty()) {
        return Err(Error::Parse(format!("empty term in `{s}`")));
    }
    Ok(out)
}

fn parse_args(args: &str) -> Result<Vec<(Option<String>, f64)>> {
    if args.trim().is_empty() {
        return Ok(Vec::new());
    }
    args.split(',')
        .map(|a| {
            let (key, val) = match a.split_once('=') {
                Some((k, v)) => (Some(k.trim().to_string()), v.trim()),
                None => (None, a.trim()),
            };
            let v: f64 = val.parse().map_err(|_| Error::Parse(format!("bad number `{val}`")))?;
            Ok((key, v))
        })
        .collect()
}

/// The kernel `W_n` of the Kato-class condition.
pub fn kato_kernel<T: Real>(r: T, n: usize) -> Result<T> {
    if !(r > T::zero()) {
        return Err(Error::invalid(format!("Kato kernel needs r > 0, got {r}")));
    }
    match n {
        0 | 1 => Err(Error::invalid(format!("Kato kernel needs n >= 2, got {n}"))),
        2 => Ok((T::two() + r.recip()).ln()),
        _ => Ok(r.powi(2 - n as i32)),
    }
}

/// Region `B(x, δ) ∩ M` for the supported domain shapes.
fn ball_in_domain<T: Real>(domain: &DomainSpec<T>, x: Point<T>, delta: T) -> ConvexRegion<T> {
    match domain.shape {
        Shape::Rectangle { a, b } => {
            ConvexRegion::rect(Point::origin(), Point::new(a, b)).with_disk(x, delta)
        }
        Shape::Disk { radius } => ConvexRegion { rect: None, disks: vec![(Point::origin(), radius)] }
            .with_disk(x, delta),
    }
}

/// `∫_{B(x,δ)∩M} |V(y)| W_n(|x − y|) dy` at one point.
pub fn kato_integral<T: Real>(
    spec: &PotentialSpec<T>,
    domain: &DomainSpec<T>,
    x: Point<T>,
    delta: T,
) -> Result<T> {
    let n = domain.dimension;
    let centers = spec.singularities();
    let mut singular = Vec::with_capacity(centers.len() + 1);
    match centers.iter().find(|s| s.at == x) {
        Some(s) => singular.push(*s),
        None => singular.push(Singularity { at: x, power: T::one() }),
    }
    singular.extend(
        centers
            .iter()
            .filter(|s| s.at != x && distance(s.at, x) < T::two() * delta)
            .copied(),
    );
    let integrand = |y: Point<T>| {
        let r = distance(x, y);
        if r == T::zero() {
            return T::zero();
        }
        let w = if n == 2 { (T::two() + r.recip()).ln() } else { r.powi(2 - n as i32) };
        spec.value_unchecked(y).abs() * w
    };
    region::integrate_checked(
        &ball_in_domain(domain, x, delta),
        &singular,
        &integrand,
        T::lit(0.01),
        T::lit(1e-14),
        "Kato integral",
    )
}

/// Estimate of `sup_x ∫_{d(x,y)<δ} |V(y)| W_n(d(x,y)) dy`.
///
/// The supremum runs over a `(resolution + 1)²` lattice covering the
/// domain plus every singular center inside it.
pub fn kato_norm<T: Real>(
    spec: &PotentialSpec<T>,
    domain: &DomainSpec<T>,
    delta: T,
    resolution: usize,
) -> Result<T> {
    if !(delta > T::zero()) {
        return Err(Error::invalid(format!("Kato radius must be positive, got {delta}")));
    }
    spec.validate()?;
    if spec.is_identically_zero() {
        return Ok(T::zero());
    }
    let (lo, hi) = domain.bounding_box();
    let res = resolution.max(1);
    let mut candidates: Vec<Point<T>> = spec
        .singularities()
        .iter()
        .map(|s| s.at)
        .filter(|p| domain.contains(*p))
        .collect();
    for j in 0..=res {
        for i in 0..=res {
            let t = |k: usize| T::from_usize_lossy(k) / T::from_usize_lossy(res);
            let p = Point::new(lo.x + (hi.x - lo.x) * t(i), lo.y + (hi.y - lo.y) * t(j));
            if domain.contains(p) && !candidates.contains(&p) {
                candidates.push(p);
            }
        }
    }
    let mut best = T::zero();
    for x in candidates {
        best = best.max(kato_integral(spec, domain, x, delta)?);
    }
    Ok(best)
}

/// `∫_M (|V| − K)_+`, the L¹ mass above the truncation level.
pub fn excess_mass<T: Real>(spec: &PotentialSpec<T>, domain: &DomainSpec<T>, level: T) -> Result<T> {
    let centers: Vec<Singularity<T>> = spec
        .singularities()
        .into_iter()
        .filter(|s| domain.contains(s.at))
        .collect();
    if centers.is_empty() {
        let bound = spec.sup_bound().unwrap_or(T::infinity());
        if bound <= level {
            return Ok(T::zero());
        }
        if !centers.is_empty() || spec.singularities().iter().any(|_| true) {
            return Err(Error::SplitFailure(
                "singular centers outside the domain are not supported".into(),
            ));
        }
    }
    let region = match domain.shape {
        Shape::Rectangle { a, b } => ConvexRegion::rect(Point::origin(), Point::new(a, b)),
        Shape::Disk { radius } => ConvexRegion { rect: None, disks: vec![(Point::origin(), radius)] },
    };
    let f = |y: Point<T>| (spec.value_unchecked(y).abs() - level).max(T::zero());
    let kink = |y: Point<T>| spec.value_unchecked(y).abs() - level;
    if centers.is_empty() {
        // smooth bounded potential exceeding the level: box quadrature
        let Some((lo, hi)) = region.rect else {
            return Err(Error::SplitFailure("bounded split on disks needs a center".into()));
        };
        let anchor = [Singularity { at: Point::new((lo.x + hi.x) * T::half(), (lo.y + hi.y) * T::half()), power: T::one() }];
        return region::integrate_checked_with_kink(&region, &anchor, &f, Some(&kink), T::lit(0.01), T::lit(1e-15), "excess mass");
    }
    region::integrate_checked_with_kink(
        &region,
        &centers,
        &f,
        Some(&kink),
        T::lit(0.01),
        T::lit(1e-15),
        "excess mass",
    )
}

/// `V = V0 + V1` with `V0 = clamp(V, −K, K)` and `‖V1‖_{L¹} < ε²`.
#[derive(Clone, Debug)]
pub struct SplitPotential<T: fmt::Display> {
    pub spec: PotentialSpec<T>,
    /// Truncation level `K`, a power of two.
    pub bound: T,
    pub epsilon: T,
    pub l1_norm_v1: T,
}

impl<T: Real> SplitPotential<T> {
    pub fn v0(&self, x: Point<T>) -> Result<T> {
        match self.spec.evaluate(x) {
            Ok(v) => Ok(v.clamp(-self.bound, self.bound)),
            Err(Error::SingularPoint { .. }) => Ok(self.singular_sign(x) * self.bound),
            Err(e) => Err(e),
        }
    }

    pub fn v1(&self, x: Point<T>) -> Result<T> {
        let v = self.spec.evaluate(x)?;
        Ok(v - v.clamp(-self.bound, self.bound))
    }

    fn singular_sign(&self, x: Point<T>) -> T {
        let s: T = self
            .spec
            .terms
            .iter()
            .filter_map(|t| match t {
                PotentialTerm::InversePower { center, strength, .. } if *center == x => Some(*strength),
                _ => None,
            })
            .sum();
        s.signum()
    }
}

/// Doubling search for the smallest power of two `K` with `∫(|V|−K)_+ < ε²`.
///
/// Specs without singular terms use the smallest power of two above their
/// sup bound, so that `V1 ≡ 0`.
pub fn split_potential<T: Real>(
    spec: &PotentialSpec<T>,
    domain: &DomainSpec<T>,
    epsilon: T,
) -> Result<SplitPotential<T>> {
    if !(epsilon > T::zero() && epsilon <= T::one()) {
        return Err(Error::invalid(format!("split needs ε in (0, 1], got {epsilon}")));
    }
    spec.validate()?;
    let target = epsilon * epsilon;
    if let Some(sup) = spec.sup_bound() {
        let mut bound = T::one();
        while bound < sup {
            bound = bound * T::two();
        }
        return Ok(SplitPotential { spec: spec.clone(), bound, epsilon, l1_norm_v1: T::zero() });
    }
    let mut bound = T::one();
    for _ in 0..=64 {
        let mass = excess_mass(spec, domain, bound)?;
        if mass < target {
            return Ok(SplitPotential { spec: spec.clone(), bound, epsilon, l1_norm_v1: mass });
        }
        bound = bound * T::two();
    }
    Err(Error::SplitFailure(format!(
        "no truncation level up to 2^64 brings the L1 excess below {target}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn center() -> Point<f64> {
        Point::new(0.5, 0.5)
    }

    #[test]
    fn evaluation() {
        let z = PotentialSpec::<f64>::zero();
        assert_eq!(z.evaluate(Point::new(0.3, 0.1)).unwrap(), 0.0);
        let v = PotentialSpec::<f64>::inverse_power(Point::origin(), 1.0, 1.0);
        assert!((v.evaluate(Point::new(3.0, 4.0)).unwrap() - 0.2).abs() < 1e-16);
        assert!(matches!(v.evaluate(Point::origin()), Err(Error::SingularPoint { .. })));
    }

    #[test]
    fn admissibility() {
        assert!(PotentialSpec::inverse_power(center(), 2.0, 1.0).validate().is_err());
        assert!(PotentialSpec::inverse_power(center(), 0.0, 1.0).validate().is_err());
        assert!(PotentialSpec::inverse_power(center(), 1.9, -3.0).validate().is_ok());
    }

    #[test]
    fn kato_kernel_values() {
        assert!((kato_kernel(1.0f64, 2).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert_eq!(kato_kernel(1.0f64, 3).unwrap(), 1.0);
        assert_eq!(kato_kernel(0.5f64, 4).unwrap(), 4.0);
        assert!(kato_kernel(0.0f64, 2).is_err());
        assert!(kato_kernel(-1.0f64, 3).is_err());
    }

    #[test]
    fn kato_norm_of_constant_matches_radial_integral() {
        let sq = DomainSpec::<f64>::unit_square();
        let v = kato_norm(&PotentialSpec::constant(1.0), &sq, 0.1, 4).unwrap();
        // 2π ∫_0^{0.1} log(2 + 1/r) r dr by adaptive radial quadrature
        let (radial, _) = crate::quadrature::adaptive_kronrod(
            |r: f64| if r > 0.0 { (2.0 + 1.0 / r).ln() * r } else { 0.0 },
            0.0,
            0.1,
            1e-15,
            1e-13,
            40,
        );
        let oracle = 2.0 * std::f64::consts::PI * radial;
        assert!((oracle - 0.0920).abs() < 0.002);
        assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
        assert_eq!(kato_norm(&PotentialSpec::zero(), &sq, 0.3, 4).unwrap(), 0.0);
    }

    #[test]
    fn kato_norm_of_coulomb_shrinks_with_radius() {
        let sq = DomainSpec::<f64>::unit_square();
        let v = PotentialSpec::inverse_power(center(), 1.0, 1.0);
        let mut prev = f64::INFINITY;
        for k in 0..5 {
            let delta = 0.2 / 2f64.powi(k);
            let val = kato_norm(&v, &sq, delta, 2).unwrap();
            // the supremum sits at the center: 2π ∫_0^δ log(2 + 1/r) dr
            let (radial, _) = crate::quadrature::adaptive_kronrod(
                |r: f64| if r > 0.0 { (2.0 + 1.0 / r).ln() } else { 0.0 },
                0.0,
                delta,
                1e-15,
                1e-13,
                60,
            );
            let oracle = 2.0 * std::f64::consts::PI * radial;
            assert!((val - oracle).abs() < 1e-7 * oracle, "{val} vs {oracle}");
            assert!(val < prev);
            prev = val;
        }
    }

    #[test]
    fn split_of_bounded_potential_is_trivial() {
        let sq = DomainSpec::<f64>::unit_square();
        let v = PotentialSpec::bounded("wave", 3.0, |p: Point<f64>| 3.0 * (p.x * 7.0).cos());
        let s = split_potential(&v, &sq, 1.0).unwrap();
        assert!(s.bound >= 3.0);
        assert_eq!(s.l1_norm_v1, 0.0);
        let p = Point::new(0.2, 0.9);
        assert_eq!(s.v0(p).unwrap(), v.evaluate(p).unwrap());
        assert_eq!(s.v1(p).unwrap(), 0.0);
        let z = split_potential(&PotentialSpec::<f64>::zero(), &sq, 0.5).unwrap();
        assert_eq!(z.v0(p).unwrap(), 0.0);
        assert_eq!(z.v1(p).unwrap(), 0.0);
    }

    #[test]
    fn split_of_coulomb_potential() {
        let sq = DomainSpec::<f64>::unit_square();
        let v = PotentialSpec::inverse_power(center(), 1.0, 1.0);
        let s = split_potential(&v, &sq, 0.5).unwrap();
        // radial oracle: ∫_0^{1/K} (1/r − K) 2π r dr = π / K
        let oracle = |k: f64| std::f64::consts::PI / k;
        assert_eq!(s.bound, 16.0);
        assert!((s.l1_norm_v1 - oracle(16.0)).abs() < 1e-8, "{}", s.l1_norm_v1);
        assert!(s.l1_norm_v1 < 0.25);
        assert!(oracle(8.0) >= 0.25);
        let p = Point::new(0.51, 0.5);
        assert!((s.v0(p).unwrap() + s.v1(p).unwrap() - v.evaluate(p).unwrap()).abs() < 1e-12);
        assert_eq!(s.v0(p).unwrap(), 16.0);
    }

    #[test]
    fn expression_round_trip() {
        let text = "inverse_power(x0=0.5,y0=0.5,alpha=1.0,strength=1.0) + constant(0.0)";
        let spec: PotentialSpec<f64> = text.parse().unwrap();
        assert_eq!(spec.terms.len(), 2);
        let emitted = spec.to_expression();
        let again: PotentialSpec<f64> = emitted.parse().unwrap();
        assert_eq!(again.to_expression(), emitted);
        assert!("inverse_power(x0=0.5,y0=0.5,alpha=2.5,strength=1)".parse::<PotentialSpec<f64>>().is_err());
        assert!("sqrt(2)".parse::<PotentialSpec<f64>>().is_err());
        assert!("constant(1) +".parse::<PotentialSpec<f64>>().is_err());
        assert!(matches!("zero".parse::<PotentialSpec<f64>>().unwrap().terms[0], PotentialTerm::Zero));
    }
}
