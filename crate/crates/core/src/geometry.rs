//! Planar domains, boundary conditions and the uniform interior grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A point of the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn offset(self, dx: T, dy: T) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

/// Euclidean distance; realizes the geodesic distance on flat domains.
#[inline]
pub fn distance<T: Real>(p: Point<T>, q: Point<T>) -> T {
    (p.x - q.x).hypot(p.y - q.y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape<T> {
    Rectangle { a: T, b: T },
    Disk { radius: T },
}

/// Domain geometry together with the measures entering the Weyl
/// coefficients. `dimension` is kept generic in formulas; numerics use 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec<T> {
    pub shape: Shape<T>,
    pub dimension: usize,
    pub area: T,
    pub perimeter: T,
}

impl<T: Real> DomainSpec<T> {
    /// Axis-aligned rectangle `[0, a] × [0, b]`.
    pub fn rectangle(a: T, b: T) -> Result<Self> {
        if !(a > T::zero() && b > T::zero()) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid(format!(
                "rectangle sides must be positive, got ({a}, {b})"
            )));
        }
        Ok(Self {
            shape: Shape::Rectangle { a, b },
            dimension: 2,
            area: a * b,
            perimeter: T::two() * (a + b),
        })
    }

    /// Disk of the given radius centered at the origin.
    pub fn disk(radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::invalid(format!("disk radius must be positive, got {radius}")));
        }
        Ok(Self {
            shape: Shape::Disk { radius },
            dimension: 2,
            area: T::PI() * radius * radius,
            perimeter: T::two() * T::PI() * radius,
        })
    }

    pub fn unit_square() -> Self {
        Self::rectangle(T::one(), T::one()).expect("unit square is valid")
    }

    pub fn contains(&self, p: Point<T>) -> bool {
        match self.shape {
            Shape::Rectangle { a, b } => {
                p.x >= T::zero() && p.x <= a && p.y >= T::zero() && p.y <= b
            }
            Shape::Disk { radius } => p.x.hypot(p.y) <= radius,
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Point<T>, Point<T>) {
        match self.shape {
            Shape::Rectangle { a, b } => (Point::origin(), Point::new(a, b)),
            Shape::Disk { radius } => (Point::new(-radius, -radius), Point::new(radius, radius)),
        }
    }
}

/// Boundary condition imposed on `∂M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCondition<T> {
    Dirichlet,
    Neumann,
    Robin { sigma: T },
}

impl<T: Real> BoundaryCondition<T> {
    pub fn robin(sigma: T) -> Result<Self> {
        if !(sigma >= T::zero()) || !sigma.is_finite() {
            return Err(Error::invalid(format!("Robin coefficient must be nonnegative, got {sigma}")));
        }
        Ok(BoundaryCondition::Robin { sigma })
    }

    /// Code written into the operator cache header.
    pub fn code(&self) -> u64 {
        match self {
            BoundaryCondition::Dirichlet => 0,
            BoundaryCondition::Neumann => 1,
            BoundaryCondition::Robin { .. } => 2,
        }
    }

    pub fn name(&self) -> String {
        match self {
            BoundaryCondition::Dirichlet => "dirichlet".into(),
            BoundaryCondition::Neumann => "neumann".into(),
            BoundaryCondition::Robin { sigma } => format!("robin:{sigma}"),
        }
    }
}

impl<T: Real> std::str::FromStr for BoundaryCondition<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "dirichlet" => Ok(BoundaryCondition::Dirichlet),
            "neumann" => Ok(BoundaryCondition::Neumann),
            _ => {
                let sigma = s
                    .strip_prefix("robin:")
                    .ok_or_else(|| Error::Parse(format!("unknown boundary condition `{s}`")))?;
                let sigma: f64 = sigma
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad Robin coefficient `{sigma}`")))?;
                BoundaryCondition::robin(T::lit(sigma))
            }
        }
    }
}

/// Uniform lattice of interior nodes `(i h, j h)`, `1 ≤ i ≤ nx`, `1 ≤ j ≤ ny`.
///
/// Node `(i, j)` has linear index `(i - 1) + (j - 1) nx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    pub domain: DomainSpec<T>,
    pub h: T,
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<Point<T>>,
    pub quadrature_weight: T,
    /// Largest frequency representable by the 5-point stencil, `2√2 / h`.
    pub spectral_ceiling: T,
}

impl<T: Real> Grid<T> {
    pub fn build(domain: DomainSpec<T>, h: T) -> Result<Self> {
        let (a, b) = match domain.shape {
            Shape::Rectangle { a, b } => (a, b),
            Shape::Disk { .. } => {
                return Err(Error::UnsupportedDomain(
                    "uniform grids are only built on rectangles".into(),
                ))
            }
        };
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::invalid(format!("grid spacing must be positive, got {h}")));
        }
        let cells = |len: T| -> Result<usize> {
            let ratio = len / h;
            let n = ratio.round();
            if n < T::one() || ((ratio - n) / ratio).abs() > T::lit(1e-9) {
                return Err(Error::invalid(format!(
                    "spacing {h} does not divide side length {len}"
                )));
            }
            Ok(n.to_usize().expect("cell count"))
        };
        let (mx, my) = (cells(a)?, cells(b)?);
        if mx < 2 || my < 2 {
            return Err(Error::invalid("grid has no interior nodes"));
        }
        let (nx, ny) = (mx - 1, my - 1);
        let mut nodes = Vec::with_capacity(nx * ny);
        for j in 1..=ny {
            for i in 1..=nx {
                nodes.push(Point::new(T::from_usize_lossy(i) * h, T::from_usize_lossy(j) * h));
            }
        }
        Ok(Self {
            domain,
            h,
            nx,
            ny,
            nodes,
            quadrature_weight: h * h,
            spectral_ceiling: T::two() * T::SQRT_2() / h,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Linear index of the node at lattice position `(i, j)` (1-based).
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!((1..=self.nx).contains(&i) && (1..=self.ny).contains(&j));
        (i - 1) + (j - 1) * self.nx
    }

    /// Lattice position `(i, j)` of a linear index.
    #[inline]
    pub fn position(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx + 1, idx / self.nx + 1)
    }

    /// Counting claims on spectra computed from this grid are restricted to
    /// frequencies at most a quarter of the stencil ceiling.
    pub fn counting_limit(&self) -> T {
        self.spectral_ceiling / T::lit(4.0)
    }

    /// Index of the node closest to `p`.
    pub fn nearest_node(&self, p: Point<T>) -> usize {
        let clamp = |v: T, n: usize| -> usize {
            let k = (v / self.h).round().to_isize().unwrap_or(1);
            k.clamp(1, n as isize) as usize
        };
        self.index(clamp(p.x, self.nx), clamp(p.y, self.ny))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_measures() {
        let sq = DomainSpec::<f64>::rectangle(1.0, 1.0).unwrap();
        assert_eq!(sq.area, 1.0);
        assert_eq!(sq.perimeter, 4.0);
        let d = DomainSpec::<f64>::disk(1.0).unwrap();
        assert!((d.area - std::f64::consts::PI).abs() < 1e-15);
        assert!((d.perimeter - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        assert!(matches!(DomainSpec::<f64>::rectangle(-1.0, 1.0), Err(Error::InvalidInput(_))));
        assert!(DomainSpec::<f64>::disk(0.0).is_err());
    }

    #[test]
    fn grid_construction() {
        let g = Grid::build(DomainSpec::<f64>::unit_square(), 0.25).unwrap();
        assert_eq!((g.nx, g.ny, g.len()), (3, 3, 9));
        assert_eq!(g.quadrature_weight, 1.0 / 16.0);
        let g = Grid::build(DomainSpec::<f64>::unit_square(), 0.5).unwrap();
        assert_eq!(g.nodes, vec![Point::new(0.5, 0.5)]);
        let disk = DomainSpec::<f64>::disk(1.0).unwrap();
        assert!(matches!(Grid::build(disk, 0.25), Err(Error::UnsupportedDomain(_))));
        assert!(matches!(
            Grid::build(DomainSpec::<f64>::unit_square(), 0.3),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::build(DomainSpec::<f64>::rectangle(2.0, 1.0).unwrap(), 0.25).unwrap();
        assert_eq!((g.nx, g.ny), (7, 3));
        for idx in 0..g.len() {
            let (i, j) = g.position(idx);
            assert_eq!(g.index(i, j), idx);
            assert_eq!(g.nodes[idx], Point::new(i as f64 * 0.25, j as f64 * 0.25));
        }
        assert_eq!(g.nearest_node(Point::new(1.0, 0.5)), g.index(4, 2));
        assert!((g.spectral_ceiling - 8.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let o = Point::<f64>::origin();
        assert_eq!(distance(o, Point::new(3.0, 4.0)), 5.0);
        assert_eq!(distance(Point::new(1.0, 1.0), Point::new(1.0, 1.0)), 0.0);
        assert_eq!(distance(o, Point::new(1.0, 0.0)), 1.0);
    }

    #[test]
    fn boundary_parsing() {
        assert_eq!("dirichlet".parse::<BoundaryCondition<f64>>().unwrap(), BoundaryCondition::Dirichlet);
        assert_eq!(
            "robin:0.5".parse::<BoundaryCondition<f64>>().unwrap(),
            BoundaryCondition::Robin { sigma: 0.5 }
        );
        assert!("robin:-1".parse::<BoundaryCondition<f64>>().is_err());
        assert!("periodic".parse::<BoundaryCondition<f64>>().is_err());
    }
}
