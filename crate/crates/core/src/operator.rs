//! Finite-difference operators `H^0 = −Δ` and `H_V = −Δ + V` on a grid,
//! the spectral shift making them `≥ 1`, and the binary operator cache.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{distance, BoundaryCondition, DomainSpec, Grid, Point};
use crate::linalg::{smallest_eigenvalue_lower_bound, Matrix};
use crate::potentials::{PotentialSpec, PotentialTerm};
use crate::region::{self, ConvexRegion};
use crate::scalar::Real;

/// Which operator was assembled.
#[derive(Clone, Debug)]
pub enum OperatorKind<T: std::fmt::Display> {
    Free,
    Schrodinger(PotentialSpec<T>),
}

/// Dense symmetric matrix of an assembled operator.
#[derive(Clone, Debug)]
pub struct AssembledOperator<T: std::fmt::Display> {
    pub matrix: Matrix<T>,
    pub grid: Grid<T>,
    pub bc: BoundaryCondition<T>,
    /// Constant added to the diagonal by [`normalize_shift`].
    pub shift: T,
    pub kind: OperatorKind<T>,
    /// Cell averages `V̄` placed on the diagonal (all zero for `Free`).
    pub potential_diagonal: Vec<T>,
}

impl<T: Real> AssembledOperator<T> {
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Half-bandwidth of the 5-point stencil in the lexicographic order.
    pub fn bandwidth(&self) -> usize {
        self.grid.nx
    }

    /// Short description used in reports.
    pub fn describe(&self) -> String {
        let what = match &self.kind {
            OperatorKind::Free => "free".to_string(),
            OperatorKind::Schrodinger(v) => format!("schrodinger[{}]", v.to_expression()),
        };
        format!("{what} {} h={} N={} shift={}", self.bc.name(), self.grid.h, self.len(), self.shift)
    }
}

/// 5-point `−Δ` on the interior nodes.
///
/// Missing neighbours across the boundary are eliminated: Dirichlet drops
/// them, Neumann/Robin substitute the boundary value `u_in / (1 + hσ)`
/// obtained from the one-sided condition, which keeps the matrix symmetric.
pub fn assemble_laplacian<T: Real>(grid: &Grid<T>, bc: BoundaryCondition<T>) -> Result<AssembledOperator<T>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid has no nodes"));
    }
    let n = grid.len();
    let h2 = grid.h * grid.h;
    let off = -h2.recip();
    let missing = match bc {
        BoundaryCondition::Dirichlet => T::zero(),
        BoundaryCondition::Neumann => h2.recip(),
        BoundaryCondition::Robin { sigma } => {
            if !(sigma >= T::zero()) {
                return Err(Error::invalid("Robin coefficient must be nonnegative"));
            }
            (h2 * (T::one() + grid.h * sigma)).recip()
        }
    };
    let four = T::lit(4.0) / h2;
    let mut m = Matrix::zeros(n, n);
    for j in 1..=grid.ny {
        for i in 1..=grid.nx {
            let row = grid.index(i, j);
            let mut diag = four;
            let neighbours = [
                (i > 1).then(|| grid.index(i - 1, j)),
                (i < grid.nx).then(|| grid.index(i + 1, j)),
                (j > 1).then(|| grid.index(i, j - 1)),
                (j < grid.ny).then(|| grid.index(i, j + 1)),
            ];
            for nb in neighbours {
                match nb {
                    Some(col) => {
                        // one computation feeds both triangle entries
                        m[(row, col)] = off;
                        m[(col, row)] = off;
                    }
                    None => diag -= missing,
                }
            }
            m[(row, row)] = diag;
        }
    }
    Ok(AssembledOperator {
        matrix: m,
        grid: grid.clone(),
        bc,
        shift: T::zero(),
        kind: OperatorKind::Free,
        potential_diagonal: vec![T::zero(); n],
    })
}

/// `H^0 + diag(V̄)` with `V̄` the cell averages of `V`.
pub fn assemble_schrodinger<T: Real>(
    grid: &Grid<T>,
    bc: BoundaryCondition<T>,
    potential: &PotentialSpec<T>,
) -> Result<AssembledOperator<T>> {
    potential.validate()?;
    let mut op = assemble_laplacian(grid, bc)?;
    let averages = cell_averages(grid, potential)?;
    for (k, v) in averages.iter().enumerate() {
        op.matrix[(k, k)] += *v;
    }
    op.potential_diagonal = averages;
    op.kind = OperatorKind::Schrodinger(potential.clone());
    Ok(op)
}

/// `(1/h²) ∫_{cell} V` for every node, where the cell is the `h × h`
/// square centred on the node.
pub fn cell_averages<T: Real>(grid: &Grid<T>, potential: &PotentialSpec<T>) -> Result<Vec<T>> {
    (0..grid.len())
        .into_par_iter()
        .map(|k| cell_average(grid, potential, grid.nodes[k]))
        .collect()
}

/// Cell average around one node. Constant terms are exact; inverse-power
/// terms whose center lies within `2h` use polar sub-cells around it.
pub fn cell_average<T: Real>(grid: &Grid<T>, potential: &PotentialSpec<T>, node: Point<T>) -> Result<T> {
    let h = grid.h;
    let half = h * T::half();
    let cell = ConvexRegion::rect(node.offset(-half, -half), node.offset(half, half));
    let area = h * h;
    let mut total = T::zero();
    for term in &potential.terms {
        let part = match term {
            PotentialTerm::Zero => T::zero(),
            PotentialTerm::Constant(c) => *c,
            PotentialTerm::Bounded { f, .. } => {
                let g = |p: Point<T>| f(p);
                region::integrate_checked(&cell, &[], &g, T::lit(1e-6), T::lit(1e-300), "cell average")? / area
            }
            PotentialTerm::InversePower { center, strength, .. } => {
                if *strength == T::zero() {
                    continue;
                }
                let single = PotentialSpec { terms: vec![term.clone()] };
                let g = |p: Point<T>| single.value_unchecked(p);
                let near = distance(node, *center) <= T::two() * h;
                let singular: Vec<_> = if near {
                    single.singularities()
                } else {
                    Vec::new()
                };
                region::integrate_checked(&cell, &singular, &g, T::lit(1e-6), T::lit(1e-300), "cell average")?
                    / area
            }
        };
        total += part;
    }
    Ok(total)
}

/// Adds `s = max(0, 1 − μ_min)` to the diagonal.
pub fn normalize_shift<T: Real>(op: &AssembledOperator<T>) -> AssembledOperator<T> {
    let s = required_shift(op);
    with_shift(op, s)
}

/// Shifts a `(H^0, H_V)` pair by one common constant, the larger of the two
/// individual requirements, so that `H_V − H^0` stays `diag(V̄)`.
pub fn normalize_pair<T: Real>(
    free: &AssembledOperator<T>,
    perturbed: &AssembledOperator<T>,
) -> Result<(AssembledOperator<T>, AssembledOperator<T>)> {
    if free.grid != perturbed.grid || free.bc != perturbed.bc {
        return Err(Error::InvalidPair("operators live on different grids or boundary conditions".into()));
    }
    let s = required_shift(free).max(required_shift(perturbed));
    Ok((with_shift(free, s), with_shift(perturbed, s)))
}

/// Shift needed to lift the spectrum to `≥ 1`.
pub fn required_shift<T: Real>(op: &AssembledOperator<T>) -> T {
    let scale = op.matrix.diagonal().iter().fold(T::one(), |m, v| m.max(v.abs()));
    let tol = scale * T::lit(1e-13).max(T::epsilon() * T::lit(8.0));
    let mu = smallest_eigenvalue_lower_bound(&op.matrix, op.bandwidth(), tol);
    (T::one() - mu).max(T::zero())
}

/// Returns a copy with the diagonal raised by `s` (accumulating into
/// the recorded shift).
pub fn with_shift<T: Real>(op: &AssembledOperator<T>, s: T) -> AssembledOperator<T> {
    let mut out = op.clone();
    if s != T::zero() {
        out.matrix.add_diagonal(s);
        out.shift += s;
    }
    out
}

const CACHE_MAGIC: &[u8; 8] = b"WLOPv1\0\0";

/// Writes the operator as: magic, `N` (u64), `h` (f64), boundary code
/// (u64), `σ` (f64, Robin only), shift (f64), then `N²` row-major f64.
pub fn write_cache<T: Real>(op: &AssembledOperator<T>, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(48 + 8 * op.len() * op.len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(op.len() as u64).to_le_bytes());
    out.extend_from_slice(&op.grid.h.to_f64_lossy().to_le_bytes());
    out.extend_from_slice(&op.bc.code().to_le_bytes());
    if let BoundaryCondition::Robin { sigma } = op.bc {
        out.extend_from_slice(&sigma.to_f64_lossy().to_le_bytes());
    }
    out.extend_from_slice(&op.shift.to_f64_lossy().to_le_bytes());
    for v in op.matrix.as_slice() {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Matrix and header read back from a cache file.
#[derive(Clone, Debug)]
pub struct CachedOperator<T> {
    pub h: T,
    pub bc: BoundaryCondition<T>,
    pub shift: T,
    pub matrix: Matrix<T>,
}

pub fn read_cache<T: Real>(path: &Path) -> Result<CachedOperator<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |len: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + len)
            .ok_or_else(|| Error::Parse("operator cache is truncated".into()))?;
        pos += len;
        Ok(s)
    };
    if take(8)? != CACHE_MAGIC {
        return Err(Error::Parse("not an operator cache file".into()));
    }
    let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
    let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
    let n = u64_at(take(8)?) as usize;
    let h = T::lit(f64_at(take(8)?));
    let bc = match u64_at(take(8)?) {
        0 => BoundaryCondition::Dirichlet,
        1 => BoundaryCondition::Neumann,
        2 => BoundaryCondition::robin(T::lit(f64_at(take(8)?)))?,
        other => return Err(Error::Parse(format!("unknown boundary code {other}"))),
    };
    let shift = T::lit(f64_at(take(8)?));
    let body = take(8 * n * n)?;
    let data = body.chunks_exact(8).map(|c| T::lit(f64_at(c))).collect();
    Ok(CachedOperator { h, bc, shift, matrix: Matrix::from_vec(n, n, data)? })
}

/// Convenience: grid on a rectangle plus free operator.
pub fn free_operator<T: Real>(a: T, b: T, h: T, bc: BoundaryCondition<T>) -> Result<AssembledOperator<T>> {
    let grid = Grid::build(DomainSpec::rectangle(a, b)?, h)?;
    assemble_laplacian(&grid, bc)
}
