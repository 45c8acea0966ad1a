//! Eigenpairs of assembled operators, exact spectra of the rectangle and
//! the disk, counting functions and the pointwise spectral function.

use serde::{Deserialize, Serialize};

use crate::bessel;
use crate::error::{Error, Result};
use crate::geometry::BoundaryCondition;
use crate::linalg::{dot, symmetric_eigen, Matrix};
use crate::operator::AssembledOperator;
use crate::scalar::{total_cmp, KahanSum, Real};

/// Largest operator the dense solver accepts by default.
pub const DEFAULT_DENSE_LIMIT: usize = 6400;

/// Frequencies `τ_k = √μ_k` (ascending) and, optionally, eigenfunctions.
///
/// Row `k` of `eigenvectors` holds `e_k` at the grid nodes, normalized so
/// that `h² Σ_i e_k(i)² = 1`.
#[derive(Clone, Debug)]
pub struct SpectralData<T> {
    pub frequencies: Vec<T>,
    pub eigenvalues: Vec<T>,
    pub eigenvectors: Option<Matrix<T>>,
    pub weight: T,
    pub shift: T,
    pub source: String,
    /// Frequencies above this are outside the discretization's validity.
    pub counting_limit: T,
}

impl<T: Real> SpectralData<T> {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Builds data directly from eigenpairs (vectors weighted-normalized).
    pub fn from_modes(eigenvalues: Vec<T>, vectors: Option<Matrix<T>>, weight: T, shift: T) -> Result<Self> {
        if let Some(v) = &vectors {
            if v.rows() != eigenvalues.len() {
                return Err(Error::invalid("one eigenvector row is needed per eigenvalue"));
            }
        }
        if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("eigenvalues must be ascending"));
        }
        Ok(Self {
            frequencies: eigenvalues.iter().map(|m| m.max(T::zero()).sqrt()).collect(),
            eigenvalues,
            eigenvectors: vectors,
            weight,
            shift,
            source: "modes".into(),
            counting_limit: T::infinity(),
        })
    }

    pub fn vectors(&self) -> Result<&Matrix<T>> {
        self.eigenvectors
            .as_ref()
            .ok_or_else(|| Error::Precondition("spectral data was computed without eigenvectors".into()))
    }

    pub fn eigenvector(&self, k: usize) -> Result<&[T]> {
        Ok(self.vectors()?.row(k))
    }

    pub fn nodes(&self) -> usize {
        self.eigenvectors.as_ref().map_or(0, |v| v.cols())
    }

    /// `max |h² EᵀE − I|` over the weighted Gram matrix.
    pub fn gram_error(&self) -> Result<T> {
        let v = self.vectors()?;
        let mut gram = v.matmul(&v.transpose());
        gram.scale(self.weight);
        Ok(gram.max_abs_diff(&Matrix::identity(v.rows())))
    }

    /// `max_k ‖H e_k − τ_k² e_k‖ / τ_k²` (weighted norm).
    pub fn rayleigh_residual(&self, op: &AssembledOperator<T>) -> Result<T> {
        let v = self.vectors()?;
        let mut worst = T::zero();
        for k in 0..v.rows() {
            let e = v.row(k);
            let he = op.matrix.matvec(e);
            let mu = self.eigenvalues[k];
            let r: T = he.iter().zip(e).map(|(a, b)| (*a - mu * *b).powi(2)).sum::<T>() * self.weight;
            let denom = mu.abs().max(T::epsilon());
            worst = worst.max(r.sqrt() / denom);
        }
        Ok(worst)
    }

    /// Fails when `λ` lies beyond the validity range of the source.
    pub fn check_range(&self, lambda: T) -> Result<()> {
        if lambda > self.counting_limit {
            return Err(Error::Range(format!(
                "λ = {lambda} exceeds the validity limit {} of this spectrum",
                self.counting_limit
            )));
        }
        Ok(())
    }

    pub fn count(&self, lambda: T) -> usize {
        counting_function(&self.frequencies, lambda)
    }
}

fn decompose<T: Real>(op: &AssembledOperator<T>, vectors: bool, limit: usize) -> Result<SpectralData<T>> {
    let n = op.len();
    if n > limit {
        return Err(Error::Capacity { size: n, limit });
    }
    let eig = symmetric_eigen(&op.matrix, vectors)?;
    let weight = op.grid.quadrature_weight;
    let scale = op.grid.h.recip();
    let eigenvectors = eig.vectors.map(|mut v| {
        v.scale(scale);
        v
    });
    let floor = op.matrix.max_abs() * T::lit(1e-10);
    if let Some(bad) = eig.values.iter().find(|m| **m < -floor) {
        return Err(Error::Precondition(format!(
            "operator has a negative eigenvalue {bad}; apply the spectral shift first"
        )));
    }
    Ok(SpectralData {
        frequencies: eig.values.iter().map(|m| m.max(T::zero()).sqrt()).collect(),
        eigenvalues: eig.values,
        eigenvectors,
        weight,
        shift: op.shift,
        source: op.describe(),
        counting_limit: op.grid.counting_limit(),
    })
}

/// All eigenpairs of `op`.
pub fn eigendecompose<T: Real>(op: &AssembledOperator<T>) -> Result<SpectralData<T>> {
    decompose(op, true, DEFAULT_DENSE_LIMIT)
}

/// Eigenpairs with an explicit size limit.
pub fn eigendecompose_with_limit<T: Real>(op: &AssembledOperator<T>, limit: usize) -> Result<SpectralData<T>> {
    decompose(op, true, limit)
}

/// Eigenvalues only; roughly three times cheaper than [`eigendecompose`].
pub fn eigenvalues_only<T: Real>(op: &AssembledOperator<T>) -> Result<SpectralData<T>> {
    decompose(op, false, DEFAULT_DENSE_LIMIT)
}

/// Where an exact spectrum comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    RectangleLattice { a: f64, b: f64, bc: String },
    DiskBessel { radius: f64, bc: String },
}

/// Analytic frequencies, complete up to `cutoff`, with multiplicity.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSpectrum<T> {
    pub frequencies: Vec<T>,
    pub cutoff: T,
    pub provenance: Provenance,
}

impl<T: Real> ExactSpectrum<T> {
    pub fn count(&self, lambda: T) -> usize {
        counting_function(&self.frequencies, lambda)
    }

    /// Fails when `λ` exceeds the completeness cutoff.
    pub fn check_range(&self, lambda: T) -> Result<()> {
        if lambda > self.cutoff {
            return Err(Error::Range(format!(
                "λ = {lambda} exceeds the exact-spectrum cutoff {}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

/// `π √(m²/a² + k²/b²)` for `m, k ≥ 1` (Dirichlet) or `m, k ≥ 0` (Neumann).
pub fn exact_rectangle_spectrum<T: Real>(
    a: T,
    b: T,
    bc: BoundaryCondition<T>,
    cutoff: T,
) -> Result<ExactSpectrum<T>> {
    if !(a > T::zero() && b > T::zero()) {
        return Err(Error::invalid("rectangle sides must be positive"));
    }
    if !(cutoff > T::zero()) || !cutoff.is_finite() {
        return Err(Error::invalid(format!("cutoff must be positive and finite, got {cutoff}")));
    }
    let first = match bc {
        BoundaryCondition::Dirichlet => 1usize,
        BoundaryCondition::Neumann => 0,
        BoundaryCondition::Robin { .. } => {
            return Err(Error::UnsupportedBoundary("Robin rectangles have no closed-form spectrum".into()))
        }
    };
    let (af, bf, lf) = (a.to_f64_lossy(), b.to_f64_lossy(), cutoff.to_f64_lossy());
    let pi = std::f64::consts::PI;
    let limit2 = (lf / pi).powi(2);
    let mmax = (lf * af / pi).floor() as usize;
    let mut out = Vec::new();
    for m in first..=mmax {
        let xm = (m as f64 / af).powi(2);
        let rest = limit2 - xm;
        if rest < 0.0 {
            break;
        }
        let kmax = (rest.sqrt() * bf).floor() as usize + 1;
        for k in first..=kmax {
            let f = pi * (xm + (k as f64 / bf).powi(2)).sqrt();
            if f <= lf {
                out.push(T::lit(f));
            }
        }
    }
    out.sort_by(total_cmp);
    Ok(ExactSpectrum {
        frequencies: out,
        cutoff,
        provenance: Provenance::RectangleLattice { a: af, b: bf, bc: bc.name() },
    })
}

/// Disk frequencies `j_{ν,k}/R` (Dirichlet) or `j′_{ν,k}/R` (Neumann, plus
/// the constant mode), multiplicity 2 for `ν ≥ 1`.
pub fn exact_disk_spectrum<T: Real>(radius: T, bc: BoundaryCondition<T>, cutoff: T) -> Result<ExactSpectrum<T>> {
    if !(radius > T::zero()) {
        return Err(Error::invalid("disk radius must be positive"));
    }
    if !(cutoff > T::zero()) || !cutoff.is_finite() {
        return Err(Error::invalid(format!("cutoff must be positive and finite, got {cutoff}")));
    }
    let r = radius.to_f64_lossy();
    let limit = cutoff.to_f64_lossy() * r;
    let dir = bessel::bessel_zeros_up_to(limit)?;
    let mut out = Vec::new();
    let mut push = |z: f64, nu: usize| {
        if z <= limit {
            out.push(T::lit(z / r));
            if nu > 0 {
                out.push(T::lit(z / r));
            }
        }
    };
    match bc {
        BoundaryCondition::Dirichlet => {
            for (nu, zs) in dir.iter().enumerate() {
                zs.iter().for_each(|z| push(*z, nu));
            }
        }
        BoundaryCondition::Neumann => {
            push(0.0, 0);
            for (nu, zs) in bessel::bessel_prime_zeros_up_to(&dir, limit)?.iter().enumerate() {
                zs.iter().for_each(|z| push(*z, nu));
            }
        }
        BoundaryCondition::Robin { .. } => {
            return Err(Error::UnsupportedBoundary("the disk oracle covers Dirichlet and Neumann only".into()))
        }
    }
    out.sort_by(total_cmp);
    Ok(ExactSpectrum {
        frequencies: out,
        cutoff,
        provenance: Provenance::DiskBessel { radius: r, bc: bc.name() },
    })
}

/// `#{k : τ_k ≤ λ}` on an ascending list.
pub fn counting_function<T: Real>(frequencies: &[T], lambda: T) -> usize {
    frequencies.partition_point(|f| *f <= lambda)
}

/// `Σ_{τ_k ≤ λ} |e_k(x)|²` at node `node`.
pub fn spectral_function<T: Real>(data: &SpectralData<T>, node: usize, lambda: T) -> Result<T> {
    let v = data.vectors()?;
    if node >= v.cols() {
        return Err(Error::invalid(format!("node {node} is not on the grid")));
    }
    let count = data.count(lambda);
    Ok((0..count).map(|k| v[(k, node)].powi(2)).collect::<KahanSum<T>>().total())
}

/// `sup_x Σ_{τ_k ≤ λ} |e_k(x)|²` for several `λ` at once, sharing one pass
/// over the eigenvectors.
pub fn spectral_function_sup<T: Real>(data: &SpectralData<T>, lambdas: &[T]) -> Result<Vec<T>> {
    let v = data.vectors()?;
    let n = v.cols();
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|a, b| total_cmp(&lambdas[*a], &lambdas[*b]));
    let mut acc = vec![T::zero(); n];
    let mut k = 0;
    let mut out = vec![T::zero(); lambdas.len()];
    for idx in order {
        let stop = data.count(lambdas[idx]);
        while k < stop {
            for (a, e) in acc.iter_mut().zip(v.row(k)) {
                *a += *e * *e;
            }
            k += 1;
        }
        out[idx] = acc.iter().fold(T::zero(), |m, a| m.max(*a));
    }
    Ok(out)
}

/// `⟨u, v⟩ = h² Σ u_i v_i`.
pub fn weighted_dot<T: Real>(weight: T, u: &[T], v: &[T]) -> T {
    weight * dot(u, v)
}

/// CSV with columns `index,frequency,multiplicity_flag`; the flag is 1 for
/// frequencies that repeat (relative tolerance 1e-10).
pub fn spectrum_csv<T: Real>(frequencies: &[T]) -> String {
    let mut s = String::from("index,frequency,multiplicity_flag\n");
    let same = |a: T, b: T| (a - b).abs() <= T::lit(1e-10) * a.abs().max(b.abs()).max(T::one());
    for (i, f) in frequencies.iter().enumerate() {
        let repeated = (i > 0 && same(frequencies[i - 1], *f))
            || (i + 1 < frequencies.len() && same(frequencies[i + 1], *f));
        s.push_str(&format!("{},{:.16e},{}\n", i + 1, f.to_f64_lossy(), u8::from(repeated)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainSpec, Grid};
    use crate::operator::{assemble_laplacian, normalize_shift};

    #[test]
    fn rectangle_oracle_examples() {
        let s = exact_rectangle_spectrum(1.0f64, 1.0, BoundaryCondition::Dirichlet, 5.0).unwrap();
        assert_eq!(s.frequencies.len(), 1);
        assert!((s.frequencies[0] - std::f64::consts::PI * 2f64.sqrt()).abs() < 1e-14);
        let s = exact_rectangle_spectrum(1.0f64, 1.0, BoundaryCondition::Dirichlet, 20.0).unwrap();
        assert_eq!(s.frequencies.len(), 26);
        // brute-force lattice count of m² + k² ≤ (20/π)²
        let r2 = (20.0 / std::f64::consts::PI).powi(2);
        let brute = (1..10).flat_map(|m| (1..10).map(move |k| (m, k))).filter(|(m, k)| ((m * m + k * k) as f64) <= r2).count();
        assert_eq!(brute, 26);
        let s = exact_rectangle_spectrum(1.0f64, 1.0, BoundaryCondition::Neumann, 1.0).unwrap();
        assert_eq!(s.frequencies, vec![0.0]);
        assert!(exact_rectangle_spectrum(1.0f64, 1.0, BoundaryCondition::Robin { sigma: 1.0 }, 5.0).is_err());
    }

    #[test]
    fn disk_oracle_examples() {
        let s = exact_disk_spectrum(1.0f64, BoundaryCondition::Dirichlet, 3.0).unwrap();
        assert_eq!(s.frequencies.len(), 1);
        assert!((s.frequencies[0] - 2.404825557695773).abs() < 1e-12);
        let s = exact_disk_spectrum(1.0f64, BoundaryCondition::Dirichlet, 4.0).unwrap();
        assert_eq!(s.frequencies.len(), 3);
        assert!((s.frequencies[1] - 3.831705970207512).abs() < 1e-12);
        assert_eq!(s.frequencies[1], s.frequencies[2]);
        let one = exact_disk_spectrum(1.0f64, BoundaryCondition::Dirichlet, 30.0).unwrap();
        let two = exact_disk_spectrum(2.0f64, BoundaryCondition::Dirichlet, 15.0).unwrap();
        assert_eq!(one.frequencies.len(), two.frequencies.len());
        for (a, b) in one.frequencies.iter().zip(&two.frequencies) {
            assert!((a / 2.0 - b).abs() < 1e-12);
        }
        let neu = exact_disk_spectrum(1.0f64, BoundaryCondition::Neumann, 4.0).unwrap();
        assert_eq!(neu.frequencies[0], 0.0);
        assert!((neu.frequencies[1] - 1.841183781340659).abs() < 1e-12);
    }

    #[test]
    fn counting_conventions() {
        assert_eq!(counting_function::<f64>(&[], 3.0), 0);
        let list = [1.0, 2.0, 2.0, 3.0];
        assert_eq!(counting_function(&list, 2.0), 3);
        assert_eq!(counting_function(&list, 1.999), 1);
    }

    #[test]
    fn discrete_eigenpairs() {
        let g = Grid::build(DomainSpec::unit_square(), 0.5).unwrap();
        let d = eigendecompose(&assemble_laplacian(&g, BoundaryCondition::Dirichlet).unwrap()).unwrap();
        assert_eq!(d.frequencies, vec![4.0]);

        let g = Grid::build(DomainSpec::unit_square(), 0.125).unwrap();
        let op = assemble_laplacian(&g, BoundaryCondition::Dirichlet).unwrap();
        let d = eigendecompose(&op).unwrap();
        let continuum = std::f64::consts::PI * 2f64.sqrt();
        assert!((d.frequencies[0] - continuum).abs() < 0.02 * continuum);
        let exact = (8.0 * 64.0 * (std::f64::consts::PI / 16.0).sin().powi(2)).sqrt();
        assert!((d.frequencies[0] - exact).abs() < 1e-12);
        assert!(d.gram_error().unwrap() < 1e-8);
        assert!(d.rayleigh_residual(&op).unwrap() < 1e-8);

        // completeness: every node sees 1/h² once all modes are included
        for node in [0, 17, 48] {
            let v = spectral_function(&d, node, f64::INFINITY).unwrap();
            assert!((v - 64.0).abs() < 1e-9);
            assert_eq!(spectral_function(&d, node, 1.0).unwrap(), 0.0);
        }

        let neu = normalize_shift(&assemble_laplacian(&g, BoundaryCondition::Neumann).unwrap());
        let d = eigendecompose(&neu).unwrap();
        assert!((d.frequencies[0] - 1.0).abs() < 1e-9);
        let unshifted = assemble_laplacian(&g, BoundaryCondition::Neumann).unwrap();
        assert!(eigendecompose(&unshifted).unwrap().frequencies[0] < 1e-6);
    }

    #[test]
    fn capacity_limit() {
        let g = Grid::build(DomainSpec::unit_square(), 0.125).unwrap();
        let op = assemble_laplacian(&g, BoundaryCondition::Dirichlet).unwrap();
        assert!(matches!(eigendecompose_with_limit(&op, 10), Err(Error::Capacity { size: 49, limit: 10 })));
    }

    #[test]
    fn csv_layout() {
        let csv = spectrum_csv(&[1.0f64, 2.0, 2.0]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "index,frequency,multiplicity_flag");
        assert_eq!(lines[1], "1,1.0000000000000000e0,0");
        assert!(lines[2].ends_with(",1") && lines[3].ends_with(",1"));
    }
}
