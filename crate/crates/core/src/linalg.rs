//! Dense linear algebra: a row-major matrix, the symmetric eigensolver
//! (Householder tridiagonalization followed by implicit QL), and Cholesky
//! factorizations used for positive-definiteness tests and direct solves.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{total_cmp, KahanSum, Real};

/// Rows shorter than this are processed serially.
const PAR_MIN_ROWS: usize = 64;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Bitwise symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)].to_bits_eq(self[(j, i)])))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    /// `self · other`, rows computed in parallel.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(n, m);
        let body = |(i, out_row): (usize, &mut [T])| {
            let a = &self.data[i * k..(i + 1) * k];
            for (p, &aip) in a.iter().enumerate() {
                if aip == T::zero() {
                    continue;
                }
                let b = &other.data[p * m..(p + 1) * m];
                for (o, &bv) in out_row.iter_mut().zip(b) {
                    *o += aip * bv;
                }
            }
        };
        if n >= PAR_MIN_ROWS {
            out.data.par_chunks_mut(m.max(1)).enumerate().for_each(body);
        } else {
            out.data.chunks_mut(m.max(1)).enumerate().for_each(body);
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_diagonal(&mut self, s: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += s;
        }
    }
}

trait BitsEq {
    fn to_bits_eq(self, other: Self) -> bool;
}

impl<T: Real> BitsEq for T {
    fn to_bits_eq(self, other: Self) -> bool {
        // integer_decode distinguishes every finite value, including signed zeros
        self.integer_decode() == other.integer_decode()
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // four accumulators keep the loop vectorizable and the order fixed
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Eigenvalues (ascending) and optionally eigenvectors of a symmetric matrix.
///
/// Row `k` of the returned vector matrix is the unit eigenvector for
/// eigenvalue `k`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Option<Matrix<T>>,
}

/// Householder reflector data for one elimination step.
struct Reflector<T> {
    v: Vec<T>,
    beta: T,
    alpha: T,
}

fn reflector<T: Real>(x: &[T]) -> Reflector<T> {
    let scale = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return Reflector { v: vec![T::zero(); x.len()], beta: T::zero(), alpha: T::zero() };
    }
    let norm = scale * x.iter().map(|v| (*v / scale) * (*v / scale)).sum::<T>().sqrt();
    let alpha = if x[0] >= T::zero() { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vv: T = v.iter().map(|a| *a * *a).sum();
    let beta = if vv > T::zero() { T::two() / vv } else { T::zero() };
    Reflector { v, beta, alpha }
}

/// Reduces a full symmetric matrix (consumed) to tridiagonal form.
///
/// Each step updates the trailing block row by row and, in the same pass,
/// forms the matrix-vector product needed by the next reflector, so the
/// trailing block is streamed once per step.
fn tridiagonalize<T: Real>(mut a: Matrix<T>) -> (Vec<T>, Vec<T>, Matrix<T>, Vec<T>) {
    let n = a.rows;
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    let mut betas = vec![T::zero(); n];
    if n == 0 {
        return (d, e, a, betas);
    }
    if n == 1 {
        d[0] = a[(0, 0)];
        return (d, e, a, betas);
    }
    let mut refl = reflector(&a.row(0)[1..]);
    let mut p: Vec<T> = (1..n)
        .map(|i| refl.beta * dot(&a.row(i)[1..], &refl.v))
        .collect();
    for k in 0..n - 2 {
        d[k] = a[(k, k)];
        e[k] = refl.alpha;
        betas[k] = refl.beta;
        let start = k + 1;
        let Reflector { v, beta, .. } = std::mem::replace(
            &mut refl,
            Reflector { v: Vec::new(), beta: T::zero(), alpha: T::zero() },
        );
        // w = p − (β/2)(vᵀp) v
        let kk = T::half() * beta * dot(&v, &p);
        let w: Vec<T> = p.iter().zip(&v).map(|(pi, vi)| *pi - kk * *vi).collect();
        let update = |local: usize, row: &mut [T]| {
            let (vi, wi) = (v[local], w[local]);
            if vi == T::zero() && wi == T::zero() {
                return;
            }
            for ((x, vj), wj) in row.iter_mut().zip(&v).zip(&w) {
                *x -= vi * *wj + wi * *vj;
            }
        };
        // first row of the trailing block gives the next reflector
        let cols = n;
        {
            let row = &mut a.data[start * cols + start..(start + 1) * cols];
            update(0, row);
        }
        let next = reflector(&a.row(start)[start + 1..]);
        let nb = next.beta;
        let nv = &next.v;
        let rest = &mut a.data[(start + 1) * cols..];
        let work = |(r, row): (usize, &mut [T])| -> T {
            let tail = &mut row[start..];
            update(r + 1, tail);
            nb * dot(&tail[1..], nv)
        };
        p = if n - start > PAR_MIN_ROWS {
            rest.par_chunks_mut(cols).enumerate().map(work).collect()
        } else {
            rest.chunks_mut(cols).enumerate().map(work).collect()
        };
        // keep the reflector of step k in row k for eigenvector accumulation
        a.data[k * cols + start..(k + 1) * cols].copy_from_slice(&v);
        refl = next;
    }
    d[n - 2] = a[(n - 2, n - 2)];
    d[n - 1] = a[(n - 1, n - 1)];
    e[n - 2] = a[(n - 2, n - 1)];
    (d, e, a, betas)
}

/// Builds `Qᵀ` from the reflectors stored by [`tridiagonalize`].
fn accumulate_transform<T: Real>(store: &Matrix<T>, betas: &[T]) -> Matrix<T> {
    let n = store.rows;
    let mut q = Matrix::identity(n);
    if n < 3 {
        return q;
    }
    for k in (0..n - 2).rev() {
        let beta = betas[k];
        if beta == T::zero() {
            continue;
        }
        let s = k + 1;
        let v = &store.row(k)[s..];
        // r = vᵀ Q[s.., s..]
        let mut r = vec![T::zero(); n - s];
        for (i, vi) in v.iter().enumerate() {
            if *vi == T::zero() {
                continue;
            }
            for (rj, qj) in r.iter_mut().zip(&q.row(s + i)[s..]) {
                *rj += *vi * *qj;
            }
        }
        for (i, vi) in v.iter().enumerate() {
            let f = beta * *vi;
            if f == T::zero() {
                continue;
            }
            for (qj, rj) in q.row_mut(s + i)[s..].iter_mut().zip(&r) {
                *qj -= f * *rj;
            }
        }
    }
    q.transpose()
}

/// Implicit QL with Wilkinson-type shifts on a symmetric tridiagonal
/// matrix (`d` diagonal, `e[i]` couples `i` and `i+1`). Rotations of each
/// sweep are recorded and applied to the rows of `w` in column blocks.
fn tridiagonal_ql<T: Real>(d: &mut [T], e: &mut [T], mut w: Option<&mut Matrix<T>>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = T::zero();
    let eps = T::epsilon();
    let mut rotations: Vec<(usize, T, T)> = Vec::with_capacity(n);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Solver(format!("QL iteration did not converge at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (T::two() * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut early = false;
            rotations.clear();
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + T::two() * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                rotations.push((i, c, s));
            }
            if let Some(w) = w.as_deref_mut() {
                apply_rotations(w, &rotations);
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

fn apply_rotations<T: Real>(w: &mut Matrix<T>, rotations: &[(usize, T, T)]) {
    if rotations.is_empty() {
        return;
    }
    let cols = w.cols;
    let lo = rotations.iter().map(|r| r.0).min().unwrap_or(0);
    let hi = rotations.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    const BLOCK: usize = 256;
    let nblocks = cols.div_ceil(BLOCK);
    let data_ptr = SharedRows { ptr: w.data.as_mut_ptr(), cols };
    let body = |blk: usize| {
        let c0 = blk * BLOCK;
        let c1 = (c0 + BLOCK).min(cols);
        for &(i, c, s) in rotations {
            // SAFETY: blocks cover disjoint column ranges of rows lo..=hi.
            let (ri, rj) = unsafe { data_ptr.two_rows(i, i + 1, c0, c1) };
            for (x, y) in ri.iter_mut().zip(rj.iter_mut()) {
                let f = *y;
                *y = s * *x + c * f;
                *x = c * *x - s * f;
            }
        }
    };
    debug_assert!(hi < w.rows + 1 && lo <= hi);
    if nblocks > 1 && rotations.len() * cols > 1 << 16 {
        (0..nblocks).into_par_iter().for_each(body);
    } else {
        (0..nblocks).for_each(body);
    }
}

struct SharedRows<T> {
    ptr: *mut T,
    cols: usize,
}

unsafe impl<T: Send> Send for SharedRows<T> {}
unsafe impl<T: Send> Sync for SharedRows<T> {}

impl<T> SharedRows<T> {
    /// Column range `c0..c1` of rows `i` and `j` (`i != j`).
    #[allow(clippy::mut_from_ref)]
    unsafe fn two_rows(&self, i: usize, j: usize, c0: usize, c1: usize) -> (&mut [T], &mut [T]) {
        let len = c1 - c0;
        let a = std::slice::from_raw_parts_mut(self.ptr.add(i * self.cols + c0), len);
        let b = std::slice::from_raw_parts_mut(self.ptr.add(j * self.cols + c0), len);
        (a, b)
    }
}

/// Full symmetric eigendecomposition. Only the lower triangle is trusted;
/// callers are expected to pass exactly symmetric matrices.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>, want_vectors: bool) -> Result<SymmetricEigen<T>> {
    if a.rows != a.cols {
        return Err(Error::invalid("eigendecomposition needs a square matrix"));
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("matrix has non-finite entries".into()));
    }
    let n = a.rows;
    let (mut d, mut e, store, betas) = tridiagonalize(a.clone());
    let mut w = want_vectors.then(|| accumulate_transform(&store, &betas));
    drop(store);
    tridiagonal_ql(&mut d, &mut e, w.as_mut())?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| total_cmp(&d[i], &d[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = w.map(|w| {
        let mut out = Matrix::zeros(n, n);
        for (k, &src) in order.iter().enumerate() {
            out.row_mut(k).copy_from_slice(w.row(src));
        }
        out
    });
    Ok(SymmetricEigen { values, vectors })
}

/// Cholesky factor `L` (lower, row-major) of a symmetric positive definite
/// matrix.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        diag -= dot(&l.row(j)[..j], &l.row(j)[..j]);
        if !(diag > T::zero()) {
            return Err(Error::Solver(format!("matrix is not positive definite (pivot {j})")));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// `A⁻¹` from a Cholesky factor.
pub fn spd_inverse<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let l = cholesky(a)?;
    let n = a.rows;
    let cols: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|c| {
            let mut y = vec![T::zero(); n];
            for i in 0..n {
                let rhs = if i == c { T::one() } else { T::zero() };
                y[i] = (rhs - dot(&l.row(i)[..i], &y[..i])) / l[(i, i)];
            }
            let mut x = vec![T::zero(); n];
            for i in (0..n).rev() {
                let mut s = KahanSum::new();
                s.add(y[i]);
                for k in i + 1..n {
                    s.add(-l[(k, i)] * x[k]);
                }
                x[i] = s.total() / l[(i, i)];
            }
            x
        })
        .collect();
    Ok(Matrix::from_fn(n, n, |i, j| cols[j][i]))
}

/// True if `A − μ I` is positive definite, for a symmetric matrix with
/// half-bandwidth `bw` (entries with `|i − j| > bw` are zero).
pub fn banded_is_positive_definite<T: Real>(a: &Matrix<T>, bw: usize, mu: T) -> bool {
    let n = a.rows;
    // band storage: l[i][k] holds L[i][i − bw + k]
    let width = bw + 1;
    let mut l = vec![T::zero(); n * width];
    for i in 0..n {
        let j0 = i.saturating_sub(bw);
        for j in j0..=i {
            let mut s = a[(i, j)];
            if i == j {
                s -= mu;
            }
            let k0 = j0.max(j.saturating_sub(bw));
            for k in k0..j {
                s -= l[i * width + (k + bw - i)] * l[j * width + (k + bw - j)];
            }
            if i == j {
                if !(s > T::zero()) {
                    return false;
                }
                l[i * width + bw] = s.sqrt();
            } else {
                l[i * width + (j + bw - i)] = s / l[j * width + bw];
            }
        }
    }
    true
}

/// Lower bound on the smallest eigenvalue of a banded symmetric matrix,
/// accurate to `tol`: the largest `μ` found with `A − μI` positive definite.
pub fn smallest_eigenvalue_lower_bound<T: Real>(a: &Matrix<T>, bw: usize, tol: T) -> T {
    let n = a.rows;
    if n == 0 {
        return T::zero();
    }
    let mut lo = T::infinity();
    let mut hi = T::infinity();
    for i in 0..n {
        let row = a.row(i);
        let off: T = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.abs()).sum();
        lo = lo.min(row[i] - off);
        hi = hi.min(row[i]);
    }
    if banded_is_positive_definite(a, bw, hi) {
        // only possible when A is diagonal at its smallest diagonal entry
        return hi;
    }
    lo = lo - tol;
    while hi - lo > tol {
        let mid = lo + (hi - lo) * T::half();
        if mid <= lo || mid >= hi {
            break;
        }
        if banded_is_positive_definite(a, bw, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
