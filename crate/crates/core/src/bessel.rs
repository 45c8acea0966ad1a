//! Bessel functions of integer order and their zeros, for the disk
//! spectrum oracle.

use crate::error::{Error, Result};

/// `J_0(x), …, J_{max_order}(x)` by Miller's backward recurrence,
/// normalized with `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_all(max_order: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; max_order + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = max_order.max(ax as usize);
    // start index: far enough above both the order and the argument
    let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    start += start % 2;
    let (mut next, mut cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0f64;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / ax * cur - next;
        next = cur;
        cur = prev;
        // cur now holds the unnormalized J_{k-1}
        if k - 1 <= max_order {
            out[k - 1] = cur;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

pub fn bessel_j(order: usize, x: f64) -> f64 {
    bessel_j_all(order + 1, x)[order]
}

/// `J_ν′(x) = (J_{ν−1}(x) − J_{ν+1}(x)) / 2`, with `J_0′ = −J_1`.
pub fn bessel_j_prime(order: usize, x: f64) -> f64 {
    let j = bessel_j_all(order + 1, x);
    if order == 0 {
        -j[1]
    } else {
        0.5 * (j[order - 1] - j[order + 1])
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Solver(format!("Bessel zero not bracketed in [{a}, {b}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if b - a <= 1e-14 * b.max(1.0) || mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Scans `[from, ∞)` with unit steps for the next sign change of `f`.
/// Unit steps are safe because consecutive zeros of `J_ν` and `J_ν′` are
/// more than two apart.
fn next_zero(f: &impl Fn(f64) -> f64, from: f64) -> Result<f64> {
    let mut a = from + 1e-9;
    let mut fa = f(a);
    for _ in 0..100_000 {
        let b = a + 1.0;
        let fb = f(b);
        if fa.signum() != fb.signum() || fb == 0.0 {
            return bisect(f, a, b);
        }
        a = b;
        fa = fb;
    }
    Err(Error::Solver("Bessel zero scan did not terminate".into()))
}

/// Positive zeros `j_{ν,k}` for `ν = 0, 1, …` that are `≤ limit`, each
/// list extended by the first zero above `limit`. Orders stop at the first
/// `ν` whose first zero exceeds `limit`.
///
/// Zeros of `J_ν` are bracketed by the interlacing
/// `j_{ν−1,k} < j_{ν,k} < j_{ν−1,k+1}`.
pub fn bessel_zeros_up_to(limit: f64) -> Result<Vec<Vec<f64>>> {
    let mut all: Vec<Vec<f64>> = Vec::new();
    // order 0 by scanning
    let f0 = |x: f64| bessel_j(0, x);
    let mut zeros = Vec::new();
    let mut from = 0.0;
    loop {
        let z = next_zero(&f0, from)?;
        zeros.push(z);
        if z > limit {
            break;
        }
        from = z;
    }
    all.push(zeros);
    for nu in 1usize.. {
        let prev = &all[nu - 1];
        let f = move |x: f64| bessel_j(nu, x);
        let mut zeros: Vec<f64> = Vec::new();
        for k in 0..prev.len() {
            let z = if k + 1 < prev.len() {
                bisect(f, prev[k], prev[k + 1])?
            } else {
                next_zero(&f, prev[k])?
            };
            zeros.push(z);
            if z > limit {
                break;
            }
        }
        if *zeros.last().expect("nonempty") <= limit {
            let last = *zeros.last().expect("nonempty");
            loop {
                let z = next_zero(&f, last)?;
                zeros.push(z);
                if z > limit {
                    break;
                }
            }
        }
        let first = zeros[0];
        all.push(zeros);
        if first > limit {
            break;
        }
    }
    Ok(all)
}

/// Positive zeros of `J_ν′` up to `limit` for each order in `dirichlet`
/// (as returned by [`bessel_zeros_up_to`]), bracketed by
/// `ν ≤ j′_{ν,1} < j_{ν,1} < j′_{ν,2} < j_{ν,2} < …`. Order 0 lists only
/// the positive zeros; the zero frequency is added by the caller.
pub fn bessel_prime_zeros_up_to(dirichlet: &[Vec<f64>], limit: f64) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(dirichlet.len());
    for (nu, jz) in dirichlet.iter().enumerate() {
        let f = move |x: f64| bessel_j_prime(nu, x);
        let mut zeros = Vec::new();
        if nu == 0 {
            // J_0′ = −J_1: zeros are j_{1,k}
            if let Some(j1) = dirichlet.get(1) {
                zeros.extend(j1.iter().copied().filter(|z| *z <= limit));
            }
            out.push(zeros);
            continue;
        }
        let mut lo = nu as f64;
        for &hi in jz {
            if lo > limit {
                break;
            }
            let z = bisect(f, lo, hi)?;
            if z <= limit {
                zeros.push(z);
            }
            lo = hi;
        }
        out.push(zeros);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_argument_series() {
        // leading two series terms of J_0 and J_2
        let x = 1e-3;
        let q = x * x / 4.0;
        assert!((bessel_j(0, x) - (1.0 - q + q * q / 4.0)).abs() < 1e-16);
        assert!((bessel_j(2, x) / (q / 2.0) - (1.0 - q / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn known_values() {
        assert!((bessel_j(0, 1.0) - 0.7651976865579666).abs() < 1e-14);
        assert!((bessel_j(1, 10.0) - 0.0434727461688616).abs() < 1e-14);
        assert!((bessel_j(5, 7.5) - 0.28347390516255044).abs() < 1e-13);
    }

    #[test]
    fn first_zeros() {
        let z = bessel_zeros_up_to(6.0).unwrap();
        assert!((z[0][0] - 2.404825557695773).abs() < 1e-12);
        assert!((z[0][1] - 5.520078110286311).abs() < 1e-12);
        assert!((z[1][0] - 3.831705970207512).abs() < 1e-12);
        assert!((z[2][0] - 5.135622301840683).abs() < 1e-12);
        let p = bessel_prime_zeros_up_to(&z, 6.0).unwrap();
        assert!((p[1][0] - 1.841183781340659).abs() < 1e-12);
        assert!((p[2][0] - 3.054236928227140).abs() < 1e-12);
        assert!((p[0][0] - 3.831705970207512).abs() < 1e-12);
    }
}
