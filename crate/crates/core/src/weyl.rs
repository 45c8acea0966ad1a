//! Weyl coefficients, remainder curves, remainder-exponent fits and
//! short-interval counts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, DomainSpec};
use crate::scalar::Real;
use crate::spectral::counting_function;

/// Volume of the unit ball in `R^n`, by `ω_n = (2π/n) ω_{n−2}`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// `c0 = (2π)^{−n} ω_n |M|` and `c1 = ∓ ¼ (2π)^{1−n} ω_{n−1} |∂M|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeylCoefficients {
    pub n: usize,
    pub omega_n: f64,
    pub omega_n_minus_1: f64,
    pub c0: f64,
    pub c1: f64,
    /// Set for Robin conditions, where `c1` is reported with the Neumann
    /// sign: the Robin counting function lies between the other two.
    pub robin_caveat: bool,
}

pub fn weyl_coefficients<T: Real>(domain: &DomainSpec<T>, bc: BoundaryCondition<T>, n: usize) -> Result<WeylCoefficients> {
    if n == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let omega_n = unit_ball_volume(n);
    let omega_m = unit_ball_volume(n - 1);
    let c0 = two_pi.powi(-(n as i32)) * omega_n * domain.area.to_f64_lossy();
    let magnitude = 0.25 * two_pi.powi(1 - n as i32) * omega_m * domain.perimeter.to_f64_lossy();
    let (c1, robin_caveat) = match bc {
        BoundaryCondition::Dirichlet => (-magnitude, false),
        BoundaryCondition::Neumann => (magnitude, false),
        BoundaryCondition::Robin { .. } => (magnitude, true),
    };
    Ok(WeylCoefficients { n, omega_n, omega_n_minus_1: omega_m, c0, c1, robin_caveat })
}

/// `R1 = N − c0 λⁿ` and `R2 = R1 − c1 λ^{n−1}` on a `λ` grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderCurve {
    pub lambdas: Vec<f64>,
    pub counts: Vec<usize>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r1_norm: Vec<f64>,
    pub r2_norm: Vec<f64>,
    pub coefficients: WeylCoefficients,
}

/// Builds the curve; every `λ` must be at most `validity`.
pub fn remainder_curve<T: Real>(
    frequencies: &[T],
    coefficients: &WeylCoefficients,
    lambdas: &[f64],
    validity: f64,
) -> Result<RemainderCurve> {
    if let Some(bad) = lambdas.iter().find(|l| **l > validity || !(**l > 0.0)) {
        return Err(Error::Range(format!(
            "λ = {bad} is outside the validity range (0, {validity}] of this spectrum"
        )));
    }
    let n = coefficients.n as i32;
    let mut curve = RemainderCurve {
        lambdas: lambdas.to_vec(),
        counts: Vec::with_capacity(lambdas.len()),
        r1: Vec::with_capacity(lambdas.len()),
        r2: Vec::with_capacity(lambdas.len()),
        r1_norm: Vec::with_capacity(lambdas.len()),
        r2_norm: Vec::with_capacity(lambdas.len()),
        coefficients: *coefficients,
    };
    for &l in lambdas {
        let count = counting_function(frequencies, T::lit(l));
        let r1 = count as f64 - coefficients.c0 * l.powi(n);
        let r2 = r1 - coefficients.c1 * l.powi(n - 1);
        curve.counts.push(count);
        curve.r1.push(r1);
        curve.r2.push(r2);
        curve.r1_norm.push(r1 / l.powi(n - 1));
        curve.r2_norm.push(r2 / l.powi(n - 1));
    }
    Ok(curve)
}

impl RemainderCurve {
    /// CSV with columns `lambda,N,R1,R2,R1_norm,R2_norm`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,N,R1,R2,R1_norm,R2_norm\n");
        for i in 0..self.lambdas.len() {
            s.push_str(&format!(
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.lambdas[i], self.counts[i], self.r1[i], self.r2[i], self.r1_norm[i], self.r2_norm[i]
            ));
        }
        s
    }
}

/// Evenly spaced grid `lo, lo + step, …` up to `hi` inclusive.
pub fn lambda_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("bad λ grid [{lo}, {hi}] step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}

/// Result of a log-log slope fit on block-averaged magnitudes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub log_prefactor: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    /// `(block centre, mean |R|)` pairs entering the fit.
    pub blocks: Vec<(f64, f64)>,
}

/// Least-squares slope of `log ⟨|R|⟩` against `log λ`, where `⟨·⟩` is the
/// mean over half-octave blocks `[lo·2^{k/2}, lo·2^{(k+1)/2})` inside the
/// window. At least four blocks with nonzero mean are required.
pub fn fit_exponent(lambdas: &[f64], values: &[f64], window: (f64, f64)) -> Result<ExponentFit> {
    let (lo, hi) = window;
    if lambdas.len() != values.len() {
        return Err(Error::invalid("λ grid and values differ in length"));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid(format!("degenerate window [{lo}, {hi}]")));
    }
    let nblocks = (2.0 * (hi / lo).log2() + 1e-9).floor() as usize;
    let mut blocks = Vec::new();
    for b in 0..nblocks {
        let a = lo * 2f64.powf(b as f64 / 2.0);
        let c = lo * 2f64.powf((b + 1) as f64 / 2.0);
        let last = b + 1 == nblocks;
        let inside: Vec<f64> = lambdas
            .iter()
            .zip(values)
            .filter(|(l, _)| **l >= a && (**l < c || (last && **l <= c)))
            .map(|(_, v)| v.abs())
            .collect();
        if inside.is_empty() {
            continue;
        }
        let mean = inside.iter().sum::<f64>() / inside.len() as f64;
        if mean > 0.0 {
            blocks.push(((a * c).sqrt(), mean));
        }
    }
    if blocks.len() < 4 {
        return Err(Error::invalid(format!(
            "window [{lo}, {hi}] yields {} usable half-octave blocks; at least 4 are needed",
            blocks.len()
        )));
    }
    let xs: Vec<f64> = blocks.iter().map(|b| b.0.ln()).collect();
    let ys: Vec<f64> = blocks.iter().map(|b| b.1.ln()).collect();
    let (slope, intercept, rms) = least_squares(&xs, &ys);
    Ok(ExponentFit { exponent: slope, log_prefactor: intercept, residual: rms, blocks })
}

/// Which remainder a fit runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Remainder {
    R1,
    R2,
}

pub fn fit_remainder_exponent(curve: &RemainderCurve, which: Remainder, window: (f64, f64)) -> Result<ExponentFit> {
    let values = match which {
        Remainder::R1 => &curve.r1,
        Remainder::R2 => &curve.r2,
    };
    fit_exponent(&curve.lambdas, values, window)
}

pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    (slope, intercept, rms)
}

/// `#{k : τ_k ∈ [λ, λ + ε]}`.
pub fn short_interval_count<T: Real>(frequencies: &[T], lambda: T, eps: T) -> usize {
    let below = frequencies.partition_point(|f| *f < lambda);
    counting_function(frequencies, lambda + eps) - below
}

/// Maximum of the short-interval ratio over a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShortIntervalSweep {
    pub epsilon: f64,
    pub max_ratio: f64,
    pub argmax: f64,
    pub count_at_max: usize,
}

/// `max_{λ ∈ [a, b]} #{τ_k ∈ [λ, λ+ε]} / (ε λ^{n−1} + λ^{n−3/2})`.
///
/// The count is piecewise constant and the denominator increasing, so the
/// maximum sits at `a` or where `λ + ε` reaches a frequency; only those
/// candidates are evaluated.
pub fn short_interval_sweep<T: Real>(frequencies: &[T], range: (f64, f64), eps: f64, n: usize) -> Result<ShortIntervalSweep> {
    let (a, b) = range;
    if !(eps > 0.0) || !(b >= a) || !(a > 0.0) {
        return Err(Error::invalid("short-interval sweep needs ε > 0 and 0 < a ≤ b"));
    }
    let bound = |l: f64| eps * l.powi(n as i32 - 1) + l.powf(n as f64 - 1.5);
    let mut best = ShortIntervalSweep { epsilon: eps, max_ratio: f64::NEG_INFINITY, argmax: a, count_at_max: 0 };
    let mut consider = |l: f64| {
        let c = short_interval_count(frequencies, T::lit(l), T::lit(eps));
        let r = c as f64 / bound(l);
        if r > best.max_ratio {
            best = ShortIntervalSweep { epsilon: eps, max_ratio: r, argmax: l, count_at_max: c };
        }
    };
    consider(a);
    for f in frequencies {
        let l = f.to_f64_lossy() - eps;
        if l > a && l <= b {
            consider(l);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{exact_disk_spectrum, exact_rectangle_spectrum};

    #[test]
    fn ball_volumes() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn coefficient_examples() {
        let pi = std::f64::consts::PI;
        let sq = DomainSpec::<f64>::unit_square();
        let d = weyl_coefficients(&sq, BoundaryCondition::Dirichlet, 2).unwrap();
        assert!((d.c0 - 1.0 / (4.0 * pi)).abs() < 1e-15);
        assert!((d.c1 + 1.0 / pi).abs() < 1e-15);
        let n = weyl_coefficients(&sq, BoundaryCondition::Neumann, 2).unwrap();
        assert!((n.c1 - 1.0 / pi).abs() < 1e-15);
        let disk = DomainSpec::disk(1.0).unwrap();
        let d = weyl_coefficients(&disk, BoundaryCondition::Dirichlet, 2).unwrap();
        assert!((d.c0 - 0.25).abs() < 1e-15);
        assert!((d.c1 + 0.5).abs() < 1e-15);
        let r = weyl_coefficients(&sq, BoundaryCondition::Robin { sigma: 1.0 }, 2).unwrap();
        assert!(r.robin_caveat && r.c1 > 0.0);
    }

    #[test]
    fn remainder_examples() {
        let pi = std::f64::consts::PI;
        let sq = DomainSpec::<f64>::unit_square();
        let c = weyl_coefficients(&sq, BoundaryCondition::Dirichlet, 2).unwrap();
        let s = exact_rectangle_spectrum(1.0, 1.0, BoundaryCondition::Dirichlet, 25.0).unwrap();
        let curve = remainder_curve(&s.frequencies, &c, &[20.0], 25.0).unwrap();
        let r1 = 26.0 - 400.0 / (4.0 * pi);
        assert!((curve.r1[0] - r1).abs() < 1e-12);
        assert!((curve.r1[0] + 5.83).abs() < 0.01);
        assert!((curve.r2[0] - (r1 + 20.0 / pi)).abs() < 1e-12);
        assert!((curve.r2[0] - 0.53).abs() < 0.01);
        let empty = remainder_curve::<f64>(&[], &c, &[3.0], 25.0).unwrap();
        assert_eq!(empty.r1[0], -c.c0 * 9.0);
        assert!(remainder_curve(&s.frequencies, &c, &[30.0], 25.0).is_err());
    }

    #[test]
    fn synthetic_exponent() {
        let lambdas = lambda_grid(50.0, 400.0, 0.5).unwrap();
        let fit = fit_exponent(&lambdas, &lambdas, (50.0, 400.0)).unwrap();
        assert!((fit.exponent - 1.0).abs() < 0.01);
        assert_eq!(fit.blocks.len(), 6);
        assert!(fit_exponent(&lambdas, &lambdas, (50.0, 60.0)).is_err());
    }

    #[test]
    fn short_interval_examples() {
        let s = exact_rectangle_spectrum(1.0f64, 1.0, BoundaryCondition::Dirichlet, 30.0).unwrap();
        let ground = std::f64::consts::PI * 2f64.sqrt();
        assert_eq!(short_interval_count(&s.frequencies, ground - 0.01, 0.02), 1);
        // π√10 has multiplicity 2 (m,k) = (1,3), (3,1)
        let double = std::f64::consts::PI * 10f64.sqrt();
        let exact = s.frequencies.iter().copied().find(|f| (f - double).abs() < 1e-12).unwrap();
        assert_eq!(short_interval_count(&s.frequencies, exact, 0.0), 2);
    }

    #[test]
    fn neumann_counts_dominate_dirichlet() {
        let d = exact_rectangle_spectrum(1.0f64, 2.0, BoundaryCondition::Dirichlet, 60.0).unwrap();
        let n = exact_rectangle_spectrum(1.0f64, 2.0, BoundaryCondition::Neumann, 60.0).unwrap();
        for l in lambda_grid(0.5, 60.0, 0.25).unwrap() {
            assert!(n.count(l) >= d.count(l));
        }
        let dd = exact_disk_spectrum(1.0f64, BoundaryCondition::Dirichlet, 40.0).unwrap();
        let dn = exact_disk_spectrum(1.0f64, BoundaryCondition::Neumann, 40.0).unwrap();
        for l in lambda_grid(0.5, 40.0, 0.25).unwrap() {
            assert!(dn.count(l) >= dd.count(l));
        }
    }
}
