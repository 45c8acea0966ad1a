//! The mollified spectral indicator `\tilde1_λ`, the window `\tildeχ_λ`,
//! and the Littlewood–Paley symbols built from them.
//!
//! These are scalar oracles with tolerances near 1e-6 and below, so they are
//! written in `f64` only.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::scalar::KahanSum;

const GL_ORDER: usize = 16;

fn gl16() -> &'static GaussLegendre<f64> {
    static RULE: OnceLock<GaussLegendre<f64>> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(GL_ORDER))
}

fn bump_exp(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// Smooth step from 1 at `u ≤ 0` down to 0 at `u ≥ 1`:
/// `g(u) = f(1−u) / (f(u) + f(1−u))`, `f(u) = e^{−1/u}`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    if u >= 1.0 {
        return 0.0;
    }
    let a = bump_exp(1.0 - u);
    a / (bump_exp(u) + a)
}

/// The cutoff `ρ`: 1 on `[−1/2, 1/2]`, 0 outside `(−1, 1)`.
pub fn rho(t: f64) -> f64 {
    let a = t.abs();
    if a <= 0.5 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        smooth_step(2.0 * a - 1.0)
    }
}

/// The window bump `χ(s) = e·exp(−1/(1−s²))`, peak 1 at the origin.
pub fn chi(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Precomputed nodes `(t_i, w_i·f(t_i))` for the cosine transform of a
/// profile on a fixed interval.
struct CosineTransform {
    nodes: Vec<(f64, f64)>,
}

impl CosineTransform {
    fn new(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> Self {
        let rule = gl16();
        let width = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * GL_ORDER);
        for p in 0..panels {
            let lo = a + width * p as f64;
            for (t, w) in rule.mapped(lo, lo + width) {
                nodes.push((t, w * f(t)));
            }
        }
        Self { nodes }
    }

    fn eval(&self, xi: f64) -> f64 {
        self.nodes.iter().map(|(t, wf)| wf * (xi * t).cos()).collect::<KahanSum<f64>>().total()
    }
}

/// Beyond this frequency `ρ̂` and `χ̂` are below 1e-14 and are treated as
/// zero.
const XI_MAX: usize = 1024;

/// `ρ̂(ξ) = 2∫_0^1 ρ(t) cos(ξt) dt`, with the plateau part in closed form.
fn rho_hat(xi: f64) -> f64 {
    static SLOPE: OnceLock<CosineTransform> = OnceLock::new();
    // phase per panel at ξ = XI_MAX stays below 6
    let slope = SLOPE.get_or_init(|| CosineTransform::new(rho, 0.5, 1.0, 96));
    let plateau = if xi.abs() < 1e-8 { 1.0 } else { 2.0 * (0.5 * xi).sin() / xi };
    plateau + 2.0 * slope.eval(xi)
}

fn chi_hat(xi: f64) -> f64 {
    static CHI: OnceLock<CosineTransform> = OnceLock::new();
    let t = CHI.get_or_init(|| CosineTransform::new(chi, 0.0, 1.0, 192));
    2.0 * t.eval(xi)
}

/// `Φ(x) = ∫_0^x ρ̂(ξ)/(2π) dξ` at the integers `0..=XI_MAX`.
fn phi_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let increments: Vec<f64> = (0..XI_MAX)
            .into_par_iter()
            .map(|i| gl16().integrate(rho_hat, i as f64, (i + 1) as f64) / (2.0 * PI))
            .collect();
        let mut table = Vec::with_capacity(XI_MAX + 1);
        let mut acc = KahanSum::new();
        table.push(0.0);
        for inc in increments {
            acc.add(inc);
            table.push(acc.total());
        }
        table
    })
}

/// Antiderivative of the unit-scale kernel `ρ̂/(2π)`; odd, tends to 1/2.
pub fn kernel_antiderivative(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax >= XI_MAX as f64 {
        0.5
    } else {
        let i = ax.floor() as usize;
        let table = phi_table();
        table[i] + gl16().integrate(rho_hat, i as f64, ax) / (2.0 * PI)
    };
    v.copysign(x)
}

/// `K(x) = ρ̂(x)/(2π)`, the mollifying kernel at scale 1.
pub fn mollifier_kernel(x: f64) -> f64 {
    if x.abs() >= XI_MAX as f64 {
        0.0
    } else {
        rho_hat(x) / (2.0 * PI)
    }
}

/// Size of the kernel at the table cutoff; the error of treating the tail
/// as zero.
pub fn kernel_tail_estimate() -> f64 {
    let lo = XI_MAX as f64 - 32.0;
    (0..=64).map(|k| rho_hat(lo + 0.5 * k as f64).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MollifierSpec {
    pub epsilon: f64,
    /// Gauss–Legendre nodes per panel for the oscillatory route.
    pub nodes: usize,
}

impl MollifierSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::invalid(format!("ε must lie in (0, 1], got {epsilon}")));
        }
        Ok(Self { epsilon, nodes: GL_ORDER })
    }

    /// Cutoff of the `t`-integral: the support of `ρ(εt)`.
    pub fn cutoff(&self) -> f64 {
        1.0 / self.epsilon
    }
}

/// `1_λ(τ)`: the indicator of `[−λ, λ]`.
pub fn indicator(lambda: f64, tau: f64) -> f64 {
    if tau.abs() <= lambda {
        1.0
    } else {
        0.0
    }
}

fn check_args(spec: &MollifierSpec, lambda: f64, tau: f64) -> Result<()> {
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("λ must be ≥ 1, got {lambda}")));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("τ must be ≥ 0, got {tau}")));
    }
    MollifierSpec::new(spec.epsilon).map(|_| ())
}

/// Panels over `[0, 1/ε]` for `ρ(εt)·f(t)`: width `π/(λ+τ+1)`, and on the
/// transition `[1/(2ε), 1/ε]` also at most `1/(64ε)`.
fn oscillatory_integral(spec: &MollifierSpec, lambda: f64, tau: f64, f: impl Fn(f64) -> f64) -> f64 {
    let eps = spec.epsilon;
    let rule = if spec.nodes == GL_ORDER { gl16().clone() } else { GaussLegendre::new(spec.nodes.max(2)) };
    let width = PI / (lambda + tau + 1.0);
    let mut acc = KahanSum::new();
    let mut run = |a: f64, b: f64, w: f64, weighted: bool| {
        let panels = ((b - a) / w).ceil().max(1.0) as usize;
        let step = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + step * p as f64;
            let hi = if p + 1 == panels { b } else { lo + step };
            for (t, wt) in rule.mapped(lo, hi) {
                let r = if weighted { rho(eps * t) } else { 1.0 };
                acc.add(wt * r * f(t));
            }
        }
    };
    let half = 0.5 / eps;
    run(0.0, half, width, false);
    run(half, 2.0 * half, width.min(1.0 / (64.0 * eps)), true);
    acc.total()
}

/// Route 1: `(2/π)∫_0^{1/ε} ρ(εt) (sin λt / t) cos τt dt` by panel
/// Gauss–Legendre quadrature.
pub fn indicator_by_quadrature(spec: &MollifierSpec, lambda: f64, tau: f64) -> Result<f64> {
    check_args(spec, lambda, tau)?;
    let v = oscillatory_integral(spec, lambda, tau, |t| (lambda * t).sin() / t * (tau * t).cos());
    Ok(2.0 / PI * v)
}

/// Route 2: `(1_{[−λ,λ]} ∗ K_ε)(τ) = Φ((τ+λ)/ε) − Φ((τ−λ)/ε)`, with `Φ`
/// the tabulated antiderivative of the kernel.
pub fn indicator_by_convolution(spec: &MollifierSpec, lambda: f64, tau: f64) -> Result<f64> {
    check_args(spec, lambda, tau)?;
    Ok(convolution_unchecked(spec.epsilon, lambda, tau))
}

fn convolution_unchecked(eps: f64, lambda: f64, tau: f64) -> f64 {
    kernel_antiderivative((tau + lambda) / eps) - kernel_antiderivative((tau - lambda) / eps)
}

fn convolution_derivative_unchecked(eps: f64, lambda: f64, tau: f64) -> f64 {
    (mollifier_kernel((tau + lambda) / eps) - mollifier_kernel((tau - lambda) / eps)) / eps
}

/// Largest allowed disagreement between the two routes.
pub const ROUTE_TOLERANCE: f64 = 1e-6;

/// `\tilde1_λ(τ)` by both routes; fails if they disagree by more than
/// [`ROUTE_TOLERANCE`]. Returns the convolution value.
pub fn smoothed_indicator(spec: &MollifierSpec, lambda: f64, tau: f64) -> Result<f64> {
    let (value, gap) = smoothed_indicator_checked(spec, lambda, tau)?;
    if !(gap <= ROUTE_TOLERANCE) {
        return Err(Error::Accuracy(format!(
            "smoothed indicator routes disagree by {gap:e} at λ={lambda}, ε={}, τ={tau}",
            spec.epsilon
        )));
    }
    Ok(value)
}

/// Convolution value and the absolute gap to the quadrature route.
pub fn smoothed_indicator_checked(spec: &MollifierSpec, lambda: f64, tau: f64) -> Result<(f64, f64)> {
    let b = indicator_by_convolution(spec, lambda, tau)?;
    let a = indicator_by_quadrature(spec, lambda, tau)?;
    Ok((b, (a - b).abs()))
}

/// `∂_τ \tilde1_λ(τ) = (K((τ+λ)/ε) − K((τ−λ)/ε))/ε`.
pub fn smoothed_indicator_derivative(spec: &MollifierSpec, lambda: f64, tau: f64) -> Result<f64> {
    check_args(spec, lambda, tau)?;
    Ok(convolution_derivative_unchecked(spec.epsilon, lambda, tau))
}

/// `−(2/π)∫_0^{1/ε} ρ(εt) sin λt sin τt dt`, the derivative by quadrature.
pub fn smoothed_indicator_derivative_by_quadrature(spec: &MollifierSpec, lambda: f64, tau: f64) -> Result<f64> {
    check_args(spec, lambda, tau)?;
    let v = oscillatory_integral(spec, lambda, tau, |t| (lambda * t).sin() * (tau * t).sin());
    Ok(-2.0 / PI * v)
}

/// CSV with columns `tau,smoothed,indicator,difference`.
pub fn indicator_csv(spec: &MollifierSpec, lambda: f64, taus: &[f64]) -> Result<String> {
    let mut s = String::from("tau,smoothed,indicator,difference\n");
    for &tau in taus {
        let v = indicator_by_convolution(spec, lambda, tau)?;
        let one = indicator(lambda, tau);
        s.push_str(&format!("{tau:.16e},{v:.16e},{one:.16e},{:.16e}\n", one - v));
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DoublingRatio {
    /// Distances `kε` and `2kε` from λ.
    pub k: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayCheck {
    pub n: u32,
    /// Smallest `C_N` with `|1_λ − \tilde1_λ| ≤ C_N (1+|λ−τ|/ε)^{−N}` on the grid.
    pub constant: f64,
    /// Same for `ε|∂_τ \tilde1_λ|`, derivative by central differences.
    pub derivative_constant: f64,
    pub doubling: Vec<DoublingRatio>,
    /// Every doubling ratio is at least `2^{N−1}`.
    pub doubling_ok: bool,
    pub samples: usize,
}

/// `sup |1_λ(τ) − approx(τ)|·(1+|λ−τ|/ε)^N` over `taus`.
pub fn decay_constant(lambda: f64, eps: f64, n: u32, taus: &[f64], approx: impl Fn(f64) -> f64 + Sync) -> f64 {
    taus.par_iter()
        .map(|&tau| {
            let w = (1.0 + (lambda - tau).abs() / eps).powi(n as i32);
            (indicator(lambda, tau) - approx(tau)).abs() * w
        })
        .reduce(|| 0.0, f64::max)
}

/// Sample points for the decay check: `|λ−τ|` in steps of `ε/8` out to
/// `20ε`, then uniformly out to `λ/2`, restricted to `τ ≥ 1`.
pub fn decay_grid(lambda: f64, eps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..=160 {
        let d = eps * k as f64 / 8.0;
        out.push(lambda - d);
        if k > 0 {
            out.push(lambda + d);
        }
    }
    let far = 0.5 * lambda;
    if far > 20.0 * eps {
        let m = 200;
        for k in 0..=m {
            let d = 20.0 * eps + (far - 20.0 * eps) * k as f64 / m as f64;
            out.push(lambda - d);
            out.push(lambda + d);
        }
    }
    out.retain(|t| *t >= 1.0);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Fits the rapid-decay constants of `\tilde1_λ` and of its first
/// derivative, and measures how the error shrinks when the distance from
/// λ doubles.
pub fn check_indicator_decay(spec: &MollifierSpec, lambda: f64, n: u32, taus: &[f64]) -> Result<DecayCheck> {
    if n != 2 && n != 4 {
        return Err(Error::invalid(format!("decay order N must be 2 or 4, got {n}")));
    }
    check_args(spec, lambda, 0.0)?;
    if taus.is_empty() || taus.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::invalid("decay grid must be nonempty with τ ≥ 0"));
    }
    let eps = spec.epsilon;
    let constant = decay_constant(lambda, eps, n, taus, |tau| convolution_unchecked(eps, lambda, tau));
    let step = eps / 10.0;
    let derivative_constant = taus
        .par_iter()
        .map(|&tau| {
            let d = (convolution_unchecked(eps, lambda, tau + step) - convolution_unchecked(eps, lambda, tau - step))
                / (2.0 * step);
            eps * d.abs() * (1.0 + (lambda - tau).abs() / eps).powi(n as i32)
        })
        .reduce(|| 0.0, f64::max);
    if !constant.is_finite() || !derivative_constant.is_finite() {
        return Err(Error::FitFailure(format!("decay constant is not finite at λ={lambda}, ε={eps}")));
    }
    let err_at = |d: f64| {
        let e = |tau: f64| (indicator(lambda, tau) - convolution_unchecked(eps, lambda, tau)).abs();
        let below = if lambda - d >= 0.0 { e(lambda - d) } else { 0.0 };
        below.max(e(lambda + d))
    };
    let doubling: Vec<DoublingRatio> = [2.0, 4.0, 5.0, 8.0]
        .iter()
        .map(|&k| {
            let near = err_at(k * eps);
            let far = err_at(2.0 * k * eps);
            let ratio = if far == 0.0 { f64::INFINITY } else { near / far };
            DoublingRatio { k, ratio }
        })
        .collect();
    let target = 2f64.powi(n as i32 - 1);
    let doubling_ok = doubling.iter().all(|r| r.ratio >= target);
    Ok(DecayCheck { n, constant, derivative_constant, doubling, doubling_ok, samples: taus.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WindowSpec {
    pub epsilon: f64,
}

impl WindowSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        MollifierSpec::new(epsilon)?;
        Ok(Self { epsilon })
    }
}

/// `\tildeχ_λ(τ) = χ((λ−τ)/ε)`.
pub fn window(spec: &WindowSpec, lambda: f64, tau: f64) -> f64 {
    chi((lambda - tau) / spec.epsilon)
}

/// `∂_τ \tildeχ_λ(τ) = −χ′((λ−τ)/ε)/ε`.
pub fn window_derivative(spec: &WindowSpec, lambda: f64, tau: f64) -> f64 {
    let s = (lambda - tau) / spec.epsilon;
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - s * s;
    let dchi = chi(s) * (-2.0 * s / (q * q));
    -dchi / spec.epsilon
}

/// `(1/π)∫ ε χ̂(εt) e^{itλ} cos tτ dt`, which equals
/// `χ((λ−τ)/ε) + χ((λ+τ)/ε)`, evaluated by quadrature.
pub fn window_by_transform(spec: &WindowSpec, lambda: f64, tau: f64) -> f64 {
    let a = (lambda - tau) / spec.epsilon;
    let b = (lambda + tau) / spec.epsilon;
    let width = (6.0 / (a.abs().max(b.abs()) + 1.0)).min(1.0);
    let panels = (XI_MAX as f64 / width).ceil() as usize;
    let v: f64 = (0..panels)
        .into_par_iter()
        .map(|p| {
            let lo = p as f64 * width;
            gl16().integrate(|xi| chi_hat(xi) * ((xi * a).cos() + (xi * b).cos()), lo, lo + width)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<KahanSum<f64>>()
        .total();
    v / PI
}

/// `Ψ(s) = g(2 − 2s)`: 0 for `s ≤ 1/2`, 1 for `s ≥ 1`.
fn psi(s: f64) -> f64 {
    smooth_step(2.0 - 2.0 * s)
}

/// `β(s) = Ψ(s) − Ψ(s/2)`, supported in `(1/2, 2)`; the sum over dyadic
/// dilates telescopes.
pub fn beta(s: f64) -> f64 {
    if s <= 0.5 || s >= 2.0 {
        return 0.0;
    }
    psi(s) - psi(0.5 * s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BandSign {
    Minus,
    Plus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DyadicDecomposition {
    pub mollifier: MollifierSpec,
    /// Largest integer with `2^{ℓ0} ≤ ε`.
    pub ell0: i32,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionValues {
    /// `(ℓ, β(2^{−ℓ}s))` for `|ℓ| ≤ L`.
    pub values: Vec<(i32, f64)>,
    pub sum: f64,
    /// The partial sum reaches 1 within 1e-12.
    pub covered: bool,
}

impl DyadicDecomposition {
    pub fn new(mollifier: MollifierSpec) -> Self {
        let eps = mollifier.epsilon;
        let mut l = eps.log2().floor() as i32;
        while 2f64.powi(l + 1) <= eps {
            l += 1;
        }
        while 2f64.powi(l) > eps {
            l -= 1;
        }
        Self { mollifier, ell0: l }
    }

    pub fn epsilon(&self) -> f64 {
        self.mollifier.epsilon
    }

    /// `β0(s) = Σ_{ℓ≤ℓ0} β(2^{−ℓ}|s|) = 1 − Ψ(2^{−ℓ0−1}|s|)`.
    pub fn beta0(&self, s: f64) -> f64 {
        1.0 - psi(2f64.powi(-self.ell0 - 1) * s.abs())
    }

    /// `\tildeβ(s) = β(|s|)/s`.
    pub fn beta_tilde(s: f64) -> f64 {
        let b = beta(s.abs());
        if b == 0.0 {
            0.0
        } else {
            b / s
        }
    }

    pub fn dyadic_partition(&self, s: f64, big_l: u32) -> Result<PartitionValues> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("dyadic partition needs s > 0, got {s}")));
        }
        let l = big_l as i32;
        let values: Vec<(i32, f64)> = (-l..=l).map(|k| (k, beta(2f64.powi(-k) * s))).collect();
        let sum = values.iter().map(|v| v.1).sum::<f64>();
        Ok(PartitionValues { values, sum, covered: (sum - 1.0).abs() <= 1e-12 })
    }

    /// `I^−_{ℓ,ν} = (λ−(ν+1)2^ℓ, λ−ν2^ℓ]`, `I^+_{ℓ,ν} = (λ+ν2^ℓ, λ+(ν+1)2^ℓ]`,
    /// as `(left, right)`.
    pub fn band(lambda: f64, ell: i32, nu: u32, sign: BandSign) -> (f64, f64) {
        let w = 2f64.powi(ell);
        let nu = nu as f64;
        match sign {
            BandSign::Minus => (lambda - (nu + 1.0) * w, lambda - nu * w),
            BandSign::Plus => (lambda + nu * w, lambda + (nu + 1.0) * w),
        }
    }

    /// Left endpoint `τ^±_{ℓ,ν}`.
    pub fn left_endpoint(lambda: f64, ell: i32, nu: u32, sign: BandSign) -> f64 {
        Self::band(lambda, ell, nu, sign).0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LpSymbols {
    pub m0: f64,
    /// `m_ℓ^−` or `m_ℓ^+` according to the requested sign.
    pub m: f64,
    pub r: f64,
}

fn r_symbol(ell: i32, lj: f64, tau: f64) -> f64 {
    let scale = 2f64.powi(-ell);
    scale * DyadicDecomposition::beta_tilde(scale * (lj - tau)) / (lj + tau)
}

fn m0_symbol(d: &DyadicDecomposition, lambda: f64, lj: f64, tau: f64, tilde_lj: f64, tilde_tau: f64) -> f64 {
    let eps = d.epsilon();
    let diff = lj - tau;
    let b0 = d.beta0(diff);
    if b0 == 0.0 {
        return 0.0;
    }
    let q = if diff.abs() > 1e-7 * tau.max(1.0) {
        (tilde_lj - tilde_tau) / diff
    } else {
        // removable singularity: the derivative at the midpoint
        convolution_derivative_unchecked(eps, lambda, 0.5 * (lj + tau))
    };
    q * b0 / (lj + tau)
}

fn m_symbol(sign: BandSign, ell: i32, lj: f64, tau: f64, tilde_lj: f64) -> f64 {
    let r = r_symbol(ell, lj, tau);
    match sign {
        BandSign::Minus => r * (tilde_lj - 1.0),
        BandSign::Plus => r * tilde_lj,
    }
}

/// The symbols `m0`, `m_ℓ^±`, `R_ℓ` at `(λ_j, τ)`. `\tilde1_λ` is taken from
/// the convolution route.
pub fn lp_symbols(
    d: &DyadicDecomposition,
    lambda: f64,
    lj: f64,
    tau: f64,
    ell: i32,
    sign: BandSign,
) -> Result<LpSymbols> {
    check_args(&d.mollifier, lambda, tau)?;
    if !(tau >= 0.5 * lambda && tau <= 10.0 * lambda) {
        return Err(Error::Range(format!("τ = {tau} outside [λ/2, 10λ] for λ = {lambda}")));
    }
    if !(lj >= 0.0 && lj <= 10.0 * lambda) {
        return Err(Error::Range(format!("λ_j = {lj} outside [0, 10λ] for λ = {lambda}")));
    }
    if ell <= d.ell0 || 2f64.powi(ell) > 20.0 * lambda {
        return Err(Error::Range(format!("dyadic scale 2^{ell} outside (ε, 20λ]")));
    }
    let tilde_lj = convolution_unchecked(d.epsilon(), lambda, lj);
    Ok(LpSymbols {
        m0: m0_symbol(d, lambda, lj, tau, tilde_lj, convolution_unchecked(d.epsilon(), lambda, tau)),
        m: m_symbol(sign, ell, lj, tau, tilde_lj),
        r: r_symbol(ell, lj, tau),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SymbolCertificate {
    pub ell: i32,
    pub nu: u32,
    pub sign: BandSign,
    pub n: u32,
    pub tau_samples: usize,
    /// `sup (|m_ℓ^±| + 2^ℓ|∂_τ m_ℓ^±|)·2^ℓ λ (1+ν)^N` over band `(ℓ, ν)`.
    pub c_m: f64,
    /// `sup (|R_ℓ| + |∂_τ R_ℓ|)·2^ℓ λ` over the same band.
    pub c_r: f64,
    /// `sup (|m0| + ε|∂_τ m0|)·ε λ (1+ν)^N` over band `(ℓ0, ν)`.
    pub c_m0: f64,
}

fn band_taus(lambda: f64, ell: i32, nu: u32, sign: BandSign, samples: usize) -> Vec<f64> {
    let (lo, hi) = DyadicDecomposition::band(lambda, ell, nu, sign);
    (1..=samples)
        .map(|i| lo + (hi - lo) * i as f64 / samples as f64)
        .filter(|t| *t >= 0.5 * lambda && *t <= 10.0 * lambda)
        .collect()
}

/// `λ_j` grid covering every point where the symbols on `taus` are nonzero.
fn lj_grid(lambda: f64, taus: &[f64], reach: f64, spacing: f64) -> Vec<f64> {
    let lo = (taus[0] - reach).max(0.0);
    let hi = (taus[taus.len() - 1] + reach).min(10.0 * lambda);
    let m = ((hi - lo) / spacing).ceil().max(1.0) as usize;
    (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect()
}

/// Certifies the symbol bounds on band `(ℓ, ν)` by sweeping `τ` over
/// `tau_samples` points of the band and `λ_j` over a grid of spacing
/// `min(ε, 2^ℓ)/8`. Derivatives by central differences at step
/// `min(ε, 2^ℓ)/10`.
pub fn certify_symbol_constants(
    d: &DyadicDecomposition,
    lambda: f64,
    ell: i32,
    nu: u32,
    sign: BandSign,
    n: u32,
    tau_samples: usize,
) -> Result<SymbolCertificate> {
    check_args(&d.mollifier, lambda, lambda)?;
    if ell <= d.ell0 || 2f64.powi(ell) > 20.0 * lambda {
        return Err(Error::Range(format!("dyadic scale 2^{ell} outside (ε, 20λ]")));
    }
    if tau_samples == 0 {
        return Err(Error::invalid("need at least one τ sample"));
    }
    let eps = d.epsilon();
    let w = 2f64.powi(ell);
    let nu_w = (1.0 + nu as f64).powi(n as i32);

    let taus = band_taus(lambda, ell, nu, sign, tau_samples);
    if taus.is_empty() {
        return Err(Error::Range(format!("band (ℓ={ell}, ν={nu}) misses [λ/2, 10λ]")));
    }
    let step = eps.min(w) / 10.0;
    let ljs = lj_grid(lambda, &taus, 2.0 * w + step, eps.min(w) / 8.0);
    let tildes: Vec<f64> = ljs.par_iter().map(|&lj| convolution_unchecked(eps, lambda, lj)).collect();
    let (c_m, c_r) = taus
        .par_iter()
        .map(|&tau| {
            let mut cm = 0.0f64;
            let mut cr = 0.0f64;
            for (&lj, &tl) in ljs.iter().zip(&tildes) {
                let m = m_symbol(sign, ell, lj, tau, tl);
                let dm = (m_symbol(sign, ell, lj, tau + step, tl) - m_symbol(sign, ell, lj, tau - step, tl)) / (2.0 * step);
                cm = cm.max((m.abs() + w * dm.abs()) * w * lambda * nu_w);
                let r = r_symbol(ell, lj, tau);
                let dr = (r_symbol(ell, lj, tau + step) - r_symbol(ell, lj, tau - step)) / (2.0 * step);
                cr = cr.max((r.abs() + dr.abs()) * w * lambda);
            }
            (cm, cr)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));

    let taus0 = band_taus(lambda, d.ell0, nu, sign, tau_samples);
    let c_m0 = if taus0.is_empty() {
        0.0
    } else {
        let step0 = eps / 10.0;
        let ljs0 = lj_grid(lambda, &taus0, 2f64.powi(d.ell0 + 1) + step0, eps / 8.0);
        let tildes0: Vec<f64> = ljs0.par_iter().map(|&lj| convolution_unchecked(eps, lambda, lj)).collect();
        taus0
            .par_iter()
            .map(|&tau| {
                let at = |t: f64| convolution_unchecked(eps, lambda, t);
                let (t0, tp, tm) = (at(tau), at(tau + step0), at(tau - step0));
                let mut c = 0.0f64;
                for (&lj, &tl) in ljs0.iter().zip(&tildes0) {
                    let m = m0_symbol(d, lambda, lj, tau, tl, t0);
                    let dm = (m0_symbol(d, lambda, lj, tau + step0, tl, tp) - m0_symbol(d, lambda, lj, tau - step0, tl, tm))
                        / (2.0 * step0);
                    c = c.max((m.abs() + eps * dm.abs()) * eps * lambda * nu_w);
                }
                c
            })
            .reduce(|| 0.0, f64::max)
    };
    for c in [c_m, c_r, c_m0] {
        if !c.is_finite() {
            return Err(Error::FitFailure("symbol constant is not finite".into()));
        }
    }
    Ok(SymbolCertificate { ell, nu, sign, n, tau_samples: taus.len(), c_m, c_r, c_m0 })
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementCheck {
    pub coarse: SymbolCertificate,
    pub fine: SymbolCertificate,
    /// Largest relative change of the three constants.
    pub relative_change: f64,
}

/// Runs [`certify_symbol_constants`] at `tau_samples` and at twice that.
pub fn certify_with_refinement(
    d: &DyadicDecomposition,
    lambda: f64,
    ell: i32,
    nu: u32,
    sign: BandSign,
    n: u32,
    tau_samples: usize,
) -> Result<RefinementCheck> {
    let coarse = certify_symbol_constants(d, lambda, ell, nu, sign, n, tau_samples)?;
    let fine = certify_symbol_constants(d, lambda, ell, nu, sign, n, 2 * tau_samples)?;
    let rel = |a: f64, b: f64| if a.max(b) == 0.0 { 0.0 } else { (a - b).abs() / a.max(b) };
    let relative_change = rel(coarse.c_m, fine.c_m).max(rel(coarse.c_r, fine.c_r)).max(rel(coarse.c_m0, fine.c_m0));
    Ok(RefinementCheck { coarse, fine, relative_change })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoffs_have_the_stated_shape() {
        assert_eq!(rho(0.5), 1.0);
        assert_eq!(rho(-0.3), 1.0);
        assert_eq!(rho(1.0), 0.0);
        assert_eq!(rho(0.7), rho(-0.7));
        assert!((0..100).all(|k| (0.0..=1.0).contains(&rho(0.5 + k as f64 / 200.0))));
        // g(u) + g(1−u) = 1
        for u in [0.1, 0.3, 0.5] {
            assert!((smooth_step(u) + smooth_step(1.0 - u) - 1.0).abs() < 1e-15);
        }
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(chi(1.0), 0.0);
    }

    #[test]
    fn kernel_has_unit_mass_and_negligible_tail() {
        assert!((kernel_antiderivative(XI_MAX as f64 - 1e-9) - 0.5).abs() < 1e-12);
        assert!(kernel_tail_estimate() < 1e-12);
        // ρ̂(0) = 2∫ρ = 3/2
        assert!((rho_hat(0.0) - 1.5).abs() < 1e-13);
    }

    #[test]
    fn indicator_examples() {
        let s = MollifierSpec::new(0.1).unwrap();
        assert!((smoothed_indicator(&s, 50.0, 10.0).unwrap() - 1.0).abs() < 1e-6);
        assert!((smoothed_indicator(&s, 50.0, 50.0).unwrap() - 0.5).abs() < 5e-3);
        // ten kernel widths out the error is the kernel tail 1/2 − Φ(100),
        // about 5e-6 for this ρ
        let far = smoothed_indicator(&s, 50.0, 60.0).unwrap();
        assert!((far - (0.5 - kernel_antiderivative(100.0))).abs() < 1e-12);
        assert!(far.abs() < 1e-5);
    }

    #[test]
    fn derivative_routes_agree() {
        let s = MollifierSpec::new(0.25).unwrap();
        for tau in [3.0, 9.8, 10.0, 10.3] {
            let a = smoothed_indicator_derivative(&s, 10.0, tau).unwrap();
            let b = smoothed_indicator_derivative_by_quadrature(&s, 10.0, tau).unwrap();
            assert!((a - b).abs() < 1e-6, "{tau}: {a} vs {b}");
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(MollifierSpec::new(0.0).is_err());
        assert!(MollifierSpec::new(1.5).is_err());
        let s = MollifierSpec::new(0.5).unwrap();
        assert!(indicator_by_convolution(&s, 0.5, 1.0).is_err());
        assert!(indicator_by_quadrature(&s, 2.0, -1.0).is_err());
    }

    #[test]
    fn window_support_and_transform() {
        let w = WindowSpec::new(0.5).unwrap();
        assert_eq!(window(&w, 5.0, 5.0), 1.0);
        assert_eq!(window(&w, 5.0, 6.0), 0.0);
        let fd = (window(&w, 5.0, 5.2 + 1e-6) - window(&w, 5.0, 5.2 - 1e-6)) / 2e-6;
        assert!((window_derivative(&w, 5.0, 5.2) - fd).abs() < 1e-6);
        for tau in [2.5, 2.8, 3.2] {
            let direct = window(&w, 3.0, tau);
            let t = window_by_transform(&w, 3.0, tau);
            assert!((direct - t).abs() < 1e-8, "{tau}: {direct} vs {t}");
        }
    }

    #[test]
    fn ell0_bookkeeping() {
        let d = |e: f64| DyadicDecomposition::new(MollifierSpec::new(e).unwrap()).ell0;
        assert_eq!(d(1.0), 0);
        assert_eq!(d(0.5), -1);
        assert_eq!(d(0.3), -2);
        assert_eq!(d(0.1), -4);
    }

    #[test]
    fn symbols_vanish_off_support() {
        let d = DyadicDecomposition::new(MollifierSpec::new(0.1).unwrap());
        let s = lp_symbols(&d, 100.0, 97.0, 100.0, 0, BandSign::Minus).unwrap();
        assert_eq!(s.m, 0.0);
        assert_eq!(s.r, 0.0);
        assert!(lp_symbols(&d, 100.0, 99.0, 20.0, 0, BandSign::Minus).is_err());
    }

    #[test]
    fn partition_of_unity() {
        let d = DyadicDecomposition::new(MollifierSpec::new(0.1).unwrap());
        for k in 0..=60 {
            let s = 10f64.powf(-3.0 + 0.1 * k as f64);
            let p = d.dyadic_partition(s, 30).unwrap();
            assert!((p.sum - 1.0).abs() <= 1e-12, "{s}: {}", p.sum);
            assert!(p.covered);
        }
        let p = d.dyadic_partition(1000.0, 3).unwrap();
        assert!(!p.covered && p.sum < 1.0);
        assert!(d.dyadic_partition(0.0, 3).is_err());
    }

    #[test]
    fn small_scales_belong_to_beta0() {
        let d = DyadicDecomposition::new(MollifierSpec::new(0.1).unwrap());
        let s = 2f64.powi(d.ell0 - 5) * 1.5;
        assert_eq!(d.beta0(s), 1.0);
        assert!((d.ell0 + 1..=20).all(|l| beta(2f64.powi(-l) * s) == 0.0));
        assert_eq!(d.beta0(2f64.powi(d.ell0 + 1)), 0.0);
    }

    #[test]
    fn exact_indicator_has_zero_decay_constant() {
        let g = decay_grid(50.0, 0.1);
        assert_eq!(decay_constant(50.0, 0.1, 4, &g, |t| indicator(50.0, t)), 0.0);
    }

    #[test]
    fn symbol_constants_are_stable() {
        let d = DyadicDecomposition::new(MollifierSpec::new(0.1).unwrap());
        let r = certify_with_refinement(&d, 100.0, 0, 0, BandSign::Minus, 4, 32).unwrap();
        assert!(r.coarse.c_m.is_finite() && r.coarse.c_m > 0.0);
        assert!(r.relative_change < 0.1);
    }

    #[test]
    fn coincidence_uses_derivative() {
        let d = DyadicDecomposition::new(MollifierSpec::new(0.1).unwrap());
        let s = lp_symbols(&d, 100.0, 100.0, 100.0, 1, BandSign::Plus).unwrap();
        let der = smoothed_indicator_derivative(&d.mollifier, 100.0, 100.0).unwrap();
        assert!((s.m0 - der / 200.0).abs() < 1e-12);
    }
}
