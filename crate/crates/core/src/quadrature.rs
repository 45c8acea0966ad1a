//! One-dimensional quadrature rules shared by the potential, heat and
//! multiplier modules.

use crate::scalar::{KahanSum, Real};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// Nodes by Newton iteration on `P_n`, carried out in `f64`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0f64, 0.0f64);
                for k in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
                }
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = T::lit(-z);
            nodes[n - 1 - i] = T::lit(z);
            weights[i] = T::lit(w);
            weights[n - 1 - i] = T::lit(w);
        }
        if n % 2 == 1 {
            nodes[n / 2] = T::zero();
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Mapped nodes and weights for `[a, b]`.
    pub fn mapped(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let c = (a + b) * T::half();
        let r = (b - a) * T::half();
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + r * x, r * w))
    }

    pub fn integrate<F: FnMut(T) -> T>(&self, mut f: F, a: T, b: T) -> T {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule on `panels` equal panels.
    pub fn integrate_panels<F: FnMut(T) -> T>(&self, mut f: F, a: T, b: T, panels: usize) -> T {
        let panels = panels.max(1);
        let width = (b - a) / T::from_usize_lossy(panels);
        let mut acc = KahanSum::new();
        for p in 0..panels {
            let lo = a + width * T::from_usize_lossy(p);
            let hi = if p + 1 == panels { b } else { lo + width };
            acc.add(self.integrate(&mut f, lo, hi));
        }
        acc.total()
    }

    /// Composite rule on panels `[b 2^{-k-1}, b 2^{-k}]` for `k < levels`,
    /// graded toward an integrable endpoint singularity at `a`.
    pub fn integrate_graded<F: FnMut(T) -> T>(&self, mut f: F, a: T, b: T, levels: usize) -> T {
        let mut acc = KahanSum::new();
        let mut hi = b - a;
        for _ in 0..levels {
            let lo = hi * T::half();
            acc.add(self.integrate(|u| f(a + u), lo, hi));
            hi = lo;
        }
        acc.add(self.integrate(|u| f(a + u), T::zero(), hi));
        acc.total()
    }
}

const GK_XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let c = (a + b) * T::half();
    let r = (b - a) * T::half();
    let fc = f(c);
    let mut k = T::lit(GK_WK[7]) * fc;
    let mut g = T::lit(GK_WG[3]) * fc;
    for j in 0..7 {
        let dx = r * T::lit(GK_XK[j]);
        let s = f(c - dx) + f(c + dx);
        k += T::lit(GK_WK[j]) * s;
        if j % 2 == 1 {
            g += T::lit(GK_WG[j / 2]) * s;
        }
    }
    (k * r, ((k - g) * r).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration.
///
/// Returns `(value, error_estimate)`. Subdivision stops once the estimate
/// satisfies `abs_tol + rel_tol·|value|` or `max_depth` bisections are used.
pub fn adaptive_kronrod<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
    max_depth: usize,
) -> (T, T) {
    let (whole, err) = kronrod15(&mut f, a, b);
    let mut value = KahanSum::new();
    let mut error = T::zero();
    let tol = abs_tol.max(rel_tol * whole.abs());
    refine(&mut f, a, b, whole, err, tol, max_depth, &mut value, &mut error);
    (value.total(), error)
}

#[allow(clippy::too_many_arguments)]
fn refine<T: Real, F: FnMut(T) -> T>(
    f: &mut F,
    a: T,
    b: T,
    estimate: T,
    err: T,
    tol: T,
    depth: usize,
    value: &mut KahanSum<T>,
    error: &mut T,
) {
    if err <= tol || depth == 0 {
        value.add(estimate);
        *error += err;
        return;
    }
    let m = (a + b) * T::half();
    let (l, el) = kronrod15(f, a, m);
    let (r, er) = kronrod15(f, m, b);
    let half_tol = tol * T::half();
    refine(f, a, m, l, el, half_tol, depth - 1, value, error);
    refine(f, m, b, r, er, half_tol, depth - 1, value, error);
}
