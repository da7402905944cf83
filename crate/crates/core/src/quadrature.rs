//! Gauss–Legendre rules and an adaptive Gauss–Kronrod integrator.

use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

const MAX_CACHED: usize = 64;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: [OnceLock<(Vec<f64>, Vec<f64>)>; MAX_CACHED + 1] =
        [const { OnceLock::new() }; MAX_CACHED + 1];
    assert!((1..=MAX_CACHED).contains(&n), "unsupported rule size {n}");
    CACHE[n].get_or_init(|| compute_gauss_legendre(n))
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
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
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Appends the `n`-point rule mapped to `[a, b]` to `nodes`/`weights`.
pub fn push_gl_panel(a: f64, b: f64, n: usize, nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (xi, wi) in x.iter().zip(w) {
        nodes.push(mid + half * xi);
        weights.push(half * wi);
    }
}

/// Composite Gauss–Legendre rule over the sorted `breaks`.
pub fn composite_gl(breaks: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(breaks.len() * n);
    let mut weights = Vec::with_capacity(breaks.len() * n);
    for pair in breaks.windows(2) {
        if pair[1] > pair[0] {
            push_gl_panel(pair[0], pair[1], n, &mut nodes, &mut weights);
        }
    }
    (nodes, weights)
}

/// Values that the adaptive integrator can accumulate.
pub trait Integrand:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

const GK_X: [f64; 8] = [
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
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod estimate with its embedded 7-point Gauss error.
pub fn gk15<T: Integrand>(f: &mut impl FnMut(f64) -> T, a: f64, b: f64) -> (T, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut k = fc * GK_WK[7];
    let mut g = fc * GK_WG[3];
    for i in 0..7 {
        let dx = half * GK_X[i];
        let s = f(mid - dx) + f(mid + dx);
        k = k + s * GK_WK[i];
        if i % 2 == 1 {
            g = g + s * GK_WG[i / 2];
        }
    }
    let k = k * half;
    let g = g * half;
    (k, (k - g).magnitude())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Adaptive<T> {
    pub value: T,
    pub error: f64,
    pub converged: bool,
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`,
/// bisecting the worst panel until `error <= max(abs_tol, rel_tol·|value|)`.
pub fn adaptive_gk<T: Integrand>(
    mut f: impl FnMut(f64) -> T,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Adaptive<T> {
    let (v, e) = gk15(&mut f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let mut total = T::zero();
        let mut err = 0.0;
        let mut worst = 0;
        for (i, p) in panels.iter().enumerate() {
            total = total + p.2;
            err += p.3;
            if p.3 > panels[worst].3 {
                worst = i;
            }
        }
        let target = abs_tol.max(rel_tol * total.magnitude());
        if err <= target || panels.len() >= max_panels {
            return Adaptive {
                value: total,
                error: err,
                converged: err <= target,
            };
        }
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let m = 0.5 * (pa + pb);
        let (v1, e1) = gk15(&mut f, pa, m);
        let (v2, e2) = gk15(&mut f, m, pb);
        panels.push((pa, m, v1, e1));
        panels.push((m, pb, v2, e2));
        // Keep summation order independent of the split history.
        panels.sort_by(|x, y| x.0.total_cmp(&y.0));
    }
}
