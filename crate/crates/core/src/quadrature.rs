//! Gauss–Legendre rules and an adaptive Gauss–Kronrod integrator.

use crate::error::{Error, Result};

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes mapped onto `[a, b]`.
    pub fn mapped_nodes(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().map(move |&t| mid + half * t)
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * t);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Barycentric weights for Lagrange interpolation through `nodes`.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| xj - xk)
                .product();
            1.0 / prod
        })
        .collect()
}

/// Evaluates the interpolant through `(nodes, values)` at `x`.
pub fn barycentric_eval(nodes: &[f64], bary: &[f64], values: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&xj, &wj), &fj) in nodes.iter().zip(bary).zip(values) {
        let d = x - xj;
        if d == 0.0 {
            return fj;
        }
        let t = wj / d;
        num += t * fj;
        den += t;
    }
    num / den
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// Globally adaptive 15-point Gauss–Kronrod integration.
#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    pub initial_pieces: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-11,
            max_intervals: 4000,
            initial_pieces: 1,
        }
    }
}

impl Integrator {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn pieces(mut self, n: usize) -> Self {
        self.initial_pieces = n.max(1);
        self
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Quadrature> {
        self.integrate_breaks(f, &[a, b])
    }

    /// Integrates over consecutive intervals given by sorted `breaks`.
    pub fn integrate_breaks<F: FnMut(f64) -> f64>(&self, mut f: F, breaks: &[f64]) -> Result<Quadrature> {
        let mut work: Vec<(f64, f64, f64, f64)> = Vec::new();
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if !(hi > lo) {
                continue;
            }
            let n = self.initial_pieces;
            for i in 0..n {
                let a = lo + (hi - lo) * i as f64 / n as f64;
                let b = if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * (i + 1) as f64 / n as f64
                };
                let (v, e) = gk15(&mut f, a, b);
                work.push((a, b, v, e));
            }
        }
        if work.is_empty() {
            return Ok(Quadrature {
                value: 0.0,
                error: 0.0,
                intervals: 0,
            });
        }
        loop {
            let (value, error) = work.iter().fold((0.0, 0.0), |(v, e), w| (v + w.2, e + w.3));
            if !value.is_finite() || !error.is_finite() {
                return Err(Error::numeric(
                    "adaptive quadrature",
                    format!("non-finite integrand on [{}, {}]", breaks[0], breaks[breaks.len() - 1]),
                ));
            }
            let target = self.abs_tol.max(self.rel_tol * value.abs());
            if error <= target {
                return Ok(Quadrature {
                    value,
                    error,
                    intervals: work.len(),
                });
            }
            if work.len() >= self.max_intervals {
                return Err(Error::numeric(
                    "adaptive quadrature",
                    format!(
                        "no convergence on [{}, {}]: value {value:e}, error {error:e}, target {target:e}, {} intervals",
                        breaks[0],
                        breaks[breaks.len() - 1],
                        work.len()
                    ),
                ));
            }
            let (idx, _) = work
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
                .expect("non-empty work list");
            let (a, b, _, _) = work.swap_remove(idx);
            let m = 0.5 * (a + b);
            if !(m > a && m < b) {
                // Interval collapsed to machine resolution; accept what we have.
                let (value, error) = work.iter().fold((0.0, 0.0), |(v, e), w| (v + w.2, e + w.3));
                return Ok(Quadrature {
                    value,
                    error,
                    intervals: work.len(),
                });
            }
            let (v1, e1) = gk15(&mut f, a, m);
            let (v2, e2) = gk15(&mut f, m, b);
            work.push((a, m, v1, e1));
            work.push((m, b, v2, e2));
        }
    }
}
