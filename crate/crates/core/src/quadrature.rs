//! Gauss–Legendre rules and globally adaptive Gauss–Kronrod integration.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;
use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
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
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A fixed rule `sum_i w_i g(x_i)` over some interval or union of intervals.
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn apply(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Composite Gauss–Legendre on `[a, b]` with panels no wider than `max_width`.
    pub fn composite(a: f64, b: f64, max_width: f64, order: usize) -> Rule {
        let mut rule = Rule::default();
        rule.push_composite(a, b, max_width, order);
        rule
    }

    pub fn push_composite(&mut self, a: f64, b: f64, max_width: f64, order: usize) {
        if b <= a {
            return;
        }
        let (x, w) = gauss_legendre(order);
        let panels = ((b - a) / max_width).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            for (xi, wi) in x.iter().zip(&w) {
                self.nodes.push(mid + 0.5 * h * xi);
                self.weights.push(0.5 * h * wi);
            }
        }
    }

    /// Rule on `[0, b]` for integrands with an integrable power or log singularity at 0.
    ///
    /// Panels are graded geometrically toward zero; the innermost panel uses the
    /// substitution `u = s^beta`, which cancels a `u^(1/beta - 1)` singularity.
    pub fn push_graded_at_zero(&mut self, b: f64, max_width: f64, order: usize, beta: f64) {
        if b <= 0.0 {
            return;
        }
        let first = b.min(max_width);
        if b > first {
            self.push_composite(first, b, max_width, order);
        }
        let (x, w) = gauss_legendre(order);
        let mut hi = first;
        for _ in 0..48 {
            let lo = 0.5 * hi;
            let mid = 0.5 * (lo + hi);
            let h = hi - lo;
            for (xi, wi) in x.iter().zip(&w) {
                self.nodes.push(mid + 0.5 * h * xi);
                self.weights.push(0.5 * h * wi);
            }
            hi = lo;
        }
        // innermost [0, hi] in the variable s with u = s^beta
        let s_hi = hi.powf(1.0 / beta);
        for (xi, wi) in x.iter().zip(&w) {
            let s = 0.5 * s_hi * (1.0 + xi);
            self.nodes.push(s.powf(beta));
            self.weights
                .push(0.5 * s_hi * wi * beta * s.powf(beta - 1.0));
        }
    }
}

/// Value and error estimate of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15(g: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = g(c);
    let mut k = WGK[7] * fc;
    let mut gs = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = g(c - dx) + g(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            gs += WG[j / 2] * s;
        }
    }
    (k * h, ((k - gs) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7/K15 integration of `g` over the given breakpoints.
///
/// Fails with [`Error::QuadratureTolerance`] when `abs_tol` is not reached within
/// `max_segments` bisections.
pub fn integrate_breaks(
    g: impl Fn(f64) -> f64,
    breaks: &[f64],
    abs_tol: f64,
    max_segments: usize,
) -> Result<Quad> {
    let mut heap = BinaryHeap::new();
    let mut err = 0.0;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e) = kronrod15(&g, w[0], w[1]);
        err += e;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    let mut segments = heap.len();
    while err > abs_tol {
        if segments >= max_segments {
            return Err(Error::QuadratureTolerance {
                achieved: err,
                requested: abs_tol,
            });
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine precision
            heap.push(Segment {
                error: 0.0,
                ..worst
            });
            err = heap.iter().map(|s| s.error).sum();
            segments += 1;
            continue;
        }
        let (v1, e1) = kronrod15(&g, worst.a, mid);
        let (v2, e2) = kronrod15(&g, mid, worst.b);
        err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        segments += 1;
        if segments % 64 == 0 {
            err = heap.iter().map(|s| s.error).sum();
        }
    }
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(Quad { value, error })
}

pub fn integrate(g: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<Quad> {
    integrate_breaks(g, &[a, b], abs_tol, 4000)
}

/// Breakpoints splitting `[a, b]` into pieces no wider than `width`.
pub fn uniform_breaks(a: f64, b: f64, width: f64) -> Vec<f64> {
    let pieces = ((b - a) / width).ceil().max(1.0) as usize;
    let h = (b - a) / pieces as f64;
    (0..=pieces)
        .map(|i| if i == pieces { b } else { a + i as f64 * h })
        .collect()
}
