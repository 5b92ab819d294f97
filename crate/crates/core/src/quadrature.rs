//! Gauss-Legendre rules and tensor-product box integration.

use crate::tiling::{for_each_multi_index, AxisBox};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton iteration from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
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

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor Gauss rule of `order` points per axis over `bx`.
pub fn integrate_box(bx: &AxisBox, order: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let d = bx.dim();
    let half: Vec<f64> = bx.lo.iter().zip(&bx.hi).map(|(a, b)| 0.5 * (b - a)).collect();
    let mid: Vec<f64> = bx.lo.iter().zip(&bx.hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let jac: f64 = half.iter().product();
    let axes: Vec<Vec<usize>> = vec![(0..order).collect(); d];
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    for_each_multi_index(&axes, |ix| {
        let mut w = 1.0;
        for k in 0..d {
            x[k] = mid[k] + half[k] * nodes[ix[k]];
            w *= weights[ix[k]];
        }
        total += w * f(&x);
    });
    total * jac
}
