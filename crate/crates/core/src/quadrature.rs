//! Gauss-Legendre rules and Chebyshev polynomial tables.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [a, b], nodes ascending.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
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
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Values T_0..=T_n at t.
pub fn chebyshev_values(n: usize, t: f64) -> Vec<f64> {
    let mut v = vec![0.0; n + 1];
    v[0] = 1.0;
    if n >= 1 {
        v[1] = t;
    }
    for j in 2..=n {
        v[j] = 2.0 * t * v[j - 1] - v[j - 2];
    }
    v
}

/// Derivatives T_0'..=T_n' at t, via U_{j-1}: T_j' = j U_{j-1}.
pub fn chebyshev_derivatives(n: usize, t: f64) -> Vec<f64> {
    let mut u = vec![0.0; n + 1];
    u[0] = 1.0;
    if n >= 1 {
        u[1] = 2.0 * t;
    }
    for j in 2..=n {
        u[j] = 2.0 * t * u[j - 1] - u[j - 2];
    }
    let mut d = vec![0.0; n + 1];
    for j in 1..=n {
        d[j] = j as f64 * u[j - 1];
    }
    d
}
