//! Closed-form spectrum of the Dirichlet-Neumann operator over a flat bottom.

use num_complex::Complex64;

/// Flat-bottom eigenvalue together with its Fourier label and band index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatEigen {
    pub p: i64,
    pub theta: f64,
    pub value: f64,
    pub band_index: usize,
}

/// Dispersion relation κ_p(θ) = (p+θ)·tanh(p+θ).
pub fn kappa(p: i64, theta: f64) -> f64 {
    let s = p as f64 + theta;
    s * s.tanh()
}

/// Maps θ into (−1/2, 1/2] by integer translation.
pub fn reduce_theta(theta: f64) -> f64 {
    let mut t = theta - theta.round();
    if t <= -0.5 {
        t += 1.0;
    }
    t
}

/// Fourier label of the n-th flat eigenvalue in ascending order.
pub fn band_label(n: usize, theta: f64) -> i64 {
    let theta = reduce_theta(theta);
    let p = n.div_ceil(2) as i64;
    let even = n % 2 == 0;
    match (even, theta >= 0.0) {
        (true, true) | (false, false) => p,
        (true, false) | (false, true) => -p,
    }
}

/// Band index of Fourier label p at θ; inverse of [`band_label`].
pub fn band_index(p: i64, theta: f64) -> usize {
    let theta = reduce_theta(theta);
    let a = p.unsigned_abs() as usize;
    if p == 0 {
        0
    } else if (p > 0) == (theta >= 0.0) {
        2 * a
    } else {
        2 * a - 1
    }
}

pub fn flat_eigen(n: usize, theta: f64) -> FlatEigen {
    let theta = reduce_theta(theta);
    let p = band_label(n, theta);
    FlatEigen {
        p,
        theta,
        value: kappa(p, theta),
        band_index: n,
    }
}

/// λ_n^0(θ), the n-th flat-bottom eigenvalue in ascending order.
pub fn lambda0(n: usize, theta: f64) -> f64 {
    flat_eigen(n, theta).value
}

/// Resolvent eigenvalue 1/(1 + λ_n^0(θ)).
pub fn tau0(n: usize, theta: f64) -> f64 {
    1.0 / (1.0 + lambda0(n, theta))
}

/// Φ_p(x, z) = e^{ipx} cosh((p+θ)(z+1)) / cosh(p+θ) on the flat strip.
pub fn flat_eigenfunction(p: i64, theta: f64, x: f64, z: f64) -> Complex64 {
    let s = p as f64 + theta;
    Complex64::from_polar(1.0, p as f64 * x) * (vertical_ratio(s, z))
}

/// cosh(s(z+1))/cosh(s), evaluated without overflow for large |s|.
pub(crate) fn vertical_ratio(s: f64, z: f64) -> f64 {
    let a = s.abs();
    // cosh(a(z+1))/cosh(a) = e^{az} (1 + e^{-2a(z+1)}) / (1 + e^{-2a})
    (a * z).exp() * (1.0 + (-2.0 * a * (z + 1.0)).exp()) / (1.0 + (-2.0 * a).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kappa_values() {
        assert_eq!(kappa(0, 0.0), 0.0);
        assert!((kappa(1, 0.0) - 0.761594155955764888).abs() < 1e-15);
        assert!((kappa(0, 0.25) - 0.0612296656009272823).abs() < 1e-16);
        assert!((kappa(-1, 0.3) - 0.423057443982014447).abs() < 1e-15);
    }

    #[test]
    fn lambda0_table() {
        assert!((lambda0(2, 0.0) - 0.761594155955764888).abs() < 1e-15);
        assert_eq!(lambda0(1, 0.0), lambda0(2, 0.0));
        assert!((lambda0(0, 0.5) - 0.231058578630004879).abs() < 1e-15);
        assert!((lambda0(1, 0.3) - 0.423057443982014447).abs() < 1e-15);
        assert_eq!(lambda0(0, 0.0), 0.0);
        assert_eq!(flat_eigen(1, 0.3).p, -1);
        assert_eq!(flat_eigen(1, -0.3).p, 1);
        assert_eq!(flat_eigen(4, -0.2).p, -2);
    }

    #[test]
    fn theta_reduction() {
        assert_eq!(reduce_theta(0.5), 0.5);
        assert_eq!(reduce_theta(-0.5), 0.5);
        assert!((reduce_theta(1.3) - 0.3).abs() < 1e-15);
        assert!((reduce_theta(-0.7) - 0.3).abs() < 1e-15);
        assert_eq!(lambda0(3, 1.25), lambda0(3, 0.25));
    }

    #[test]
    fn label_index_round_trip() {
        for n in 0..20 {
            for theta in [-0.4, -0.1, 0.0, 0.2, 0.5] {
                assert_eq!(band_index(band_label(n, theta), theta), n);
            }
        }
    }

    #[test]
    fn tau0_values() {
        assert_eq!(tau0(0, 0.0), 1.0);
        assert!((tau0(2, 0.0) - 0.567667641618306346).abs() < 1e-15);
        assert!(tau0(4, 0.0) < tau0(2, 0.0));
    }

    #[test]
    fn eigenfunction_values() {
        assert!((flat_eigenfunction(1, 0.0, 0.0, 0.0) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((flat_eigenfunction(1, 0.0, 0.0, -1.0).re - 0.648054273663885400).abs() < 1e-15);
        for (x, z) in [(0.3, -0.2), (2.0, -1.0)] {
            assert!((flat_eigenfunction(0, 0.0, x, z) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        // Large wavenumbers stay finite.
        assert!(flat_eigenfunction(800, 0.1, 0.0, -0.5).norm() < 1e-100);
    }

    #[test]
    fn eigenfunction_surface_derivative() {
        let h = 1e-5;
        for (p, theta) in [(1, 0.0), (-2, 0.3), (3, -0.25)] {
            let x = 0.7;
            let d = (flat_eigenfunction(p, theta, x, 0.0) - flat_eigenfunction(p, theta, x, -h)) / h
                + (flat_eigenfunction(p, theta, x, 0.0) - 2.0 * flat_eigenfunction(p, theta, x, -h)
                    + flat_eigenfunction(p, theta, x, -2.0 * h))
                    / (2.0 * h);
            let expected = kappa(p, theta) * Complex64::from_polar(1.0, p as f64 * x);
            assert!((d - expected).norm() < 1e-7, "{p} {theta}: {d} vs {expected}");
        }
    }

    #[test]
    fn bands_touch_at_symmetric_points() {
        for p in 1..6 {
            assert!((lambda0(2 * p - 1, 0.0) - lambda0(2 * p, 0.0)).abs() <= 1e-15);
            assert!((lambda0(2 * p - 2, 0.5) - lambda0(2 * p - 1, 0.5)).abs() <= 1e-15);
        }
    }

    #[test]
    fn ordering_and_continuity() {
        let m = 257;
        let thetas: Vec<f64> = (0..m).map(|i| -0.5 + i as f64 / (m - 1) as f64).collect();
        for &t in &thetas {
            for n in 0..12 {
                assert!(lambda0(n, t) <= lambda0(n + 1, t), "n = {n}, theta = {t}");
            }
        }
        // Lipschitz bound: |d/dθ κ_p| ≤ tanh|s| + |s|/cosh²s ≤ 1 + 0.45.
        let lip = 1.5;
        for n in 0..12 {
            for w in thetas[1..].windows(2) {
                let d = (lambda0(n, w[1]) - lambda0(n, w[0])).abs();
                assert!(d <= lip * (w[1] - w[0]) + 1e-15, "n = {n} at {}", w[0]);
            }
        }
    }

    #[test]
    fn harmonicity() {
        let h = 1e-3;
        for (p, theta) in [(1, 0.0), (0, 0.25), (1, 0.3), (-1, 0.4)] {
            for (x, z) in [(0.3, -0.5), (1.7, -0.1), (4.0, -0.9)] {
                let f = |x: f64, z: f64| flat_eigenfunction(p, theta, x, z);
                // Bloch-shifted Laplacian: the x-dependence carries e^{iθx} in the full field.
                let g = |x: f64, z: f64| f(x, z) * Complex64::from_polar(1.0, theta * x);
                let lap = (g(x + h, z) + g(x - h, z) + g(x, z + h) + g(x, z - h) - 4.0 * g(x, z)) / (h * h);
                assert!(lap.norm() <= 1e-6, "{p} {theta} ({x},{z}): {}", lap.norm());
            }
        }
    }

    proptest! {
        #[test]
        fn kappa_even(p in -30i64..30, theta in -0.5f64..0.5) {
            prop_assert_eq!(kappa(p, theta), kappa(-p, -theta));
        }

        #[test]
        fn kappa_non_negative(p in -30i64..30, theta in -0.5f64..0.5) {
            prop_assert!(kappa(p, theta) >= 0.0);
        }

        #[test]
        fn lambda0_monotone_in_n(theta in -0.5f64..0.5, n in 0usize..30) {
            prop_assert!(lambda0(n, theta) <= lambda0(n + 1, theta));
        }
    }
}
