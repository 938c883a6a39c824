//! Closed-form gap predictors from the reduced 2×2 problems at double points.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bathymetry::BathymetryProfile;
use crate::error::{Error, Result};
use crate::flat::{kappa, lambda0};

type C = Complex64;

pub type Matrix2 = [[C; 2]; 2];

/// Where a flat double point sits in θ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapLocation {
    /// θ = 0: bands 2p−1 and 2p meet.
    Zero,
    /// θ = 1/2: bands 2p and 2p+1 meet.
    Half,
}

impl GapLocation {
    pub fn theta(self) -> f64 {
        match self {
            GapLocation::Zero => 0.0,
            GapLocation::Half => 0.5,
        }
    }

    /// Index of the lower of the two bands meeting at this double point.
    pub fn lower_band(self, p: usize) -> usize {
        match self {
            GapLocation::Zero => 2 * p - 1,
            GapLocation::Half => 2 * p,
        }
    }

    /// Bottom mode coupling the two flat modes of the double point.
    pub fn coupling_mode(self, p: usize) -> i64 {
        match self {
            GapLocation::Zero => 2 * p as i64,
            GapLocation::Half => 2 * p as i64 + 1,
        }
    }
}

/// F_p = (p/2)² / cosh²(p/2).
pub fn gap_factor(p: i64) -> f64 {
    let h = 0.5 * p as f64;
    let c = h.cosh();
    h * h / (c * c)
}

/// K_p = p/cosh²p · (1 + sinh(2p)/(2p)).
pub fn slope_factor(p: i64) -> f64 {
    assert!(p >= 1, "slope factor needs p >= 1");
    let pf = p as f64;
    let c = pf.cosh();
    pf / (c * c) * (1.0 + (2.0 * pf).sinh() / (2.0 * pf))
}

/// Eigenvalues (ascending) of a 2×2 Hermitian matrix.
pub fn hermitian_eigenvalues(m: &Matrix2) -> (f64, f64) {
    let a = m[0][0].re;
    let d = m[1][1].re;
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = half.hypot(m[0][1].norm());
    (mean - r, mean + r)
}

/// Unit eigenvector of a 2×2 Hermitian matrix for eigenvalue μ; the larger entry
/// is made real positive.
pub(crate) fn hermitian_eigenvector(m: &Matrix2, mu: f64) -> [C; 2] {
    let c = m[0][1];
    let u = [c, C::new(mu - m[0][0].re, 0.0)];
    let v = [C::new(mu - m[1][1].re, 0.0), c.conj()];
    let nu = u[0].norm_sqr() + u[1].norm_sqr();
    let nv = v[0].norm_sqr() + v[1].norm_sqr();
    let (w, n) = if nu >= nv { (u, nu) } else { (v, nv) };
    let n = n.sqrt();
    let big = if w[0].norm() >= w[1].norm() { w[0] } else { w[1] };
    let phase = big.conj() / big.norm();
    [w[0] * phase / n, w[1] * phase / n]
}

pub fn m_matrix(p: i64, delta: f64, profile: &BathymetryProfile) -> Matrix2 {
    let kd = slope_factor(p) * delta;
    let c = profile.fourier_coefficient(2 * p) * gap_factor(2 * p);
    [[C::new(kd, 0.0), c], [c.conj(), C::new(-kd, 0.0)]]
}

/// Order-ε eigenvalue branches (−s, +s), s = √(K²δ² + F_{2p}²|b̂_{2p}|²).
pub fn lambda_prime(p: i64, delta: f64, profile: &BathymetryProfile) -> (f64, f64) {
    let s = (slope_factor(p) * delta).hypot(gap_factor(2 * p) * profile.fourier_coefficient(2 * p).norm());
    (-s, s)
}

/// Weight (k² − κ_kκ_p)/(κ_p − κ_k) at θ = 0, for k ∉ {p, −p}.
pub fn resonance_weight(k: i64, p: i64) -> f64 {
    assert!(k.abs() != p.abs(), "weight is singular at k = ±p");
    let kp = kappa(p, 0.0);
    let kk = kappa(k, 0.0);
    let den = kp - kk;
    assert!(den != 0.0, "κ_k(0) = κ_p(0) with |k| != |p|");
    ((k * k) as f64 - kk * kp) / den
}

fn second_order_terms(p: i64, profile: &BathymetryProfile) -> (f64, C) {
    assert!(p >= 1, "second-order sums need p >= 1");
    let kb = profile.max_mode() as i64;
    let reach = p + kb;
    let mut j = 0.0;
    let mut s = C::new(0.0, 0.0);
    for k in -reach..=reach {
        if k == 0 || k.abs() == p {
            continue;
        }
        let w = resonance_weight(k, p);
        j += w * profile.fourier_coefficient(k - p).norm_sqr();
        s += w * profile.fourier_coefficient(k + p) * profile.fourier_coefficient(k - p).conj();
    }
    for k in (reach + 1..=reach + 10).flat_map(|k| [k, -k]) {
        assert!(
            profile.fourier_coefficient(k - p) == C::new(0.0, 0.0)
                && profile.fourier_coefficient(k + p) * profile.fourier_coefficient(k - p).conj() == C::new(0.0, 0.0),
            "nonzero summand beyond the band limit at k = {k}"
        );
    }
    let pf = p as f64;
    let pre = pf * pf / pf.cosh().powi(2);
    (pre * j, pre * s)
}

/// J_p(b), the second-order shift of the double point.
pub fn j_sum(p: i64, profile: &BathymetryProfile) -> f64 {
    second_order_terms(p, profile).0
}

/// S_p(b), the second-order coupling of modes ±p.
pub fn s_sum(p: i64, profile: &BathymetryProfile) -> C {
    second_order_terms(p, profile).1
}

pub fn n_matrix(p: i64, delta: f64, profile: &BathymetryProfile) -> Matrix2 {
    let (j, s) = second_order_terms(p, profile);
    let kd = slope_factor(p) * delta;
    [[C::new(kd + j, 0.0), -s], [-s.conj(), C::new(-kd + j, 0.0)]]
}

/// Order-ε² branches J ∓ √(K²δ² + |S|²).
pub fn lambda_second(p: i64, delta: f64, profile: &BathymetryProfile) -> (f64, f64) {
    let (j, s) = second_order_terms(p, profile);
    let r = (slope_factor(p) * delta).hypot(s.norm());
    (j - r, j + r)
}

/// Predicted gap edges near a flat double point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapPrediction {
    pub p: i64,
    pub order: u8,
    pub location: GapLocation,
    pub center: f64,
    pub half_width: f64,
    pub lower_edge: f64,
    pub upper_edge: f64,
    /// Set when the predictor at this order sees no opening.
    pub inconclusive: bool,
}

impl GapPrediction {
    fn new(p: i64, order: u8, location: GapLocation, center: f64, half_width: f64) -> Self {
        Self {
            p,
            order,
            location,
            center,
            half_width,
            lower_edge: center - half_width,
            upper_edge: center + half_width,
            inconclusive: half_width == 0.0,
        }
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }
}

pub fn gap_edges_order1(
    p: i64,
    epsilon: f64,
    profile: &BathymetryProfile,
    location: GapLocation,
) -> Result<GapPrediction> {
    let min_p = match location {
        GapLocation::Zero => 1,
        GapLocation::Half => 0,
    };
    if p < min_p {
        return Err(Error::Precondition(format!(
            "order-1 prediction at theta = {} needs p >= {min_p}, got {p}",
            location.theta()
        )));
    }
    let m = location.coupling_mode(p as usize);
    let center = lambda0(2 * p as usize, location.theta());
    let half = gap_factor(m) * profile.fourier_coefficient(m).norm() * epsilon.abs();
    Ok(GapPrediction::new(p, 1, location, center, half))
}

pub fn gap_edges_order2(p: i64, epsilon: f64, profile: &BathymetryProfile) -> Result<GapPrediction> {
    if p < 1 {
        return Err(Error::Precondition(format!("order-2 prediction needs p >= 1, got {p}")));
    }
    if profile.fourier_coefficient(2 * p) != C::new(0.0, 0.0) {
        return Err(Error::Precondition(format!(
            "mode {} of the bottom is nonzero, so the gap opens at order epsilon; use the order-1 predictor",
            2 * p
        )));
    }
    let (j, s) = second_order_terms(p, profile);
    let e2 = epsilon * epsilon;
    let center = lambda0(2 * p as usize, 0.0) + j * e2;
    Ok(GapPrediction::new(p, 2, GapLocation::Zero, center, s.norm() * e2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bathymetry::CosineTerm;
    use faer::{Mat, Side};
    use proptest::prelude::*;

    fn cos_profile(t: &[(i64, f64, f64)]) -> BathymetryProfile {
        let terms: Vec<_> = t
            .iter()
            .map(|&(k, amplitude, phase)| CosineTerm { k, amplitude, phase })
            .collect();
        BathymetryProfile::from_cosine_series(&terms).unwrap()
    }

    fn cos2() -> BathymetryProfile {
        cos_profile(&[(2, 2.0, 0.0)])
    }

    fn cos13() -> BathymetryProfile {
        cos_profile(&[(1, 2.0, 0.0), (3, 2.0, 0.0)])
    }

    #[test]
    fn factor_values() {
        assert!((gap_factor(2) - 0.419974341614026069).abs() < 1e-15);
        assert!((gap_factor(1) - 0.196611933241481853).abs() < 1e-15);
        assert!((gap_factor(20) - 8.24461445576739737e-7).abs() < 1e-20);
        assert!(gap_factor(20) < 1e-6);
        assert!((slope_factor(1) - 1.18156849756979096).abs() < 1e-14);
        for p in 1..=20 {
            assert!(slope_factor(p) > 0.0);
        }
    }

    #[test]
    fn m_matrix_cases() {
        let m = m_matrix(1, 0.0, &cos2());
        assert_eq!(m[0][0], C::new(0.0, 0.0));
        assert!((m[0][1].re - 0.419974341614026069).abs() < 1e-15);
        let (lo, hi) = hermitian_eigenvalues(&m);
        assert!((lo + 0.419974341614026069).abs() < 1e-15);
        assert!((hi - 0.419974341614026069).abs() < 1e-15);

        let flat = BathymetryProfile::flat();
        let m = m_matrix(2, 0.3, &flat);
        assert_eq!(m[0][1], C::new(0.0, 0.0));
        assert!((m[0][0].re - slope_factor(2) * 0.3).abs() < 1e-16);
        assert!((m[1][1].re + slope_factor(2) * 0.3).abs() < 1e-16);
    }

    #[test]
    fn lambda_prime_cases() {
        let (lo, hi) = lambda_prime(1, 0.0, &cos2());
        assert!((hi - 0.419974341614026069).abs() < 1e-15 && lo == -hi);
        let (lo, hi) = lambda_prime(1, 0.7, &BathymetryProfile::flat());
        assert!((hi - slope_factor(1) * 0.7).abs() < 1e-15 && lo == -hi);
        let mut last = -1.0;
        for i in 0..50 {
            let s = lambda_prime(1, 0.1 * i as f64, &cos2()).1;
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn second_order_sums() {
        let b = cos13();
        assert!((j_sum(1, &b) - -3.50452060700940203).abs() < 1e-13);
        let s = s_sum(1, &b);
        assert!((s.re - -1.82296521103038553).abs() < 1e-13);
        assert_eq!(s.im, 0.0);
        let flat = BathymetryProfile::flat();
        assert_eq!(j_sum(1, &flat), 0.0);
        assert_eq!(s_sum(1, &flat), C::new(0.0, 0.0));
        assert_eq!(s_sum(1, &cos2()), C::new(0.0, 0.0));

        let (lo, hi) = lambda_second(1, 0.0, &b);
        assert!((lo - -5.32748581803978756).abs() < 1e-13);
        assert!((hi - -1.68155539597901650).abs() < 1e-13);
        let (lo, hi) = lambda_second(1, 0.4, &cos2());
        let j = j_sum(1, &cos2());
        assert!((lo - (j - slope_factor(1) * 0.4)).abs() < 1e-14);
        assert!((hi - (j + slope_factor(1) * 0.4)).abs() < 1e-14);
    }

    #[test]
    fn order1_edges() {
        let g = gap_edges_order1(1, 0.02, &cos2(), GapLocation::Zero).unwrap();
        assert!((g.center - 0.761594155955764888).abs() < 1e-15);
        assert!((g.half_width - 0.00839948683228052).abs() < 1e-16);
        assert!((g.upper_edge - g.lower_edge - 2.0 * g.half_width).abs() < 1e-16);
        assert!(!g.inconclusive);

        let g = gap_edges_order1(1, 0.02, &cos13(), GapLocation::Zero).unwrap();
        assert_eq!(g.half_width, 0.0);
        assert!(g.inconclusive);

        let g = gap_edges_order1(0, 0.01, &cos_profile(&[(1, 2.0, 0.0)]), GapLocation::Half).unwrap();
        assert!((g.center - 0.231058578630004879).abs() < 1e-15);
        assert!((g.half_width - 0.00196611933241482).abs() < 1e-16);

        assert!(gap_edges_order1(0, 0.01, &cos2(), GapLocation::Zero).is_err());
    }

    #[test]
    fn order2_edges() {
        let g = gap_edges_order2(1, 0.05, &cos13()).unwrap();
        assert!((g.center - 0.752832854438241383).abs() < 1e-14);
        assert!((g.half_width - 0.00455741302757596383).abs() < 1e-15);
        assert!(matches!(gap_edges_order2(1, 0.05, &cos2()), Err(Error::Precondition(_))));
        let g = gap_edges_order2(1, 0.05, &cos_profile(&[(4, 1.0, 0.0)])).unwrap();
        assert_eq!(g.half_width, 0.0);
        assert!(g.inconclusive);
        let g = gap_edges_order2(1, 1e-6, &cos13()).unwrap();
        assert!((g.lower_edge - 0.761594155955764888).abs() < 1e-10);
        assert!((g.upper_edge - 0.761594155955764888).abs() < 1e-10);
    }

    #[test]
    fn weights_finite() {
        for p in 1..=10 {
            for k in -50i64..=50 {
                if k.abs() != p {
                    assert!(resonance_weight(k, p).is_finite());
                }
            }
        }
    }

    #[test]
    fn gap_mechanism_bound() {
        let b = cos2();
        let floor = gap_factor(2) * b.fourier_coefficient(2).norm();
        assert_eq!(lambda_prime(1, 0.0, &b).1, floor);
        for d in [1e-3, 0.1, 1.0, 5.0] {
            assert!(lambda_prime(1, d, &b).1 > floor);
        }
    }

    fn arb_profile() -> impl Strategy<Value = BathymetryProfile> {
        prop::collection::btree_map(1i64..9, (-1.5f64..1.5, -1.5f64..1.5), 1..5).prop_map(|m| {
            let e: Vec<_> = m.into_iter().map(|(k, (re, im))| (k, C::new(re, im))).collect();
            BathymetryProfile::from_fourier(&e).unwrap()
        })
    }

    fn direct_eigenvalues(m: &Matrix2) -> (f64, f64) {
        let a = Mat::<C>::from_fn(2, 2, |i, j| m[i][j]);
        let v = a.self_adjoint_eigenvalues(Side::Lower).unwrap();
        (v[0], v[1])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn reduced_matrices_match_direct_solve(p in 1i64..=5, delta in 0.0f64..10.0, b in arb_profile()) {
            let m = m_matrix(p, delta, &b);
            prop_assert_eq!(m[0][1], m[1][0].conj());
            prop_assert_eq!(m[0][0].re + m[1][1].re, 0.0);
            let (lo, hi) = direct_eigenvalues(&m);
            let (plo, phi) = lambda_prime(p, delta, &b);
            prop_assert!((lo - plo).abs() <= 1e-14 * (1.0 + phi.abs()));
            prop_assert!((hi - phi).abs() <= 1e-14 * (1.0 + phi.abs()));

            let n = n_matrix(p, delta, &b);
            prop_assert_eq!(n[0][1], n[1][0].conj());
            let (lo, hi) = direct_eigenvalues(&n);
            let (slo, shi) = lambda_second(p, delta, &b);
            let scale = 1.0 + slo.abs() + shi.abs();
            prop_assert!((lo - slo).abs() <= 1e-14 * scale);
            prop_assert!((hi - shi).abs() <= 1e-14 * scale);
        }

        #[test]
        fn eigenvector_satisfies_equation(p in 1i64..=5, delta in 0.0f64..10.0, b in arb_profile()) {
            let m = m_matrix(p, delta, &b);
            let (lo, hi) = lambda_prime(p, delta, &b);
            for mu in [lo, hi] {
                let v = hermitian_eigenvector(&m, mu);
                if mu == 0.0 { continue; }
                for r in 0..2 {
                    let lhs = m[r][0] * v[0] + m[r][1] * v[1];
                    prop_assert!((lhs - mu * v[r]).norm() <= 1e-12 * (1.0 + mu.abs()));
                }
                prop_assert!(((v[0].norm_sqr() + v[1].norm_sqr()) - 1.0).abs() < 1e-14);
            }
        }

        #[test]
        fn conjugation_symmetry(p in 1i64..=5, b in arb_profile()) {
            let r = b.reflected();
            prop_assert!((j_sum(p, &r) - j_sum(p, &b)).abs() <= 1e-13 * (1.0 + j_sum(p, &b).abs()));
            prop_assert!((s_sum(p, &r) - s_sum(p, &b).conj()).norm() <= 1e-13 * (1.0 + s_sum(p, &b).norm()));
        }

        #[test]
        fn real_profiles_give_real_coupling(p in 1i64..=4, a in prop::collection::vec(-2.0f64..2.0, 1..5)) {
            let terms: Vec<_> = a.iter().enumerate()
                .map(|(i, &amplitude)| CosineTerm { k: i as i64 + 1, amplitude, phase: 0.0 })
                .collect();
            let b = BathymetryProfile::from_cosine_series(&terms).unwrap();
            prop_assert_eq!(s_sum(p, &b).im, 0.0);
        }
    }
}
