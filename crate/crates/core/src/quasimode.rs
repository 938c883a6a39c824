//! Order-ε quasimodes near the θ = 0 double points, their resolvent residuals,
//! eigenvalue certification, and closed-form identity checks.
//!
//! Everything here is evaluated from explicit formulas with analytic
//! derivatives; the discrete solver only enters through residuals.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bathymetry::BathymetryProfile;
use crate::error::{Error, Result};
use crate::flat::kappa;
use crate::operator::{DnoOperator, DnoSpectrum, SpectralGrid};
use crate::predictor::{gap_factor, hermitian_eigenvector, lambda_prime, m_matrix};
use crate::quadrature::gauss_legendre;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

/// Value and derivatives up to second order of a function of (x, z).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: C,
    pub x: C,
    pub z: C,
    pub xx: C,
    pub xz: C,
    pub zz: C,
}

impl Jet {
    /// h(x)·g(z) from [h, h', h''] and [g, g', g''].
    fn separable(h: [C; 3], g: [C; 3]) -> Self {
        Self {
            v: h[0] * g[0],
            x: h[1] * g[0],
            z: h[0] * g[1],
            xx: h[2] * g[0],
            xz: h[1] * g[1],
            zz: h[0] * g[2],
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            v: self.v + o.v,
            x: self.x + o.x,
            z: self.z + o.z,
            xx: self.xx + o.xx,
            xz: self.xz + o.xz,
            zz: self.zz + o.zz,
        }
    }

    fn scale(self, s: C) -> Self {
        Self {
            v: self.v * s,
            x: self.x * s,
            z: self.z * s,
            xx: self.xx * s,
            xz: self.xz * s,
            zz: self.zz * s,
        }
    }

    pub fn laplacian(&self) -> C {
        self.xx + self.zz
    }
}

/// b, b', b'' at one x.
#[derive(Clone, Copy)]
struct BottomJet {
    b: f64,
    d: f64,
    dd: f64,
}

impl BottomJet {
    fn at(profile: &BathymetryProfile, x: f64) -> Self {
        Self {
            b: profile.evaluate(x),
            d: profile.derivative(x),
            dd: profile.second_derivative(x),
        }
    }
}

/// div(Q₁∇u) by the product rule applied to Q₁ = [[−b, zb'], [zb', b]].
fn div_q1_grad(u: &Jet, bj: BottomJet, z: f64) -> C {
    -bj.b * u.xx + bj.b * u.zz + z * bj.dd * u.z + 2.0 * z * bj.d * u.xz
}

/// (Q₁∇u)·e_z.
fn q1_flux_z(u: &Jet, bj: BottomJet, z: f64) -> C {
    z * bj.d * u.x + bj.b * u.z
}

fn plane_wave(k: i64, x: f64) -> [C; 3] {
    let e = C::from_polar(1.0, k as f64 * x);
    let ik = C::new(0.0, k as f64);
    [e, ik * e, ik * ik * e]
}

/// [cosh(k(z+1)), d/dz, d²/dz²] and the same for sinh.
fn hyperbolic(k: f64, z: f64) -> ([f64; 3], [f64; 3]) {
    let s = k * (z + 1.0);
    let (ch, sh) = (s.cosh(), s.sinh());
    ([ch, k * sh, k * k * ch], [sh, k * ch, k * k * sh])
}

/// Φ_{±p} at θ = 0 as a jet.
fn flat_mode_jet(k: i64, x: f64, z: f64) -> Jet {
    let p = k.unsigned_abs() as f64;
    let (ch, _) = hyperbolic(p, z);
    let c = p.cosh();
    Jet::separable(plane_wave(k, x), ch.map(|v| C::new(v / c, 0.0)))
}

/// E_{±p} = −(p/cosh p)·z·sinh(p(z+1))·b(x)·e^{±ipx} as a jet.
fn e_mode_jet(k: i64, bj: BottomJet, x: f64, z: f64) -> Jet {
    let p = k.unsigned_abs() as f64;
    let e = plane_wave(k, x);
    let ik = C::new(0.0, k as f64);
    let h = [
        bj.b * e[0],
        (bj.d + ik * bj.b) * e[0],
        (bj.dd + 2.0 * ik * bj.d + ik * ik * bj.b) * e[0],
    ];
    let (_, sh) = hyperbolic(p, z);
    let f = -p / p.cosh();
    let g = [f * z * sh[0], f * (sh[0] + z * sh[1]), f * (2.0 * sh[1] + z * sh[2])];
    Jet::separable(h, g.map(|v| C::new(v, 0.0)))
}

/// Vertical profile β·cosh(k(z+1)) + γ·sinh(k(z+1)) + A·(z+1)·sinh(p(z+1)) of one
/// Fourier mode of the corrector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeProfile {
    pub beta: C,
    pub gamma: C,
    /// Amplitude of the particular solution driven by the Bloch shift; zero
    /// away from the resonant modes ±p.
    pub forcing: C,
}

impl ModeProfile {
    fn vertical(&self, k: i64, p: i64, z: f64) -> [C; 3] {
        let (ch, sh) = hyperbolic(k as f64, z);
        let mut out = [ZERO; 3];
        for i in 0..3 {
            out[i] = self.beta * ch[i] + self.gamma * sh[i];
        }
        if self.forcing != ZERO {
            let pf = p as f64;
            let (_, psh) = hyperbolic(pf, z);
            let w = z + 1.0;
            let g = [w * psh[0], psh[0] + w * psh[1], 2.0 * psh[1] + w * psh[2]];
            for i in 0..3 {
                out[i] += self.forcing * g[i];
            }
        }
        out
    }

    fn surface_value(&self, k: i64, p: i64) -> C {
        self.vertical(k, p, 0.0)[0]
    }
}

/// Approximate eigenpair λ^app = κ_p(0) + ελ', ξ^app = (U⁰ + εU')|_{z=0} at θ = δε.
#[derive(Clone, Debug)]
pub struct Quasimode {
    pub p: i64,
    pub delta: f64,
    pub epsilon: f64,
    pub branch: Branch,
    /// Coefficients of Φ_p and Φ_{−p} in U⁰.
    pub alpha: [C; 2],
    pub lambda_prime: f64,
    pub lambda_app: f64,
    pub tau_app: f64,
    /// The reduced matrix had a double eigenvalue; `alpha` is a canonical basis vector.
    pub degenerate: bool,
    /// Corrector modes k ∉ {0, ±p}: (β_k, γ_k).
    pub uprime_coeffs: BTreeMap<i64, (C, C)>,
    /// Corrector modes p and −p, chosen with zero surface trace.
    pub resonant: [ModeProfile; 2],
    profile: BathymetryProfile,
}

pub fn build_quasimode(
    p: i64,
    delta: f64,
    epsilon: f64,
    profile: &BathymetryProfile,
    branch: Branch,
) -> Result<Quasimode> {
    if p < 1 {
        return Err(Error::Precondition(format!("quasimodes need p >= 1, got {p}")));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Precondition(format!("delta must be finite and >= 0, got {delta}")));
    }
    let m = m_matrix(p, delta, profile);
    let (lo, hi) = lambda_prime(p, delta, profile);
    let lp = match branch {
        Branch::Plus => hi,
        Branch::Minus => lo,
    };
    let degenerate = lo == hi;
    let alpha = if degenerate {
        match branch {
            Branch::Plus => [C::new(1.0, 0.0), ZERO],
            Branch::Minus => [ZERO, C::new(1.0, 0.0)],
        }
    } else {
        hermitian_eigenvector(&m, lp)
    };

    let pf = p as f64;
    let cp = pf.cosh();
    let coupling = |k: i64| {
        (pf / cp) * (-alpha[0] * profile.fourier_coefficient(k - p) + alpha[1] * profile.fourier_coefficient(k + p))
    };
    let kb = profile.max_mode() as i64;
    let kp = kappa(p, 0.0);
    let mut uprime_coeffs = BTreeMap::new();
    for k in -(p + kb)..=(p + kb) {
        if k == 0 || k.abs() == p || ((k - p).abs() > kb && (k + p).abs() > kb) {
            continue;
        }
        let gamma = coupling(k);
        let kk = kappa(k, 0.0);
        let beta = ((k * k) as f64 - kk * kp) / (k as f64 * (kp - kk)) * gamma;
        uprime_coeffs.insert(k, (beta, gamma));
    }

    // Resonant modes: the homogeneous part is fixed by requiring zero trace.
    let forcing = [delta * alpha[0] / cp, -delta * alpha[1] / cp];
    let resonant = [p, -p].map(|k| {
        let i = usize::from(k < 0);
        let gamma = coupling(k);
        let kf = k as f64;
        let beta = -(gamma * kf.sinh() + forcing[i] * pf.sinh()) / kf.cosh();
        ModeProfile {
            beta,
            gamma,
            forcing: forcing[i],
        }
    });

    let lambda_app = kp + epsilon * lp;
    Ok(Quasimode {
        p,
        delta,
        epsilon,
        branch,
        alpha,
        lambda_prime: lp,
        lambda_app,
        tau_app: 1.0 / (1.0 + lambda_app),
        degenerate,
        uprime_coeffs,
        resonant,
        profile: profile.clone(),
    })
}

impl Quasimode {
    pub fn theta(&self) -> f64 {
        self.delta * self.epsilon
    }

    pub fn u0(&self, x: f64, z: f64) -> Jet {
        flat_mode_jet(self.p, x, z)
            .scale(self.alpha[0])
            .add(flat_mode_jet(-self.p, x, z).scale(self.alpha[1]))
    }

    /// The part α₊E_p + α₋E_{−p} of the corrector.
    pub fn e_part(&self, x: f64, z: f64) -> Jet {
        let bj = BottomJet::at(&self.profile, x);
        e_mode_jet(self.p, bj, x, z)
            .scale(self.alpha[0])
            .add(e_mode_jet(-self.p, bj, x, z).scale(self.alpha[1]))
    }

    pub fn uprime(&self, x: f64, z: f64) -> Jet {
        let mut j = self.e_part(x, z);
        for (&k, &(beta, gamma)) in &self.uprime_coeffs {
            let m = ModeProfile {
                beta,
                gamma,
                forcing: ZERO,
            };
            j = j.add(Jet::separable(plane_wave(k, x), m.vertical(k, self.p, z)));
        }
        for (i, k) in [self.p, -self.p].into_iter().enumerate() {
            j = j.add(Jet::separable(plane_wave(k, x), self.resonant[i].vertical(k, self.p, z)));
        }
        j
    }

    /// Unnormalized surface Fourier coefficients of U⁰ + εU'.
    pub fn trace_modes(&self) -> BTreeMap<i64, C> {
        let mut out = BTreeMap::new();
        for (&k, &(beta, gamma)) in &self.uprime_coeffs {
            let m = ModeProfile {
                beta,
                gamma,
                forcing: ZERO,
            };
            out.insert(k, self.epsilon * m.surface_value(k, self.p));
        }
        for (i, k) in [self.p, -self.p].into_iter().enumerate() {
            out.insert(k, self.alpha[i] + self.epsilon * self.resonant[i].surface_value(k, self.p));
        }
        out
    }
}

/// ξ^app on the solver's trace modes, unit norm.
pub fn surface_trace(qm: &Quasimode, grid: &SpectralGrid) -> Result<Vec<C>> {
    let mut xi = vec![ZERO; grid.n_x];
    for (k, c) in qm.trace_modes() {
        match grid.mode_index(k) {
            Some(i) => xi[i] = c,
            None => return Err(Error::GridTooSmall { mode: k, n_x: grid.n_x }),
        }
    }
    let norm = xi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    Ok(xi.into_iter().map(|c| c / norm).collect())
}

/// ‖(1+G_{δε}[εb])⁻¹ξ^app − τ^app ξ^app‖ through the discrete solver.
pub fn residual(qm: &Quasimode, profile: &BathymetryProfile, grid: &SpectralGrid) -> Result<f64> {
    let xi = surface_trace(qm, grid)?;
    let op = DnoOperator::assemble(profile, qm.epsilon, qm.theta(), grid)?;
    let r = op.apply_resolvent(&xi)?;
    Ok(r.iter()
        .zip(&xi)
        .map(|(r, x)| (r - qm.tau_app * x).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Same residual from an already computed resolvent compression.
pub fn spectrum_residual(qm: &Quasimode, spectrum: &DnoSpectrum) -> Result<f64> {
    check_spectrum_matches(qm, spectrum)?;
    let xi = surface_trace(qm, &spectrum.grid)?;
    let r = &spectrum.resolvent_matrix;
    let n = xi.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut s = ZERO;
        for j in 0..n {
            s += r[(i, j)] * xi[j];
        }
        acc += (s - qm.tau_app * xi[i]).norm_sqr();
    }
    Ok(acc.sqrt())
}

fn check_spectrum_matches(qm: &Quasimode, spectrum: &DnoSpectrum) -> Result<()> {
    if spectrum.epsilon != qm.epsilon || (spectrum.theta - qm.theta()).abs() > 1e-14 {
        return Err(Error::Precondition(format!(
            "spectrum at (theta, epsilon) = ({}, {}) does not match quasimode ({}, {})",
            spectrum.theta,
            spectrum.epsilon,
            qm.theta(),
            qm.epsilon
        )));
    }
    Ok(())
}

/// An eigenvalue located by a quasimode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub index: usize,
    pub matched_lambda: f64,
    pub matched_tau: f64,
    /// Bound on |λ − λ^app| implied by the residual.
    pub error_bound: f64,
    pub residual: f64,
    /// False when the residual is at least half the distance to a neighbouring τ,
    /// so the match need not single out one eigenvalue.
    pub informative: bool,
}

pub fn certify_eigenvalue(qm: &Quasimode, spectrum: &DnoSpectrum) -> Result<Certificate> {
    let r = spectrum_residual(qm, spectrum)?;
    certify_with_residual(qm, spectrum, r)
}

pub fn certify_with_residual(qm: &Quasimode, spectrum: &DnoSpectrum, residual: f64) -> Result<Certificate> {
    check_spectrum_matches(qm, spectrum)?;
    let taus = &spectrum.taus;
    let (index, distance) = taus
        .iter()
        .map(|t| (t - qm.tau_app).abs())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Precondition("empty spectrum".into()))?;
    // Allow for rounding in the residual and eigenvalues themselves.
    let slack = 64.0 * f64::EPSILON;
    if distance > residual + slack {
        return Err(Error::CertificationFailure {
            tau_app: qm.tau_app,
            residual,
            nearest_distance: distance,
        });
    }
    let tau = taus[index];
    let mut spacing = f64::INFINITY;
    if index > 0 {
        spacing = spacing.min((taus[index - 1] - tau).abs());
    }
    if index + 1 < taus.len() {
        spacing = spacing.min((taus[index + 1] - tau).abs());
    }
    Ok(Certificate {
        index,
        matched_lambda: spectrum.eigenvalues[index],
        matched_tau: tau,
        error_bound: residual / (tau * qm.tau_app),
        residual,
        informative: residual < 0.5 * spacing,
    })
}

/// Quadrature sizes for integrals over the strip: trapezoid points in x,
/// Gauss-Legendre points in z.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadratureSizes {
    pub n_x: usize,
    pub n_z: usize,
}

impl Default for QuadratureSizes {
    fn default() -> Self {
        Self { n_x: 64, n_z: 40 }
    }
}

struct StripQuadrature {
    xs: Vec<f64>,
    zs: Vec<f64>,
    wz: Vec<f64>,
    wx: f64,
}

impl StripQuadrature {
    /// The x rule is enlarged when needed so integrands with modes up to
    /// `band_limit` are integrated exactly.
    fn new(sizes: QuadratureSizes, band_limit: usize) -> Self {
        let n_x = sizes.n_x.max(band_limit + 1);
        let xs = (0..n_x).map(|i| 2.0 * PI * i as f64 / n_x as f64).collect();
        let (zs, wz) = gauss_legendre(sizes.n_z, -1.0, 0.0);
        Self {
            xs,
            zs,
            wz,
            wx: 2.0 * PI / n_x as f64,
        }
    }

    fn integrate(&self, mut f: impl FnMut(f64, f64) -> C) -> C {
        let mut acc = ZERO;
        for &x in &self.xs {
            for (&z, &w) in self.zs.iter().zip(&self.wz) {
                acc += w * f(x, z);
            }
        }
        acc * self.wx
    }
}

/// ∫_S Q₁∇Φ_a·∇Φ̄_b for the pairs (p, p), (p, −p), (−p, p), with the closed forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppendixIntegrals {
    pub p: i64,
    pub self_term: C,
    pub cross_minus: C,
    pub cross_plus: C,
    pub expected: [C; 3],
}

impl AppendixIntegrals {
    pub fn max_error(&self) -> f64 {
        [self.self_term, self.cross_minus, self.cross_plus]
            .iter()
            .zip(&self.expected)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

pub fn appendix_integrals(p: i64, profile: &BathymetryProfile, sizes: QuadratureSizes) -> Result<AppendixIntegrals> {
    if p < 1 {
        return Err(Error::Precondition(format!("integrals need p >= 1, got {p}")));
    }
    let quad = StripQuadrature::new(sizes, 2 * (p as usize + profile.max_mode()) + 2);
    let form = |a: i64, b: i64| {
        quad.integrate(|x, z| {
            let bj = BottomJet::at(profile, x);
            let u = flat_mode_jet(a, x, z);
            let v = flat_mode_jet(b, x, z);
            let fx = -bj.b * u.x + z * bj.d * u.z;
            let fz = z * bj.d * u.x + bj.b * u.z;
            fx * v.x.conj() + fz * v.z.conj()
        })
    };
    let f = 2.0 * PI * gap_factor(2 * p);
    let b2p = profile.fourier_coefficient(2 * p);
    Ok(AppendixIntegrals {
        p,
        self_term: form(p, p),
        cross_minus: form(p, -p),
        cross_plus: form(-p, p),
        expected: [ZERO, f * b2p.conj(), f * b2p],
    })
}

/// Sampling and quadrature sizes for [`appendix_identities`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdentityGrid {
    pub x_samples: usize,
    pub z_samples: usize,
    pub quadrature: QuadratureSizes,
}

impl Default for IdentityGrid {
    fn default() -> Self {
        Self {
            x_samples: 33,
            z_samples: 17,
            quadrature: QuadratureSizes::default(),
        }
    }
}

/// Residuals of the closed-form corrector identities (max norms).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    /// −ΔE_{±p} − div(Q₁∇Φ_{±p}) at interior samples.
    pub e_laplacian: f64,
    /// −ΔU' − div(Q₁∇U⁰) − 2iδ∂ₓU⁰ at interior samples.
    pub uprime_interior: f64,
    /// ∂_zU' + (Q₁∇U⁰)·e_z on the bottom.
    pub uprime_bottom: f64,
    /// ∂_zU' − κ_pU' + (Q₁∇U⁰)·e_z − λ'U⁰ on the surface.
    pub uprime_surface: f64,
    /// |∫ΔE·E_{βp} + ∫Q₂∇U⁰·∇Φ_{βp}| over U⁰ ∈ {Φ_p, Φ_{−p}}, β = ±.
    pub claim: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.e_laplacian,
            self.uprime_interior,
            self.uprime_bottom,
            self.uprime_surface,
            self.claim,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Deltas at which the corrector equations are checked.
const IDENTITY_DELTAS: [f64; 2] = [0.0, 0.7];

pub fn appendix_identities(p: i64, profile: &BathymetryProfile, grid: IdentityGrid) -> Result<IdentityResiduals> {
    if p < 1 {
        return Err(Error::Precondition(format!("identities need p >= 1, got {p}")));
    }
    let xs: Vec<f64> = (0..grid.x_samples)
        .map(|i| 2.0 * PI * i as f64 / grid.x_samples as f64)
        .collect();
    let zs: Vec<f64> = (0..grid.z_samples)
        .map(|j| -1.0 + (j + 1) as f64 / (grid.z_samples + 1) as f64)
        .collect();
    let mut out = IdentityResiduals::default();

    for &x in &xs {
        let bj = BottomJet::at(profile, x);
        for &z in &zs {
            for k in [p, -p] {
                let e = e_mode_jet(k, bj, x, z);
                let r = -e.laplacian() - div_q1_grad(&flat_mode_jet(k, x, z), bj, z);
                out.e_laplacian = out.e_laplacian.max(r.norm());
            }
        }
    }

    let kp = kappa(p, 0.0);
    for delta in IDENTITY_DELTAS {
        for branch in [Branch::Plus, Branch::Minus] {
            let qm = build_quasimode(p, delta, 0.0, profile, branch)?;
            for &x in &xs {
                let bj = BottomJet::at(profile, x);
                for &z in &zs {
                    let u0 = qm.u0(x, z);
                    let u1 = qm.uprime(x, z);
                    let r = -u1.laplacian() - div_q1_grad(&u0, bj, z) - 2.0 * C::new(0.0, delta) * u0.x;
                    out.uprime_interior = out.uprime_interior.max(r.norm());
                }
                let (u0, u1) = (qm.u0(x, -1.0), qm.uprime(x, -1.0));
                out.uprime_bottom = out.uprime_bottom.max((u1.z + q1_flux_z(&u0, bj, -1.0)).norm());
                let (u0, u1) = (qm.u0(x, 0.0), qm.uprime(x, 0.0));
                let r = u1.z - kp * u1.v + q1_flux_z(&u0, bj, 0.0) - qm.lambda_prime * u0.v;
                out.uprime_surface = out.uprime_surface.max(r.norm());
            }
        }
    }

    let quad = StripQuadrature::new(grid.quadrature, 4 * (p as usize + profile.max_mode()) + 2);
    for a in [p, -p] {
        for bsign in [p, -p] {
            let v = quad.integrate(|x, z| {
                let bj = BottomJet::at(profile, x);
                let lap_e = e_mode_jet(a, bj, x, z).laplacian();
                let e_beta = e_mode_jet(bsign, bj, x, z).v;
                let u0 = flat_mode_jet(a, x, z);
                let phi = flat_mode_jet(bsign, x, z);
                let q22 = bj.b * bj.b + (z * bj.d) * (z * bj.d);
                lap_e * e_beta + q22 * u0.z * phi.z
            });
            out.claim = out.claim.max(v.norm());
        }
    }
    Ok(out)
}
