//! Galerkin discretization of the straightened-strip problem and the resolvent
//! compression onto surface Fourier modes.
//!
//! Unknowns are ordered mode-major: index = mode_index·(n_z+1) + j, with basis
//! e^{ikx}·T_j(2z+1). The x-measure is normalized by 1/2π, so the trace modes
//! e^{ikx} are orthonormal and coupling between modes k and k' picks out the
//! Fourier coefficient of lag k' − k.

use std::sync::Once;

use faer::linalg::triangular_solve::solve_lower_triangular_in_place_with_conj;
use faer::linalg::solvers::Solve;
use faer::{Conj, Mat, Par, Side};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::bathymetry::BathymetryProfile;
use crate::error::{Error, Result};
use crate::quadrature::{chebyshev_derivatives, chebyshev_values, gauss_legendre};

type C = Complex64;

const I: C = C::new(0.0, 1.0);

static SEQUENTIAL: Once = Once::new();

/// Dense kernels run single-threaded; parallelism happens across solves, which
/// keeps results independent of the thread count.
fn force_sequential_kernels() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Discretization parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpectralGrid {
    pub n_x: usize,
    pub n_z: usize,
    pub oversample: usize,
}

impl Default for SpectralGrid {
    fn default() -> Self {
        Self {
            n_x: 64,
            n_z: 32,
            oversample: 4,
        }
    }
}

impl SpectralGrid {
    pub fn new(n_x: usize, n_z: usize, oversample: usize) -> Result<Self> {
        let g = Self { n_x, n_z, oversample };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x < 2 || self.n_x % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n_x must be even and positive, got {}", self.n_x)));
        }
        if self.n_z < 8 {
            return Err(Error::InvalidGrid(format!("n_z must be at least 8, got {}", self.n_z)));
        }
        if self.oversample < 2 {
            return Err(Error::InvalidGrid(format!(
                "oversample must be at least 2, got {}",
                self.oversample
            )));
        }
        Ok(())
    }

    /// Checks the grid resolves every bottom mode with room for coupling.
    pub fn validate_for(&self, profile: &BathymetryProfile) -> Result<()> {
        self.validate()?;
        let need = 2 * profile.max_mode() + 2;
        if self.n_x < need {
            return Err(Error::InvalidGrid(format!(
                "n_x = {} is too small for a profile with max mode {} (need at least {need})",
                self.n_x,
                profile.max_mode()
            )));
        }
        Ok(())
    }

    pub fn min_mode(&self) -> i64 {
        1 - (self.n_x / 2) as i64
    }

    pub fn max_mode(&self) -> i64 {
        (self.n_x / 2) as i64
    }

    pub fn mode_of(&self, index: usize) -> i64 {
        index as i64 + self.min_mode()
    }

    pub fn mode_index(&self, k: i64) -> Option<usize> {
        (self.min_mode()..=self.max_mode())
            .contains(&k)
            .then(|| (k - self.min_mode()) as usize)
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        self.min_mode()..=self.max_mode()
    }

    pub fn x_points(&self) -> usize {
        self.oversample * self.n_x
    }

    pub fn z_points(&self) -> usize {
        self.n_z + 4
    }

    /// Number of Galerkin unknowns.
    pub fn dofs(&self) -> usize {
        self.n_x * (self.n_z + 1)
    }
}

/// P(Σ) = [[J, εzb'], [εzb', (1 + ε²z²b'²)/J]] with J = 1 − εb, at one point.
pub fn p_matrix(profile: &BathymetryProfile, epsilon: f64, x: f64, z: f64) -> [[f64; 2]; 2] {
    let b = profile.evaluate(x);
    let bp = profile.derivative(x);
    let jac = 1.0 - epsilon * b;
    let off = epsilon * z * bp;
    [[jac, off], [off, (1.0 + off * off) / jac]]
}

/// Coefficient Q_k of ε^k in the expansion of P(Σ) about the flat strip.
pub fn q_series_term(profile: &BathymetryProfile, order: usize, x: f64, z: f64) -> [[f64; 2]; 2] {
    assert!(order >= 1, "series order starts at 1");
    let b = profile.evaluate(x);
    let zbp = z * profile.derivative(x);
    if order == 1 {
        return [[-b, zbp], [zbp, b]];
    }
    let k = order as i32;
    [[0.0, 0.0], [0.0, b.powi(k) + zbp * zbp * b.powi(k - 2)]]
}

/// Coefficient functions of the straightened problem for one ε.
#[derive(Clone, Debug)]
pub struct TransformCoefficients {
    pub epsilon: f64,
    pub grid: SpectralGrid,
    pub x_nodes: Vec<f64>,
    pub z_nodes: Vec<f64>,
    pub z_weights: Vec<f64>,
    /// Tensor samples, index iz·x_nodes.len() + ix.
    pub p11: Vec<f64>,
    pub p12: Vec<f64>,
    pub p22: Vec<f64>,
    /// First column P·e₁, the vector multiplying the Bloch shift iθ.
    pub drift: Vec<[f64; 2]>,
    /// Jacobian 1 − εb(x), per x node.
    pub weight: Vec<f64>,
    // Fourier coefficients of the x-factors at lags −(n_x−1)..=(n_x−1).
    jac_hat: Vec<C>,
    slope_hat: Vec<C>,
    inv_jac_hat: Vec<C>,
    slope2_inv_jac_hat: Vec<C>,
}

impl TransformCoefficients {
    fn lag(&self, v: &[C], m: i64) -> C {
        v[(m + self.grid.n_x as i64 - 1) as usize]
    }

    pub fn p_at(&self, ix: usize, iz: usize) -> [[f64; 2]; 2] {
        let i = iz * self.x_nodes.len() + ix;
        [[self.p11[i], self.p12[i]], [self.p12[i], self.p22[i]]]
    }
}

pub fn build_coefficients(
    profile: &BathymetryProfile,
    epsilon: f64,
    grid: &SpectralGrid,
) -> Result<TransformCoefficients> {
    grid.validate()?;
    profile.check_epsilon(epsilon)?;
    let m = grid.x_points();
    let n_x = grid.n_x;
    let x_nodes: Vec<f64> = (0..m).map(|i| 2.0 * std::f64::consts::PI * i as f64 / m as f64).collect();
    let (z_nodes, z_weights) = gauss_legendre(grid.z_points(), -1.0, 0.0);

    let b: Vec<f64> = x_nodes.iter().map(|&x| profile.evaluate(x)).collect();
    let bp: Vec<f64> = x_nodes.iter().map(|&x| profile.derivative(x)).collect();
    let weight: Vec<f64> = b.iter().map(|b| 1.0 - epsilon * b).collect();

    let nz = z_nodes.len();
    let mut p11 = Vec::with_capacity(m * nz);
    let mut p12 = Vec::with_capacity(m * nz);
    let mut p22 = Vec::with_capacity(m * nz);
    let mut drift = Vec::with_capacity(m * nz);
    for &z in &z_nodes {
        for ix in 0..m {
            let jac = weight[ix];
            let off = epsilon * z * bp[ix];
            p11.push(jac);
            p12.push(off);
            p22.push((1.0 + off * off) / jac);
            drift.push([jac, off]);
        }
    }

    // J and b' are trigonometric polynomials: take their coefficients exactly.
    let lags = 2 * n_x - 1;
    let mut jac_hat = vec![C::new(0.0, 0.0); lags];
    let mut slope_hat = vec![C::new(0.0, 0.0); lags];
    for (k, c) in profile.modes() {
        if k.unsigned_abs() as usize <= n_x - 1 {
            let i = (k + n_x as i64 - 1) as usize;
            jac_hat[i] = -epsilon * c;
            slope_hat[i] = I * k as f64 * c;
        }
    }
    jac_hat[n_x - 1] += 1.0;

    // 1/J and b'²/J are not band-limited; sample on the oversampled grid.
    let inv_jac: Vec<f64> = weight.iter().map(|j| 1.0 / j).collect();
    let slope2_inv_jac: Vec<f64> = bp.iter().zip(&weight).map(|(s, j)| s * s / j).collect();
    let inv_jac_hat = fourier_lags(&inv_jac, n_x);
    let slope2_inv_jac_hat = fourier_lags(&slope2_inv_jac, n_x);

    Ok(TransformCoefficients {
        epsilon,
        grid: *grid,
        x_nodes,
        z_nodes,
        z_weights,
        p11,
        p12,
        p22,
        drift,
        weight,
        jac_hat,
        slope_hat,
        inv_jac_hat,
        slope2_inv_jac_hat,
    })
}

/// Coefficients ĉ_m, |m| ≤ n_x − 1, of real samples on a uniform periodic grid,
/// made exactly conjugate-symmetric.
fn fourier_lags(samples: &[f64], n_x: usize) -> Vec<C> {
    let m = samples.len();
    let mut buf: Vec<C> = samples.iter().map(|&v| C::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut out = vec![C::new(0.0, 0.0); 2 * n_x - 1];
    for lag in 0..n_x {
        let c = buf[lag] * scale;
        let c = if lag == 0 { C::new(c.re, 0.0) } else { c };
        out[n_x - 1 + lag] = c;
        out[n_x - 1 - lag] = c.conj();
    }
    out
}

/// Vertical Gram matrices of the Chebyshev basis on [−1, 0].
struct VerticalMatrices {
    /// ∫ T_i T_j
    mass: Vec<f64>,
    /// ∫ ∂T_i ∂T_j
    stiff: Vec<f64>,
    /// ∫ z² ∂T_i ∂T_j
    stiff_z2: Vec<f64>,
    /// cross[i·n + j] = ∫ z T_i ∂T_j
    cross: Vec<f64>,
    n: usize,
}

impl VerticalMatrices {
    fn new(n_z: usize, nodes: &[f64], weights: &[f64]) -> Self {
        let n = n_z + 1;
        let mut mass = vec![0.0; n * n];
        let mut stiff = vec![0.0; n * n];
        let mut stiff_z2 = vec![0.0; n * n];
        let mut cross = vec![0.0; n * n];
        for (&z, &w) in nodes.iter().zip(weights) {
            let t = 2.0 * z + 1.0;
            let v = chebyshev_values(n_z, t);
            let d: Vec<f64> = chebyshev_derivatives(n_z, t).iter().map(|d| 2.0 * d).collect();
            for i in 0..n {
                for j in 0..n {
                    mass[i * n + j] += w * v[i] * v[j];
                    stiff[i * n + j] += w * d[i] * d[j];
                    stiff_z2[i * n + j] += w * z * z * d[i] * d[j];
                    cross[i * n + j] += w * z * v[i] * d[j];
                }
            }
        }
        Self {
            mass,
            stiff,
            stiff_z2,
            cross,
            n,
        }
    }
}

/// Hermitian stiffness matrix of the resolvent problem (form plus surface mass)
/// together with its relative Hermiticity defect ‖A − Aᴴ‖_F / ‖A‖_F.
pub fn stiffness_matrix(coeffs: &TransformCoefficients, theta: f64) -> (Mat<C>, f64) {
    let grid = coeffs.grid;
    let vm = VerticalMatrices::new(grid.n_z, &coeffs.z_nodes, &coeffs.z_weights);
    let nb = vm.n;
    let eps = coeffs.epsilon;
    let dofs = grid.dofs();
    let mut a = Mat::<C>::zeros(dofs, dofs);
    for col_mode in 0..grid.n_x {
        let k = grid.mode_of(col_mode);
        let kt = k as f64 + theta;
        for row_mode in 0..grid.n_x {
            let kp = grid.mode_of(row_mode);
            let kpt = kp as f64 + theta;
            let lag = kp - k;
            let c_mass = coeffs.lag(&coeffs.jac_hat, lag) * (kt * kpt);
            let slope = coeffs.lag(&coeffs.slope_hat, lag) * eps;
            let c_col = slope * I * kt;
            let c_row = -slope * I * kpt;
            let c_stiff = coeffs.lag(&coeffs.inv_jac_hat, lag);
            let c_stiff2 = coeffs.lag(&coeffs.slope2_inv_jac_hat, lag) * (eps * eps);
            let surface = if lag == 0 { 1.0 } else { 0.0 };
            for j in 0..nb {
                let col = col_mode * nb + j;
                for jp in 0..nb {
                    let row = row_mode * nb + jp;
                    let ij = jp * nb + j;
                    let v = c_mass * vm.mass[ij]
                        + c_col * vm.cross[j * nb + jp]
                        + c_row * vm.cross[jp * nb + j]
                        + c_stiff * vm.stiff[ij]
                        + c_stiff2 * vm.stiff_z2[ij]
                        + surface;
                    a[(row, col)] = v;
                }
            }
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..dofs {
        for i in 0..dofs {
            num += (a[(i, j)] - a[(j, i)].conj()).norm_sqr();
            den += a[(i, j)].norm_sqr();
        }
    }
    let defect = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    (a, defect)
}

/// Factored resolvent problem for one (θ, ε).
pub struct DnoOperator {
    pub theta: f64,
    pub epsilon: f64,
    pub grid: SpectralGrid,
    pub stiffness_defect: f64,
    factor: faer::linalg::solvers::Llt<C>,
}

impl DnoOperator {
    pub fn assemble(profile: &BathymetryProfile, epsilon: f64, theta: f64, grid: &SpectralGrid) -> Result<Self> {
        force_sequential_kernels();
        let inner = || -> Result<Self> {
            grid.validate_for(profile)?;
            let coeffs = build_coefficients(profile, epsilon, grid)?;
            let (a, stiffness_defect) = stiffness_matrix(&coeffs, theta);
            let factor = match a.llt(Side::Lower) {
                Ok(f) => f,
                Err(_) => {
                    let min_rayleigh = a
                        .self_adjoint_eigenvalues(Side::Lower)
                        .ok()
                        .and_then(|v| v.first().copied())
                        .unwrap_or(f64::NAN);
                    return Err(Error::NumericalBreakdown { min_rayleigh });
                }
            };
            Ok(Self {
                theta,
                epsilon,
                grid: *grid,
                stiffness_defect,
                factor,
            })
        };
        inner().map_err(|e| e.at(theta, epsilon))
    }

    fn block(&self) -> usize {
        self.grid.n_z + 1
    }

    /// Trace of the resolvent solution for surface data ξ (trace-mode coefficients).
    pub fn apply_resolvent(&self, xi: &[C]) -> Result<Vec<C>> {
        if xi.len() != self.grid.n_x {
            return Err(Error::Precondition(format!(
                "surface vector has length {}, expected n_x = {}",
                xi.len(),
                self.grid.n_x
            )));
        }
        let nb = self.block();
        let mut rhs = Mat::<C>::zeros(self.grid.dofs(), 1);
        for (m, &c) in xi.iter().enumerate() {
            for j in 0..nb {
                rhs[(m * nb + j, 0)] = c;
            }
        }
        self.factor.solve_in_place(rhs.as_mut());
        Ok((0..self.grid.n_x)
            .map(|m| (0..nb).map(|j| rhs[(m * nb + j, 0)]).sum())
            .collect())
    }

    /// R = Eᴴ A⁻¹ E computed as WᴴW with W = L⁻¹E, plus the Hermiticity defect of
    /// the product before symmetrization.
    pub fn resolvent_matrix(&self) -> (Mat<C>, f64) {
        let nb = self.block();
        let n_x = self.grid.n_x;
        let mut w = Mat::<C>::zeros(self.grid.dofs(), n_x);
        for m in 0..n_x {
            for j in 0..nb {
                w[(m * nb + j, m)] = C::new(1.0, 0.0);
            }
        }
        solve_lower_triangular_in_place_with_conj(self.factor.L(), Conj::No, w.as_mut(), Par::Seq);
        let r = w.adjoint() * &w;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n_x {
            for i in 0..n_x {
                num += (r[(i, j)] - r[(j, i)].conj()).norm_sqr();
                den += r[(i, j)].norm_sqr();
            }
        }
        let sym = Mat::<C>::from_fn(n_x, n_x, |i, j| 0.5 * (r[(i, j)] + r[(j, i)].conj()));
        (sym, if den > 0.0 { (num / den).sqrt() } else { 0.0 })
    }

    pub fn spectrum(&self) -> Result<DnoSpectrum> {
        let (r, resolvent_defect) = self.resolvent_matrix();
        let n_x = self.grid.n_x;
        let evd = r
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::NumericalBreakdown { min_rayleigh: f64::NAN }.at(self.theta, self.epsilon))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        // τ ascending ↔ λ descending; reverse so λ is ascending.
        let mut taus = Vec::with_capacity(n_x);
        let mut eigenvectors = Mat::<C>::zeros(n_x, n_x);
        for (out, src) in (0..n_x).rev().enumerate() {
            taus.push(s[src].re);
            let mut big = 0;
            for i in 0..n_x {
                if u[(i, src)].norm() > u[(big, src)].norm() {
                    big = i;
                }
            }
            let phase = u[(big, src)].conj() / u[(big, src)].norm();
            for i in 0..n_x {
                eigenvectors[(i, out)] = u[(i, src)] * phase;
            }
            eigenvectors[(big, out)] = C::new(u[(big, src)].norm(), 0.0);
        }
        if let Some(&t) = taus.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::NumericalBreakdown { min_rayleigh: t }.at(self.theta, self.epsilon));
        }
        let eigenvalues = taus.iter().map(|t| 1.0 / t - 1.0).collect();
        Ok(DnoSpectrum {
            theta: self.theta,
            epsilon: self.epsilon,
            grid: self.grid,
            resolvent_matrix: r,
            resolvent_defect,
            stiffness_defect: self.stiffness_defect,
            taus,
            eigenvalues,
            eigenvectors,
        })
    }
}

/// Spectral data of the discrete operator at one (θ, ε).
#[derive(Clone, Debug)]
pub struct DnoSpectrum {
    pub theta: f64,
    pub epsilon: f64,
    pub grid: SpectralGrid,
    /// Symmetrized resolvent compression, rows/columns indexed by trace mode.
    pub resolvent_matrix: Mat<C>,
    /// Relative Hermiticity defect of the compression before symmetrization.
    pub resolvent_defect: f64,
    pub stiffness_defect: f64,
    /// τ_n = 1/(1 + λ_n), in the order of `eigenvalues`.
    pub taus: Vec<f64>,
    /// λ_n ascending.
    pub eigenvalues: Vec<f64>,
    /// Column n is the unit trace-mode vector of λ_n.
    pub eigenvectors: Mat<C>,
}

impl DnoSpectrum {
    pub fn eigenvector(&self, n: usize) -> Vec<C> {
        (0..self.grid.n_x).map(|i| self.eigenvectors[(i, n)]).collect()
    }
}

pub fn assemble_dno(
    profile: &BathymetryProfile,
    epsilon: f64,
    theta: f64,
    grid: &SpectralGrid,
) -> Result<DnoSpectrum> {
    DnoOperator::assemble(profile, epsilon, theta, grid)?.spectrum()
}

pub fn apply_resolvent(
    profile: &BathymetryProfile,
    epsilon: f64,
    theta: f64,
    grid: &SpectralGrid,
    xi: &[C],
) -> Result<Vec<C>> {
    DnoOperator::assemble(profile, epsilon, theta, grid)?.apply_resolvent(xi)
}
