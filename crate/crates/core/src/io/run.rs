//! The experiments behind each CLI subcommand and their JSON reports.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Experiment, GridSpec, ThetaGridSpec};
use super::output::{band_csv, band_svg};
use crate::bands::{detect_gap, sweep, BandStructure};
use crate::bathymetry::BathymetryProfile;
use crate::error::{Error, Result};
use crate::flat::kappa;
use crate::operator::{assemble_dno, SpectralGrid};
use crate::predictor::{
    gap_edges_order1, gap_edges_order2, gap_factor, j_sum, s_sum, slope_factor, GapLocation, GapPrediction,
};
use crate::quasimode::{
    appendix_identities, appendix_integrals, build_quasimode, certify_eigenvalue, residual, Branch, Certificate,
    IdentityGrid, QuadratureSizes,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Runs `f` on a pool of `threads` workers, or on the global pool when 0.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_file(dir, name, &text)
}

/// One band structure per ε of the configuration.
pub fn compute_bands(exp: &Experiment) -> Result<Vec<BandStructure>> {
    exp.config
        .epsilon_list
        .iter()
        .map(|&eps| sweep(&exp.profile, eps, &exp.grid, &exp.theta_grid, exp.config.n_bands))
        .collect()
}

pub fn band_file_stem(epsilon: f64) -> String {
    format!("bands_eps{epsilon}")
}

/// Computes the bands and writes a CSV table and an SVG plot per ε.
pub fn run_bands(exp: &Experiment, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for b in compute_bands(exp)? {
        let stem = band_file_stem(b.epsilon);
        written.push(write_file(out, &format!("{stem}.csv"), &band_csv(&b)?)?);
        written.push(write_file(out, &format!("{stem}.svg"), &band_svg(&b))?);
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuredGap {
    pub lower_max: f64,
    pub upper_min: f64,
    pub width: f64,
    pub center: f64,
    pub argmax_theta: f64,
    pub argmin_theta: f64,
    pub resolution_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedGap {
    pub order: u8,
    pub lower_edge: f64,
    pub upper_edge: f64,
    pub center: f64,
    pub half_width: f64,
    pub inconclusive: bool,
}

impl From<&GapPrediction> for PredictedGap {
    fn from(g: &GapPrediction) -> Self {
        Self {
            order: g.order,
            lower_edge: g.lower_edge,
            upper_edge: g.upper_edge,
            center: g.center,
            half_width: g.half_width,
            inconclusive: g.inconclusive,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapReportEntry {
    pub p: i64,
    pub location: GapLocation,
    pub epsilon: f64,
    pub lower_band: usize,
    pub measured: MeasuredGap,
    pub predicted: Option<PredictedGap>,
    /// Relative width deviation, or absolute when the predicted width is zero.
    pub deviation: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapReport {
    pub schema: String,
    pub schema_version: u32,
    pub profile_digest: String,
    pub grid: GridSpec,
    pub theta_grid: ThetaGridSpec,
    pub gap_tolerance: f64,
    pub entries: Vec<GapReportEntry>,
}

impl GapReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass != Some(false))
    }
}

/// The predictor that applies to a gap, honouring the enabled orders.
pub fn choose_prediction(exp: &Experiment, p: i64, location: GapLocation, epsilon: f64) -> Result<Option<GapPrediction>> {
    let pr = exp.config.predictors;
    let first_order_opens = exp.profile.fourier_coefficient(location.coupling_mode(p as usize)).norm() > 0.0;
    Ok(match location {
        GapLocation::Zero if !first_order_opens && pr.order2 => Some(gap_edges_order2(p, epsilon, &exp.profile)?),
        _ if pr.order1 => Some(gap_edges_order1(p, epsilon, &exp.profile, location)?),
        _ => None,
    })
}

pub fn gap_report(exp: &Experiment, bands: &[BandStructure]) -> Result<GapReport> {
    let mut entries = Vec::new();
    for b in bands {
        for pair in &exp.config.gap_pairs {
            let (p, location) = (pair.p(), pair.location());
            let lower_band = location.lower_band(p as usize);
            let g = detect_gap(b, lower_band)?;
            let measured = MeasuredGap {
                lower_max: g.lower_max,
                upper_min: g.upper_min,
                width: g.width,
                center: g.center,
                argmax_theta: g.argmax_theta,
                argmin_theta: g.argmin_theta,
                resolution_bound: g.resolution_bound,
            };
            let prediction = choose_prediction(exp, p, location, b.epsilon)?;
            let deviation = prediction.as_ref().map(|pred| {
                let w = pred.width();
                if w > 0.0 {
                    (g.width - w).abs() / w
                } else {
                    (g.width - w).abs()
                }
            });
            entries.push(GapReportEntry {
                p,
                location,
                epsilon: b.epsilon,
                lower_band,
                measured,
                predicted: prediction.as_ref().map(PredictedGap::from),
                deviation,
                pass: deviation.map(|d| d <= exp.config.gap_tolerance),
            });
        }
    }
    Ok(GapReport {
        schema: "waterbands.gap-report".into(),
        schema_version: REPORT_SCHEMA_VERSION,
        profile_digest: exp.profile.digest(),
        grid: exp.config.grid,
        theta_grid: exp.config.theta_grid,
        gap_tolerance: exp.config.gap_tolerance,
        entries,
    })
}

pub fn run_gaps(exp: &Experiment, out: &Path) -> Result<(GapReport, PathBuf)> {
    let bands = compute_bands(exp)?;
    let report = gap_report(exp, &bands)?;
    let path = write_json(out, "gap_report.json", &report)?;
    Ok((report, path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionEntry {
    pub p: i64,
    pub location: GapLocation,
    pub epsilon: f64,
    pub prediction: Option<PredictedGap>,
    pub gap_factor: f64,
    pub slope_factor: Option<f64>,
    /// Slope of the unperturbed band at the crossing, by central difference.
    pub flat_slope: f64,
    pub second_order_shift: Option<f64>,
    pub second_order_coupling: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionReport {
    pub schema: String,
    pub schema_version: u32,
    pub profile_digest: String,
    pub entries: Vec<PredictionEntry>,
}

/// Closed-form gap predictions, no eigenvalue solves.
pub fn predictions(exp: &Experiment) -> Result<PredictionReport> {
    let mut entries = Vec::new();
    for &eps in &exp.config.epsilon_list {
        for pair in &exp.config.gap_pairs {
            let (p, location) = (pair.p(), pair.location());
            let h = 1e-6;
            let centre = location.theta();
            let p_flat = match location {
                GapLocation::Zero => p,
                GapLocation::Half => -p - 1,
            };
            let flat_slope = (kappa(p_flat, centre + h) - kappa(p_flat, centre - h)).abs() / (2.0 * h);
            let zero = location == GapLocation::Zero;
            let second = zero && exp.profile.fourier_coefficient(2 * p).norm() == 0.0;
            entries.push(PredictionEntry {
                p,
                location,
                epsilon: eps,
                prediction: choose_prediction(exp, p, location, eps)?.as_ref().map(PredictedGap::from),
                gap_factor: gap_factor(location.coupling_mode(p as usize)),
                slope_factor: zero.then(|| slope_factor(p)),
                flat_slope,
                second_order_shift: second.then(|| j_sum(p, &exp.profile)),
                second_order_coupling: second.then(|| s_sum(p, &exp.profile).norm()),
            });
        }
    }
    Ok(PredictionReport {
        schema: "waterbands.predictions".into(),
        schema_version: REPORT_SCHEMA_VERSION,
        profile_digest: exp.profile.digest(),
        entries,
    })
}

pub fn run_predict(exp: &Experiment, out: &Path) -> Result<(PredictionReport, PathBuf)> {
    let report = predictions(exp)?;
    let path = write_json(out, "predictions.json", &report)?;
    Ok((report, path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasimodeEntry {
    pub p: i64,
    pub delta: f64,
    pub epsilon: f64,
    pub branch: Branch,
    pub theta: f64,
    pub lambda_prime: f64,
    pub lambda_app: f64,
    pub tau_app: f64,
    pub degenerate: bool,
    pub residual: f64,
    pub certificate: Option<Certificate>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasimodeReport {
    pub schema: String,
    pub schema_version: u32,
    pub profile_digest: String,
    pub entries: Vec<QuasimodeEntry>,
}

pub fn quasimodes(exp: &Experiment) -> Result<QuasimodeReport> {
    let q = exp.config.quasimode;
    let mut entries = Vec::new();
    for &eps in &exp.config.epsilon_list {
        let spectrum = assemble_dno(&exp.profile, eps, q.delta * eps, &exp.grid)?;
        for branch in [Branch::Minus, Branch::Plus] {
            let qm = build_quasimode(q.p, q.delta, eps, &exp.profile, branch)?;
            let res = residual(&qm, &exp.profile, &exp.grid)?;
            let (certificate, failure) = match certify_eigenvalue(&qm, &spectrum) {
                Ok(c) => (Some(c), None),
                Err(e) if e.is_config_error() => return Err(e),
                Err(e) => (None, Some(e.to_string())),
            };
            entries.push(QuasimodeEntry {
                p: q.p,
                delta: q.delta,
                epsilon: eps,
                branch,
                theta: qm.theta(),
                lambda_prime: qm.lambda_prime,
                lambda_app: qm.lambda_app,
                tau_app: qm.tau_app,
                degenerate: qm.degenerate,
                residual: res,
                certificate,
                failure,
            });
        }
    }
    Ok(QuasimodeReport {
        schema: "waterbands.quasimodes".into(),
        schema_version: REPORT_SCHEMA_VERSION,
        profile_digest: exp.profile.digest(),
        entries,
    })
}

pub fn run_quasimode(exp: &Experiment, out: &Path) -> Result<(QuasimodeReport, PathBuf)> {
    let report = quasimodes(exp)?;
    let path = write_json(out, "quasimodes.json", &report)?;
    Ok((report, path))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub measured: Option<f64>,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, measured: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            status: if measured <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail },
            measured: Some(measured),
            tolerance,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationReport {
    pub schema: String,
    pub schema_version: u32,
    pub profile_digest: String,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Largest relative error of the ε = 0 spectrum against the exact flat values
/// for all modes with |k + θ| ≤ min(8, n_x/4).
pub fn flat_exactness_error(grid: &SpectralGrid, theta: f64) -> Result<f64> {
    let limit = (grid.n_x / 4).min(8) as f64;
    let mut exact: Vec<f64> = grid
        .modes()
        .filter(|&k| (k as f64 + theta).abs() <= limit)
        .map(|k| kappa(k, theta))
        .collect();
    exact.sort_by(f64::total_cmp);
    let s = assemble_dno(&BathymetryProfile::flat(), 0.0, theta, grid)?;
    Ok(exact
        .iter()
        .zip(&s.eigenvalues)
        .map(|(e, n)| (n - e).abs() / e.max(1.0))
        .fold(0.0, f64::max))
}

fn coupled_modes(exp: &Experiment) -> Vec<i64> {
    let set: BTreeSet<i64> = exp
        .config
        .gap_pairs
        .iter()
        .filter(|g| g.location() == GapLocation::Zero)
        .map(|g| g.p())
        .collect();
    if set.is_empty() {
        vec![exp.config.quasimode.p]
    } else {
        set.into_iter().collect()
    }
}

/// Internal consistency checks of the solver and the constructions.
pub fn validate(exp: &Experiment) -> Result<ValidationReport> {
    let tol = exp.config.tolerances;
    let grid = &exp.grid;
    let profile = &exp.profile;
    let mut checks = Vec::new();

    let thetas = [0.0, 0.17, 0.25, 0.5];
    let mut worst = 0.0f64;
    for &t in &thetas {
        worst = worst.max(flat_exactness_error(grid, t)?);
    }
    checks.push(Check::at_most(
        "flat_exactness",
        worst,
        tol.flat_match,
        format!("epsilon = 0 at theta in {thetas:?}"),
    ));

    let eps = exp.config.epsilon_list.iter().copied().fold(0.0, f64::max);
    let at_zero = assemble_dno(profile, eps, 0.0, grid)?;
    checks.push(Check::at_most(
        "kernel",
        at_zero.eigenvalues[0].abs(),
        tol.kernel,
        format!("lowest eigenvalue at theta = 0, epsilon = {eps}"),
    ));

    let n = exp.config.n_bands;
    let mut min_lambda = at_zero.eigenvalues[0];
    let mut even = 0.0f64;
    for t in [0.1, 0.3] {
        let a = assemble_dno(profile, eps, t, grid)?;
        let b = assemble_dno(profile, eps, -t, grid)?;
        min_lambda = min_lambda.min(a.eigenvalues[0]).min(b.eigenvalues[0]);
        for (x, y) in a.eigenvalues[..n].iter().zip(&b.eigenvalues[..n]) {
            even = even.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    checks.push(Check::at_most(
        "evenness",
        even,
        tol.evenness,
        format!("first {n} eigenvalues at theta = +-0.1, +-0.3, epsilon = {eps}"),
    ));
    checks.push(Check::at_most(
        "positivity",
        (-min_lambda).max(0.0),
        tol.positivity,
        format!("most negative eigenvalue seen was {min_lambda:e}"),
    ));

    let ps = coupled_modes(exp);
    let mut integral_err = 0.0f64;
    let mut identity_err = 0.0f64;
    for &p in &ps {
        integral_err = integral_err.max(appendix_integrals(p, profile, QuadratureSizes::default())?.max_error());
        identity_err = identity_err.max(appendix_identities(p, profile, IdentityGrid::default())?.max());
    }
    checks.push(Check::at_most(
        "coupling_integrals",
        integral_err,
        tol.identities,
        format!("p in {ps:?}"),
    ));
    checks.push(Check::at_most(
        "quasimode_identities",
        identity_err,
        tol.identities,
        format!("p in {ps:?}"),
    ));

    checks.push(residual_scaling(exp)?);

    let passed = checks.iter().all(|c| c.status != CheckStatus::Fail);
    Ok(ValidationReport {
        schema: "waterbands.validation".into(),
        schema_version: REPORT_SCHEMA_VERSION,
        profile_digest: profile.digest(),
        checks,
        passed,
    })
}

/// Residual ratios over ε halvings; a quadratic law gives 4.
fn residual_scaling(exp: &Experiment) -> Result<Check> {
    let tol = exp.config.tolerances;
    let q = exp.config.quasimode;
    let sup = exp.profile.sup_norm();
    let mut check = Check {
        name: "residual_scaling".into(),
        status: CheckStatus::Skipped,
        measured: None,
        tolerance: tol.residual_ratio_max,
        detail: String::new(),
    };
    if sup == 0.0 {
        check.detail = "flat bottom: quasimodes are exact".into();
        return Ok(check);
    }
    let e0 = 0.08f64.min(0.25 / sup);
    let eps = [e0, e0 / 2.0, e0 / 4.0];
    let mut ratios = Vec::new();
    for branch in [Branch::Minus, Branch::Plus] {
        let mut r = Vec::new();
        for &e in &eps {
            let qm = build_quasimode(q.p, q.delta, e, &exp.profile, branch)?;
            r.push(residual(&qm, &exp.profile, &exp.grid)?);
        }
        if r[0] < 1e-12 {
            check.detail = format!("residuals at round-off level ({:e})", r[0]);
            return Ok(check);
        }
        ratios.push(r[0] / r[1]);
        ratios.push(r[1] / r[2]);
    }
    let ok = ratios
        .iter()
        .all(|&x| x >= tol.residual_ratio_min && x <= tol.residual_ratio_max);
    let worst = ratios
        .iter()
        .copied()
        .max_by(|a, b| (a - 4.0).abs().total_cmp(&(b - 4.0).abs()))
        .unwrap_or(f64::NAN);
    check.status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
    check.measured = Some(worst);
    check.detail = format!(
        "ratios {ratios:?} for epsilon {eps:?}, accepted range [{}, {}]",
        tol.residual_ratio_min, tol.residual_ratio_max
    );
    Ok(check)
}

pub fn run_validate(exp: &Experiment, out: &Path) -> Result<(ValidationReport, PathBuf)> {
    let report = validate(exp)?;
    let path = write_json(out, "validation.json", &report)?;
    Ok((report, path))
}
