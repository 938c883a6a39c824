//! Experiment configuration: JSON schema, defaults and validation.

use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bands::ThetaGrid;
use crate::bathymetry::{BathymetryProfile, CosineTerm};
use crate::error::{Error, Result};
use crate::operator::SpectralGrid;
use crate::predictor::GapLocation;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CosineTermSpec {
    Object { k: i64, amplitude: f64, #[serde(default)] phase: f64 },
    Tuple(i64, f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierEntrySpec {
    pub k: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BathymetrySpec {
    CosineSeries(Vec<CosineTermSpec>),
    Fourier(Vec<FourierEntrySpec>),
}

impl BathymetrySpec {
    pub fn build(&self) -> Result<BathymetryProfile> {
        match self {
            BathymetrySpec::CosineSeries(terms) => {
                let terms: Vec<CosineTerm> = terms
                    .iter()
                    .map(|t| match *t {
                        CosineTermSpec::Object { k, amplitude, phase } | CosineTermSpec::Tuple(k, amplitude, phase) => {
                            CosineTerm { k, amplitude, phase }
                        }
                    })
                    .collect();
                BathymetryProfile::from_cosine_series(&terms)
            }
            BathymetrySpec::Fourier(entries) => {
                let e: Vec<_> = entries.iter().map(|e| (e.k, Complex64::new(e.re, e.im))).collect();
                BathymetryProfile::from_fourier(&e)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaGridKind {
    Uniform,
    Chebyshev,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaGridSpec {
    #[serde(default = "default_theta_kind")]
    pub kind: ThetaGridKind,
    #[serde(default = "default_theta_count")]
    pub count: usize,
}

fn default_theta_kind() -> ThetaGridKind {
    ThetaGridKind::Uniform
}

fn default_theta_count() -> usize {
    65
}

impl Default for ThetaGridSpec {
    fn default() -> Self {
        Self {
            kind: default_theta_kind(),
            count: default_theta_count(),
        }
    }
}

impl ThetaGridSpec {
    pub fn build(&self) -> Result<ThetaGrid> {
        match self.kind {
            ThetaGridKind::Uniform => ThetaGrid::uniform(self.count),
            ThetaGridKind::Chebyshev => ThetaGrid::chebyshev(self.count),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_n_x")]
    pub n_x: usize,
    #[serde(default = "default_n_z")]
    pub n_z: usize,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
}

fn default_n_x() -> usize {
    SpectralGrid::default().n_x
}

fn default_n_z() -> usize {
    SpectralGrid::default().n_z
}

fn default_oversample() -> usize {
    SpectralGrid::default().oversample
}

impl Default for GridSpec {
    fn default() -> Self {
        let g = SpectralGrid::default();
        Self {
            n_x: g.n_x,
            n_z: g.n_z,
            oversample: g.oversample,
        }
    }
}

/// A gap to measure: either a bare p (double point at θ = 0) or p with location.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GapPairSpec {
    AtZero(i64),
    Located { p: i64, location: GapLocation },
}

impl GapPairSpec {
    pub fn p(&self) -> i64 {
        match *self {
            GapPairSpec::AtZero(p) | GapPairSpec::Located { p, .. } => p,
        }
    }

    pub fn location(&self) -> GapLocation {
        match *self {
            GapPairSpec::AtZero(_) => GapLocation::Zero,
            GapPairSpec::Located { location, .. } => location,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSpec {
    #[serde(default = "yes")]
    pub order1: bool,
    #[serde(default = "yes")]
    pub order2: bool,
}

fn yes() -> bool {
    true
}

impl Default for PredictorSpec {
    fn default() -> Self {
        Self {
            order1: true,
            order2: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasimodeSpec {
    #[serde(default = "default_p")]
    pub p: i64,
    #[serde(default)]
    pub delta: f64,
}

fn default_p() -> i64 {
    1
}

impl Default for QuasimodeSpec {
    fn default() -> Self {
        Self { p: 1, delta: 0.0 }
    }
}

/// Tolerances of the validation suite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub flat_match: f64,
    pub kernel: f64,
    pub evenness: f64,
    pub positivity: f64,
    pub identities: f64,
    pub residual_ratio_min: f64,
    pub residual_ratio_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            flat_match: 1e-8,
            kernel: 1e-8,
            evenness: 1e-10,
            positivity: 1e-8,
            identities: 1e-8,
            residual_ratio_min: 3.0,
            residual_ratio_max: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub bathymetry: BathymetrySpec,
    pub epsilon_list: Vec<f64>,
    #[serde(default)]
    pub theta_grid: ThetaGridSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_n_bands")]
    pub n_bands: usize,
    #[serde(default = "default_gap_pairs")]
    pub gap_pairs: Vec<GapPairSpec>,
    #[serde(default)]
    pub predictors: PredictorSpec,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub thread_count: usize,
    /// Allowed relative deviation of measured from predicted gap width.
    #[serde(default = "default_gap_tolerance")]
    pub gap_tolerance: f64,
    #[serde(default)]
    pub quasimode: QuasimodeSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn default_n_bands() -> usize {
    8
}

fn default_gap_pairs() -> Vec<GapPairSpec> {
    vec![GapPairSpec::AtZero(1)]
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

fn default_gap_tolerance() -> f64 {
    0.1
}

/// A configuration together with the objects it describes.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub profile: BathymetryProfile,
    pub grid: SpectralGrid,
    pub theta_grid: ThetaGrid,
}

/// Parses and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<Experiment> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
        let offset = byte_offset(text, e.line(), e.column());
        Error::Config(match e.classify() {
            serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
                format!("malformed JSON at byte {offset}: {e}")
            }
            _ => format!("schema violation at byte {offset}: {e}"),
        })
    })?;
    config.validate()
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

impl ExperimentConfig {
    pub fn validate(self) -> Result<Experiment> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let profile = self.bathymetry.build()?;
        let grid = SpectralGrid::new(self.grid.n_x, self.grid.n_z, self.grid.oversample)?;
        grid.validate_for(&profile)?;
        let theta_grid = self.theta_grid.build().map_err(|e| Error::Config(format!("theta_grid: {e}")))?;
        if self.epsilon_list.is_empty() {
            return Err(Error::Config("epsilon_list must not be empty".into()));
        }
        for &eps in &self.epsilon_list {
            if !(eps >= 0.0) || !eps.is_finite() {
                return Err(Error::Config(format!("epsilon_list: {eps} is not a non-negative number")));
            }
            profile.check_epsilon(eps)?;
        }
        let limit = (grid.n_x / 2).saturating_sub(2);
        if self.n_bands == 0 || self.n_bands > limit {
            return Err(Error::Config(format!(
                "n_bands = {} outside 1..={limit} allowed by n_x = {}",
                self.n_bands, grid.n_x
            )));
        }
        for pair in &self.gap_pairs {
            let p = pair.p();
            let location = pair.location();
            let min_p = match location {
                GapLocation::Zero => 1,
                GapLocation::Half => 0,
            };
            if p < min_p {
                return Err(Error::Config(format!(
                    "gap_pairs: p = {p} invalid at theta = {} (need p >= {min_p})",
                    location.theta()
                )));
            }
            let lower = location.lower_band(p as usize);
            if lower + 1 >= self.n_bands {
                return Err(Error::Config(format!(
                    "gap_pairs: p = {p} needs bands {lower} and {} but n_bands = {}",
                    lower + 1,
                    self.n_bands
                )));
            }
        }
        if !(self.gap_tolerance >= 0.0) {
            return Err(Error::Config("gap_tolerance must be non-negative".into()));
        }
        if self.quasimode.p < 1 || !(self.quasimode.delta >= 0.0) {
            return Err(Error::Config("quasimode needs p >= 1 and delta >= 0".into()));
        }
        Ok(Experiment {
            config: self,
            profile,
            grid,
            theta_grid,
        })
    }
}
