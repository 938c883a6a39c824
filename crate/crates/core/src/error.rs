use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bathymetry: {0}")]
    InvalidProfile(String),

    #[error("degenerate domain: epsilon * max|b| = {product} (epsilon = {epsilon}, max|b| = {max_abs_b}) must be < 1")]
    DegenerateDomain {
        epsilon: f64,
        max_abs_b: f64,
        product: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("stiffness matrix is not positive definite (min diagonal Rayleigh quotient {min_rayleigh:e})")]
    NumericalBreakdown { min_rayleigh: f64 },

    #[error("solve failed at theta = {theta}, epsilon = {epsilon}: {source}")]
    AtPoint {
        theta: f64,
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mode {mode} is not represented on a grid with n_x = {n_x}")]
    GridTooSmall { mode: i64, n_x: usize },

    #[error("no resolvent eigenvalue within {residual:e} of tau = {tau_app} (nearest at distance {nearest_distance:e})")]
    CertificationFailure {
        tau_app: f64,
        residual: f64,
        nearest_distance: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(self, theta: f64, epsilon: f64) -> Error {
        match self {
            e @ Error::AtPoint { .. } => e,
            e => Error::AtPoint {
                theta,
                epsilon,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by the input configuration rather than by the computation.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidProfile(_)
            | Error::DegenerateDomain { .. }
            | Error::InvalidGrid(_)
            | Error::Config(_)
            | Error::GridTooSmall { .. } => true,
            Error::AtPoint { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
