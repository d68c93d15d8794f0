//! Least squares, control-function regression and residual diagnostics.

mod control_function;
mod diagnostics;
mod distributions;
mod ols;
mod table;

pub use control_function::{
    control_function_fit, lagged_instruments, ControlFunctionFit, Diagnostics, CONSTANT,
    CONTROL_FN, PRICE_DEVIATION,
};
pub use diagnostics::{jarque_bera, reset_test, NormalityResult, ResetResult, DEFAULT_SIGNIFICANCE};
pub use distributions::{
    student_t_cdf, student_t_quantile, t_confidence_interval, tail_probability, Distribution,
    Interval,
};
pub use ols::{ols, FitResult, Regressor};
pub use table::{significance_stars, CoefficientRow, RegressionTable};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconometricsError {
    #[error("need more than {coefficients} observations, have {n}")]
    TooFewObservations { n: usize, coefficients: usize },
    #[error("regressor matrix is rank deficient (column `{0}`)")]
    RankDeficient(String),
    #[error("series `{name}` has length {found}, expected {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite input in `{0}`")]
    NonFinite(String),
    #[error("no instruments supplied")]
    NoInstruments,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("residual variance is zero")]
    ZeroVariance,
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<EconometricsError>,
    },
}
