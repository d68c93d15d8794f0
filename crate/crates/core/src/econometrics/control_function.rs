use super::diagnostics::{
    jarque_bera, reset_test, NormalityResult, ResetResult, DEFAULT_RESET_POWERS,
};
use super::ols::{ols, FitResult, Regressor};
use super::EconometricsError;

/// Stage-2 coefficient names, in table order.
pub const PRICE_DEVIATION: &str = "y_e";
pub const CONTROL_FN: &str = "control_fn";
pub const CONSTANT: &str = super::ols::CONSTANT_NAME;

/// Post-fit checks on the stage-2 residuals. A check that cannot be computed
/// (for example on an exact fit) is `None` with the reason in `notes`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub reset: Option<ResetResult>,
    pub normality: Option<NormalityResult>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlFunctionFit {
    /// Flow deviations on (price deviation, first-stage residual, constant).
    pub second_stage: FitResult,
    /// Price deviations on the instruments plus a constant.
    pub first_stage: FitResult,
    pub diagnostics: Diagnostics,
    pub level: f64,
}

impl ControlFunctionFit {
    /// Coefficient on the price deviation.
    pub fn slope(&self) -> f64 {
        self.second_stage.coefficients[0]
    }

    pub fn slope_se(&self) -> f64 {
        self.second_stage.standard_errors[0]
    }

    pub fn control(&self) -> f64 {
        self.second_stage.coefficients[1]
    }
}

fn staged(stage: &'static str) -> impl Fn(EconometricsError) -> EconometricsError {
    move |e| EconometricsError::Stage {
        stage,
        source: Box::new(e),
    }
}

pub fn control_function_fit(
    x_dev: &[f64],
    y_dev: &[f64],
    instruments: &[Regressor],
    level: f64,
) -> Result<ControlFunctionFit, EconometricsError> {
    if instruments.is_empty() {
        return Err(EconometricsError::NoInstruments);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EconometricsError::InvalidParameter(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    if x_dev.len() != y_dev.len() {
        return Err(EconometricsError::LengthMismatch {
            name: "y_dev".into(),
            expected: x_dev.len(),
            found: y_dev.len(),
        });
    }

    let first_stage = ols(y_dev, instruments, true).map_err(staged("first stage"))?;
    let second_stage = ols(
        x_dev,
        &[
            Regressor::new(PRICE_DEVIATION, y_dev.to_vec()),
            Regressor::new(CONTROL_FN, first_stage.residuals.clone()),
        ],
        true,
    )
    .map_err(staged("second stage"))?;
    // surfaces bad levels before any rendering
    second_stage.conf_intervals(level)?;

    let diagnostics = diagnose(&second_stage);
    Ok(ControlFunctionFit {
        second_stage,
        first_stage,
        diagnostics,
        level,
    })
}

fn diagnose(fit: &FitResult) -> Diagnostics {
    let mut diagnostics = Diagnostics::default();
    let tss: f64 = {
        let m = fit.mean_dependent();
        fit.regressand.iter().map(|v| (v - m).powi(2)).sum()
    };
    if fit.ssr <= 1e-24 * tss.max(f64::MIN_POSITIVE) {
        diagnostics
            .notes
            .push("exact fit: residual diagnostics undefined".into());
        return diagnostics;
    }
    match reset_test(fit, &DEFAULT_RESET_POWERS) {
        Ok(r) => diagnostics.reset = Some(r),
        Err(e) => diagnostics.notes.push(format!("RESET unavailable: {e}")),
    }
    match jarque_bera(&fit.residuals) {
        Ok(r) => diagnostics.normality = Some(r),
        Err(e) => diagnostics
            .notes
            .push(format!("normality test unavailable: {e}")),
    }
    diagnostics
}

/// Builds lag-1..=`lags` instruments from `series` and trims the first `lags`
/// observations from every aligned series.
///
/// Returns `(trimmed_series..., instruments)` with all outputs of length
/// `n - lags`.
pub fn lagged_instruments(
    series: &[f64],
    aligned: &[&[f64]],
    lags: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Regressor>), EconometricsError> {
    let n = series.len();
    if lags == 0 || lags >= n {
        return Err(EconometricsError::InvalidParameter(format!(
            "cannot build {lags} lags from {n} observations"
        )));
    }
    let instruments = (1..=lags)
        .map(|k| Regressor::new(format!("lag{k}"), series[lags - k..n - k].to_vec()))
        .collect();
    let trimmed = aligned.iter().map(|s| s[lags..].to_vec()).collect();
    Ok((trimmed, instruments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn wiggle(n: usize, a: f64, b: f64) -> Vec<f64> {
        (0..n).map(|t| (a * t as f64).sin() + b * (t as f64 * 0.37).cos()).collect()
    }

    #[test]
    fn noiseless_demand_relation_recovers_slope() {
        let n = 30;
        let y = wiggle(n, 0.9, 0.4);
        let x: Vec<f64> = y.iter().map(|v| -2.0 * v).collect();
        let ivs = vec![
            Regressor::new("iv_a", wiggle(n, 1.7, 0.1)),
            Regressor::new("iv_b", wiggle(n, 0.3, 0.8)),
        ];
        let fit = control_function_fit(&x, &y, &ivs, 0.95).unwrap();
        assert_abs_diff_eq!(fit.slope(), -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.control(), 0.0, epsilon = 1e-12);
        assert_eq!(fit.second_stage.names, [PRICE_DEVIATION, CONTROL_FN, CONSTANT]);
        assert_eq!(fit.second_stage.df_residual, n - 3);
        assert!(fit.diagnostics.reset.is_none());
        assert!(!fit.diagnostics.notes.is_empty());
    }

    #[test]
    fn noisy_fit_runs_diagnostics() {
        let n = 40;
        let y = wiggle(n, 0.9, 0.4);
        let noise = wiggle(n, 2.3, 0.5);
        let x: Vec<f64> = y.iter().zip(&noise).map(|(v, e)| -0.9 * v + 0.05 * e).collect();
        let ivs = vec![Regressor::new("iv_a", wiggle(n, 1.1, 0.2))];
        let fit = control_function_fit(&x, &y, &ivs, 0.95).unwrap();
        assert!(fit.diagnostics.reset.is_some());
        assert!(fit.diagnostics.normality.is_some());
        assert!((fit.slope() + 0.9).abs() < 0.05);
    }

    #[test]
    fn requires_instruments() {
        assert_eq!(
            control_function_fit(&[0.0; 6], &[0.0; 6], &[], 0.95),
            Err(EconometricsError::NoInstruments)
        );
    }

    #[test]
    fn lag_construction() {
        let s: Vec<f64> = (0..7).map(|t| t as f64).collect();
        let other: Vec<f64> = (0..7).map(|t| 10.0 + t as f64).collect();
        let (trimmed, ivs) = lagged_instruments(&s, &[&s, &other], 4).unwrap();
        assert_eq!(trimmed[0], [4.0, 5.0, 6.0]);
        assert_eq!(trimmed[1], [14.0, 15.0, 16.0]);
        assert_eq!(ivs.len(), 4);
        assert_eq!(ivs[0].values, [3.0, 4.0, 5.0]);
        assert_eq!(ivs[3].values, [0.0, 1.0, 2.0]);
        assert!(lagged_instruments(&s, &[], 7).is_err());
    }
}
