use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::distributions::{tail_probability, Distribution};
use super::ols::{fit_design, FitResult};
use super::EconometricsError;

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;
pub const DEFAULT_RESET_POWERS: [u32; 2] = [2, 3];

/// Ramsey RESET: F-test of the fit augmented with powers of its fitted values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub significance: f64,
    /// True when the linear specification is rejected at `significance`.
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub statistic: f64,
    pub p_value: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub significance: f64,
    /// True when normality is rejected at `significance`.
    pub reject: bool,
}

pub fn reset_test(fit: &FitResult, powers: &[u32]) -> Result<ResetResult, EconometricsError> {
    reset_test_at(fit, powers, DEFAULT_SIGNIFICANCE)
}

pub fn reset_test_at(
    fit: &FitResult,
    powers: &[u32],
    significance: f64,
) -> Result<ResetResult, EconometricsError> {
    if powers.is_empty() || powers.iter().any(|&p| p < 2) {
        return Err(EconometricsError::InvalidParameter(
            "RESET powers must be non-empty and >= 2".into(),
        ));
    }
    let base = fit.design();
    let (n, k) = (base.nrows(), base.ncols());
    let q = powers.len();
    let mut names = fit.names.clone();
    names.extend(powers.iter().map(|p| format!("fitted^{p}")));
    let augmented = DMatrix::from_fn(n, k + q, |i, j| {
        if j < k {
            base[(i, j)]
        } else {
            fit.fitted[i].powi(powers[j - k] as i32)
        }
    });
    let unrestricted = fit_design(&fit.regressand, augmented, names, fit.has_constant)?;
    if unrestricted.ssr <= 0.0 {
        return Err(EconometricsError::ZeroVariance);
    }
    let df_den = unrestricted.df_residual;
    let statistic = ((fit.ssr - unrestricted.ssr).max(0.0) / q as f64)
        / (unrestricted.ssr / df_den as f64);
    let p_value = tail_probability(
        statistic,
        Distribution::F {
            d1: q as f64,
            d2: df_den as f64,
        },
    )?;
    Ok(ResetResult {
        statistic,
        p_value,
        df_num: q,
        df_den,
        significance,
        reject: p_value < significance,
    })
}

pub fn jarque_bera(residuals: &[f64]) -> Result<NormalityResult, EconometricsError> {
    jarque_bera_at(residuals, DEFAULT_SIGNIFICANCE)
}

pub fn jarque_bera_at(
    residuals: &[f64],
    significance: f64,
) -> Result<NormalityResult, EconometricsError> {
    let n = residuals.len();
    if n < 8 {
        return Err(EconometricsError::TooFewObservations { n, coefficients: 7 });
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(EconometricsError::NonFinite("residuals".into()));
    }
    let nf = n as f64;
    let mean = residuals.iter().sum::<f64>() / nf;
    let scale = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let central = |p: i32| residuals.iter().map(|r| (r - mean).powi(p)).sum::<f64>() / nf;
    let m2 = central(2);
    // rounding noise around a constant still leaves m2 > 0
    if m2 <= (1e-12 * scale).powi(2) {
        return Err(EconometricsError::ZeroVariance);
    }
    let skewness = central(3) / m2.powf(1.5);
    let excess_kurtosis = central(4) / (m2 * m2) - 3.0;
    let statistic = nf / 6.0 * (skewness.powi(2) + excess_kurtosis.powi(2) / 4.0);
    let p_value = tail_probability(statistic, Distribution::ChiSquare { k: 2.0 })?;
    Ok(NormalityResult {
        statistic,
        p_value,
        skewness,
        excess_kurtosis,
        significance,
        reject: p_value < significance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::{ols, Regressor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution as _, Exp, Normal, Uniform};

    fn linear_sample(seed: u64, n: usize, cubic: f64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ux = Uniform::new(-2.0, 2.0).unwrap();
        let noise = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| ux.sample(&mut rng)).collect();
        let y = x
            .iter()
            .map(|v| 1.0 + 0.5 * v + cubic * v.powi(3) + noise.sample(&mut rng))
            .collect();
        (x, y)
    }

    /// Rejection count across seeds must sit within 3 binomial SEs of the nominal size.
    fn assert_near_size(rejections: usize, trials: usize, size: f64) {
        let expected = trials as f64 * size;
        let se = (trials as f64 * size * (1.0 - size)).sqrt();
        assert!(
            (rejections as f64 - expected).abs() <= 3.0 * se,
            "{rejections} rejections in {trials} trials, expected {expected} ± {}",
            3.0 * se
        );
    }

    #[test]
    fn reset_has_nominal_size_on_linear_data() {
        let trials = 500;
        let rejections = (0..trials)
            .filter(|&seed| {
                let (x, y) = linear_sample(seed as u64, 200, 0.0);
                let fit = ols(&y, &[Regressor::new("x", x)], true).unwrap();
                reset_test(&fit, &DEFAULT_RESET_POWERS).unwrap().reject
            })
            .count();
        assert_near_size(rejections, trials, DEFAULT_SIGNIFICANCE);
    }

    #[test]
    fn reset_detects_cubic_term() {
        let (x, y) = linear_sample(7, 200, 0.8);
        let fit = ols(&y, &[Regressor::new("x", x)], true).unwrap();
        let reset = reset_test(&fit, &DEFAULT_RESET_POWERS).unwrap();
        assert!(reset.p_value < 0.01, "p = {}", reset.p_value);
        assert_eq!((reset.df_num, reset.df_den), (2, 196));
    }

    #[test]
    fn reset_rejects_constant_fitted_values() {
        let y: Vec<f64> = (0..10).map(|t| (t as f64).cos()).collect();
        let fit = ols(&y, &[], true).unwrap();
        assert!(matches!(
            reset_test(&fit, &DEFAULT_RESET_POWERS),
            Err(EconometricsError::RankDeficient(_))
        ));
    }

    #[test]
    fn jarque_bera_has_nominal_size_on_normal_draws() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let trials = 500;
        let rejections = (0..trials)
            .filter(|&seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed as u64);
                let draws: Vec<f64> = (0..5000).map(|_| normal.sample(&mut rng)).collect();
                jarque_bera(&draws).unwrap().reject
            })
            .count();
        assert_near_size(rejections, trials, DEFAULT_SIGNIFICANCE);
    }

    #[test]
    fn jarque_bera_flags_skewed_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let exp = Exp::new(1.0).unwrap();
        let draws: Vec<f64> = (0..500).map(|_| exp.sample(&mut rng)).collect();
        let jb = jarque_bera(&draws).unwrap();
        assert!(jb.p_value < 0.01);
        assert!(jb.skewness > 1.0);
    }

    #[test]
    fn jarque_bera_errors() {
        assert_eq!(jarque_bera(&[0.1; 20]), Err(EconometricsError::ZeroVariance));
        assert!(matches!(
            jarque_bera(&[1.0, 2.0, 3.0]),
            Err(EconometricsError::TooFewObservations { .. })
        ));
    }

    #[test]
    fn jarque_bera_statistic_formula() {
        let r = [-2.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0, 3.0];
        let jb = jarque_bera(&r).unwrap();
        let n = 8.0f64;
        let m = r.iter().sum::<f64>() / n;
        let m2 = r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m3 = r.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
        let m4 = r.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        let s = m3 / m2.powf(1.5);
        let k = m4 / (m2 * m2) - 3.0;
        approx::assert_abs_diff_eq!(jb.statistic, n / 6.0 * (s * s + k * k / 4.0), epsilon = 1e-12);
        approx::assert_abs_diff_eq!(jb.p_value, (-jb.statistic / 2.0).exp(), epsilon = 1e-12);
    }
}
