use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::distributions::{t_confidence_interval, tail_probability, Distribution, Interval};
use super::EconometricsError;

/// Name used for the intercept column.
pub const CONSTANT_NAME: &str = "constant";

/// Columns whose scaled QR pivot falls below this are treated as dependent.
const RANK_TOLERANCE: f64 = 1e-10;

/// A named explanatory series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub name: String,
    pub values: Vec<f64>,
}

impl Regressor {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// Ordinary least squares output.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    /// F statistic against the constant-only model (or the zero model when no
    /// constant is fitted). `None` when there are no slope terms or the
    /// regressand has no variation.
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    pub aic: f64,
    pub bic: f64,
    pub ssr: f64,
    pub n: usize,
    pub df_residual: usize,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub regressand: Vec<f64>,
    pub has_constant: bool,
    design: DMatrix<f64>,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn n_coefficients(&self) -> usize {
        self.coefficients.len()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Student-t intervals for every coefficient with `df_residual` degrees of freedom.
    pub fn conf_intervals(&self, level: f64) -> Result<Vec<Interval>, EconometricsError> {
        self.coefficients
            .iter()
            .zip(&self.standard_errors)
            .map(|(&c, &se)| t_confidence_interval(c, se, self.df_residual as u64, level))
            .collect()
    }

    pub fn mean_dependent(&self) -> f64 {
        self.regressand.iter().sum::<f64>() / self.n as f64
    }

    pub fn sd_dependent(&self) -> f64 {
        let m = self.mean_dependent();
        let ss: f64 = self.regressand.iter().map(|y| (y - m).powi(2)).sum();
        (ss / (self.n.saturating_sub(1).max(1)) as f64).sqrt()
    }
}

/// Fits `regressand` on the given regressors, appending an intercept column
/// last when `include_constant` is set.
pub fn ols(
    regressand: &[f64],
    regressors: &[Regressor],
    include_constant: bool,
) -> Result<FitResult, EconometricsError> {
    let n = regressand.len();
    for r in regressors {
        if r.values.len() != n {
            return Err(EconometricsError::LengthMismatch {
                name: r.name.clone(),
                expected: n,
                found: r.values.len(),
            });
        }
    }
    let k = regressors.len() + usize::from(include_constant);
    let mut names: Vec<String> = regressors.iter().map(|r| r.name.clone()).collect();
    if include_constant {
        names.push(CONSTANT_NAME.to_string());
    }
    let design = DMatrix::from_fn(n, k, |i, j| {
        if j < regressors.len() {
            regressors[j].values[i]
        } else {
            1.0
        }
    });
    fit_design(regressand, design, names, include_constant)
}

pub(crate) fn fit_design(
    regressand: &[f64],
    design: DMatrix<f64>,
    names: Vec<String>,
    has_constant: bool,
) -> Result<FitResult, EconometricsError> {
    let n = design.nrows();
    let k = design.ncols();
    if regressand.len() != n {
        return Err(EconometricsError::LengthMismatch {
            name: "regressand".into(),
            expected: n,
            found: regressand.len(),
        });
    }
    if k == 0 || n <= k {
        return Err(EconometricsError::TooFewObservations { n, coefficients: k });
    }
    if regressand.iter().any(|v| !v.is_finite()) {
        return Err(EconometricsError::NonFinite("regressand".into()));
    }
    if let Some(j) = (0..k).find(|&j| design.column(j).iter().any(|v| !v.is_finite())) {
        return Err(EconometricsError::NonFinite(names[j].clone()));
    }

    // unit-norm columns so the pivot tolerance is scale free
    let norms: Vec<f64> = (0..k).map(|j| design.column(j).norm()).collect();
    if let Some(j) = norms.iter().position(|&s| s == 0.0) {
        return Err(EconometricsError::RankDeficient(names[j].clone()));
    }
    let mut scaled = design.clone();
    for (j, s) in norms.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }

    let qr = scaled.qr();
    let r = qr.r();
    if let Some(j) = (0..k).find(|&j| r[(j, j)].abs() < RANK_TOLERANCE) {
        return Err(EconometricsError::RankDeficient(names[j].clone()));
    }
    let y = DVector::from_column_slice(regressand);
    let qty = qr.q().transpose() * &y;
    let beta_scaled = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| EconometricsError::RankDeficient(names[k - 1].clone()))?;
    let coefficients: Vec<f64> = beta_scaled
        .iter()
        .zip(&norms)
        .map(|(b, s)| b / s)
        .collect();

    let fitted_v = &design * DVector::from_column_slice(&coefficients);
    let fitted: Vec<f64> = fitted_v.iter().copied().collect();
    let residuals: Vec<f64> = regressand.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let df_residual = n - k;
    let sigma2 = ssr / df_residual as f64;

    // (X'X)^{-1} = D^{-1} R^{-1} R^{-T} D^{-1}
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| EconometricsError::RankDeficient(names[k - 1].clone()))?;
    let standard_errors: Vec<f64> = (0..k)
        .map(|j| (sigma2 * r_inv.row(j).norm_squared()).sqrt() / norms[j])
        .collect();
    let t_values: Vec<f64> = coefficients
        .iter()
        .zip(&standard_errors)
        .map(|(c, se)| c / se)
        .collect();
    let p_values = t_values
        .iter()
        .map(|&t| {
            if t.is_nan() {
                Ok(1.0)
            } else {
                tail_probability(
                    t,
                    Distribution::StudentT {
                        df: df_residual as f64,
                    },
                )
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let tss: f64 = if has_constant {
        let mean = regressand.iter().sum::<f64>() / n as f64;
        regressand.iter().map(|y| (y - mean).powi(2)).sum()
    } else {
        regressand.iter().map(|y| y * y).sum()
    };
    let r_squared = if tss > 0.0 {
        (1.0 - ssr / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let model_df = if has_constant { k - 1 } else { k };
    let (f_statistic, f_p_value) = if model_df > 0 && tss > 0.0 {
        let f = ((tss - ssr).max(0.0) / model_df as f64) / sigma2;
        let p = tail_probability(
            f,
            Distribution::F {
                d1: model_df as f64,
                d2: df_residual as f64,
            },
        )?;
        (Some(f), Some(p))
    } else {
        (None, None)
    };

    let nf = n as f64;
    let kf = k as f64;
    let log_term = nf * (ssr / nf).ln();
    let aic = log_term + 2.0 * kf;
    let bic = log_term + kf * nf.ln();

    Ok(FitResult {
        names,
        coefficients,
        standard_errors,
        t_values,
        p_values,
        r_squared,
        f_statistic,
        f_p_value,
        aic,
        bic,
        ssr,
        n,
        df_residual,
        residuals,
        fitted,
        regressand: regressand.to_vec(),
        has_constant,
        design,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line_is_recovered() {
        let y: Vec<f64> = (0..10).map(|t| t as f64 * 0.3 - 1.0).collect();
        let x: Vec<f64> = y.iter().map(|v| -2.0 * v).collect();
        let fit = ols(&x, &[Regressor::new("y", y)], true).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn constant_regressand_has_zero_slope_and_r2() {
        let y = vec![3.0; 8];
        let x: Vec<f64> = (0..8).map(|t| (t as f64).sin()).collect();
        let fit = ols(&y, &[Regressor::new("x", x)], true).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 3.0, epsilon = 1e-12);
        assert_eq!(fit.r_squared, 0.0);
        assert_eq!(fit.f_statistic, None);
    }

    #[test]
    fn rank_deficiency_is_detected() {
        let a: Vec<f64> = (0..8).map(|t| t as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let y: Vec<f64> = a.iter().map(|v| v * v).collect();
        let err = ols(&y, &[Regressor::new("a", a), Regressor::new("b", b)], true).unwrap_err();
        assert!(matches!(err, EconometricsError::RankDeficient(_)));

        let zero = vec![0.0; 8];
        assert!(matches!(
            ols(&y, &[Regressor::new("z", zero)], false),
            Err(EconometricsError::RankDeficient(_))
        ));
    }

    #[test]
    fn too_few_observations() {
        let err = ols(&[1.0, 2.0], &[Regressor::new("x", vec![1.0, 3.0])], true).unwrap_err();
        assert_eq!(
            err,
            EconometricsError::TooFewObservations {
                n: 2,
                coefficients: 2
            }
        );
    }

    #[test]
    fn information_criteria_follow_gaussian_convention() {
        let x: Vec<f64> = (0..12).map(|t| t as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| 1.0 + 0.5 * v + if i % 2 == 0 { 0.3 } else { -0.2 })
            .collect();
        let fit = ols(&y, &[Regressor::new("x", x)], true).unwrap();
        let n = 12.0f64;
        let base = n * (fit.ssr / n).ln();
        assert_abs_diff_eq!(fit.aic, base + 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.bic, base + 2.0 * n.ln(), epsilon = 1e-12);
        assert_eq!(fit.df_residual, 10);
        // identity F = (R²/(k−1)) / ((1−R²)/(n−k))
        let r2 = fit.r_squared;
        assert_abs_diff_eq!(
            fit.f_statistic.unwrap(),
            r2 / ((1.0 - r2) / 10.0),
            epsilon = 1e-8
        );
    }

    fn random_problem(seed: u64, n: usize) -> (Vec<f64>, Vec<Regressor>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..3.0)).collect();
        let y = a
            .iter()
            .zip(&b)
            .map(|(x1, x2)| 0.4 - 1.1 * x1 + 0.7 * x2 + rng.random_range(-0.5..0.5))
            .collect();
        (y, vec![Regressor::new("a", a), Regressor::new("b", b)])
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_regressors(seed in any::<u64>(), n in 6usize..60) {
            let (y, regs) = random_problem(seed, n);
            let fit = ols(&y, &regs, true).unwrap();
            let e_norm = fit.residuals.iter().map(|e| e * e).sum::<f64>().sqrt();
            let sum: f64 = fit.residuals.iter().sum();
            prop_assert!(sum.abs() <= n as f64 * 1e-10);
            for r in &regs {
                let dot: f64 = r.values.iter().zip(&fit.residuals).map(|(x, e)| x * e).sum();
                let x_norm = r.values.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!(dot.abs() <= 1e-8 * x_norm * e_norm.max(1.0));
            }
            for (t, (c, se)) in fit.t_values.iter().zip(fit.coefficients.iter().zip(&fit.standard_errors)) {
                prop_assert!((t - c / se).abs() <= 1e-10 * t.abs().max(1.0));
            }
            prop_assert_eq!(fit.df_residual, n - 3);
        }

        #[test]
        fn row_permutation_invariance(seed in any::<u64>(), shift in 1usize..18) {
            let (y, regs) = random_problem(seed, 19);
            let fit = ols(&y, &regs, true).unwrap();
            let rot = |v: &[f64]| { let mut w = v.to_vec(); w.rotate_left(shift); w };
            let regs2: Vec<_> = regs.iter().map(|r| Regressor::new(r.name.clone(), rot(&r.values))).collect();
            let fit2 = ols(&rot(&y), &regs2, true).unwrap();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(1.0);
            for i in 0..3 {
                prop_assert!(close(fit.coefficients[i], fit2.coefficients[i]));
                prop_assert!(close(fit.standard_errors[i], fit2.standard_errors[i]));
                prop_assert!(close(fit.p_values[i], fit2.p_values[i]));
            }
            prop_assert!(close(fit.r_squared, fit2.r_squared));
            prop_assert!(close(fit.f_statistic.unwrap(), fit2.f_statistic.unwrap()));
            prop_assert!(close(fit.aic, fit2.aic));
        }

        #[test]
        fn regressand_rescaling(seed in any::<u64>(), log_c in -10.0f64..10.0) {
            let c = log_c.exp();
            let (y, regs) = random_problem(seed, 19);
            let fit = ols(&y, &regs, true).unwrap();
            let scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
            let fit2 = ols(&scaled, &regs, true).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
            for i in 0..3 {
                prop_assert!(rel(c * fit.coefficients[i], fit2.coefficients[i]));
                prop_assert!(rel(c * fit.standard_errors[i], fit2.standard_errors[i]));
                prop_assert!((fit.t_values[i] - fit2.t_values[i]).abs() <= 1e-9 * fit.t_values[i].abs().max(1.0));
                prop_assert!((fit.p_values[i] - fit2.p_values[i]).abs() <= 1e-9);
            }
            prop_assert!((fit.r_squared - fit2.r_squared).abs() <= 1e-9);
            let (f1, f2) = (fit.f_statistic.unwrap(), fit2.f_statistic.unwrap());
            prop_assert!((f1 - f2).abs() <= 1e-9 * f1.max(1.0));
        }
    }
}
