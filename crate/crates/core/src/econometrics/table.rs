use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::control_function::{ControlFunctionFit, CONSTANT, CONTROL_FN, PRICE_DEVIATION};
use super::diagnostics::{NormalityResult, ResetResult};
use super::EconometricsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub coef: f64,
    pub std_err: f64,
    pub t_value: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub sig: String,
}

/// Serializable regression summary: coefficient rows plus model footer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTable {
    pub dependent: String,
    pub level: f64,
    pub rows: Vec<CoefficientRow>,
    pub mean_dependent: f64,
    pub sd_dependent: f64,
    pub r_squared: f64,
    pub n_obs: usize,
    pub f_stat: Option<f64>,
    pub f_p: Option<f64>,
    pub aic: f64,
    pub bic: f64,
    pub first_stage_r_squared: f64,
    pub first_stage_f_stat: Option<f64>,
    pub reset: Option<ResetResult>,
    pub normality: Option<NormalityResult>,
    pub notes: Vec<String>,
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn row_label(name: &str) -> &str {
    match name {
        PRICE_DEVIATION => "y_e = ln(price) - mean",
        CONTROL_FN => "Control fn",
        CONSTANT => "Constant",
        other => other,
    }
}

impl RegressionTable {
    pub fn from_fit(fit: &ControlFunctionFit) -> Result<Self, EconometricsError> {
        let s = &fit.second_stage;
        let cis = s.conf_intervals(fit.level)?;
        let rows = (0..s.n_coefficients())
            .map(|i| CoefficientRow {
                name: s.names[i].clone(),
                coef: s.coefficients[i],
                std_err: s.standard_errors[i],
                t_value: s.t_values[i],
                p_value: s.p_values[i],
                ci_low: cis[i].low,
                ci_high: cis[i].high,
                sig: significance_stars(s.p_values[i]).to_string(),
            })
            .collect();
        Ok(Self {
            dependent: "x_e = ln(flow) - mean".into(),
            level: fit.level,
            rows,
            mean_dependent: s.mean_dependent(),
            sd_dependent: s.sd_dependent(),
            r_squared: s.r_squared,
            n_obs: s.n,
            f_stat: s.f_statistic,
            f_p: s.f_p_value,
            aic: s.aic,
            bic: s.bic,
            first_stage_r_squared: fit.first_stage.r_squared,
            first_stage_f_stat: fit.first_stage.f_statistic,
            reset: fit.diagnostics.reset.clone(),
            normality: fit.diagnostics.normality.clone(),
            notes: fit.diagnostics.notes.clone(),
        })
    }

    pub fn row(&self, name: &str) -> Option<&CoefficientRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Every reported statistic is finite (optional ones may be absent).
    pub fn is_finite(&self) -> bool {
        let opt = |o: Option<f64>| o.is_none_or(f64::is_finite);
        self.rows.iter().all(|r| {
            [r.coef, r.std_err, r.t_value, r.p_value, r.ci_low, r.ci_high]
                .iter()
                .all(|v| v.is_finite())
        }) && [
            self.mean_dependent,
            self.sd_dependent,
            self.r_squared,
            self.aic,
            self.bic,
            self.first_stage_r_squared,
        ]
        .iter()
        .all(|v| v.is_finite())
            && opt(self.f_stat)
            && opt(self.f_p)
            && opt(self.first_stage_f_stat)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let pct = (self.level * 100.0).round();
        let _ = writeln!(
            out,
            "{:<26} {:>9} {:>9} {:>9} {:>9} {:>10} {:>10} {:>4}",
            self.dependent,
            "Coef.",
            "St.Err.",
            "t-value",
            "p-value",
            format!("[{pct}% Conf"),
            "Interval]",
            "Sig"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<26} {:>9.3} {:>9.3} {:>9.2} {:>9.3} {:>10.3} {:>10.3} {:>4}",
                row_label(&r.name),
                r.coef,
                r.std_err,
                r.t_value,
                r.p_value,
                r.ci_low,
                r.ci_high,
                r.sig
            );
        }
        let fmt_opt = |o: Option<f64>| o.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            out,
            "Mean dependent var   {:>10.3}   SD dependent var  {:>10.3}",
            self.mean_dependent, self.sd_dependent
        );
        let _ = writeln!(
            out,
            "R-squared            {:>10.3}   Number of obs     {:>10}",
            self.r_squared, self.n_obs
        );
        let _ = writeln!(
            out,
            "F-test               {:>10}   Prob > F          {:>10}",
            fmt_opt(self.f_stat),
            fmt_opt(self.f_p)
        );
        let _ = writeln!(
            out,
            "Akaike crit. (AIC)   {:>10.3}   Bayesian crit. (BIC) {:>7.3}",
            self.aic, self.bic
        );
        let _ = writeln!(out, "*** p<.01, ** p<.05, * p<.1");
        if let Some(r) = &self.reset {
            let _ = writeln!(
                out,
                "RESET F({}, {}) = {:.3}, p = {:.3}",
                r.df_num, r.df_den, r.statistic, r.p_value
            );
        }
        if let Some(j) = &self.normality {
            let _ = writeln!(
                out,
                "Jarque-Bera chi2(2) = {:.3}, p = {:.3}",
                j.statistic, j.p_value
            );
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}
