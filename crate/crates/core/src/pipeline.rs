//! End-to-end estimation: panel → prices and logs → control-function fit →
//! beta → equilibrium → Monte Carlo intervals, plus report rendering.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beta_algebra::{beta_from_slope, beta_se_from_slope, BetaSet, ReturnSet};
use crate::econometrics::{
    control_function_fit, lagged_instruments, ControlFunctionFit, Interval, RegressionTable,
    Regressor,
};
use crate::market_curves::{elasticities, equilibrium_levels, range_warnings, EquilibriumPoint};
use crate::panel_io::{read_panel, validate_positive, RawPanel};
use crate::parallel::Execution;
use crate::preprocess::{preprocess, Descriptive, Preprocessed};
use crate::uncertainty::{monte_carlo_intervals, IntervalReport, MonteCarloConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_LAGS: usize = 4;
pub const DEFAULT_REGRESSION_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PanelIo,
    Preprocess,
    Econometrics,
    BetaAlgebra,
    MarketCurves,
    Uncertainty,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::PanelIo => "panel_io",
            Stage::Preprocess => "preprocess",
            Stage::Econometrics => "econometrics",
            Stage::BetaAlgebra => "beta_algebra",
            Stage::MarketCurves => "market_curves",
            Stage::Uncertainty => "uncertainty",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{stage}: {message} (hint: {hint})")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
    pub hint: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display, hint: &str) -> Self {
        Self {
            stage,
            message: message.to_string(),
            hint: hint.to_string(),
        }
    }
}

/// Where the first-stage instruments come from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentSpec {
    /// `iv_*` columns when the panel has them, otherwise four price lags.
    #[default]
    Auto,
    Columns(Vec<String>),
    Lags(usize),
}

impl FromStr for InstrumentSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "auto" {
            return Ok(Self::Auto);
        }
        if let Some(k) = s.strip_prefix("lags:") {
            let k: usize = k
                .parse()
                .map_err(|_| format!("bad lag count in `{s}`"))?;
            if k == 0 {
                return Err("lag count must be >= 1".into());
            }
            return Ok(Self::Lags(k));
        }
        let cols: Vec<String> = s
            .split(',')
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect();
        if cols.is_empty() {
            return Err("empty instrument list".into());
        }
        Ok(Self::Columns(cols))
    }
}

impl fmt::Display for InstrumentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Lags(k) => write!(f, "lags:{k}"),
            Self::Columns(c) => f.write_str(&c.join(",")),
        }
    }
}

/// Accepts `0.029` or `2.9%`.
pub fn parse_rate(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let invalid = || format!("invalid rate `{s}`");
    let v: f64 = match s.strip_suffix('%') {
        // parsed as `<body>e-2` so `2.9%` rounds exactly like `0.029`
        Some(body) => {
            let body = body.trim();
            if body.contains(['e', 'E']) || body.is_empty() {
                return Err(invalid());
            }
            format!("{body}e-2").parse().map_err(|_| invalid())?
        }
        None => s.parse().map_err(|_| invalid())?,
    };
    if !v.is_finite() {
        return Err(invalid());
    }
    Ok(v)
}

/// Regression outcome reduced to what the downstream stages need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub value: f64,
    pub std_err: f64,
    /// Residual degrees of freedom of the slope's regression, if any.
    pub df: Option<u64>,
    pub stub: bool,
}

/// Output of the estimation stages, before reporting.
#[derive(Debug, Clone)]
pub struct BetaEstimate {
    pub preprocessed: Preprocessed,
    pub fit: ControlFunctionFit,
    pub beta_xq: f64,
    pub beta_se: f64,
}

fn econ_err(e: impl fmt::Display) -> PipelineError {
    PipelineError::new(
        Stage::Econometrics,
        e,
        "check instrument columns and that the panel has enough variation",
    )
}

/// Picks the instruments and aligns the deviation series with them.
pub fn build_instruments(
    panel: &RawPanel,
    x_dev: &[f64],
    y_dev: &[f64],
    spec: &InstrumentSpec,
) -> Result<(Vec<f64>, Vec<f64>, Vec<Regressor>), PipelineError> {
    let lags = |k: usize| {
        let (trimmed, ivs) = lagged_instruments(y_dev, &[x_dev, y_dev], k).map_err(econ_err)?;
        let mut trimmed = trimmed.into_iter();
        let x = trimmed.next().unwrap_or_default();
        let y = trimmed.next().unwrap_or_default();
        Ok((x, y, ivs))
    };
    match spec {
        InstrumentSpec::Auto if panel.instruments().is_empty() => lags(DEFAULT_LAGS),
        InstrumentSpec::Auto => Ok((
            x_dev.to_vec(),
            y_dev.to_vec(),
            panel
                .instruments()
                .iter()
                .map(|i| Regressor::new(i.name.clone(), i.values.clone()))
                .collect(),
        )),
        InstrumentSpec::Lags(k) => lags(*k),
        InstrumentSpec::Columns(cols) => {
            let ivs = cols
                .iter()
                .map(|c| {
                    panel
                        .instrument(c)
                        .map(|i| Regressor::new(i.name.clone(), i.values.clone()))
                        .ok_or_else(|| {
                            PipelineError::new(
                                Stage::Econometrics,
                                format!("instrument column `{c}` not found"),
                                "name existing iv_* columns or use lags:<k>",
                            )
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((x_dev.to_vec(), y_dev.to_vec(), ivs))
        }
    }
}

/// Validates and preprocesses a panel.
pub fn prepare_panel(panel: &RawPanel) -> Result<Preprocessed, PipelineError> {
    panel.require_min_len().map_err(|e| {
        PipelineError::new(Stage::PanelIo, e, "supply at least five yearly rows")
    })?;
    let report = validate_positive(panel);
    if let Some(bad) = report.violations.first() {
        return Err(PipelineError::new(
            Stage::Preprocess,
            format!(
                "non-positive value at row {} (year {}, column {}): {}",
                bad.row + 1,
                bad.year,
                bad.column,
                bad.value
            ),
            "value and flow must be strictly positive; rows are never imputed",
        ));
    }
    preprocess(panel.value(), panel.flow()).map_err(|e| {
        PipelineError::new(
            Stage::Preprocess,
            e,
            "value and flow must be positively aligned",
        )
    })
}

/// Runs the panel through the regression and slope interpretation.
pub fn estimate_beta(
    panel: &RawPanel,
    instruments: &InstrumentSpec,
    level: f64,
) -> Result<BetaEstimate, PipelineError> {
    let preprocessed = prepare_panel(panel)?;
    let (x, y, ivs) = build_instruments(
        panel,
        &preprocessed.ln_flow.deviations,
        &preprocessed.ln_price.deviations,
        instruments,
    )?;
    let fit = control_function_fit(&x, &y, &ivs, level).map_err(econ_err)?;
    let slope = fit.slope();
    let beta_err = |e| {
        PipelineError::new(
            Stage::BetaAlgebra,
            e,
            "the regression slope must be nonzero and finite",
        )
    };
    let beta_xq = beta_from_slope(slope).map_err(beta_err)?;
    let beta_se = beta_se_from_slope(slope, fit.slope_se()).map_err(beta_err)?;
    Ok(BetaEstimate {
        preprocessed,
        fit,
        beta_xq,
        beta_se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub beta_qm: f64,
    pub r_m: f64,
    /// Level of the Monte Carlo intervals.
    pub level: f64,
    /// Level of the regression coefficient intervals.
    pub regression_level: f64,
    /// Monte Carlo draws; zero skips the interval stage.
    pub draws: usize,
    pub seed: u64,
    pub instruments: InstrumentSpec,
    /// Injected `(slope, se)` in place of the regression, for fixtures.
    pub slope_stub: Option<(f64, f64)>,
    /// Injected `(mean ln flow, mean ln price)` in place of the panel means.
    pub mean_override: Option<(f64, f64)>,
}

impl EstimateOptions {
    pub fn new(beta_qm: f64, r_m: f64, seed: u64) -> Self {
        Self {
            beta_qm,
            r_m,
            level: crate::uncertainty::DEFAULT_LEVEL,
            regression_level: DEFAULT_REGRESSION_LEVEL,
            draws: crate::uncertainty::DEFAULT_DRAWS,
            seed,
            instruments: InstrumentSpec::Auto,
            slope_stub: None,
            mean_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input: String,
    pub toolkit_version: String,
    pub beta_qm: f64,
    pub r_m: f64,
    pub level: f64,
    pub regression_level: f64,
    pub draws: usize,
    pub seed: u64,
    pub instruments: String,
    /// Set when the slope was injected rather than estimated.
    pub regression_stub: bool,
    pub mean_override: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Elasticities {
    pub supply: f64,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub descriptive: Vec<Descriptive>,
    pub regression: Option<RegressionTable>,
    pub slope: SlopeEstimate,
    pub beta_xq_se: f64,
    /// Regression interval of the slope mapped onto `beta_xq`.
    pub beta_xq_ci: Option<Interval>,
    pub betas: BetaSet,
    pub returns: ReturnSet,
    pub equilibrium: EquilibriumPoint,
    pub elasticities: Elasticities,
    pub intervals: Option<IntervalReport>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

fn slope_ci_to_beta(ci: Interval) -> Option<Interval> {
    if ci.high < 0.0 {
        Some(Interval {
            low: -ci.high,
            high: -ci.low,
        })
    } else if ci.low > 0.0 {
        Some(Interval {
            low: 1.0 / ci.high,
            high: 1.0 / ci.low,
        })
    } else {
        None
    }
}

pub fn run_estimate(input: &Path, options: &EstimateOptions) -> Result<EstimateReport, PipelineError> {
    let panel = read_panel(input).map_err(|e| {
        PipelineError::new(
            Stage::PanelIo,
            e,
            "expected CSV with header year,value,flow[,iv_*]",
        )
    })?;
    run_estimate_on_panel(&panel, &input.display().to_string(), options, Execution::default())
}

/// Runs every stage on an in-memory panel.
pub fn run_estimate_on_panel(
    panel: &RawPanel,
    input_label: &str,
    options: &EstimateOptions,
    exec: Execution,
) -> Result<EstimateReport, PipelineError> {
    let mut warnings = Vec::new();

    let (preprocessed, regression, slope, beta_xq, beta_se, beta_xq_ci) = match options.slope_stub
    {
        None => {
            let est = estimate_beta(panel, &options.instruments, options.regression_level)?;
            let table = RegressionTable::from_fit(&est.fit).map_err(econ_err)?;
            if !table.is_finite() {
                return Err(PipelineError::new(
                    Stage::Econometrics,
                    "regression statistics are not finite (exact fit)",
                    "the panel has no residual variation to report on",
                ));
            }
            warnings.extend(table.notes.iter().cloned());
            if table.reset.as_ref().is_some_and(|r| r.reject) {
                warnings.push("RESET rejects the linear functional form".into());
            }
            if table.normality.as_ref().is_some_and(|r| r.reject) {
                warnings.push("Jarque-Bera rejects residual normality".into());
            }
            let ci = est.fit.second_stage.conf_intervals(options.regression_level).map_err(econ_err)?[0];
            let slope = SlopeEstimate {
                value: est.fit.slope(),
                std_err: est.fit.slope_se(),
                df: Some(est.fit.second_stage.df_residual as u64),
                stub: false,
            };
            (
                est.preprocessed,
                Some(table),
                slope,
                est.beta_xq,
                est.beta_se,
                slope_ci_to_beta(ci),
            )
        }
        Some((value, std_err)) => {
            let pre = prepare_panel(panel)?;
            let beta_err = |e| PipelineError::new(Stage::BetaAlgebra, e, "stub slope must be nonzero");
            let beta_xq = beta_from_slope(value).map_err(beta_err)?;
            let beta_se = beta_se_from_slope(value, std_err).map_err(beta_err)?;
            warnings.push("regression stub: slope injected, not estimated".into());
            (
                pre,
                None,
                SlopeEstimate {
                    value,
                    std_err,
                    df: None,
                    stub: true,
                },
                beta_xq,
                beta_se,
                None,
            )
        }
    };

    let (mean_ln_q, mean_ln_price) = options
        .mean_override
        .unwrap_or((preprocessed.ln_flow.mean, preprocessed.ln_price.mean));

    let betas = BetaSet::new(beta_xq, options.beta_qm).map_err(|e| {
        PipelineError::new(Stage::BetaAlgebra, e, "--beta-qm must be positive")
    })?;
    let returns = ReturnSet::new(&betas, options.r_m).map_err(|e| {
        PipelineError::new(Stage::BetaAlgebra, e, "--r-m must be finite")
    })?;

    let curve_err = |e| PipelineError::new(Stage::MarketCurves, e, "beta_xq must be positive");
    let equilibrium = equilibrium_levels(beta_xq, mean_ln_q, mean_ln_price).map_err(curve_err)?;
    let (supply, demand) = elasticities(beta_xq).map_err(curve_err)?;
    let [flow_stats, price_stats] = preprocessed.describe();
    warnings.extend(range_warnings(
        &equilibrium,
        (flow_stats.min, flow_stats.max),
        (price_stats.min, price_stats.max),
    ));

    let intervals = if options.draws > 0 {
        let config = MonteCarloConfig {
            beta_mean: beta_xq,
            beta_se,
            draws: options.draws,
            seed: options.seed,
            level: options.level,
            beta_qm: options.beta_qm,
            r_m: options.r_m,
            mean_ln_q,
            mean_ln_price,
        };
        Some(monte_carlo_intervals(&config, exec).map_err(|e| {
            PipelineError::new(
                Stage::Uncertainty,
                e,
                "check --level, --draws and the slope standard error",
            )
        })?)
    } else {
        None
    };

    Ok(EstimateReport {
        schema_version: SCHEMA_VERSION,
        descriptive: vec![flow_stats, price_stats],
        regression,
        slope,
        beta_xq_se: beta_se,
        beta_xq_ci,
        betas,
        returns,
        equilibrium,
        elasticities: Elasticities { supply, demand },
        intervals,
        warnings,
        provenance: Provenance {
            input: input_label.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            beta_qm: options.beta_qm,
            r_m: options.r_m,
            level: options.level,
            regression_level: options.regression_level,
            draws: options.draws,
            seed: options.seed,
            instruments: options.instruments.to_string(),
            regression_stub: options.slope_stub.is_some(),
            mean_override: options.mean_override.is_some(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format `{other}` (json|text|csv)")),
        }
    }
}

/// Flattens a JSON value into `key,value` rows with dotted keys.
pub fn flatten_json(value: &serde_json::Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
        let join = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            serde_json::Value::Object(map) => {
                for (k, child) in map {
                    walk(&join(k), child, out);
                }
            }
            serde_json::Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(&join(&i.to_string()), child, out);
                }
            }
            serde_json::Value::Null => out.push((prefix.to_string(), String::new())),
            serde_json::Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv_rows(rows: &[(String, String)]) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{},{}", csv_field(k), csv_field(v));
    }
    out
}

pub fn render_descriptive(rows: &[Descriptive]) -> String {
    let mut out = String::from("Descriptive Statistics\n");
    let _ = writeln!(
        out,
        "{:<10} {:>5} {:>9} {:>10} {:>9} {:>9}",
        "Variable", "Obs", "Mean", "Std. Dev.", "Min", "Max"
    );
    for d in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>9.3} {:>10.3} {:>9.3} {:>9.3}",
            d.variable, d.obs, d.mean, d.std_dev, d.min, d.max
        );
    }
    out
}

pub fn render_report(report: &EstimateReport, format: ReportFormat) -> Result<String, PipelineError> {
    let report_err = |e: serde_json::Error| PipelineError::new(Stage::Report, e, "report could not be serialized");
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(report_err)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let value = serde_json::to_value(report).map_err(report_err)?;
            Ok(render_csv_rows(&flatten_json(&value)))
        }
        ReportFormat::Text => Ok(render_text(report)),
    }
}

fn render_text(r: &EstimateReport) -> String {
    let mut out = String::new();
    match &r.regression {
        Some(table) => {
            out.push_str("Linear regression (control function)\n");
            out.push_str(&table.render_text());
        }
        None => {
            let _ = writeln!(
                out,
                "Regression stub: slope {:.3} (se {:.3}) injected",
                r.slope.value, r.slope.std_err
            );
        }
    }
    out.push('\n');
    out.push_str(&render_descriptive(&r.descriptive));
    out.push('\n');
    let b = &r.betas;
    let _ = writeln!(
        out,
        "beta_xq = {:.3}  beta_qx = {:.3}  beta_qm = {:.3}  beta_xm = {:.3}",
        b.beta_xq, b.beta_qx, b.beta_qm, b.beta_xm
    );
    let _ = writeln!(
        out,
        "r_m = {:.2}%  r_q = {:.2}%  r_x = {:.2}% per year",
        100.0 * r.returns.r_m,
        100.0 * r.returns.r_q,
        100.0 * r.returns.r_x
    );
    let e = &r.equilibrium;
    let _ = writeln!(
        out,
        "equilibrium: x_e = {:.4}  y_e = {:.4}  price = e^{:.3}  quantity = e^{:.3}  total user cost = e^{:.3}",
        e.x_e, e.y_e, e.ln_price, e.ln_quantity, e.ln_user_cost
    );
    let _ = writeln!(
        out,
        "elasticities: supply {:.3}  demand {:.3}",
        r.elasticities.supply, r.elasticities.demand
    );
    if let Some(iv) = &r.intervals {
        out.push('\n');
        out.push_str(&iv.render_text());
    }
    if !r.warnings.is_empty() {
        out.push('\n');
        for w in &r.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
    }
    out
}
