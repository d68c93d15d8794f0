//! Per-unit price construction and mean-centred log series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("series lengths differ ({value} vs {flow})")]
    LengthMismatch { value: usize, flow: usize },
    #[error("empty series")]
    Empty,
    #[error("{0} series has zero norm")]
    ZeroNorm(&'static str),
    #[error("zero flow at index {0}")]
    ZeroFlow(usize),
    #[error("non-positive value {value} at index {index}")]
    NonPositive { index: usize, value: f64 },
}

/// Unit price series: the value series scaled by its cosine with the flow
/// series, then divided element-wise by the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub values: Vec<f64>,
    /// `v·q / (‖v‖‖q‖)`, in [-1, 1].
    pub cosine: f64,
}

/// Deviations of `ln(series)` from their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredLogSeries {
    pub deviations: Vec<f64>,
    pub mean: f64,
}

impl CenteredLogSeries {
    pub fn len(&self) -> usize {
        self.deviations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deviations.is_empty()
    }

    /// Recovers the original positive series.
    pub fn levels(&self) -> Vec<f64> {
        self.deviations
            .iter()
            .map(|d| (self.mean + d).exp())
            .collect()
    }

    /// The log series `mean + deviation_t`.
    pub fn logs(&self) -> Vec<f64> {
        self.deviations.iter().map(|d| self.mean + d).collect()
    }
}

fn norm(xs: &[f64]) -> f64 {
    // hypot-style accumulation keeps 1e±200 inputs finite
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * xs.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

pub fn unit_price_series(value: &[f64], flow: &[f64]) -> Result<PriceSeries, PreprocessError> {
    if value.len() != flow.len() {
        return Err(PreprocessError::LengthMismatch {
            value: value.len(),
            flow: flow.len(),
        });
    }
    if value.is_empty() {
        return Err(PreprocessError::Empty);
    }
    if let Some(i) = flow.iter().position(|&q| q == 0.0) {
        return Err(PreprocessError::ZeroFlow(i));
    }
    let norm_v = norm(value);
    let norm_q = norm(flow);
    if norm_v == 0.0 {
        return Err(PreprocessError::ZeroNorm("value"));
    }
    if norm_q == 0.0 {
        return Err(PreprocessError::ZeroNorm("flow"));
    }
    let dot: f64 = value
        .iter()
        .zip(flow)
        .map(|(v, q)| (v / norm_v) * (q / norm_q))
        .sum();
    let cosine = dot.clamp(-1.0, 1.0);
    let values = value
        .iter()
        .zip(flow)
        .map(|(v, q)| cosine * (v / q))
        .collect();
    Ok(PriceSeries { values, cosine })
}

pub fn center_log(series: &[f64]) -> Result<CenteredLogSeries, PreprocessError> {
    if series.is_empty() {
        return Err(PreprocessError::Empty);
    }
    if let Some(index) = series.iter().position(|&s| !(s > 0.0)) {
        return Err(PreprocessError::NonPositive {
            index,
            value: series[index],
        });
    }
    let logs: Vec<f64> = series.iter().map(|s| s.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let deviations = logs.iter().map(|l| l - mean).collect();
    Ok(CenteredLogSeries { deviations, mean })
}

/// Summary row in the shape of a descriptive-statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub variable: String,
    pub obs: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

impl Descriptive {
    pub fn of(variable: &str, xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let std_dev = if n > 1 {
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            variable: variable.to_string(),
            obs: n,
            mean,
            std_dev,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Log flow `x` and log price `y`, both mean-centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessed {
    pub price: PriceSeries,
    pub ln_flow: CenteredLogSeries,
    pub ln_price: CenteredLogSeries,
}

impl Preprocessed {
    pub fn describe(&self) -> [Descriptive; 2] {
        [
            Descriptive::of("ln_flow", &self.ln_flow.logs()),
            Descriptive::of("ln_price", &self.ln_price.logs()),
        ]
    }
}

pub fn preprocess(value: &[f64], flow: &[f64]) -> Result<Preprocessed, PreprocessError> {
    let price = unit_price_series(value, flow)?;
    let ln_flow = center_log(flow)?;
    let ln_price = center_log(&price.values)?;
    Ok(Preprocessed {
        price,
        ln_flow,
        ln_price,
    })
}
