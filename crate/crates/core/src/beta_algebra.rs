//! Asset-beta arithmetic: slope interpretation, chaining to the market, and rates.
//!
//! Rates are decimal fractions per year with a zero risk-free rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BetaError {
    #[error("regression slope is zero; beta is undefined")]
    ZeroSlope,
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<f64, BetaError> {
    if !value.is_finite() {
        Err(BetaError::NonFinite { name, value })
    } else if value <= 0.0 {
        Err(BetaError::NonPositive { name, value })
    } else {
        Ok(value)
    }
}

/// Interprets the slope of flow deviations on price deviations.
///
/// A negative slope is read off the demand curve (`β = −α`); a positive one
/// belongs to the mirrored world where the slope is `1/β`. A fitted slope of
/// −0.919 is therefore `β_xq = 0.919` even when a table labels the estimate
/// `β_qx`; the returned value is always `β_xq`.
pub fn beta_from_slope(alpha: f64) -> Result<f64, BetaError> {
    if !alpha.is_finite() {
        return Err(BetaError::NonFinite {
            name: "slope",
            value: alpha,
        });
    }
    if alpha == 0.0 {
        return Err(BetaError::ZeroSlope);
    }
    Ok(if alpha < 0.0 { -alpha } else { 1.0 / alpha })
}

/// Standard error of `beta_from_slope(alpha)` by the delta method.
pub fn beta_se_from_slope(alpha: f64, alpha_se: f64) -> Result<f64, BetaError> {
    beta_from_slope(alpha)?;
    if !(alpha_se >= 0.0) || !alpha_se.is_finite() {
        return Err(BetaError::NonFinite {
            name: "slope standard error",
            value: alpha_se,
        });
    }
    Ok(if alpha < 0.0 {
        alpha_se
    } else {
        alpha_se / (alpha * alpha)
    })
}

/// The slope the same data would show under the opposite correlation sign.
pub fn mirror_slope(alpha: f64) -> f64 {
    -alpha
}

pub fn chain_to_market(beta_xq: f64, beta_qm: f64) -> Result<f64, BetaError> {
    Ok(positive("beta_xq", beta_xq)? * positive("beta_qm", beta_qm)?)
}

pub fn natural_return(beta_xm: f64, r_m: f64) -> Result<f64, BetaError> {
    let beta_xm = positive("beta_xm", beta_xm)?;
    if !r_m.is_finite() {
        return Err(BetaError::NonFinite {
            name: "r_m",
            value: r_m,
        });
    }
    Ok(beta_xm * r_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSet {
    pub beta_xq: f64,
    pub beta_qx: f64,
    pub beta_qm: f64,
    pub beta_xm: f64,
}

impl BetaSet {
    pub fn new(beta_xq: f64, beta_qm: f64) -> Result<Self, BetaError> {
        let beta_xm = chain_to_market(beta_xq, beta_qm)?;
        Ok(Self {
            beta_xq,
            beta_qx: 1.0 / beta_xq,
            beta_qm,
            beta_xm,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnSet {
    pub r_m: f64,
    pub r_q: f64,
    pub r_x: f64,
}

impl ReturnSet {
    pub fn new(betas: &BetaSet, r_m: f64) -> Result<Self, BetaError> {
        Ok(Self {
            r_m,
            r_q: natural_return(betas.beta_qm, r_m)?,
            r_x: natural_return(betas.beta_xm, r_m)?,
        })
    }
}
