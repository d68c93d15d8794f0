//! Synthetic shocked-equilibrium data with a known beta.
//!
//! Observations are equilibria of the shocked curves with Gaussian shocks,
//! optionally observed with Gaussian error on the log flow. Shocks may follow a
//! stationary AR(1) so that lagged prices are relevant instruments. Two extra leading
//! observations are generated so that lagged-price instruments exist for
//! every emitted row.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_curves::{shocked_equilibrium, CurveError, ShockMode, ShockModel};
use crate::panel_io::{Instrument, PanelError, RawPanel, MIN_OBSERVATIONS};

const LAGGED_INSTRUMENTS: usize = 2;
const NOISE_INSTRUMENTS: usize = 2;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("levels overflow at observation {0}; reduce the log means")]
    Overflow(usize),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

fn default_start_year() -> i64 {
    2000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub beta_xq: f64,
    pub mean_ln_q: f64,
    pub mean_ln_price: f64,
    pub shocks: ShockModel,
    /// Standard deviation of observation error on the log flow.
    #[serde(default)]
    pub sigma_m: f64,
    /// AR(1) coefficient of both shock processes. The marginal shock sd stays
    /// at its sigma for every value in `(-1, 1)`.
    #[serde(default)]
    pub persistence: f64,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_start_year")]
    pub start_year: i64,
}

impl ScenarioConfig {
    /// Demand shocks only, no observation error.
    pub fn new(beta_xq: f64, sigma_d: f64, n: usize, seed: u64) -> Self {
        Self {
            beta_xq,
            mean_ln_q: 0.0,
            mean_ln_price: 0.0,
            shocks: ShockModel {
                sigma_s: 0.0,
                sigma_d,
                mode: ShockMode::General,
            },
            sigma_m: 0.0,
            persistence: 0.0,
            n,
            seed,
            start_year: default_start_year(),
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(self.beta_xq > 0.0) || !self.beta_xq.is_finite() {
            return Err(SimulationError::InvalidConfig(format!(
                "beta_xq must be positive, got {}",
                self.beta_xq
            )));
        }
        if self.n < MIN_OBSERVATIONS {
            return Err(SimulationError::InvalidConfig(format!(
                "n must be >= {MIN_OBSERVATIONS}, got {}",
                self.n
            )));
        }
        if !self.mean_ln_q.is_finite() || !self.mean_ln_price.is_finite() {
            return Err(SimulationError::InvalidConfig("means must be finite".into()));
        }
        ShockModel::new(self.shocks.sigma_s, self.shocks.sigma_d, self.shocks.mode)?;
        if !(self.sigma_m >= 0.0) || !self.sigma_m.is_finite() {
            return Err(SimulationError::InvalidConfig("sigma_m must be >= 0".into()));
        }
        if !(self.persistence.abs() < 1.0) {
            return Err(SimulationError::InvalidConfig(
                "persistence must lie in (-1, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Paired flow and price deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSeries {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Raw (uncentred) observed equilibria, including the leading lag rows.
fn simulate_with_lead(
    config: &ScenarioConfig,
    lead: usize,
) -> Result<SimulatedSeries, SimulationError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let total = config.n + lead;
    let mut x = Vec::with_capacity(total);
    let mut y = Vec::with_capacity(total);
    let rho = config.persistence;
    let innovation = (1.0 - rho * rho).sqrt();
    let (mut eps_s, mut eps_d) = (0.0, 0.0);
    for t in 0..total {
        let zs: f64 = StandardNormal.sample(&mut rng);
        let zd: f64 = StandardNormal.sample(&mut rng);
        let zm: f64 = StandardNormal.sample(&mut rng);
        let scale = if t == 0 { 1.0 } else { innovation };
        eps_s = rho * eps_s + scale * config.shocks.sigma_s * zs;
        eps_d = rho * eps_d + scale * config.shocks.sigma_d * zd;
        let (xe, ye) = shocked_equilibrium(config.beta_xq, eps_s, eps_d, config.shocks.mode)?;
        x.push(xe + config.sigma_m * zm);
        y.push(ye);
    }
    Ok(SimulatedSeries { x, y })
}

/// Observed equilibria before mean-centring.
pub fn simulate_uncentered(config: &ScenarioConfig) -> Result<SimulatedSeries, SimulationError> {
    let mut s = simulate_with_lead(config, LAGGED_INSTRUMENTS)?;
    s.x.drain(..LAGGED_INSTRUMENTS);
    s.y.drain(..LAGGED_INSTRUMENTS);
    Ok(s)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Centred series plus the lead rows, all shifted by the emitted rows' means.
fn centred_with_lead(config: &ScenarioConfig) -> Result<SimulatedSeries, SimulationError> {
    let raw = simulate_with_lead(config, LAGGED_INSTRUMENTS)?;
    let mx = mean(&raw.x[LAGGED_INSTRUMENTS..]);
    let my = mean(&raw.y[LAGGED_INSTRUMENTS..]);
    Ok(SimulatedSeries {
        x: raw.x.iter().map(|v| v - mx).collect(),
        y: raw.y.iter().map(|v| v - my).collect(),
    })
}

/// Mean-centred observed deviations, as the estimator would see them.
pub fn simulate_equilibria(config: &ScenarioConfig) -> Result<SimulatedSeries, SimulationError> {
    let mut s = centred_with_lead(config)?;
    s.x.drain(..LAGGED_INSTRUMENTS);
    s.y.drain(..LAGGED_INSTRUMENTS);
    Ok(s)
}

/// Builds a raw panel whose preprocessing reproduces [`simulate_equilibria`].
///
/// Instruments: `iv_lag1`, `iv_lag2` (lagged price deviations) and
/// `iv_noise1`, `iv_noise2` (independent standard normals).
pub fn synthesize_panel(config: &ScenarioConfig) -> Result<RawPanel, SimulationError> {
    let full = centred_with_lead(config)?;
    let n = config.n;
    let x = &full.x[LAGGED_INSTRUMENTS..];
    let y = &full.y[LAGGED_INSTRUMENTS..];

    let mut value = Vec::with_capacity(n);
    let mut flow = Vec::with_capacity(n);
    for t in 0..n {
        let q = (config.mean_ln_q + x[t]).exp();
        let price = (config.mean_ln_price + y[t]).exp();
        let v = price * q;
        if !(q.is_finite() && v.is_finite() && q > 0.0 && v > 0.0) {
            return Err(SimulationError::Overflow(t));
        }
        flow.push(q);
        value.push(v);
    }

    let mut instruments: Vec<Instrument> = (1..=LAGGED_INSTRUMENTS)
        .map(|k| Instrument {
            name: format!("iv_lag{k}"),
            values: (0..n).map(|t| full.y[LAGGED_INSTRUMENTS + t - k]).collect(),
        })
        .collect();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(1);
    for k in 1..=NOISE_INSTRUMENTS {
        instruments.push(Instrument {
            name: format!("iv_noise{k}"),
            values: (0..n).map(|_| StandardNormal.sample(&mut noise_rng)).collect(),
        });
    }

    let years = (0..n as i64).map(|t| config.start_year + t).collect();
    Ok(RawPanel::new(years, value, flow, instruments)?)
}
