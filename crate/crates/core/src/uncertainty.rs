//! Monte Carlo intervals for quantities derived from a normally distributed beta.
//!
//! Every draw has its own ChaCha stream keyed by `(seed, draw index)`, so the
//! sampled values do not depend on how the work is split across threads.
//! Quantiles are taken over the full materialized set of draws (linear
//! interpolation between order statistics).

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beta_algebra::{chain_to_market, natural_return};
use crate::market_curves::equilibrium_levels;
use crate::parallel::{map_indexed, map_slice, Execution};

pub const DEFAULT_DRAWS: usize = 100_000;
pub const DEFAULT_LEVEL: f64 = 0.90;

/// Per-draw redraw budget before a draw is declared impossible.
const MAX_ATTEMPTS_PER_DRAW: usize = 1_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(
        "excessive truncation: {rejected} non-positive draws for {draws} accepted \
         (beta distribution inconsistent with beta > 0)"
    )]
    ExcessiveTruncation { rejected: usize, draws: usize },
    #[error("every draw failed to evaluate")]
    NoUsableDraws,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaDraws {
    pub values: Vec<f64>,
    /// Non-positive candidates that were discarded and redrawn.
    pub rejected: usize,
    pub seed: u64,
}

fn draw_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn sample_betas(
    mean: f64,
    se: f64,
    draws: usize,
    seed: u64,
) -> Result<BetaDraws, UncertaintyError> {
    sample_betas_with(mean, se, draws, seed, Execution::default())
}

/// Normal(mean, se) draws truncated to `β > 0` by redrawing.
///
/// Fails when the redraws outnumber half the accepted draws.
pub fn sample_betas_with(
    mean: f64,
    se: f64,
    draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<BetaDraws, UncertaintyError> {
    if !mean.is_finite() || !se.is_finite() || se < 0.0 {
        return Err(UncertaintyError::InvalidInput(format!(
            "need finite mean and se >= 0, got ({mean}, {se})"
        )));
    }
    if draws == 0 {
        return Err(UncertaintyError::InvalidInput("draws must be >= 1".into()));
    }
    if se == 0.0 {
        if mean <= 0.0 {
            return Err(UncertaintyError::ExcessiveTruncation { rejected: draws, draws });
        }
        return Ok(BetaDraws {
            values: vec![mean; draws],
            rejected: 0,
            seed,
        });
    }

    let results = map_indexed(draws, exec, |i| {
        let mut rng = draw_stream(seed, i);
        for attempt in 0..MAX_ATTEMPTS_PER_DRAW {
            let z: f64 = StandardNormal.sample(&mut rng);
            let beta = mean + se * z;
            if beta > 0.0 {
                return Some((beta, attempt));
            }
        }
        None
    });
    let mut values = Vec::with_capacity(draws);
    let mut rejected = 0usize;
    for r in results {
        match r {
            Some((beta, extra)) => {
                values.push(beta);
                rejected += extra;
            }
            None => {
                return Err(UncertaintyError::ExcessiveTruncation {
                    rejected: rejected + MAX_ATTEMPTS_PER_DRAW,
                    draws,
                })
            }
        }
    }
    if rejected * 2 > draws {
        return Err(UncertaintyError::ExcessiveTruncation { rejected, draws });
    }
    Ok(BetaDraws {
        values,
        rejected,
        seed,
    })
}

/// Empirical quantile of sorted data, linear between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub minimum: f64,
    pub maximum: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64) -> bool {
        self.minimum <= x && x <= self.maximum
    }
}

/// Quantities evaluated for a single beta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub ln_price: f64,
    pub ln_quantity: f64,
    pub ln_user_cost: f64,
    pub beta_xm: f64,
    pub r_x: f64,
}

impl DerivedQuantities {
    pub fn evaluate(
        beta_xq: f64,
        beta_qm: f64,
        r_m: f64,
        mean_ln_q: f64,
        mean_ln_price: f64,
    ) -> Option<Self> {
        let eq = equilibrium_levels(beta_xq, mean_ln_q, mean_ln_price).ok()?;
        let beta_xm = chain_to_market(beta_xq, beta_qm).ok()?;
        let r_x = natural_return(beta_xm, r_m).ok()?;
        Some(Self {
            ln_price: eq.ln_price,
            ln_quantity: eq.ln_quantity,
            ln_user_cost: eq.ln_user_cost,
            beta_xm,
            r_x,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub level: f64,
    pub ln_price: Bounds,
    pub ln_quantity: Bounds,
    pub ln_user_cost: Bounds,
    pub beta_xm: Bounds,
    /// Decimal fraction per year.
    pub r_x: Bounds,
    pub draws_used: usize,
    pub discarded: usize,
    pub rejected: usize,
    pub seed: Option<u64>,
    /// Quantities at the mean beta, when known.
    pub point: Option<DerivedQuantities>,
}

impl IntervalReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let pct = self.level * 100.0;
        let _ = writeln!(out, "{pct}% confidence interval of estimates");
        let _ = writeln!(
            out,
            "{:<8} {:>10} {:>12} {:>13} {:>8} {:>8}",
            "Between", "ln_price", "ln_quantity", "ln_user_cost", "beta_xm", "r_x (%)"
        );
        for (label, pick) in [
            ("Minimum", (|b: &Bounds| b.minimum) as fn(&Bounds) -> f64),
            ("Maximum", |b: &Bounds| b.maximum),
        ] {
            let _ = writeln!(
                out,
                "{:<8} {:>10.3} {:>12.3} {:>13.3} {:>8.3} {:>8.2}",
                label,
                pick(&self.ln_price),
                pick(&self.ln_quantity),
                pick(&self.ln_user_cost),
                pick(&self.beta_xm),
                100.0 * pick(&self.r_x)
            );
        }
        let _ = writeln!(
            out,
            "draws used: {}, discarded: {}, redrawn: {}, seed: {}",
            self.draws_used,
            self.discarded,
            self.rejected,
            self.seed.map_or_else(|| "n/a".into(), |s| s.to_string())
        );
        out
    }
}

fn check_level(level: f64) -> Result<(), UncertaintyError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(UncertaintyError::InvalidInput(format!(
            "confidence level must lie in (0, 1), got {level}"
        )))
    }
}

pub fn derived_intervals(
    draws: &[f64],
    beta_qm: f64,
    r_m: f64,
    mean_ln_q: f64,
    mean_ln_price: f64,
    level: f64,
) -> Result<IntervalReport, UncertaintyError> {
    derived_intervals_with(
        draws,
        beta_qm,
        r_m,
        mean_ln_q,
        mean_ln_price,
        level,
        Execution::default(),
    )
}

pub fn derived_intervals_with(
    draws: &[f64],
    beta_qm: f64,
    r_m: f64,
    mean_ln_q: f64,
    mean_ln_price: f64,
    level: f64,
    exec: Execution,
) -> Result<IntervalReport, UncertaintyError> {
    check_level(level)?;
    if draws.is_empty() {
        return Err(UncertaintyError::InvalidInput("no draws".into()));
    }
    if !(beta_qm > 0.0) || !beta_qm.is_finite() || !r_m.is_finite() {
        return Err(UncertaintyError::InvalidInput(format!(
            "need beta_qm > 0 and finite r_m, got ({beta_qm}, {r_m})"
        )));
    }
    let evaluated = map_slice(draws, exec, |&b| {
        DerivedQuantities::evaluate(b, beta_qm, r_m, mean_ln_q, mean_ln_price)
    });
    let usable: Vec<DerivedQuantities> = evaluated.into_iter().flatten().collect();
    if usable.is_empty() {
        return Err(UncertaintyError::NoUsableDraws);
    }
    let discarded = draws.len() - usable.len();

    let p_lo = 0.5 * (1.0 - level);
    let p_hi = 0.5 * (1.0 + level);
    let bounds = |pick: fn(&DerivedQuantities) -> f64| {
        let mut column: Vec<f64> = usable.iter().map(pick).collect();
        column.sort_unstable_by(f64::total_cmp);
        Bounds {
            minimum: quantile_sorted(&column, p_lo),
            maximum: quantile_sorted(&column, p_hi),
        }
    };
    Ok(IntervalReport {
        level,
        ln_price: bounds(|d| d.ln_price),
        ln_quantity: bounds(|d| d.ln_quantity),
        ln_user_cost: bounds(|d| d.ln_user_cost),
        beta_xm: bounds(|d| d.beta_xm),
        r_x: bounds(|d| d.r_x),
        draws_used: usable.len(),
        discarded,
        rejected: 0,
        seed: None,
        point: None,
    })
}

/// Inputs for an end-to-end interval run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub beta_mean: f64,
    pub beta_se: f64,
    pub draws: usize,
    pub seed: u64,
    pub level: f64,
    pub beta_qm: f64,
    pub r_m: f64,
    pub mean_ln_q: f64,
    pub mean_ln_price: f64,
}

/// Samples betas and reports the derived intervals with the point estimate attached.
pub fn monte_carlo_intervals(
    config: &MonteCarloConfig,
    exec: Execution,
) -> Result<IntervalReport, UncertaintyError> {
    let sampled = sample_betas_with(
        config.beta_mean,
        config.beta_se,
        config.draws,
        config.seed,
        exec,
    )?;
    let mut report = derived_intervals_with(
        &sampled.values,
        config.beta_qm,
        config.r_m,
        config.mean_ln_q,
        config.mean_ln_price,
        config.level,
        exec,
    )?;
    report.rejected = sampled.rejected;
    report.seed = Some(config.seed);
    report.point = DerivedQuantities::evaluate(
        config.beta_mean,
        config.beta_qm,
        config.r_m,
        config.mean_ln_q,
        config.mean_ln_price,
    );
    Ok(report)
}
