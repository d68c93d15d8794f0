//! Supply and demand in deviation space and their equilibrium.
//!
//! With `x` the centred log flow and `y` the centred log price, supply is
//! `y = β·x + ln β` and demand is `x = −β·y`. Level quantities are recovered by
//! adding the stored log means back on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("beta_xq must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("sample range [{0}, {1}] is empty")]
    EmptyRange(f64, f64),
    #[error("need at least 2 sample points, got {0}")]
    TooFewPoints(usize),
    #[error("integration bound must be >= 1, got {0}")]
    InvalidBound(f64),
    #[error("quadrature did not converge (estimated error {0:e})")]
    NoConvergence(f64),
    #[error("shock standard deviations must be >= 0")]
    NegativeSigma,
}

fn check_beta(beta: f64) -> Result<f64, CurveError> {
    if beta.is_finite() && beta > 0.0 {
        Ok(beta)
    } else {
        Err(CurveError::InvalidBeta(beta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Supply,
    Demand,
}

impl std::fmt::Display for CurveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CurveKind::Supply => "supply",
            CurveKind::Demand => "demand",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub kind: CurveKind,
    pub beta_xq: f64,
}

impl CurveSpec {
    pub fn supply(beta_xq: f64) -> Result<Self, CurveError> {
        Ok(Self {
            kind: CurveKind::Supply,
            beta_xq: check_beta(beta_xq)?,
        })
    }

    pub fn demand(beta_xq: f64) -> Result<Self, CurveError> {
        Ok(Self {
            kind: CurveKind::Demand,
            beta_xq: check_beta(beta_xq)?,
        })
    }

    /// Price deviation on the curve at flow deviation `x`.
    pub fn price_at(&self, x: f64) -> f64 {
        match self.kind {
            CurveKind::Supply => self.beta_xq * x + self.beta_xq.ln(),
            CurveKind::Demand => 0.0 - x / self.beta_xq,
        }
    }

    /// Slope dy/dx.
    pub fn slope(&self) -> f64 {
        match self.kind {
            CurveKind::Supply => self.beta_xq,
            CurveKind::Demand => -1.0 / self.beta_xq,
        }
    }

    /// Residual of `(x, y)` in the curve's defining equation.
    pub fn residual(&self, x: f64, y: f64) -> f64 {
        let b = self.beta_xq;
        match self.kind {
            CurveKind::Supply => y - (b * x + b.ln()),
            CurveKind::Demand => x + b * y,
        }
    }
}

/// Equilibrium in deviations and in log levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub beta_xq: f64,
    pub x_e: f64,
    pub y_e: f64,
    pub ln_quantity: f64,
    pub ln_price: f64,
    pub quantity: f64,
    pub price: f64,
    /// `ln_quantity + ln_price`.
    pub ln_user_cost: f64,
}

pub fn equilibrium_deviation(beta_xq: f64) -> Result<(f64, f64), CurveError> {
    let b = check_beta(beta_xq)?;
    let y = b.ln() / (1.0 + b * b);
    Ok((0.0 - b * y, y))
}

pub fn equilibrium_levels(
    beta_xq: f64,
    mean_ln_q: f64,
    mean_ln_price: f64,
) -> Result<EquilibriumPoint, CurveError> {
    if !mean_ln_q.is_finite() {
        return Err(CurveError::NonFinite("mean_ln_q"));
    }
    if !mean_ln_price.is_finite() {
        return Err(CurveError::NonFinite("mean_ln_price"));
    }
    let (x_e, y_e) = equilibrium_deviation(beta_xq)?;
    let ln_quantity = mean_ln_q + x_e;
    let ln_price = mean_ln_price + y_e;
    Ok(EquilibriumPoint {
        beta_xq,
        x_e,
        y_e,
        ln_quantity,
        ln_price,
        quantity: ln_quantity.exp(),
        price: ln_price.exp(),
        ln_user_cost: ln_quantity + ln_price,
    })
}

/// Price elasticities `(supply, demand) = (1/β, β)`, as magnitudes.
pub fn elasticities(beta_xq: f64) -> Result<(f64, f64), CurveError> {
    let b = check_beta(beta_xq)?;
    Ok((1.0 / b, b))
}

/// Notes for equilibrium log levels outside the observed `[min, max]` ranges.
pub fn range_warnings(
    point: &EquilibriumPoint,
    ln_q_range: (f64, f64),
    ln_price_range: (f64, f64),
) -> Vec<String> {
    let mut warnings = Vec::new();
    let outside = |v: f64, (lo, hi): (f64, f64)| v < lo || v > hi;
    if outside(point.ln_quantity, ln_q_range) {
        warnings.push(format!(
            "equilibrium ln_quantity {:.4} lies outside the observed range [{:.4}, {:.4}]",
            point.ln_quantity, ln_q_range.0, ln_q_range.1
        ));
    }
    if outside(point.ln_price, ln_price_range) {
        warnings.push(format!(
            "equilibrium ln_price {:.4} lies outside the observed range [{:.4}, {:.4}]",
            point.ln_price, ln_price_range.0, ln_price_range.1
        ));
    }
    warnings
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
}

/// Evenly spaced `(x, y)` samples of a curve over `[lo, hi]`.
pub fn curve_samples(
    curve: CurveSpec,
    x_range: (f64, f64),
    count: usize,
) -> Result<Vec<CurvePoint>, CurveError> {
    let (lo, hi) = x_range;
    if !lo.is_finite() || !hi.is_finite() {
        return Err(CurveError::NonFinite("x_range"));
    }
    if !(lo < hi) {
        return Err(CurveError::EmptyRange(lo, hi));
    }
    if count < 2 {
        return Err(CurveError::TooFewPoints(count));
    }
    check_beta(curve.beta_xq)?;
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            let x = if i == count - 1 { hi } else { lo + step * i as f64 };
            CurvePoint {
                x,
                y: curve.price_at(x),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShockMode {
    /// Independent supply and demand shocks.
    #[default]
    General,
    /// Supply shock tied to the demand shock as `ε_S = −ε_D`.
    #[serde(rename = "paper", alias = "tied")]
    Tied,
}

impl std::str::FromStr for ShockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "general" => Ok(Self::General),
            "paper" | "tied" => Ok(Self::Tied),
            other => Err(format!("unknown shock mode `{other}` (general|paper)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockModel {
    pub sigma_s: f64,
    pub sigma_d: f64,
    pub mode: ShockMode,
}

impl ShockModel {
    pub fn new(sigma_s: f64, sigma_d: f64, mode: ShockMode) -> Result<Self, CurveError> {
        if !(sigma_s >= 0.0 && sigma_d >= 0.0) || !sigma_s.is_finite() || !sigma_d.is_finite() {
            return Err(CurveError::NegativeSigma);
        }
        Ok(Self {
            sigma_s,
            sigma_d,
            mode,
        })
    }
}

/// Equilibrium `(x_e, y_e)` of the shocked curves
/// `y = β·x + ln β + ε_S` and `x = −β·y + ε_D`.
///
/// In [`ShockMode::Tied`] `eps_s` is ignored and the combined shock
/// `ε_D(1+β)/(1+β²)` is added to the unshocked flow deviation.
pub fn shocked_equilibrium(
    beta_xq: f64,
    eps_s: f64,
    eps_d: f64,
    mode: ShockMode,
) -> Result<(f64, f64), CurveError> {
    let b = check_beta(beta_xq)?;
    if !eps_s.is_finite() || !eps_d.is_finite() {
        return Err(CurveError::NonFinite("shock"));
    }
    let denom = 1.0 + b * b;
    Ok(match mode {
        ShockMode::General => {
            let y = (b.ln() + b * eps_d + eps_s) / denom;
            (-b * y + eps_d, y)
        }
        ShockMode::Tied => {
            let y0 = b.ln() / denom;
            let x = -b * y0 + eps_d * (1.0 + b) / denom;
            // back out the price from the shocked demand curve
            (x, (eps_d - x) / b)
        }
    })
}

fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    const XGK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_8,
    ];
    const WG: [f64; 4] = [
        0.129_484_966_168_869_7,
        0.279_705_391_489_276_7,
        0.381_830_050_505_118_9,
        0.417_959_183_673_469_4,
    ];
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod quadrature to absolute tolerance `tol`.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, CurveError> {
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64, CurveError> {
        let (value, err) = gauss_kronrod_15(f, a, b);
        let floor = 50.0 * f64::EPSILON * value.abs();
        if err <= tol.max(floor) || (b - a).abs() <= f64::EPSILON * a.abs().max(b.abs()) {
            return Ok(value);
        }
        if depth == 0 {
            return Err(CurveError::NoConvergence(err));
        }
        let mid = 0.5 * (a + b);
        Ok(recurse(f, a, mid, 0.5 * tol, depth - 1)? + recurse(f, mid, b, 0.5 * tol, depth - 1)?)
    }
    recurse(&f, a, b, tol, 50)
}

/// `∫_{1/B}^{B} ln β / (1+β²) dβ`, which vanishes by the `β ↦ 1/β` antisymmetry.
pub fn zero_sum_integral(bound: f64, tolerance: f64) -> Result<f64, CurveError> {
    if !(bound >= 1.0) || !bound.is_finite() {
        return Err(CurveError::InvalidBound(bound));
    }
    if bound == 1.0 {
        return Ok(0.0);
    }
    let integrand = |b: f64| b.ln() / (1.0 + b * b);
    // geometric panels on each side of 1 keep every panel well resolved
    let mut edges = vec![1.0];
    while *edges.last().unwrap() < bound {
        let next = (edges.last().unwrap() * 2.0).min(bound);
        edges.push(next);
    }
    let panels = 2 * (edges.len() - 1);
    let panel_tol = 0.25 * tolerance / panels as f64;
    let mut upper = 0.0;
    let mut lower = 0.0;
    for w in edges.windows(2) {
        upper += integrate(integrand, w[0], w[1], panel_tol)?;
        lower += integrate(integrand, 1.0 / w[1], 1.0 / w[0], panel_tol)?;
    }
    Ok(upper + lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    /// Cramer's rule on {y − βx = ln β, x + βy = 0}.
    fn solve_linear_system(b: f64) -> (f64, f64) {
        let (a11, a12, c1) = (-b, 1.0, b.ln());
        let (a21, a22, c2) = (1.0, b, 0.0);
        let det = a11 * a22 - a12 * a21;
        ((c1 * a22 - a12 * c2) / det, (a11 * c2 - c1 * a21) / det)
    }

    #[test]
    fn unit_beta_sits_at_the_means() {
        assert_eq!(equilibrium_deviation(1.0).unwrap(), (0.0, 0.0));
        let p = equilibrium_levels(1.0, 2.113, 2.828).unwrap();
        assert_eq!((p.ln_quantity, p.ln_price), (2.113, 2.828));
    }

    #[test]
    fn estimated_beta_equilibrium() {
        let (x, y) = equilibrium_deviation(0.919).unwrap();
        assert_abs_diff_eq!(x, 0.0421, epsilon = 1e-3);
        assert_abs_diff_eq!(y, -0.0458, epsilon = 1e-3);
        let p = equilibrium_levels(0.919, 2.113, 2.828).unwrap();
        assert_abs_diff_eq!(p.ln_price, 2.782, epsilon = 0.002);
        assert_abs_diff_eq!(p.ln_quantity, 2.155, epsilon = 0.002);
        assert_abs_diff_eq!(p.ln_user_cost, 4.937, epsilon = 0.002);
        assert_abs_diff_eq!(p.price.ln(), p.ln_price, epsilon = 1e-14);
    }

    #[test]
    fn equilibrium_matches_linear_solve() {
        for b in [E, 2.0, 0.3, 17.0] {
            let (x, y) = equilibrium_deviation(b).unwrap();
            let (xs, ys) = solve_linear_system(b);
            assert_abs_diff_eq!(x, xs, epsilon = 1e-14);
            assert_abs_diff_eq!(y, ys, epsilon = 1e-14);
        }
        let (x, y) = equilibrium_deviation(E).unwrap();
        assert_abs_diff_eq!(y, 1.0 / (1.0 + E * E), epsilon = 1e-15);
        assert_abs_diff_eq!(x, -E / (1.0 + E * E), epsilon = 1e-15);

        let p = equilibrium_levels(2.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(p.ln_price, 2f64.ln() / 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.ln_quantity, -2.0 * 2f64.ln() / 5.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_beta_is_rejected() {
        for b in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(equilibrium_deviation(b).is_err());
            assert!(elasticities(b).is_err());
        }
        assert!(equilibrium_levels(1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn elasticity_values() {
        assert_eq!(elasticities(1.0).unwrap(), (1.0, 1.0));
        assert_eq!(elasticities(2.0).unwrap(), (0.5, 2.0));
        let (s, d) = elasticities(0.919).unwrap();
        assert_abs_diff_eq!(s * 0.919, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 1.088, epsilon = 1e-3);
        assert_eq!(d, 0.919);
    }

    #[test]
    fn curve_geometry() {
        let s = CurveSpec::supply(2.5).unwrap();
        let d = CurveSpec::demand(2.5).unwrap();
        assert_eq!(s.slope(), 2.5);
        assert_eq!(d.slope(), -0.4);
        assert_eq!(s.price_at(0.0), 2.5f64.ln());
        assert_eq!(d.price_at(0.0), 0.0);
        assert_eq!(CurveSpec::demand(2.0).unwrap().price_at(1.0), -0.5);
    }

    #[test]
    fn sampled_curves() {
        let pts = curve_samples(CurveSpec::supply(1.0).unwrap(), (-1.0, 1.0), 3).unwrap();
        let pairs: Vec<_> = pts.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(pairs, [(-1.0, -1.0), (0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(
            curve_samples(CurveSpec::supply(1.0).unwrap(), (1.0, 1.0), 3),
            Err(CurveError::EmptyRange(..))
        ));
        assert!(curve_samples(CurveSpec::supply(1.0).unwrap(), (0.0, 1.0), 1).is_err());
    }

    #[test]
    fn sampled_curves_intersect_at_equilibrium() {
        let b = 0.919;
        let grid = (-0.5, 0.5);
        let s = curve_samples(CurveSpec::supply(b).unwrap(), grid, 101).unwrap();
        let d = curve_samples(CurveSpec::demand(b).unwrap(), grid, 101).unwrap();
        let gap: Vec<f64> = s.iter().zip(&d).map(|(a, c)| a.y - c.y).collect();
        let i = gap.windows(2).position(|w| w[0] * w[1] <= 0.0).unwrap();
        let t = gap[i] / (gap[i] - gap[i + 1]);
        let x = s[i].x + t * (s[i + 1].x - s[i].x);
        let y = s[i].y + t * (s[i + 1].y - s[i].y);
        let (xe, ye) = equilibrium_deviation(b).unwrap();
        let spacing = 0.01;
        assert!((x - xe).abs() < spacing && (y - ye).abs() < spacing);
        assert_abs_diff_eq!(x, xe, epsilon = 1e-12);
    }

    #[test]
    fn zero_sum_examples() {
        assert_eq!(zero_sum_integral(1.0, 1e-8).unwrap(), 0.0);
        assert!(zero_sum_integral(10.0, 1e-8).unwrap().abs() <= 1e-8);
        assert!(zero_sum_integral(1e6, 1e-6).unwrap().abs() <= 1e-6);
        assert!(zero_sum_integral(0.5, 1e-8).is_err());
    }

    #[test]
    fn quadrature_against_closed_forms() {
        // ∫_1^∞ ln x/(1+x²) dx = Catalan's constant; check a finite piece instead:
        // ∫_0^1 x² dx and ∫_1^e ln x dx = 1
        assert_abs_diff_eq!(integrate(|x| x * x, 0.0, 1.0, 1e-14).unwrap(), 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(integrate(f64::ln, 1.0, E, 1e-13).unwrap(), 1.0, epsilon = 1e-13);
        let catalan = 0.915_965_594_177_219_015;
        let half = integrate(|b| b.ln() / (1.0 + b * b), 1.0, 1e8, 1e-12).unwrap();
        // tail beyond 1e8 is ~ (ln 1e8 + 1)/1e8
        assert_abs_diff_eq!(half, catalan, epsilon = 3e-7);
    }

    #[test]
    fn shock_examples() {
        let b = 1.7;
        assert_eq!(
            shocked_equilibrium(b, 0.0, 0.0, ShockMode::General).unwrap(),
            equilibrium_deviation(b).unwrap()
        );
        let (x, y) = shocked_equilibrium(1.0, 0.0, 0.3, ShockMode::General).unwrap();
        assert_abs_diff_eq!(x, 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(y, 0.15, epsilon = 1e-15);
        let (x, y) = shocked_equilibrium(1.0, 123.0, 0.3, ShockMode::Tied).unwrap();
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tied_mode_equals_opposed_general_shocks() {
        for i in 0..10 {
            for j in 0..10 {
                let b = 10f64.powf(-1.5 + 3.0 * i as f64 / 9.0);
                let delta = -0.5 + j as f64 / 9.0;
                let (xp, yp) = shocked_equilibrium(b, 0.0, delta, ShockMode::Tied).unwrap();
                let (xg, yg) = shocked_equilibrium(b, -delta, delta, ShockMode::General).unwrap();
                assert_abs_diff_eq!(xp, xg, epsilon = 1e-12);
                assert_abs_diff_eq!(yp, yg, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn range_warning_is_attached_outside_observed_data() {
        let p = equilibrium_levels(0.919, 2.113, 2.828).unwrap();
        assert!(range_warnings(&p, (-0.357, 4.461), (0.361, 5.585)).is_empty());
        let w = range_warnings(&p, (3.0, 4.0), (0.0, 1.0));
        assert_eq!(w.len(), 2);
    }

    proptest! {
        #[test]
        fn equilibrium_lies_on_both_curves(log_b in -3.0f64..3.0) {
            let b = 10f64.powf(log_b);
            let (x, y) = equilibrium_deviation(b).unwrap();
            prop_assert!(CurveSpec::supply(b).unwrap().residual(x, y).abs() <= 1e-12);
            prop_assert!(CurveSpec::demand(b).unwrap().residual(x, y).abs() <= 1e-12);
            let y_expected = b.ln() / (1.0 + b * b);
            prop_assert!((y - y_expected).abs() <= 1e-12);
            prop_assert!((x + b * y).abs() <= 1e-12);
        }

        #[test]
        fn sign_laws(log_b in -3.0f64..3.0) {
            let b = 10f64.powf(log_b);
            let (x, y) = equilibrium_deviation(b).unwrap();
            if b > 1.0 {
                prop_assert!(y > 0.0 && x < 0.0);
            } else if b < 1.0 {
                prop_assert!(y < 0.0 && x > 0.0);
            }
        }

        #[test]
        fn inverse_beta_identity(log_b in -3.0f64..3.0) {
            let b = 10f64.powf(log_b);
            let (_, y_inv) = equilibrium_deviation(1.0 / b).unwrap();
            let (_, y) = equilibrium_deviation(b).unwrap();
            prop_assert!((y_inv - (-b.ln() / (1.0 + 1.0 / (b * b)))).abs() <= 1e-12);
            prop_assert!((y_inv + b * b * y).abs() <= 1e-12 * (1.0 + (b * b * y).abs()));
        }
    }
}
