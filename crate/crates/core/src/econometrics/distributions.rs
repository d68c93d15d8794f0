use serde::{Deserialize, Serialize};
use statrs::function::{beta::beta_reg, erf::erfc, gamma::gamma_ur};

use super::EconometricsError;

/// Reference distribution for [`tail_probability`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    StudentT { df: f64 },
    F { d1: f64, d2: f64 },
    ChiSquare { k: f64 },
    Normal,
}

fn positive(name: &str, x: f64) -> Result<(), EconometricsError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(EconometricsError::InvalidParameter(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

/// Two-sided for Student t, upper tail for F, chi-square and the normal.
pub fn tail_probability(statistic: f64, dist: Distribution) -> Result<f64, EconometricsError> {
    if statistic.is_nan() {
        return Err(EconometricsError::InvalidParameter(
            "statistic is NaN".into(),
        ));
    }
    let p = match dist {
        Distribution::StudentT { df } => {
            positive("df", df)?;
            if statistic.is_infinite() {
                0.0
            } else {
                let t2 = statistic * statistic;
                // I_x(df/2, 1/2) with x = df/(df+t²); the complement form is
                // better conditioned when t² is small relative to df
                if t2 < df {
                    1.0 - beta_reg(0.5, df / 2.0, t2 / (df + t2))
                } else {
                    beta_reg(df / 2.0, 0.5, df / (df + t2))
                }
            }
        }
        Distribution::F { d1, d2 } => {
            positive("d1", d1)?;
            positive("d2", d2)?;
            if statistic <= 0.0 {
                1.0
            } else if statistic.is_infinite() {
                0.0
            } else {
                let denom = d2 + d1 * statistic;
                if d1 * statistic < d2 {
                    1.0 - beta_reg(d1 / 2.0, d2 / 2.0, d1 * statistic / denom)
                } else {
                    beta_reg(d2 / 2.0, d1 / 2.0, d2 / denom)
                }
            }
        }
        Distribution::ChiSquare { k } => {
            positive("k", k)?;
            if statistic <= 0.0 {
                1.0
            } else if statistic.is_infinite() {
                0.0
            } else {
                gamma_ur(k / 2.0, statistic / 2.0)
            }
        }
        Distribution::Normal => 0.5 * erfc(statistic / std::f64::consts::SQRT_2),
    };
    Ok(p.clamp(0.0, 1.0))
}

pub fn student_t_cdf(x: f64, df: f64) -> Result<f64, EconometricsError> {
    let two_sided = tail_probability(x, Distribution::StudentT { df })?;
    Ok(if x >= 0.0 {
        1.0 - 0.5 * two_sided
    } else {
        0.5 * two_sided
    })
}

/// Inverse CDF of Student's t by bracketing and bisection on the upper tail.
pub fn student_t_quantile(p: f64, df: f64) -> Result<f64, EconometricsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EconometricsError::InvalidParameter(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    positive("df", df)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    // solve two_sided(x) = target for x > 0, then restore the sign
    let target = 2.0 * p.min(1.0 - p);
    let tail = |x: f64| tail_probability(x, Distribution::StudentT { df });
    let mut lo = 0.0;
    let mut hi = 1.0;
    while tail(hi)? > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(EconometricsError::InvalidParameter(
                "quantile out of range".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if tail(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok(if p > 0.5 { x } else { -x })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// `coef ± t_{(1+level)/2, df} · se`.
pub fn t_confidence_interval(
    coef: f64,
    se: f64,
    df: u64,
    level: f64,
) -> Result<Interval, EconometricsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EconometricsError::InvalidParameter(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    if df < 1 {
        return Err(EconometricsError::InvalidParameter("df must be >= 1".into()));
    }
    if !(se >= 0.0) || !coef.is_finite() {
        return Err(EconometricsError::InvalidParameter(format!(
            "need finite coefficient and se >= 0, got ({coef}, {se})"
        )));
    }
    if se == 0.0 {
        return Ok(Interval {
            low: coef,
            high: coef,
        });
    }
    let t = student_t_quantile(0.5 * (1.0 + level), df as f64)?;
    Ok(Interval {
        low: coef - t * se,
        high: coef + t * se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    // 40-digit reference values (mpmath)
    const T_TWO_SIDED: [(f64, f64, f64); 8] = [
        (0.5, 3.0, 0.651_447_964_848_150_994_435),
        (1.0, 1.0, 0.5),
        (2.0, 16.0, 0.062_771_963_514_603_346_882_6),
        (2.5, 7.5, 0.038_820_258_273_625_557_183_4),
        (3.0, 30.0, 0.005_389_964_065_651_946_612_76),
        (-1.3, 5.0, 0.250_300_634_170_677_223_950),
        (4.0, 100.0, 0.000_121_523_644_300_761_677_202),
        (0.1, 2.0, 0.929_465_438_414_140_169_224),
    ];
    const F_UPPER: [(f64, f64, f64, f64); 5] = [
        (1.0, 2.0, 16.0, 0.389_744_343_128_945_872_556),
        (3.5, 2.0, 10.0, 0.070_429_627_772_374_260_224_8),
        (0.5, 5.0, 5.0, 0.767_488_680_869_621_375_882),
        (10.0, 3.0, 40.0, 0.000_047_800_151_745_344_140_290_3),
        (2.2, 1.0, 1.0, 0.377_642_706_460_876_862_747),
    ];
    const CHI_UPPER: [(f64, f64, f64); 6] = [
        (1.0, 2.0, 0.606_530_659_712_633_423_604),
        (5.99, 2.0, 0.050_036_627_086_586_282_515_9),
        (3.0, 1.0, 0.083_264_516_663_550_401_854_9),
        (10.0, 5.0, 0.075_235_246_146_512_178_722_1),
        (0.5, 7.0, 0.999_446_481_390_424_965_489),
        (30.0, 10.0, 0.000_856_641_210_775_300_392_111),
    ];

    #[test]
    fn tail_probabilities_match_reference_grid() {
        for (t, df, p) in T_TWO_SIDED {
            let got = tail_probability(t, Distribution::StudentT { df }).unwrap();
            assert_abs_diff_eq!(got, p, epsilon = 1e-10);
        }
        for (f, d1, d2, p) in F_UPPER {
            let got = tail_probability(f, Distribution::F { d1, d2 }).unwrap();
            assert_abs_diff_eq!(got, p, epsilon = 1e-10);
        }
        for (s, k, p) in CHI_UPPER {
            let got = tail_probability(s, Distribution::ChiSquare { k }).unwrap();
            assert_abs_diff_eq!(got, p, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_t_is_certain() {
        for df in [1.0, 2.5, 16.0, 1e6] {
            assert_eq!(tail_probability(0.0, Distribution::StudentT { df }).unwrap(), 1.0);
        }
    }

    #[test]
    fn normal_upper_tail() {
        let p = tail_probability(1.645, Distribution::Normal).unwrap();
        assert_abs_diff_eq!(p, 0.049_984_905_539_121_365, epsilon = 1e-10);
    }

    #[test]
    fn huge_t_statistic_has_negligible_p() {
        let p = tail_probability(-50.36, Distribution::StudentT { df: 16.0 }).unwrap();
        assert!(p < 1e-15);
        assert_eq!(format!("{p:.3}"), "0.000");
    }

    #[test]
    fn invalid_parameters() {
        assert!(tail_probability(1.0, Distribution::StudentT { df: 0.0 }).is_err());
        assert!(tail_probability(1.0, Distribution::F { d1: 1.0, d2: -1.0 }).is_err());
        assert!(tail_probability(1.0, Distribution::ChiSquare { k: f64::NAN }).is_err());
        assert!(tail_probability(f64::NAN, Distribution::Normal).is_err());
        assert!(student_t_quantile(1.0, 3.0).is_err());
    }

    #[test]
    fn quantile_matches_reference() {
        assert_abs_diff_eq!(
            student_t_quantile(0.975, 16.0).unwrap(),
            2.119_905_299_221_254_7,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            student_t_quantile(0.95, 16.0).unwrap(),
            1.745_883_676_276_249_9,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            student_t_quantile(0.025, 16.0).unwrap(),
            -2.119_905_299_221_254_7,
            epsilon = 1e-12
        );
    }

    #[test]
    fn confidence_interval_examples() {
        let ci = t_confidence_interval(-0.919, 0.018, 16, 0.95).unwrap();
        assert_abs_diff_eq!(ci.low, -0.958, epsilon = 1e-3);
        assert_abs_diff_eq!(ci.high, -0.881, epsilon = 1e-3);

        let ci = t_confidence_interval(1.25, 0.0, 4, 0.9).unwrap();
        assert_eq!((ci.low, ci.high), (1.25, 1.25));

        assert!(t_confidence_interval(0.0, 1.0, 0, 0.95).is_err());
        assert!(t_confidence_interval(0.0, 1.0, 5, 1.0).is_err());
        assert!(t_confidence_interval(0.0, -1.0, 5, 0.5).is_err());
    }

    /// Student t density integrated with composite Gauss-Legendre; independent of
    /// the incomplete beta route.
    fn t_cdf_by_quadrature(x: f64, df: f64) -> f64 {
        use statrs::function::gamma::ln_gamma;
        let log_norm = ln_gamma((df + 1.0) / 2.0)
            - ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |t: f64| (log_norm - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp();
        const NODES: [(f64, f64); 5] = [
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
            (0.906_179_845_938_664, 0.236_926_885_056_189_08),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
        ];
        let panels = 2000;
        let h = x / panels as f64;
        let mut sum = 0.0;
        for i in 0..panels {
            let mid = (i as f64 + 0.5) * h;
            for (node, w) in NODES {
                sum += w * pdf(mid + 0.5 * h * node);
            }
        }
        0.5 + 0.5 * h * sum
    }

    #[test]
    fn unit_se_interval_matches_quadrature_quantile() {
        let ci = t_confidence_interval(0.0, 1.0, 16, 0.95).unwrap();
        assert_abs_diff_eq!(ci.low, -ci.high, epsilon = 1e-15);
        assert_abs_diff_eq!(t_cdf_by_quadrature(ci.high, 16.0), 0.975, epsilon = 1e-12);
        for (x, df) in [(0.7, 3.0), (1.9, 16.0), (3.2, 5.5)] {
            assert_abs_diff_eq!(
                student_t_cdf(x, df).unwrap(),
                t_cdf_by_quadrature(x, df),
                epsilon = 1e-11
            );
        }
    }

    proptest! {
        #[test]
        fn ninety_nested_in_ninety_five(coef in -10.0f64..10.0, se in 0.0f64..5.0, df in 1u64..200) {
            let narrow = t_confidence_interval(coef, se, df, 0.90).unwrap();
            let wide = t_confidence_interval(coef, se, df, 0.95).unwrap();
            prop_assert!(wide.low <= narrow.low && narrow.high <= wide.high);
        }

        #[test]
        fn quantile_inverts_cdf(p in 0.001f64..0.999, df in 1.0f64..100.0) {
            let x = student_t_quantile(p, df).unwrap();
            prop_assert!((student_t_cdf(x, df).unwrap() - p).abs() < 1e-12);
        }

        #[test]
        fn p_values_in_unit_interval(s in -100.0f64..100.0, df in 0.5f64..500.0) {
            for d in [
                Distribution::StudentT { df },
                Distribution::F { d1: df, d2: df + 1.0 },
                Distribution::ChiSquare { k: df },
                Distribution::Normal,
            ] {
                let p = tail_probability(s, d).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
