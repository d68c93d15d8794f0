use natbeta::parallel::Execution;
use natbeta::pipeline::{
    render_report, run_estimate_on_panel, EstimateOptions, EstimateReport, ReportFormat,
    Stage,
};
use natbeta::simulator::{synthesize_panel, ScenarioConfig};
use proptest::prelude::*;

fn all_numbers_finite(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
        serde_json::Value::Array(a) => a.iter().all(all_numbers_finite),
        serde_json::Value::Object(m) => m.values().all(all_numbers_finite),
        _ => true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reports_round_trip_and_stay_finite(
        beta in 0.2f64..5.0,
        n in 20usize..80,
        seed in 0u64..1_000,
        persistence in 0.3f64..0.9,
        qm in 0.5f64..8.0,
        r_m in -0.05f64..0.1,
        exec in prop_oneof![Just(Execution::Sequential), Just(Execution::Parallel)],
    ) {
        let mut c = ScenarioConfig::new(beta, 0.05, n, seed);
        c.sigma_m = 0.01;
        c.persistence = persistence;
        c.mean_ln_q = 2.0;
        c.mean_ln_price = 3.0;
        let panel = synthesize_panel(&c).unwrap();
        let mut opts = EstimateOptions::new(qm, r_m, seed);
        opts.draws = 2_000;
        let report = match run_estimate_on_panel(&panel, "mem", &opts, exec) {
            Ok(r) => r,
            Err(e) => {
                // imprecise fits can leave too much of the beta draw mass below zero
                prop_assert_eq!(e.stage, Stage::Uncertainty, "{}", e);
                return Ok(());
            }
        };
        let json = render_report(&report, ReportFormat::Json).unwrap();
        let back: EstimateReport = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &report);
        prop_assert!(all_numbers_finite(&serde_json::from_str(&json).unwrap()));
        let other = if exec == Execution::Parallel { Execution::Sequential } else { Execution::Parallel };
        let again = run_estimate_on_panel(&panel, "mem", &opts, other).unwrap();
        prop_assert_eq!(render_report(&again, ReportFormat::Json).unwrap(), json);
    }
}
