use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use natbeta::market_curves::{
    curve_samples, elasticities, equilibrium_levels, CurveSpec, EquilibriumPoint, ShockMode,
    ShockModel,
};
use natbeta::panel_io::{read_panel, serialize_panel, validate_positive};
use natbeta::parallel::Execution;
use natbeta::pipeline::{
    flatten_json, parse_rate, render_csv_rows, render_descriptive, render_report, run_estimate,
    EstimateOptions, InstrumentSpec, PipelineError, ReportFormat, Stage,
};
use natbeta::preprocess::preprocess;
use natbeta::simulator::{synthesize_panel, ScenarioConfig};
use natbeta::uncertainty::{monte_carlo_intervals, MonteCarloConfig, DEFAULT_DRAWS, DEFAULT_LEVEL};

#[derive(Parser)]
#[command(name = "natbeta", version, about = "Natural asset beta estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline on a panel CSV.
    Estimate(EstimateArgs),
    /// Write a synthetic panel CSV plus a ground-truth JSON sidecar.
    Simulate(SimulateArgs),
    /// Equilibrium point for a given beta.
    Equilibrium(EquilibriumArgs),
    /// Monte Carlo intervals for a beta estimate.
    Ci(CiArgs),
    /// Supply and demand samples in deviation space.
    Curves(CurvesArgs),
    /// Descriptive statistics and validation of a panel CSV.
    Describe(DescribeArgs),
}

#[derive(Args)]
struct Means {
    #[arg(long, allow_hyphen_values = true)]
    mean_ln_q: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mean_ln_price: Option<f64>,
}

impl Means {
    fn pair(&self) -> Result<Option<(f64, f64)>, PipelineError> {
        match (self.mean_ln_q, self.mean_ln_price) {
            (Some(q), Some(p)) => Ok(Some((q, p))),
            (None, None) => Ok(None),
            _ => Err(PipelineError::new(
                Stage::Report,
                "--mean-ln-q and --mean-ln-price must be given together",
                "pass both means or neither",
            )),
        }
    }

    fn or_zero(&self) -> Result<(f64, f64), PipelineError> {
        Ok(self.pair()?.unwrap_or((0.0, 0.0)))
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    beta_qm: f64,
    /// Market rate, as `0.029` or `2.9%`.
    #[arg(long, value_parser = parse_rate, allow_hyphen_values = true)]
    r_m: f64,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long, default_value_t = natbeta::pipeline::DEFAULT_REGRESSION_LEVEL)]
    regression_level: f64,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long)]
    seed: u64,
    /// `auto`, `lags:<k>` or a comma-separated list of instrument columns.
    #[arg(long, default_value = "auto")]
    instruments: InstrumentSpec,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    /// Fixture mode: inject the slope instead of estimating it.
    #[arg(long, allow_hyphen_values = true, requires = "slope_se")]
    slope: Option<f64>,
    #[arg(long, requires = "slope")]
    slope_se: Option<f64>,
    #[command(flatten)]
    means: Means,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.05)]
    sigma_d: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma_s: f64,
    /// Observation error on the log flow.
    #[arg(long, default_value_t = 0.0)]
    sigma_m: f64,
    /// AR(1) coefficient of the shock processes.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    persistence: f64,
    /// `general` (independent shocks) or `paper` (supply shock tied to demand).
    #[arg(long, default_value = "general")]
    mode: ShockMode,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    start_year: i64,
    #[command(flatten)]
    means: Means,
    /// Panel CSV path; the sidecar goes next to it as `<stem>.truth.json`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EquilibriumArgs {
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[command(flatten)]
    means: Means,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Args)]
struct CiArgs {
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long)]
    beta_se: f64,
    #[arg(long)]
    beta_qm: f64,
    #[arg(long, value_parser = parse_rate, allow_hyphen_values = true)]
    r_m: f64,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    means: Means,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Args)]
struct CurvesArgs {
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    x_min: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    x_max: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[command(flatten)]
    means: Means,
    /// Curve CSV path; the equilibrium goes next to it as `<stem>.equilibrium.json`.
    /// Without it the CSV is written to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DescribeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
}

fn io_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::new(Stage::Report, e, "check the output path is writable")
}

fn to_json<T: Serialize>(value: &T) -> Result<String, PipelineError> {
    let mut s = serde_json::to_string_pretty(value).map_err(io_err)?;
    s.push('\n');
    Ok(s)
}

fn render_value<T: Serialize>(
    value: &T,
    format: ReportFormat,
    text: impl FnOnce() -> String,
) -> Result<String, PipelineError> {
    match format {
        ReportFormat::Json => to_json(value),
        ReportFormat::Csv => {
            let v = serde_json::to_value(value).map_err(io_err)?;
            Ok(render_csv_rows(&flatten_json(&v)))
        }
        ReportFormat::Text => Ok(text()),
    }
}

fn emit(output: Option<&Path>, body: &str) -> Result<(), PipelineError> {
    match output {
        Some(path) => fs::write(path, body).map_err(io_err),
        None => io::stdout().write_all(body.as_bytes()).map_err(io_err),
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{suffix}.json"))
}

fn curve_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::new(Stage::MarketCurves, e, "--beta must be positive and finite")
}

fn estimate(args: EstimateArgs) -> Result<(), PipelineError> {
    let mut options = EstimateOptions::new(args.beta_qm, args.r_m, args.seed);
    options.level = args.level;
    options.regression_level = args.regression_level;
    options.draws = args.draws;
    options.instruments = args.instruments;
    options.slope_stub = args.slope.zip(args.slope_se);
    options.mean_override = args.means.pair()?;
    let report = run_estimate(&args.input, &options)?;
    emit(args.output.as_deref(), &render_report(&report, args.format)?)
}

#[derive(Serialize)]
struct GroundTruth {
    config: ScenarioConfig,
    panel: String,
    toolkit_version: &'static str,
}

fn simulate(args: SimulateArgs) -> Result<(), PipelineError> {
    let (mean_ln_q, mean_ln_price) = args.means.or_zero()?;
    let config = ScenarioConfig {
        beta_xq: args.beta,
        mean_ln_q,
        mean_ln_price,
        shocks: ShockModel::new(args.sigma_s, args.sigma_d, args.mode).map_err(|e| {
            PipelineError::new(Stage::MarketCurves, e, "shock sigmas must be >= 0")
        })?,
        sigma_m: args.sigma_m,
        persistence: args.persistence,
        n: args.n,
        seed: args.seed,
        start_year: args.start_year,
    };
    let panel = synthesize_panel(&config).map_err(|e| {
        PipelineError::new(Stage::PanelIo, e, "check beta > 0, n >= 5 and moderate means")
    })?;
    fs::write(&args.output, serialize_panel(&panel)).map_err(io_err)?;
    let truth = GroundTruth {
        config,
        panel: args.output.display().to_string(),
        toolkit_version: env!("CARGO_PKG_VERSION"),
    };
    fs::write(sidecar(&args.output, "truth"), to_json(&truth)?).map_err(io_err)
}

#[derive(Serialize)]
struct EquilibriumOutput {
    equilibrium: EquilibriumPoint,
    supply_elasticity: f64,
    demand_elasticity: f64,
}

fn equilibrium_output(beta: f64, means: &Means) -> Result<EquilibriumOutput, PipelineError> {
    let (q, p) = means.or_zero()?;
    let equilibrium = equilibrium_levels(beta, q, p).map_err(curve_err)?;
    let (supply_elasticity, demand_elasticity) = elasticities(beta).map_err(curve_err)?;
    Ok(EquilibriumOutput {
        equilibrium,
        supply_elasticity,
        demand_elasticity,
    })
}

fn equilibrium(args: EquilibriumArgs) -> Result<(), PipelineError> {
    let out = equilibrium_output(args.beta, &args.means)?;
    let body = render_value(&out, args.format, || {
        let e = &out.equilibrium;
        format!(
            "beta_xq = {:.4}\nx_e = {:.6}  y_e = {:.6}\nln_quantity = {:.4}  ln_price = {:.4}  ln_user_cost = {:.4}\nelasticities: supply {:.4}  demand {:.4}\n",
            e.beta_xq, e.x_e, e.y_e, e.ln_quantity, e.ln_price, e.ln_user_cost,
            out.supply_elasticity, out.demand_elasticity
        )
    })?;
    emit(None, &body)
}

fn ci(args: CiArgs) -> Result<(), PipelineError> {
    let (mean_ln_q, mean_ln_price) = args.means.or_zero()?;
    let config = MonteCarloConfig {
        beta_mean: args.beta,
        beta_se: args.beta_se,
        draws: args.draws,
        seed: args.seed,
        level: args.level,
        beta_qm: args.beta_qm,
        r_m: args.r_m,
        mean_ln_q,
        mean_ln_price,
    };
    let report = monte_carlo_intervals(&config, Execution::default()).map_err(|e| {
        PipelineError::new(Stage::Uncertainty, e, "check --beta-se, --level and --draws")
    })?;
    let body = render_value(&report, args.format, || report.render_text())?;
    emit(None, &body)
}

fn curves(args: CurvesArgs) -> Result<(), PipelineError> {
    let range = (args.x_min, args.x_max);
    let mut csv = String::from("curve,x,y\n");
    for spec in [CurveSpec::supply(args.beta), CurveSpec::demand(args.beta)] {
        let spec = spec.map_err(curve_err)?;
        for p in curve_samples(spec, range, args.points).map_err(curve_err)? {
            csv.push_str(&format!("{},{},{}\n", spec.kind, p.x, p.y));
        }
    }
    let out = equilibrium_output(args.beta, &args.means)?;
    match &args.output {
        Some(path) => {
            fs::write(path, csv).map_err(io_err)?;
            fs::write(sidecar(path, "equilibrium"), to_json(&out)?).map_err(io_err)
        }
        None => emit(None, &csv),
    }
}

fn describe(args: DescribeArgs) -> Result<(), PipelineError> {
    let panel = read_panel(&args.input).map_err(|e| {
        PipelineError::new(Stage::PanelIo, e, "expected CSV with header year,value,flow[,iv_*]")
    })?;
    let validation = validate_positive(&panel);
    if let Some(bad) = validation.violations.first() {
        return Err(PipelineError::new(
            Stage::Preprocess,
            format!(
                "non-positive value at row {} (year {}, column {}): {}",
                bad.row + 1,
                bad.year,
                bad.column,
                bad.value
            ),
            "value and flow must be strictly positive",
        ));
    }
    let pre = preprocess(panel.value(), panel.flow())
        .map_err(|e| PipelineError::new(Stage::Preprocess, e, "check value and flow columns"))?;
    let rows = pre.describe().to_vec();
    let body = render_value(&rows, args.format, || {
        format!("{}cosine factor: {:.6}\n", render_descriptive(&rows), pre.price.cosine)
    })?;
    emit(None, &body)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Equilibrium(a) => equilibrium(a),
        Command::Ci(a) => ci(a),
        Command::Curves(a) => curves(a),
        Command::Describe(a) => describe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
