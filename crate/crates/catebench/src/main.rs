//! Command-line front end: simulate data, fit effect models, attribute
//! them, and run the full benchmark grid.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use catebench::bench::{
    cost_probe, run_benchmark, write_records_csv, write_summary_csv, write_timings_csv,
    BenchConfig,
};
use catebench::data::load_csv;
use catebench::learners::{
    fit_cate, fit_propensity, shap_strategy1, shap_strategy2, shap_strategy3, CateModel,
    FitOptions, LearnerKind, PropensitySpec,
};
use catebench::shap::{summary_shap, KernelShapConfig, MaskMode, ShapMatrix};
use catebench::simgen::{oracle_stats, simulate, Scenario, ScenarioKind};
use catebench::{Error, Result};

#[derive(Parser)]
#[command(name = "catebench", version, about = "Benchmark SHAP-based biomarker recovery for CATE estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a simulated trial and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit an effect estimator on a CSV dataset.
    Fit(FitArgs),
    /// Attribute a fitted model's effect estimates to features.
    Shap(ShapArgs),
    /// Run the full (scenario x learner x strategy) benchmark.
    Bench(BenchArgs),
    /// Monte Carlo ground-truth summaries for a scenario.
    Oracle(OracleArgs),
    /// Time the kernel route against the exact route at fixed budgets.
    CostProbe(CostProbeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// One of sin_toy, tlearn_toy, head_to_head, s2, s3.
    #[arg(long)]
    scenario: ScenarioKind,
    /// Draw size; omit for the scenario's default.
    #[arg(long)]
    n: Option<usize>,
    /// Prognostic strength multiplier (fixed at 1 for the toys).
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (features, treatment, outcome).
    #[arg(long)]
    out: PathBuf,
    /// Optional sidecar CSV with the true per-row effect.
    #[arg(long)]
    oracle_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Training data CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "outcome")]
    outcome_col: String,
    #[arg(long, default_value = "treatment")]
    treatment_col: String,
    /// One of t, s, x, r, dr, cf.
    #[arg(long)]
    learner: LearnerKind,
    /// "estimate" or a constant assignment probability such as "0.5".
    #[arg(long, default_value = "estimate")]
    propensity: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-fitting folds for the R and DR nuisances.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Skip grid tuning and use the default hyperparameters per stage.
    #[arg(long)]
    no_tune: bool,
    /// Where to write the fitted model (JSON).
    #[arg(long)]
    model_out: PathBuf,
    /// Optional per-row effect estimates (CSV).
    #[arg(long)]
    tau_out: Option<PathBuf>,
    /// Optional oracle sidecar to join into tau_out for comparison.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

#[derive(Args)]
struct ShapArgs {
    /// Fitted model JSON from `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Data CSV; also the surrogate's training set for strategy 3.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "outcome")]
    outcome_col: String,
    #[arg(long, default_value = "treatment")]
    treatment_col: String,
    /// 1 kernel on the effect surface, 2 exact on the final stage,
    /// 3 exact on a surrogate.
    #[arg(long)]
    strategy: u8,
    /// Background rows for strategy 1 (head of the data).
    #[arg(long, default_value_t = 100)]
    background: usize,
    /// Instance cap for strategy 1 (head of the data).
    #[arg(long, default_value_t = 100)]
    max_instances: usize,
    /// Coalition budget for strategy 1: "auto", "exact", or a count.
    #[arg(long, default_value = "auto")]
    coalitions: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-instance attributions (CSV, long format).
    #[arg(long)]
    out: PathBuf,
    /// Optional global importance table (CSV).
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark config JSON; flags below override single fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Comma-separated scenario list, e.g. "s2,s3".
    #[arg(long)]
    scenarios: Option<String>,
    /// Comma-separated draw sizes.
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated beta values.
    #[arg(long)]
    beta: Option<String>,
    /// Comma-separated learner list, e.g. "t,s,x,r,dr,cf".
    #[arg(long)]
    learners: Option<String>,
    /// Comma-separated strategy list out of 1,2,3.
    #[arg(long)]
    strategies: Option<String>,
    /// Tune stage hyperparameters on a pilot draw only.
    #[arg(long)]
    tune_once: bool,
    #[arg(long)]
    test_n: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: ScenarioKind,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo draw count.
    #[arg(long, default_value_t = 1_000_000)]
    n_mc: usize,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostProbeArgs {
    /// Feature count of the synthetic probe model.
    #[arg(long, default_value_t = 100)]
    p: usize,
    /// Comma-separated multipliers over the minimum coalition count.
    #[arg(long, default_value = "2,10,200")]
    grid: String,
    #[arg(long, default_value_t = 600)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            match e {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Shap(a) => cmd_shap(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::CostProbe(a) => cmd_cost_probe(a),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<ExitCode> {
    let mut sc = Scenario::new(a.scenario, a.seed);
    if let Some(n) = a.n {
        sc.n = n;
    }
    sc.beta = a.beta;
    sc.validate()?;
    let ds = simulate(&sc)?;
    ds.write_csv(&a.out)?;
    if let Some(path) = a.oracle_out {
        let tau = ds.oracle_tau.as_ref().ok_or_else(|| {
            Error::Config(format!("{} has no per-row effect oracle", a.scenario))
        })?;
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["instance_id", "tau"])?;
        for (i, t) in tau.iter().enumerate() {
            w.write_record([i.to_string(), format!("{t}")])?;
        }
        w.flush()?;
        eprintln!("wrote {} rows to {} and {}", ds.n(), a.out.display(), path.display());
    } else {
        eprintln!("wrote {} rows to {}", ds.n(), a.out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_propensity(text: &str) -> Result<PropensitySpec> {
    if text.eq_ignore_ascii_case("estimate") {
        return Ok(PropensitySpec::Estimate);
    }
    let p: f64 = text
        .parse()
        .map_err(|_| Error::Config(format!("propensity must be 'estimate' or a number, got '{text}'")))?;
    Ok(PropensitySpec::KnownConstant(p))
}

fn load_oracle_column(path: &PathBuf, expect_n: usize) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "tau")
        .ok_or_else(|| Error::Data(format!("{} has no 'tau' column", path.display())))?;
    let mut tau = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let raw = rec.get(col).unwrap_or("");
        let v: f64 = raw
            .parse()
            .map_err(|_| Error::DataAt { row: tau.len(), col: "tau".into(), msg: format!("bad number '{raw}'") })?;
        tau.push(v);
    }
    if tau.len() != expect_n {
        return Err(Error::Data(format!(
            "oracle file has {} rows, data has {expect_n}",
            tau.len()
        )));
    }
    Ok(tau)
}

fn cmd_fit(a: FitArgs) -> Result<ExitCode> {
    let ds = load_csv(&a.data, &a.outcome_col, &a.treatment_col)?;
    let mut opts = FitOptions::with_seed(a.seed);
    opts.nuisance_folds = a.folds;
    if a.no_tune {
        opts.grid.truncate(1);
    }
    let prop = fit_propensity(&ds, parse_propensity(&a.propensity)?, &opts)?;
    let model = fit_cate(&ds, a.learner, &prop, &opts)?;
    fs::write(&a.model_out, serde_json::to_string(&model)?)?;
    eprintln!("fitted {} learner on {} rows -> {}", a.learner, ds.n(), a.model_out.display());
    if let Some(path) = a.tau_out {
        let oracle = match &a.oracle {
            Some(p) => Some(load_oracle_column(p, ds.n())?),
            None => None,
        };
        let file = fs::File::create(&path)?;
        model.write_tau_csv(&ds.features, oracle.as_deref(), file)?;
        eprintln!("wrote effect estimates to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_mask_mode(text: &str) -> Result<MaskMode> {
    match text {
        "auto" => Ok(MaskMode::Auto),
        "exact" => Ok(MaskMode::Exact),
        other => {
            let n: usize = other.parse().map_err(|_| {
                Error::Config(format!("coalitions must be 'auto', 'exact', or a count, got '{other}'"))
            })?;
            Ok(MaskMode::Sampled(n))
        }
    }
}

fn cmd_shap(a: ShapArgs) -> Result<ExitCode> {
    let model: CateModel = serde_json::from_str(&fs::read_to_string(&a.model)?)?;
    let ds = load_csv(&a.data, &a.outcome_col, &a.treatment_col)?;
    let shap: ShapMatrix = match a.strategy {
        1 => {
            let b = a.background.min(ds.n());
            let m = a.max_instances.min(ds.n());
            let background = ds.features.select_rows(&(0..b).collect::<Vec<_>>());
            let instances = ds.features.select_rows(&(0..m).collect::<Vec<_>>());
            let config = KernelShapConfig { mode: parse_mask_mode(&a.coalitions)?, seed: a.seed };
            shap_strategy1(&model, &background, &instances, &config)?
        }
        2 => shap_strategy2(&model, &ds.features)?,
        3 => {
            let opts = FitOptions::with_seed(a.seed);
            let (_, shap) = shap_strategy3(&model, &ds.features, &ds.features, &opts)?;
            shap
        }
        other => return Err(Error::Config(format!("unknown strategy {other}"))),
    };
    shap.write_csv(&a.out)?;
    eprintln!(
        "wrote attributions for {} instances x {} features to {}",
        shap.n_instances(),
        shap.n_features(),
        a.out.display()
    );
    if let Some(path) = a.summary_out {
        let summary = summary_shap(&shap);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["feature", "mean_abs_phi", "normalized"])?;
        for j in 0..shap.n_features() {
            w.write_record([
                shap.feature_names[j].clone(),
                format!("{}", summary.importance[j]),
                format!("{}", summary.normalized[j]),
            ])?;
        }
        w.flush()?;
        eprintln!("wrote importance summary to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::Config(format!("bad {what} entry '{s}'")))
        })
        .collect()
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let mut cfg: BenchConfig = match &a.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => BenchConfig::default(),
    };
    if let Some(v) = a.out_dir {
        cfg.out_dir = v;
    }
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = a.master_seed {
        cfg.master_seed = v;
    }
    if let Some(v) = &a.scenarios {
        cfg.scenarios = parse_list(v, "scenario")?;
    }
    if let Some(v) = &a.n {
        cfg.n_values = parse_list(v, "n")?;
    }
    if let Some(v) = &a.beta {
        cfg.beta_values = parse_list(v, "beta")?;
    }
    if let Some(v) = &a.learners {
        cfg.learners = parse_list(v, "learner")?;
    }
    if let Some(v) = &a.strategies {
        cfg.strategies = parse_list(v, "strategy")?;
    }
    if a.tune_once {
        cfg.tune_once = true;
    }
    if let Some(v) = a.test_n {
        cfg.test_n = v;
    }
    cfg.validate()?;

    fs::create_dir_all(&cfg.out_dir)?;
    let outcome = run_benchmark(&cfg)?;

    let records_path = cfg.out_dir.join("records.csv");
    write_records_csv(&outcome.records, fs::File::create(&records_path)?)?;
    write_timings_csv(&outcome.records, fs::File::create(cfg.out_dir.join("timings.csv"))?)?;
    write_summary_csv(&outcome.summary, fs::File::create(cfg.out_dir.join("summary.csv"))?)?;
    fs::write(
        cfg.out_dir.join("records.json"),
        serde_json::to_string_pretty(&outcome.records)?,
    )?;
    fs::write(cfg.out_dir.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;

    for row in &outcome.summary {
        let fmt = |v: Option<(f64, f64)>| match v {
            Some((m, se)) => format!("{m:.3} ({se:.3})"),
            None => "-".into(),
        };
        eprintln!(
            "{} n={} beta={} {} s{}: top1 {} net3 {} margin {} [{} ok, {} failed]",
            row.scenario,
            row.n,
            row.beta,
            row.learner,
            row.strategy,
            fmt(row.top1),
            fmt(row.net3),
            fmt(row.margin),
            row.ok,
            row.failed
        );
    }
    eprintln!("wrote records, timings, summary to {}", cfg.out_dir.display());
    if outcome.failed_cells > 0 {
        eprintln!("{} cells failed; see the error column in records.csv", outcome.failed_cells);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(a: OracleArgs) -> Result<ExitCode> {
    let mut sc = Scenario::new(a.scenario, a.seed);
    sc.beta = a.beta;
    let stats = oracle_stats(&sc, a.n_mc)?;
    let text = serde_json::to_string_pretty(&stats)?;
    match a.out {
        Some(path) => {
            fs::write(&path, text)?;
            eprintln!("wrote oracle stats to {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_cost_probe(a: CostProbeArgs) -> Result<ExitCode> {
    let grid: Vec<usize> = parse_list(&a.grid, "grid")?;
    let probe = cost_probe(a.p, &grid, a.n, a.seed)?;
    let text = serde_json::to_string_pretty(&probe)?;
    match a.out {
        Some(path) => {
            fs::write(&path, text)?;
            eprintln!("wrote probe results to {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}
