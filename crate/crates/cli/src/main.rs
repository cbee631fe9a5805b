//! Command-line workflows: prediction evaluation, hyperparameter sweeps,
//! day-ahead planning, closed-loop simulation and report generation.
//!
//! Every command is deterministic given the config and seed. Exit codes:
//! 0 success, 1 usage, 2 data/config error, 3 solver error. Set
//! `DDPC_LOG=debug` for verbose logging.

use clap::{Args, Parser, Subcommand};
use ddpc_core::config::RunConfig;
use ddpc_core::data::{read_dataset, Mode};
use ddpc_core::ddp::DdpState;
use ddpc_core::eval::{rolling_predict, sensitivity_sweep, PredictorPolicy};
use ddpc_core::planner::{
    plan_day_ahead, BuildingPlanInput, EssPlanModel, PlannerInputs, ScenarioSet,
};
use ddpc_core::sim::{
    gen_identification_data, gen_weather, read_ledger_csv, run_experiment,
    run_scenario_comparison, scenario_library, write_actuation_csv, write_ledger_csv, DayLedger,
    ExperimentResult, LedgerTotals,
};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ddpc",
    about = "Data-driven prediction and hierarchical frequency-control workflows",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON run configuration; defaults apply for omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root random seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Rolling prediction over an operational dataset, with optional
    /// daily Hankel refreshes.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Operational data CSV (t,u,w1,w2,y,mode).
        #[arg(long)]
        data: PathBuf,
        /// Refresh the Hankel set daily instead of keeping it fixed.
        #[arg(long)]
        adaptive: bool,
        /// HP mode to evaluate.
        #[arg(long, default_value = "C")]
        mode: String,
    },
    /// Hyperparameter sensitivity sweep over (e_g, T, t_init).
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Operational data CSV; synthetic identification data otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Fail unless the regularization-weight axis shows a flat MAE
        /// profile (max/min within 1.2).
        #[arg(long)]
        assert_plateau: bool,
    },
    /// One day-ahead plan on synthetic identification data.
    Plan {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Closed-loop simulation writing ledger, actuation log and manifest.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Run all three operating schemes on identical seeds and write a
        /// comparison table.
        #[arg(long)]
        all_scenarios: bool,
    },
    /// Markdown report plus plot-ready CSVs from a simulation run.
    Report {
        /// Run directory produced by `simulate`.
        #[arg(long)]
        run: PathBuf,
        /// Output directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum AppError {
    Data(String),
    Solver(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Data(m) | AppError::Solver(m) => write!(f, "{m}"),
        }
    }
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Data(_) => 2,
            AppError::Solver(_) => 3,
        }
    }
}

impl From<ddpc_core::config::ConfigError> for AppError {
    fn from(e: ddpc_core::config::ConfigError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<ddpc_core::data::DataError> for AppError {
    fn from(e: ddpc_core::data::DataError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<ddpc_core::eval::EvalError> for AppError {
    fn from(e: ddpc_core::eval::EvalError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<ddpc_core::ddp::DdpError> for AppError {
    fn from(e: ddpc_core::ddp::DdpError) -> Self {
        use ddpc_core::ddp::DdpError;
        match e {
            DdpError::SolverFailure(_) => AppError::Solver(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<ddpc_core::planner::PlannerError> for AppError {
    fn from(e: ddpc_core::planner::PlannerError) -> Self {
        use ddpc_core::planner::PlannerError;
        match e {
            PlannerError::Solver(_) => AppError::Solver(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<ddpc_core::sim::experiment::ExperimentError> for AppError {
    fn from(e: ddpc_core::sim::experiment::ExperimentError) -> Self {
        use ddpc_core::sim::experiment::ExperimentError;
        match e {
            ExperimentError::Planner(ddpc_core::planner::PlannerError::Solver(_)) => {
                AppError::Solver(e.to_string())
            }
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Data(format!("io error: {e}"))
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Data(format!("csv error: {e}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DDPC_LOG")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; everything else is a
            // usage error.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, AppError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Predict {
            common,
            data,
            adaptive,
            mode,
        } => cmd_predict(&common, &data, adaptive, &mode),
        Command::Sweep {
            common,
            data,
            assert_plateau,
        } => cmd_sweep(&common, data.as_deref(), assert_plateau),
        Command::Plan { common } => cmd_plan(&common),
        Command::Simulate {
            common,
            all_scenarios,
        } => cmd_simulate(&common, all_scenarios),
        Command::Report { run, out } => cmd_report(&run, out.as_deref()),
    }
}

fn cmd_predict(
    common: &CommonArgs,
    data_path: &Path,
    adaptive: bool,
    mode: &str,
) -> Result<(), AppError> {
    let cfg = load_config(common)?;
    let mode = Mode::from_tag(mode)
        .ok_or_else(|| AppError::Data(format!("mode must be H or C, got {mode:?}")))?;
    let dataset = read_dataset(data_path)?;
    let policy = if adaptive {
        PredictorPolicy::AdaptiveDaily
    } else {
        PredictorPolicy::Fixed
    };
    let rolling = rolling_predict(&dataset, &cfg.controller_hyper(), mode, policy, &cfg.split())?;

    fs::create_dir_all(&common.out)?;
    let mut w = csv::Writer::from_path(common.out.join("predictions.csv"))?;
    w.write_record(["t", "step", "y_pred", "y_true", "abs_err"])?;
    for r in &rolling.rows {
        w.write_record([
            r.t.to_string(),
            r.step.to_string(),
            r.y_pred.to_string(),
            r.y_true.to_string(),
            r.abs_err.to_string(),
        ])?;
    }
    w.flush().map_err(|e| AppError::Data(e.to_string()))?;

    let mut log = fs::File::create(common.out.join("updates.log"))?;
    for u in &rolling.updates {
        writeln!(
            log,
            "day {}: {}{}",
            u.day,
            if u.accepted { "accepted" } else { "rejected" },
            if u.reasons.is_empty() {
                String::new()
            } else {
                format!(" ({})", u.reasons.join(", "))
            }
        )?;
    }
    let mae = rolling.rows.iter().map(|r| r.abs_err).sum::<f64>() / rolling.rows.len() as f64;
    println!(
        "predict: {} anchors, MAE {:.4} degC, {} update attempts -> {}",
        rolling.rows.len() / rolling.horizon,
        mae,
        rolling.updates.len(),
        common.out.display()
    );
    Ok(())
}

fn cmd_sweep(
    common: &CommonArgs,
    data: Option<&Path>,
    assert_plateau: bool,
) -> Result<(), AppError> {
    let cfg = load_config(common)?;
    let dataset = match data {
        Some(path) => read_dataset(path)?,
        None => gen_identification_data(&cfg, cfg.sweep.days),
    };
    let grid = cfg.sweep_grid();
    let rows = sensitivity_sweep(
        &grid,
        &dataset,
        Mode::Cooling,
        &cfg.controller_hyper(),
        &cfg.split(),
    )?;

    fs::create_dir_all(&common.out)?;
    let mut w = csv::Writer::from_path(common.out.join("sweep.csv"))?;
    w.write_record(["e_g", "T", "t_init", "N", "mae_validation", "mae_test"])?;
    for r in &rows {
        w.write_record([
            r.e_g.to_string(),
            r.t.to_string(),
            r.t_init.to_string(),
            r.n.to_string(),
            r.mae_validation.to_string(),
            r.mae_test.to_string(),
        ])?;
    }
    w.flush().map_err(|e| AppError::Data(e.to_string()))?;
    println!("sweep: {} points -> {}", rows.len(), common.out.display());

    if assert_plateau {
        for &data_len in &grid.data_lens {
            for &t_init in &grid.t_inits {
                let maes: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.t == data_len && r.t_init == t_init)
                    .map(|r| r.mae_validation)
                    .collect();
                let max = maes.iter().cloned().fold(f64::MIN, f64::max);
                let min = maes.iter().cloned().fold(f64::MAX, f64::min);
                if max > 1.2 * min {
                    return Err(AppError::Data(format!(
                        "plateau violated at T={data_len}, t_init={t_init}: max/min = {:.3}",
                        max / min
                    )));
                }
            }
        }
        println!("plateau assertion passed (max/min <= 1.2 along the e_g axis)");
    }
    Ok(())
}

fn cmd_plan(common: &CommonArgs) -> Result<(), AppError> {
    let cfg = load_config(common)?;
    let data = gen_identification_data(&cfg, cfg.warmup_days);
    let state = DdpState::build(&data.segments, &cfg.planner_hyper(), Mode::Cooling)?;
    let end = data.end_index().expect("identification data is nonempty");
    let init = data
        .init_window(end, cfg.planner.t_init)
        .ok_or_else(|| AppError::Data("identification data too short".into()))?;
    let tomorrow = gen_weather(&cfg.weather, cfg.seed, cfg.warmup_days as u64);
    let w_forecast: Vec<f64> = tomorrow.forecast.iter().flatten().copied().collect();
    let scenarios = ScenarioSet::new(
        scenario_library(&cfg.agc, cfg.seed, cfg.planner.n_scen),
        format!("synthetic library, seed {}", cfg.seed),
    )?;
    let plan = plan_day_ahead(
        &PlannerInputs {
            building: Some(BuildingPlanInput {
                predictor: &state.predictor,
                init: &init,
                w_forecast: &w_forecast,
                u_min_kw: cfg.bounds.u_kw[0],
                u_max_kw: cfg.bounds.u_kw[1],
                y_min_c: cfg.bounds.y_c[0],
                y_max_c: cfg.bounds.y_c[1],
            }),
            ess: Some(EssPlanModel {
                soc_init_kwh: cfg.ess.soc_ref_kwh(),
                soc_min_kwh: cfg.bounds.soc_kwh[0],
                soc_max_kwh: cfg.bounds.soc_kwh[1],
                p_min_kw: cfg.bounds.pe_kw[0],
                p_max_kw: cfg.bounds.pe_kw[1],
                dt_hours: 0.25,
            }),
            scenarios: &scenarios,
            previous_baseline: None,
        },
        &cfg.planner_cfg(),
    )?;
    fs::create_dir_all(&common.out)?;
    let file = fs::File::create(common.out.join("plan.csv"))?;
    plan.write_csv(file)?;
    println!(
        "plan: gamma = {:.3} kW, baseline mean = {:.3} kW -> {}",
        plan.gamma_kw,
        plan.baseline_kw.iter().sum::<f64>() / plan.baseline_kw.len() as f64,
        common.out.join("plan.csv").display()
    );
    Ok(())
}

fn write_run_outputs(dir: &Path, result: &ExperimentResult) -> Result<(), AppError> {
    fs::create_dir_all(dir)?;
    write_ledger_csv(&result.ledger, fs::File::create(dir.join("ledger.csv"))?)?;
    write_actuation_csv(
        &result.actuation,
        fs::File::create(dir.join("actuation.csv"))?,
    )?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&result.manifest).expect("manifest serializes"),
    )?;
    let mut events = fs::File::create(dir.join("events.log"))?;
    for e in &result.events {
        writeln!(events, "{e}")?;
    }
    Ok(())
}

fn cmd_simulate(common: &CommonArgs, all_scenarios: bool) -> Result<(), AppError> {
    let cfg = load_config(common)?;
    if all_scenarios {
        let results = run_scenario_comparison(&cfg)?;
        for r in &results {
            write_run_outputs(&common.out.join(format!("{:?}", r.scenario)), r)?;
        }
        let mut w = csv::Writer::from_path(common.out.join("comparison.csv"))?;
        w.write_record([
            "scenario",
            "days",
            "mean_daily_total_chf",
            "mean_daily_energy_chf",
            "mean_daily_reward_chf",
            "mean_daily_penalty_chf",
            "mean_ppd",
        ])?;
        for r in &results {
            let t = &r.totals;
            w.write_record([
                format!("{:?}", r.scenario),
                t.days.to_string(),
                t.mean_daily_total_chf.to_string(),
                t.mean_daily_energy_chf.to_string(),
                t.mean_daily_reward_chf.to_string(),
                t.mean_daily_penalty_chf.to_string(),
                t.mean_ppd.to_string(),
            ])?;
        }
        w.flush().map_err(|e| AppError::Data(e.to_string()))?;
        for r in &results {
            println!(
                "scenario {:?}: mean daily total {:.2} CHF, mean PPD {:.2}%",
                r.scenario, r.totals.mean_daily_total_chf, r.totals.mean_ppd
            );
        }
    } else {
        let result = run_experiment(&cfg)?;
        write_run_outputs(&common.out, &result)?;
        println!(
            "scenario {:?}: mean daily total {:.2} CHF over {} days -> {}",
            result.scenario,
            result.totals.mean_daily_total_chf,
            result.totals.days,
            common.out.display()
        );
    }
    Ok(())
}

fn cmd_report(run: &Path, out: Option<&Path>) -> Result<(), AppError> {
    let out_dir = out.unwrap_or(run);
    // A comparison run holds per-scenario subdirectories; a single run
    // holds ledger.csv at its root.
    let mut ledgers: Vec<(String, Vec<DayLedger>)> = Vec::new();
    for name in ["A", "B", "C"] {
        let path = run.join(name).join("ledger.csv");
        if path.exists() {
            ledgers.push((name.to_string(), read_ledger_csv(fs::File::open(path)?)?));
        }
    }
    if ledgers.is_empty() {
        let path = run.join("ledger.csv");
        if path.exists() {
            ledgers.push(("run".to_string(), read_ledger_csv(fs::File::open(path)?)?));
        }
    }
    if ledgers.is_empty() || ledgers.iter().all(|(_, l)| l.is_empty()) {
        return Err(AppError::Data(format!(
            "no ledgers found under {}",
            run.display()
        )));
    }

    fs::create_dir_all(out_dir)?;
    let mut stack = csv::Writer::from_path(out_dir.join("cost_stack.csv"))?;
    stack.write_record([
        "scenario",
        "day",
        "energy_cost_chf",
        "bid_reward_chf",
        "penalty_chf",
        "amortization_chf",
        "total_chf",
    ])?;
    let mut scatter = csv::Writer::from_path(out_dir.join("ppd_vs_cost.csv"))?;
    scatter.write_record(["scenario", "day", "mean_ppd", "total_chf"])?;
    for (name, ledger) in &ledgers {
        for d in ledger {
            stack.write_record([
                name.clone(),
                d.day.to_string(),
                d.energy_cost_chf.to_string(),
                d.bid_reward_chf.to_string(),
                d.penalty_chf.to_string(),
                d.amortization_chf.to_string(),
                d.total_chf.to_string(),
            ])?;
            scatter.write_record([
                name.clone(),
                d.day.to_string(),
                d.mean_ppd.to_string(),
                d.total_chf.to_string(),
            ])?;
        }
    }
    stack.flush().map_err(|e| AppError::Data(e.to_string()))?;
    scatter.flush().map_err(|e| AppError::Data(e.to_string()))?;

    let mut md = String::from("# Simulation report\n\n");
    md.push_str("| scenario | days | energy [CHF/d] | reward [CHF/d] | penalty [CHF/d] | amortization [CHF/d] | total [CHF/d] | mean PPD [%] |\n");
    md.push_str("|---|---|---|---|---|---|---|---|\n");
    for (name, ledger) in &ledgers {
        let t = LedgerTotals::from_ledger(ledger);
        let amort =
            ledger.iter().map(|d| d.amortization_chf).sum::<f64>() / ledger.len().max(1) as f64;
        md.push_str(&format!(
            "| {name} | {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |\n",
            t.days,
            t.mean_daily_energy_chf,
            t.mean_daily_reward_chf,
            t.mean_daily_penalty_chf,
            amort,
            t.mean_daily_total_chf,
            t.mean_ppd,
        ));
    }
    md.push_str(
        "\nPer-day cost components: `cost_stack.csv`. Comfort vs cost scatter data: `ppd_vs_cost.csv`.\n",
    );
    fs::write(out_dir.join("report.md"), md)?;
    println!("report -> {}", out_dir.join("report.md").display());
    Ok(())
}
