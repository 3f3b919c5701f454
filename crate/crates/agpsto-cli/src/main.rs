//! Benchmark and planning command line.
//!
//! Exit codes: 0 success, 1 argument/scenario errors, 2 planning failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agpsto::bench::{
    self, classify_scenario, grid_best, run_single, run_sweep, summarize, trajectory_json,
    write_grid_csv, write_records_csv, write_summary_csv, write_trace_json, Algo, RunRecord,
};
use agpsto::planner::PlannerConfig;
use agpsto::scenario::{load_scenario, load_scenario_dir, ConfigFile};

#[derive(Parser)]
#[command(
    name = "agpsto",
    about = "Trajectory-optimization benchmark harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm on one scenario and write the trajectory, record,
    /// and trace.
    Plan(PlanArgs),
    /// Run an algorithm × scenario × seed sweep and write records and
    /// summaries.
    Bench(BenchArgs),
    /// Print the difficulty classification of a scenario's initial
    /// trajectory.
    Classify(ClassifyArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Algorithm: iagpsto | agpsto | lreagd | agd-fixed | leapfrog | asto-only.
    #[arg(long, default_value = "iagpsto")]
    algo: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Optional TOML config overriding planner defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of scenario files.
    #[arg(long)]
    scenarios: PathBuf,
    /// Comma-separated algorithm list (default: all).
    #[arg(long)]
    algos: Option<String>,
    /// Override each scenario's repeat count.
    #[arg(long)]
    repeats: Option<usize>,
    /// Master seed; per-run seeds derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Zero the wall-time column so repeated runs are byte-identical.
    #[arg(long, default_value_t = false)]
    deterministic_output: bool,
    /// Write a JSON trace per run.
    #[arg(long, default_value_t = false)]
    traces: bool,
    /// Acceleration-parameter grid, e.g.
    /// `--grid theta1=1,1.414,2 --grid theta2=0,0.25`; sweeps the restart
    /// planner over the cross product and writes a success%|time matrix.
    #[arg(long)]
    grid: Vec<String>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load_config(path: &Option<PathBuf>) -> agpsto::Result<PlannerConfig> {
    let base = PlannerConfig::default();
    match path {
        Some(p) => ConfigFile::load(p)?.apply(&base),
        None => Ok(base),
    }
}

fn parse_algos(arg: &Option<String>) -> agpsto::Result<Vec<Algo>> {
    match arg {
        None => Ok(Algo::ALL.to_vec()),
        Some(s) => s.split(',').map(|a| Algo::parse(a.trim())).collect(),
    }
}

fn parse_grid(specs: &[String]) -> agpsto::Result<(Vec<f64>, Vec<f64>)> {
    let mut theta1 = Vec::new();
    let mut theta2 = Vec::new();
    for spec in specs {
        let (key, values) = spec.split_once('=').ok_or_else(|| {
            agpsto::Error::parameter(format!("grid spec '{spec}' must look like key=v1,v2"))
        })?;
        let parsed: Result<Vec<f64>, _> = values.split(',').map(|v| v.trim().parse()).collect();
        let parsed = parsed
            .map_err(|e| agpsto::Error::parameter(format!("grid values in '{spec}': {e}")))?;
        match key.trim() {
            "theta1" => theta1 = parsed,
            "theta2" => theta2 = parsed,
            other => {
                return Err(agpsto::Error::parameter(format!(
                    "unknown grid key '{other}' (expected theta1 or theta2)"
                )))
            }
        }
    }
    Ok((theta1, theta2))
}

fn cmd_plan(args: &PlanArgs) -> agpsto::Result<bool> {
    let scenario = load_scenario(&args.scenario)?;
    let algo = Algo::parse(&args.algo)?;
    let cfg = load_config(&args.config)?;
    std::fs::create_dir_all(&args.out)?;
    let result = run_single(&scenario, algo, &cfg, args.seed)?;

    let record_path = args.out.join("record.json");
    let text = serde_json::to_string_pretty(&result.record)
        .map_err(|e| agpsto::Error::Scenario(format!("record serialization: {e}")))?;
    std::fs::write(record_path, text)?;
    if let (Some(traj), Some(sde)) = (&result.trajectory, &result.sde) {
        let tj = trajectory_json(traj, sde.dt());
        let text = serde_json::to_string_pretty(&tj)
            .map_err(|e| agpsto::Error::Scenario(format!("trajectory serialization: {e}")))?;
        std::fs::write(args.out.join("trajectory.json"), text)?;
    }
    write_trace_json(&args.out.join("trace.json"), &result)?;
    println!(
        "{} on {}: success={} time={:.3}s iterations={} restarts={} stochastic_phases={}",
        result.record.algo,
        result.record.scenario,
        result.record.success,
        result.record.wall_time_s,
        result.record.iterations,
        result.record.restarts,
        result.record.asto_phases,
    );
    Ok(result.record.success)
}

fn cmd_bench(args: &BenchArgs) -> agpsto::Result<bool> {
    let scenarios = load_scenario_dir(&args.scenarios)?;
    let cfg = load_config(&args.config)?;
    std::fs::create_dir_all(&args.out)?;

    if !args.grid.is_empty() {
        let (theta1s, theta2s) = parse_grid(&args.grid)?;
        if theta1s.is_empty() || theta2s.is_empty() {
            return Err(agpsto::Error::parameter(
                "grid sweep needs both theta1 and theta2 values",
            ));
        }
        let cells = bench::run_grid(
            &scenarios,
            &theta1s,
            &theta2s,
            args.repeats.unwrap_or(3),
            args.seed,
            &cfg,
        );
        write_grid_csv(&args.out.join("grid.csv"), &cells, &theta1s, &theta2s)?;
        if let Some(best) = grid_best(&cells) {
            println!(
                "best cell: theta1={:.3} theta2={:.3} ({:.0}% | {:.2}s)",
                best.theta1, best.theta2, best.success_pct, best.avg_time_s
            );
        }
        return Ok(true);
    }

    let algos = parse_algos(&args.algos)?;
    let results = run_sweep(&scenarios, &algos, args.repeats, args.seed, &cfg);
    if args.traces {
        let dir = args.out.join("traces");
        std::fs::create_dir_all(&dir)?;
        for r in &results {
            let name = format!(
                "{}_{}_{}.json",
                r.record.scenario, r.record.algo, r.record.seed
            );
            write_trace_json(&dir.join(name), r)?;
        }
    }
    let records: Vec<RunRecord> = results.into_iter().map(|r| r.record).collect();
    write_records_csv(
        &args.out.join("records.csv"),
        &records,
        args.deterministic_output,
    )?;
    let summary = summarize(&records);
    write_summary_csv(&args.out.join("summary.csv"), &summary)?;
    for row in &summary {
        println!(
            "{:10} class {:2}: {:5.1}% success ({}/{}), avg {:.3}s ± {:.3}s, median iters {}",
            row.algo,
            row.class,
            row.success_pct,
            row.successes,
            row.runs,
            row.avg_time_s,
            row.std_time_s,
            row.median_iterations
        );
    }
    Ok(true)
}

fn cmd_classify(args: &ClassifyArgs) -> agpsto::Result<bool> {
    let scenario = load_scenario(&args.scenario)?;
    let cfg = load_config(&args.config)?;
    let class = classify_scenario(&scenario, &cfg)?;
    println!(
        "{}: {:.2} | {:.2} -> class {}",
        scenario.id, class.f_bar, class.stuck, class.label
    );
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Plan(args) => cmd_plan(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Classify(args) => cmd_classify(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
