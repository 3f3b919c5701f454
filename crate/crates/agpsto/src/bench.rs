//! Benchmark harness: the algorithm matrix, seeded single runs, sweeps with
//! per-tuple seed derivation, aggregation, and CSV/JSON export.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asto::{self, AstoStop, SampleEval};
use crate::error::{Error, Result};
use crate::objective::{Objective, ProblemClass};
use crate::parallel::maybe_par_map;
use crate::planner::{agpsto_plan, initial_waypoints, iomp_plan, prior_for, PlanReport, PlannerConfig};
use crate::scenario::Scenario;
use crate::trajectory::Trajectory;
use crate::trajgp::LtvSdeModel;
use crate::world;
use crate::{derive_seed, hash_str};
use crate::agd::{StepRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    IAgpSto,
    AgpSto,
    LReAgd,
    AgdFixed,
    Leapfrog,
    AstoOnly,
}

impl Algo {
    pub const ALL: [Algo; 6] = [
        Algo::IAgpSto,
        Algo::AgpSto,
        Algo::LReAgd,
        Algo::AgdFixed,
        Algo::Leapfrog,
        Algo::AstoOnly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algo::IAgpSto => "iagpsto",
            Algo::AgpSto => "agpsto",
            Algo::LReAgd => "lreagd",
            Algo::AgdFixed => "agd-fixed",
            Algo::Leapfrog => "leapfrog",
            Algo::AstoOnly => "asto-only",
        }
    }

    pub fn parse(s: &str) -> Result<Algo> {
        match s {
            "iagpsto" => Ok(Algo::IAgpSto),
            "agpsto" => Ok(Algo::AgpSto),
            "lreagd" => Ok(Algo::LReAgd),
            "agd-fixed" => Ok(Algo::AgdFixed),
            "leapfrog" => Ok(Algo::Leapfrog),
            "asto-only" => Ok(Algo::AstoOnly),
            other => Err(Error::parameter(format!("unknown algorithm '{other}'"))),
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One benchmark row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub class: String,
    pub algo: String,
    pub seed: u64,
    pub success: bool,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub asto_phases: usize,
    pub final_cost: f64,
    pub final_obstacle: f64,
}

/// Full result of one run, including the artifacts needed for verification
/// and traces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub record: RunRecord,
    pub report: PlanReport,
    pub trajectory: Option<Trajectory>,
    pub sde: Option<LtvSdeModel>,
}

/// Support spacing for the fixed-grid planners: keep the total duration of
/// the initial incremental grid.
fn fixed_grid_dt(scenario: &Scenario, cfg: &PlannerConfig) -> f64 {
    let n0 = initial_waypoints(&scenario.world.robot, &scenario.start, &scenario.goal);
    cfg.dt0 * (n0 as f64 + 1.0) / (cfg.n_fixed_waypoints as f64 - 1.0)
}

fn planner_cfg_for(algo: Algo, cfg: &PlannerConfig) -> PlannerConfig {
    let mut c = cfg.clone();
    match algo {
        Algo::IAgpSto | Algo::AgpSto => {}
        Algo::LReAgd => {
            c.asto_enabled = false;
            c.min_approach_enabled = false;
        }
        Algo::AgdFixed => {
            c.asto_enabled = false;
            c.min_approach_enabled = false;
            c.fixed_lipschitz = Some(1e2);
            c.agd.acceptance = false;
        }
        Algo::Leapfrog => {
            c.asto_enabled = false;
            c.min_approach_enabled = false;
            c.fixed_lipschitz = Some(1e2);
            c.agd.step_rule = StepRule::Leapfrog;
        }
        Algo::AstoOnly => {}
    }
    c
}

/// Execute one seeded run of `algo` on `scenario`. The wall time covers the
/// plan call only.
pub fn run_single(
    scenario: &Scenario,
    algo: Algo,
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<RunResult> {
    let cfg = planner_cfg_for(algo, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start_time = Instant::now();

    let (trajectory, sde, report) = match algo {
        Algo::IAgpSto => {
            let out = iomp_plan(
                Arc::clone(&scenario.world),
                &scenario.start,
                &scenario.goal,
                &cfg,
                &mut rng,
            )?;
            let mut report = out.report.plan.clone();
            report.success = out.report.success;
            (out.trajectory, out.sde, report)
        }
        Algo::AgpSto | Algo::LReAgd | Algo::AgdFixed | Algo::Leapfrog => {
            let n = cfg.n_fixed_waypoints;
            let dt = fixed_grid_dt(scenario, &cfg);
            let gp = prior_for(
                &scenario.world,
                &scenario.start,
                &scenario.goal,
                n,
                dt,
                cfg.k0_scale,
                cfg.qc_scale,
            )?;
            let theta0 = gp.mean_trajectory();
            let sde = gp.sde().clone();
            let obj = Objective::new(
                gp,
                Arc::clone(&scenario.world),
                vec![cfg.rho0; n],
                cfg.limit_weight,
            )?;
            let out = agpsto_plan(&theta0, &obj, &cfg, &mut rng)?;
            (out.trajectory, sde, out.report)
        }
        Algo::AstoOnly => asto_only_plan(scenario, &cfg, &mut rng)?,
    };
    let wall = start_time.elapsed().as_secs_f64();

    // Success requires support feasibility and continuous-time safety.
    let obs_unit = {
        let unit = vec![1.0; trajectory.n_waypoints()];
        world::obstacle_cost(
            &trajectory,
            &scenario.world.robot,
            &scenario.world.grid,
            &scenario.world.params,
            &unit,
            sde.dt(),
        )?
    };
    let safe = world::continuous_safe(
        &trajectory,
        &sde,
        &scenario.world.robot,
        &scenario.world.grid,
        &scenario.world.params,
        cfg.g_tol,
        cfg.n_intervals,
    )?;
    let within_limits =
        world::limit_cost(&trajectory, &scenario.world.robot, &scenario.world.params) == 0.0;
    let success = report.success && obs_unit <= cfg.g_tol && safe && within_limits;

    let record = RunRecord {
        scenario: scenario.id.clone(),
        class: scenario.class_hint.clone().unwrap_or_else(|| "?".into()),
        algo: algo.as_str().into(),
        seed,
        success,
        wall_time_s: wall,
        iterations: report.agd_iterations,
        restarts: report.restarts,
        asto_phases: report.asto_phases,
        final_cost: report.final_cost,
        final_obstacle: obs_unit,
    };
    Ok(RunResult {
        record,
        report,
        trajectory: Some(trajectory),
        sde: Some(sde),
    })
}

/// Pure sampling baseline: repeated stochastic rounds with growing
/// penalties, no gradient descent.
fn asto_only_plan(
    scenario: &Scenario,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Trajectory, LtvSdeModel, PlanReport)> {
    let n = cfg.n_fixed_waypoints;
    let d = scenario.world.robot.dof();
    let dt = fixed_grid_dt(scenario, cfg);
    let gp0 = prior_for(
        &scenario.world,
        &scenario.start,
        &scenario.goal,
        n,
        dt,
        cfg.k0_scale,
        cfg.qc_scale,
    )?;
    let sde = gp0.sde().clone();
    let mut obj = Objective::new(
        gp0,
        Arc::clone(&scenario.world),
        vec![cfg.rho0; n],
        cfg.limit_weight,
    )?;
    let mut theta = obj.gp().mean_trajectory();
    let mut report = PlanReport::default();

    let coords = theta.interior_position_coords();
    let lo = DVector::from_fn(coords.len(), |i, _| scenario.world.robot.limits_min[i % d]);
    let hi = DVector::from_fn(coords.len(), |i, _| scenario.world.robot.limits_max[i % d]);

    let mut asto_cfg = cfg.asto.clone();
    asto_cfg.g_tol = cfg.g_tol;

    for round in 1..=cfg.n_pen {
        report.pen_rounds = round;
        let base = theta.clone();
        let eval_obj = obj.clone();
        let n_intervals = cfg.n_intervals;
        let g_tol = cfg.g_tol;
        let eval = move |v: &DVector<f64>| -> Result<SampleEval> {
            let traj = base.with_interior_positions(v, dt)?;
            let total = eval_obj.evaluate(&traj)?;
            let feasible = eval_obj.sample_feasible(&traj, n_intervals)?;
            Ok(SampleEval {
                total,
                obstacle_unit: if feasible { 0.0 } else { 2.0 * g_tol.max(1e-12) },
            })
        };
        let out = asto::asto_run(eval, obj.gp(), &coords, &lo, &hi, &asto_cfg, rng)?;
        report.asto_phases += 1;
        if out.report.accepted {
            theta = theta.with_interior_positions(&out.best, dt)?;
            obj = obj.with_gp(out.gp)?;
        }
        if matches!(
            out.report.reason,
            AstoStop::FeasibleSample | AstoStop::FeasibleModel
        ) {
            report.success = true;
            break;
        }
        obj = obj.scale_penalty(1.0 / cfg.kappa)?;
    }
    report.final_cost = obj.evaluate(&theta)?;
    report.final_obstacle_unit = obj.obstacle_unit(&theta)?;
    if !report.success {
        report.success = report.final_obstacle_unit < cfg.g_tol;
    }
    Ok((theta, sde, report))
}

/// Difficulty classification of a scenario's initial fixed-grid trajectory.
pub fn classify_scenario(scenario: &Scenario, cfg: &PlannerConfig) -> Result<ProblemClass> {
    let n = cfg.n_fixed_waypoints;
    let dt = fixed_grid_dt(scenario, cfg);
    let gp = prior_for(
        &scenario.world,
        &scenario.start,
        &scenario.goal,
        n,
        dt,
        cfg.k0_scale,
        cfg.qc_scale,
    )?;
    let theta = gp.mean_trajectory();
    let obj = Objective::new(
        gp,
        Arc::clone(&scenario.world),
        vec![1.0; n],
        cfg.limit_weight,
    )?;
    obj.classify(&theta, cfg.n_intervals)
}

/// Stable per-tuple seed: independent of sweep order and parallelism.
pub fn tuple_seed(master: u64, scenario_id: &str, algo: Algo, repeat: usize) -> u64 {
    derive_seed(
        master,
        &[hash_str(scenario_id), hash_str(algo.as_str()), repeat as u64],
    )
}

/// Run the full scenario × algorithm × repeat sweep. Failures of individual
/// runs are recorded, never propagated.
pub fn run_sweep(
    scenarios: &[Scenario],
    algos: &[Algo],
    repeats_override: Option<usize>,
    master_seed: u64,
    cfg: &PlannerConfig,
) -> Vec<RunResult> {
    let mut tuples = Vec::new();
    for scenario in scenarios {
        let repeats = repeats_override.unwrap_or(scenario.repeats);
        for &algo in algos {
            for rep in 0..repeats {
                tuples.push((scenario.clone(), algo, rep));
            }
        }
    }
    maybe_par_map(tuples, |(scenario, algo, rep)| {
        let seed = tuple_seed(master_seed, &scenario.id, algo, rep);
        // Individual failures become unsuccessful rows; the sweep never
        // aborts.
        run_single(&scenario, algo, cfg, seed).unwrap_or_else(|_| RunResult {
            record: RunRecord {
                scenario: scenario.id.clone(),
                class: scenario.class_hint.clone().unwrap_or_else(|| "?".into()),
                algo: algo.as_str().into(),
                seed,
                success: false,
                wall_time_s: 0.0,
                iterations: 0,
                restarts: 0,
                asto_phases: 0,
                final_cost: f64::NAN,
                final_obstacle: f64::NAN,
            },
            report: PlanReport::default(),
            trajectory: None,
            sde: None,
        })
    })
}

/// Aggregated per-(algorithm, class) row.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub algo: String,
    pub class: String,
    pub runs: usize,
    pub successes: usize,
    pub success_pct: f64,
    pub avg_time_s: f64,
    pub std_time_s: f64,
    pub median_iterations: f64,
}

pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.algo.clone(), r.class.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((algo, class), rows)| {
            let runs = rows.len();
            let successes = rows.iter().filter(|r| r.success).count();
            let times: Vec<f64> = rows.iter().map(|r| r.wall_time_s).collect();
            let mean = times.iter().sum::<f64>() / runs as f64;
            let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / runs as f64;
            let mut iters: Vec<f64> = rows.iter().map(|r| r.iterations as f64).collect();
            iters.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = if iters.is_empty() {
                0.0
            } else if iters.len() % 2 == 1 {
                iters[iters.len() / 2]
            } else {
                0.5 * (iters[iters.len() / 2 - 1] + iters[iters.len() / 2])
            };
            SummaryRow {
                algo,
                class,
                runs,
                successes,
                success_pct: 100.0 * successes as f64 / runs as f64,
                avg_time_s: mean,
                std_time_s: var.sqrt(),
                median_iterations: median,
            }
        })
        .collect()
}

/// One cell of the acceleration-parameter tuning grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub theta1: f64,
    pub theta2: f64,
    /// Cells with a negative curvature margin are skipped.
    pub feasible: bool,
    pub success_pct: f64,
    pub avg_time_s: f64,
}

/// Sweep the restart planner over a ϑ₁ × ϑ₂ grid.
pub fn run_grid(
    scenarios: &[Scenario],
    theta1s: &[f64],
    theta2s: &[f64],
    repeats: usize,
    master_seed: u64,
    cfg: &PlannerConfig,
) -> Vec<GridCell> {
    let mut cells = Vec::new();
    for &t2 in theta2s {
        for &t1 in theta1s {
            let margin = -t2 * t2 - t2 + t1 - 1.0;
            if margin < 0.0 {
                cells.push(GridCell {
                    theta1: t1,
                    theta2: t2,
                    feasible: false,
                    success_pct: 0.0,
                    avg_time_s: f64::NAN,
                });
                continue;
            }
            let mut c = cfg.clone();
            c.agd.theta1 = t1;
            c.agd.theta2 = t2;
            let results = run_sweep(
                scenarios,
                &[Algo::LReAgd],
                Some(repeats),
                derive_seed(master_seed, &[t1.to_bits(), t2.to_bits()]),
                &c,
            );
            let records: Vec<RunRecord> = results.into_iter().map(|r| r.record).collect();
            let runs = records.len().max(1);
            let successes = records.iter().filter(|r| r.success).count();
            let avg = records.iter().map(|r| r.wall_time_s).sum::<f64>() / runs as f64;
            cells.push(GridCell {
                theta1: t1,
                theta2: t2,
                feasible: true,
                success_pct: 100.0 * successes as f64 / runs as f64,
                avg_time_s: avg,
            });
        }
    }
    cells
}

/// Best feasible cell: highest success rate, ties by lower time.
pub fn grid_best(cells: &[GridCell]) -> Option<&GridCell> {
    cells
        .iter()
        .filter(|c| c.feasible)
        .max_by(|a, b| {
            a.success_pct
                .partial_cmp(&b.success_pct)
                .unwrap()
                .then(b.avg_time_s.partial_cmp(&a.avg_time_s).unwrap())
        })
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6}")
    }
}

/// Write benchmark rows; `zero_times` makes re-runs byte-identical.
pub fn write_records_csv(path: &Path, records: &[RunRecord], zero_times: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "scenario",
        "class",
        "algo",
        "seed",
        "success",
        "wall_time_s",
        "iterations",
        "restarts",
        "asto_phases",
        "final_cost",
        "final_obstacle",
    ])
    .map_err(csv_err)?;
    for r in records {
        let t = if zero_times { 0.0 } else { r.wall_time_s };
        w.write_record([
            r.scenario.clone(),
            r.class.clone(),
            r.algo.clone(),
            r.seed.to_string(),
            r.success.to_string(),
            fmt_f64(t),
            r.iterations.to_string(),
            r.restarts.to_string(),
            r.asto_phases.to_string(),
            fmt_f64(r.final_cost),
            fmt_f64(r.final_obstacle),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "algo",
        "class",
        "runs",
        "successes",
        "success_pct",
        "avg_time_s",
        "std_time_s",
        "median_iterations",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.algo.clone(),
            r.class.clone(),
            r.runs.to_string(),
            r.successes.to_string(),
            fmt_f64(r.success_pct),
            fmt_f64(r.avg_time_s),
            fmt_f64(r.std_time_s),
            fmt_f64(r.median_iterations),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Matrix view of the tuning grid: rows ϑ₂, columns ϑ₁, cells
/// "success%|time" with "—" for infeasible cells.
pub fn write_grid_csv(path: &Path, cells: &[GridCell], theta1s: &[f64], theta2s: &[f64]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "theta2\\theta1")?;
    for t1 in theta1s {
        write!(f, ",{t1:.3}")?;
    }
    writeln!(f)?;
    for &t2 in theta2s {
        write!(f, "{t2:.3}")?;
        for &t1 in theta1s {
            let cell = cells
                .iter()
                .find(|c| c.theta1 == t1 && c.theta2 == t2)
                .expect("cell exists");
            if cell.feasible {
                write!(f, ",{:.0}|{:.2}", cell.success_pct, cell.avg_time_s)?;
            } else {
                write!(f, ",—")?;
            }
        }
        writeln!(f)?;
    }
    Ok(())
}

/// Per-run JSON trace of the optimizer.
#[derive(Debug, Clone, Serialize)]
pub struct RunTrace<'a> {
    pub scenario: &'a str,
    pub algo: &'a str,
    pub seed: u64,
    pub success: bool,
    pub cost_trace: &'a [(f64, f64)],
    pub lip_trace: &'a [f64],
    pub phases: &'a [crate::planner::PhaseEvent],
}

pub fn write_trace_json(path: &Path, result: &RunResult) -> Result<()> {
    let trace = RunTrace {
        scenario: &result.record.scenario,
        algo: &result.record.algo,
        seed: result.record.seed,
        success: result.record.success,
        cost_trace: &result.report.cost_trace,
        lip_trace: &result.report.lip_trace,
        phases: &result.report.phases,
    };
    let text = serde_json::to_string_pretty(&trace)
        .map_err(|e| Error::Scenario(format!("trace serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// JSON-exportable trajectory (full states per support time).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryJson {
    pub dt: f64,
    pub joint_dim: usize,
    pub states: Vec<Vec<f64>>,
}

pub fn trajectory_json(traj: &Trajectory, dt: f64) -> TrajectoryJson {
    TrajectoryJson {
        dt,
        joint_dim: traj.joint_dim(),
        states: (0..traj.n_waypoints())
            .map(|t| traj.state(t).iter().cloned().collect())
            .collect(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Scenario(format!("csv: {e}"))
}
