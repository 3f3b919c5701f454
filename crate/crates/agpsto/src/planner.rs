//! Planning orchestration: the penalty outer loop around Lipschitz-restarted
//! accelerated descent with stochastic escapes ([`agpsto_plan`]), and the
//! incremental planner ([`iomp_plan`]) that allocates waypoints by kinetic
//! energy and refines noisy sub-trajectories until the path is
//! continuous-time safe.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agd::{
    self, agd_run, min_approach, AgdConfig, LipTracker, StopReason,
};
use crate::asto::{self, AstoConfig, AstoStop, SampleEval};
use crate::error::{Error, Result};
use crate::objective::{Objective, WorldView};
use crate::trajectory::Trajectory;
use crate::trajgp::{self, build_prior, interpolate_between, ConditioningSpec, GPModel, LtvSdeModel};
use crate::world;

#[derive(Debug, Clone, Serialize)]
pub struct PlannerConfig {
    /// Penalty rounds.
    pub n_pen: usize,
    /// Lipschitz-restart rounds per penalty round.
    pub n_lip: usize,
    /// Penalty scaling factor; each infeasible round divides the penalties
    /// by this value (growth for κ < 1).
    pub kappa: f64,
    /// Feasibility threshold on the unpenalized obstacle cost.
    pub g_tol: f64,
    /// Initial penalty factor.
    pub rho0: f64,
    pub limit_weight: f64,
    /// Incremental rounds (waypoint densifications).
    pub n_iti: usize,
    /// Waypoint-count growth factor per incremental round.
    pub tau_ip: f64,
    /// Interval states per gap for safety checks and classification.
    pub n_intervals: usize,
    /// Sub-trajectory refinement rounds per incremental round.
    pub n_uf: usize,
    /// z-score threshold of the noisy-waypoint filter.
    pub noisy_z: f64,
    /// Initial support-time spacing (seconds).
    pub dt0: f64,
    /// Initial-state covariance scale for the prior.
    pub k0_scale: f64,
    /// Power-spectral-density scale of the prior (Q_c = qc_scale · I).
    pub qc_scale: f64,
    pub agd: AgdConfig,
    pub asto: AstoConfig,
    /// Insert stochastic escapes when a minimum approach is detected.
    pub asto_enabled: bool,
    /// Enable the minimum-approach detector at all.
    pub min_approach_enabled: bool,
    /// Constant Lipschitz estimate (no re-estimation) for baselines.
    pub fixed_lipschitz: Option<f64>,
    /// Support-waypoint count for the non-incremental planners.
    pub n_fixed_waypoints: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            n_pen: 10,
            n_lip: 40,
            kappa: 0.4,
            g_tol: 1e-4,
            rho0: 0.01,
            limit_weight: 1.0,
            n_iti: 4,
            tau_ip: 2.0,
            n_intervals: 8,
            n_uf: 10,
            noisy_z: 1.0,
            dt0: 4.0,
            k0_scale: 1.0,
            qc_scale: 1.0,
            agd: AgdConfig::default(),
            asto: AstoConfig::default(),
            asto_enabled: true,
            min_approach_enabled: true,
            fixed_lipschitz: None,
            n_fixed_waypoints: 12,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::parameter("kappa must lie in (0, 1)"));
        }
        if !(self.tau_ip > 1.0) {
            return Err(Error::parameter("tau_ip must exceed 1"));
        }
        if self.n_pen == 0 || self.n_lip == 0 || self.n_iti == 0 || self.n_uf == 0 {
            return Err(Error::parameter("all budgets must be at least 1"));
        }
        self.agd.validate()?;
        self.asto.validate()
    }

    /// The stochastic layer shares the planner's feasibility threshold.
    fn asto_cfg(&self) -> AstoConfig {
        AstoConfig {
            g_tol: self.g_tol,
            ..self.asto.clone()
        }
    }
}

/// Per-joint effective inertia for the kinetic waypoint weighting.
#[derive(Debug, Clone)]
pub struct KineticModel {
    robot: world::RobotModel,
}

impl KineticModel {
    pub fn from_robot(robot: &world::RobotModel) -> Self {
        KineticModel {
            robot: robot.clone(),
        }
    }

    /// Diagonal of the effective inertia at configuration `q`: each joint
    /// carries its own rotational inertia plus the point-mass contribution
    /// of every body it actuates.
    pub fn inertia_diag(&self, q: &DVector<f64>) -> DVector<f64> {
        match &self.robot.kind {
            world::RobotKind::Point { .. } => DVector::from_element(2, 1.0),
            world::RobotKind::PlanarArm {
                link_lengths,
                inertia,
                ..
            } => {
                let joints = self.robot.joint_positions(q);
                let n = link_lengths.len();
                DVector::from_fn(n, |i, _| {
                    let mut m = inertia[i].izz;
                    for j in i..n {
                        let com = joints[j]
                            + (joints[j + 1] - joints[j]) * inertia[j].com_fraction;
                        let r = (com - joints[i]).norm();
                        m += inertia[j].mass * r * r;
                    }
                    m
                })
            }
        }
    }
}

/// Distribute `n_new` interpolation waypoints over the gaps of `traj`
/// proportionally to the kinetic energy ½‖Δθ‖²_ℳ of each gap, with ℳ
/// evaluated at the GP-bridged midpoint. A zero-energy trajectory falls back
/// to a uniform split.
pub fn allocate_waypoints(
    traj: &Trajectory,
    sde: &LtvSdeModel,
    kinetic: &KineticModel,
    n_new: usize,
) -> Result<Vec<usize>> {
    let gaps = traj.n_waypoints() - 1;
    let mut energies = Vec::with_capacity(gaps);
    for t in 0..gaps {
        let a = traj.state(t).into_owned();
        let b = traj.state(t + 1).into_owned();
        let mid = interpolate_between(sde, &a, &b, sde.dt(), &[0.5])?
            .pop()
            .expect("one state");
        let q_mid = mid.rows(0, traj.joint_dim()).into_owned();
        let m = kinetic.inertia_diag(&q_mid);
        let delta = traj.position(t + 1) - traj.position(t);
        let e: f64 = 0.5
            * delta
                .iter()
                .zip(m.iter())
                .map(|(d, mi)| mi * d * d)
                .sum::<f64>();
        energies.push(e);
    }
    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        // static trajectory: uniform split
        let base = n_new / gaps;
        let extra = n_new % gaps;
        return Ok((0..gaps).map(|t| base + usize::from(t < extra)).collect());
    }
    Ok(energies
        .iter()
        .map(|e| ((n_new as f64) * e / total).round() as usize)
        .collect())
}

/// Index ranges (inclusive) of waypoints whose cost stands out above
/// `mean + z·std`, each padded by one neighbor and merged when overlapping.
/// `exclude` suppresses waypoints refined in the previous round.
pub fn select_noisy_ranges(
    costs: &[f64],
    z: f64,
    exclude: &[(usize, usize)],
) -> Vec<(usize, usize)> {
    let n = costs.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = costs.iter().sum::<f64>() / n as f64;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let threshold = mean + z * std;
    let excluded = |t: usize| exclude.iter().any(|&(a, b)| t >= a && t <= b);
    let marked: Vec<bool> = costs
        .iter()
        .enumerate()
        .map(|(t, &c)| c > threshold && !excluded(t))
        .collect();
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut t = 0;
    while t < n {
        if marked[t] {
            let start = t;
            while t + 1 < n && marked[t + 1] {
                t += 1;
            }
            let a = start.saturating_sub(1);
            let b = (t + 1).min(n - 1);
            match ranges.last_mut() {
                Some(last) if a <= last.1 => last.1 = b,
                _ => ranges.push((a, b)),
            }
        }
        t += 1;
    }
    ranges
}

#[derive(Debug, Clone, Serialize)]
pub enum PhaseEvent {
    PenaltyRound {
        round: usize,
        rho_max: f64,
    },
    LipschitzRestart {
        kind: &'static str,
        from: f64,
        to: f64,
    },
    AstoPhase {
        rounds: usize,
        evaluations: usize,
        accepted: bool,
        reason: AstoStop,
    },
    AgdRun {
        iterations: usize,
        reason: StopReason,
    },
    Refinement {
        range: (usize, usize),
        success: bool,
    },
    Densified {
        waypoints: usize,
        dt: f64,
    },
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct PlanReport {
    pub success: bool,
    pub final_cost: f64,
    pub final_obstacle_unit: f64,
    pub agd_iterations: usize,
    pub restarts: usize,
    pub asto_phases: usize,
    pub pen_rounds: usize,
    pub phases: Vec<PhaseEvent>,
    /// (cost, gradient norm) per optimizer iteration.
    pub cost_trace: Vec<(f64, f64)>,
    pub lip_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub trajectory: Trajectory,
    pub gp: GPModel,
    pub rho: Vec<f64>,
    pub report: PlanReport,
}

/// Stochastic escapes allowed per penalty round before the planner defers
/// to penalty growth or densification.
const MAX_ESCAPES_PER_ROUND: usize = 3;

fn objective_closure<'a>(
    obj: &'a Objective,
    n: usize,
    d: usize,
) -> impl FnMut(&DVector<f64>) -> (f64, DVector<f64>) + 'a {
    move |v: &DVector<f64>| {
        let traj = Trajectory::from_vector(v.clone(), n, d).expect("trajectory shape");
        let f = obj.evaluate(&traj).unwrap_or(f64::INFINITY);
        let g = obj
            .gradient(&traj)
            .unwrap_or_else(|_| DVector::zeros(v.len()));
        (f, g)
    }
}

/// Tile per-joint limits over the interior waypoints (the sampling box).
fn interior_limit_box(robot: &world::RobotModel, n_interior: usize) -> (DVector<f64>, DVector<f64>) {
    let d = robot.dof();
    let lo = DVector::from_fn(n_interior * d, |i, _| robot.limits_min[i % d]);
    let hi = DVector::from_fn(n_interior * d, |i, _| robot.limits_max[i % d]);
    (lo, hi)
}

/// Penalty-loop planner over a fixed support grid: restart-driven descent
/// with stochastic escapes when a minimum approach is detected, growing the
/// collision penalties until the trajectory is feasible.
pub fn agpsto_plan(
    theta0: &Trajectory,
    obj0: &Objective,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PlanOutcome> {
    let n = theta0.n_waypoints();
    let d = theta0.joint_dim();
    let mut obj = obj0.clone();
    let mut theta = theta0.clone();
    let mut report = PlanReport::default();

    'pen: for pen_round in 1..=cfg.n_pen {
        report.pen_rounds = pen_round;
        let g0 = obj.gradient(&theta)?;
        let mut tracker = LipTracker::new(cfg.fixed_lipschitz.unwrap_or(g0.norm().max(1e-8)));
        let mut last_ared: Option<f64> = None;
        let mut reestimates_this_round = 0usize;
        let mut escapes_this_round = 0usize;

        for _lip_round in 1..=cfg.n_lip {
            report.lip_trace.push(tracker.current);

            if cfg.min_approach_enabled && reestimates_this_round > 0 {
                // Slope probe along the negative gradient at the current
                // iterate for the minimum-approach test.
                let (f_cur, g_cur) = {
                    let f = obj.evaluate(&theta)?;
                    let g = obj.gradient(&theta)?;
                    (f, g)
                };
                let slope = if g_cur.norm() > 0.0 {
                    let h_u = 1e-8;
                    let c = (1.0 + cfg.agd.theta2) / cfg.agd.theta1;
                    let probe_vec = theta.as_vector() - &g_cur * (h_u * c);
                    let probe = Trajectory::from_vector(probe_vec, n, d)?;
                    (obj.evaluate(&probe)? - f_cur) / h_u
                } else {
                    0.0
                };
                if std::env::var("AGPSTO_DEBUG_MA").is_ok() {
                    eprintln!(
                        "MA check: slope {slope:.3e} ared {:?} lip {:.3e} expansion {} |g| {:.3e}",
                        last_ared,
                        tracker.current,
                        tracker.expansion_triggered(cfg.agd.l_tol),
                        g_cur.norm()
                    );
                }
                if min_approach(&tracker, Some(slope), last_ared, &cfg.agd) {
                    if cfg.asto_enabled && escapes_this_round < MAX_ESCAPES_PER_ROUND {
                        escapes_this_round += 1;
                        stochastic_escape(&mut obj, &mut theta, cfg, rng, &mut report)?;
                        let g_new = obj.gradient(&theta)?;
                        tracker = LipTracker::new(
                            cfg.fixed_lipschitz.unwrap_or(g_new.norm().max(1e-8)),
                        );
                        reestimates_this_round = 0;
                        last_ared = None;
                    } else {
                        // No escape mechanism: the descent has stalled.
                        break;
                    }
                }
            }

            let outcome = {
                let mut f = objective_closure(&obj, n, d);
                agd_run(&mut f, theta.as_vector(), tracker.current, &cfg.agd, rng)?
            };
            report.agd_iterations += outcome.iterations;
            report.cost_trace.extend(outcome.history.iter().copied());
            theta = Trajectory::from_vector(outcome.x.clone(), n, d)?;
            if outcome.accepted_steps > 0 {
                tracker.on_accepted_progress();
            }
            last_ared = outcome.last_reduction.or(last_ared);
            report.phases.push(PhaseEvent::AgdRun {
                iterations: outcome.iterations,
                reason: outcome.reason,
            });

            match outcome.reason {
                StopReason::Converged | StopReason::ZeroGradient => {
                    // A converged descent that still penetrates an obstacle
                    // between waypoints sits in a support-discretization
                    // artifact; more descent cannot fix it, only sampling
                    // can. (Margin-only interval violations are left to the
                    // penalty loop and densification.)
                    if cfg.asto_enabled
                        && escapes_this_round < MAX_ESCAPES_PER_ROUND
                        && world::max_penetration(
                            &theta,
                            obj.gp().sde(),
                            &obj.world().robot,
                            &obj.world().grid,
                            cfg.n_intervals,
                        )? > 0.0
                    {
                        escapes_this_round += 1;
                        stochastic_escape(&mut obj, &mut theta, cfg, rng, &mut report)?;
                        let g_new = obj.gradient(&theta)?;
                        tracker = LipTracker::new(
                            cfg.fixed_lipschitz.unwrap_or(g_new.norm().max(1e-8)),
                        );
                        reestimates_this_round = 0;
                        last_ared = None;
                        continue;
                    }
                    break;
                }
                StopReason::MaxIterations => continue,
                StopReason::RestartLow | StopReason::RestartUp => {
                    if cfg.fixed_lipschitz.is_some() {
                        continue; // constant-estimate baselines never restart
                    }
                    let ctx = outcome.restart.as_ref().expect("restart context");
                    let old = tracker.current;
                    let re = if outcome.reason == StopReason::RestartLow {
                        let mut f = objective_closure(&obj, n, d);
                        agd::reestimate_low(|v| f(v).0, ctx, old, &cfg.agd)?
                    } else {
                        agd::reestimate_up(ctx, old, &cfg.agd, rng)?
                    };
                    report.restarts += 1;
                    reestimates_this_round += 1;
                    tracker.on_reestimate(
                        re.lipschitz,
                        reestimates_this_round >= cfg.agd.max_reestimates,
                    );
                    report.phases.push(PhaseEvent::LipschitzRestart {
                        kind: if outcome.reason == StopReason::RestartLow {
                            "grow"
                        } else {
                            "resample"
                        },
                        from: old,
                        to: re.lipschitz,
                    });
                }
            }
        }

        let obs_unit = obj.obstacle_unit(&theta)?;
        if obs_unit < cfg.g_tol && obj.within_limits(&theta) {
            if obj.continuous_gate(&theta, cfg.n_intervals)? <= cfg.g_tol {
                report.success = true;
                report.final_cost = obj.evaluate(&theta)?;
                report.final_obstacle_unit = obs_unit;
                return Ok(PlanOutcome {
                    trajectory: theta,
                    gp: obj.gp().clone(),
                    rho: obj.rho().to_vec(),
                    report,
                });
            }
            let pen = world::max_penetration(
                &theta,
                obj.gp().sde(),
                &obj.world().robot,
                &obj.world().grid,
                cfg.n_intervals,
            )?;
            if pen <= 0.0 {
                // Supports are clear and the chain is penetration-free, so
                // the residual violation is interval margin only; growing
                // penalties cannot act on it at this support density.
                break 'pen;
            }
        }
        if pen_round < cfg.n_pen {
            obj = obj.scale_penalty(1.0 / cfg.kappa)?;
            report.phases.push(PhaseEvent::PenaltyRound {
                round: pen_round,
                rho_max: obj.rho().iter().cloned().fold(0.0, f64::max),
            });
        } else {
            break 'pen;
        }
    }

    report.success = false;
    report.final_cost = obj.evaluate(&theta)?;
    report.final_obstacle_unit = obj.obstacle_unit(&theta)?;
    Ok(PlanOutcome {
        trajectory: theta,
        gp: obj.gp().clone(),
        rho: obj.rho().to_vec(),
        report,
    })
}

/// Run one stochastic phase and absorb an accepted result into the iterate
/// and the model.
fn stochastic_escape(
    obj: &mut Objective,
    theta: &mut Trajectory,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
    report: &mut PlanReport,
) -> Result<()> {
    let (asto_out, evals) = run_asto_phase(obj, theta, cfg, rng)?;
    report.asto_phases += 1;
    report.phases.push(PhaseEvent::AstoPhase {
        rounds: asto_out.report.rounds,
        evaluations: evals,
        accepted: asto_out.report.accepted,
        reason: asto_out.report.reason,
    });
    if asto_out.report.accepted {
        *theta = theta.with_interior_positions(&asto_out.best, obj.dt())?;
        *obj = obj.with_gp(asto_out.gp)?;
    }
    Ok(())
}

/// One stochastic escape over the interior waypoint positions.
fn run_asto_phase(
    obj: &Objective,
    theta: &Trajectory,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(asto::AstoOutcome, usize)> {
    let n = theta.n_waypoints();
    let coords = theta.interior_position_coords();
    let (lo, hi) = interior_limit_box(&obj.world().robot, n - 2);
    let dt = obj.dt();
    let base = theta.clone();
    let eval_obj = obj.clone();
    let n_intervals = cfg.n_intervals;
    let g_tol = cfg.g_tol;
    let eval = move |v: &DVector<f64>| -> Result<SampleEval> {
        let traj = base.with_interior_positions(v, dt)?;
        let total = eval_obj.evaluate(&traj)?;
        // Feasibility inside the stochastic layer requires support costs
        // within tolerance and a penetration-free chain, so samples cannot
        // slip through thin obstacles between waypoints.
        let feasible = eval_obj.sample_feasible(&traj, n_intervals)?;
        Ok(SampleEval {
            total,
            obstacle_unit: if feasible { 0.0 } else { 2.0 * g_tol.max(1e-12) },
        })
    };
    let asto_cfg = cfg.asto_cfg();
    let out = asto::asto_run(eval, obj.gp(), &coords, &lo, &hi, &asto_cfg, rng)?;
    let evals = out.report.evaluations;
    Ok((out, evals))
}

/// Build the constant-velocity prior over `n_waypoints` between rest states
/// at `start` and `goal`.
pub fn prior_for(
    world: &WorldView,
    start: &DVector<f64>,
    goal: &DVector<f64>,
    n_waypoints: usize,
    dt: f64,
    k0_scale: f64,
    qc_scale: f64,
) -> Result<GPModel> {
    let d = world.robot.dof();
    let sde = LtvSdeModel::new(d, dt, nalgebra::DMatrix::identity(d, d) * qc_scale)?;
    let mut s0 = DVector::zeros(2 * d);
    s0.rows_mut(0, d).copy_from(start);
    let mut s1 = DVector::zeros(2 * d);
    s1.rows_mut(0, d).copy_from(goal);
    let k0 = DMatrix::identity(2 * d, 2 * d) * k0_scale;
    build_prior(&sde, n_waypoints, &s0, &s1, &k0)
}

/// Initial interior waypoint count from the relative task span.
pub fn initial_waypoints(robot: &world::RobotModel, start: &DVector<f64>, goal: &DVector<f64>) -> usize {
    let span = (goal - start).norm();
    let range = (&robot.limits_max - &robot.limits_min).norm();
    let r = if range > 0.0 { span / range } else { 1.0 };
    if r <= 1.0 / 3.0 {
        2
    } else {
        4
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IompReport {
    pub success: bool,
    pub iti_rounds: usize,
    pub refinements: usize,
    pub final_waypoints: usize,
    pub plan: PlanReport,
}

#[derive(Debug, Clone)]
pub struct IompOutcome {
    pub trajectory: Trajectory,
    pub sde: LtvSdeModel,
    pub report: IompReport,
}

/// Incremental planner: start from a coarse support grid, refine noisy
/// sub-trajectories, and densify by kinetic-energy allocation until the
/// trajectory is continuous-time safe.
pub fn iomp_plan(
    world: Arc<WorldView>,
    start: &DVector<f64>,
    goal: &DVector<f64>,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<IompOutcome> {
    cfg.validate()?;
    let d = world.robot.dof();
    if start.len() != d || goal.len() != d {
        return Err(Error::Dimension {
            what: "start/goal",
            expected: d,
            got: start.len(),
        });
    }
    for j in 0..d {
        let inside = |q: &DVector<f64>| {
            q[j] >= world.robot.limits_min[j] && q[j] <= world.robot.limits_max[j]
        };
        if !inside(start) || !inside(goal) {
            return Err(Error::parameter("start or goal outside joint limits"));
        }
    }
    if world::in_collision(&world.robot, &world.grid, start)
        || world::in_collision(&world.robot, &world.grid, goal)
    {
        return Err(Error::parameter("start or goal in collision"));
    }

    let kinetic = KineticModel::from_robot(&world.robot);
    let mut dt = cfg.dt0;
    let mut n_wp = initial_waypoints(&world.robot, start, goal) + 2;
    let mut gp = prior_for(&world, start, goal, n_wp, dt, cfg.k0_scale, cfg.qc_scale)?;
    let mut theta = gp.mean_trajectory();
    let mut rho = vec![cfg.rho0; n_wp];
    let mut report = IompReport {
        success: false,
        iti_rounds: 0,
        refinements: 0,
        final_waypoints: n_wp,
        plan: PlanReport::default(),
    };

    for iti in 1..=cfg.n_iti {
        report.iti_rounds = iti;
        let mut last_refined: Vec<(usize, usize)> = Vec::new();
        // Failed refinement rounds widen the slices before retrying: a spike
        // whose escape route lies outside its padded neighborhood needs a
        // longer slice.
        let mut pad = 0usize;

        for _uf in 0..cfg.n_uf {
            let obj = Objective::new(gp.clone(), Arc::clone(&world), rho.clone(), cfg.limit_weight)?;
            // Once the path is support-feasible and penetration-free, the
            // remaining interval margins need a denser grid, not more
            // refinement.
            if obj.obstacle_unit(&theta)? < cfg.g_tol
                && world::max_penetration(
                    &theta,
                    gp.sde(),
                    &world.robot,
                    &world.grid,
                    cfg.n_intervals,
                )? <= 0.0
            {
                break;
            }
            let costs = obj.per_waypoint_costs(&theta)?;
            let mut ranges = select_noisy_ranges(&costs, cfg.noisy_z, &last_refined);
            if ranges.is_empty() {
                let gate = obj.continuous_gate(&theta, cfg.n_intervals)?;
                if gate <= cfg.g_tol {
                    break; // interval-safe and nothing noisy: this round is done
                }
                if last_refined.is_empty() {
                    // Uniformly poor costs give the filter nothing to single
                    // out; run the whole trajectory as one slice.
                    ranges.push((0, n_wp - 1));
                } else {
                    // Still unsafe but the spikes are all freshly excluded:
                    // lift the exclusion and try again.
                    last_refined.clear();
                    continue;
                }
            }
            if pad > 0 {
                for r in ranges.iter_mut() {
                    r.0 = r.0.saturating_sub(pad);
                    r.1 = (r.1 + pad).min(n_wp - 1);
                }
                ranges.dedup();
            }
            let mut refined_now = Vec::new();
            let mut any_success = false;
            for range in ranges {
                let ok = refine_range(
                    &mut theta,
                    &gp,
                    &world,
                    &mut rho,
                    range,
                    cfg,
                    rng,
                    &mut report,
                )?;
                report.refinements += 1;
                report
                    .plan
                    .phases
                    .push(PhaseEvent::Refinement { range, success: ok });
                refined_now.push(range);
                any_success |= ok;
            }
            pad = if any_success {
                0
            } else {
                (pad.max(1) * 2).min(n_wp)
            };
            last_refined = refined_now;
        }

        let sde = gp.sde().clone();
        let within_limits = world::limit_cost(&theta, &world.robot, &world.params) == 0.0;
        if within_limits
            && world::continuous_safe(
                &theta,
                &sde,
                &world.robot,
                &world.grid,
                &world.params,
                cfg.g_tol,
                cfg.n_intervals,
            )?
        {
            report.success = true;
            report.final_waypoints = theta.n_waypoints();
            let obj = Objective::new(gp, Arc::clone(&world), rho, cfg.limit_weight)?;
            report.plan.final_cost = obj.evaluate(&theta)?;
            report.plan.final_obstacle_unit = obj.obstacle_unit(&theta)?;
            report.plan.success = true;
            return Ok(IompOutcome {
                trajectory: theta,
                sde,
                report,
            });
        }
        if iti == cfg.n_iti {
            break;
        }

        // Densify: grow the interior waypoint count by tau_ip, shrink dt.
        let interior = theta.n_waypoints() - 2;
        let target_interior = ((interior as f64) * cfg.tau_ip).ceil() as usize;
        let n_add = target_interior - interior;
        let mut counts = allocate_waypoints(&theta, gp.sde(), &kinetic, n_add)?;
        // Kinetic allocation alone can starve a low-energy gap whose interval
        // states violate safety; those gaps always receive a waypoint.
        {
            let obj = Objective::new(gp.clone(), Arc::clone(&world), rho.clone(), cfg.limit_weight)?;
            let fine = world::upsampled_state_costs(
                &theta,
                gp.sde(),
                &world.robot,
                &world.grid,
                &world.params,
                cfg.n_intervals,
            )?;
            let _ = &obj;
            for (g, c) in counts.iter_mut().enumerate() {
                let lo = g * cfg.n_intervals;
                let hi = ((g + 1) * cfg.n_intervals).min(fine.len() - 1);
                let worst = fine[lo..=hi].iter().cloned().fold(0.0, f64::max);
                if worst > cfg.g_tol && *c == 0 {
                    *c = 1;
                }
            }
        }
        let mut positions: Vec<DVector<f64>> = Vec::new();
        for t in 0..theta.n_waypoints() - 1 {
            positions.push(theta.position(t).into_owned());
            let c = counts[t];
            if c > 0 {
                let taus: Vec<f64> = (1..=c).map(|i| i as f64 / (c as f64 + 1.0)).collect();
                let a = theta.state(t).into_owned();
                let b = theta.state(t + 1).into_owned();
                for s in interpolate_between(gp.sde(), &a, &b, gp.sde().dt(), &taus)? {
                    positions.push(s.rows(0, d).into_owned());
                }
            }
        }
        positions.push(theta.position(theta.n_waypoints() - 1).into_owned());

        // Penalties carry over: each inserted waypoint inherits the larger
        // neighbor penalty.
        let mut new_rho = Vec::with_capacity(positions.len());
        for t in 0..theta.n_waypoints() - 1 {
            new_rho.push(rho[t]);
            for _ in 0..counts[t] {
                new_rho.push(rho[t].max(rho[t + 1]));
            }
        }
        new_rho.push(rho[theta.n_waypoints() - 1]);

        dt /= cfg.tau_ip;
        n_wp = positions.len();
        theta = Trajectory::from_positions(&positions, dt)?;
        gp = prior_for(&world, start, goal, n_wp, dt, cfg.k0_scale, cfg.qc_scale)?;
        rho = new_rho;
        report
            .plan
            .phases
            .push(PhaseEvent::Densified { waypoints: n_wp, dt });
    }

    report.final_waypoints = theta.n_waypoints();
    let sde = gp.sde().clone();
    let obj = Objective::new(gp, Arc::clone(&world), rho, cfg.limit_weight)?;
    report.plan.final_cost = obj.evaluate(&theta)?;
    report.plan.final_obstacle_unit = obj.obstacle_unit(&theta)?;
    Ok(IompOutcome {
        trajectory: theta,
        sde,
        report,
    })
}

/// Refine waypoints `range.0..=range.1` in place: clamp the boundary states
/// as GP observations, plan over the slice with its penalty share, and write
/// the result (and its penalties) back.
#[allow(clippy::too_many_arguments)]
fn refine_range(
    theta: &mut Trajectory,
    gp: &GPModel,
    world: &Arc<WorldView>,
    rho: &mut [f64],
    range: (usize, usize),
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
    report: &mut IompReport,
) -> Result<bool> {
    let (mut a, mut b) = range;
    let n = theta.n_waypoints();
    // A slice needs at least one interior waypoint.
    if b - a < 2 {
        if a > 0 {
            a -= 1;
        } else if b + 1 < n {
            b += 1;
        } else {
            return Ok(false);
        }
    }
    let s = theta.state_dim();
    let d = theta.joint_dim();

    // Condition the model on the boundary states, then restrict it to the
    // slice.
    let mut coords = Vec::with_capacity(2 * s);
    coords.extend(a * s..(a + 1) * s);
    coords.extend(b * s..(b + 1) * s);
    let mut values = DVector::zeros(2 * s);
    values.rows_mut(0, s).copy_from(&theta.state(a).into_owned());
    values.rows_mut(s, s).copy_from(&theta.state(b).into_owned());
    let spec = ConditioningSpec::for_coords(gp.dim(), &coords, values, trajgp::ENDPOINT_NOISE);
    let clamped = trajgp::condition(gp, &spec)?;

    let slice_coords: Vec<usize> = (a * s..(b + 1) * s).collect();
    let (sub_mean, sub_cov) = clamped.marginal(&slice_coords);
    let sub_gp = GPModel::new(
        sub_mean,
        sub_cov,
        gp.sde().clone(),
        gp.times()[a..=b].to_vec(),
    );
    let sub_theta = Trajectory::from_vector(
        theta.as_vector().rows(a * s, (b - a + 1) * s).into_owned(),
        b - a + 1,
        d,
    )?;
    let sub_rho = rho[a..=b].to_vec();
    let sub_obj = Objective::new(sub_gp, Arc::clone(world), sub_rho, cfg.limit_weight)?;

    // Safety score of a slice: penetration dominates, then the interval
    // clearance gate.
    let slice_score = |traj: &Trajectory| -> Result<f64> {
        let pen = world::max_penetration(traj, gp.sde(), &world.robot, &world.grid, cfg.n_intervals)?;
        let gate = sub_obj.continuous_gate(traj, cfg.n_intervals)?;
        Ok(if pen > 0.0 { 1e6 + pen } else { gate })
    };
    let score_before = slice_score(&sub_theta)?;

    let out = agpsto_plan(&sub_theta, &sub_obj, cfg, rng)?;
    // A slice refinement counts as progress once it is support-feasible and
    // penetration-free; residual interval margins are the densification
    // loop's job.
    let slice_ok = out.report.success
        || (out.report.final_obstacle_unit < cfg.g_tol
            && world::max_penetration(
                &out.trajectory,
                gp.sde(),
                &world.robot,
                &world.grid,
                cfg.n_intervals,
            )? <= 0.0);
    // Keep the refined slice only when it is safer than what it replaces; a
    // failed sub-plan must not scramble previous progress.
    let score_after = slice_score(&out.trajectory)?;
    if !slice_ok && score_after >= score_before {
        return Ok(false);
    }
    if std::env::var("AGPSTO_DEBUG_REFINE").is_ok() {
        eprintln!(
            "refine ({a},{b}): success {} pen {} asto {} obs {:.3e} gate {:.3e}",
            out.report.success,
            out.report.pen_rounds,
            out.report.asto_phases,
            out.report.final_obstacle_unit,
            sub_obj
                .with_gp(out.gp.clone())
                .and_then(|o| o.continuous_gate(&out.trajectory, cfg.n_intervals))
                .unwrap_or(f64::NAN),
        );
    }

    // Merge the slice report into the run totals.
    report.plan.agd_iterations += out.report.agd_iterations;
    report.plan.restarts += out.report.restarts;
    report.plan.asto_phases += out.report.asto_phases;
    report.plan.pen_rounds = report.plan.pen_rounds.max(out.report.pen_rounds);
    report.plan.cost_trace.extend(out.report.cost_trace);
    report.plan.lip_trace.extend(out.report.lip_trace);

    // Write back interior states and the slice's penalties.
    for (slot, t) in ((a + 1)..b).enumerate() {
        let state = out.trajectory.state(slot + 1).into_owned();
        theta.set_state(t, &state);
    }
    rho[a..=b].copy_from_slice(&out.rho);
    Ok(slice_ok)
}
