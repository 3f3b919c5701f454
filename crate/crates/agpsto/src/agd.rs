//! Accelerated gradient descent with a two-sided step-acceptance band,
//! Lipschitz re-estimation on restart, and local-minimum detection.
//!
//! One run ([`agd_run`]) iterates the three-iterate scheme until the
//! acceptance band rejects a step, convergence is reached, or the iteration
//! budget runs out. The restart driver ([`lreagd_minimize`]) re-estimates the
//! Lipschitz constant after each rejection and re-enters the run.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// How the over-relaxed step length λ_k is chosen inside its admissible
/// interval `[β, (1+ϑ₂α_k)β]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepRule {
    /// λ_k uniform in the admissible interval (seeded).
    Sampled,
    /// λ_k pinned to the interval midpoint (deterministic mode).
    Midpoint,
    /// λ_k = β/α_k: second-order leapfrog baseline; the acceptance band is
    /// disabled because this rule sits outside the admissible interval.
    Leapfrog,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgdConfig {
    pub theta1: f64,
    pub theta2: f64,
    pub c_low: f64,
    pub c_up: f64,
    /// Iteration budget for one run between restarts.
    pub n_ag: usize,
    /// Relative cost-reduction convergence threshold.
    pub f_tol: f64,
    /// Step-norm convergence threshold.
    pub theta_tol: f64,
    /// Slope tolerance of the minimum-approach test (negative).
    pub phi_tol: f64,
    /// Lipschitz expansion tolerance of the minimum-approach test.
    pub l_tol: f64,
    pub step_rule: StepRule,
    /// Budget of Lipschitz re-estimations per inner loop before the
    /// minimum-approach test is forced true.
    pub max_reestimates: usize,
    /// Disable the acceptance band entirely (constant-estimate baselines).
    pub acceptance: bool,
}

impl Default for AgdConfig {
    fn default() -> Self {
        AgdConfig {
            theta1: 2.0,
            theta2: 0.25,
            c_low: 1.25,
            c_up: 0.15,
            n_ag: 200,
            f_tol: 1e-5,
            theta_tol: 1e-4,
            phi_tol: -0.1,
            l_tol: 1e2,
            step_rule: StepRule::Sampled,
            max_reestimates: 25,
            acceptance: true,
        }
    }
}

impl AgdConfig {
    /// Curvature-margin feasibility: −ϑ₂² − ϑ₂ + ϑ₁ − 1. Positive values
    /// guarantee a positive per-step coefficient in the convergence bound;
    /// zero is the boundary and still runnable.
    pub fn feasibility_margin(&self) -> f64 {
        -self.theta2 * self.theta2 - self.theta2 + self.theta1 - 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta1 < 1.0 || self.theta2 < 0.0 {
            return Err(Error::parameter("require ϑ₁ ≥ 1 and ϑ₂ ≥ 0"));
        }
        if !(self.c_low > self.c_up && self.c_up > 0.0) {
            return Err(Error::parameter("require c_low > c_up > 0"));
        }
        if self.feasibility_margin() < 0.0 {
            return Err(Error::parameter(format!(
                "infeasible acceleration parameters: -th2^2 - th2 + th1 - 1 = {} < 0",
                self.feasibility_margin()
            )));
        }
        if self.n_ag == 0 {
            return Err(Error::parameter("n_ag must be positive"));
        }
        Ok(())
    }
}

/// First-k forgetting weights by their defining recurrence
/// Γ₁ = 1, Γ_k = (1 − α_k)Γ_{k−1} with α_k = 2/(k+1).
pub fn gamma_recurrence(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut gamma = 1.0f64;
    out.push(gamma);
    for k in 2..=n {
        let alpha = 2.0 / (k as f64 + 1.0);
        gamma *= 1.0 - alpha;
        out.push(gamma);
    }
    out
}

pub fn alpha_k(k: usize) -> f64 {
    2.0 / (k as f64 + 1.0)
}

/// λ_k for iteration `k` given β = 1/(ϑ₁ℒ).
pub fn lambda_k(rule: StepRule, k: usize, beta: f64, theta2: f64, rng: &mut ChaCha8Rng) -> f64 {
    let alpha = alpha_k(k);
    match rule {
        StepRule::Sampled => beta * (1.0 + theta2 * alpha * rng.random::<f64>()),
        StepRule::Midpoint => beta * (1.0 + 0.5 * theta2 * alpha),
        StepRule::Leapfrog => beta / alpha,
    }
}

/// Verdict of the two-sided predicted-reduction test on the latest step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepVerdict {
    Continue,
    /// Reduction fell short of the most pessimistic model prediction: the
    /// Lipschitz estimate is too small and must grow.
    RestartLow,
    /// Reduction exceeded the most optimistic model prediction: the estimate
    /// over-damps the step and should shrink.
    RestartUp,
}

/// Two-sided acceptance test. `ared = F_{k−1} − F_k` is the achieved
/// reduction over the md-iterates; the model predicts it must lie between
///
/// ```text
/// pred_low = −⟨∇F_{k−1}, s⟩ − (c_low · ℒ/2)‖s‖²   (minimum acceptable)
/// pred_up  = −⟨∇F_{k−1}, s⟩ − (c_up  · ℒ/2)‖s‖²   (maximum acceptable)
/// ```
///
/// with `s` the md step. Falling below `pred_low` means insufficient
/// reduction (grow ℒ); exceeding `pred_up` means the estimate resisted the
/// step (resample ℒ downward).
pub fn acc_break(
    ared: f64,
    grad_prev: &DVector<f64>,
    step: &DVector<f64>,
    lipschitz: f64,
    cfg: &AgdConfig,
) -> StepVerdict {
    let descent = -grad_prev.dot(step);
    let sn2 = step.norm_squared();
    let pred_low = descent - 0.5 * cfg.c_low * lipschitz * sn2;
    let pred_up = descent - 0.5 * cfg.c_up * lipschitz * sn2;
    if ared < pred_low {
        StepVerdict::RestartLow
    } else if ared > pred_up {
        StepVerdict::RestartUp
    } else {
        StepVerdict::Continue
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Converged,
    ZeroGradient,
    MaxIterations,
    RestartLow,
    RestartUp,
}

/// Data of the step that tripped the acceptance band, needed by the
/// re-estimation formulas.
#[derive(Debug, Clone)]
pub struct RestartContext {
    pub x: DVector<f64>,
    pub grad: DVector<f64>,
    pub grad_prev: DVector<f64>,
    pub step: DVector<f64>,
    pub ared: f64,
    /// Iteration index at which the band tripped.
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct AgdOutcome {
    pub x: DVector<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    pub reason: StopReason,
    pub iterations: usize,
    /// Steps that passed the acceptance band in this run.
    pub accepted_steps: usize,
    /// Reduction achieved by the final step of the run.
    pub last_reduction: Option<f64>,
    pub restart: Option<RestartContext>,
    /// (cost, gradient norm) per iteration.
    pub history: Vec<(f64, f64)>,
}

/// One accelerated-gradient sweep from `x0` with Lipschitz estimate `lip0`.
/// Returns the md-iterate live when the run stops.
pub fn agd_run<F>(
    mut objective: F,
    x0: &DVector<f64>,
    lip0: f64,
    cfg: &AgdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AgdOutcome>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    if !(lip0 > 0.0) {
        return Err(Error::parameter("initial Lipschitz estimate must be positive"));
    }
    let beta = 1.0 / (cfg.theta1 * lip0);
    let acceptance_active = cfg.acceptance && cfg.step_rule != StepRule::Leapfrog;

    let mut x = x0.clone();
    let mut x_ag = x0.clone();
    let mut md_prev: Option<(DVector<f64>, f64, DVector<f64>)> = None; // (x_md, f, g)
    let mut history = Vec::new();
    let mut accepted_steps = 0usize;
    let mut last_reduction = None;

    for k in 1..=cfg.n_ag {
        let alpha = alpha_k(k);
        let x_md = if k == 1 {
            x.clone()
        } else {
            &x_ag * (1.0 - alpha) + &x * alpha
        };
        let (f_md, g_md) = objective(&x_md);
        if !f_md.is_finite() || g_md.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite cost or gradient in AGD run", None));
        }
        let g_norm = g_md.norm();
        history.push((f_md, g_norm));

        if k == 1 && g_norm == 0.0 {
            return Ok(AgdOutcome {
                x: x_md,
                cost: f_md,
                grad_norm: 0.0,
                reason: StopReason::ZeroGradient,
                iterations: 1,
                accepted_steps: 0,
                last_reduction: None,
                restart: None,
                history,
            });
        }

        if let Some((ref md_p, f_p, ref g_p)) = md_prev {
            let step = &x_md - md_p;
            let ared = f_p - f_md;
            last_reduction = Some(ared);
            if acceptance_active && step.norm_squared() > 0.0 {
                match acc_break(ared, g_p, &step, lip0, cfg) {
                    StepVerdict::Continue => accepted_steps += 1,
                    verdict => {
                        let reason = if verdict == StepVerdict::RestartLow {
                            StopReason::RestartLow
                        } else {
                            StopReason::RestartUp
                        };
                        // A rejected step that still reduced the cost is kept
                        // as the restart point; a step that increased it is
                        // rolled back, so runaway steps from a bad estimate
                        // are never adopted.
                        let (x_out, f_out, g_out) = if ared > 0.0 {
                            (x_md, f_md, g_norm)
                        } else {
                            (md_p.clone(), f_p, g_p.norm())
                        };
                        return Ok(AgdOutcome {
                            x: x_out,
                            cost: f_out,
                            grad_norm: g_out,
                            reason,
                            iterations: k,
                            accepted_steps,
                            last_reduction,
                            restart: Some(RestartContext {
                                x: md_p.clone(),
                                grad: g_md,
                                grad_prev: g_p.clone(),
                                step,
                                ared,
                                k,
                            }),
                            history,
                        });
                    }
                }
            }
            if ared.abs() < cfg.f_tol * (1.0 + f_md.abs()) || step.norm() < cfg.theta_tol {
                return Ok(AgdOutcome {
                    x: x_md,
                    cost: f_md,
                    grad_norm: g_norm,
                    reason: StopReason::Converged,
                    iterations: k,
                    accepted_steps,
                    last_reduction,
                    restart: None,
                    history,
                });
            }
        }

        let lambda = lambda_k(cfg.step_rule, k, beta, cfg.theta2, rng);
        x -= &g_md * lambda;
        x_ag = &x_md - &g_md * beta;
        md_prev = Some((x_md, f_md, g_md));
    }

    let (x_md, f_md, g_md) = md_prev.expect("n_ag >= 1");
    Ok(AgdOutcome {
        grad_norm: g_md.norm(),
        x: x_md,
        cost: f_md,
        reason: StopReason::MaxIterations,
        iterations: cfg.n_ag,
        accepted_steps,
        last_reduction,
        restart: None,
        history,
    })
}

/// ϖ̲_k coefficient of the shortfall re-estimation at iteration `k`.
pub fn shortfall_floor(k: usize, grad_norm_sq: f64, cfg: &AgdConfig) -> f64 {
    let a = (2.0 * cfg.theta2 + k as f64 + 1.0) / (cfg.theta1 * (k as f64 + 1.0));
    let b = 1.0 - a - cfg.theta2 * cfg.theta2 / cfg.theta1;
    a * b * grad_norm_sq
}

#[derive(Debug, Clone, Copy)]
pub struct Reestimate {
    pub lipschitz: f64,
    /// Set when a non-positive or degenerate update forced a fallback.
    pub warned: bool,
    /// Cost evaluations spent.
    pub evals: usize,
}

/// Grow the Lipschitz estimate after an insufficient-reduction rejection.
///
/// Iterates the quadratic-model update until the probe step achieves at
/// least its floor reduction. The slope at infinite stiffness is measured
/// once by a directional finite difference. A non-negative slope falls back
/// to solving the violated acceptance constraint with equality; non-positive
/// updates double the estimate instead.
pub fn reestimate_low<F>(
    mut objective: F,
    ctx: &RestartContext,
    lip: f64,
    cfg: &AgdConfig,
) -> Result<Reestimate>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let c = (1.0 + cfg.theta2) / cfg.theta1;
    let g = &ctx.grad;
    let gn2 = g.norm_squared();
    if gn2 == 0.0 {
        return Ok(Reestimate { lipschitz: lip, warned: true, evals: 0 });
    }
    let f0 = objective(&ctx.x);
    let mut evals = 1;

    // slope of L ↦ F(x − (c/L)g) in u = 1/L at u → 0
    let h_u = 1e-8;
    let probe = &ctx.x - g * (h_u * c);
    let phi_dot_inf = (objective(&probe) - f0) / h_u;
    evals += 1;

    let floor = shortfall_floor(ctx.k, gn2, cfg);
    let mut lipschitz = lip;
    let mut warned = false;

    if phi_dot_inf >= 0.0 {
        // Boundary of the violated constraint: the estimate at which the
        // rejected step would have been exactly acceptable.
        let descent = -ctx.grad_prev.dot(&ctx.step);
        let sn2 = ctx.step.norm_squared();
        let boundary = (descent - ctx.ared) / (0.5 * cfg.c_low * sn2);
        if boundary.is_finite() && boundary > 0.0 {
            return Ok(Reestimate { lipschitz: boundary.max(lip), warned: false, evals });
        }
        return Ok(Reestimate { lipschitz: lip * 2.0, warned: true, evals });
    }

    for _ in 0..cfg.max_reestimates {
        let step = g * (c / lipschitz);
        let phi = objective(&(&ctx.x - step)) - f0;
        evals += 1;
        // Stop once the probe step reduces the cost by its floor amount.
        if -phi >= floor / lipschitz {
            break;
        }
        let numerator = lipschitz * phi - c * phi_dot_inf;
        let denominator = -0.5 * (c * phi_dot_inf + floor);
        let next = lipschitz * numerator / denominator;
        if !next.is_finite() || next <= 0.0 {
            lipschitz *= 2.0;
            warned = true;
        } else {
            lipschitz = next;
        }
    }
    // Insufficient reduction demands a larger hull: never return an estimate
    // at or below the rejected one.
    if lipschitz <= lip {
        lipschitz = lip * 2.0;
        warned = true;
    }
    Ok(Reestimate { lipschitz, warned, evals })
}

/// Shrink the Lipschitz estimate after an over-damped rejection by sampling
/// between the gradient-variation upper bound and the acceptance-boundary
/// lower bound.
pub fn reestimate_up(
    ctx: &RestartContext,
    lip: f64,
    cfg: &AgdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Reestimate> {
    let sn = ctx.step.norm();
    if sn == 0.0 {
        return Err(Error::parameter("zero step norm in Lipschitz re-estimation"));
    }
    let dg = (&ctx.grad - &ctx.grad_prev).norm();
    if dg == 0.0 {
        return Ok(Reestimate { lipschitz: lip, warned: true, evals: 0 });
    }
    let upper = dg / (cfg.c_up * sn);
    let descent = -ctx.grad_prev.dot(&ctx.step);
    let lower_raw = (descent - ctx.ared) / (0.5 * cfg.c_up * sn * sn);
    let lower = lower_raw.max(upper * 1e-6);
    if lower >= upper {
        return Ok(Reestimate { lipschitz: upper, warned: false, evals: 0 });
    }
    let lipschitz = lower + (upper - lower) * rng.random::<f64>();
    Ok(Reestimate { lipschitz, warned: false, evals: 0 })
}

/// Tracks Lipschitz growth between accepted steps for the minimum-approach
/// test. The reference is the first re-estimate after the latest accepted
/// step; later estimates are compared against it.
#[derive(Debug, Clone, Default)]
pub struct LipTracker {
    pub current: f64,
    reference: Option<f64>,
    count_since_ref: usize,
    pub forced: bool,
}

impl LipTracker {
    pub fn new(initial: f64) -> Self {
        LipTracker {
            current: initial,
            reference: None,
            count_since_ref: 0,
            forced: false,
        }
    }

    /// Record a re-estimation (restart).
    pub fn on_reestimate(&mut self, new_lip: f64, exhausted_budget: bool) {
        if self.reference.is_none() {
            self.reference = Some(new_lip);
        }
        self.count_since_ref += 1;
        self.current = new_lip;
        if exhausted_budget {
            self.forced = true;
        }
    }

    /// Reset the reference after a run that made accepted progress.
    pub fn on_accepted_progress(&mut self) {
        self.reference = None;
        self.count_since_ref = 0;
    }

    pub fn expansion_triggered(&self, l_tol: f64) -> bool {
        match self.reference {
            Some(r) if self.count_since_ref > 1 => self.current >= r * l_tol,
            _ => false,
        }
    }
}

/// Local-minimum detection: true when the descent slope is no longer
/// meaningfully negative relative to the recent reduction, or when the
/// Lipschitz estimate has over-expanded since its post-restart reference.
pub fn min_approach(
    tracker: &LipTracker,
    phi_slope: Option<f64>,
    ared: Option<f64>,
    cfg: &AgdConfig,
) -> bool {
    if tracker.forced {
        return true;
    }
    if let (Some(slope), Some(ared)) = (phi_slope, ared) {
        if slope >= ared.abs() * cfg.phi_tol {
            return true;
        }
    }
    tracker.expansion_triggered(cfg.l_tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MinimizeReason {
    Converged,
    MinApproach,
    Budget,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub x: DVector<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    pub reason: MinimizeReason,
    pub iterations: usize,
    pub restarts: usize,
    pub history: Vec<(f64, f64)>,
}

/// Restarted minimization driver: run, re-estimate on rejection, detect
/// minimum approach. `max_restarts` bounds the number of re-entries.
pub fn lreagd_minimize<F>(
    mut objective: F,
    x0: &DVector<f64>,
    cfg: &AgdConfig,
    max_restarts: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MinimizeOutcome>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    cfg.validate()?;
    let (_, g0) = objective(x0);
    let mut tracker = LipTracker::new(g0.norm().max(1e-8));
    let mut x = x0.clone();
    let mut iterations = 0;
    let mut restarts = 0;
    let mut history = Vec::new();
    let mut last_ared: Option<f64> = None;

    loop {
        let outcome = agd_run(&mut objective, &x, tracker.current, cfg, rng)?;
        iterations += outcome.iterations;
        history.extend(outcome.history.iter().copied());
        x = outcome.x;
        if outcome.accepted_steps > 0 {
            tracker.on_accepted_progress();
        }
        last_ared = outcome.last_reduction.or(last_ared);
        match outcome.reason {
            StopReason::Converged | StopReason::ZeroGradient => {
                return Ok(MinimizeOutcome {
                    x,
                    cost: outcome.cost,
                    grad_norm: outcome.grad_norm,
                    reason: MinimizeReason::Converged,
                    iterations,
                    restarts,
                    history,
                });
            }
            StopReason::MaxIterations => {
                return Ok(MinimizeOutcome {
                    x,
                    cost: outcome.cost,
                    grad_norm: outcome.grad_norm,
                    reason: MinimizeReason::Budget,
                    iterations,
                    restarts,
                    history,
                });
            }
            StopReason::RestartLow | StopReason::RestartUp => {
                let ctx = outcome.restart.as_ref().expect("restart context");
                let re = if outcome.reason == StopReason::RestartLow {
                    reestimate_low(|v| objective(v).0, ctx, tracker.current, cfg)?
                } else {
                    reestimate_up(ctx, tracker.current, cfg, rng)?
                };
                restarts += 1;
                tracker.on_reestimate(re.lipschitz, restarts >= cfg.max_reestimates);

                // Slope probe for the minimum-approach test.
                let g = &ctx.grad;
                let gn = g.norm();
                let slope = if gn > 0.0 {
                    let h_u = 1e-8;
                    let c = (1.0 + cfg.theta2) / cfg.theta1;
                    let f0 = objective(&ctx.x).0;
                    (objective(&(&ctx.x - g * (h_u * c))).0 - f0) / h_u
                } else {
                    0.0
                };
                if min_approach(&tracker, Some(slope), last_ared, cfg) || restarts >= max_restarts
                {
                    let reason = if restarts >= max_restarts {
                        MinimizeReason::Budget
                    } else {
                        MinimizeReason::MinApproach
                    };
                    return Ok(MinimizeOutcome {
                        x,
                        cost: outcome.cost,
                        grad_norm: outcome.grad_norm,
                        reason,
                        iterations,
                        restarts,
                        history,
                    });
                }
            }
        }
    }
}
