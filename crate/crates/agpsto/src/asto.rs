//! Adaptive stochastic trajectory optimization: sample candidate trajectories
//! from the current GP policy (uniform fallback when the covariance is
//! blown up), weight them by cost, extract the low-cost subset, and learn an
//! updated policy by a moving-average rule. On return the original GP is
//! conditioned on the learned trajectory.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::parallel::maybe_par_map;
use crate::trajgp::{condition, ConditioningSpec, GPModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LearnMode {
    /// Accelerated moving averaging (three-iterate scheme).
    Ama,
    /// Plain exponential moving averaging.
    Ema,
    /// Bias-corrected exponential moving averaging.
    QAdam,
}

#[derive(Debug, Clone, Serialize)]
pub struct AstoConfig {
    /// Samples per round (fresh draws shrink to `k_samples − m_star` after
    /// the first round; the retained set fills the difference).
    pub k_samples: usize,
    /// Low-cost samples retained for policy updates and reuse.
    pub m_star: usize,
    /// Cost-weighting sharpness.
    pub h_p: f64,
    /// Reward smoothness constant for the accelerated learner.
    pub l_r: f64,
    pub mode: LearnMode,
    /// EMA / bias-corrected rates.
    pub alpha_mu: f64,
    pub alpha_kappa: f64,
    /// Frobenius-norm threshold above which sampling falls back to uniform;
    /// `None` derives `‖θ_max − θ_min‖²/1.25` from the limit box.
    pub k_upper_tol: Option<f64>,
    /// Frobenius-norm threshold under which the policy has collapsed.
    pub k_lower_tol: f64,
    /// Inclusive round-budget range; drawn once per run.
    pub n_asto: (usize, usize),
    /// Relative improvement tolerance of the acceptance gate.
    pub cf_tol: f64,
    /// Return-conditioning noise as a scale of the prior marginal covariance.
    pub k_eps_scale: f64,
    /// Feasibility threshold on the unpenalized obstacle cost.
    pub g_tol: f64,
    /// Reweight retained samples by their density ratio under the current
    /// policy; disabled gives pure softmax weights.
    pub reweight_retained: bool,
}

impl Default for AstoConfig {
    fn default() -> Self {
        AstoConfig {
            k_samples: 12,
            m_star: 6,
            h_p: 10.0,
            l_r: 10.0,
            mode: LearnMode::Ama,
            alpha_mu: 0.1,
            alpha_kappa: 0.1,
            k_upper_tol: None,
            k_lower_tol: 1e-2,
            n_asto: (5, 15),
            cf_tol: 0.0,
            k_eps_scale: 0.25,
            g_tol: 1e-4,
            reweight_retained: true,
        }
    }
}

impl AstoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_star > 0 && self.m_star < self.k_samples) {
            return Err(Error::parameter("require 0 < m_star < k_samples"));
        }
        if self.h_p < 0.0 || !(self.l_r > 0.0) {
            return Err(Error::parameter("require h_p ≥ 0 and l_r > 0"));
        }
        if let Some(up) = self.k_upper_tol {
            if !(self.k_lower_tol < up) {
                return Err(Error::parameter("require k_lower_tol < k_upper_tol"));
            }
        }
        if self.n_asto.0 == 0 || self.n_asto.0 > self.n_asto.1 {
            return Err(Error::parameter("invalid round-budget range"));
        }
        match self.mode {
            LearnMode::Ema => {
                if !(self.alpha_mu > 0.0 && self.alpha_mu < 1.0)
                    || !(self.alpha_kappa > 0.0 && self.alpha_kappa < 1.0)
                {
                    return Err(Error::parameter("EMA rates must lie in (0, 1)"));
                }
            }
            LearnMode::QAdam => {
                let limit = (3.0 - 5.0f64.sqrt()) / 2.0;
                if !(self.alpha_mu > 0.0 && self.alpha_mu < limit)
                    || !(self.alpha_kappa > 0.0 && self.alpha_kappa < limit)
                {
                    return Err(Error::parameter(
                        "bias-corrected rates must lie in (0, (3 − √5)/2)",
                    ));
                }
            }
            LearnMode::Ama => {}
        }
        Ok(())
    }
}

/// One sample evaluation: total cost and the unpenalized obstacle part.
#[derive(Debug, Clone, Copy)]
pub struct SampleEval {
    pub total: f64,
    pub obstacle_unit: f64,
}

/// Normalized cost weights: softmax of `−h_p (F − min) / (max − min)`.
/// Degenerate spreads give uniform weights.
pub fn weights(costs: &[f64], h_p: f64) -> Vec<f64> {
    weights_with_density_shift(costs, &vec![0.0; costs.len()], h_p)
}

/// Weights with per-sample log-density corrections (current policy density
/// minus density at draw time); zero shifts reduce to plain softmax.
pub fn weights_with_density_shift(costs: &[f64], log_shift: &[f64], h_p: f64) -> Vec<f64> {
    let k = costs.len();
    assert_eq!(log_shift.len(), k);
    if k == 0 {
        return Vec::new();
    }
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = max - min;
    let mut logits: Vec<f64> = if spread <= 0.0 || h_p == 0.0 {
        log_shift.to_vec()
    } else {
        costs
            .iter()
            .zip(log_shift.iter())
            .map(|(&f, &s)| -h_p * (f - min) / spread + s)
            .collect()
    };
    let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return vec![1.0 / k as f64; k];
    }
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - peak).exp();
        sum += *l;
    }
    if sum <= 0.0 || !sum.is_finite() {
        return vec![1.0 / k as f64; k];
    }
    logits.iter().map(|l| l / sum).collect()
}

/// Weighted-moment policy over the `m_star` lowest-cost samples (ties by
/// index). Returns the mean, covariance, selected indices, and whether the
/// covariance degenerated to (numerically) zero.
pub fn em_policy(
    samples: &[DVector<f64>],
    costs: &[f64],
    weights: &[f64],
    m_star: usize,
) -> Result<(DVector<f64>, DMatrix<f64>, Vec<usize>, bool)> {
    if samples.is_empty() || samples.len() != costs.len() || samples.len() != weights.len() {
        return Err(Error::parameter("inconsistent EM inputs"));
    }
    let m_star = m_star.min(samples.len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| costs[a].partial_cmp(&costs[b]).unwrap().then(a.cmp(&b)));
    let selected: Vec<usize> = order.into_iter().take(m_star).collect();

    let dim = samples[0].len();
    let wsum: f64 = selected.iter().map(|&i| weights[i]).sum();
    let p: Vec<f64> = if wsum > 0.0 {
        selected.iter().map(|&i| weights[i] / wsum).collect()
    } else {
        vec![1.0 / m_star as f64; m_star]
    };
    let mut mean = DVector::zeros(dim);
    for (slot, &i) in selected.iter().enumerate() {
        mean += &samples[i] * p[slot];
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (slot, &i) in selected.iter().enumerate() {
        let r = &samples[i] - &mean;
        cov += (&r * r.transpose()) * p[slot];
    }
    linalg::symmetrize(&mut cov);
    let degenerate = cov.norm() < 1e-14 * (1.0 + mean.norm_squared());
    Ok((mean, cov, selected, degenerate))
}

/// Mean/covariance iterate triple of the policy learner.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub md_mean: DVector<f64>,
    pub md_cov: DMatrix<f64>,
    ag_mean: DVector<f64>,
    ag_cov: DMatrix<f64>,
    base_mean: DVector<f64>,
    base_cov: DMatrix<f64>,
    /// Completed update rounds.
    pub n: usize,
}

impl LearnerState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        LearnerState {
            md_mean: mean.clone(),
            md_cov: cov.clone(),
            ag_mean: mean.clone(),
            ag_cov: cov.clone(),
            base_mean: mean,
            base_cov: cov,
            n: 0,
        }
    }

    pub fn ag_mean(&self) -> &DVector<f64> {
        &self.ag_mean
    }

    /// One three-iterate update with explicit coefficients: the quasi-
    /// gradient pulls the ag iterate by `beta` and the base iterate by
    /// `lambda`; the next md iterate mixes them by `alpha`. All three
    /// learning rules are schedules over (α, β, λ).
    pub fn triple_step(
        &mut self,
        target_mean: &DVector<f64>,
        target_cov: &DMatrix<f64>,
        alpha: f64,
        beta: f64,
        lambda: f64,
    ) {
        let dmean = target_mean - &self.md_mean;
        let dcov = target_cov - &self.md_cov;
        let ag_mean = &self.md_mean + &dmean * beta;
        let ag_cov = &self.md_cov + &dcov * beta;
        let base_mean = &self.base_mean + &dmean * lambda;
        let base_cov = &self.base_cov + &dcov * lambda;
        self.md_mean = &ag_mean * (1.0 - alpha) + &base_mean * alpha;
        self.md_cov = &ag_cov * (1.0 - alpha) + &base_cov * alpha;
        linalg::symmetrize(&mut self.md_cov);
        self.ag_mean = ag_mean;
        self.ag_cov = ag_cov;
        self.base_mean = base_mean;
        self.base_cov = base_cov;
        self.n += 1;
    }

    /// Accelerated moving-average update with an explicit over-relaxation
    /// step; `lambda = beta` reduces to a plain averaging step.
    pub fn ama_step_with_lambda(
        &mut self,
        target_mean: &DVector<f64>,
        target_cov: &DMatrix<f64>,
        beta: f64,
        lambda: f64,
    ) {
        let alpha = 2.0 / (self.n as f64 + 2.0);
        self.triple_step(target_mean, target_cov, alpha, beta, lambda);
    }

    pub fn ama_step(
        &mut self,
        target_mean: &DVector<f64>,
        target_cov: &DMatrix<f64>,
        l_r: f64,
        rng: &mut ChaCha8Rng,
    ) {
        let alpha = 2.0 / (self.n as f64 + 2.0);
        let beta = 1.0 / l_r;
        let lambda = beta * (1.0 + 0.25 * alpha * rng.random::<f64>());
        self.triple_step(target_mean, target_cov, alpha, beta, lambda);
    }

    /// Plain exponential averaging: (α, β, λ) all equal, which collapses the
    /// md update to the convex combination `(1−α)·old + α·target`.
    pub fn ema_step(
        &mut self,
        target_mean: &DVector<f64>,
        target_cov: &DMatrix<f64>,
        alpha_mu: f64,
        alpha_kappa: f64,
    ) {
        // separate rates for mean and covariance
        let dmean = target_mean - &self.md_mean;
        let dcov = target_cov - &self.md_cov;
        let ag_mean = &self.md_mean + &dmean * alpha_mu;
        let ag_cov = &self.md_cov + &dcov * alpha_kappa;
        let base_mean = &self.base_mean + &dmean * alpha_mu;
        let base_cov = &self.base_cov + &dcov * alpha_kappa;
        self.md_mean = &ag_mean * (1.0 - alpha_mu) + &base_mean * alpha_mu;
        self.md_cov = &ag_cov * (1.0 - alpha_kappa) + &base_cov * alpha_kappa;
        linalg::symmetrize(&mut self.md_cov);
        self.ag_mean = ag_mean;
        self.ag_cov = ag_cov;
        self.base_mean = base_mean;
        self.base_cov = base_cov;
        self.n += 1;
    }

    /// Bias-corrected averaging: β_n = (1−α)ⁿ, λ_n = 1 + β_n, so the current
    /// target enters the md update with weight `(1−α)ⁿ + α` while the
    /// exponentially forgotten history corrects the remainder.
    pub fn qadam_step(
        &mut self,
        target_mean: &DVector<f64>,
        target_cov: &DMatrix<f64>,
        alpha_mu: f64,
        alpha_kappa: f64,
    ) {
        let n = (self.n + 1) as i32;
        if (alpha_mu - alpha_kappa).abs() < 1e-15 {
            let beta = (1.0 - alpha_mu).powi(n);
            self.triple_step(target_mean, target_cov, alpha_mu, beta, 1.0 + beta);
        } else {
            // distinct rates: run the two coordinates of the triple
            // separately through the same schedule
            let beta_mu = (1.0 - alpha_mu).powi(n);
            let beta_ka = (1.0 - alpha_kappa).powi(n);
            let dmean = target_mean - &self.md_mean;
            let dcov = target_cov - &self.md_cov;
            let ag_mean = &self.md_mean + &dmean * beta_mu;
            let ag_cov = &self.md_cov + &dcov * beta_ka;
            let base_mean = &self.base_mean + &dmean * (1.0 + beta_mu);
            let base_cov = &self.base_cov + &dcov * (1.0 + beta_ka);
            self.md_mean = &ag_mean * (1.0 - alpha_mu) + &base_mean * alpha_mu;
            self.md_cov = &ag_cov * (1.0 - alpha_kappa) + &base_cov * alpha_kappa;
            linalg::symmetrize(&mut self.md_cov);
            self.ag_mean = ag_mean;
            self.ag_cov = ag_cov;
            self.base_mean = base_mean;
            self.base_cov = base_cov;
            self.n += 1;
        }
    }

    pub fn step(
        &mut self,
        cfg: &AstoConfig,
        target_mean: &DVector<f64>,
        target_cov: &DMatrix<f64>,
        rng: &mut ChaCha8Rng,
    ) {
        match cfg.mode {
            LearnMode::Ama => self.ama_step(target_mean, target_cov, cfg.l_r, rng),
            LearnMode::Ema => self.ema_step(target_mean, target_cov, cfg.alpha_mu, cfg.alpha_kappa),
            LearnMode::QAdam => {
                self.qadam_step(target_mean, target_cov, cfg.alpha_mu, cfg.alpha_kappa)
            }
        }
    }
}

/// A drawn sample with its evaluation and draw-time log density.
#[derive(Debug, Clone)]
struct Sample {
    vec: DVector<f64>,
    total: f64,
    obstacle_unit: f64,
    log_density_draw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AstoStop {
    /// A drawn sample was feasible.
    FeasibleSample,
    /// The policy mean became feasible.
    FeasibleModel,
    /// Round budget exhausted.
    Budget,
    /// Policy covariance collapsed below the lower tolerance.
    CovarianceCollapsed,
    /// Policy covariance left the PSD cone.
    CovarianceIndefinite,
}

#[derive(Debug, Clone, Serialize)]
pub struct AstoReport {
    pub rounds: usize,
    pub evaluations: usize,
    pub reason: AstoStop,
    /// Whether the returned trajectory improves on the incoming mean (on the
    /// non-feasible termination paths this is the acceptance-gate verdict).
    pub accepted: bool,
    pub uniform_rounds: usize,
    /// Sampling covariance needed eigenvalue clipping at least once.
    pub clipped_covariance: bool,
}

#[derive(Debug, Clone)]
pub struct AstoOutcome {
    /// Best coordinates found (the incoming mean when rejected).
    pub best: DVector<f64>,
    /// GP for the continuing run: conditioned on `best` when accepted,
    /// otherwise the incoming model.
    pub gp: GPModel,
    pub report: AstoReport,
}

/// Condition `gp0` on the learned coordinates `theta_star` with explicit
/// observation noise.
pub fn modify_gp_on_return(
    gp0: &GPModel,
    coords: &[usize],
    theta_star: &DVector<f64>,
    k_eps: &DMatrix<f64>,
) -> Result<GPModel> {
    if theta_star.len() != coords.len() {
        return Err(Error::Dimension {
            what: "learned coordinates",
            expected: coords.len(),
            got: theta_star.len(),
        });
    }
    let mut c = DMatrix::zeros(coords.len(), gp0.dim());
    for (row, &i) in coords.iter().enumerate() {
        c[(row, i)] = 1.0;
    }
    let spec = ConditioningSpec::new(c, theta_star.clone(), k_eps.clone())?;
    condition(gp0, &spec)
}

/// Return-conditioning noise: `scale` times the prior marginal covariance
/// over the sampled coordinates.
pub fn k_eps_from_scale(gp0: &GPModel, coords: &[usize], scale: f64) -> DMatrix<f64> {
    let (_, marginal) = gp0.marginal(coords);
    marginal * scale
}

/// Gaussian log-density (pseudo-inverse on degenerate directions).
fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let r = x - mean;
    let (prec, _) = linalg::pinv(cov);
    let (log_det, rank) = linalg::psd_log_det(cov);
    let maha = r.dot(&(prec * &r));
    -0.5 * (maha + log_det + rank as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Draw one batch from the policy (uniform over the limit box when the
/// covariance norm exceeds the upper tolerance). Samples are clamped into
/// the box. Returns the draws with their log densities and whether
/// eigenvalue clipping was needed.
pub fn sample_batch(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    count: usize,
    k_upper: f64,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> (Vec<(DVector<f64>, f64)>, bool, bool) {
    let dim = mean.len();
    let uniform = cov.norm() >= k_upper;
    let (factor, clipped) = if uniform {
        (DMatrix::zeros(dim, dim), false)
    } else {
        linalg::psd_sqrt(cov)
    };
    let uniform_log_density: f64 = -(0..dim).map(|j| (hi[j] - lo[j]).ln()).sum::<f64>();
    let seeds: Vec<u64> = (0..count).map(|_| rng.random()).collect();
    let draws = maybe_par_map(seeds, |seed| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        if uniform {
            let v = DVector::from_fn(dim, |j, _| lo[j] + (hi[j] - lo[j]) * r.random::<f64>());
            (v, uniform_log_density)
        } else {
            let z = DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal));
            let mut v = mean + &factor * z;
            for j in 0..dim {
                v[j] = v[j].clamp(lo[j], hi[j]);
            }
            let ld = gaussian_log_density(&v, mean, cov);
            (v, ld)
        }
    });
    (draws, uniform, clipped)
}

/// Run the sampling loop over the coordinate subset `coords` of `gp0`.
/// `eval` scores candidate coordinate vectors (total cost and unpenalized
/// obstacle cost). `lo`/`hi` bound each sampled coordinate.
pub fn asto_run<F>(
    eval: F,
    gp0: &GPModel,
    coords: &[usize],
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    cfg: &AstoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AstoOutcome>
where
    F: Fn(&DVector<f64>) -> Result<SampleEval> + Sync + Send,
{
    cfg.validate()?;
    let dim = coords.len();
    if lo.len() != dim || hi.len() != dim {
        return Err(Error::Dimension {
            what: "sampling box",
            expected: dim,
            got: lo.len(),
        });
    }
    let (mu0, k0) = gp0.marginal(coords);
    let k_upper = cfg
        .k_upper_tol
        .unwrap_or_else(|| (hi - lo).norm_squared() / 1.25);
    let n_rounds = if cfg.n_asto.0 == cfg.n_asto.1 {
        cfg.n_asto.0
    } else {
        rng.random_range(cfg.n_asto.0..=cfg.n_asto.1)
    };

    let f_mu0 = eval(&mu0)?;
    let mut evaluations = 1usize;
    let mut learner = LearnerState::new(mu0.clone(), k0.clone());
    let mut retained: Vec<Sample> = Vec::new();
    let mut best: (DVector<f64>, f64) = (mu0.clone(), f_mu0.total);
    let mut uniform_rounds = 0usize;
    let mut clipped_any = false;

    let finish = |best: (DVector<f64>, f64), reason: AstoStop, rounds, evaluations, uniform_rounds, clipped| -> Result<AstoOutcome> {
        // Acceptance gate: strict improvement beyond the relative tolerance;
        // a tie (nothing beat the incoming mean) keeps the original model.
        let accepted = f_mu0.total - best.1 > f_mu0.total * cfg.cf_tol;
        if accepted {
            let k_eps = k_eps_from_scale(gp0, coords, cfg.k_eps_scale);
            let gp = modify_gp_on_return(gp0, coords, &best.0, &k_eps)?;
            Ok(AstoOutcome {
                best: best.0,
                gp,
                report: AstoReport {
                    rounds,
                    evaluations,
                    reason,
                    accepted: true,
                    uniform_rounds,
                    clipped_covariance: clipped,
                },
            })
        } else {
            Ok(AstoOutcome {
                best: mu0.clone(),
                gp: gp0.clone(),
                report: AstoReport {
                    rounds,
                    evaluations,
                    reason,
                    accepted: false,
                    uniform_rounds,
                    clipped_covariance: clipped,
                },
            })
        }
    };

    let feasible_return = |theta: DVector<f64>,
                           reason: AstoStop,
                           rounds,
                           evaluations,
                           uniform_rounds,
                           clipped|
     -> Result<AstoOutcome> {
        let k_eps = k_eps_from_scale(gp0, coords, cfg.k_eps_scale);
        let gp = modify_gp_on_return(gp0, coords, &theta, &k_eps)?;
        Ok(AstoOutcome {
            best: theta,
            gp,
            report: AstoReport {
                rounds,
                evaluations,
                reason,
                accepted: true,
                uniform_rounds,
                clipped_covariance: clipped,
            },
        })
    };

    for round in 1..=n_rounds {
        // Policy-mean feasibility first: a feasible renewed model (or the
        // incoming mean on the first round) returns without sampling.
        let mean_eval = if round == 1 {
            f_mu0
        } else {
            let e = eval(&learner.md_mean)?;
            evaluations += 1;
            e
        };
        if mean_eval.total < best.1 {
            best = (learner.md_mean.clone(), mean_eval.total);
        }
        if mean_eval.obstacle_unit <= cfg.g_tol {
            return feasible_return(
                learner.md_mean.clone(),
                AstoStop::FeasibleModel,
                round,
                evaluations,
                uniform_rounds,
                clipped_any,
            );
        }

        let draw_count = if round == 1 {
            cfg.k_samples
        } else {
            cfg.k_samples - cfg.m_star
        };
        let (draws, was_uniform, clipped) = sample_batch(
            &learner.md_mean,
            &learner.md_cov,
            draw_count,
            k_upper,
            lo,
            hi,
            rng,
        );
        if was_uniform {
            uniform_rounds += 1;
        }
        clipped_any |= clipped;

        let evals: Vec<Result<SampleEval>> =
            maybe_par_map(draws.iter().map(|(v, _)| v.clone()).collect(), |v| eval(&v));
        evaluations += draw_count;
        let mut fresh = Vec::with_capacity(draw_count);
        for ((v, ld), e) in draws.into_iter().zip(evals.into_iter()) {
            let e = e?;
            fresh.push(Sample {
                vec: v,
                total: e.total,
                obstacle_unit: e.obstacle_unit,
                log_density_draw: ld,
            });
        }
        // First feasible sample in draw order returns immediately.
        if let Some(s) = fresh.iter().find(|s| s.obstacle_unit <= cfg.g_tol) {
            return feasible_return(
                s.vec.clone(),
                AstoStop::FeasibleSample,
                round,
                evaluations,
                uniform_rounds,
                clipped_any,
            );
        }

        let mut batch = retained;
        batch.extend(fresh);
        for s in &batch {
            if s.total < best.1 {
                best = (s.vec.clone(), s.total);
            }
        }

        let costs: Vec<f64> = batch.iter().map(|s| s.total).collect();
        let w = if cfg.reweight_retained {
            let shifts: Vec<f64> = batch
                .iter()
                .map(|s| {
                    gaussian_log_density(&s.vec, &learner.md_mean, &learner.md_cov)
                        - s.log_density_draw
                })
                .collect();
            weights_with_density_shift(&costs, &shifts, cfg.h_p)
        } else {
            weights(&costs, cfg.h_p)
        };
        let samples: Vec<DVector<f64>> = batch.iter().map(|s| s.vec.clone()).collect();
        let (target_mean, target_cov, selected, _degenerate) =
            em_policy(&samples, &costs, &w, cfg.m_star)?;
        retained = selected.into_iter().map(|i| batch[i].clone()).collect();

        learner.step(cfg, &target_mean, &target_cov, rng);

        let k_norm = learner.md_cov.norm();
        let min_eig = linalg::min_eigenvalue(&learner.md_cov);
        if min_eig < -1e-12 {
            return finish(best, AstoStop::CovarianceIndefinite, round, evaluations, uniform_rounds, clipped_any);
        }
        if k_norm <= cfg.k_lower_tol {
            return finish(best, AstoStop::CovarianceCollapsed, round, evaluations, uniform_rounds, clipped_any);
        }
        if round == n_rounds {
            return finish(best, AstoStop::Budget, round, evaluations, uniform_rounds, clipped_any);
        }
    }
    unreachable!("loop returns on its final round");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajgp::{build_prior, LtvSdeModel};
    use approx::assert_relative_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn weights_uniform_cases() {
        assert_eq!(weights(&[2.0, 2.0, 2.0], 10.0), vec![1.0 / 3.0; 3]);
        assert_eq!(weights(&[1.0, 5.0], 0.0), vec![0.5, 0.5]);
    }

    #[test]
    fn weights_two_sample_closed_form() {
        let w = weights(&[0.0, 1.0], 10.0);
        let e = (-10.0f64).exp();
        assert_relative_eq!(w[0], 1.0 / (1.0 + e), epsilon = 1e-12);
        assert_relative_eq!(w[1], e / (1.0 + e), epsilon = 1e-12);
    }

    #[test]
    fn weights_sum_to_one_and_permute() {
        let mut r = rng(41);
        for _ in 0..50 {
            let n = 2 + (r.random::<u32>() % 8) as usize;
            let costs: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 10.0).collect();
            let w = weights(&costs, 7.5);
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            // permutation equivariance: reverse
            let rev_costs: Vec<f64> = costs.iter().rev().cloned().collect();
            let w_rev = weights(&rev_costs, 7.5);
            for i in 0..n {
                assert_relative_eq!(w[i], w_rev[n - 1 - i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn em_policy_symmetric_pair() {
        let v = DVector::from_vec(vec![1.0, -2.0]);
        let samples = vec![v.clone(), -v.clone()];
        let (mean, cov, _, degenerate) =
            em_policy(&samples, &[1.0, 1.0], &[0.5, 0.5], 2).unwrap();
        assert!(mean.amax() < 1e-15);
        let expected = &v * v.transpose();
        assert!((cov - expected).amax() < 1e-12);
        assert!(!degenerate);
    }

    #[test]
    fn em_policy_matches_weighted_moment_oracle() {
        let mut r = rng(43);
        let samples: Vec<DVector<f64>> = (0..5)
            .map(|_| DVector::from_fn(3, |_, _| r.random::<f64>() * 4.0 - 2.0))
            .collect();
        let costs = vec![0.3, 0.1, 0.9, 0.2, 0.5];
        let w = weights(&costs, 5.0);
        let (mean, cov, selected, _) = em_policy(&samples, &costs, &w, 3).unwrap();
        // lowest three costs: indices 1, 3, 0
        assert_eq!(selected, vec![1, 3, 0]);
        let psum: f64 = selected.iter().map(|&i| w[i]).sum();
        let mut mean_o = DVector::zeros(3);
        for &i in &selected {
            mean_o += &samples[i] * (w[i] / psum);
        }
        let mut cov_o = DMatrix::zeros(3, 3);
        for &i in &selected {
            let r = &samples[i] - &mean_o;
            cov_o += (&r * r.transpose()) * (w[i] / psum);
        }
        assert!((mean - &mean_o).amax() < 1e-12);
        assert!((cov - &cov_o).amax() < 1e-12);
    }

    #[test]
    fn em_policy_stationarity_residuals() {
        // At the EM optimum: Σ p (θ − μ̂) = 0 and Σ p [𝒦̂ − (θ−μ̂)⊗²] = 0.
        let mut r = rng(47);
        for _ in 0..100 {
            let samples: Vec<DVector<f64>> = (0..6)
                .map(|_| DVector::from_fn(4, |_, _| r.random::<f64>() * 2.0 - 1.0))
                .collect();
            let costs: Vec<f64> = (0..6).map(|_| r.random::<f64>()).collect();
            let w = weights(&costs, 8.0);
            let (mean, cov, selected, _) = em_policy(&samples, &costs, &w, 4).unwrap();
            let psum: f64 = selected.iter().map(|&i| w[i]).sum();
            let mut r_mu = DVector::zeros(4);
            let mut r_k = DMatrix::zeros(4, 4);
            for &i in &selected {
                let p = w[i] / psum;
                let d = &samples[i] - &mean;
                r_mu += &d * p;
                r_k += (&cov - &d * d.transpose()) * p;
            }
            assert!(r_mu.amax() < 1e-10, "mean residual {}", r_mu.amax());
            assert!(r_k.amax() < 1e-10, "cov residual {}", r_k.amax());
        }
    }

    #[test]
    fn em_policy_covariance_psd() {
        let mut r = rng(53);
        for _ in 0..50 {
            let samples: Vec<DVector<f64>> = (0..7)
                .map(|_| DVector::from_fn(3, |_, _| r.random::<f64>()))
                .collect();
            let costs: Vec<f64> = (0..7).map(|_| r.random::<f64>()).collect();
            let w = weights(&costs, 10.0);
            let (_, cov, _, _) = em_policy(&samples, &costs, &w, 4).unwrap();
            assert!(crate::linalg::min_eigenvalue(&cov) >= -1e-10);
        }
    }

    #[test]
    fn em_policy_single_distinct_sample_degenerates() {
        let v = DVector::from_vec(vec![1.0, 1.0]);
        let samples = vec![v.clone(), v.clone(), v];
        let (_, cov, _, degenerate) =
            em_policy(&samples, &[1.0, 1.0, 1.0], &[0.4, 0.3, 0.3], 2).unwrap();
        assert!(degenerate);
        assert!(cov.norm() < 1e-14);
    }

    #[test]
    fn ama_zero_quasi_gradient_is_noop() {
        let mean = DVector::from_vec(vec![0.5, -0.5]);
        let cov = DMatrix::identity(2, 2);
        let mut state = LearnerState::new(mean.clone(), cov.clone());
        let mut r = rng(59);
        state.ama_step(&mean, &cov, 10.0, &mut r);
        assert!((&state.md_mean - &mean).amax() < 1e-15);
        assert!((&state.md_cov - &cov).amax() < 1e-15);
    }

    /// Unrolled three-iterate recursion as an independent oracle: tracks the
    /// history sum μ_{n−1} − μ^md_n = Σ_i Π_{j=i}^{n−1}(1−α_j)(λ_i−β)Δ_i.
    fn ama_md_trace_oracle(targets: &[f64], lambdas: &[f64], beta: f64, x0: f64) -> f64 {
        let n_steps = targets.len();
        let mut md = x0;
        let mut deltas: Vec<f64> = Vec::new(); // (λ_i − β)·Δ_i
        for n in 1..=n_steps {
            let alpha = 2.0 / (n as f64 + 1.0);
            let delta = targets[n - 1] - md;
            // history term Σ_{i=1}^{n−1} Π_{j=i}^{n−1}(1−α_j)(λ_i−β)Δ_i
            let mut hist = 0.0;
            for (i, dv) in deltas.iter().enumerate() {
                let mut prod = 1.0;
                for j in (i + 1)..=(n - 1) {
                    prod *= 1.0 - 2.0 / (j as f64 + 1.0);
                }
                hist += prod * dv;
            }
            let lam = lambdas[n - 1];
            md = md + (beta + alpha * (lam - beta)) * delta + alpha * hist;
            deltas.push((lam - beta) * delta);
        }
        md
    }

    #[test]
    fn ama_three_step_trace_matches_unrolled_oracle() {
        let beta = 0.1; // ℒ_R = 10
        let targets = [1.0, 0.4, -0.3];
        let lambdas = [0.115, 0.112, 0.108];
        let mut state = LearnerState::new(DVector::from_vec(vec![0.0]), DMatrix::zeros(1, 1));
        for (t, l) in targets.iter().zip(lambdas.iter()) {
            state.ama_step_with_lambda(
                &DVector::from_vec(vec![*t]),
                &DMatrix::zeros(1, 1),
                beta,
                *l,
            );
        }
        let oracle = ama_md_trace_oracle(&targets, &lambdas, beta, 0.0);
        assert_relative_eq!(state.md_mean[0], oracle, epsilon = 1e-12);

        // λ = β degenerates to plain averaging with rate β.
        let mut plain = LearnerState::new(DVector::from_vec(vec![0.0]), DMatrix::zeros(1, 1));
        let mut md = 0.0;
        for t in targets {
            plain.ama_step_with_lambda(
                &DVector::from_vec(vec![t]),
                &DMatrix::zeros(1, 1),
                beta,
                beta,
            );
            md += beta * (t - md);
        }
        assert_relative_eq!(plain.md_mean[0], md, epsilon = 1e-14);
    }

    #[test]
    fn ama_history_weights_match_gamma_ratio() {
        // Π_{j=i}^{n−1}(1 − α_j) = Γ_{n−1}/Γ_{i−1} for i ≥ 2 with
        // Γ_k = 2/(k(k+1)).
        let gamma = |k: usize| 2.0 / (k as f64 * (k as f64 + 1.0));
        for n in 3..20usize {
            for i in 2..n {
                let mut prod = 1.0;
                for j in i..n {
                    prod *= 1.0 - 2.0 / (j as f64 + 1.0);
                }
                let expected = gamma(n - 1) / gamma(i - 1);
                assert_relative_eq!(prod, expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ema_geometric_decay_exact() {
        let alpha = 0.3;
        let target = DVector::from_vec(vec![2.0]);
        let mut state = LearnerState::new(DVector::from_vec(vec![0.0]), DMatrix::zeros(1, 1));
        for n in 1..=20 {
            state.ema_step(&target, &DMatrix::zeros(1, 1), alpha, alpha);
            let expected = 2.0 * (1.0 - (1.0f64 - alpha).powi(n));
            assert_relative_eq!(state.md_mean[0], expected, epsilon = 1e-12);
        }
        // α = 1 → reaches the target in one step (boundary, test-only).
        let mut one = LearnerState::new(DVector::from_vec(vec![0.0]), DMatrix::zeros(1, 1));
        one.ema_step(&target, &DMatrix::zeros(1, 1), 1.0, 1.0);
        assert_eq!(one.md_mean[0], 2.0);
    }

    #[test]
    fn qadam_first_step_hits_target() {
        let mut state = LearnerState::new(DVector::from_vec(vec![0.2]), DMatrix::zeros(1, 1));
        let target = DVector::from_vec(vec![1.5]);
        state.qadam_step(&target, &DMatrix::zeros(1, 1), 0.1, 0.1);
        // (1−α)¹ + α = 1 and the history sum is empty.
        assert_relative_eq!(state.md_mean[0], 1.5, epsilon = 1e-14);
    }

    /// Closed form: md_{n+1} = target_n + α Σ_{i<n} (Δ_i − Δ_n)(1−α)^{n−i}
    /// with Δ_i the pre-update pull at round i.
    fn qadam_closed_form(targets: &[f64], alpha: f64, x0: f64) -> f64 {
        let mut md = x0;
        let mut hist: Vec<f64> = Vec::new();
        for n in 1..=targets.len() {
            let delta = targets[n - 1] - md;
            let mut acc = targets[n - 1];
            for (i, d) in hist.iter().enumerate() {
                let pw = (1.0 - alpha).powi((n - (i + 1)) as i32);
                acc += alpha * pw * (d - delta);
            }
            hist.push(delta);
            md = acc;
        }
        md
    }

    #[test]
    fn qadam_three_step_trace_matches_closed_form() {
        let alpha = 0.3;
        let targets = [1.0, 0.2, -0.6];
        let mut state = LearnerState::new(DVector::from_vec(vec![0.4]), DMatrix::zeros(1, 1));
        for t in targets {
            state.qadam_step(&DVector::from_vec(vec![t]), &DMatrix::zeros(1, 1), alpha, alpha);
        }
        let oracle = qadam_closed_form(&targets, alpha, 0.4);
        assert_relative_eq!(state.md_mean[0], oracle, epsilon = 1e-12);
    }

    #[test]
    fn single_reward_convergence_bounds() {
        // Concave quadratic reward R(x) = −(ℒ_R/2)‖x − x*‖² with the EM
        // target fixed at the optimum: each learner's measured convergence
        // must respect its stated bound. The gradient bounds are stated for
        // the quasi-gradient (target − iterate) the learners actually step
        // along.
        let l_r = 10.0;
        let target = DVector::from_vec(vec![1.0]);
        let x0 = DVector::from_vec(vec![0.0]);
        let d0 = 1.0f64;
        let r_gap0 = 0.5 * l_r * d0 * d0; // R* − R₀

        // EMA bound: min_n ‖∇R̂‖² ≤ (R*−R₀)/(α(1−αℒ)N)
        let alpha = 0.05;
        let mut ema = LearnerState::new(x0.clone(), DMatrix::zeros(1, 1));
        let mut min_g2 = f64::INFINITY;
        for n in 1..=50usize {
            ema.ema_step(&target, &DMatrix::zeros(1, 1), alpha, alpha);
            let g = target[0] - ema.md_mean[0];
            min_g2 = min_g2.min(g * g);
            let bound = r_gap0 / (alpha * (1.0 - alpha * l_r).max(1e-9) * n as f64);
            assert!(min_g2 <= bound, "EMA bound violated at n = {n}: {min_g2} > {bound}");
        }

        // Bias-corrected bound on the ag iterate:
        // R* − R(ag_N) ≤ ½(1−α)^{N−1}‖x₀ − x*‖².
        let alpha_q = 0.3;
        let mut q = LearnerState::new(x0.clone(), DMatrix::zeros(1, 1));
        for n in 1..=50usize {
            q.qadam_step(&target, &DMatrix::zeros(1, 1), alpha_q, alpha_q);
            let gap = 0.5 * l_r * (target[0] - q.ag_mean()[0]).powi(2);
            let bound = 0.5 * (1.0 - alpha_q).powi(n as i32 - 1) * d0 * d0;
            assert!(
                gap <= bound + 1e-12,
                "bias-corrected bound violated at {n}: {gap} > {bound}"
            );
        }

        // Accelerated bound: min_n ‖∇R̂‖² ≤ 25ℒ(R*−R₀)/(4(√2−1)N).
        let mut ama = LearnerState::new(x0, DMatrix::zeros(1, 1));
        let mut r = rng(61);
        let mut min_g2 = f64::INFINITY;
        for n in 1..=50usize {
            ama.ama_step(&target, &DMatrix::zeros(1, 1), l_r, &mut r);
            let g = target[0] - ama.md_mean[0];
            min_g2 = min_g2.min(g * g);
            let bound = 25.0 * l_r * r_gap0 / (4.0 * (2.0f64.sqrt() - 1.0) * n as f64);
            assert!(min_g2 <= bound, "accelerated bound violated at n = {n}");
        }
    }

    #[test]
    fn sample_batch_zero_covariance_collapses_to_mean() {
        let mean = DVector::from_vec(vec![0.3, -0.2]);
        let cov = DMatrix::zeros(2, 2);
        let lo = DVector::from_element(2, -1.0);
        let hi = DVector::from_element(2, 1.0);
        let mut r = rng(67);
        let (draws, uniform, _) = sample_batch(&mean, &cov, 8, 100.0, &lo, &hi, &mut r);
        assert!(!uniform);
        for (v, _) in draws {
            assert!((v - &mean).amax() < 1e-15);
        }
    }

    #[test]
    fn sample_batch_uniform_fallback_statistics() {
        let mean = DVector::from_vec(vec![0.9, 0.9]);
        let cov = DMatrix::identity(2, 2) * 100.0; // ‖K‖ ≥ 2·k_upper
        let lo = DVector::from_element(2, -1.0);
        let hi = DVector::from_element(2, 1.0);
        let k_upper = cov.norm() / 2.0;
        let mut r = rng(71);
        let (draws, uniform, _) = sample_batch(&mean, &cov, 10_000, k_upper, &lo, &hi, &mut r);
        assert!(uniform);
        // per-coordinate mean within 3σ of the box center
        for j in 0..2 {
            let m: f64 = draws.iter().map(|(v, _)| v[j]).sum::<f64>() / draws.len() as f64;
            let sigma = (2.0f64 / 12.0).sqrt() / (draws.len() as f64).sqrt();
            assert!(
                (m - 0.0).abs() < 3.0 * sigma,
                "coordinate {j} mean {m} outside 3σ = {}",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn sample_batch_gaussian_covariance_statistics() {
        let mean = DVector::zeros(3);
        let mut cov = DMatrix::identity(3, 3) * 0.04;
        cov[(0, 1)] = 0.01;
        cov[(1, 0)] = 0.01;
        let lo = DVector::from_element(3, -100.0); // box wide enough not to clamp
        let hi = DVector::from_element(3, 100.0);
        let mut r = rng(73);
        let (draws, uniform, _) = sample_batch(&mean, &cov, 10_000, 1e9, &lo, &hi, &mut r);
        assert!(!uniform);
        let n = draws.len() as f64;
        let emp_mean: DVector<f64> = draws.iter().fold(DVector::zeros(3), |a, (v, _)| a + v) / n;
        let mut emp_cov = DMatrix::zeros(3, 3);
        for (v, _) in &draws {
            let d = v - &emp_mean;
            emp_cov += &d * d.transpose();
        }
        emp_cov /= n;
        let rel = (&emp_cov - &cov).norm() / cov.norm();
        assert!(rel < 0.10, "empirical covariance off by {rel}");
    }

    fn toy_gp_for_coords() -> (GPModel, Vec<usize>) {
        let sde = LtvSdeModel::with_unit_qc(1, 1.0).unwrap();
        let start = DVector::from_vec(vec![0.0, 0.0]);
        let goal = DVector::from_vec(vec![0.0, 0.0]);
        let k0 = DMatrix::identity(2, 2);
        let gp = build_prior(&sde, 4, &start, &goal, &k0).unwrap();
        // interior waypoint positions
        (gp, vec![2, 4])
    }

    #[test]
    fn asto_returns_immediately_when_mean_feasible() {
        let (gp, coords) = toy_gp_for_coords();
        let cfg = AstoConfig::default();
        let lo = DVector::from_element(2, -2.0);
        let hi = DVector::from_element(2, 2.0);
        let mut r = rng(79);
        let out = asto_run(
            |_: &DVector<f64>| Ok(SampleEval { total: 0.0, obstacle_unit: 0.0 }),
            &gp,
            &coords,
            &lo,
            &hi,
            &cfg,
            &mut r,
        )
        .unwrap();
        assert_eq!(out.report.reason, AstoStop::FeasibleModel);
        assert_eq!(out.report.evaluations, 1);
        assert!(out.report.evaluations <= cfg.k_samples);
    }

    #[test]
    fn asto_rejection_path_returns_incoming_mean() {
        let (gp, coords) = toy_gp_for_coords();
        let (mu0, _) = gp.marginal(&coords);
        let cfg = AstoConfig {
            n_asto: (3, 3),
            ..Default::default()
        };
        let lo = DVector::from_element(2, -2.0);
        let hi = DVector::from_element(2, 2.0);
        let mut r = rng(83);
        // adversarial objective: the incoming mean is optimal, nothing is
        // feasible
        let out = asto_run(
            |v: &DVector<f64>| {
                Ok(SampleEval {
                    total: 1.0 + v.norm_squared(),
                    obstacle_unit: 1e9,
                })
            },
            &gp,
            &coords,
            &lo,
            &hi,
            &cfg,
            &mut r,
        )
        .unwrap();
        assert!(!out.report.accepted);
        assert!((out.best - &mu0).amax() < 1e-12);
        assert!((out.gp.mean() - gp.mean()).amax() < 1e-12);
    }

    #[test]
    fn asto_escapes_double_well_barrier() {
        // 2D double-well with the policy mean on the barrier; the returned
        // coordinates must beat the barrier cost in at least 95 of 100 seeds.
        let (gp, coords) = toy_gp_for_coords();
        let well = |v: &DVector<f64>| {
            let f = (v[0] * v[0] - 1.0).powi(2) + 0.5 * v[1] * v[1] + 0.3 * v[0];
            Ok(SampleEval {
                total: f,
                obstacle_unit: 1e9,
            })
        };
        let cfg = AstoConfig {
            n_asto: (5, 15),
            k_upper_tol: Some(1e9),
            ..Default::default()
        };
        let lo = DVector::from_element(2, -2.0);
        let hi = DVector::from_element(2, 2.0);
        let barrier_cost = 1.0; // F at the saddle-ish mean (0,0): (0−1)² = 1
        let mut wins = 0;
        for seed in 0..100 {
            let mut r = rng(1000 + seed);
            let out = asto_run(well, &gp, &coords, &lo, &hi, &cfg, &mut r).unwrap();
            let f_best = (out.best[0] * out.best[0] - 1.0).powi(2)
                + 0.5 * out.best[1] * out.best[1]
                + 0.3 * out.best[0];
            if f_best < barrier_cost {
                wins += 1;
            }
        }
        assert!(wins >= 95, "only {wins}/100 runs improved on the barrier");
    }

    #[test]
    fn asto_never_returns_worse_than_incoming_mean() {
        let (gp, coords) = toy_gp_for_coords();
        let lo = DVector::from_element(2, -2.0);
        let hi = DVector::from_element(2, 2.0);
        let rough = |v: &DVector<f64>| {
            Ok(SampleEval {
                total: (v[0] * 7.0).sin() + (v[1] * 5.0).cos() + v.norm_squared(),
                obstacle_unit: 1e9,
            })
        };
        let cfg = AstoConfig {
            cf_tol: 0.0,
            ..Default::default()
        };
        for seed in 0..30 {
            let mut r = rng(2000 + seed);
            let (mu0, _) = gp.marginal(&coords);
            let f0 = rough(&mu0).unwrap().total;
            let out = asto_run(rough, &gp, &coords, &lo, &hi, &cfg, &mut r).unwrap();
            let f_ret = rough(&out.best).unwrap().total;
            assert!(
                f_ret <= f0 + 1e-12,
                "seed {seed}: returned {f_ret} worse than incoming {f0}"
            );
        }
    }

    #[test]
    fn modify_gp_noise_extremes() {
        let (gp, coords) = toy_gp_for_coords();
        let theta = DVector::from_vec(vec![0.7, -0.4]);
        let dim = coords.len();

        // enormous noise → unchanged
        let huge = DMatrix::identity(dim, dim) * 1e12;
        let soft = modify_gp_on_return(&gp, &coords, &theta, &huge).unwrap();
        let rel = (soft.mean() - gp.mean()).norm() / (1.0 + gp.mean().norm());
        assert!(rel < 1e-6);

        // zero noise → mean pinned to θ* on the sampled coordinates
        let hard = modify_gp_on_return(&gp, &coords, &theta, &DMatrix::zeros(dim, dim)).unwrap();
        for (row, &c) in coords.iter().enumerate() {
            assert_relative_eq!(hard.mean()[c], theta[row], epsilon = 1e-9);
        }
    }

    #[test]
    fn modify_gp_mid_noise_matches_conditioning_oracle() {
        // 𝒦_ε equal to the prior marginal: the posterior over the sampled
        // coordinates is the precision-weighted combination of prior mean
        // and observation.
        let (gp, coords) = toy_gp_for_coords();
        let theta = DVector::from_vec(vec![0.6, 0.2]);
        let (mu_m, k_m) = gp.marginal(&coords);
        let modified = modify_gp_on_return(&gp, &coords, &theta, &k_m).unwrap();
        // oracle over the marginal block: μ' = μ + K(K + Kε)⁻¹(θ* − μ)
        let sum = &k_m + &k_m;
        let w = sum.lu().solve(&(&theta - &mu_m)).unwrap();
        let mu_post = &mu_m + &k_m * w;
        for (row, &c) in coords.iter().enumerate() {
            assert_relative_eq!(modified.mean()[c], mu_post[row], epsilon = 1e-8);
        }
    }
}
