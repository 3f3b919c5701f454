//! Gauss-Markov trajectory prior from a constant-velocity linear SDE,
//! Gaussian conditioning on observed states, and the quadratic smoothness
//! cost with its analytic gradient.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::trajectory::Trajectory;

/// Observation noise used to pin start and goal states.
pub const ENDPOINT_NOISE: f64 = 1e-8;

/// Constant-velocity linear time-varying SDE over `joint_dim` joints. The
/// full per-waypoint state is (position, velocity), size `2 * joint_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvSdeModel {
    joint_dim: usize,
    dt: f64,
    qc: DMatrix<f64>,
}

impl LtvSdeModel {
    pub fn new(joint_dim: usize, dt: f64, qc: DMatrix<f64>) -> Result<Self> {
        if joint_dim == 0 {
            return Err(Error::parameter("joint_dim must be positive"));
        }
        if !(dt > 0.0) {
            return Err(Error::parameter(format!("dt must be positive, got {dt}")));
        }
        if qc.nrows() != joint_dim || qc.ncols() != joint_dim {
            return Err(Error::Dimension {
                what: "qc",
                expected: joint_dim,
                got: qc.nrows(),
            });
        }
        if linalg::min_eigenvalue(&qc) <= 0.0 {
            return Err(Error::parameter("qc must be positive definite"));
        }
        Ok(LtvSdeModel { joint_dim, dt, qc })
    }

    /// Unit power-spectral density (the default).
    pub fn with_unit_qc(joint_dim: usize, dt: f64) -> Result<Self> {
        Self::new(joint_dim, dt, DMatrix::identity(joint_dim, joint_dim))
    }

    pub fn joint_dim(&self) -> usize {
        self.joint_dim
    }

    pub fn state_dim(&self) -> usize {
        2 * self.joint_dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn qc(&self) -> &DMatrix<f64> {
        &self.qc
    }

    /// State transition over `elapsed` seconds: positions advance by
    /// velocity * elapsed, velocities persist.
    pub fn transition(&self, elapsed: f64) -> DMatrix<f64> {
        let d = self.joint_dim;
        let mut phi = DMatrix::identity(2 * d, 2 * d);
        for j in 0..d {
            phi[(j, d + j)] = elapsed;
        }
        phi
    }

    /// Accumulated process noise between two support times `elapsed` apart:
    /// `[[Δt³/3, Δt²/2], [Δt²/2, Δt]] ⊗ Q_c`.
    pub fn process_noise(&self, elapsed: f64) -> DMatrix<f64> {
        let t = elapsed;
        self.noise_block(t * t * t / 3.0, t * t / 2.0, t * t / 2.0, t)
    }

    /// Prior covariance block K(t_i, t_j) for the process started at time 0
    /// with initial covariance `k0`.
    fn kernel_block(&self, k0: &DMatrix<f64>, t_i: f64, t_j: f64) -> DMatrix<f64> {
        let phi_i = self.transition(t_i);
        let phi_j = self.transition(t_j);
        let tm = t_i.min(t_j);
        // ∫₀^{tm} of the outer products of [(t−s)I; I] pairs.
        let a = t_i * t_j * tm - (t_i + t_j) * tm * tm / 2.0 + tm * tm * tm / 3.0;
        let b = t_i * tm - tm * tm / 2.0;
        let c = t_j * tm - tm * tm / 2.0;
        &phi_i * k0 * phi_j.transpose() + self.noise_block(a, b, c, tm)
    }

    fn noise_block(&self, a: f64, b: f64, c: f64, e: f64) -> DMatrix<f64> {
        let d = self.joint_dim;
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        for r in 0..d {
            for col in 0..d {
                let q = self.qc[(r, col)];
                m[(r, col)] = a * q;
                m[(r, d + col)] = b * q;
                m[(d + r, col)] = c * q;
                m[(d + r, d + col)] = e * q;
            }
        }
        m
    }
}

/// Gaussian distribution over stacked trajectory states. The generating SDE
/// and support times are kept so interval states can be inferred later.
#[derive(Debug, Clone)]
pub struct GPModel {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
    /// Set when the covariance was singular and the precision is a
    /// pseudo-inverse.
    precision_degenerate: bool,
    sde: LtvSdeModel,
    times: Vec<f64>,
}

impl GPModel {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, sde: LtvSdeModel, times: Vec<f64>) -> Self {
        let mut cov = cov;
        linalg::symmetrize(&mut cov);
        let (precision, degenerate) = linalg::pinv(&cov);
        GPModel {
            mean,
            cov,
            precision,
            precision_degenerate: degenerate,
            sde,
            times,
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn precision_is_pseudo(&self) -> bool {
        self.precision_degenerate
    }

    pub fn sde(&self) -> &LtvSdeModel {
        &self.sde
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_waypoints(&self) -> usize {
        self.times.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal (mean, covariance) over a coordinate subset.
    pub fn marginal(&self, coords: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
        let m = coords.len();
        let mut mu = DVector::zeros(m);
        let mut k = DMatrix::zeros(m, m);
        for (a, &i) in coords.iter().enumerate() {
            mu[a] = self.mean[i];
            for (b, &j) in coords.iter().enumerate() {
                k[(a, b)] = self.cov[(i, j)];
            }
        }
        (mu, k)
    }

    /// Mean as a trajectory over the support times.
    pub fn mean_trajectory(&self) -> Trajectory {
        Trajectory::from_vector(self.mean.clone(), self.times.len(), self.sde.joint_dim())
            .expect("mean has trajectory shape")
    }
}

/// Observation of a linear combination of trajectory states.
#[derive(Debug, Clone)]
pub struct ConditioningSpec {
    pub obs_matrix: DMatrix<f64>,
    pub obs_values: DVector<f64>,
    pub obs_noise: DMatrix<f64>,
}

impl ConditioningSpec {
    pub fn new(obs_matrix: DMatrix<f64>, obs_values: DVector<f64>, obs_noise: DMatrix<f64>) -> Result<Self> {
        let m = obs_matrix.nrows();
        if obs_values.len() != m || obs_noise.nrows() != m || obs_noise.ncols() != m {
            return Err(Error::Dimension {
                what: "conditioning spec rows",
                expected: m,
                got: obs_values.len().min(obs_noise.nrows()),
            });
        }
        Ok(ConditioningSpec {
            obs_matrix,
            obs_values,
            obs_noise,
        })
    }

    /// Observe a coordinate subset exactly up to isotropic noise.
    pub fn for_coords(total_dim: usize, coords: &[usize], values: DVector<f64>, noise: f64) -> Self {
        let mut c = DMatrix::zeros(coords.len(), total_dim);
        for (row, &i) in coords.iter().enumerate() {
            c[(row, i)] = 1.0;
        }
        let m = coords.len();
        ConditioningSpec {
            obs_matrix: c,
            obs_values: values,
            obs_noise: DMatrix::identity(m, m) * noise,
        }
    }
}

/// Assemble the constant-velocity prior over `n_support` waypoints and pin
/// start and goal with small observation noise, so the mean interpolates
/// start → goal.
pub fn build_prior(
    model: &LtvSdeModel,
    n_support: usize,
    start: &DVector<f64>,
    goal: &DVector<f64>,
    k0: &DMatrix<f64>,
) -> Result<GPModel> {
    if n_support < 2 {
        return Err(Error::parameter("n_support must be at least 2"));
    }
    let s = model.state_dim();
    if start.len() != s || goal.len() != s {
        return Err(Error::Dimension {
            what: "start/goal state",
            expected: s,
            got: start.len(),
        });
    }
    if k0.nrows() != s || k0.ncols() != s {
        return Err(Error::Dimension {
            what: "k0",
            expected: s,
            got: k0.nrows(),
        });
    }
    if linalg::min_eigenvalue(k0) <= 0.0 {
        return Err(Error::parameter("k0 must be positive definite"));
    }

    let times: Vec<f64> = (0..n_support).map(|i| i as f64 * model.dt()).collect();
    let n = n_support * s;
    let mut mean = DVector::zeros(n);
    for (i, &t) in times.iter().enumerate() {
        let mu_i = model.transition(t) * start;
        mean.rows_mut(i * s, s).copy_from(&mu_i);
    }
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n_support {
        for j in i..n_support {
            let block = model.kernel_block(k0, times[i], times[j]);
            cov.view_mut((i * s, j * s), (s, s)).copy_from(&block);
            if i != j {
                cov.view_mut((j * s, i * s), (s, s))
                    .copy_from(&block.transpose());
            }
        }
    }
    let raw = GPModel::new(mean, cov, model.clone(), times);

    // Pin endpoints.
    let mut coords: Vec<usize> = (0..s).collect();
    coords.extend((n - s)..n);
    let mut values = DVector::zeros(2 * s);
    values.rows_mut(0, s).copy_from(start);
    values.rows_mut(s, s).copy_from(goal);
    let spec = ConditioningSpec::for_coords(n, &coords, values, ENDPOINT_NOISE);
    condition(&raw, &spec)
}

/// Gaussian conditioning on a linear observation.
pub fn condition(gp: &GPModel, spec: &ConditioningSpec) -> Result<GPModel> {
    let n = gp.dim();
    let c = &spec.obs_matrix;
    if c.ncols() != n {
        return Err(Error::Dimension {
            what: "obs_matrix columns",
            expected: n,
            got: c.ncols(),
        });
    }
    let ck = c * gp.cov(); // m × n
    let mut innovation = &ck * c.transpose() + &spec.obs_noise;
    linalg::symmetrize(&mut innovation);
    // Solve S X = C K̃ (pseudo-inverse handles exactly-pinned directions).
    let solve = linalg::pinv_solve(&innovation, &ck).map_err(|e| match e {
        Error::Numerical { what, .. } => Error::Numerical {
            what: format!("conditioning failed: {what}"),
            cond: linalg::pinv_solve(&innovation, &DMatrix::zeros(innovation.nrows(), 1))
                .ok()
                .and_then(|r| r.condition),
        },
        other => other,
    })?;
    let residual = &spec.obs_values - c * gp.mean();
    // Also require the mean update to be consistent when S is singular.
    let mean_update = linalg::pinv_solve(&innovation, &DMatrix::from_column_slice(
        residual.len(),
        1,
        residual.as_slice(),
    ))?;
    let mean = gp.mean() + ck.transpose() * DVector::from_column_slice(mean_update.solution.as_slice());
    let mut cov = gp.cov() - solve.solution.transpose() * &ck;
    linalg::symmetrize(&mut cov);
    Ok(GPModel::new(mean, cov, gp.sde().clone(), gp.times().to_vec()))
}

/// ½‖θ − μ‖²_𝒦 smoothness cost.
pub fn gp_cost(gp: &GPModel, traj: &Trajectory) -> Result<f64> {
    let theta = traj.as_vector();
    if theta.len() != gp.dim() {
        return Err(Error::Dimension {
            what: "gp_cost trajectory",
            expected: gp.dim(),
            got: theta.len(),
        });
    }
    let r = theta - gp.mean();
    let cost = 0.5 * r.dot(&(gp.precision() * &r));
    Ok(cost.max(0.0))
}

/// Analytic gradient `𝒦⁻¹(θ − μ)`. Start/goal entries are masked to zero by
/// the planner layer, not here.
pub fn gp_cost_gradient(gp: &GPModel, traj: &Trajectory) -> Result<DVector<f64>> {
    let theta = traj.as_vector();
    if theta.len() != gp.dim() {
        return Err(Error::Dimension {
            what: "gp_cost_gradient trajectory",
            expected: gp.dim(),
            got: theta.len(),
        });
    }
    let r = theta - gp.mean();
    Ok(gp.precision() * r)
}

/// State of the Markov bridge between two explicit states `gap_dt` apart, at
/// fractions `taus` (0 → `state_a`, 1 → `state_b`).
pub fn interpolate_between(
    model: &LtvSdeModel,
    state_a: &DVector<f64>,
    state_b: &DVector<f64>,
    gap_dt: f64,
    taus: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let s = model.state_dim();
    if state_a.len() != s || state_b.len() != s {
        return Err(Error::Dimension {
            what: "bridge states",
            expected: s,
            got: state_a.len(),
        });
    }
    let q_ab = model.process_noise(gap_dt);
    let (q_ab_inv, _) = linalg::pinv(&q_ab);
    let phi_ab = model.transition(gap_dt);
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        if tau <= 0.0 {
            out.push(state_a.clone());
            continue;
        }
        if tau >= 1.0 {
            out.push(state_b.clone());
            continue;
        }
        let t = tau * gap_dt;
        let phi_at = model.transition(t);
        let phi_tb = model.transition(gap_dt - t);
        let q_at = model.process_noise(t);
        // x_τ | x_a ~ N(Φ(τ)x_a, Q_{a,τ}); condition on x_b = Φ(b−τ)x_τ + noise.
        let cross = &q_at * phi_tb.transpose(); // cov(x_τ, x_b | x_a)
        let gain = &cross * &q_ab_inv;
        let predicted_b = &phi_ab * state_a;
        let x = phi_at * state_a + gain * (state_b - predicted_b);
        out.push(x);
    }
    Ok(out)
}

/// GP-inferred states between support waypoints `t_a` and `t_b` of the
/// model's own mean, at fractions `taus`.
pub fn interpolate_states(
    gp: &GPModel,
    t_a: usize,
    t_b: usize,
    taus: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let s = gp.sde().state_dim();
    let n = gp.n_waypoints();
    if t_a >= n || t_b >= n || t_a == t_b {
        return Err(Error::parameter(format!(
            "invalid interpolation indices ({t_a}, {t_b}) for {n} waypoints"
        )));
    }
    let a = gp.mean().rows(t_a * s, s).into_owned();
    let b = gp.mean().rows(t_b * s, s).into_owned();
    let gap = gp.times()[t_b] - gp.times()[t_a];
    interpolate_between(gp.sde(), &a, &b, gap, taus)
}
