//! Workspace model: signed-distance collision field on a 2D grid, planar
//! robot bodies described by collision-check balls (CCBs), and the obstacle
//! and joint-limit costs with their gradients.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;
use crate::trajgp::{interpolate_between, LtvSdeModel};

/// Analytic obstacle primitives; grids are precomputed from these by `min`
/// composition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Disc {
        center: [f64; 2],
        radius: f64,
    },
    /// Axis-aligned box given by center and half extents.
    Box {
        center: [f64; 2],
        half: [f64; 2],
    },
    Capsule {
        a: [f64; 2],
        b: [f64; 2],
        radius: f64,
    },
}

impl Primitive {
    pub fn signed_distance(&self, p: Vector2<f64>) -> f64 {
        match self {
            Primitive::Disc { center, radius } => {
                (p - Vector2::new(center[0], center[1])).norm() - radius
            }
            Primitive::Box { center, half } => {
                let q = Vector2::new(
                    (p.x - center[0]).abs() - half[0],
                    (p.y - center[1]).abs() - half[1],
                );
                let outside = Vector2::new(q.x.max(0.0), q.y.max(0.0)).norm();
                let inside = q.x.max(q.y).min(0.0);
                outside + inside
            }
            Primitive::Capsule { a, b, radius } => {
                let a = Vector2::new(a[0], a[1]);
                let b = Vector2::new(b[0], b[1]);
                let ab = b - a;
                let t = if ab.norm_squared() > 0.0 {
                    ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (p - (a + ab * t)).norm() - radius
            }
        }
    }
}

/// Signed distances sampled at cell centers; negative inside obstacles.
#[derive(Debug, Clone)]
pub struct SdfGrid {
    origin: Vector2<f64>,
    cell: f64,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl SdfGrid {
    pub fn new(origin: [f64; 2], cell: f64, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || values.is_empty() {
            return Err(Error::parameter("empty SDF grid"));
        }
        if !(cell > 0.0) {
            return Err(Error::parameter("grid cell size must be positive"));
        }
        if values.len() != nx * ny {
            return Err(Error::Dimension {
                what: "sdf values",
                expected: nx * ny,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("sdf values must be finite"));
        }
        Ok(SdfGrid {
            origin: Vector2::new(origin[0], origin[1]),
            cell,
            nx,
            ny,
            values,
        })
    }

    /// Rasterize analytic primitives over `[min, max]`; free space when the
    /// primitive list is empty.
    pub fn from_primitives(min: [f64; 2], max: [f64; 2], cell: f64, prims: &[Primitive]) -> Result<Self> {
        if !(cell > 0.0) || max[0] <= min[0] || max[1] <= min[1] {
            return Err(Error::parameter("invalid grid bounds or cell size"));
        }
        let nx = (((max[0] - min[0]) / cell).ceil() as usize).max(1);
        let ny = (((max[1] - min[1]) / cell).ceil() as usize).max(1);
        let mut values = vec![0.0; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let p = Vector2::new(
                    min[0] + (ix as f64 + 0.5) * cell,
                    min[1] + (iy as f64 + 0.5) * cell,
                );
                let d = prims
                    .iter()
                    .map(|pr| pr.signed_distance(p))
                    .fold(f64::INFINITY, f64::min);
                values[iy * nx + ix] = if d.is_finite() { d } else { 1e3 };
            }
        }
        SdfGrid::new(min, cell, nx, ny, values)
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    fn value_at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    /// Bilinear interpolation of cell-center samples; queries outside the
    /// sampled extent are clamped to the boundary value plus the Euclidean
    /// distance to the boundary (far space is free).
    pub fn signed_distance(&self, p: Vector2<f64>) -> f64 {
        let lo_x = self.origin.x + 0.5 * self.cell;
        let lo_y = self.origin.y + 0.5 * self.cell;
        let hi_x = self.origin.x + (self.nx as f64 - 0.5) * self.cell;
        let hi_y = self.origin.y + (self.ny as f64 - 0.5) * self.cell;
        let q = Vector2::new(p.x.clamp(lo_x, hi_x), p.y.clamp(lo_y, hi_y));
        let outside = (p - q).norm();

        let u = (q.x - lo_x) / self.cell;
        let v = (q.y - lo_y) / self.cell;
        let ix = (u.floor() as usize).min(self.nx.saturating_sub(2));
        let iy = (v.floor() as usize).min(self.ny.saturating_sub(2));
        let ix1 = (ix + 1).min(self.nx - 1);
        let iy1 = (iy + 1).min(self.ny - 1);
        let fx = (u - ix as f64).clamp(0.0, 1.0);
        let fy = (v - iy as f64).clamp(0.0, 1.0);
        let v00 = self.value_at(ix, iy);
        let v10 = self.value_at(ix1, iy);
        let v01 = self.value_at(ix, iy1);
        let v11 = self.value_at(ix1, iy1);
        let interp = v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy;
        interp + outside
    }
}

/// A collision-check ball attached at a fraction along a link.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ccb {
    pub link: usize,
    pub fraction: f64,
    pub radius: f64,
}

/// Per-link rigid-body parameters for the kinetic weighting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkInertia {
    pub mass: f64,
    /// Center of mass as a fraction along the link.
    pub com_fraction: f64,
    pub izz: f64,
}

#[derive(Debug, Clone)]
pub enum RobotKind {
    /// A point robot; configuration is its workspace position.
    Point { radius: f64 },
    PlanarArm {
        base: Vector2<f64>,
        link_lengths: Vec<f64>,
        ccbs: Vec<Ccb>,
        inertia: Vec<LinkInertia>,
    },
}

#[derive(Debug, Clone)]
pub struct RobotModel {
    pub kind: RobotKind,
    pub limits_min: DVector<f64>,
    pub limits_max: DVector<f64>,
}

impl RobotModel {
    pub fn point(radius: f64, limits_min: DVector<f64>, limits_max: DVector<f64>) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::parameter("CCB radius must be positive"));
        }
        let robot = RobotModel {
            kind: RobotKind::Point { radius },
            limits_min,
            limits_max,
        };
        robot.validate()?;
        Ok(robot)
    }

    pub fn planar_arm(
        base: [f64; 2],
        link_lengths: Vec<f64>,
        ccbs: Vec<Ccb>,
        inertia: Vec<LinkInertia>,
        limits_min: DVector<f64>,
        limits_max: DVector<f64>,
    ) -> Result<Self> {
        if link_lengths.is_empty() {
            return Err(Error::parameter("arm needs at least one link"));
        }
        if ccbs.iter().any(|c| !(c.radius > 0.0)) {
            return Err(Error::parameter("CCB radius must be positive"));
        }
        if ccbs.iter().any(|c| c.link >= link_lengths.len()) {
            return Err(Error::parameter("CCB attached to nonexistent link"));
        }
        if inertia.len() != link_lengths.len() {
            return Err(Error::parameter("inertia parameters must cover every link"));
        }
        let robot = RobotModel {
            kind: RobotKind::PlanarArm {
                base: Vector2::new(base[0], base[1]),
                link_lengths,
                ccbs,
                inertia,
            },
            limits_min,
            limits_max,
        };
        robot.validate()?;
        Ok(robot)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dof();
        if self.limits_min.len() != d || self.limits_max.len() != d {
            return Err(Error::Dimension {
                what: "joint limits",
                expected: d,
                got: self.limits_min.len(),
            });
        }
        for j in 0..d {
            if !(self.limits_min[j] < self.limits_max[j]) {
                return Err(Error::parameter("limits_min must be below limits_max"));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        match &self.kind {
            RobotKind::Point { .. } => 2,
            RobotKind::PlanarArm { link_lengths, .. } => link_lengths.len(),
        }
    }

    pub fn n_ccbs(&self) -> usize {
        match &self.kind {
            RobotKind::Point { .. } => 1,
            RobotKind::PlanarArm { ccbs, .. } => ccbs.len(),
        }
    }

    /// Positions of the arm joints (base first, tip last) at configuration `q`.
    pub fn joint_positions(&self, q: &DVector<f64>) -> Vec<Vector2<f64>> {
        match &self.kind {
            RobotKind::Point { .. } => vec![Vector2::new(q[0], q[1])],
            RobotKind::PlanarArm {
                base, link_lengths, ..
            } => {
                let mut pts = Vec::with_capacity(link_lengths.len() + 1);
                pts.push(*base);
                let mut angle = 0.0;
                let mut p = *base;
                for (i, &len) in link_lengths.iter().enumerate() {
                    angle += q[i];
                    p += Vector2::new(angle.cos(), angle.sin()) * len;
                    pts.push(p);
                }
                pts
            }
        }
    }

    /// CCB centers (with radii) at configuration `q`.
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Vec<(Vector2<f64>, f64)> {
        match &self.kind {
            RobotKind::Point { radius } => vec![(Vector2::new(q[0], q[1]), *radius)],
            RobotKind::PlanarArm { ccbs, .. } => {
                let joints = self.joint_positions(q);
                ccbs.iter()
                    .map(|c| {
                        let a = joints[c.link];
                        let b = joints[c.link + 1];
                        (a + (b - a) * c.fraction, c.radius)
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CollisionParams {
    /// Obstacle safety margin (meters).
    pub eps: f64,
    /// Joint-limit margin (radians).
    pub eps_d: f64,
}

impl CollisionParams {
    pub fn new(eps: f64, eps_d: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::parameter("eps must be positive"));
        }
        if eps_d < 0.0 {
            return Err(Error::parameter("eps_d must be nonnegative"));
        }
        Ok(CollisionParams { eps, eps_d })
    }
}

/// Piecewise-quartic obstacle cost of a signed distance; twice continuously
/// differentiable at both junctions and zero beyond the margin.
pub fn collision_cost(d: f64, eps: f64) -> f64 {
    if d < 0.0 {
        eps / 2.0 - d
    } else if d <= eps {
        let r = eps - d;
        r * r * r / (eps * eps) - r * r * r * r / (2.0 * eps * eps * eps)
    } else {
        0.0
    }
}

/// Workspace positions of every CCB at every waypoint.
fn body_points(traj: &Trajectory, robot: &RobotModel) -> Vec<Vec<(Vector2<f64>, f64)>> {
    (0..traj.n_waypoints())
        .map(|t| robot.forward_kinematics(&traj.position(t).into_owned()))
        .collect()
}

fn obstacle_cost_from_points(
    points: &[Vec<(Vector2<f64>, f64)>],
    grid: &SdfGrid,
    params: &CollisionParams,
    rho: &[f64],
    dt: f64,
) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for t in 0..n {
        let next = if t + 1 < n { t + 1 } else { t };
        let prev = if t + 1 < n { t } else { t - 1 };
        for (b, &(p, r)) in points[t].iter().enumerate() {
            let speed = (points[next][b].0 - points[prev][b].0).norm() / dt;
            if speed == 0.0 {
                continue;
            }
            let d = grid.signed_distance(p) - r;
            total += rho[t] * collision_cost(d, params.eps) * speed;
        }
    }
    total
}

/// Penalized obstacle cost: Σ_t Σ_B ϱ_t · c(𝒟(x) − r) · ‖ẋ‖, with body-point
/// speeds from forward differences over `dt` (backward at the last waypoint).
pub fn obstacle_cost(
    traj: &Trajectory,
    robot: &RobotModel,
    grid: &SdfGrid,
    params: &CollisionParams,
    rho: &[f64],
    dt: f64,
) -> Result<f64> {
    if rho.len() != traj.n_waypoints() {
        return Err(Error::Dimension {
            what: "penalty vector",
            expected: traj.n_waypoints(),
            got: rho.len(),
        });
    }
    if rho.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::parameter("penalty factors must be positive"));
    }
    Ok(obstacle_cost_from_points(
        &body_points(traj, robot),
        grid,
        params,
        rho,
        dt,
    ))
}

/// Central finite differences of the discretized obstacle cost over free
/// waypoint positions; start/goal rows stay zero. Only the 3-waypoint window
/// that a coordinate influences is re-evaluated.
pub fn obstacle_cost_gradient(
    traj: &Trajectory,
    robot: &RobotModel,
    grid: &SdfGrid,
    params: &CollisionParams,
    rho: &[f64],
    dt: f64,
) -> Result<DVector<f64>> {
    let n = traj.n_waypoints();
    if rho.len() != n {
        return Err(Error::Dimension {
            what: "penalty vector",
            expected: n,
            got: rho.len(),
        });
    }
    let d = traj.joint_dim();
    let mut points = body_points(traj, robot);
    let mut grad = DVector::zeros(n * 2 * d);
    let h = 1e-6;

    // Cost restricted to the waypoints whose terms involve waypoint t.
    let window_cost = |points: &[Vec<(Vector2<f64>, f64)>], t: usize| -> f64 {
        let lo = t.saturating_sub(1);
        let hi = (t + 1).min(n - 1);
        let mut total = 0.0;
        for u in lo..=hi {
            let next = if u + 1 < n { u + 1 } else { u };
            let prev = if u + 1 < n { u } else { u - 1 };
            for (b, &(p, r)) in points[u].iter().enumerate() {
                let speed = (points[next][b].0 - points[prev][b].0).norm() / dt;
                if speed == 0.0 {
                    continue;
                }
                let dist = grid.signed_distance(p) - r;
                total += rho[u] * collision_cost(dist, params.eps) * speed;
            }
        }
        total
    };

    for t in 1..n.saturating_sub(1) {
        let q0 = traj.position(t).into_owned();
        for j in 0..d {
            let mut qp = q0.clone();
            qp[j] += h;
            points[t] = robot.forward_kinematics(&qp);
            let fp = window_cost(&points, t);
            let mut qm = q0.clone();
            qm[j] -= h;
            points[t] = robot.forward_kinematics(&qm);
            let fm = window_cost(&points, t);
            points[t] = robot.forward_kinematics(&q0);
            grad[t * 2 * d + j] = (fp - fm) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// Hinge cost keeping joint positions inside `[θ_min + ε_d, θ_max − ε_d]`.
pub fn limit_cost(traj: &Trajectory, robot: &RobotModel, params: &CollisionParams) -> f64 {
    let d = traj.joint_dim();
    let mut total = 0.0;
    for t in 0..traj.n_waypoints() {
        let q = traj.position(t);
        for j in 0..d {
            let lo = robot.limits_min[j] + params.eps_d;
            let hi = robot.limits_max[j] - params.eps_d;
            if q[j] < lo {
                total += lo - q[j];
            } else if q[j] > hi {
                total += q[j] - hi;
            }
        }
    }
    total
}

/// Subgradient of [`limit_cost`]: ±1 on violating position coordinates.
pub fn limit_cost_gradient(
    traj: &Trajectory,
    robot: &RobotModel,
    params: &CollisionParams,
) -> DVector<f64> {
    let d = traj.joint_dim();
    let mut grad = DVector::zeros(traj.n_waypoints() * 2 * d);
    for t in 0..traj.n_waypoints() {
        let q = traj.position(t);
        for j in 0..d {
            let lo = robot.limits_min[j] + params.eps_d;
            let hi = robot.limits_max[j] - params.eps_d;
            if q[j] < lo {
                grad[t * 2 * d + j] = -1.0;
            } else if q[j] > hi {
                grad[t * 2 * d + j] = 1.0;
            }
        }
    }
    grad
}

/// True when any CCB penetrates an obstacle at configuration `q`.
pub fn in_collision(robot: &RobotModel, grid: &SdfGrid, q: &DVector<f64>) -> bool {
    robot
        .forward_kinematics(q)
        .iter()
        .any(|&(p, r)| grid.signed_distance(p) - r < 0.0)
}

/// Per-state unpenalized collision cost Σ_B c(𝒟 − r)·‖ẋ‖ along a chain of
/// states spaced `dt` apart.
fn chain_state_costs(
    states: &[DVector<f64>],
    robot: &RobotModel,
    grid: &SdfGrid,
    params: &CollisionParams,
    joint_dim: usize,
    dt: f64,
) -> Vec<f64> {
    let pts: Vec<Vec<(Vector2<f64>, f64)>> = states
        .iter()
        .map(|s| robot.forward_kinematics(&s.rows(0, joint_dim).into_owned()))
        .collect();
    let n = pts.len();
    (0..n)
        .map(|t| {
            let next = if t + 1 < n { t + 1 } else { t };
            let prev = if t + 1 < n { t } else { t - 1 };
            pts[t]
                .iter()
                .enumerate()
                .map(|(b, &(p, r))| {
                    let speed = (pts[next][b].0 - pts[prev][b].0).norm() / dt;
                    collision_cost(grid.signed_distance(p) - r, params.eps) * speed
                })
                .sum()
        })
        .collect()
}

/// Continuous-time safety: every support state and every GP-bridged interval
/// state between adjacent waypoints must have unpenalized collision cost at
/// most `gtol`. `n_intervals` subdivisions per gap give `n_intervals − 1`
/// interior states.
pub fn continuous_safe(
    traj: &Trajectory,
    sde: &LtvSdeModel,
    robot: &RobotModel,
    grid: &SdfGrid,
    params: &CollisionParams,
    gtol: f64,
    n_intervals: usize,
) -> Result<bool> {
    if n_intervals == 0 {
        return Err(Error::parameter("n_intervals must be at least 1"));
    }
    let states = upsample_states(traj, sde, n_intervals)?;
    let fine_dt = sde.dt() / n_intervals as f64;
    let costs = chain_state_costs(&states, robot, grid, params, traj.joint_dim(), fine_dt);
    Ok(costs.iter().all(|&c| c <= gtol))
}

/// All support states plus `n_intervals − 1` GP-bridged interior states per
/// gap, in time order.
pub fn upsample_states(
    traj: &Trajectory,
    sde: &LtvSdeModel,
    n_intervals: usize,
) -> Result<Vec<DVector<f64>>> {
    let n = traj.n_waypoints();
    let taus: Vec<f64> = (1..n_intervals)
        .map(|k| k as f64 / n_intervals as f64)
        .collect();
    let mut states = Vec::with_capacity(n + (n - 1) * taus.len());
    for t in 0..n - 1 {
        states.push(traj.state(t).into_owned());
        if !taus.is_empty() {
            let a = traj.state(t).into_owned();
            let b = traj.state(t + 1).into_owned();
            states.extend(interpolate_between(sde, &a, &b, sde.dt(), &taus)?);
        }
    }
    states.push(traj.state(n - 1).into_owned());
    Ok(states)
}

/// Per-state unpenalized collision costs over the upsampled chain; used by
/// the problem classifier and safety check.
pub fn upsampled_state_costs(
    traj: &Trajectory,
    sde: &LtvSdeModel,
    robot: &RobotModel,
    grid: &SdfGrid,
    params: &CollisionParams,
    n_intervals: usize,
) -> Result<Vec<f64>> {
    let states = upsample_states(traj, sde, n_intervals)?;
    let fine_dt = sde.dt() / n_intervals as f64;
    Ok(chain_state_costs(
        &states,
        robot,
        grid,
        params,
        traj.joint_dim(),
        fine_dt,
    ))
}

/// Worst CCB penetration depth (meters) over the upsampled chain; zero or
/// negative means the whole chain is penetration-free.
pub fn max_penetration(
    traj: &Trajectory,
    sde: &LtvSdeModel,
    robot: &RobotModel,
    grid: &SdfGrid,
    n_intervals: usize,
) -> Result<f64> {
    let states = upsample_states(traj, sde, n_intervals)?;
    let d = traj.joint_dim();
    let mut worst = f64::NEG_INFINITY;
    for s in &states {
        let q = s.rows(0, d).into_owned();
        for (p, r) in robot.forward_kinematics(&q) {
            worst = worst.max(r - grid.signed_distance(p));
        }
    }
    Ok(worst)
}

/// Collision flags (any CCB penetrating) over the upsampled chain.
pub fn upsampled_collision_flags(
    traj: &Trajectory,
    sde: &LtvSdeModel,
    robot: &RobotModel,
    grid: &SdfGrid,
    n_intervals: usize,
) -> Result<Vec<bool>> {
    let states = upsample_states(traj, sde, n_intervals)?;
    let d = traj.joint_dim();
    Ok(states
        .iter()
        .map(|s| in_collision(robot, grid, &s.rows(0, d).into_owned()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn free_limits(d: usize) -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_element(d, -10.0),
            DVector::from_element(d, 10.0),
        )
    }

    fn disc_grid() -> SdfGrid {
        SdfGrid::from_primitives(
            [-1.0, -1.0],
            [1.0, 1.0],
            0.01,
            &[Primitive::Disc {
                center: [0.2, -0.1],
                radius: 0.3,
            }],
        )
        .unwrap()
    }

    #[test]
    fn sdf_exact_at_cell_centers() {
        let grid = SdfGrid::new([0.0, 0.0], 0.1, 3, 3, vec![
            0.0, 0.1, 0.2, //
            0.3, 0.4, 0.5, //
            0.6, 0.7, 0.8,
        ])
        .unwrap();
        // center of cell (1,1) is (0.15, 0.15)
        assert_relative_eq!(grid.signed_distance(Vector2::new(0.15, 0.15)), 0.4);
        // midpoint between the centers of cells (0,0) and (1,0): values 0.0, 0.1 → 0.05
        assert_relative_eq!(grid.signed_distance(Vector2::new(0.10, 0.05)), 0.05);
    }

    #[test]
    fn sdf_midpoint_interpolates() {
        let grid = SdfGrid::new([0.0, 0.0], 1.0, 2, 1, vec![0.1, 0.3]).unwrap();
        assert_relative_eq!(grid.signed_distance(Vector2::new(1.0, 0.5)), 0.2);
    }

    #[test]
    fn sdf_matches_analytic_disc() {
        let grid = disc_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = Vector2::new(rng.random::<f64>() * 1.8 - 0.9, rng.random::<f64>() * 1.8 - 0.9);
            let analytic = (p - Vector2::new(0.2, -0.1)).norm() - 0.3;
            let interp = grid.signed_distance(p);
            assert!(
                (interp - analytic).abs() < 1.5 * grid.cell(),
                "at {p:?}: {interp} vs {analytic}"
            );
        }
    }

    #[test]
    fn sdf_out_of_grid_adds_distance() {
        let grid = SdfGrid::from_primitives([-0.5, -0.5], [0.5, 0.5], 0.05, &[]).unwrap();
        let inside = grid.signed_distance(Vector2::new(0.0, 0.0));
        let outside = grid.signed_distance(Vector2::new(2.0, 0.0));
        assert!(outside > inside + 1.0);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(SdfGrid::new([0.0, 0.0], 0.1, 0, 0, vec![]).is_err());
    }

    #[test]
    fn collision_cost_branches() {
        let eps = 0.05;
        // 𝒟 = ε → 0
        assert_eq!(collision_cost(eps, eps), 0.0);
        // 𝒟 = 0 → ε/2 from both pieces
        assert_relative_eq!(collision_cost(0.0, eps), eps / 2.0, epsilon = 1e-15);
        let just_above = collision_cost(1e-12, eps);
        assert_relative_eq!(just_above, eps / 2.0, epsilon = 1e-9);
        // 𝒟 = −0.1, ε = 0.05 → 0.125
        assert_relative_eq!(collision_cost(-0.1, eps), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn collision_cost_nonincreasing() {
        let eps = 0.05;
        let mut prev = f64::INFINITY;
        let mut d = -0.2;
        while d < 0.2 {
            let c = collision_cost(d, eps);
            assert!(c <= prev + 1e-15, "cost increased at d = {d}");
            assert!(c >= 0.0);
            prev = c;
            d += 1e-3;
        }
    }

    #[test]
    fn fk_zero_angles_along_x() {
        let (lo, hi) = free_limits(3);
        let arm = RobotModel::planar_arm(
            [0.0, 0.0],
            vec![1.0, 0.5, 0.25],
            vec![
                Ccb { link: 0, fraction: 1.0, radius: 0.05 },
                Ccb { link: 1, fraction: 1.0, radius: 0.05 },
                Ccb { link: 2, fraction: 1.0, radius: 0.05 },
            ],
            vec![
                LinkInertia { mass: 1.0, com_fraction: 0.5, izz: 0.1 };
                3
            ],
            lo,
            hi,
        )
        .unwrap();
        let pts = arm.forward_kinematics(&DVector::zeros(3));
        assert_relative_eq!(pts[0].0.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(pts[1].0.x, 1.5, epsilon = 1e-12);
        assert_relative_eq!(pts[2].0.x, 1.75, epsilon = 1e-12);
        assert!(pts.iter().all(|p| p.0.y.abs() < 1e-12));
    }

    #[test]
    fn fk_two_link_quarter_turn() {
        let (lo, hi) = free_limits(2);
        let arm = RobotModel::planar_arm(
            [0.0, 0.0],
            vec![1.0, 1.0],
            vec![Ccb { link: 1, fraction: 1.0, radius: 0.05 }],
            vec![LinkInertia { mass: 1.0, com_fraction: 0.5, izz: 0.1 }; 2],
            lo,
            hi,
        )
        .unwrap();
        let tip = arm.forward_kinematics(&DVector::from_vec(vec![
            std::f64::consts::FRAC_PI_2,
            0.0,
        ]))[0]
            .0;
        assert_relative_eq!(tip.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(tip.y, 2.0, epsilon = 1e-12);
    }

    /// Homogeneous 3×3 matrix product oracle for the planar chain.
    fn fk_oracle(base: [f64; 2], lengths: &[f64], q: &DVector<f64>) -> Vec<Vector2<f64>> {
        use nalgebra::Matrix3;
        let mut t = Matrix3::new(1.0, 0.0, base[0], 0.0, 1.0, base[1], 0.0, 0.0, 1.0);
        let mut out = Vec::new();
        for (i, &len) in lengths.iter().enumerate() {
            let (s, c) = q[i].sin_cos();
            let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
            let trans = Matrix3::new(1.0, 0.0, len, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
            t = t * rot * trans;
            out.push(Vector2::new(t[(0, 2)], t[(1, 2)]));
        }
        out
    }

    #[test]
    fn fk_matches_matrix_oracle() {
        let (lo, hi) = free_limits(4);
        let lengths = vec![0.7, 0.5, 0.3, 0.2];
        let arm = RobotModel::planar_arm(
            [0.2, -0.1],
            lengths.clone(),
            (0..4)
                .map(|i| Ccb { link: i, fraction: 1.0, radius: 0.02 })
                .collect(),
            vec![LinkInertia { mass: 1.0, com_fraction: 0.5, izz: 0.1 }; 4],
            lo,
            hi,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let q = DVector::from_fn(4, |_, _| rng.random::<f64>() * 4.0 * std::f64::consts::PI - 2.0 * std::f64::consts::PI);
            let fk = arm.forward_kinematics(&q);
            let oracle = fk_oracle([0.2, -0.1], &lengths, &q);
            for (got, want) in fk.iter().zip(oracle.iter()) {
                assert!((got.0 - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn fk_tip_periodic_in_each_joint() {
        let (lo, hi) = free_limits(3);
        let arm = RobotModel::planar_arm(
            [0.0, 0.0],
            vec![0.5, 0.4, 0.3],
            vec![Ccb { link: 2, fraction: 1.0, radius: 0.02 }],
            vec![LinkInertia { mass: 1.0, com_fraction: 0.5, izz: 0.1 }; 3],
            lo,
            hi,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let q = DVector::from_fn(3, |_, _| rng.random::<f64>() * 6.0 - 3.0);
            let tip = arm.forward_kinematics(&q)[0].0;
            for j in 0..3 {
                let mut q2 = q.clone();
                q2[j] += 2.0 * std::f64::consts::PI;
                let tip2 = arm.forward_kinematics(&q2)[0].0;
                assert!((tip - tip2).norm() < 1e-9);
            }
        }
    }

    fn point_robot() -> RobotModel {
        let (lo, hi) = free_limits(2);
        RobotModel::point(0.05, lo, hi).unwrap()
    }

    fn straight_line(from: [f64; 2], to: [f64; 2], n: usize, dt: f64) -> Trajectory {
        let pts: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                let a = i as f64 / (n - 1) as f64;
                DVector::from_vec(vec![
                    from[0] + a * (to[0] - from[0]),
                    from[1] + a * (to[1] - from[1]),
                ])
            })
            .collect();
        Trajectory::from_positions(&pts, dt).unwrap()
    }

    #[test]
    fn obstacle_cost_zero_with_clearance() {
        let grid = disc_grid();
        let robot = point_robot();
        let params = CollisionParams::new(0.05, 0.01).unwrap();
        let traj = straight_line([-0.9, 0.8], [0.9, 0.8], 5, 1.0);
        let rho = vec![1.0; 5];
        let c = obstacle_cost(&traj, &robot, &grid, &params, &rho, 1.0).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn obstacle_cost_zero_for_static_trajectory() {
        let grid = disc_grid();
        let robot = point_robot();
        let params = CollisionParams::new(0.05, 0.01).unwrap();
        // all waypoints parked inside the obstacle but not moving
        let pts: Vec<DVector<f64>> = (0..4).map(|_| DVector::from_vec(vec![0.2, -0.1])).collect();
        let traj = Trajectory::from_positions(&pts, 1.0).unwrap();
        let rho = vec![1.0; 4];
        let c = obstacle_cost(&traj, &robot, &grid, &params, &rho, 1.0).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn obstacle_cost_matches_direct_summation() {
        let grid = disc_grid();
        let robot = point_robot();
        let params = CollisionParams::new(0.05, 0.01).unwrap();
        let dt = 0.5;
        let traj = straight_line([-0.5, -0.1], [0.9, -0.1], 3, dt);
        let rho = vec![0.7, 1.3, 2.1];
        let got = obstacle_cost(&traj, &robot, &grid, &params, &rho, dt).unwrap();

        // independent hand-rolled summation
        let mut expected = 0.0;
        let xs: Vec<Vector2<f64>> = (0..3)
            .map(|t| {
                let p = traj.position(t);
                Vector2::new(p[0], p[1])
            })
            .collect();
        for t in 0..3 {
            let speed = if t + 1 < 3 {
                (xs[t + 1] - xs[t]).norm() / dt
            } else {
                (xs[t] - xs[t - 1]).norm() / dt
            };
            let d = grid.signed_distance(xs[t]) - 0.05;
            expected += rho[t] * collision_cost(d, 0.05) * speed;
        }
        assert_relative_eq!(got, expected, epsilon = 1e-10);
    }

    #[test]
    fn obstacle_cost_scales_linearly_in_rho() {
        let grid = disc_grid();
        let robot = point_robot();
        let params = CollisionParams::new(0.05, 0.01).unwrap();
        let traj = straight_line([-0.5, -0.1], [0.9, -0.1], 6, 1.0);
        let rho: Vec<f64> = (0..6).map(|i| 0.3 + 0.1 * i as f64).collect();
        let doubled: Vec<f64> = rho.iter().map(|r| 2.0 * r).collect();
        let c1 = obstacle_cost(&traj, &robot, &grid, &params, &rho, 1.0).unwrap();
        let c2 = obstacle_cost(&traj, &robot, &grid, &params, &doubled, 1.0).unwrap();
        assert!(c1 > 0.0);
        assert_relative_eq!(c2, 2.0 * c1, epsilon = 1e-12);
    }

    #[test]
    fn obstacle_gradient_zero_in_free_space_and_matches_fd() {
        let grid = disc_grid();
        let robot = point_robot();
        let params = CollisionParams::new(0.05, 0.01).unwrap();
        let rho = vec![1.0; 5];

        let free = straight_line([-0.9, 0.8], [0.9, 0.8], 5, 1.0);
        let g = obstacle_cost_gradient(&free, &robot, &grid, &params, &rho, 1.0).unwrap();
        assert_eq!(g.amax(), 0.0);

        let hitting = straight_line([-0.5, -0.1], [0.9, -0.1], 5, 1.0);
        let g = obstacle_cost_gradient(&hitting, &robot, &grid, &params, &rho, 1.0).unwrap();
        // independent full-vector central differences
        let h = 1e-6;
        let base_vec = hitting.as_vector().clone();
        for idx in 0..base_vec.len() {
            let wp = idx / 4;
            let coord = idx % 4;
            if wp == 0 || wp == 4 || coord >= 2 {
                assert_eq!(g[idx], 0.0);
                continue;
            }
            let mut vp = base_vec.clone();
            vp[idx] += h;
            let mut vm = base_vec.clone();
            vm[idx] -= h;
            let tp = Trajectory::from_vector(vp, 5, 2).unwrap();
            let tm = Trajectory::from_vector(vm, 5, 2).unwrap();
            let fp = obstacle_cost(&tp, &robot, &grid, &params, &rho, 1.0).unwrap();
            let fm = obstacle_cost(&tm, &robot, &grid, &params, &rho, 1.0).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let scale = fd.abs().max(1e-3);
            assert!(
                (g[idx] - fd).abs() / scale < 1e-4,
                "idx {idx}: {} vs {fd}",
                g[idx]
            );
        }
    }

    #[test]
    fn obstacle_gradient_points_away_from_disc() {
        let grid = disc_grid();
        let robot = point_robot();
        let params = CollisionParams::new(0.05, 0.01).unwrap();
        // middle waypoint grazing the disc edge, moving
        let traj = straight_line([0.2, -0.6], [0.2, 0.4], 3, 1.0);
        let rho = vec![1.0; 3];
        let g = obstacle_cost_gradient(&traj, &robot, &grid, &params, &rho, 1.0).unwrap();
        let wp = traj.position(1).into_owned();
        let outward = Vector2::new(wp[0] - 0.2, wp[1] + 0.1).normalize();
        let step = Vector2::new(-g[4], -g[5]); // descent direction
        assert!(
            step.dot(&outward) > 0.0,
            "descent should push the waypoint away from the obstacle center"
        );
    }

    #[test]
    fn limit_cost_hinge() {
        let (lo, hi) = free_limits(2);
        let robot = RobotModel::point(0.05, lo, hi).unwrap();
        let params = CollisionParams::new(0.05, 0.01).unwrap();
        let interior = straight_line([0.0, 0.0], [1.0, 1.0], 3, 1.0);
        assert_eq!(limit_cost(&interior, &robot, &params), 0.0);

        // θ = θ_max on one coordinate → ε_d
        let pts = vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![10.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0]),
        ];
        let at_max = Trajectory::from_positions(&pts, 1.0).unwrap();
        assert_relative_eq!(limit_cost(&at_max, &robot, &params), 0.01, epsilon = 1e-12);
        let g = limit_cost_gradient(&at_max, &robot, &params);
        assert_eq!(g[4], 1.0);
        assert_eq!(g[5], 0.0);
    }

    #[test]
    fn limit_cost_fd_agreement_away_from_kinks() {
        let (lo, hi) = free_limits(2);
        let robot = RobotModel::point(0.05, lo, hi).unwrap();
        let params = CollisionParams::new(0.05, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..50 {
            let pts: Vec<DVector<f64>> = (0..3)
                .map(|_| DVector::from_fn(2, |_, _| rng.random::<f64>() * 24.0 - 12.0))
                .collect();
            let traj = Trajectory::from_positions(&pts, 1.0).unwrap();
            let g = limit_cost_gradient(&traj, &robot, &params);
            let h = 1e-7;
            let base = traj.as_vector().clone();
            for idx in 0..base.len() {
                if idx % 4 >= 2 {
                    continue; // velocity coordinate
                }
                // skip near-kink coordinates
                let v = base[idx];
                if (v - (-10.0 + 0.01)).abs() < 1e-3 || (v - (10.0 - 0.01)).abs() < 1e-3 {
                    continue;
                }
                let mut vp = base.clone();
                vp[idx] += h;
                let mut vm = base.clone();
                vm[idx] -= h;
                let fp = limit_cost(&Trajectory::from_vector(vp, 3, 2).unwrap(), &robot, &params);
                let fm = limit_cost(&Trajectory::from_vector(vm, 3, 2).unwrap(), &robot, &params);
                let fd = (fp - fm) / (2.0 * h);
                assert!((g[idx] - fd).abs() < 1e-6, "idx {idx}: {} vs {fd}", g[idx]);
            }
        }
    }

    #[test]
    fn continuous_safe_empty_world_and_infinite_tol() {
        let grid = SdfGrid::from_primitives([-1.0, -1.0], [1.0, 1.0], 0.02, &[]).unwrap();
        let robot = point_robot();
        let params = CollisionParams::new(0.05, 0.01).unwrap();
        let sde = LtvSdeModel::with_unit_qc(2, 1.0).unwrap();
        let traj = straight_line([-0.8, 0.0], [0.8, 0.0], 4, 1.0);
        assert!(continuous_safe(&traj, &sde, &robot, &grid, &params, 1e-4, 8).unwrap());

        let blocked = SdfGrid::from_primitives(
            [-1.0, -1.0],
            [1.0, 1.0],
            0.02,
            &[Primitive::Disc { center: [0.0, 0.0], radius: 0.2 }],
        )
        .unwrap();
        assert!(continuous_safe(&traj, &sde, &robot, &blocked, &params, f64::INFINITY, 8).unwrap());
    }

    #[test]
    fn continuous_safe_catches_thin_wall_between_waypoints() {
        // Wall much thinner than the waypoint spacing: support states clear,
        // interval states collide.
        let wall = SdfGrid::from_primitives(
            [-1.0, -1.0],
            [1.0, 1.0],
            0.005,
            &[Primitive::Box {
                center: [0.25, 0.0],
                half: [0.02, 1.0],
            }],
        )
        .unwrap();
        let robot = point_robot();
        let params = CollisionParams::new(0.05, 0.01).unwrap();
        let sde = LtvSdeModel::with_unit_qc(2, 1.0).unwrap();
        // waypoints at x = -0.5, 0.0, 1.0(ish) step over the wall at 0.25
        let traj = straight_line([-0.5, 0.0], [1.0, 0.0], 4, 1.0);
        let support_ok = (0..4).all(|t| {
            !in_collision(&robot, &wall, &traj.position(t).into_owned())
        });
        assert!(support_ok, "support waypoints should clear the wall");
        assert!(!continuous_safe(&traj, &sde, &robot, &wall, &params, 1e-4, 8).unwrap());
    }
}
