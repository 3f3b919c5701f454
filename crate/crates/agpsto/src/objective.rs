//! Composite planning objective: GP smoothness plus penalized obstacle cost
//! plus joint-limit hinge, with endpoint-masked gradients, penalty scaling,
//! and the problem-difficulty classifier.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;
use crate::trajgp::{self, GPModel};
use crate::world::{self, CollisionParams, RobotModel, SdfGrid};

/// Immutable world bundle shared across objectives and planners.
#[derive(Debug, Clone)]
pub struct WorldView {
    pub robot: RobotModel,
    pub grid: SdfGrid,
    pub params: CollisionParams,
}

#[derive(Debug, Clone)]
pub struct Objective {
    gp: GPModel,
    world: Arc<WorldView>,
    rho: Vec<f64>,
    limit_weight: f64,
}

/// Cost components of one evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostParts {
    pub gp: f64,
    pub obstacle: f64,
    /// Obstacle cost with unit penalties (the feasibility measure).
    pub obstacle_unit: f64,
    pub limit: f64,
}

impl CostParts {
    pub fn total(&self) -> f64 {
        self.gp + self.obstacle + self.limit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClassLabel {
    A,
    B,
    C,
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassLabel::A => write!(f, "A"),
            ClassLabel::B => write!(f, "B"),
            ClassLabel::C => write!(f, "C"),
        }
    }
}

/// Difficulty classification of a problem instance from its initial
/// trajectory: mean per-waypoint cost and worst-case stuck fraction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProblemClass {
    pub f_bar: f64,
    pub stuck: f64,
    pub label: ClassLabel,
}

/// Boundary rule fitted to the published caption values; overlapping ranges
/// resolve to the harder class.
pub fn class_label(f_bar: f64, stuck: f64) -> ClassLabel {
    if f_bar > 0.60 && stuck > 0.88 {
        ClassLabel::C
    } else if f_bar > 0.18 && stuck > 0.41 {
        ClassLabel::B
    } else {
        ClassLabel::A
    }
}

impl Objective {
    pub fn new(gp: GPModel, world: Arc<WorldView>, rho: Vec<f64>, limit_weight: f64) -> Result<Self> {
        if rho.len() != gp.n_waypoints() {
            return Err(Error::Dimension {
                what: "penalty vector",
                expected: gp.n_waypoints(),
                got: rho.len(),
            });
        }
        if rho.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::parameter("penalty factors must be positive"));
        }
        Ok(Objective {
            gp,
            world,
            rho,
            limit_weight,
        })
    }

    pub fn gp(&self) -> &GPModel {
        &self.gp
    }

    pub fn world(&self) -> &WorldView {
        &self.world
    }

    pub fn world_arc(&self) -> Arc<WorldView> {
        Arc::clone(&self.world)
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn limit_weight(&self) -> f64 {
        self.limit_weight
    }

    /// Replace the GP model (same support grid).
    pub fn with_gp(&self, gp: GPModel) -> Result<Self> {
        Objective::new(gp, Arc::clone(&self.world), self.rho.clone(), self.limit_weight)
    }

    /// Multiply every penalty factor by `kappa`.
    pub fn scale_penalty(&self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::parameter("penalty scale must be positive"));
        }
        let rho = self.rho.iter().map(|r| r * kappa).collect();
        Objective::new(self.gp.clone(), Arc::clone(&self.world), rho, self.limit_weight)
    }

    pub fn dt(&self) -> f64 {
        self.gp.sde().dt()
    }

    pub fn evaluate_parts(&self, traj: &Trajectory) -> Result<CostParts> {
        let gp = trajgp::gp_cost(&self.gp, traj)?;
        let obstacle = world::obstacle_cost(
            traj,
            &self.world.robot,
            &self.world.grid,
            &self.world.params,
            &self.rho,
            self.dt(),
        )?;
        let unit = vec![1.0; traj.n_waypoints()];
        let obstacle_unit = world::obstacle_cost(
            traj,
            &self.world.robot,
            &self.world.grid,
            &self.world.params,
            &unit,
            self.dt(),
        )?;
        let limit = self.limit_weight * world::limit_cost(traj, &self.world.robot, &self.world.params);
        Ok(CostParts {
            gp,
            obstacle,
            obstacle_unit,
            limit,
        })
    }

    pub fn evaluate(&self, traj: &Trajectory) -> Result<f64> {
        let gp = trajgp::gp_cost(&self.gp, traj)?;
        let obstacle = world::obstacle_cost(
            traj,
            &self.world.robot,
            &self.world.grid,
            &self.world.params,
            &self.rho,
            self.dt(),
        )?;
        let limit =
            self.limit_weight * world::limit_cost(traj, &self.world.robot, &self.world.params);
        Ok(gp + obstacle + limit)
    }

    /// Unpenalized obstacle cost, the feasibility measure.
    pub fn obstacle_unit(&self, traj: &Trajectory) -> Result<f64> {
        let unit = vec![1.0; traj.n_waypoints()];
        world::obstacle_cost(
            traj,
            &self.world.robot,
            &self.world.grid,
            &self.world.params,
            &unit,
            self.dt(),
        )
    }

    /// True when every waypoint respects the joint-limit margins.
    pub fn within_limits(&self, traj: &Trajectory) -> bool {
        world::limit_cost(traj, &self.world.robot, &self.world.params) == 0.0
    }

    /// Worst per-state unpenalized collision cost over the GP-upsampled
    /// chain: the continuous-time feasibility gate. A trajectory with gate
    /// value ≤ gtol passes the interval safety check.
    pub fn continuous_gate(&self, traj: &Trajectory, n_intervals: usize) -> Result<f64> {
        let costs = world::upsampled_state_costs(
            traj,
            self.gp.sde(),
            &self.world.robot,
            &self.world.grid,
            &self.world.params,
            n_intervals,
        )?;
        Ok(costs.into_iter().fold(0.0, f64::max))
    }

    /// Sampler feasibility: no CCB penetration anywhere along the upsampled
    /// chain (a collision-free sample). Weaker than the full clearance gate,
    /// which the descent and penalty machinery establish afterwards.
    pub fn sample_feasible(&self, traj: &Trajectory, n_intervals: usize) -> Result<bool> {
        let pen = world::max_penetration(
            traj,
            self.gp.sde(),
            &self.world.robot,
            &self.world.grid,
            n_intervals,
        )?;
        Ok(pen <= 0.0)
    }

    /// Total gradient with start/goal state entries masked to zero.
    pub fn gradient(&self, traj: &Trajectory) -> Result<DVector<f64>> {
        let mut g = trajgp::gp_cost_gradient(&self.gp, traj)?;
        g += world::obstacle_cost_gradient(
            traj,
            &self.world.robot,
            &self.world.grid,
            &self.world.params,
            &self.rho,
            self.dt(),
        )?;
        g += world::limit_cost_gradient(traj, &self.world.robot, &self.world.params)
            * self.limit_weight;
        let s = traj.state_dim();
        let n = traj.n_waypoints();
        for i in 0..s {
            g[i] = 0.0;
            g[(n - 1) * s + i] = 0.0;
        }
        Ok(g)
    }

    /// Per-waypoint obstacle + limit cost share (unit penalties) for the
    /// noisy-waypoint filter. Each waypoint also absorbs the worst
    /// GP-interpolated interval state of its adjacent gaps, so collisions
    /// hiding between support times still mark their bracketing waypoints.
    pub fn per_waypoint_costs(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        let n = traj.n_waypoints();
        let d = traj.joint_dim();
        let n_intervals = 8;
        let fine = world::upsampled_state_costs(
            traj,
            self.gp.sde(),
            &self.world.robot,
            &self.world.grid,
            &self.world.params,
            n_intervals,
        )?;
        let mut out = Vec::with_capacity(n);
        for t in 0..n {
            let center = t * n_intervals;
            let lo = center.saturating_sub(n_intervals - 1);
            let hi = (center + n_intervals - 1).min(fine.len() - 1);
            let mut c = fine[lo..=hi].iter().cloned().fold(0.0, f64::max);
            let q = traj.position(t);
            for j in 0..d {
                let lo_j = self.world.robot.limits_min[j] + self.world.params.eps_d;
                let hi_j = self.world.robot.limits_max[j] - self.world.params.eps_d;
                if q[j] < lo_j {
                    c += self.limit_weight * (lo_j - q[j]);
                } else if q[j] > hi_j {
                    c += self.limit_weight * (q[j] - hi_j);
                }
            }
            out.push(c);
        }
        Ok(out)
    }

    /// Difficulty classification of `traj` (unit penalties): mean
    /// per-waypoint cost and the worst 17-state stuck fraction over
    /// `n_intervals`-fold upsampling.
    pub fn classify(&self, traj: &Trajectory, n_intervals: usize) -> Result<ProblemClass> {
        let unit = self.scale_to_unit()?;
        let total = unit.evaluate(traj)?;
        let n = traj.n_waypoints();
        let f_bar = total / n as f64;

        let flags = world::upsampled_collision_flags(
            traj,
            self.gp.sde(),
            &self.world.robot,
            &self.world.grid,
            n_intervals,
        )?;
        let window = 2 * n_intervals + 1;
        let mut worst = 0usize;
        for t in 0..n {
            let center = t * n_intervals;
            let lo = center.saturating_sub(n_intervals);
            let hi = (center + n_intervals).min(flags.len() - 1);
            let count = flags[lo..=hi].iter().filter(|&&f| f).count();
            worst = worst.max(count);
        }
        let stuck = worst as f64 / window as f64;
        Ok(ProblemClass {
            f_bar,
            stuck,
            label: class_label(f_bar, stuck),
        })
    }

    fn scale_to_unit(&self) -> Result<Self> {
        Objective::new(
            self.gp.clone(),
            Arc::clone(&self.world),
            vec![1.0; self.rho.len()],
            self.limit_weight,
        )
    }
}
