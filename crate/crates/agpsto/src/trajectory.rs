//! Discretized trajectory: per-waypoint state is (position, velocity), so a
//! robot with `d` joints has state size `2d` per support time.

use nalgebra::{DVector, DVectorView};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    data: DVector<f64>,
    n_waypoints: usize,
    joint_dim: usize,
}

impl Trajectory {
    pub fn from_vector(data: DVector<f64>, n_waypoints: usize, joint_dim: usize) -> Result<Self> {
        let expected = n_waypoints * 2 * joint_dim;
        if data.len() != expected {
            return Err(Error::Dimension {
                what: "trajectory vector",
                expected,
                got: data.len(),
            });
        }
        Ok(Trajectory {
            data,
            n_waypoints,
            joint_dim,
        })
    }

    /// Build from positions alone; velocities come from forward differences
    /// over `dt` (backward difference at the final waypoint).
    pub fn from_positions(positions: &[DVector<f64>], dt: f64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::parameter("trajectory needs at least 2 waypoints"));
        }
        let d = positions[0].len();
        let n = positions.len();
        let mut data = DVector::zeros(n * 2 * d);
        for i in 0..n {
            let vel = if i + 1 < n {
                (&positions[i + 1] - &positions[i]) / dt
            } else {
                (&positions[i] - &positions[i - 1]) / dt
            };
            data.rows_mut(i * 2 * d, d).copy_from(&positions[i]);
            data.rows_mut(i * 2 * d + d, d).copy_from(&vel);
        }
        Ok(Trajectory {
            data,
            n_waypoints: n,
            joint_dim: d,
        })
    }

    pub fn n_waypoints(&self) -> usize {
        self.n_waypoints
    }

    pub fn joint_dim(&self) -> usize {
        self.joint_dim
    }

    /// Full state size per waypoint (positions + velocities).
    pub fn state_dim(&self) -> usize {
        2 * self.joint_dim
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    pub fn position(&self, i: usize) -> DVectorView<'_, f64> {
        self.data.rows(i * 2 * self.joint_dim, self.joint_dim)
    }

    pub fn velocity(&self, i: usize) -> DVectorView<'_, f64> {
        self.data
            .rows(i * 2 * self.joint_dim + self.joint_dim, self.joint_dim)
    }

    pub fn state(&self, i: usize) -> DVectorView<'_, f64> {
        self.data.rows(i * 2 * self.joint_dim, 2 * self.joint_dim)
    }

    pub fn set_state(&mut self, i: usize, state: &DVector<f64>) {
        self.data
            .rows_mut(i * 2 * self.joint_dim, 2 * self.joint_dim)
            .copy_from(state);
    }

    pub fn positions(&self) -> Vec<DVector<f64>> {
        (0..self.n_waypoints)
            .map(|i| self.position(i).into_owned())
            .collect()
    }

    /// Indices (into the stacked state vector) of the position coordinates of
    /// interior waypoints `1..n-1`; this is the space stochastic sampling
    /// works in.
    pub fn interior_position_coords(&self) -> Vec<usize> {
        let d = self.joint_dim;
        let mut coords = Vec::with_capacity((self.n_waypoints.saturating_sub(2)) * d);
        for i in 1..self.n_waypoints.saturating_sub(1) {
            for j in 0..d {
                coords.push(i * 2 * d + j);
            }
        }
        coords
    }

    /// Rebuild the trajectory from new interior positions (stacked waypoint
    /// by waypoint). Interior velocities come from finite differences over
    /// `dt`; the clamped endpoint states are preserved as-is.
    pub fn with_interior_positions(&self, interior: &DVector<f64>, dt: f64) -> Result<Self> {
        let d = self.joint_dim;
        let n = self.n_waypoints;
        if interior.len() != (n - 2) * d {
            return Err(Error::Dimension {
                what: "interior positions",
                expected: (n - 2) * d,
                got: interior.len(),
            });
        }
        let mut positions = self.positions();
        for i in 1..n - 1 {
            positions[i] = interior.rows((i - 1) * d, d).into_owned();
        }
        let mut out = Trajectory::from_positions(&positions, dt)?;
        out.set_state(0, &self.state(0).into_owned());
        out.set_state(n - 1, &self.state(n - 1).into_owned());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_difference_velocities() {
        let p0 = DVector::from_vec(vec![0.0, 0.0]);
        let p1 = DVector::from_vec(vec![1.0, 2.0]);
        let p2 = DVector::from_vec(vec![2.0, 4.0]);
        let t = Trajectory::from_positions(&[p0, p1, p2], 0.5).unwrap();
        assert_eq!(t.velocity(0).as_slice(), &[2.0, 4.0]);
        assert_eq!(t.velocity(1).as_slice(), &[2.0, 4.0]);
        // backward difference at the end
        assert_eq!(t.velocity(2).as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn interior_coords_skip_endpoints() {
        let p: Vec<DVector<f64>> = (0..4).map(|i| DVector::from_vec(vec![i as f64])).collect();
        let t = Trajectory::from_positions(&p, 1.0).unwrap();
        assert_eq!(t.interior_position_coords(), vec![2, 4]);
    }
}
