//! Scenario and configuration files (TOML).
//!
//! A scenario describes one planning problem: obstacle primitives, grid
//! bounds and resolution, the robot, start/goal joint vectors, the collision
//! margin, and joint limits. The schema is versioned through
//! `schema_version`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::agd::StepRule;
use crate::asto::LearnMode;
use crate::error::{Error, Result};
use crate::objective::WorldView;
use crate::planner::PlannerConfig;
use crate::world::{Ccb, CollisionParams, LinkInertia, Primitive, RobotModel, SdfGrid};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub id: String,
    /// Expected difficulty class ("A" | "B" | "C"), informational.
    #[serde(default)]
    pub class_hint: Option<String>,
    /// Repeated trials in benchmark sweeps.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub world: WorldSection,
    pub robot: RobotSection,
    pub task: TaskSection,
}

fn default_repeats() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldSection {
    /// `[[min_x, min_y], [max_x, max_y]]` in meters.
    pub bounds: [[f64; 2]; 2],
    /// Grid resolution in meters.
    #[serde(default = "default_cell")]
    pub cell: f64,
    /// Obstacle safety margin ε (meters).
    pub eps: f64,
    /// Joint-limit margin ε_d (radians).
    #[serde(default = "default_eps_d")]
    pub eps_d: f64,
    #[serde(default)]
    pub obstacles: Vec<Primitive>,
}

fn default_cell() -> f64 {
    0.01
}

fn default_eps_d() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobotSection {
    Point {
        radius: f64,
        limits_min: Vec<f64>,
        limits_max: Vec<f64>,
    },
    PlanarArm {
        base: [f64; 2],
        link_lengths: Vec<f64>,
        /// CCB radius per link when `ccbs` is not given explicitly.
        #[serde(default)]
        link_radii: Vec<f64>,
        /// Collision-check balls per link (placed at even fractions).
        #[serde(default = "default_ccbs_per_link")]
        ccbs_per_link: usize,
        /// Explicit attachments override the generated ones.
        #[serde(default)]
        ccbs: Vec<Ccb>,
        masses: Vec<f64>,
        /// Center-of-mass fraction along each link.
        #[serde(default)]
        com_fractions: Vec<f64>,
        izz: Vec<f64>,
        limits_min: Vec<f64>,
        limits_max: Vec<f64>,
    },
}

fn default_ccbs_per_link() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSection {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
}

/// A loaded, validated planning problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub class_hint: Option<String>,
    pub repeats: usize,
    pub world: Arc<WorldView>,
    pub start: DVector<f64>,
    pub goal: DVector<f64>,
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::Scenario(format!("parse error: {e}")))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Scenario(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn build(&self) -> Result<Scenario> {
        let robot = match &self.robot {
            RobotSection::Point {
                radius,
                limits_min,
                limits_max,
            } => RobotModel::point(
                *radius,
                DVector::from_vec(limits_min.clone()),
                DVector::from_vec(limits_max.clone()),
            )?,
            RobotSection::PlanarArm {
                base,
                link_lengths,
                link_radii,
                ccbs_per_link,
                ccbs,
                masses,
                com_fractions,
                izz,
                limits_min,
                limits_max,
            } => {
                let n = link_lengths.len();
                if masses.len() != n || izz.len() != n {
                    return Err(Error::Scenario(
                        "masses and izz must cover every link".into(),
                    ));
                }
                let coms = if com_fractions.is_empty() {
                    vec![0.5; n]
                } else if com_fractions.len() == n {
                    com_fractions.clone()
                } else {
                    return Err(Error::Scenario("com_fractions must cover every link".into()));
                };
                let ccbs = if !ccbs.is_empty() {
                    ccbs.clone()
                } else {
                    if link_radii.len() != n {
                        return Err(Error::Scenario(
                            "link_radii must cover every link when ccbs are generated".into(),
                        ));
                    }
                    let per = (*ccbs_per_link).max(1);
                    let mut out = Vec::with_capacity(n * per);
                    for (l, &r) in link_radii.iter().enumerate() {
                        for k in 1..=per {
                            out.push(Ccb {
                                link: l,
                                fraction: k as f64 / per as f64,
                                radius: r,
                            });
                        }
                    }
                    out
                };
                let inertia = (0..n)
                    .map(|i| LinkInertia {
                        mass: masses[i],
                        com_fraction: coms[i],
                        izz: izz[i],
                    })
                    .collect();
                RobotModel::planar_arm(
                    *base,
                    link_lengths.clone(),
                    ccbs,
                    inertia,
                    DVector::from_vec(limits_min.clone()),
                    DVector::from_vec(limits_max.clone()),
                )?
            }
        };
        let d = robot.dof();
        if self.task.start.len() != d || self.task.goal.len() != d {
            return Err(Error::Scenario(format!(
                "start/goal must have {d} coordinates"
            )));
        }
        let grid = SdfGrid::from_primitives(
            self.world.bounds[0],
            self.world.bounds[1],
            self.world.cell,
            &self.world.obstacles,
        )?;
        let params = CollisionParams::new(self.world.eps, self.world.eps_d)?;
        Ok(Scenario {
            id: self.id.clone(),
            class_hint: self.class_hint.clone(),
            repeats: self.repeats,
            world: Arc::new(WorldView {
                robot,
                grid,
                params,
            }),
            start: DVector::from_vec(self.task.start.clone()),
            goal: DVector::from_vec(self.task.goal.clone()),
        })
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
    ScenarioFile::from_toml(&text)?.build()
}

/// Load every `*.toml` scenario in a directory, sorted by id.
pub fn load_scenario_dir(dir: &Path) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::Scenario(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "toml") {
            out.push(load_scenario(&path)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Scenario(format!(
            "no scenario files in {}",
            dir.display()
        )));
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Optional overrides of the planner defaults, loadable from TOML.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(default)]
    pub planner: PlannerOverrides,
    #[serde(default)]
    pub agd: AgdOverrides,
    #[serde(default)]
    pub asto: AstoOverrides,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlannerOverrides {
    pub n_pen: Option<usize>,
    pub n_lip: Option<usize>,
    pub kappa: Option<f64>,
    pub g_tol: Option<f64>,
    pub rho0: Option<f64>,
    pub limit_weight: Option<f64>,
    pub n_iti: Option<usize>,
    pub tau_ip: Option<f64>,
    pub n_intervals: Option<usize>,
    pub n_uf: Option<usize>,
    pub noisy_z: Option<f64>,
    pub dt0: Option<f64>,
    pub k0_scale: Option<f64>,
    pub qc_scale: Option<f64>,
    pub n_fixed_waypoints: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AgdOverrides {
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub c_low: Option<f64>,
    pub c_up: Option<f64>,
    pub n_ag: Option<usize>,
    pub f_tol: Option<f64>,
    pub theta_tol: Option<f64>,
    pub phi_tol: Option<f64>,
    pub l_tol: Option<f64>,
    pub max_reestimates: Option<usize>,
    /// "sampled" | "midpoint" | "leapfrog"
    pub step_rule: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AstoOverrides {
    pub k_samples: Option<usize>,
    pub m_star: Option<usize>,
    pub h_p: Option<f64>,
    pub l_r: Option<f64>,
    /// "ama" | "ema" | "qadam"
    pub mode: Option<String>,
    pub alpha_mu: Option<f64>,
    pub alpha_kappa: Option<f64>,
    pub k_upper_tol: Option<f64>,
    pub k_lower_tol: Option<f64>,
    pub n_asto_min: Option<usize>,
    pub n_asto_max: Option<usize>,
    pub cf_tol: Option<f64>,
    pub k_eps_scale: Option<f64>,
    pub reweight_retained: Option<bool>,
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Scenario(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Apply the overrides on top of `base`.
    pub fn apply(&self, base: &PlannerConfig) -> Result<PlannerConfig> {
        let mut cfg = base.clone();
        let p = &self.planner;
        macro_rules! set {
            ($target:expr, $field:expr) => {
                if let Some(v) = $field {
                    $target = v;
                }
            };
        }
        set!(cfg.n_pen, p.n_pen);
        set!(cfg.n_lip, p.n_lip);
        set!(cfg.kappa, p.kappa);
        set!(cfg.g_tol, p.g_tol);
        set!(cfg.rho0, p.rho0);
        set!(cfg.limit_weight, p.limit_weight);
        set!(cfg.n_iti, p.n_iti);
        set!(cfg.tau_ip, p.tau_ip);
        set!(cfg.n_intervals, p.n_intervals);
        set!(cfg.n_uf, p.n_uf);
        set!(cfg.noisy_z, p.noisy_z);
        set!(cfg.dt0, p.dt0);
        set!(cfg.k0_scale, p.k0_scale);
        set!(cfg.qc_scale, p.qc_scale);
        set!(cfg.n_fixed_waypoints, p.n_fixed_waypoints);

        let a = &self.agd;
        set!(cfg.agd.theta1, a.theta1);
        set!(cfg.agd.theta2, a.theta2);
        set!(cfg.agd.c_low, a.c_low);
        set!(cfg.agd.c_up, a.c_up);
        set!(cfg.agd.n_ag, a.n_ag);
        set!(cfg.agd.f_tol, a.f_tol);
        set!(cfg.agd.theta_tol, a.theta_tol);
        set!(cfg.agd.phi_tol, a.phi_tol);
        set!(cfg.agd.l_tol, a.l_tol);
        set!(cfg.agd.max_reestimates, a.max_reestimates);
        if let Some(rule) = &a.step_rule {
            cfg.agd.step_rule = match rule.as_str() {
                "sampled" => StepRule::Sampled,
                "midpoint" => StepRule::Midpoint,
                "leapfrog" => StepRule::Leapfrog,
                other => {
                    return Err(Error::Scenario(format!("unknown step_rule '{other}'")));
                }
            };
        }

        let s = &self.asto;
        set!(cfg.asto.k_samples, s.k_samples);
        set!(cfg.asto.m_star, s.m_star);
        set!(cfg.asto.h_p, s.h_p);
        set!(cfg.asto.l_r, s.l_r);
        set!(cfg.asto.alpha_mu, s.alpha_mu);
        set!(cfg.asto.alpha_kappa, s.alpha_kappa);
        if s.k_upper_tol.is_some() {
            cfg.asto.k_upper_tol = s.k_upper_tol;
        }
        set!(cfg.asto.k_lower_tol, s.k_lower_tol);
        set!(cfg.asto.n_asto.0, s.n_asto_min);
        set!(cfg.asto.n_asto.1, s.n_asto_max);
        set!(cfg.asto.cf_tol, s.cf_tol);
        set!(cfg.asto.k_eps_scale, s.k_eps_scale);
        set!(cfg.asto.reweight_retained, s.reweight_retained);
        if let Some(mode) = &s.mode {
            cfg.asto.mode = match mode.as_str() {
                "ama" => LearnMode::Ama,
                "ema" => LearnMode::Ema,
                "qadam" => LearnMode::QAdam,
                other => {
                    return Err(Error::Scenario(format!("unknown learn mode '{other}'")));
                }
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const POINT_SCENARIO: &str = r#"
schema_version = 1
id = "test_point"
class_hint = "A"

[world]
bounds = [[-1.0, -1.0], [1.0, 1.0]]
cell = 0.02
eps = 0.05

[[world.obstacles]]
kind = "disc"
center = [0.0, 0.4]
radius = 0.2

[robot]
kind = "point"
radius = 0.04
limits_min = [-1.0, -1.0]
limits_max = [1.0, 1.0]

[task]
start = [-0.8, 0.0]
goal = [0.8, 0.0]
"#;

    const ARM_SCENARIO: &str = r#"
schema_version = 1
id = "test_arm"

[world]
bounds = [[-1.2, -1.2], [1.2, 1.2]]
eps = 0.05

[robot]
kind = "planar_arm"
base = [0.0, 0.0]
link_lengths = [0.4, 0.3, 0.2]
link_radii = [0.04, 0.035, 0.03]
masses = [1.0, 0.7, 0.4]
izz = [0.02, 0.01, 0.005]
limits_min = [-3.1, -2.8, -2.8]
limits_max = [3.1, 2.8, 2.8]

[task]
start = [0.0, 0.0, 0.0]
goal = [1.5, 0.5, -0.5]
"#;

    #[test]
    fn parse_and_build_point_scenario() {
        let file = ScenarioFile::from_toml(POINT_SCENARIO).unwrap();
        let s = file.build().unwrap();
        assert_eq!(s.id, "test_point");
        assert_eq!(s.world.robot.dof(), 2);
        assert_eq!(s.repeats, 5);
        assert_eq!(s.class_hint.as_deref(), Some("A"));
    }

    #[test]
    fn parse_and_build_arm_scenario() {
        let file = ScenarioFile::from_toml(ARM_SCENARIO).unwrap();
        let s = file.build().unwrap();
        assert_eq!(s.world.robot.dof(), 3);
        assert_eq!(s.world.robot.n_ccbs(), 6);
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let text = POINT_SCENARIO.replace("schema_version = 1", "schema_version = 99");
        assert!(ScenarioFile::from_toml(&text).is_err());
    }

    #[test]
    fn rejects_malformed_toml() {
        assert!(ScenarioFile::from_toml("this is not toml [").is_err());
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let text = POINT_SCENARIO.replace("start = [-0.8, 0.0]", "start = [-0.8]");
        let file = ScenarioFile::from_toml(&text).unwrap();
        assert!(file.build().is_err());
    }

    #[test]
    fn config_overrides_apply() {
        let toml_text = r#"
[agd]
theta1 = 2.828
theta2 = 0.125

[planner]
kappa = 0.5

[asto]
mode = "ema"
alpha_mu = 0.2
alpha_kappa = 0.2
"#;
        let cfg_file = ConfigFile::from_toml(toml_text).unwrap();
        let cfg = cfg_file.apply(&PlannerConfig::default()).unwrap();
        assert_eq!(cfg.agd.theta1, 2.828);
        assert_eq!(cfg.agd.theta2, 0.125);
        assert_eq!(cfg.kappa, 0.5);
        assert_eq!(cfg.asto.mode, LearnMode::Ema);
    }

    #[test]
    fn config_rejects_infeasible_acceleration() {
        let toml_text = r#"
[agd]
theta1 = 1.0
theta2 = 0.5
"#;
        let cfg_file = ConfigFile::from_toml(toml_text).unwrap();
        assert!(cfg_file.apply(&PlannerConfig::default()).is_err());
    }
}
