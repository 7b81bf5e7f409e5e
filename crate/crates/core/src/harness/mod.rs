//! Scenario configuration, the closed-loop simulation runner and controller
//! comparison.

mod compare;

pub use compare::{compare_controllers, compare_specs, ComparisonEntry, ComparisonTable};

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controllers::{
    mbsmc_torque, nmbsmc_torque, pid_torque, tracking_error, ControllerKind, ControllerSpec, PidGains,
    SlidingParams,
};
use crate::dynamics::{step, JointState};
use crate::error::{check_len, Error, Result};
use crate::kinematics::{IkOptions, Pose};
use crate::metrics::{Divergence, LogRow, SimulationLog};
use crate::model::{load_model, RobotModel, BUILTIN_MODELS};
use crate::trajectory::{cartesian_to_joint, waypoint_trajectory_with, BlendProfile, CartesianPath, JointTrajectory};

/// Per-joint clamp on the PID error integral, rad s.
pub const PID_INTEGRAL_LIMIT: f64 = 2.0;

/// Text of the bundled benchmark scenario.
pub const CANONICAL_SCENARIO: &str = include_str!("../../data/scenarios/canonical.toml");

/// A gain given either once for all joints or per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainValue {
    Scalar(f64),
    PerJoint(Vec<f64>),
}

impl GainValue {
    fn expand(&self, what: &'static str, n: usize) -> Result<Vec<f64>> {
        match self {
            GainValue::Scalar(v) => Ok(vec![*v; n]),
            GainValue::PerJoint(v) => {
                check_len(what, n, v.len())?;
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlidingGains {
    pub p1: GainValue,
    pub p2: GainValue,
    pub p3: GainValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_layer: Option<f64>,
}

impl SlidingGains {
    pub fn resolve(&self, n: usize) -> Result<SlidingParams> {
        Ok(SlidingParams {
            p1: self.p1.expand("P1", n)?,
            p2: self.p2.expand("P2", n)?,
            p3: self.p3.expand("P3", n)?,
            boundary_layer: self.boundary_layer.unwrap_or(1.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGainValues {
    pub kp: GainValue,
    pub ki: GainValue,
    pub kd: GainValue,
}

impl PidGainValues {
    pub fn resolve(&self, n: usize) -> Result<PidGains> {
        Ok(PidGains {
            kp: self.kp.expand("Kp", n)?,
            ki: self.ki.expand("Ki", n)?,
            kd: self.kd.expand("Kd", n)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbsmc: Option<SlidingGains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nmbsmc: Option<SlidingGains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pid: Option<PidGainValues>,
}

/// How the reference is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Rest-to-rest blends through joint-space waypoints.
    Waypoints {
        #[serde(default)]
        profile: BlendProfile,
        waypoints: Vec<Vec<f64>>,
        durations: Vec<f64>,
    },
    /// Straight-line Cartesian segments; each pose is `[x, y, z, roll, pitch, yaw]`.
    Cartesian {
        poses: Vec<[f64; 6]>,
        durations: Vec<f64>,
        seed: Vec<f64>,
    },
    /// A trajectory CSV (`t, q.., qd.., qdd..`), relative to the scenario file.
    File { path: String },
}

fn default_true() -> bool {
    true
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Builtin model name or a path to a model TOML.
    pub model: String,
    pub dt: f64,
    /// Simulated time; the final reference sample is held past the end of the
    /// trajectory.
    pub duration: f64,
    pub controller: ControllerKind,
    /// Clamp torques to the model limits.
    #[serde(default = "default_true")]
    pub saturate: bool,
    /// Multiplies link masses and inertias of the simulated plant only.
    #[serde(default = "default_scale")]
    pub mass_scale: f64,
    /// Default seed for gain tuning.
    #[serde(default)]
    pub rng_seed: u64,
    /// Added to the first reference position to form the initial state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_error: Option<Vec<f64>>,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub gains: GainTable,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "scenario",
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "scenario",
            message: e.to_string(),
        })
    }

    /// The bundled 20 s pick-and-place loop for the ur5e_like arm.
    pub fn canonical() -> Self {
        Self::from_toml(CANONICAL_SCENARIO).expect("bundled canonical scenario parses")
    }

    /// Gains of `kind` from the scenario, resolved for `n` joints.
    pub fn controller_spec(&self, kind: ControllerKind, n: usize) -> Result<ControllerSpec> {
        let missing = || Error::InvalidArgument(format!("scenario `{}` has no [gains.{}] table", self.name, kind));
        let spec = match kind {
            ControllerKind::Mbsmc => ControllerSpec::Mbsmc(self.gains.mbsmc.as_ref().ok_or_else(missing)?.resolve(n)?),
            ControllerKind::Nmbsmc => {
                ControllerSpec::Nmbsmc(self.gains.nmbsmc.as_ref().ok_or_else(missing)?.resolve(n)?)
            }
            ControllerKind::Pid => ControllerSpec::Pid(self.gains.pid.as_ref().ok_or_else(missing)?.resolve(n)?),
        };
        spec.validate(n)?;
        Ok(spec)
    }

    /// Resolves the model, plant and reference. Relative paths are taken
    /// against `base_dir`.
    pub fn prepare(&self, base_dir: Option<&Path>) -> Result<PreparedScenario> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt {} must be > 0", self.dt)));
        }
        if !(self.mass_scale > 0.0 && self.mass_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass_scale {} must be > 0", self.mass_scale)));
        }
        let model = resolve_model(&self.model, base_dir)?;
        let n = model.dof();
        let trajectory = match &self.trajectory {
            TrajectorySpec::Waypoints {
                profile,
                waypoints,
                durations,
            } => waypoint_trajectory_with(waypoints, durations, self.dt, *profile)?,
            TrajectorySpec::Cartesian { poses, durations, seed } => {
                let path = CartesianPath {
                    waypoints: poses
                        .iter()
                        .map(|p| Pose::from_rpy(Vector3::new(p[0], p[1], p[2]), p[3], p[4], p[5]))
                        .collect(),
                    segment_durations: durations.clone(),
                };
                let options = IkOptions {
                    tol: 1e-10,
                    ..IkOptions::default()
                };
                cartesian_to_joint(&model, &path, seed, self.dt, &options)?
            }
            TrajectorySpec::File { path } => {
                let file = fs::File::open(resolve_path(path, base_dir))?;
                let traj = JointTrajectory::read_csv(file)?;
                if (traj.dt - self.dt).abs() > 1e-12 * self.dt {
                    return Err(Error::InvalidArgument(format!(
                        "trajectory file dt {} differs from scenario dt {}",
                        traj.dt, self.dt
                    )));
                }
                traj
            }
        };
        check_len("trajectory", n, trajectory.dof())?;
        let steps = (self.duration / self.dt).round();
        if !(steps >= 0.0) || (steps * self.dt - self.duration).abs() > 1e-9 * self.duration.max(self.dt) {
            return Err(Error::InvalidArgument(format!(
                "duration {} is not a whole number of dt = {} steps",
                self.duration, self.dt
            )));
        }
        if self.duration + 1e-9 * self.dt < trajectory.duration() {
            return Err(Error::InvalidArgument(format!(
                "duration {} is shorter than the trajectory ({} s)",
                self.duration,
                trajectory.duration()
            )));
        }
        if let Some(e) = &self.initial_error {
            check_len("initial error", n, e.len())?;
        }
        Ok(PreparedScenario {
            plant: model.with_mass_scale(self.mass_scale),
            model,
            trajectory,
            steps: steps as usize,
            scenario: self.clone(),
        })
    }
}

fn resolve_path(path: &str, base_dir: Option<&Path>) -> PathBuf {
    let p = Path::new(path);
    match base_dir {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

/// A builtin model name, or a model TOML path.
pub fn resolve_model(spec: &str, base_dir: Option<&Path>) -> Result<RobotModel> {
    if BUILTIN_MODELS.contains(&spec) {
        return RobotModel::builtin(spec);
    }
    let text = fs::read_to_string(resolve_path(spec, base_dir))?;
    load_model(&text)
}

/// A scenario with its model, perturbed plant and reference resolved.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub scenario: Scenario,
    /// Nominal model used by the controller.
    pub model: RobotModel,
    /// Simulated plant (mass-scaled copy of `model`).
    pub plant: RobotModel,
    pub trajectory: JointTrajectory,
    /// Integration steps; the log has `steps + 1` rows.
    pub steps: usize,
}

impl PreparedScenario {
    pub fn load(path: &Path) -> Result<Self> {
        let scenario = Scenario::from_toml(&fs::read_to_string(path)?)?;
        scenario.prepare(path.parent())
    }

    pub fn dof(&self) -> usize {
        self.model.dof()
    }

    /// The scenario's own controller and gains.
    pub fn default_spec(&self) -> Result<ControllerSpec> {
        self.scenario.controller_spec(self.scenario.controller, self.dof())
    }

    pub fn spec_for(&self, kind: ControllerKind) -> Result<ControllerSpec> {
        self.scenario.controller_spec(kind, self.dof())
    }

    /// SHA-256 of the reference samples, hex encoded.
    pub fn reference_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.trajectory.dt.to_le_bytes());
        for s in &self.trajectory.samples {
            h.update(s.t.to_le_bytes());
            for v in s.position.iter().chain(&s.velocity).chain(&s.acceleration) {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Runs the closed loop with `spec`. One torque is computed per step and
    /// held over the RK4 step. A non-finite state ends the run early with
    /// [`SimulationLog::divergence`] set; configuration problems are errors.
    ///
    /// PID has no sliding surface, so its rows log `sigma = 0` and `V = 0`.
    pub fn run(&self, spec: &ControllerSpec) -> Result<SimulationLog> {
        let n = self.dof();
        spec.validate(n)?;
        let dt = self.scenario.dt;
        let first = self.trajectory.reference_at(0);
        let mut q = first.position.clone();
        if let Some(e) = &self.scenario.initial_error {
            q += DVector::from_column_slice(e);
        }
        let mut state = JointState::new(q, first.velocity.clone(), 0.0);
        let mut integral = DVector::zeros(n);
        let limits: Vec<f64> = self.plant.limits.joints.iter().map(|l| l.torque_max).collect();

        let mut log = SimulationLog::new(dt, n);
        log.rows.reserve(self.steps + 1);
        for k in 0..=self.steps {
            let t = k as f64 * dt;
            state.t = t;
            let reference = self.trajectory.reference_at(k);
            let computed = match spec {
                ControllerSpec::Mbsmc(p) => {
                    mbsmc_torque(&self.model, &state, &reference, p).map(|(tau, d)| (tau, d.sigma, d.lyapunov))
                }
                ControllerSpec::Nmbsmc(p) => tracking_error(&state, &reference)
                    .and_then(|(e, ed)| nmbsmc_torque(&e, &ed, p))
                    .map(|(tau, d)| (tau, d.sigma, d.lyapunov)),
                ControllerSpec::Pid(g) => tracking_error(&state, &reference).and_then(|(e, ed)| {
                    let tau = pid_torque(&e, &integral, &ed, g)?;
                    integral += e * dt;
                    integral.apply(|v| *v = v.clamp(-PID_INTEGRAL_LIMIT, PID_INTEGRAL_LIMIT));
                    Ok((tau, DVector::zeros(n), 0.0))
                }),
            };
            let (mut tau, sigma, v) = match computed {
                Ok(out) => out,
                Err(e) => {
                    log.divergence = Some(Divergence {
                        step: k,
                        t,
                        message: e.to_string(),
                    });
                    break;
                }
            };
            if self.scenario.saturate {
                for (x, lim) in tau.iter_mut().zip(&limits) {
                    *x = x.clamp(-lim, *lim);
                }
            }
            log.rows.push(LogRow {
                t,
                q: state.q.iter().copied().collect(),
                qd: state.qd.iter().copied().collect(),
                tau: tau.iter().copied().collect(),
                sigma: sigma.iter().copied().collect(),
                v,
                q_des: reference.position.iter().copied().collect(),
                qd_des: reference.velocity.iter().copied().collect(),
            });
            if k == self.steps {
                break;
            }
            match step(&self.plant, &state, &tau, dt) {
                Ok(next) => state = next,
                Err(e @ (Error::NonFinite { .. } | Error::SingularInertia { .. })) => {
                    log.divergence = Some(Divergence {
                        step: k + 1,
                        t: t + dt,
                        message: e.to_string(),
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(log)
    }
}

/// Runs the scenario's configured controller. Relative paths in the scenario
/// resolve against the working directory.
pub fn run_scenario(scenario: &Scenario) -> Result<SimulationLog> {
    let prepared = scenario.prepare(None)?;
    prepared.run(&prepared.default_spec()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hold_scenario(controller: ControllerKind) -> Scenario {
        Scenario::from_toml(&format!(
            r#"
name = "hold"
model = "ur5e_like"
dt = 0.001
duration = 0.3
controller = "{controller}"

[trajectory]
kind = "waypoints"
waypoints = [[0.1, -0.4, 0.3, -0.2, 0.3, 0.1], [0.1, -0.4, 0.3, -0.2, 0.3, 0.1]]
durations = [0.2]

[gains.mbsmc]
p1 = 100.0
p2 = 1.0
p3 = 60.0

[gains.nmbsmc]
p1 = 100.0
p2 = 1.0
p3 = 60.0

[gains.pid]
kp = [800.0, 800.0, 600.0, 100.0, 100.0, 50.0]
ki = 50.0
kd = 20.0
"#
        ))
        .unwrap()
    }

    #[test]
    fn canonical_scenario_prepares() {
        let p = Scenario::canonical().prepare(None).unwrap();
        assert_eq!(p.dof(), 6);
        assert_eq!(p.steps, 20_000);
        for kind in ControllerKind::ALL {
            p.spec_for(kind).unwrap();
        }
    }

    #[test]
    fn equilibrium_stays_on_the_manifold() {
        let log = run_scenario(&hold_scenario(ControllerKind::Mbsmc)).unwrap();
        assert_eq!(log.len(), 301);
        assert!(!log.diverged());
        for r in &log.rows {
            assert!(r.sigma.iter().all(|s| s.abs() < 1e-9), "{:?}", r.sigma);
        }
    }

    #[test]
    fn equivalent_control_keeps_a_moving_reference_on_the_manifold() {
        let run = |dt: f64| {
            let mut s = Scenario::canonical();
            s.dt = dt;
            s.trajectory = TrajectorySpec::Waypoints {
                profile: BlendProfile::Nonic,
                waypoints: vec![vec![0.0, -0.4, 0.3, -0.2, 0.3, 0.0], vec![0.12, -0.3, 0.2, -0.3, 0.4, 0.1]],
                durations: vec![4.0],
            };
            s.duration = 4.0;
            let p = s.prepare(None).unwrap();
            let params = SlidingParams::uniform(6, 100.0, 1.0, 0.0);
            let log = p.run(&ControllerSpec::Mbsmc(params.clone())).unwrap();
            (p, params, log)
        };
        let max_rate = |log: &SimulationLog| {
            log.rows
                .windows(2)
                .flat_map(|w| w[0].sigma.iter().zip(&w[1].sigma).map(|(a, b)| ((b - a) / log.dt).abs()))
                .fold(0.0, f64::max)
        };
        // At each sample the applied torque is exactly the equivalent control.
        let (p, params, log) = run(1e-3);
        for k in (0..log.len()).step_by(500) {
            let r = &log.rows[k];
            let reference = p.trajectory.reference_at(k);
            let state = JointState::new(DVector::from_vec(r.q.clone()), DVector::from_vec(r.qd.clone()), r.t);
            let qdd = crate::dynamics::forward_dynamics(&p.plant, &state, &DVector::from_vec(r.tau.clone())).unwrap();
            for i in 0..6 {
                let e_dot = r.qd[i] - reference.velocity[i];
                let rate = params.p2[i] * (qdd[i] - reference.acceleration[i]) + params.p1[i] * e_dot;
                assert!(rate.abs() < 1e-9, "instantaneous sigma dot {rate:e}");
            }
        }
        // Between samples the torque is held, so the sampled rate is first order in dt.
        let coarse = max_rate(&log);
        let fine = max_rate(&run(5e-4).2);
        assert!(coarse < 1e-2, "{coarse:e}");
        assert!((coarse / fine - 2.0).abs() < 0.2, "{coarse:e} -> {fine:e}");
    }

    #[test]
    fn runs_are_deterministic() {
        for kind in ControllerKind::ALL {
            let mut s = hold_scenario(kind);
            s.initial_error = Some(vec![0.01, -0.02, 0.0, 0.01, 0.0, -0.01]);
            let a = run_scenario(&s).unwrap();
            let b = run_scenario(&s).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn saturation_bounds_logged_torque() {
        let mut s = hold_scenario(ControllerKind::Pid);
        s.initial_error = Some(vec![0.5, -0.5, 0.5, 0.5, 0.5, 0.5]);
        let log = run_scenario(&s).unwrap();
        let m = RobotModel::ur5e_like();
        for r in &log.rows {
            for (t, l) in r.tau.iter().zip(&m.limits.joints) {
                assert!(t.abs() <= l.torque_max);
            }
        }
        assert!(log.rows[0].tau.iter().zip(&m.limits.joints).any(|(t, l)| t.abs() == l.torque_max));
    }

    #[test]
    fn destabilising_gains_are_flagged_not_thrown() {
        let mut s = hold_scenario(ControllerKind::Pid);
        s.saturate = false;
        s.gains.pid = Some(PidGainValues {
            kp: GainValue::Scalar(1e7),
            ki: GainValue::Scalar(0.0),
            kd: GainValue::Scalar(1e5),
        });
        let log = run_scenario(&s).unwrap();
        let d = log.divergence.clone().expect("diverged");
        assert!(d.step > 0 && d.step < 300);
        assert_eq!(log.len(), d.step);
    }

    #[test]
    fn bad_configuration_is_an_error() {
        let mut s = hold_scenario(ControllerKind::Mbsmc);
        s.gains.mbsmc.as_mut().unwrap().p2 = GainValue::Scalar(0.0);
        assert!(matches!(run_scenario(&s), Err(Error::Transversality { .. })));
        let mut s = hold_scenario(ControllerKind::Mbsmc);
        s.duration = 0.1;
        assert!(run_scenario(&s).is_err());
        let mut s = hold_scenario(ControllerKind::Mbsmc);
        s.mass_scale = 0.0;
        assert!(run_scenario(&s).is_err());
        assert!(Scenario::from_toml("name = 1").is_err());
    }

    #[test]
    fn scenario_toml_round_trip() {
        let s = Scenario::canonical();
        let back = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
