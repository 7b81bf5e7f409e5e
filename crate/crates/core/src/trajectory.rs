//! Joint-space reference trajectories: polynomial blends through waypoints,
//! Cartesian paths converted through DLS IK, sampling and CSV I/O.

use std::io::{Read, Write};

use nalgebra::{DVector, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::controllers::Reference;
use crate::error::{check_len, Error, Result};
use crate::kinematics::{dls_ik, IkOptions, Pose};
use crate::model::RobotModel;

/// Rest-to-rest blend `s(u)`, `u in [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendProfile {
    /// `10u^3 - 15u^4 + 6u^5`: zero velocity and acceleration at both ends.
    #[default]
    Quintic,
    /// `126u^5 - 420u^6 + 540u^7 - 315u^8 + 70u^9`: additionally zero jerk
    /// and snap at both ends, so segments join with continuous snap.
    Nonic,
}

impl BlendProfile {
    /// `(s, s', s'')` at `u`.
    pub fn eval(self, u: f64) -> (f64, f64, f64) {
        match self {
            BlendProfile::Quintic => {
                let u2 = u * u;
                let u3 = u2 * u;
                (
                    u3 * (10.0 + u * (-15.0 + 6.0 * u)),
                    u2 * (30.0 + u * (-60.0 + 30.0 * u)),
                    u * (60.0 + u * (-180.0 + 120.0 * u)),
                )
            }
            BlendProfile::Nonic => {
                let u2 = u * u;
                let u3 = u2 * u;
                let u4 = u2 * u2;
                let s = u4 * u * (126.0 + u * (-420.0 + u * (540.0 + u * (-315.0 + 70.0 * u))));
                let ds = u4 * (630.0 + u * (-2520.0 + u * (3780.0 + u * (-2520.0 + 630.0 * u))));
                let dds = u3 * (2520.0 + u * (-12600.0 + u * (22680.0 + u * (-17640.0 + 5040.0 * u))));
                (s, ds, dds)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

/// Uniformly sampled joint reference. Sample `k` sits at `t = k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    pub dt: f64,
    pub samples: Vec<TrajectorySample>,
}

impl JointTrajectory {
    pub fn new(dt: f64, samples: Vec<TrajectorySample>) -> Result<Self> {
        let traj = Self { dt, samples };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("trajectory dt {} must be > 0", self.dt)));
        }
        let Some(first) = self.samples.first() else {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        };
        let n = first.position.len();
        for (k, s) in self.samples.iter().enumerate() {
            check_len("trajectory position", n, s.position.len())?;
            check_len("trajectory velocity", n, s.velocity.len())?;
            check_len("trajectory acceleration", n, s.acceleration.len())?;
            let expected = k as f64 * self.dt;
            if (s.t - expected).abs() > 1e-12 * expected.abs().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "sample {k} at t = {} is off the uniform grid (expected {expected})",
                    s.t
                )));
            }
            let finite = s.position.iter().chain(&s.velocity).chain(&s.acceleration).all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidArgument(format!("sample {k} is not finite")));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.samples.first().map_or(0, |s| s.position.len())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Reference at sample index `k`; indices past the end hold the final
    /// position at rest.
    pub fn reference_at(&self, k: usize) -> Reference {
        match self.samples.get(k) {
            Some(s) => Reference {
                position: DVector::from_column_slice(&s.position),
                velocity: DVector::from_column_slice(&s.velocity),
                acceleration: DVector::from_column_slice(&s.acceleration),
            },
            None => Reference::hold(&self.samples[self.samples.len() - 1].position),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.dof();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for prefix in ["q", "qd", "qdd"] {
            header.extend((1..=n).map(|i| format!("{prefix}{i}")));
        }
        w.write_record(&header).map_err(csv_err)?;
        for s in &self.samples {
            let row = std::iter::once(s.t)
                .chain(s.position.iter().copied())
                .chain(s.velocity.iter().copied())
                .chain(s.acceleration.iter().copied())
                .map(|v| v.to_string());
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`JointTrajectory::write_csv`]. `dt` is
    /// taken from the first two timestamps.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers().map_err(csv_err)?.len();
        if width < 4 || (width - 1) % 3 != 0 {
            return Err(Error::Parse {
                what: "trajectory CSV",
                message: format!("expected 1 + 3n columns, got {width}"),
            });
        }
        let n = (width - 1) / 3;
        let mut samples = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            let values = record
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    what: "trajectory CSV",
                    message: e.to_string(),
                })?;
            samples.push(TrajectorySample {
                t: values[0],
                position: values[1..=n].to_vec(),
                velocity: values[n + 1..=2 * n].to_vec(),
                acceleration: values[2 * n + 1..].to_vec(),
            });
        }
        if samples.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: samples.len(),
            });
        }
        let dt = samples[1].t - samples[0].t;
        Self::new(dt, samples)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        what: "CSV",
        message: e.to_string(),
    }
}

/// Ordered poses with the duration of each segment between them.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianPath {
    pub waypoints: Vec<Pose>,
    pub segment_durations: Vec<f64>,
}

impl CartesianPath {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::InvalidArgument("a Cartesian path needs at least 2 waypoints".into()));
        }
        check_len("segment durations", self.waypoints.len() - 1, self.segment_durations.len())?;
        if let Some(d) = self.segment_durations.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::InvalidArgument(format!("segment duration {d} must be > 0")));
        }
        if !self.waypoints.iter().all(Pose::is_finite) {
            return Err(Error::InvalidArgument("Cartesian waypoint is not finite".into()));
        }
        Ok(())
    }
}

/// Number of `dt` steps in `duration`, which must be a whole multiple.
fn step_count(duration: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt {dt} must be > 0")));
    }
    if !(duration.is_finite() && duration >= dt) {
        return Err(Error::InvalidArgument(format!("duration {duration} must be >= dt = {dt}")));
    }
    let steps = (duration / dt).round();
    if (steps * dt - duration).abs() > 1e-9 * duration {
        return Err(Error::InvalidArgument(format!(
            "duration {duration} is not a whole number of dt = {dt} steps"
        )));
    }
    Ok(steps as usize)
}

/// Rest-to-rest quintic from `q0` to `qf` over `duration`, endpoints included.
pub fn quintic_segment(q0: &[f64], qf: &[f64], duration: f64, dt: f64) -> Result<JointTrajectory> {
    waypoint_trajectory_with(&[q0.to_vec(), qf.to_vec()], &[duration], dt, BlendProfile::Quintic)
}

/// Quintic segments through `waypoints`, at rest at every waypoint.
pub fn waypoint_trajectory(waypoints: &[Vec<f64>], durations: &[f64], dt: f64) -> Result<JointTrajectory> {
    waypoint_trajectory_with(waypoints, durations, dt, BlendProfile::Quintic)
}

/// As [`waypoint_trajectory`] with a selectable blend.
pub fn waypoint_trajectory_with(
    waypoints: &[Vec<f64>],
    durations: &[f64],
    dt: f64,
    profile: BlendProfile,
) -> Result<JointTrajectory> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 waypoints".into()));
    }
    check_len("segment durations", waypoints.len() - 1, durations.len())?;
    let n = waypoints[0].len();
    if n == 0 {
        return Err(Error::InvalidArgument("waypoints must have at least one joint".into()));
    }
    for w in waypoints {
        check_len("waypoint", n, w.len())?;
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("waypoint is not finite".into()));
        }
    }
    let steps = durations
        .iter()
        .map(|&d| step_count(d, dt))
        .collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::with_capacity(steps.iter().sum::<usize>() + 1);
    let mut k0 = 0usize;
    for (seg, &m) in steps.iter().enumerate() {
        let (a, b) = (&waypoints[seg], &waypoints[seg + 1]);
        let duration = m as f64 * dt;
        // Each segment contributes its start sample; the last one also its end.
        let last = if seg + 1 == steps.len() { m } else { m - 1 };
        for j in 0..=last {
            let u = j as f64 / m as f64;
            let (s, ds, dds) = profile.eval(u);
            let mut position = Vec::with_capacity(n);
            let mut velocity = Vec::with_capacity(n);
            let mut acceleration = Vec::with_capacity(n);
            for i in 0..n {
                let delta = b[i] - a[i];
                position.push(if j == m { b[i] } else { a[i] + delta * s });
                velocity.push(delta * ds / duration);
                acceleration.push(delta * dds / (duration * duration));
            }
            samples.push(TrajectorySample {
                t: (k0 + j) as f64 * dt,
                position,
                velocity,
                acceleration,
            });
        }
        k0 += m;
    }
    JointTrajectory::new(dt, samples)
}

/// Converts a Cartesian path to joint space. Each segment is traversed with
/// a quintic time scaling (straight-line position, slerped orientation); every
/// sample is solved by DLS IK warm-started from the previous solution, and the
/// joint velocities and accelerations are obtained by second-order finite
/// differences of the solved positions.
pub fn cartesian_to_joint(
    model: &RobotModel,
    path: &CartesianPath,
    seed: &[f64],
    dt: f64,
    options: &IkOptions,
) -> Result<JointTrajectory> {
    path.validate()?;
    check_len("IK seed", model.dof(), seed.len())?;
    let steps = path
        .segment_durations
        .iter()
        .map(|&d| step_count(d, dt))
        .collect::<Result<Vec<_>>>()?;

    let mut poses = Vec::with_capacity(steps.iter().sum::<usize>() + 1);
    for (seg, &m) in steps.iter().enumerate() {
        let (a, b) = (&path.waypoints[seg], &path.waypoints[seg + 1]);
        let last = if seg + 1 == steps.len() { m } else { m - 1 };
        for j in 0..=last {
            let (s, _, _) = BlendProfile::Quintic.eval(j as f64 / m as f64);
            let position = a.position + (b.position - a.position) * s;
            let orientation: UnitQuaternion<f64> = a.orientation.slerp(&b.orientation, s);
            poses.push(Pose::new(position, orientation));
        }
    }

    let mut q = seed.to_vec();
    let mut positions = Vec::with_capacity(poses.len());
    for (k, pose) in poses.iter().enumerate() {
        let sol = dls_ik(model, pose, &q, options)?;
        if !sol.converged {
            return Err(Error::IkFailed {
                sample: k,
                error: sol.error,
            });
        }
        q = sol.q;
        positions.push(q.clone());
    }

    let count = positions.len();
    let n = model.dof();
    let samples = (0..count)
        .map(|k| {
            let (velocity, acceleration) = if count < 3 {
                (vec![0.0; n], vec![0.0; n])
            } else {
                finite_difference(&positions, k, dt)
            };
            TrajectorySample {
                t: k as f64 * dt,
                position: positions[k].clone(),
                velocity,
                acceleration,
            }
        })
        .collect();
    JointTrajectory::new(dt, samples)
}

/// Second-order first and second derivatives at index `k`; one-sided at the
/// ends when enough samples exist.
fn finite_difference(q: &[Vec<f64>], k: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let last = q.len() - 1;
    let n = q[k].len();
    let mut v = vec![0.0; n];
    let mut a = vec![0.0; n];
    for i in 0..n {
        let x = |j: usize| q[j][i];
        if k == 0 || k == last {
            let (s, o) = if k == 0 { (1.0, [0, 1, 2, 3]) } else { (-1.0, [last, last - 1, last - 2, last.saturating_sub(3)]) };
            v[i] = s * (-3.0 * x(o[0]) + 4.0 * x(o[1]) - x(o[2])) / (2.0 * dt);
            a[i] = if q.len() >= 4 {
                (2.0 * x(o[0]) - 5.0 * x(o[1]) + 4.0 * x(o[2]) - x(o[3])) / (dt * dt)
            } else {
                (x(o[0]) - 2.0 * x(o[1]) + x(o[2])) / (dt * dt)
            };
        } else {
            v[i] = (x(k + 1) - x(k - 1)) / (2.0 * dt);
            a[i] = (x(k + 1) - 2.0 * x(k) + x(k - 1)) / (dt * dt);
        }
    }
    (v, a)
}

/// Reference at time `t`: the stored sample when `t` is on the grid, linear
/// interpolation between neighbours otherwise.
pub fn sample(traj: &JointTrajectory, t: f64) -> Result<Reference> {
    let end = traj.duration();
    let slack = 1e-12 * end.max(1.0);
    if !(t >= -slack && t <= end + slack) || traj.is_empty() {
        return Err(Error::OutOfRange { t, end });
    }
    let x = (t / traj.dt).clamp(0.0, (traj.len() - 1) as f64);
    let k = x.round();
    if (x - k).abs() < 1e-9 {
        return Ok(traj.reference_at(k as usize));
    }
    let k0 = x.floor() as usize;
    let w = x - k0 as f64;
    let (a, b) = (&traj.samples[k0], &traj.samples[k0 + 1]);
    let lerp = |p: &[f64], q: &[f64]| DVector::from_iterator(p.len(), p.iter().zip(q).map(|(p, q)| p + (q - p) * w));
    Ok(Reference {
        position: lerp(&a.position, &b.position),
        velocity: lerp(&a.velocity, &b.velocity),
        acceleration: lerp(&a.acceleration, &b.acceleration),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;
    use approx::assert_relative_eq;

    #[test]
    fn constant_segment() {
        let tr = quintic_segment(&[0.3, -0.2], &[0.3, -0.2], 1.0, 0.01).unwrap();
        assert_eq!(tr.len(), 101);
        for s in &tr.samples {
            assert_eq!(s.position, vec![0.3, -0.2]);
            assert!(s.velocity.iter().chain(&s.acceleration).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn midpoint_and_boundaries() {
        let tr = quintic_segment(&[0.0], &[1.0], 2.0, 0.001).unwrap();
        let mid = sample(&tr, 1.0).unwrap();
        assert_relative_eq!(mid.position[0], 0.5, epsilon = 1e-15);
        for s in [&tr.samples[0], tr.samples.last().unwrap()] {
            assert!(s.velocity[0].abs() < 1e-12);
            assert!(s.acceleration[0].abs() < 1e-12);
        }
        assert_eq!(tr.samples.last().unwrap().position[0], 1.0);
        assert_relative_eq!(tr.duration(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn blends_have_the_stated_boundary_derivatives() {
        for profile in [BlendProfile::Quintic, BlendProfile::Nonic] {
            assert_eq!(profile.eval(0.0), (0.0, 0.0, 0.0));
            let (s, ds, dds) = profile.eval(1.0);
            assert_eq!((s, ds, dds), (1.0, 0.0, 0.0));
            let h = 1e-6;
            for u in [0.1, 0.37, 0.5, 0.8] {
                let (sp, dsp, _) = profile.eval(u + h);
                let (sm, dsm, _) = profile.eval(u - h);
                let (_, ds, dds) = profile.eval(u);
                assert_relative_eq!((sp - sm) / (2.0 * h), ds, epsilon = 1e-6);
                assert_relative_eq!((dsp - dsm) / (2.0 * h), dds, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn two_waypoints_match_segment() {
        let a = quintic_segment(&[0.0, 1.0], &[0.5, -1.0], 1.5, 0.01).unwrap();
        let b = waypoint_trajectory(&[vec![0.0, 1.0], vec![0.5, -1.0]], &[1.5], 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loop_closes_and_junctions_are_continuous() {
        let a = vec![0.1, -0.4];
        let b = vec![0.6, 0.2];
        for profile in [BlendProfile::Quintic, BlendProfile::Nonic] {
            let tr = waypoint_trajectory_with(&[a.clone(), b.clone(), a.clone()], &[1.0, 2.0], 0.001, profile).unwrap();
            let last = tr.samples.last().unwrap();
            for i in 0..2 {
                assert!((last.position[i] - a[i]).abs() < 1e-12);
            }
            assert_eq!(tr.len(), 3001);
            let junction = &tr.samples[1000];
            assert_eq!(junction.position, b);
            assert!(junction.velocity.iter().all(|v| v.abs() < 1e-12));
            let jump = tr
                .samples
                .windows(2)
                .flat_map(|w| (0..2).map(move |i| (w[1].velocity[i] - w[0].velocity[i]).abs()))
                .fold(0.0, f64::max);
            // No step larger than one ordinary sample-to-sample change.
            assert!(jump < 0.01, "{jump}");
        }
    }

    #[test]
    fn non_multiple_duration_is_rejected() {
        assert!(quintic_segment(&[0.0], &[1.0], 1.0005, 0.001).is_err());
        assert!(quintic_segment(&[0.0], &[1.0], 0.0, 0.001).is_err());
        assert!(quintic_segment(&[0.0], &[1.0], 1.0, -0.1).is_err());
        assert!(waypoint_trajectory(&[vec![0.0]], &[], 0.1).is_err());
        assert!(waypoint_trajectory(&[vec![0.0], vec![1.0, 2.0]], &[1.0], 0.1).is_err());
    }

    #[test]
    fn sampling_rules() {
        let tr = quintic_segment(&[0.0], &[1.0], 1.0, 0.1).unwrap();
        assert_eq!(sample(&tr, 0.0).unwrap().position[0], tr.samples[0].position[0]);
        assert_eq!(sample(&tr, 0.3).unwrap().position[0], tr.samples[3].position[0]);
        assert!(sample(&tr, 1.2).is_err());
        assert!(sample(&tr, -0.1).is_err());

        let ramp: Vec<_> = (0..11)
            .map(|k| TrajectorySample {
                t: k as f64 * 0.1,
                position: vec![2.0 * k as f64 * 0.1],
                velocity: vec![2.0],
                acceleration: vec![0.0],
            })
            .collect();
        let ramp = JointTrajectory::new(0.1, ramp).unwrap();
        assert_relative_eq!(sample(&ramp, 0.45).unwrap().position[0], 0.9, epsilon = 1e-14);
    }

    #[test]
    fn csv_round_trip() {
        let tr = waypoint_trajectory(&[vec![0.0, 0.2], vec![0.4, -0.1], vec![0.1, 0.0]], &[0.5, 0.3], 0.01).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,q1,q2,qd1,qd2,qdd1,qdd2\n"));
        let back = JointTrajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples, tr.samples);
    }

    #[test]
    fn cartesian_round_trip_through_fk() {
        let m = RobotModel::ur5e_like();
        let qa = [0.2, -0.9, 1.1, -0.6, -0.5, 0.3];
        let qb = [0.35, -1.0, 1.2, -0.7, -0.45, 0.4];
        let path = CartesianPath {
            waypoints: vec![forward_kinematics(&m, &qa).unwrap(), forward_kinematics(&m, &qb).unwrap()],
            segment_durations: vec![0.5],
        };
        let opts = IkOptions {
            tol: 1e-10,
            ..IkOptions::default()
        };
        let tr = cartesian_to_joint(&m, &path, &qa, 0.01, &opts).unwrap();
        let end = &tr.samples.last().unwrap().position;
        for i in 0..6 {
            assert!((end[i] - qb[i]).abs() < 1e-3, "joint {i}: {} vs {}", end[i], qb[i]);
            assert!(tr.samples[0].velocity[i].abs() < 1e-2);
        }
    }

    #[test]
    fn static_pose_gives_constant_trajectory() {
        let m = RobotModel::ur5e_like();
        let q = [0.2, -0.9, 1.1, -0.6, -0.5, 0.3];
        let p = forward_kinematics(&m, &q).unwrap();
        let path = CartesianPath {
            waypoints: vec![p, p],
            segment_durations: vec![0.2],
        };
        let tr = cartesian_to_joint(&m, &path, &q, 0.01, &IkOptions::default()).unwrap();
        for s in &tr.samples {
            assert_eq!(s.position, q.to_vec());
            assert!(s.velocity.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn unreachable_waypoint_names_first_failing_sample() {
        let m = RobotModel::ur5e_like();
        let q = [0.2, -0.9, 1.1, -0.6, -0.5, 0.3];
        let start = forward_kinematics(&m, &q).unwrap();
        let far = Pose::new(nalgebra::Vector3::new(3.0, 0.0, 0.2), start.orientation);
        let path = CartesianPath {
            waypoints: vec![start, far],
            segment_durations: vec![1.0],
        };
        match cartesian_to_joint(&m, &path, &q, 0.01, &IkOptions::default()) {
            Err(Error::IkFailed { sample, .. }) => assert!(sample > 0 && sample <= 100),
            other => panic!("expected IK failure, got {other:?}"),
        }
    }
}
