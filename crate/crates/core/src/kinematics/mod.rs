//! Forward kinematics, geometric Jacobian, damped-least-squares IK and
//! Monte-Carlo workspace estimation for DH chains.

mod ik;
mod workspace;

pub use ik::{dls_ik, orientation_error, pose_error, IkOptions, IkSolution};
pub use workspace::{estimate_workspace_volume, WorkspaceEstimate, DEFAULT_VOXEL_SIZE};

use nalgebra::{
    DMatrix, Isometry3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3,
};

use crate::error::{check_len, Result};
use crate::model::{DhRow, RobotModel};

/// End-effector pose. The orientation is a unit quaternion; roll/pitch/yaw are
/// derived on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }

    /// Builds a pose from position and roll/pitch/yaw (R = Rz(yaw) Ry(pitch) Rx(roll)).
    pub fn from_rpy(position: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::from_euler_angles(roll, pitch, yaw),
        }
    }

    /// (alpha, beta, gamma) = (roll, pitch, yaw), rad.
    pub fn rpy(&self) -> (f64, f64, f64) {
        self.orientation.euler_angles()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

/// Standard DH transform Rz(theta) Tz(d) Tx(a) Rx(alpha) for joint value `q`.
pub fn dh_transform(row: &DhRow, q: f64) -> Isometry3<f64> {
    let theta = q + row.theta_offset;
    let (st, ct) = theta.sin_cos();
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), theta)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), row.alpha);
    Isometry3::from_parts(
        Translation3::new(row.a * ct, row.a * st, row.d),
        UnitQuaternion::from_rotation_matrix(&rot),
    )
}

/// World frames of the chain: `frames[0]` is the base and `frames[j + 1]` is
/// the frame carried by link `j`. Joint `j` (0-based) turns about the z axis
/// of `frames[j]`.
pub fn link_frames(model: &RobotModel, q: &[f64]) -> Result<Vec<Isometry3<f64>>> {
    check_len("joint vector", model.dof(), q.len())?;
    let mut frames = Vec::with_capacity(q.len() + 1);
    let mut t = Isometry3::identity();
    frames.push(t);
    for (row, &qi) in model.dh.rows.iter().zip(q) {
        t *= dh_transform(row, qi);
        frames.push(t);
    }
    Ok(frames)
}

pub fn forward_kinematics(model: &RobotModel, q: &[f64]) -> Result<Pose> {
    let frames = link_frames(model, q)?;
    Ok(Pose::from_isometry(frames.last().expect("at least the base frame")))
}

/// Geometric Jacobian (6 x n): rows 0..3 linear velocity of the end-effector
/// origin, rows 3..6 angular velocity, both in base coordinates.
pub fn jacobian(model: &RobotModel, q: &[f64]) -> Result<DMatrix<f64>> {
    let frames = link_frames(model, q)?;
    Ok(jacobian_from_frames(&frames))
}

pub(crate) fn jacobian_from_frames(frames: &[Isometry3<f64>]) -> DMatrix<f64> {
    let n = frames.len() - 1;
    let p_end = frames[n].translation.vector;
    let mut jac = DMatrix::zeros(6, n);
    for j in 0..n {
        let z = frames[j].rotation * Vector3::z();
        let o = frames[j].translation.vector;
        let lin = z.cross(&(p_end - o));
        jac.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, j).copy_from(&z);
    }
    jac
}

/// World position of each link's centre of mass.
pub fn com_positions(model: &RobotModel, frames: &[Isometry3<f64>]) -> Vec<Vector3<f64>> {
    model
        .inertia
        .iter()
        .enumerate()
        .map(|(i, link)| (frames[i + 1] * Point3::from(link.center_of_mass)).coords)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn pendulum_zero_pose() {
        let m = RobotModel::pendulum1();
        let p = forward_kinematics(&m, &[0.0]).unwrap();
        assert_relative_eq!(p.position, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        let p = forward_kinematics(&m, &[FRAC_PI_2]).unwrap();
        assert_relative_eq!(p.position, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn ur5e_zero_pose_matches_hand_composition() {
        // At q = 0 the DH chain reduces to: z up 0.1625, then twist +90deg about x,
        // links along -x of 0.425 and 0.3922, d4 = 0.1333 along the (now) -y world
        // axis, twist +90, d5 = 0.0997 along world -z, twist -90, d6 = 0.0996 along -y.
        let m = RobotModel::ur5e_like();
        let p = forward_kinematics(&m, &[0.0; 6]).unwrap();
        let expected = Vector3::new(-0.8172, -0.2329, 0.0628);
        assert_relative_eq!(p.position, expected, epsilon = 1e-12);
        // Orientation: Rx(90) Rx(90) Rx(-90) = Rx(90).
        let r = p.orientation.to_rotation_matrix();
        let ex = Rotation3::from_axis_angle(&Vector3::x_axis(), FRAC_PI_2);
        assert_relative_eq!(r.matrix(), ex.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn pendulum_jacobian_linear_part() {
        let m = RobotModel::pendulum1();
        let j = jacobian(&m, &[0.0]).unwrap();
        assert_relative_eq!(j[(0, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(j[(1, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(j[(2, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(j[(5, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn planar_fold_is_singular() {
        let m = RobotModel::planar2();
        let j = jacobian(&m, &[0.3, 0.0]).unwrap();
        let planar = j.view((0, 0), (2, 2)).into_owned();
        assert!(planar.determinant().abs() < 1e-12);
        assert_eq!(planar.rank(1e-9), 1);
        let j = jacobian(&m, &[0.3, 0.7]).unwrap();
        assert_eq!(j.view((0, 0), (2, 2)).into_owned().rank(1e-9), 2);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = RobotModel::ur5e_like();
        assert!(forward_kinematics(&m, &[0.0; 5]).is_err());
        assert!(jacobian(&m, &[0.0; 7]).is_err());
    }

    #[test]
    fn rpy_round_trip() {
        let p = Pose::from_rpy(Vector3::zeros(), 0.1, -0.2, 0.3);
        let (a, b, g) = p.rpy();
        assert_relative_eq!(a, 0.1, epsilon = 1e-14);
        assert_relative_eq!(b, -0.2, epsilon = 1e-14);
        assert_relative_eq!(g, 0.3, epsilon = 1e-14);
    }
}
