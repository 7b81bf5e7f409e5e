use nalgebra::{DVector, Matrix6, UnitQuaternion, Vector3, Vector6};

use super::{jacobian_from_frames, link_frames, Pose};
use crate::error::{check_len, Error, Result};
use crate::model::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    /// Damping factor lambda; the normal matrix is J J^T + lambda^2 I.
    pub damping: f64,
    /// Convergence threshold on the stacked pose-error norm.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            damping: 0.05,
            tol: 1e-5,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    /// Best iterate found (the converged one when `converged`).
    pub q: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Pose-error norm at `q`.
    pub error: f64,
    /// Pose-error norm after each accepted step, starting with the seed.
    pub history: Vec<f64>,
}

/// Rotation vector of `target * current^-1`.
pub fn orientation_error(target: &UnitQuaternion<f64>, current: &UnitQuaternion<f64>) -> Vector3<f64> {
    (target * current.inverse()).scaled_axis()
}

/// Stacked 6-vector: position error (m) then rotation-vector error (rad).
pub fn pose_error(target: &Pose, current: &Pose) -> Vector6<f64> {
    let dp = target.position - current.position;
    let dr = orientation_error(&target.orientation, &current.orientation);
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Damped-least-squares IK. Steps `dq = J^T (J J^T + lambda^2 I)^-1 e` are
/// only accepted when they reduce the pose error; a rejected step doubles the
/// damping for the next attempt and an accepted one relaxes it back toward
/// `options.damping`. Iterates are clamped to the joint limits.
///
/// Failure to converge is reported through [`IkSolution::converged`], not as
/// an error.
pub fn dls_ik(model: &RobotModel, target: &Pose, seed: &[f64], options: &IkOptions) -> Result<IkSolution> {
    check_len("IK seed", model.dof(), seed.len())?;
    if !target.is_finite() {
        return Err(Error::InvalidArgument("IK target pose is not finite".into()));
    }
    if !(options.damping >= 0.0 && options.tol > 0.0) {
        return Err(Error::InvalidArgument("IK damping must be >= 0 and tol > 0".into()));
    }
    for (i, (&qi, lim)) in seed.iter().zip(&model.limits.joints).enumerate() {
        if !(qi >= lim.position_min && qi <= lim.position_max) {
            return Err(Error::InvalidArgument(format!(
                "IK seed joint {i} = {qi} outside limits [{}, {}]",
                lim.position_min, lim.position_max
            )));
        }
    }

    let evaluate = |q: &[f64]| -> Result<(Vector6<f64>, nalgebra::DMatrix<f64>)> {
        let frames = link_frames(model, q)?;
        let current = Pose::from_isometry(frames.last().expect("base frame"));
        Ok((pose_error(target, &current), jacobian_from_frames(&frames)))
    };

    let mut q = seed.to_vec();
    let (mut err, mut jac) = evaluate(&q)?;
    let mut norm = err.norm();
    let mut history = vec![norm];
    let mut lambda = options.damping;
    let mut iterations = 0;

    while norm >= options.tol && iterations < options.max_iters {
        iterations += 1;
        let normal: Matrix6<f64> = (&jac * jac.transpose()).fixed_view::<6, 6>(0, 0).into_owned()
            + Matrix6::identity() * (lambda * lambda);
        let Some(x) = normal.lu().solve(&err) else {
            lambda = (2.0 * lambda).max(1e-6);
            continue;
        };
        let dq: DVector<f64> = jac.transpose() * DVector::from_column_slice(x.as_slice());
        let candidate: Vec<f64> = q
            .iter()
            .zip(dq.iter())
            .zip(&model.limits.joints)
            .map(|((qi, d), lim)| (qi + d).clamp(lim.position_min, lim.position_max))
            .collect();
        let (cand_err, cand_jac) = evaluate(&candidate)?;
        let cand_norm = cand_err.norm();
        if cand_norm < norm {
            q = candidate;
            err = cand_err;
            jac = cand_jac;
            norm = cand_norm;
            history.push(norm);
            lambda = (0.5 * lambda).max(options.damping);
        } else {
            lambda = (2.0 * lambda).max(1e-6);
            if lambda > 1e8 {
                break;
            }
        }
    }

    Ok(IkSolution {
        q,
        converged: norm < options.tol,
        iterations,
        error: norm,
        history,
    })
}
