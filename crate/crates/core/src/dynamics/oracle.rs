//! Independent reference computations used to cross-check the main dynamics
//! path. None of these share code with the composite-inertia routines beyond
//! the forward kinematics.

use nalgebra::{DMatrix, DVector, Vector3};

use super::{christoffel_coriolis, inertia_matrix, potential_energy};
use crate::error::{check_len, Result};
use crate::kinematics::{com_positions, link_frames};
use crate::model::RobotModel;

/// Recursive Newton-Euler inverse dynamics in base coordinates.
///
/// Gravity enters as an upward acceleration of the base. Moments are taken
/// about each joint origin on the backward pass.
pub fn inverse_dynamics(model: &RobotModel, q: &[f64], qd: &[f64], qdd: &[f64]) -> Result<DVector<f64>> {
    let n = model.dof();
    check_len("joint velocity", n, qd.len())?;
    check_len("joint acceleration", n, qdd.len())?;
    let frames = link_frames(model, q)?;
    let coms = com_positions(model, &frames);

    let mut omega = vec![Vector3::zeros(); n];
    let mut alpha = vec![Vector3::zeros(); n];
    let mut acc_com = vec![Vector3::zeros(); n];

    let mut w = Vector3::zeros();
    let mut dw = Vector3::zeros();
    // Linear acceleration of the current joint origin.
    let mut a_origin = -model.gravity;
    for j in 0..n {
        let z = frames[j].rotation * Vector3::z();
        let o = frames[j].translation.vector;
        let o_next = frames[j + 1].translation.vector;
        let w_new = w + z * qd[j];
        dw = dw + z * qdd[j] + w.cross(&z) * qd[j];
        w = w_new;
        let r = o_next - o;
        let a_next = a_origin + dw.cross(&r) + w.cross(&w.cross(&r));
        let rc = coms[j] - o_next;
        acc_com[j] = a_next + dw.cross(&rc) + w.cross(&w.cross(&rc));
        omega[j] = w;
        alpha[j] = dw;
        a_origin = a_next;
    }

    let mut tau = DVector::zeros(n);
    let mut f_child = Vector3::zeros();
    let mut n_child = Vector3::zeros(); // about the child's joint origin
    for j in (0..n).rev() {
        let link = &model.inertia[j];
        let z = frames[j].rotation * Vector3::z();
        let o = frames[j].translation.vector;
        let r = frames[j + 1].rotation.to_rotation_matrix();
        let i_world = r.matrix() * link.inertia * r.matrix().transpose();
        let f = link.mass * acc_com[j] + f_child;
        let child_origin = if j + 1 < n {
            frames[j + 1].translation.vector
        } else {
            o
        };
        let moment = n_child
            + (child_origin - o).cross(&f_child)
            + (coms[j] - o).cross(&(link.mass * acc_com[j]))
            + i_world * alpha[j]
            + omega[j].cross(&(i_world * omega[j]));
        tau[j] = moment.dot(&z);
        f_child = f;
        n_child = moment;
    }
    Ok(tau)
}

/// Kinetic energy summed link by link from twists propagated down the chain.
pub fn link_kinetic_energy(model: &RobotModel, q: &[f64], qd: &[f64]) -> Result<f64> {
    let n = model.dof();
    check_len("joint velocity", n, qd.len())?;
    let frames = link_frames(model, q)?;
    let coms = com_positions(model, &frames);
    let mut w = Vector3::zeros();
    let mut v_origin = Vector3::zeros();
    let mut energy = 0.0;
    for j in 0..n {
        let z = frames[j].rotation * Vector3::z();
        let o = frames[j].translation.vector;
        w += z * qd[j];
        let o_next = frames[j + 1].translation.vector;
        v_origin += w.cross(&(o_next - o));
        let v_com = v_origin + w.cross(&(coms[j] - o_next));
        let r = frames[j + 1].rotation.to_rotation_matrix();
        let i_world = r.matrix() * model.inertia[j].inertia * r.matrix().transpose();
        energy += 0.5 * model.inertia[j].mass * v_com.norm_squared() + 0.5 * w.dot(&(i_world * w));
    }
    Ok(energy)
}

/// Central-difference `dM/dq_k`.
pub fn inertia_derivatives_fd(model: &RobotModel, q: &[f64], h: f64) -> Result<Vec<DMatrix<f64>>> {
    let mut out = Vec::with_capacity(q.len());
    for k in 0..q.len() {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[k] += h;
        qm[k] -= h;
        out.push((inertia_matrix(model, &qp)? - inertia_matrix(model, &qm)?) / (2.0 * h));
    }
    Ok(out)
}

/// Christoffel Coriolis matrix from finite-differenced `dM/dq`.
pub fn coriolis_fd(model: &RobotModel, q: &[f64], qd: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let dm = inertia_derivatives_fd(model, q, h)?;
    Ok(christoffel_coriolis(&dm, qd))
}

/// Central-difference gradient of the potential energy.
pub fn gravity_fd(model: &RobotModel, q: &[f64], h: f64) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(q.len());
    for k in 0..q.len() {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[k] += h;
        qm[k] -= h;
        g[k] = (potential_energy(model, &qp)? - potential_energy(model, &qm)?) / (2.0 * h);
    }
    Ok(g)
}

/// `Mdot` along the motion, by central difference of `M(q + s qd)`.
pub fn inertia_rate_fd(model: &RobotModel, q: &[f64], qd: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let qp: Vec<f64> = q.iter().zip(qd).map(|(a, b)| a + h * b).collect();
    let qm: Vec<f64> = q.iter().zip(qd).map(|(a, b)| a - h * b).collect();
    Ok((inertia_matrix(model, &qp)? - inertia_matrix(model, &qm)?) / (2.0 * h))
}
