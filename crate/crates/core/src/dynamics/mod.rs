//! Rigid-body dynamics `M(q) qdd + C(q, qd) qd + G(q) = tau` and its
//! fixed-step integration.
//!
//! Everything is evaluated in base coordinates with 6-D spatial vectors
//! ordered `[angular; linear]` and referred to the base origin:
//!
//! * `M` is assembled from composite spatial inertias, `M_ij = S_i^T I^c_max(i,j) S_j`.
//! * `C` is built from the Christoffel symbols of `M`. The partial derivatives
//!   `dM/dq_k` are evaluated in closed form from the joint axes, so `Mdot - 2C`
//!   is skew-symmetric up to round-off.
//! * `G` is the gradient of the potential energy, computed from the subtree
//!   mass and first moment below each joint.
//!
//! The simulation path does not need `C` itself, only `C qd + G`, which a
//! recursive Newton-Euler pass over the same spatial quantities gives in O(n).

pub mod oracle;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{check_len, Error, Result};
use crate::kinematics::{com_positions, link_frames};
use crate::model::RobotModel;

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub t: f64,
}

impl JointState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>, t: f64) -> Self {
        Self { q, qd, t }
    }

    pub fn at_rest(q: &[f64]) -> Self {
        Self {
            q: DVector::from_column_slice(q),
            qd: DVector::zeros(q.len()),
            t: 0.0,
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }
}

/// `M`, `C` and `G` at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTerms {
    pub mass: DMatrix<f64>,
    pub coriolis: DMatrix<f64>,
    pub gravity: DVector<f64>,
}

impl DynamicsTerms {
    pub fn compute(model: &RobotModel, q: &[f64], qd: &[f64]) -> Result<Self> {
        check_len("joint velocity", model.dof(), qd.len())?;
        let chain = SpatialChain::new(model, q)?;
        let mass = chain.inertia_matrix();
        let dm = chain.inertia_derivatives();
        Ok(Self {
            coriolis: christoffel_coriolis(&dm, qd),
            gravity: chain.gravity_vector(&model.gravity),
            mass,
        })
    }

    /// `C qd + G`.
    pub fn bias(&self, qd: &DVector<f64>) -> DVector<f64> {
        &self.coriolis * qd + &self.gravity
    }

    /// `M^-1 (tau - C qd - G)` through a Cholesky factorisation.
    pub fn acceleration(&self, qd: &DVector<f64>, tau: &DVector<f64>, q: &[f64]) -> Result<DVector<f64>> {
        let rhs = tau - self.bias(qd);
        let chol = self
            .mass
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularInertia { q: q.to_vec() })?;
        Ok(chol.solve(&rhs))
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    v.cross_matrix()
}

/// Spatial motion cross product `a x b`.
fn motion_cross(a: &Vector6<f64>, b: &Vector6<f64>) -> Vector6<f64> {
    let (wa, va) = (a.fixed_rows::<3>(0), a.fixed_rows::<3>(3));
    let (wb, vb) = (b.fixed_rows::<3>(0), b.fixed_rows::<3>(3));
    let w = wa.cross(&wb);
    let v = wa.cross(&vb) + va.cross(&wb);
    Vector6::new(w.x, w.y, w.z, v.x, v.y, v.z)
}

/// Spatial force cross product `a x* f`.
fn force_cross(a: &Vector6<f64>, f: &Vector6<f64>) -> Vector6<f64> {
    let (wa, va) = (a.fixed_rows::<3>(0), a.fixed_rows::<3>(3));
    let (nf, ff) = (f.fixed_rows::<3>(0), f.fixed_rows::<3>(3));
    let n = wa.cross(&nf) + va.cross(&ff);
    let l = wa.cross(&ff);
    Vector6::new(n.x, n.y, n.z, l.x, l.y, l.z)
}

/// Spatial inertia about the base origin of a body with mass `m`, centre of
/// mass `c` and rotational inertia `ic` about the centre of mass (base axes).
fn spatial_inertia(m: f64, c: &Vector3<f64>, ic: &Matrix3<f64>) -> Matrix6<f64> {
    let cx = skew(c);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(ic + m * (Matrix3::identity() * c.dot(c) - c * c.transpose())));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(m * cx));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-m * cx));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * m));
    out
}

/// Joint axes and composite inertias of the chain at one configuration.
struct SpatialChain {
    /// World frames, see [`link_frames`].
    frames: Vec<Isometry3<f64>>,
    /// Joint motion axes `[z; o x z]`.
    axes: Vec<Vector6<f64>>,
    /// Spatial inertia of each link.
    links: Vec<Matrix6<f64>>,
    /// `composite[j]`: spatial inertia of links `j..n`.
    composite: Vec<Matrix6<f64>>,
    /// Mass and first moment of links `j..n`.
    subtree_mass: Vec<f64>,
    subtree_moment: Vec<Vector3<f64>>,
}

impl SpatialChain {
    fn new(model: &RobotModel, q: &[f64]) -> Result<Self> {
        let frames = link_frames(model, q)?;
        let n = q.len();
        let coms = com_positions(model, &frames);
        let axes = (0..n)
            .map(|j| {
                let z = frames[j].rotation * Vector3::z();
                let o = frames[j].translation.vector;
                let v = o.cross(&z);
                Vector6::new(z.x, z.y, z.z, v.x, v.y, v.z)
            })
            .collect();

        let mut links = vec![Matrix6::zeros(); n];
        let mut composite = vec![Matrix6::zeros(); n];
        let mut subtree_mass = vec![0.0; n];
        let mut subtree_moment = vec![Vector3::zeros(); n];
        let mut acc = Matrix6::zeros();
        let mut mass = 0.0;
        let mut moment = Vector3::zeros();
        for i in (0..n).rev() {
            let link = &model.inertia[i];
            let r = frames[i + 1].rotation.to_rotation_matrix();
            let ic = r.matrix() * link.inertia * r.matrix().transpose();
            links[i] = spatial_inertia(link.mass, &coms[i], &ic);
            acc += links[i];
            mass += link.mass;
            moment += link.mass * coms[i];
            composite[i] = acc;
            subtree_mass[i] = mass;
            subtree_moment[i] = moment;
        }
        Ok(Self {
            frames,
            axes,
            links,
            composite,
            subtree_mass,
            subtree_moment,
        })
    }

    fn n(&self) -> usize {
        self.axes.len()
    }

    fn inertia_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let f = self.composite[j] * self.axes[j];
            for i in 0..=j {
                let v = self.axes[i].dot(&f);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// `out[k] = dM/dq_k`.
    ///
    /// Joint `k` rotates every link from `k` on, and with it the axes of the
    /// joints after `k`. For `i <= j`:
    ///
    /// * `k <= i`: the pair moves rigidly, derivative 0;
    /// * `i < k <= j`: `-(S_k x S_i)^T I^c_j S_j`;
    /// * `k > j`: `-(S_k x S_i)^T I^c_k S_j - S_i^T I^c_k (S_k x S_j)`.
    fn inertia_derivatives(&self) -> Vec<DMatrix<f64>> {
        let n = self.n();
        let cross: Vec<Vec<Vector6<f64>>> = (0..n)
            .map(|k| (0..n).map(|i| motion_cross(&self.axes[k], &self.axes[i])).collect())
            .collect();
        // force[m][j] = I^c_m S_j
        let force: Vec<Vec<Vector6<f64>>> = (0..n)
            .map(|m| (0..n).map(|j| self.composite[m] * self.axes[j]).collect())
            .collect();

        let mut out = vec![DMatrix::zeros(n, n); n];
        for (k, dmk) in out.iter_mut().enumerate() {
            for j in 0..n {
                for i in 0..=j {
                    let v = if k <= i {
                        0.0
                    } else if k <= j {
                        -cross[k][i].dot(&force[j][j])
                    } else {
                        -cross[k][i].dot(&force[k][j]) - force[k][i].dot(&cross[k][j])
                    };
                    dmk[(i, j)] = v;
                    dmk[(j, i)] = v;
                }
            }
        }
        out
    }

    /// `M qdd + C qd + G` by a Newton-Euler sweep; gravity enters as an upward
    /// acceleration of the base.
    fn inverse(&self, qd: &[f64], qdd: Option<&[f64]>, g: &Vector3<f64>) -> DVector<f64> {
        let n = self.n();
        let mut vel = Vector6::zeros();
        let mut acc = Vector6::new(0.0, 0.0, 0.0, -g.x, -g.y, -g.z);
        let mut forces = vec![Vector6::zeros(); n];
        for j in 0..n {
            let sv = self.axes[j] * qd[j];
            acc += motion_cross(&vel, &sv);
            if let Some(qdd) = qdd {
                acc += self.axes[j] * qdd[j];
            }
            vel += sv;
            let momentum = self.links[j] * vel;
            forces[j] = self.links[j] * acc + force_cross(&vel, &momentum);
        }
        let mut tau = DVector::zeros(n);
        let mut total = Vector6::zeros();
        for j in (0..n).rev() {
            total += forces[j];
            tau[j] = self.axes[j].dot(&total);
        }
        tau
    }

    fn gravity_vector(&self, g: &Vector3<f64>) -> DVector<f64> {
        let n = self.n();
        DVector::from_iterator(
            n,
            (0..n).map(|j| {
                let z = self.frames[j].rotation * Vector3::z();
                let o = self.frames[j].translation.vector;
                let lever = self.subtree_moment[j] - self.subtree_mass[j] * o;
                -g.dot(&z.cross(&lever))
            }),
        )
    }
}

/// `C_ij = sum_k 1/2 (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qd_k`.
pub fn christoffel_coriolis(dm: &[DMatrix<f64>], qd: &[f64]) -> DMatrix<f64> {
    let n = qd.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for (k, &qdk) in qd.iter().enumerate() {
                s += 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * qdk;
            }
            c[(i, j)] = s;
        }
    }
    c
}

/// `M(q) qdd + C(q, qd) qd + G(q)`.
pub fn inverse_dynamics(model: &RobotModel, q: &[f64], qd: &[f64], qdd: &[f64]) -> Result<DVector<f64>> {
    check_len("joint velocity", model.dof(), qd.len())?;
    check_len("joint acceleration", model.dof(), qdd.len())?;
    Ok(SpatialChain::new(model, q)?.inverse(qd, Some(qdd), &model.gravity))
}

/// `C(q, qd) qd + G(q)`.
pub fn bias_forces(model: &RobotModel, q: &[f64], qd: &[f64]) -> Result<DVector<f64>> {
    check_len("joint velocity", model.dof(), qd.len())?;
    Ok(SpatialChain::new(model, q)?.inverse(qd, None, &model.gravity))
}

pub fn inertia_matrix(model: &RobotModel, q: &[f64]) -> Result<DMatrix<f64>> {
    Ok(SpatialChain::new(model, q)?.inertia_matrix())
}

/// Partial derivatives `dM/dq_k`, one matrix per joint.
pub fn inertia_derivatives(model: &RobotModel, q: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    Ok(SpatialChain::new(model, q)?.inertia_derivatives())
}

pub fn coriolis_matrix(model: &RobotModel, q: &[f64], qd: &[f64]) -> Result<DMatrix<f64>> {
    check_len("joint velocity", model.dof(), qd.len())?;
    let dm = inertia_derivatives(model, q)?;
    Ok(christoffel_coriolis(&dm, qd))
}

pub fn gravity_vector(model: &RobotModel, q: &[f64]) -> Result<DVector<f64>> {
    Ok(SpatialChain::new(model, q)?.gravity_vector(&model.gravity))
}

/// Total potential energy `-sum m_i g . c_i`.
pub fn potential_energy(model: &RobotModel, q: &[f64]) -> Result<f64> {
    let frames = link_frames(model, q)?;
    Ok(com_positions(model, &frames)
        .iter()
        .zip(&model.inertia)
        .map(|(c, link)| -link.mass * model.gravity.dot(c))
        .sum())
}

/// `1/2 qd^T M qd`.
pub fn kinetic_energy(model: &RobotModel, q: &[f64], qd: &[f64]) -> Result<f64> {
    check_len("joint velocity", model.dof(), qd.len())?;
    let m = inertia_matrix(model, q)?;
    let v = DVector::from_column_slice(qd);
    Ok(0.5 * v.dot(&(m * &v)))
}

pub fn forward_dynamics(model: &RobotModel, state: &JointState, tau: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("joint velocity", model.dof(), state.qd.len())?;
    check_len("torque", model.dof(), tau.len())?;
    accelerate(model, state.q.as_slice(), state.qd.as_slice(), tau)
}

/// `M^-1 (tau - C qd - G)` without forming `C`.
fn accelerate(model: &RobotModel, q: &[f64], qd: &[f64], tau: &DVector<f64>) -> Result<DVector<f64>> {
    let chain = SpatialChain::new(model, q)?;
    let rhs = tau - chain.inverse(qd, None, &model.gravity);
    let chol = chain
        .inertia_matrix()
        .cholesky()
        .ok_or_else(|| Error::SingularInertia { q: q.to_vec() })?;
    Ok(chol.solve(&rhs))
}

/// One classical RK4 step of `(q, qd)` with `tau` held constant over `dt`.
pub fn step(model: &RobotModel, state: &JointState, tau: &DVector<f64>, dt: f64) -> Result<JointState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be > 0 (got {dt})")));
    }
    check_len("joint position", model.dof(), state.q.len())?;
    check_len("joint velocity", model.dof(), state.qd.len())?;
    check_len("torque", model.dof(), tau.len())?;

    let accel = |q: &DVector<f64>, qd: &DVector<f64>| -> Result<DVector<f64>> {
        if !q.iter().chain(qd.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                t: state.t,
                q: q.iter().copied().collect(),
                qd: qd.iter().copied().collect(),
            });
        }
        accelerate(model, q.as_slice(), qd.as_slice(), tau)
    };

    let (q0, v0) = (&state.q, &state.qd);
    let a1 = accel(q0, v0)?;
    let q2 = q0 + v0 * (0.5 * dt);
    let v2 = v0 + &a1 * (0.5 * dt);
    let a2 = accel(&q2, &v2)?;
    let q3 = q0 + &v2 * (0.5 * dt);
    let v3 = v0 + &a2 * (0.5 * dt);
    let a3 = accel(&q3, &v3)?;
    let q4 = q0 + &v3 * dt;
    let v4 = v0 + &a3 * dt;
    let a4 = accel(&q4, &v4)?;

    let q = q0 + (v0 + &v2 * 2.0 + &v3 * 2.0 + &v4) * (dt / 6.0);
    let qd = v0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    let next = JointState::new(q, qd, state.t + dt);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite {
            t: next.t,
            q: next.q.iter().copied().collect(),
            qd: next.qd.iter().copied().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(model: &RobotModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
        model
            .limits
            .joints
            .iter()
            .map(|l| rng.random_range(l.position_min..=l.position_max))
            .collect()
    }

    #[test]
    fn pendulum_inertia_is_point_mass_plus_tensor() {
        let m = RobotModel::pendulum1();
        let mm = inertia_matrix(&m, &[0.4]).unwrap();
        assert_relative_eq!(mm[(0, 0)], 1.0 * 1.0 + 0.001, epsilon = 1e-14);
    }

    #[test]
    fn pendulum_gravity_torque_at_horizontal() {
        let m = RobotModel::pendulum1();
        let g = gravity_vector(&m, &[0.0]).unwrap();
        assert_relative_eq!(g[0], 1.0 * 9.81 * 1.0, epsilon = 1e-12);
        let g = gravity_vector(&m, &[std::f64::consts::FRAC_PI_2]).unwrap();
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn zero_gravity_gives_zero_g() {
        let m = RobotModel::ur5e_like().with_gravity(Vector3::zeros());
        let g = gravity_vector(&m, &[0.1, -0.7, 1.2, 0.3, -0.4, 0.5]).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn planar2_inertia_matches_textbook() {
        // Two-link planar arm, COM at the link midpoints.
        let m = RobotModel::planar2();
        let (l1, lc1, lc2) = (1.0, 0.5, 0.4);
        let (m1, m2) = (1.0, 0.8);
        let (i1, i2) = (0.0843, 0.0432);
        let q2: f64 = 0.7;
        let mm = inertia_matrix(&m, &[0.2, q2]).unwrap();
        let m11 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * q2.cos()) + i1 + i2;
        let m12 = m2 * (lc2 * lc2 + l1 * lc2 * q2.cos()) + i2;
        let m22 = m2 * lc2 * lc2 + i2;
        assert_relative_eq!(mm[(0, 0)], m11, epsilon = 1e-12);
        assert_relative_eq!(mm[(0, 1)], m12, epsilon = 1e-12);
        assert_relative_eq!(mm[(1, 1)], m22, epsilon = 1e-12);
    }

    #[test]
    fn analytic_inertia_derivative_matches_central_difference() {
        let m = RobotModel::ur5e_like();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let q = random_q(&m, &mut rng);
            let dm = inertia_derivatives(&m, &q).unwrap();
            let fd = oracle::inertia_derivatives_fd(&m, &q, 1e-6).unwrap();
            for k in 0..6 {
                assert!((&dm[k] - &fd[k]).amax() < 1e-8, "k = {k}");
            }
        }
    }

    #[test]
    fn coriolis_vanishes_at_rest() {
        let m = RobotModel::ur5e_like();
        let c = coriolis_matrix(&m, &[0.1, -0.7, 1.2, 0.3, -0.4, 0.5], &[0.0; 6]).unwrap();
        assert_eq!(c.amax(), 0.0);
    }

    #[test]
    fn exact_cancellation_gives_zero_acceleration() {
        let m = RobotModel::ur5e_like();
        let q = [0.1, -0.7, 1.2, 0.3, -0.4, 0.5];
        let qd = [0.3, -0.2, 0.5, 1.0, -0.7, 0.1];
        let terms = DynamicsTerms::compute(&m, &q, &qd).unwrap();
        let state = JointState::new(DVector::from_column_slice(&q), DVector::from_column_slice(&qd), 0.0);
        let acc = forward_dynamics(&m, &state, &bias_forces(&m, &q, &qd).unwrap()).unwrap();
        assert!(acc.amax() < 1e-12, "{acc}");
        let acc = forward_dynamics(&m, &state, &terms.bias(&state.qd)).unwrap();
        assert!(acc.amax() < 1e-10, "{acc}");
    }

    #[test]
    fn single_joint_has_no_velocity_product_torque() {
        let m = RobotModel::pendulum1().with_gravity(Vector3::zeros());
        let state = JointState::new(DVector::from_element(1, 0.3), DVector::from_element(1, 2.0), 0.0);
        let acc = forward_dynamics(&m, &state, &DVector::zeros(1)).unwrap();
        assert_eq!(acc[0], 0.0);
    }

    #[test]
    fn static_equilibrium_is_preserved() {
        let m = RobotModel::ur5e_like();
        let q = [0.1, -0.7, 1.2, 0.3, -0.4, 0.5];
        let state = JointState::at_rest(&q);
        let tau = gravity_vector(&m, &q).unwrap();
        let next = step(&m, &state, &tau, 1e-3).unwrap();
        assert!((&next.q - &state.q).amax() < 1e-12);
        assert!(next.qd.amax() < 1e-12);
        assert_eq!(next.t, 1e-3);
    }

    #[test]
    fn step_rejects_bad_dt_and_dimensions() {
        let m = RobotModel::pendulum1();
        let s = JointState::at_rest(&[0.0]);
        assert!(step(&m, &s, &DVector::zeros(1), 0.0).is_err());
        assert!(step(&m, &s, &DVector::zeros(2), 1e-3).is_err());
    }

    #[test]
    fn non_finite_step_is_reported() {
        let m = RobotModel::pendulum1();
        let s = JointState::at_rest(&[0.0]);
        let err = step(&m, &s, &DVector::from_element(1, f64::INFINITY), 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn kinetic_energy_matches_link_twists() {
        let m = RobotModel::ur5e_like();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let q = random_q(&m, &mut rng);
            let qd: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ke = kinetic_energy(&m, &q, &qd).unwrap();
            let oracle = oracle::link_kinetic_energy(&m, &q, &qd).unwrap();
            assert_relative_eq!(ke, oracle, max_relative = 1e-12);
        }
    }

    #[test]
    fn newton_euler_matches_assembled_terms() {
        let m = RobotModel::ur5e_like();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let q = random_q(&m, &mut rng);
            let qd: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let qdd: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            let terms = DynamicsTerms::compute(&m, &q, &qd).unwrap();
            let qd_v = DVector::from_column_slice(&qd);
            let expected = &terms.mass * DVector::from_column_slice(&qdd) + terms.bias(&qd_v);
            let tau = inverse_dynamics(&m, &q, &qd, &qdd).unwrap();
            assert!((&tau - &expected).amax() < 1e-9 * expected.amax().max(1.0));
            let bias = bias_forces(&m, &q, &qd).unwrap();
            assert!((&bias - terms.bias(&qd_v)).amax() < 1e-9 * expected.amax().max(1.0));
            let reference = oracle::inverse_dynamics(&m, &q, &qd, &qdd).unwrap();
            assert!((&tau - &reference).amax() < 1e-9 * expected.amax().max(1.0));
        }
    }
}
