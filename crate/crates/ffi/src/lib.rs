//! C ABI over `manipulator-smc`.
//!
//! Objects cross the boundary as opaque handles created by `msmc_*_new` /
//! `msmc_*_load` style functions and released with the matching `*_free`.
//! Every fallible function returns an [`MsmcStatus`]; on failure the message
//! is available from [`msmc_last_error`] on the same thread. Arrays are
//! caller-allocated and passed with their length.
//!
//! Handles are not synchronised: a handle may be moved between threads but
//! must not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use manipulator_smc::controllers::{mbsmc_torque, ControllerKind, Reference, SlidingParams};
use manipulator_smc::dynamics::{forward_dynamics, inverse_dynamics, DynamicsTerms, JointState};
use manipulator_smc::harness::{resolve_model, PreparedScenario, Scenario};
use manipulator_smc::kinematics::{estimate_workspace_volume, forward_kinematics};
use manipulator_smc::metrics::{control_effort, rmse_joint, smoothness_metrics, SimulationLog};
use manipulator_smc::{Error, RobotModel};
use nalgebra::DVector;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    Parse = 4,
    DimensionMismatch = 5,
    Numerical = 6,
    Io = 7,
    Diverged = 8,
    Panic = 9,
}

/// Opaque robot model.
pub struct MsmcModel(RobotModel);

/// Opaque scenario with its reference trajectory resolved.
pub struct MsmcScenario(PreparedScenario);

/// Opaque simulation log.
pub struct MsmcLog(SimulationLog);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MsmcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } => MsmcStatus::Parse,
            Error::InvalidModel(_) => MsmcStatus::InvalidModel,
            Error::Dimension { .. } => MsmcStatus::DimensionMismatch,
            Error::SingularInertia { .. } | Error::NonFinite { .. } | Error::IkFailed { .. } => MsmcStatus::Numerical,
            Error::Io(_) => MsmcStatus::Io,
            _ => MsmcStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MsmcStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MsmcStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MsmcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MsmcStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn dof_check(model: &RobotModel, n: usize) -> Result<(), Failure> {
    if n == model.dof() {
        Ok(())
    } else {
        Err(Error::Dimension {
            what: "joint array",
            expected: model.dof(),
            actual: n,
        }
        .into())
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn msmc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a model from a TOML file path or a built-in name
/// (`ur5e_like`, `pendulum1`, `planar2`).
///
/// # Safety
/// `spec` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msmc_model_load(spec: *const c_char, out: *mut *mut MsmcModel) -> MsmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = resolve_model(str_arg(spec, "spec")?, None)?;
        *out = Box::into_raw(Box::new(MsmcModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`msmc_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msmc_model_free(model: *mut MsmcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of joints, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msmc_model_dof(model: *const MsmcModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dof())
}

/// End-effector pose as `[x, y, z, roll, pitch, yaw]` (m, rad).
///
/// # Safety
/// `q` must hold `n` values and `pose_out` room for 6.
#[no_mangle]
pub unsafe extern "C" fn msmc_forward_kinematics(
    model: *const MsmcModel,
    q: *const f64,
    n: usize,
    pose_out: *mut f64,
) -> MsmcStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        dof_check(model, n)?;
        let pose = forward_kinematics(model, slice_arg(q, n, "q")?)?;
        let out = slice_out(pose_out, 6, "pose_out")?;
        let (r, p, y) = pose.rpy();
        out[..3].copy_from_slice(pose.position.as_slice());
        out[3..].copy_from_slice(&[r, p, y]);
        Ok(())
    })
}

/// Mass matrix, Coriolis matrix (both column-major, `n * n`) and gravity
/// vector at `(q, qd)`. Any of the outputs may be null to skip it.
///
/// # Safety
/// Inputs must hold `n` values; non-null outputs must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn msmc_dynamics_terms(
    model: *const MsmcModel,
    q: *const f64,
    qd: *const f64,
    n: usize,
    mass_out: *mut f64,
    coriolis_out: *mut f64,
    gravity_out: *mut f64,
) -> MsmcStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        dof_check(model, n)?;
        let terms = DynamicsTerms::compute(model, slice_arg(q, n, "q")?, slice_arg(qd, n, "qd")?)?;
        if !mass_out.is_null() {
            slice_out(mass_out, n * n, "mass_out")?.copy_from_slice(terms.mass.as_slice());
        }
        if !coriolis_out.is_null() {
            slice_out(coriolis_out, n * n, "coriolis_out")?.copy_from_slice(terms.coriolis.as_slice());
        }
        if !gravity_out.is_null() {
            slice_out(gravity_out, n, "gravity_out")?.copy_from_slice(terms.gravity.as_slice());
        }
        Ok(())
    })
}

/// Joint torques producing `qdd` at `(q, qd)`.
///
/// # Safety
/// All arrays must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn msmc_inverse_dynamics(
    model: *const MsmcModel,
    q: *const f64,
    qd: *const f64,
    qdd: *const f64,
    n: usize,
    tau_out: *mut f64,
) -> MsmcStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        dof_check(model, n)?;
        let tau = inverse_dynamics(
            model,
            slice_arg(q, n, "q")?,
            slice_arg(qd, n, "qd")?,
            slice_arg(qdd, n, "qdd")?,
        )?;
        slice_out(tau_out, n, "tau_out")?.copy_from_slice(tau.as_slice());
        Ok(())
    })
}

/// Joint accelerations under torque `tau` at `(q, qd)`.
///
/// # Safety
/// All arrays must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn msmc_forward_dynamics(
    model: *const MsmcModel,
    q: *const f64,
    qd: *const f64,
    tau: *const f64,
    n: usize,
    qdd_out: *mut f64,
) -> MsmcStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        dof_check(model, n)?;
        let state = JointState::new(
            DVector::from_column_slice(slice_arg(q, n, "q")?),
            DVector::from_column_slice(slice_arg(qd, n, "qd")?),
            0.0,
        );
        let qdd = forward_dynamics(model, &state, &DVector::from_column_slice(slice_arg(tau, n, "tau")?))?;
        slice_out(qdd_out, n, "qdd_out")?.copy_from_slice(qdd.as_slice());
        Ok(())
    })
}

/// Model-based sliding-mode torque with the same `(p1, p2, p3)` on every
/// joint and boundary-layer width `phi`. `sigma_out` may be null.
///
/// # Safety
/// Every array must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn msmc_mbsmc_torque(
    model: *const MsmcModel,
    q: *const f64,
    qd: *const f64,
    q_des: *const f64,
    qd_des: *const f64,
    qdd_des: *const f64,
    n: usize,
    p1: f64,
    p2: f64,
    p3: f64,
    phi: f64,
    tau_out: *mut f64,
    sigma_out: *mut f64,
) -> MsmcStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        dof_check(model, n)?;
        let v = |p, what| slice_arg(p, n, what).map(DVector::from_column_slice);
        let state = JointState::new(v(q, "q")?, v(qd, "qd")?, 0.0);
        let reference = Reference {
            position: v(q_des, "q_des")?,
            velocity: v(qd_des, "qd_des")?,
            acceleration: v(qdd_des, "qdd_des")?,
        };
        let params = SlidingParams::uniform(n, p1, p2, p3).with_boundary_layer(phi);
        params.validate(n)?;
        let (tau, diag) = mbsmc_torque(model, &state, &reference, &params)?;
        slice_out(tau_out, n, "tau_out")?.copy_from_slice(tau.as_slice());
        if !sigma_out.is_null() {
            slice_out(sigma_out, n, "sigma_out")?.copy_from_slice(diag.sigma.as_slice());
        }
        Ok(())
    })
}

/// Monte-Carlo reachable volume in m^3.
///
/// # Safety
/// `volume_out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msmc_workspace_volume(
    model: *const MsmcModel,
    samples: usize,
    voxel_size: f64,
    seed: u64,
    volume_out: *mut f64,
) -> MsmcStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        if volume_out.is_null() {
            return Err(null("volume_out"));
        }
        *volume_out = estimate_workspace_volume(model, samples, voxel_size, seed)?.volume;
        Ok(())
    })
}

/// Loads a scenario file; relative paths inside it resolve against its
/// directory. A null `path` loads the bundled canonical scenario.
///
/// # Safety
/// `path` must be null or nul-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn msmc_scenario_load(path: *const c_char, out: *mut *mut MsmcScenario) -> MsmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let prepared = if path.is_null() {
            Scenario::canonical().prepare(None)?
        } else {
            PreparedScenario::load(Path::new(str_arg(path, "path")?))?
        };
        *out = Box::into_raw(Box::new(MsmcScenario(prepared)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from [`msmc_scenario_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msmc_scenario_free(scenario: *mut MsmcScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the scenario with the gains it lists for `controller`
/// (`mbsmc`, `nmbsmc`, `pid`; null for the scenario's default). A diverged
/// run still produces a log and returns [`MsmcStatus::Diverged`].
///
/// # Safety
/// `controller` must be null or nul-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn msmc_scenario_run(
    scenario: *const MsmcScenario,
    controller: *const c_char,
    out: *mut *mut MsmcLog,
) -> MsmcStatus {
    guard(|| {
        let prepared = &handle(scenario, "scenario")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = if controller.is_null() {
            prepared.default_spec()?
        } else {
            let kind: ControllerKind = str_arg(controller, "controller")?
                .parse()
                .map_err(|e| Failure(MsmcStatus::InvalidArgument, format!("{e}")))?;
            prepared.spec_for(kind)?
        };
        let log = prepared.run(&spec)?;
        let divergence = log.divergence.as_ref().map(|d| format!("diverged at step {}: {}", d.step, d.message));
        *out = Box::into_raw(Box::new(MsmcLog(log)));
        match divergence {
            Some(message) => Err(Failure(MsmcStatus::Diverged, message)),
            None => Ok(()),
        }
    })
}

/// # Safety
/// `log` must come from [`msmc_scenario_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msmc_log_free(log: *mut MsmcLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// Number of logged rows, or 0 for a null handle.
///
/// # Safety
/// `log` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msmc_log_rows(log: *const MsmcLog) -> usize {
    log.as_ref().map_or(0, |l| l.0.len())
}

/// # Safety
/// `log` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn msmc_log_write_csv(log: *const MsmcLog, path: *const c_char) -> MsmcStatus {
    guard(|| {
        let log = &handle(log, "log")?.0;
        let file = std::fs::File::create(str_arg(path, "path")?).map_err(Error::from)?;
        log.write_csv(file)?;
        Ok(())
    })
}

/// Per-joint RMSE, jerk and snap metrics plus total control effort.
/// Array outputs hold `n` values each; any output may be null.
///
/// # Safety
/// Non-null outputs must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn msmc_log_metrics(
    log: *const MsmcLog,
    n: usize,
    rmse_out: *mut f64,
    jerk_out: *mut f64,
    snap_out: *mut f64,
    effort_out: *mut f64,
) -> MsmcStatus {
    guard(|| {
        let log = &handle(log, "log")?.0;
        if n != log.dof {
            return Err(Error::Dimension {
                what: "metric array",
                expected: log.dof,
                actual: n,
            }
            .into());
        }
        if !rmse_out.is_null() {
            slice_out(rmse_out, n, "rmse_out")?.copy_from_slice(&rmse_joint(log)?);
        }
        if !jerk_out.is_null() || !snap_out.is_null() {
            let smooth = smoothness_metrics(log)?;
            if !jerk_out.is_null() {
                for (o, s) in slice_out(jerk_out, n, "jerk_out")?.iter_mut().zip(&smooth) {
                    *o = s.jerk;
                }
            }
            if !snap_out.is_null() {
                for (o, s) in slice_out(snap_out, n, "snap_out")?.iter_mut().zip(&smooth) {
                    *o = s.snap;
                }
            }
        }
        if !effort_out.is_null() {
            *effort_out = control_effort(log)?;
        }
        Ok(())
    })
}
