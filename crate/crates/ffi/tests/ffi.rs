use std::ffi::{CStr, CString};
use std::ptr;

use manipulator_smc_ffi::*;

fn load(name: &str) -> *mut MsmcModel {
    let name = CString::new(name).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { msmc_model_load(name.as_ptr(), &mut model) }, MsmcStatus::Ok);
    assert!(!model.is_null());
    model
}

fn last_error() -> String {
    let p = msmc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn model_round_trip_and_kinematics() {
    let model = load("pendulum1");
    unsafe {
        assert_eq!(msmc_model_dof(model), 1);
        let mut pose = [0.0; 6];
        assert_eq!(msmc_forward_kinematics(model, [0.0].as_ptr(), 1, pose.as_mut_ptr()), MsmcStatus::Ok);
        assert!(pose.iter().all(|v| v.is_finite()));
        assert!(msmc_last_error().is_null());
        msmc_model_free(model);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let model = load("ur5e_like");
    unsafe {
        let mut pose = [0.0; 6];
        let status = msmc_forward_kinematics(model, [0.0; 3].as_ptr(), 3, pose.as_mut_ptr());
        assert_eq!(status, MsmcStatus::DimensionMismatch);
        assert!(last_error().contains("expected 6"));

        let status = msmc_forward_kinematics(ptr::null(), [0.0; 6].as_ptr(), 6, pose.as_mut_ptr());
        assert_eq!(status, MsmcStatus::NullPointer);

        let bad = CString::new("no_such_model.toml").unwrap();
        let mut out = ptr::null_mut();
        assert_ne!(msmc_model_load(bad.as_ptr(), &mut out), MsmcStatus::Ok);
        assert!(out.is_null());
        assert!(!last_error().is_empty());

        let tau = [0.0; 6];
        let status = msmc_mbsmc_torque(
            model,
            tau.as_ptr(),
            tau.as_ptr(),
            tau.as_ptr(),
            tau.as_ptr(),
            tau.as_ptr(),
            6,
            1.0,
            -1.0,
            1.0,
            1.0,
            [0.0; 6].as_mut_ptr(),
            ptr::null_mut(),
        );
        assert_eq!(status, MsmcStatus::InvalidArgument);
        msmc_model_free(model);
        msmc_model_free(ptr::null_mut());
    }
}

#[test]
fn dynamics_agree_through_the_boundary() {
    let model = load("ur5e_like");
    let q = [0.1, -0.7, 1.2, 0.3, -0.4, 0.5];
    let qd = [0.3, -0.2, 0.5, 1.0, -0.7, 0.1];
    let qdd = [1.0, 0.5, -0.3, 0.2, 0.0, -1.0];
    unsafe {
        let mut tau = [0.0; 6];
        assert_eq!(
            msmc_inverse_dynamics(model, q.as_ptr(), qd.as_ptr(), qdd.as_ptr(), 6, tau.as_mut_ptr()),
            MsmcStatus::Ok
        );
        let mut back = [0.0; 6];
        assert_eq!(
            msmc_forward_dynamics(model, q.as_ptr(), qd.as_ptr(), tau.as_ptr(), 6, back.as_mut_ptr()),
            MsmcStatus::Ok
        );
        for (a, b) in back.iter().zip(qdd) {
            assert!((a - b).abs() < 1e-8);
        }

        let (mut m, mut c, mut g) = ([0.0; 36], [0.0; 36], [0.0; 6]);
        let status = msmc_dynamics_terms(
            model,
            q.as_ptr(),
            qd.as_ptr(),
            6,
            m.as_mut_ptr(),
            c.as_mut_ptr(),
            g.as_mut_ptr(),
        );
        assert_eq!(status, MsmcStatus::Ok);
        for i in 0..6 {
            let mut rhs = g[i];
            for j in 0..6 {
                assert!((m[i + 6 * j] - m[j + 6 * i]).abs() < 1e-12);
                rhs += m[i + 6 * j] * qdd[j] + c[i + 6 * j] * qd[j];
            }
            assert!((rhs - tau[i]).abs() < 1e-8);
        }

        // On the reference the sliding torque is pure inverse dynamics.
        let mut smc = [0.0; 6];
        let mut sigma = [1.0; 6];
        let status = msmc_mbsmc_torque(
            model,
            q.as_ptr(),
            qd.as_ptr(),
            q.as_ptr(),
            qd.as_ptr(),
            qdd.as_ptr(),
            6,
            100.0,
            1.0,
            60.0,
            1.0,
            smc.as_mut_ptr(),
            sigma.as_mut_ptr(),
        );
        assert_eq!(status, MsmcStatus::Ok);
        assert!(sigma.iter().all(|s| *s == 0.0));
        for (a, b) in smc.iter().zip(tau) {
            assert!((a - b).abs() < 1e-9);
        }
        msmc_model_free(model);
    }
}

#[test]
fn scenario_run_and_log_export() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hold.toml");
    std::fs::write(
        &path,
        r#"
name = "hold"
model = "planar2"
dt = 0.001
duration = 0.5
controller = "pid"
rng_seed = 1

[trajectory]
kind = "waypoints"
waypoints = [[0.2, -0.3], [0.4, -0.1]]
durations = [0.5]

[gains.pid]
kp = 100.0
ki = 1.0
kd = 10.0
"#,
    )
    .unwrap();
    let path_c = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(msmc_scenario_load(path_c.as_ptr(), &mut scenario), MsmcStatus::Ok);
        let mut log = ptr::null_mut();
        assert_eq!(msmc_scenario_run(scenario, ptr::null(), &mut log), MsmcStatus::Ok);
        assert_eq!(msmc_log_rows(log), 501);

        let (mut rmse, mut jerk, mut effort) = ([0.0; 2], [0.0; 2], 0.0);
        let status = msmc_log_metrics(log, 2, rmse.as_mut_ptr(), jerk.as_mut_ptr(), ptr::null_mut(), &mut effort);
        assert_eq!(status, MsmcStatus::Ok);
        assert!(rmse.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(effort > 0.0);

        let csv = dir.path().join("log.csv");
        let csv_c = CString::new(csv.to_str().unwrap()).unwrap();
        assert_eq!(msmc_log_write_csv(log, csv_c.as_ptr()), MsmcStatus::Ok);
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("t,"));
        assert_eq!(text.lines().count(), 502);

        let missing = CString::new("mbsmc").unwrap();
        let mut other = ptr::null_mut();
        assert_eq!(msmc_scenario_run(scenario, missing.as_ptr(), &mut other), MsmcStatus::InvalidArgument);
        assert!(last_error().contains("gains.mbsmc"));

        msmc_log_free(log);
        msmc_scenario_free(scenario);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/manipulator_smc.h");
    for name in [
        "msmc_last_error",
        "msmc_model_load",
        "msmc_model_free",
        "msmc_forward_kinematics",
        "msmc_dynamics_terms",
        "msmc_mbsmc_torque",
        "msmc_scenario_run",
        "msmc_log_metrics",
        "MSMC_STATUS_DIVERGED",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
