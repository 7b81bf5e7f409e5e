//! Joint-space controllers: model-based sliding mode (MBSMC), non-model-based
//! sliding mode (NMBSMC) and PID, plus the sliding-surface and Lyapunov
//! helpers they share.
//!
//! Sign convention: the tracking error is `e = q - q_d`. All three laws are
//! stabilising, so feedback enters with a negative sign on `e`.
//!
//! MBSMC cancels the modelled dynamics and imposes `sigma_dot = -P3 tanh(sigma / phi)`
//! on the surface `sigma = P1 e + P2 e_dot`:
//!
//! ```text
//! tau = C qd + G + M (qdd_d - (P1/P2) e_dot - (P3/P2) tanh(sigma / phi))
//! ```
//!
//! where the first part is the equivalent control (`L_f sigma + L_g sigma u = 0`
//! with `L_g sigma = P2 M^-1`) and the last term is the smoothed switching
//! control. `phi` is the width of the tanh boundary layer (1 by default, which
//! is the plain `tanh(sigma)`).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{inverse_dynamics, DynamicsTerms, JointState};
use crate::error::{check_len, Error, Result};
use crate::model::RobotModel;

/// `|sigma|` below this is treated as the sliding phase in diagnostics.
pub const SLIDING_EPSILON: f64 = 0.05;

/// Tuning triple of the sliding-mode laws, one value per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingParams {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub p3: Vec<f64>,
    /// Width of the tanh boundary layer.
    #[serde(default = "unit_width")]
    pub boundary_layer: f64,
}

fn unit_width() -> f64 {
    1.0
}

impl SlidingParams {
    /// Broadcasts scalar gains to `n` joints.
    pub fn uniform(n: usize, p1: f64, p2: f64, p3: f64) -> Self {
        Self {
            p1: vec![p1; n],
            p2: vec![p2; n],
            p3: vec![p3; n],
            boundary_layer: 1.0,
        }
    }

    pub fn with_boundary_layer(mut self, width: f64) -> Self {
        self.boundary_layer = width;
        self
    }

    pub fn dof(&self) -> usize {
        self.p1.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("P1", n, self.p1.len())?;
        check_len("P2", n, self.p2.len())?;
        check_len("P3", n, self.p3.len())?;
        if let Some((j, v)) = self.p1.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!("P1[{j}] = {v} must be > 0")));
        }
        // P3 = 0 leaves only the equivalent control.
        if let Some((j, v)) = self.p3.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("P3[{j}] = {v} must be >= 0")));
        }
        if let Some((joint, &value)) = self.p2.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Transversality { joint, value });
        }
        if !(self.boundary_layer.is_finite() && self.boundary_layer > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "boundary layer width {} must be > 0",
                self.boundary_layer
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
    pub kd: Vec<f64>,
}

impl PidGains {
    pub fn uniform(n: usize, kp: f64, ki: f64, kd: f64) -> Self {
        Self {
            kp: vec![kp; n],
            ki: vec![ki; n],
            kd: vec![kd; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("Kp", n, self.kp.len())?;
        check_len("Ki", n, self.ki.len())?;
        check_len("Kd", n, self.kd.len())?;
        for (name, gains) in [("Kp", &self.kp), ("Ki", &self.ki), ("Kd", &self.kd)] {
            if let Some((j, v)) = gains.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::InvalidArgument(format!("{name}[{j}] = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Desired position, velocity and acceleration at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
    pub acceleration: DVector<f64>,
}

impl Reference {
    pub fn hold(q: &[f64]) -> Self {
        let n = q.len();
        Self {
            position: DVector::from_column_slice(q),
            velocity: DVector::zeros(n),
            acceleration: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.position.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDiagnostics {
    pub sigma: DVector<f64>,
    /// `1/2 |sigma|^2`.
    pub lyapunov: f64,
    pub error: DVector<f64>,
    pub tau: DVector<f64>,
}

/// `(q - q_d, qd - qd_d)`.
pub fn tracking_error(state: &JointState, reference: &Reference) -> Result<(DVector<f64>, DVector<f64>)> {
    check_len("reference position", state.dof(), reference.position.len())?;
    check_len("reference velocity", state.dof(), reference.velocity.len())?;
    check_len("joint velocity", state.dof(), state.qd.len())?;
    Ok((&state.q - &reference.position, &state.qd - &reference.velocity))
}

/// `sigma_i = P1_i e_i + P2_i e_dot_i`.
pub fn sliding_surface(e: &DVector<f64>, e_dot: &DVector<f64>, params: &SlidingParams) -> DVector<f64> {
    DVector::from_iterator(
        e.len(),
        (0..e.len()).map(|i| params.p1[i] * e[i] + params.p2[i] * e_dot[i]),
    )
}

pub fn lyapunov_value(sigma: &DVector<f64>) -> f64 {
    0.5 * sigma.norm_squared()
}

/// Finite reaching-time bound `|sigma_0| / P3` of an ideal relay switching law.
pub fn reaching_time_bound(sigma0: f64, p3: f64) -> Result<f64> {
    if !(p3 > 0.0 && p3.is_finite()) {
        return Err(Error::InvalidArgument(format!("P3 = {p3} must be > 0")));
    }
    Ok(sigma0.abs() / p3)
}

fn switching(sigma: &DVector<f64>, params: &SlidingParams) -> DVector<f64> {
    sigma.map(|s| (s / params.boundary_layer).tanh())
}

/// Commanded joint acceleration `qdd_d - (P1/P2) e_dot - (P3/P2) tanh(sigma / phi)`
/// and the surface value.
fn commanded_acceleration(
    state: &JointState,
    reference: &Reference,
    params: &SlidingParams,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = state.dof();
    params.validate(n)?;
    check_len("reference acceleration", n, reference.acceleration.len())?;
    let (e, e_dot) = tracking_error(state, reference)?;
    let sigma = sliding_surface(&e, &e_dot, params);
    let sw = switching(&sigma, params);
    let commanded = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            reference.acceleration[i] - params.p1[i] / params.p2[i] * e_dot[i] - params.p3[i] / params.p2[i] * sw[i]
        }),
    );
    Ok((commanded, sigma, e))
}

/// Model-based SMC torque from precomputed dynamics terms.
pub fn mbsmc_torque_with_terms(
    terms: &DynamicsTerms,
    state: &JointState,
    reference: &Reference,
    params: &SlidingParams,
) -> Result<(DVector<f64>, ControlDiagnostics)> {
    check_len("dynamics terms", state.dof(), terms.gravity.len())?;
    let (commanded, sigma, e) = commanded_acceleration(state, reference, params)?;
    let tau = terms.bias(&state.qd) + &terms.mass * commanded;
    finish(tau, sigma, e)
}

/// Model-based SMC torque. `M a + C qd + G` is evaluated in one inverse
/// dynamics pass of `model`.
pub fn mbsmc_torque(
    model: &RobotModel,
    state: &JointState,
    reference: &Reference,
    params: &SlidingParams,
) -> Result<(DVector<f64>, ControlDiagnostics)> {
    check_len("joint position", model.dof(), state.dof())?;
    let (commanded, sigma, e) = commanded_acceleration(state, reference, params)?;
    let tau = inverse_dynamics(model, state.q.as_slice(), state.qd.as_slice(), commanded.as_slice())?;
    finish(tau, sigma, e)
}

/// Non-model-based SMC: `tau = -(P1 e + P3 tanh(sigma / phi))`.
pub fn nmbsmc_torque(
    e: &DVector<f64>,
    e_dot: &DVector<f64>,
    params: &SlidingParams,
) -> Result<(DVector<f64>, ControlDiagnostics)> {
    let n = e.len();
    check_len("error rate", n, e_dot.len())?;
    params.validate(n)?;
    let sigma = sliding_surface(e, e_dot, params);
    let sw = switching(&sigma, params);
    let tau = DVector::from_iterator(n, (0..n).map(|i| -(params.p1[i] * e[i] + params.p3[i] * sw[i])));
    finish(tau, sigma, e.clone())
}

/// `tau = -(Kp e + Ki int(e) + Kd e_dot)`; the integral is owned by the caller.
pub fn pid_torque(
    e: &DVector<f64>,
    e_integral: &DVector<f64>,
    e_dot: &DVector<f64>,
    gains: &PidGains,
) -> Result<DVector<f64>> {
    let n = e.len();
    check_len("error integral", n, e_integral.len())?;
    check_len("error rate", n, e_dot.len())?;
    gains.validate(n)?;
    Ok(DVector::from_iterator(
        n,
        (0..n).map(|i| -(gains.kp[i] * e[i] + gains.ki[i] * e_integral[i] + gains.kd[i] * e_dot[i])),
    ))
}

fn finish(
    tau: DVector<f64>,
    sigma: DVector<f64>,
    error: DVector<f64>,
) -> Result<(DVector<f64>, ControlDiagnostics)> {
    if !tau.iter().all(|t| t.is_finite()) {
        return Err(Error::InvalidArgument(format!("controller produced non-finite torque {tau:?}")));
    }
    let diag = ControlDiagnostics {
        lyapunov: lyapunov_value(&sigma),
        sigma,
        error,
        tau: tau.clone(),
    };
    Ok((tau, diag))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Mbsmc,
    Nmbsmc,
    Pid,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Mbsmc, ControllerKind::Nmbsmc, ControllerKind::Pid];

    /// Lower-case identifier used in configs and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Mbsmc => "mbsmc",
            ControllerKind::Nmbsmc => "nmbsmc",
            ControllerKind::Pid => "pid",
        }
    }

    /// Column label in reports.
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Mbsmc => "MBSMC",
            ControllerKind::Nmbsmc => "NMBSMC",
            ControllerKind::Pid => "PID",
        }
    }

    /// Names of the three tuned scalars.
    pub fn gain_names(self) -> [&'static str; 3] {
        match self {
            ControllerKind::Pid => ["kp", "ki", "kd"],
            _ => ["p1", "p2", "p3"],
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mbsmc" => Ok(ControllerKind::Mbsmc),
            "nmbsmc" => Ok(ControllerKind::Nmbsmc),
            "pid" => Ok(ControllerKind::Pid),
            other => Err(Error::InvalidArgument(format!(
                "unknown controller `{other}` (expected mbsmc, nmbsmc or pid)"
            ))),
        }
    }
}

/// A controller together with its gains.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    Mbsmc(SlidingParams),
    Nmbsmc(SlidingParams),
    Pid(PidGains),
}

impl ControllerSpec {
    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerSpec::Mbsmc(_) => ControllerKind::Mbsmc,
            ControllerSpec::Nmbsmc(_) => ControllerKind::Nmbsmc,
            ControllerSpec::Pid(_) => ControllerKind::Pid,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ControllerSpec::Mbsmc(p) | ControllerSpec::Nmbsmc(p) => p.validate(n),
            ControllerSpec::Pid(g) => g.validate(n),
        }
    }
}
