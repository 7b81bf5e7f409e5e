//! Tracking and smoothness metrics over simulation logs, threshold checks and
//! the comparison-table layout.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::forward_kinematics;
use crate::model::RobotModel;

/// One logged control step. `tau` is the torque applied over `[t, t + dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub tau: Vec<f64>,
    pub sigma: Vec<f64>,
    pub v: f64,
    pub q_des: Vec<f64>,
    pub qd_des: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub step: usize,
    pub t: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub dt: f64,
    pub dof: usize,
    pub rows: Vec<LogRow>,
    /// Set when the run stopped early on a non-finite state.
    pub divergence: Option<Divergence>,
}

impl SimulationLog {
    pub fn new(dt: f64, dof: usize) -> Self {
        Self {
            dt,
            dof,
            rows: Vec::new(),
            divergence: None,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    fn require_rows(&self, needed: usize) -> Result<()> {
        if self.rows.len() < needed {
            return Err(Error::TooFewSamples {
                needed,
                got: self.rows.len(),
            });
        }
        Ok(())
    }

    fn header(&self) -> Vec<String> {
        let n = self.dof;
        let mut h = vec!["t".to_string()];
        for p in ["q", "qd", "tau", "sigma"] {
            h.extend((1..=n).map(|i| format!("{p}{i}")));
        }
        h.push("V".into());
        for p in ["q_des", "qd_des"] {
            h.extend((1..=n).map(|i| format!("{p}{i}")));
        }
        h
    }

    /// Columns `t, q1..n, qd1..n, tau1..n, sigma1..n, V, q_des1..n, qd_des1..n`.
    /// Floats use the shortest round-trip representation, so output is
    /// byte-stable and re-imports exactly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header()).map_err(csv_err)?;
        for r in &self.rows {
            let fields = std::iter::once(r.t)
                .chain(r.q.iter().copied())
                .chain(r.qd.iter().copied())
                .chain(r.tau.iter().copied())
                .chain(r.sigma.iter().copied())
                .chain(std::iter::once(r.v))
                .chain(r.q_des.iter().copied())
                .chain(r.qd_des.iter().copied())
                .map(|v| v.to_string());
            w.write_record(fields).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a log written by [`SimulationLog::write_csv`]. The divergence
    /// flag is not part of the CSV and comes back unset.
    pub fn read_csv<R: Read>(input: R, dt: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers().map_err(csv_err)?.len();
        if width < 8 || (width - 2) % 6 != 0 {
            return Err(Error::Parse {
                what: "log CSV",
                message: format!("expected 2 + 6n columns, got {width}"),
            });
        }
        let n = (width - 2) / 6;
        let mut log = SimulationLog::new(dt, n);
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            let v = record
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    what: "log CSV",
                    message: e.to_string(),
                })?;
            let block = |b: usize| v[1 + b * n..1 + (b + 1) * n].to_vec();
            log.rows.push(LogRow {
                t: v[0],
                q: block(0),
                qd: block(1),
                tau: block(2),
                sigma: block(3),
                v: v[1 + 4 * n],
                q_des: v[2 + 4 * n..2 + 5 * n].to_vec(),
                qd_des: v[2 + 5 * n..2 + 6 * n].to_vec(),
            });
        }
        Ok(log)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        what: "CSV",
        message: e.to_string(),
    }
}

/// Root-mean-square of `q - q_des` per joint.
pub fn rmse_joint(log: &SimulationLog) -> Result<Vec<f64>> {
    log.require_rows(1)?;
    let mut sum = vec![0.0; log.dof];
    for r in &log.rows {
        for (i, s) in sum.iter_mut().enumerate() {
            let e = r.q[i] - r.q_des[i];
            *s += e * e;
        }
    }
    let count = log.rows.len() as f64;
    Ok(sum.into_iter().map(|s| (s / count).sqrt()).collect())
}

/// Forward-difference derivative series of the logged positions, per joint.
/// Each level is one sample shorter than the one before.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeChain {
    pub velocity: Vec<Vec<f64>>,
    pub acceleration: Vec<Vec<f64>>,
    pub jerk: Vec<Vec<f64>>,
    pub snap: Vec<Vec<f64>>,
}

fn difference(series: &[f64], dt: f64) -> Vec<f64> {
    series.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
}

pub fn derivative_chain(log: &SimulationLog) -> Result<DerivativeChain> {
    log.require_rows(5)?;
    let mut chain = DerivativeChain {
        velocity: Vec::with_capacity(log.dof),
        acceleration: Vec::with_capacity(log.dof),
        jerk: Vec::with_capacity(log.dof),
        snap: Vec::with_capacity(log.dof),
    };
    for i in 0..log.dof {
        let q: Vec<f64> = log.rows.iter().map(|r| r.q[i]).collect();
        let v = difference(&q, log.dt);
        let a = difference(&v, log.dt);
        let j = difference(&a, log.dt);
        let s = difference(&j, log.dt);
        chain.velocity.push(v);
        chain.acceleration.push(a);
        chain.jerk.push(j);
        chain.snap.push(s);
    }
    Ok(chain)
}

/// Largest absolute change between successive values; zero for fewer than two.
fn max_step(series: &[f64]) -> f64 {
    series.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    pub velocity_continuity: f64,
    pub acceleration_profile: f64,
    pub jerk: f64,
    pub snap: f64,
}

/// Per joint, the maximum absolute successive difference of each derivative
/// series (so a constant-velocity ramp has zero velocity continuity).
pub fn smoothness_metrics(log: &SimulationLog) -> Result<Vec<Smoothness>> {
    let chain = derivative_chain(log)?;
    Ok((0..log.dof)
        .map(|i| Smoothness {
            velocity_continuity: max_step(&chain.velocity[i]),
            acceleration_profile: max_step(&chain.acceleration[i]),
            jerk: max_step(&chain.jerk[i]),
            snap: max_step(&chain.snap[i]),
        })
        .collect())
}

/// Rows whose time lies in the final `window` seconds of the log.
fn window_start(log: &SimulationLog, window: f64) -> Result<usize> {
    log.require_rows(1)?;
    let first = log.rows[0].t;
    let last = log.rows[log.rows.len() - 1].t;
    if !(window >= 0.0 && window <= last - first + 1e-9 * log.dt) {
        return Err(Error::InvalidArgument(format!(
            "steady-state window {window} s exceeds the log duration {} s",
            last - first
        )));
    }
    let cutoff = last - window - 1e-9 * log.dt;
    Ok(log.rows.iter().position(|r| r.t >= cutoff).unwrap_or(log.rows.len() - 1))
}

pub const DEFAULT_STEADY_STATE_WINDOW: f64 = 0.5;

/// Mean `|q - q_des|` per joint over the last `window` seconds.
pub fn steady_state_error(log: &SimulationLog, window: f64) -> Result<Vec<f64>> {
    let start = window_start(log, window)?;
    let rows = &log.rows[start..];
    let mut sum = vec![0.0; log.dof];
    for r in rows {
        for (i, s) in sum.iter_mut().enumerate() {
            *s += (r.q[i] - r.q_des[i]).abs();
        }
    }
    let count = rows.len() as f64;
    Ok(sum.into_iter().map(|s| s / count).collect())
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartesianRmse {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl CartesianRmse {
    pub fn as_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.alpha, self.beta, self.gamma]
    }
}

/// End-effector RMSE per position axis and per roll/pitch/yaw angle, with
/// angle differences wrapped.
pub fn rmse_cartesian(model: &RobotModel, log: &SimulationLog) -> Result<CartesianRmse> {
    log.require_rows(1)?;
    let mut sum = [0.0; 6];
    for r in &log.rows {
        let actual = forward_kinematics(model, &r.q)?;
        let desired = forward_kinematics(model, &r.q_des)?;
        let d = actual.position - desired.position;
        let (ra, pa, ya) = actual.rpy();
        let (rd, pd, yd) = desired.rpy();
        let diffs = [d.x, d.y, d.z, wrap_angle(ra - rd), wrap_angle(pa - pd), wrap_angle(ya - yd)];
        for (s, e) in sum.iter_mut().zip(diffs) {
            *s += e * e;
        }
    }
    let count = log.rows.len() as f64;
    let v = sum.map(|s| (s / count).sqrt());
    Ok(CartesianRmse {
        x: v[0],
        y: v[1],
        z: v[2],
        alpha: v[3],
        beta: v[4],
        gamma: v[5],
    })
}

/// `sum_k |tau_k|^2 dt`, N^2 m^2 s.
pub fn control_effort(log: &SimulationLog) -> Result<f64> {
    log.require_rows(1)?;
    Ok(log
        .rows
        .iter()
        .map(|r| r.tau.iter().map(|t| t * t).sum::<f64>() * log.dt)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointMetrics {
    pub rmse: f64,
    pub velocity_continuity: f64,
    pub acceleration_profile: f64,
    pub jerk: f64,
    pub snap: f64,
    pub steady_state_error: f64,
}

/// Upper bounds used by [`threshold_report`]. Comparisons are strict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rmse: f64,
    pub velocity_continuity: f64,
    pub acceleration_profile: f64,
    pub jerk: f64,
    pub snap: f64,
    pub cartesian_position: f64,
    pub cartesian_angle: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rmse: 5e-3,
            velocity_continuity: 1e-3,
            acceleration_profile: 5e-3,
            jerk: 5e-3,
            snap: 5e-3,
            cartesian_position: 5e-3,
            cartesian_angle: 5e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointPass {
    pub rmse: bool,
    pub velocity_continuity: bool,
    pub acceleration_profile: bool,
    pub jerk: bool,
    pub snap: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub joints: Vec<JointPass>,
    /// x, y, z, alpha, beta, gamma.
    pub cartesian: [bool; 6],
}

impl ThresholdReport {
    pub fn all_pass(&self) -> bool {
        self.cartesian.iter().all(|b| *b)
            && self
                .joints
                .iter()
                .all(|j| j.rmse && j.velocity_continuity && j.acceleration_profile && j.jerk && j.snap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub joints: Vec<JointMetrics>,
    pub cartesian: CartesianRmse,
    pub control_effort: f64,
    pub threshold_pass: ThresholdReport,
}

impl MetricsReport {
    /// Builds the full report, checking against `thresholds`.
    pub fn compute(model: &RobotModel, log: &SimulationLog, thresholds: &Thresholds) -> Result<Self> {
        let rmse = rmse_joint(log)?;
        let smooth = smoothness_metrics(log)?;
        let window = DEFAULT_STEADY_STATE_WINDOW.min(log.rows[log.len() - 1].t - log.rows[0].t);
        let sse = steady_state_error(log, window)?;
        let joints: Vec<JointMetrics> = (0..log.dof)
            .map(|i| JointMetrics {
                rmse: rmse[i],
                velocity_continuity: smooth[i].velocity_continuity,
                acceleration_profile: smooth[i].acceleration_profile,
                jerk: smooth[i].jerk,
                snap: smooth[i].snap,
                steady_state_error: sse[i],
            })
            .collect();
        let cartesian = rmse_cartesian(model, log)?;
        let mut report = Self {
            joints,
            cartesian,
            control_effort: control_effort(log)?,
            threshold_pass: ThresholdReport {
                joints: Vec::new(),
                cartesian: [false; 6],
            },
        };
        report.threshold_pass = threshold_report(&report, thresholds);
        Ok(report)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "metrics report",
            message: e.to_string(),
        })
    }
}

pub fn threshold_report(report: &MetricsReport, thresholds: &Thresholds) -> ThresholdReport {
    let joints = report
        .joints
        .iter()
        .map(|j| JointPass {
            rmse: j.rmse < thresholds.rmse,
            velocity_continuity: j.velocity_continuity < thresholds.velocity_continuity,
            acceleration_profile: j.acceleration_profile < thresholds.acceleration_profile,
            jerk: j.jerk < thresholds.jerk,
            snap: j.snap < thresholds.snap,
        })
        .collect();
    let c = report.cartesian.as_array();
    let cartesian = std::array::from_fn(|k| {
        let limit = if k < 3 {
            thresholds.cartesian_position
        } else {
            thresholds.cartesian_angle
        };
        c[k] < limit
    });
    ThresholdReport { joints, cartesian }
}

/// Row labels of the comparison table, in order.
pub const TABLE_ROWS: [&str; 7] = [
    "RMSE of joint motions",
    "Velocity Continuity",
    "Acceleration Profile",
    "Jerk Profile",
    "Snap Profile",
    "Steady state error",
    "RMSE (Trajectory Error)",
];

pub const EFFORT_ROW: &str = "Control effort";

/// A table column group: a controller's report, or the error that prevented
/// one from being produced.
pub type TableCell<'a> = (&'a str, std::result::Result<&'a MetricsReport, &'a str>);

/// Writes the wide comparison table: one column group per controller with a
/// column per joint, joint metric rows first, then the Cartesian row (x, y, z,
/// alpha, beta, gamma in the group's first six columns) and the control
/// effort. Failed cells are written as `error: ...`.
pub fn write_table_csv<W: Write>(out: W, dof: usize, columns: &[TableCell<'_>]) -> Result<()> {
    let width = dof.max(6);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["Metric".to_string()];
    for (name, _) in columns {
        header.extend((0..width).map(|i| {
            if i < dof {
                format!("{name} theta{}", i + 1)
            } else {
                format!("{name} -")
            }
        }));
    }
    w.write_record(&header).map_err(csv_err)?;

    let joint_value = |m: &JointMetrics, row: usize| match row {
        0 => m.rmse,
        1 => m.velocity_continuity,
        2 => m.acceleration_profile,
        3 => m.jerk,
        4 => m.snap,
        _ => m.steady_state_error,
    };
    for (row, label) in TABLE_ROWS.iter().enumerate() {
        let mut record = vec![label.to_string()];
        for (_, cell) in columns {
            for i in 0..width {
                record.push(match cell {
                    Err(msg) => format!("error: {msg}"),
                    Ok(r) if row == 6 => r.cartesian.as_array().get(i).map(f64::to_string).unwrap_or_default(),
                    Ok(r) => r.joints.get(i).map(|m| joint_value(m, row).to_string()).unwrap_or_default(),
                });
            }
        }
        w.write_record(&record).map_err(csv_err)?;
    }
    let mut record = vec![EFFORT_ROW.to_string()];
    for (_, cell) in columns {
        for i in 0..width {
            record.push(match (cell, i) {
                (Err(msg), _) => format!("error: {msg}"),
                (Ok(r), 0) => r.control_effort.to_string(),
                _ => String::new(),
            });
        }
    }
    w.write_record(&record).map_err(csv_err)?;
    w.flush()?;
    Ok(())
}
