//! Kinematic and inertial description of a serial revolute arm.
//!
//! Models are read from TOML documents. The canonical field names are:
//!
//! ```toml
//! name = "my_arm"
//! gravity = [0.0, 0.0, -9.81]
//!
//! [[joints]]
//! a = 0.0                # DH link length, m
//! d = 0.1625             # DH link offset, m
//! alpha = 1.5707963      # DH twist, rad, in (-pi, pi]
//! theta_offset = 0.0     # added to the joint coordinate, rad, in (-pi, pi]
//! mass = 3.761           # kg
//! center_of_mass = [0.0, -0.02561, 0.00193]   # m, link frame
//! inertia = [[0.0084, 0, 0], [0, 0.0064, 0], [0, 0, 0.0084]]  # kg m^2 about the COM
//! position_min = -6.28   # rad
//! position_max = 6.28    # rad
//! velocity_max = 3.14    # rad/s
//! torque_max = 150.0     # N m
//! ```
//!
//! Any field left out falls back to the bundled `ur5e_like` value for the same
//! joint index (and `name`/`gravity` to the bundled top-level values).

use std::fmt;
use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UR5E_LIKE: &str = include_str!("../data/models/ur5e_like.toml");
pub const PENDULUM1: &str = include_str!("../data/models/pendulum1.toml");
pub const PLANAR2: &str = include_str!("../data/models/planar2.toml");

/// Names of the models shipped with the crate.
pub const BUILTIN_MODELS: [&str; 3] = ["ur5e_like", "pendulum1", "planar2"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    pub theta_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DhParameters {
    pub rows: Vec<DhRow>,
}

impl DhParameters {
    pub fn n(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkInertia {
    pub mass: f64,
    /// Centre of mass in the link frame.
    pub center_of_mass: Vector3<f64>,
    /// Inertia tensor about the centre of mass, link-frame axes.
    pub inertia: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimit {
    pub position_min: f64,
    pub position_max: f64,
    pub velocity_max: f64,
    pub torque_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    pub joints: Vec<JointLimit>,
}

impl JointLimits {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub dh: DhParameters,
    pub inertia: Vec<LinkInertia>,
    pub limits: JointLimits,
    pub gravity: Vector3<f64>,
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl RobotModel {
    pub fn dof(&self) -> usize {
        self.dh.n()
    }

    /// Loads one of [`BUILTIN_MODELS`].
    pub fn builtin(name: &str) -> Result<RobotModel> {
        let text = match name {
            "ur5e_like" => UR5E_LIKE,
            "pendulum1" => PENDULUM1,
            "planar2" => PLANAR2,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown builtin model `{other}` (expected one of {BUILTIN_MODELS:?})"
                )))
            }
        };
        load_model(text)
    }

    pub fn ur5e_like() -> RobotModel {
        Self::builtin("ur5e_like").expect("bundled ur5e_like model is valid")
    }

    pub fn pendulum1() -> RobotModel {
        Self::builtin("pendulum1").expect("bundled pendulum1 model is valid")
    }

    pub fn planar2() -> RobotModel {
        Self::builtin("planar2").expect("bundled planar2 model is valid")
    }

    /// Copy of the model with every link mass and inertia tensor multiplied by
    /// `factor` (uniform density change, geometry untouched).
    pub fn with_mass_scale(&self, factor: f64) -> RobotModel {
        let mut scaled = self.clone();
        for link in &mut scaled.inertia {
            link.mass *= factor;
            link.inertia *= factor;
        }
        scaled
    }

    /// Copy of the model with gravity replaced.
    pub fn with_gravity(&self, gravity: Vector3<f64>) -> RobotModel {
        let mut m = self.clone();
        m.gravity = gravity;
        m
    }

    /// Sum of |a| and |d| over the chain; an upper bound on the distance from
    /// the base origin to any frame origin.
    pub fn total_link_length(&self) -> f64 {
        self.dh.rows.iter().map(|r| r.a.abs() + r.d.abs()).sum()
    }

    /// Distance from the shoulder to the wrist centre, taken as the sum of the
    /// DH link lengths |a_i|.
    pub fn reach(&self) -> f64 {
        self.dh.rows.iter().map(|r| r.a.abs()).sum()
    }

    pub fn to_toml(&self) -> String {
        let doc = ModelDocument {
            name: Some(self.name.clone()),
            gravity: Some([self.gravity.x, self.gravity.y, self.gravity.z]),
            joints: Some(
                (0..self.dof())
                    .map(|i| {
                        let dh = self.dh.rows[i];
                        let link = &self.inertia[i];
                        let lim = self.limits.joints[i];
                        let t = link.inertia;
                        JointDocument {
                            a: Some(dh.a),
                            d: Some(dh.d),
                            alpha: Some(dh.alpha),
                            theta_offset: Some(dh.theta_offset),
                            mass: Some(link.mass),
                            center_of_mass: Some([
                                link.center_of_mass.x,
                                link.center_of_mass.y,
                                link.center_of_mass.z,
                            ]),
                            inertia: Some([
                                [t[(0, 0)], t[(0, 1)], t[(0, 2)]],
                                [t[(1, 0)], t[(1, 1)], t[(1, 2)]],
                                [t[(2, 0)], t[(2, 1)], t[(2, 2)]],
                            ]),
                            position_min: Some(lim.position_min),
                            position_max: Some(lim.position_max),
                            velocity_max: Some(lim.velocity_max),
                            torque_max: Some(lim.torque_max),
                        }
                    })
                    .collect(),
            ),
        };
        toml::to_string(&doc).expect("model document serializes")
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    name: Option<String>,
    gravity: Option<[f64; 3]>,
    joints: Option<Vec<JointDocument>>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDocument {
    a: Option<f64>,
    d: Option<f64>,
    alpha: Option<f64>,
    theta_offset: Option<f64>,
    mass: Option<f64>,
    center_of_mass: Option<[f64; 3]>,
    inertia: Option<[[f64; 3]; 3]>,
    position_min: Option<f64>,
    position_max: Option<f64>,
    velocity_max: Option<f64>,
    torque_max: Option<f64>,
}

fn parse_document(text: &str) -> Result<ModelDocument> {
    toml::from_str(text).map_err(|e| Error::Parse {
        what: "model",
        message: e.to_string(),
    })
}

/// Parses and validates a model document, filling absent fields from the
/// bundled `ur5e_like` parameters.
pub fn load_model(text: &str) -> Result<RobotModel> {
    let doc = parse_document(text)?;
    let defaults = parse_document(UR5E_LIKE)?;
    let default_joints = defaults.joints.unwrap_or_default();

    let joints = doc.joints.unwrap_or_else(|| default_joints.clone());
    if joints.is_empty() {
        return Err(Error::InvalidModel(vec![Diagnostic {
            field: "joints".into(),
            message: "at least one joint is required".into(),
        }]));
    }

    let mut rows = Vec::with_capacity(joints.len());
    let mut links = Vec::with_capacity(joints.len());
    let mut limits = Vec::with_capacity(joints.len());
    let mut missing = Vec::new();
    for (i, j) in joints.iter().enumerate() {
        let fallback = default_joints.get(i).cloned().unwrap_or_default();
        macro_rules! field {
            ($name:ident) => {
                match j.$name.or(fallback.$name) {
                    Some(v) => v,
                    None => {
                        missing.push(Diagnostic {
                            field: format!("joints[{i}].{}", stringify!($name)),
                            message: "missing and no default exists for this joint index".into(),
                        });
                        Default::default()
                    }
                }
            };
        }
        rows.push(DhRow {
            a: field!(a),
            d: field!(d),
            alpha: field!(alpha),
            theta_offset: field!(theta_offset),
        });
        let com: [f64; 3] = field!(center_of_mass);
        let t: [[f64; 3]; 3] = field!(inertia);
        links.push(LinkInertia {
            mass: field!(mass),
            center_of_mass: Vector3::from(com),
            inertia: Matrix3::new(
                t[0][0], t[0][1], t[0][2], t[1][0], t[1][1], t[1][2], t[2][0], t[2][1], t[2][2],
            ),
        });
        limits.push(JointLimit {
            position_min: field!(position_min),
            position_max: field!(position_max),
            velocity_max: field!(velocity_max),
            torque_max: field!(torque_max),
        });
    }
    if !missing.is_empty() {
        return Err(Error::InvalidModel(missing));
    }

    let model = RobotModel {
        name: doc
            .name
            .or(defaults.name)
            .unwrap_or_else(|| "ur5e_like".into()),
        dh: DhParameters { rows },
        inertia: links,
        limits: JointLimits { joints: limits },
        gravity: Vector3::from(doc.gravity.or(defaults.gravity).unwrap_or([0.0, 0.0, -9.81])),
    };
    let diags = validate_model(&model);
    if diags.is_empty() {
        Ok(model)
    } else {
        Err(Error::InvalidModel(diags))
    }
}

fn angle_ok(x: f64) -> bool {
    x.is_finite() && x > -PI && x <= PI
}

/// Checks every model invariant, one diagnostic per violation.
pub fn validate_model(model: &RobotModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |field: String, message: String| out.push(Diagnostic { field, message });

    let n = model.dh.n();
    if n == 0 {
        push("joints".into(), "at least one joint is required".into());
    }
    if model.inertia.len() != n || model.limits.len() != n {
        push(
            "joints".into(),
            format!(
                "dimension mismatch: {} DH rows, {} links, {} joint limits",
                n,
                model.inertia.len(),
                model.limits.len()
            ),
        );
    }
    if !model.gravity.iter().all(|g| g.is_finite()) {
        push("gravity".into(), "must be finite".into());
    }

    for (i, row) in model.dh.rows.iter().enumerate() {
        for (name, v) in [("a", row.a), ("d", row.d)] {
            if !v.is_finite() {
                push(format!("joints[{i}].{name}"), format!("length must be finite (got {v})"));
            }
        }
        for (name, v) in [("alpha", row.alpha), ("theta_offset", row.theta_offset)] {
            if !angle_ok(v) {
                push(format!("joints[{i}].{name}"), format!("angle must lie in (-pi, pi] (got {v})"));
            }
        }
    }

    for (i, link) in model.inertia.iter().enumerate() {
        if !(link.mass.is_finite() && link.mass > 0.0) {
            push(format!("joints[{i}].mass"), format!("must be > 0 (got {})", link.mass));
        }
        if !link.center_of_mass.iter().all(|c| c.is_finite()) {
            push(format!("joints[{i}].center_of_mass"), "must be finite".into());
        }
        let t = link.inertia;
        if !t.iter().all(|c| c.is_finite()) {
            push(format!("joints[{i}].inertia"), "must be finite".into());
            continue;
        }
        let asym = (t - t.transpose()).abs().max();
        if asym > 1e-12 * t.abs().max().max(1.0) {
            push(format!("joints[{i}].inertia"), format!("tensor is not symmetric (max |I - I^T| = {asym:e})"));
        } else {
            let min_eig = SymmetricEigen::new(t).eigenvalues.min();
            if min_eig <= 0.0 {
                push(
                    format!("joints[{i}].inertia"),
                    format!("tensor is not positive definite (min eigenvalue {min_eig:e})"),
                );
            }
        }
    }

    for (i, lim) in model.limits.joints.iter().enumerate() {
        if !(lim.position_min.is_finite() && lim.position_max.is_finite() && lim.position_min < lim.position_max) {
            push(
                format!("joints[{i}].position_min"),
                format!("need finite min < max (got {} .. {})", lim.position_min, lim.position_max),
            );
        }
        if !(lim.velocity_max.is_finite() && lim.velocity_max > 0.0) {
            push(format!("joints[{i}].velocity_max"), format!("must be > 0 (got {})", lim.velocity_max));
        }
        if !(lim.torque_max.is_finite() && lim.torque_max > 0.0) {
            push(format!("joints[{i}].torque_max"), format!("must be > 0 (got {})", lim.torque_max));
        }
    }
    out
}
