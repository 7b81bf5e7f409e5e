//! Particle-swarm tuning of controller gains against a closed-loop cost.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerKind, ControllerSpec, PidGains, SlidingParams};
use crate::error::{Error, Result};
use crate::harness::PreparedScenario;
use crate::metrics::{control_effort, rmse_joint, smoothness_metrics, SimulationLog};

/// Cost assigned to runs that diverge or cannot be evaluated.
pub const DIVERGENCE_PENALTY: f64 = 1e9;

/// Search box for `(P1, P2, P3)`.
pub const SLIDING_BOUNDS: [(f64, f64); 3] = [(0.1, 500.0), (0.1, 10.0), (0.1, 200.0)];

/// Search box for `(Kp, Ki, Kd)`.
pub const PID_BOUNDS: [(f64, f64); 3] = [(0.1, 1000.0), (0.0, 500.0), (0.1, 100.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub particle_count: usize,
    pub iterations: usize,
    /// Inertia weight `w`.
    pub inertia: f64,
    /// Cognitive coefficient `c1`.
    pub cognitive: f64,
    /// Social coefficient `c2`.
    pub social: f64,
    /// `(min, max)` per dimension.
    pub bounds: Vec<(f64, f64)>,
    pub rng_seed: u64,
    /// Starting position of particle 0 (clamped into the box); the others
    /// start uniformly at random.
    pub seed_position: Option<Vec<f64>>,
    /// Per-dimension speed limit as a fraction of the box width.
    pub max_speed_fraction: f64,
}

impl SwarmConfig {
    /// Standard settings (30 particles, 100 iterations, w = 0.72,
    /// c1 = c2 = 1.49) with particle 0 starting at all ones.
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        let dim = bounds.len();
        Self {
            particle_count: 30,
            iterations: 100,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            bounds,
            rng_seed: 0,
            seed_position: Some(vec![1.0; dim]),
            max_speed_fraction: 0.2,
        }
    }

    pub fn for_controller(kind: ControllerKind) -> Self {
        match kind {
            ControllerKind::Pid => Self::new(PID_BOUNDS.to_vec()),
            _ => Self::new(SLIDING_BOUNDS.to_vec()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.particle_count < 2 {
            return bad(format!("particle_count {} must be >= 2", self.particle_count));
        }
        if self.bounds.is_empty() {
            return bad("search box has no dimensions".into());
        }
        if let Some((i, (lo, hi))) = self
            .bounds
            .iter()
            .enumerate()
            .find(|(_, (lo, hi))| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return bad(format!("bounds[{i}] = ({lo}, {hi}) must satisfy min < max"));
        }
        let coefficients = [self.inertia, self.cognitive, self.social, self.max_speed_fraction];
        if !coefficients.iter().all(|c| c.is_finite()) || self.max_speed_fraction <= 0.0 {
            return bad("swarm coefficients must be finite and the speed fraction > 0".into());
        }
        if let Some(p) = &self.seed_position {
            if p.len() != self.bounds.len() || !p.iter().all(|v| v.is_finite()) {
                return bad("seed position must be finite and match the bounds".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    pub best_params: Vec<f64>,
    pub best_cost: f64,
    /// Global-best cost after initialisation and after each iteration.
    pub history: Vec<f64>,
    /// Global-best position matching each `history` entry.
    pub history_params: Vec<Vec<f64>>,
}

impl PsoResult {
    /// CSV with columns `iteration, gbest_cost, <names...>`.
    pub fn write_history_csv<W: Write>(&self, out: W, names: &[&str]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header = ["iteration", "gbest_cost"].into_iter().chain(names.iter().copied());
        w.write_record(header).map_err(csv_err)?;
        for (i, (c, p)) in self.history.iter().zip(&self.history_params).enumerate() {
            let row = [i.to_string(), c.to_string()]
                .into_iter()
                .chain(p.iter().map(f64::to_string));
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        what: "CSV",
        message: e.to_string(),
    }
}

/// Global-best particle swarm minimisation of `objective` over the box.
///
/// All random numbers are drawn on the calling thread in a fixed order and
/// the particles are evaluated in parallel; the global best is then updated
/// in particle order with ties going to the lower index, so the result
/// depends only on the configuration. Non-finite costs count as infinitely
/// bad.
pub fn pso_tune<F>(objective: F, config: &SwarmConfig) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let dim = config.bounds.len();
    let count = config.particle_count;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let vmax: Vec<f64> = config
        .bounds
        .iter()
        .map(|(lo, hi)| config.max_speed_fraction * (hi - lo))
        .collect();

    let mut positions: Vec<Vec<f64>> = (0..count)
        .map(|i| match (&config.seed_position, i) {
            (Some(p), 0) => p.iter().zip(&config.bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect(),
            _ => config.bounds.iter().map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect(),
        })
        .collect();
    let mut velocities: Vec<Vec<f64>> = (0..count)
        .map(|_| vmax.iter().map(|v| rng.random_range(-v..=*v)).collect())
        .collect();

    let evaluate = |xs: &[Vec<f64>]| -> Vec<f64> {
        xs.par_iter()
            .map(|x| {
                let c = objective(x);
                if c.is_finite() {
                    c
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    };

    let mut costs = evaluate(&positions);
    if costs.iter().all(|c| c.is_infinite()) {
        return Err(Error::AllNonFinite);
    }
    let mut pbest = positions.clone();
    let mut pbest_cost = costs.clone();
    let mut g = 0;
    for i in 1..count {
        if pbest_cost[i] < pbest_cost[g] {
            g = i;
        }
    }
    let mut gbest = pbest[g].clone();
    let mut gbest_cost = pbest_cost[g];
    let mut history = vec![gbest_cost];
    let mut history_params = vec![gbest.clone()];

    for _ in 0..config.iterations {
        for i in 0..count {
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = config.inertia * velocities[i][d]
                    + config.cognitive * r1 * (pbest[i][d] - positions[i][d])
                    + config.social * r2 * (gbest[d] - positions[i][d]);
                velocities[i][d] = v.clamp(-vmax[d], vmax[d]);
                let (lo, hi) = config.bounds[d];
                positions[i][d] = (positions[i][d] + velocities[i][d]).clamp(lo, hi);
            }
        }
        costs = evaluate(&positions);
        for i in 0..count {
            if costs[i] < pbest_cost[i] {
                pbest_cost[i] = costs[i];
                pbest[i].clone_from(&positions[i]);
            }
        }
        for i in 0..count {
            if pbest_cost[i] < gbest_cost {
                gbest_cost = pbest_cost[i];
                gbest.clone_from(&pbest[i]);
            }
        }
        history.push(gbest_cost);
        history_params.push(gbest.clone());
    }

    Ok(PsoResult {
        best_params: gbest,
        best_cost: gbest_cost,
        history,
        history_params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_rmse: f64,
    pub w_smooth: f64,
    pub w_effort: f64,
}

/// Snap of a chattering closed loop reaches 1e11 rad/s^4, so the smoothness
/// weight keeps such runs well below [`DIVERGENCE_PENALTY`]. The effort weight
/// only breaks ties between otherwise equal gains.
impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_rmse: 1.0,
            w_smooth: 1e-6,
            w_effort: 1e-8,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_rmse, self.w_smooth, self.w_effort];
        if !w.iter().all(|v| v.is_finite() && *v >= 0.0) || !w.iter().any(|v| *v > 0.0) {
            return Err(Error::InvalidArgument(
                "cost weights must be finite, non-negative and not all zero".into(),
            ));
        }
        Ok(())
    }
}

/// `w_rmse * sum(rmse) + w_smooth * sum(jerk + snap) + w_effort * effort`,
/// or [`DIVERGENCE_PENALTY`] for a diverged, non-finite or too-short log.
pub fn tracking_cost(log: &SimulationLog, weights: &CostWeights) -> f64 {
    if log.diverged() {
        return DIVERGENCE_PENALTY;
    }
    let (Ok(rmse), Ok(smooth), Ok(effort)) = (rmse_joint(log), smoothness_metrics(log), control_effort(log)) else {
        return DIVERGENCE_PENALTY;
    };
    let cost = weights.w_rmse * rmse.iter().sum::<f64>()
        + weights.w_smooth * smooth.iter().map(|s| s.jerk + s.snap).sum::<f64>()
        + weights.w_effort * effort;
    if cost.is_finite() {
        cost
    } else {
        DIVERGENCE_PENALTY
    }
}

/// Maps three scalars onto a controller of `kind`, broadcast to every joint.
/// Sliding-mode controllers keep the scenario's boundary-layer width.
pub fn spec_from_params(prepared: &PreparedScenario, kind: ControllerKind, params: &[f64]) -> ControllerSpec {
    let n = prepared.dof();
    let width = |k: ControllerKind| {
        prepared
            .spec_for(k)
            .ok()
            .and_then(|s| match s {
                ControllerSpec::Mbsmc(p) | ControllerSpec::Nmbsmc(p) => Some(p.boundary_layer),
                ControllerSpec::Pid(_) => None,
            })
            .unwrap_or(1.0)
    };
    match kind {
        ControllerKind::Mbsmc => ControllerSpec::Mbsmc(
            SlidingParams::uniform(n, params[0], params[1], params[2]).with_boundary_layer(width(kind)),
        ),
        ControllerKind::Nmbsmc => ControllerSpec::Nmbsmc(
            SlidingParams::uniform(n, params[0], params[1], params[2]).with_boundary_layer(width(kind)),
        ),
        ControllerKind::Pid => ControllerSpec::Pid(PidGains::uniform(n, params[0], params[1], params[2])),
    }
}

/// Closed-loop cost of one gain vector on the scenario.
pub fn evaluate_gains(prepared: &PreparedScenario, kind: ControllerKind, params: &[f64], weights: &CostWeights) -> f64 {
    evaluate(prepared, kind, params, weights).0
}

/// Cost and whether the run completed.
fn evaluate(prepared: &PreparedScenario, kind: ControllerKind, params: &[f64], weights: &CostWeights) -> (f64, bool) {
    match prepared.run(&spec_from_params(prepared, kind, params)) {
        Ok(log) => (tracking_cost(&log, weights), !log.diverged()),
        Err(_) => (DIVERGENCE_PENALTY, false),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningOutcome {
    pub spec: ControllerSpec,
    pub result: PsoResult,
}

/// Tunes three scalar gains of `kind` with a full simulation per evaluation.
pub fn tune_controller(
    prepared: &PreparedScenario,
    kind: ControllerKind,
    weights: &CostWeights,
    config: &SwarmConfig,
) -> Result<TuningOutcome> {
    weights.validate()?;
    if config.bounds.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "controller tuning searches 3 gains, got {} bounds",
            config.bounds.len()
        )));
    }
    let completed = AtomicUsize::new(0);
    let result = pso_tune(
        |p| {
            let (cost, ok) = evaluate(prepared, kind, p, weights);
            if ok {
                completed.fetch_add(1, Ordering::Relaxed);
            }
            cost
        },
        config,
    )?;
    if completed.into_inner() == 0 {
        return Err(Error::InvalidArgument(format!(
            "every {kind} evaluation diverged; no usable gains found"
        )));
    }
    Ok(TuningOutcome {
        spec: spec_from_params(prepared, kind, &result.best_params),
        result,
    })
}
