use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::PreparedScenario;
use crate::controllers::{ControllerKind, ControllerSpec};
use crate::error::{Error, Result};
use crate::metrics::{write_table_csv, MetricsReport, SimulationLog, TableCell, Thresholds};

#[derive(Debug, Clone)]
pub struct ComparisonEntry {
    pub controller: ControllerKind,
    /// The run's metrics, or why there are none.
    pub outcome: std::result::Result<MetricsReport, String>,
    /// Absent when the run could not start.
    pub log: Option<SimulationLog>,
}

/// Controllers run on one scenario, in the order requested.
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub scenario: String,
    /// Hash of the reference every entry consumed.
    pub reference_hash: String,
    pub dof: usize,
    pub entries: Vec<ComparisonEntry>,
}

#[derive(Serialize)]
struct TableDocument<'a> {
    scenario: &'a str,
    reference_hash: &'a str,
    controllers: Vec<CellDocument<'a>>,
}

#[derive(Serialize)]
struct CellDocument<'a> {
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a MetricsReport>,
}

impl ComparisonTable {
    pub fn get(&self, kind: ControllerKind) -> Option<&MetricsReport> {
        self.entries
            .iter()
            .find(|e| e.controller == kind)
            .and_then(|e| e.outcome.as_ref().ok())
    }

    pub fn any_diverged(&self) -> bool {
        self.entries.iter().any(|e| e.log.as_ref().is_some_and(SimulationLog::diverged))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let cells: Vec<TableCell<'_>> = self
            .entries
            .iter()
            .map(|e| (e.controller.label(), e.outcome.as_ref().map_err(String::as_str)))
            .collect();
        write_table_csv(out, self.dof, &cells)
    }

    pub fn to_toml(&self) -> Result<String> {
        let doc = TableDocument {
            scenario: &self.scenario,
            reference_hash: &self.reference_hash,
            controllers: self
                .entries
                .iter()
                .map(|e| CellDocument {
                    name: e.controller.label(),
                    error: e.outcome.as_ref().err().map(String::as_str),
                    report: e.outcome.as_ref().ok(),
                })
                .collect(),
        };
        toml::to_string(&doc).map_err(|e| Error::Parse {
            what: "comparison table",
            message: e.to_string(),
        })
    }

    /// Writes `comparison.csv`, `comparison.toml` and one `log_<name>.csv`
    /// per controller into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join("comparison.csv"))?)?;
        fs::write(dir.join("comparison.toml"), self.to_toml()?)?;
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(log) = &e.log {
                let name = if self.entries[..i].iter().any(|p| p.controller == e.controller) {
                    format!("log_{}_{i}.csv", e.controller)
                } else {
                    format!("log_{}.csv", e.controller)
                };
                log.write_csv(fs::File::create(dir.join(name))?)?;
            }
        }
        Ok(())
    }
}

fn evaluate(prepared: &PreparedScenario, spec: std::result::Result<ControllerSpec, String>) -> ComparisonEntry {
    let kind = match &spec {
        Ok(s) => s.kind(),
        Err(_) => ControllerKind::Mbsmc,
    };
    let spec = match spec {
        Ok(s) => s,
        Err(message) => {
            return ComparisonEntry {
                controller: kind,
                outcome: Err(message),
                log: None,
            }
        }
    };
    match prepared.run(&spec) {
        Err(e) => ComparisonEntry {
            controller: kind,
            outcome: Err(e.to_string()),
            log: None,
        },
        Ok(log) => {
            let outcome = match &log.divergence {
                Some(d) => Err(format!("diverged at step {} (t = {} s)", d.step, d.t)),
                None => MetricsReport::compute(&prepared.model, &log, &Thresholds::default()).map_err(|e| e.to_string()),
            };
            ComparisonEntry {
                controller: kind,
                outcome,
                log: Some(log),
            }
        }
    }
}

/// Runs each controller with the scenario's gains on the same reference.
/// Failures are recorded in the affected entry.
pub fn compare_controllers(prepared: &PreparedScenario, kinds: &[ControllerKind]) -> Result<ComparisonTable> {
    if kinds.len() < 2 {
        return Err(Error::InvalidArgument("a comparison needs at least 2 controllers".into()));
    }
    let entries = kinds
        .par_iter()
        .map(|&kind| {
            let mut entry = evaluate(prepared, prepared.spec_for(kind).map_err(|e| e.to_string()));
            entry.controller = kind;
            entry
        })
        .collect();
    Ok(table(prepared, entries))
}

/// As [`compare_controllers`] with explicit gains.
pub fn compare_specs(prepared: &PreparedScenario, specs: &[ControllerSpec]) -> Result<ComparisonTable> {
    if specs.len() < 2 {
        return Err(Error::InvalidArgument("a comparison needs at least 2 controllers".into()));
    }
    let entries = specs.par_iter().map(|s| evaluate(prepared, Ok(s.clone()))).collect();
    Ok(table(prepared, entries))
}

fn table(prepared: &PreparedScenario, entries: Vec<ComparisonEntry>) -> ComparisonTable {
    ComparisonTable {
        scenario: prepared.scenario.name.clone(),
        reference_hash: prepared.reference_hash(),
        dof: prepared.dof(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{PidGains, SlidingParams};
    use crate::harness::Scenario;

    fn short() -> PreparedScenario {
        let mut s = Scenario::canonical();
        s.trajectory = crate::harness::TrajectorySpec::Waypoints {
            profile: Default::default(),
            waypoints: vec![vec![0.1, -0.4, 0.3, -0.2, 0.3, 0.1], vec![0.2, -0.3, 0.2, -0.1, 0.2, 0.2]],
            durations: vec![0.5],
        };
        s.duration = 0.6;
        s.prepare(None).unwrap()
    }

    #[test]
    fn duplicated_controller_gives_identical_columns() {
        let p = short();
        let t = compare_controllers(&p, &[ControllerKind::Mbsmc, ControllerKind::Mbsmc]).unwrap();
        assert_eq!(t.entries[0].outcome, t.entries[1].outcome);
        assert!(t.entries[0].outcome.is_ok());
    }

    #[test]
    fn divergence_is_confined_to_its_cell() {
        let mut p = short();
        p.scenario.saturate = false;
        let t = compare_specs(
            &p,
            &[
                ControllerSpec::Mbsmc(SlidingParams::uniform(6, 100.0, 1.0, 60.0)),
                ControllerSpec::Pid(PidGains::uniform(6, 1e8, 0.0, 1e6)),
            ],
        )
        .unwrap();
        assert!(t.entries[0].outcome.is_ok());
        assert!(t.entries[1].outcome.as_ref().unwrap_err().contains("diverged"));
        assert!(t.any_diverged());
    }

    #[test]
    fn export_is_byte_stable() {
        let p = short();
        let dir = tempfile::tempdir().unwrap();
        let kinds = [ControllerKind::Mbsmc, ControllerKind::Pid];
        compare_controllers(&p, &kinds).unwrap().export(dir.path()).unwrap();
        let first = fs::read(dir.path().join("comparison.csv")).unwrap();
        let log = fs::read(dir.path().join("log_pid.csv")).unwrap();
        compare_controllers(&p, &kinds).unwrap().export(dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join("comparison.csv")).unwrap());
        assert_eq!(log, fs::read(dir.path().join("log_pid.csv")).unwrap());
        let toml_text = fs::read_to_string(dir.path().join("comparison.toml")).unwrap();
        assert!(toml_text.contains("reference_hash"));
    }

    #[test]
    fn too_few_controllers() {
        assert!(compare_controllers(&short(), &[ControllerKind::Pid]).is_err());
    }
}
