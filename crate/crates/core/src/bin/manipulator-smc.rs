use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use manipulator_smc::controllers::{ControllerKind, ControllerSpec};
use manipulator_smc::harness::{compare_controllers, resolve_model, PreparedScenario};
use manipulator_smc::kinematics::{estimate_workspace_volume, DEFAULT_VOXEL_SIZE};
use manipulator_smc::metrics::{write_table_csv, MetricsReport, Thresholds};
use manipulator_smc::tuning::{tune_controller, CostWeights, SwarmConfig};
use manipulator_smc::Error;

#[derive(Parser)]
#[command(name = "manipulator-smc", version, about = "Sliding-mode control simulation for serial manipulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write its log and metrics.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's controller.
        #[arg(long)]
        controller: Option<ControllerKind>,
    },
    /// Run several controllers on one scenario and tabulate the metrics.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "mbsmc,nmbsmc,pid")]
        controllers: Vec<ControllerKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune three scalar gains of a controller with particle swarm optimisation.
    Tune {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        controller: ControllerKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        particles: usize,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        /// Cost weights as `rmse,smooth,effort`.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        weights: Option<Vec<f64>>,
    },
    /// Estimate the reachable workspace volume by Monte-Carlo sampling.
    Workspace {
        /// Model file or built-in name.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Voxel edge length, m.
        #[arg(long, default_value_t = DEFAULT_VOXEL_SIZE)]
        voxel: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional CSV of occupied voxel centres.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a model file and report every violated invariant.
    Validate {
        /// Model file or built-in name.
        #[arg(long)]
        model: String,
    },
}

enum Failure {
    Invalid(Error),
    Diverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("diverged: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { scenario, out, controller } => simulate(&scenario, &out, controller),
        Command::Compare { scenario, controllers, out } => {
            let prepared = PreparedScenario::load(&scenario)?;
            let table = compare_controllers(&prepared, &controllers)?;
            table.export(&out)?;
            print!("{}", fs::read_to_string(out.join("comparison.csv"))?);
            if table.any_diverged() {
                let names: Vec<_> = table
                    .entries
                    .iter()
                    .filter(|e| e.log.as_ref().is_some_and(|l| l.diverged()))
                    .map(|e| e.controller.label())
                    .collect();
                return Err(Failure::Diverged(names.join(", ")));
            }
            Ok(())
        }
        Command::Tune {
            scenario,
            controller,
            seed,
            out,
            particles,
            iterations,
            weights,
        } => {
            let prepared = PreparedScenario::load(&scenario)?;
            let mut config = SwarmConfig::for_controller(controller);
            config.rng_seed = seed;
            config.particle_count = particles;
            config.iterations = iterations;
            let weights = match weights.as_deref() {
                Some(&[w_rmse, w_smooth, w_effort]) => CostWeights {
                    w_rmse,
                    w_smooth,
                    w_effort,
                },
                _ => CostWeights::default(),
            };
            let outcome = tune_controller(&prepared, controller, &weights, &config)?;
            fs::create_dir_all(&out)?;
            outcome
                .result
                .write_history_csv(fs::File::create(out.join("history.csv"))?, &controller.gain_names())?;
            let gains = gains_toml(&outcome.spec, &outcome.result.best_params, outcome.result.best_cost);
            fs::write(out.join("gains.toml"), &gains)?;
            print!("{gains}");
            Ok(())
        }
        Command::Workspace {
            model,
            samples,
            voxel,
            seed,
            out,
        } => {
            let model = resolve_model(&model, None)?;
            let est = estimate_workspace_volume(&model, samples, voxel, seed)?;
            println!(
                "volume = {:.4} m^3 ({} voxels of {} m, {} samples)",
                est.volume,
                est.occupied(),
                voxel,
                samples
            );
            if let Some(path) = out {
                est.write_csv(fs::File::create(path)?)?;
            }
            Ok(())
        }
        Command::Validate { model } => {
            let model = resolve_model(&model, None)?;
            println!("{}: ok ({} joints)", model.name, model.dof());
            Ok(())
        }
    }
}

fn simulate(path: &Path, out: &Path, controller: Option<ControllerKind>) -> Result<(), Failure> {
    let prepared = PreparedScenario::load(path)?;
    let spec = match controller {
        Some(kind) => prepared.spec_for(kind)?,
        None => prepared.default_spec()?,
    };
    let log = prepared.run(&spec)?;
    fs::create_dir_all(out)?;
    log.write_csv(fs::File::create(out.join("log.csv"))?)?;
    if let Some(d) = &log.divergence {
        return Err(Failure::Diverged(format!("step {} (t = {} s): {}", d.step, d.t, d.message)));
    }
    let report = MetricsReport::compute(&prepared.model, &log, &Thresholds::default())?;
    fs::write(out.join("metrics.toml"), report.to_toml()?)?;
    let mut table = Vec::new();
    write_table_csv(&mut table, prepared.dof(), &[(spec.kind().label(), Ok(&report))])?;
    fs::write(out.join("metrics.csv"), &table)?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(())
}

fn gains_toml(spec: &ControllerSpec, params: &[f64], cost: f64) -> String {
    let kind = spec.kind();
    let mut text = format!("# best cost {cost:e}\n[gains.{kind}]\n");
    for (name, value) in kind.gain_names().iter().zip(params) {
        text.push_str(&format!("{name} = {value}\n"));
    }
    if let ControllerSpec::Mbsmc(p) | ControllerSpec::Nmbsmc(p) = spec {
        text.push_str(&format!("boundary_layer = {}\n", p.boundary_layer));
    }
    text
}
