//! Batch commands: each reads a config, runs one computation and writes its
//! outputs into a directory.
//!
//! The config is parsed and validated before the output directory is touched,
//! so an invalid config leaves no files behind. Solver failures after that
//! point leave a `failure.json` record instead of the regular outputs.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use log::info;
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::config::{bulk_profile, initial_state, parse_config, RunConfig, SweepMode};
use crate::diagnostics;
use crate::discretization::{assemble, DiscreteOperators};
use crate::dynamics::{ModelParams, StatePair, SystemKind};
use crate::error::{Error, Result};
use crate::experiments::{run_defect_sweep, run_delta_sweep, run_mms, run_rate_sweep, SweepReport};
use crate::galerkin::{project_initial, run_galerkin, BulkProfile};
use crate::geometry::{Geometry, GeometryKind};
use crate::integrator::{resume, run, Problem, Trajectory};

pub const FAILURE_FILE: &str = "failure.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Limit,
    SweepEps,
    SweepDelta,
    Mms,
    Galerkin,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Limit => "limit",
            Command::SweepEps => "sweep-eps",
            Command::SweepDelta => "sweep-delta",
            Command::Mms => "mms",
            Command::Galerkin => "galerkin",
        }
    }
}

/// One fully specified command run.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out_dir: PathBuf,
    /// Checkpoint to continue from (`solve` and `limit` only).
    pub resume: Option<PathBuf>,
}

/// A file produced by a command, held in memory until every computation succeeded.
struct Output {
    name: String,
    contents: Vec<u8>,
}

/// Runs the command. Config errors return before anything is written; later
/// errors are also recorded in `out_dir/failure.json`.
pub fn execute(inv: &Invocation) -> Result<()> {
    let text = fs::read_to_string(&inv.config)?;
    let cfg = parse_config(&text)?;
    if inv.resume.is_some() && !matches!(inv.command, Command::Solve | Command::Limit) {
        return Err(Error::Config(vec![format!(
            "--resume: only solve and limit can resume, not {}",
            inv.command.name()
        )]));
    }
    let checkpoint = inv.resume.as_deref().map(Checkpoint::read).transpose()?;

    fs::create_dir_all(&inv.out_dir)?;
    let result = compute(inv.command, &cfg, checkpoint.as_ref()).and_then(|outputs| {
        for out in outputs {
            let path = inv.out_dir.join(&out.name);
            fs::write(&path, out.contents)?;
            info!("wrote {}", path.display());
        }
        Ok(())
    });
    if let Err(e) = &result {
        let record = serde_json::to_vec_pretty(&failure_record(e)).expect("json values serialize");
        fs::write(inv.out_dir.join(FAILURE_FILE), record)?;
    }
    result
}

/// Machine-readable description of an error.
pub fn failure_record(e: &Error) -> serde_json::Value {
    let mut record = json!({ "error": e.kind(), "message": e.to_string() });
    let mut cur = e;
    while let Error::AtParameter { name, value, source } = cur {
        record[*name] = json!(value);
        cur = source;
    }
    match cur {
        Error::NewtonDiverged {
            time,
            residual,
            iterations,
        } => {
            record["time"] = json!(time);
            record["residual"] = json!(residual);
            record["iterations"] = json!(iterations);
        }
        Error::RateFitUnreliable { usable } => record["usable_points"] = json!(usable),
        Error::Config(list) => record["violations"] = json!(list),
        _ => {}
    }
    record
}

fn compute(command: Command, cfg: &RunConfig, checkpoint: Option<&Checkpoint>) -> Result<Vec<Output>> {
    let geom = Geometry::from_spec(cfg.geometry)?;
    let ops = assemble(&geom, cfg.params.d_u, cfg.params.d_v, cfg.trace_order)?;
    match command {
        Command::Solve => {
            if cfg.params.kind == SystemKind::Limit {
                return Err(Error::Config(vec![
                    "model.kind: solve integrates the full or regularized system; use the limit command".into(),
                ]));
            }
            solve(cfg, &geom, &ops, cfg.params.clone(), checkpoint)
        }
        Command::Limit => solve(cfg, &geom, &ops, cfg.params.clone().with_kind(SystemKind::Limit), checkpoint),
        Command::SweepEps => {
            let initial = initial_state(&cfg.initial, &geom, &ops, &cfg.params)?;
            let problem = Problem::new(&geom, &ops, &cfg.params).with_entropy_shift(cfg.entropy_shift);
            let time = cfg.sweep_time();
            let report = match cfg.experiment.sweep {
                SweepMode::Rate => run_rate_sweep(&problem, &initial.u, &cfg.experiment.eps_list, &time)?,
                SweepMode::Defect => run_defect_sweep(&problem, &initial, &cfg.experiment.eps_list, &time)?,
            };
            sweep_outputs(cfg, &report)
        }
        Command::SweepDelta => {
            let initial = initial_state(&cfg.initial, &geom, &ops, &cfg.params)?;
            let problem = Problem::new(&geom, &ops, &cfg.params).with_entropy_shift(cfg.entropy_shift);
            let report = run_delta_sweep(&problem, &initial, &cfg.experiment.delta_list, &cfg.sweep_time())?;
            sweep_outputs(cfg, &report)
        }
        Command::Mms => mms(cfg),
        Command::Galerkin => galerkin(cfg, &geom, &ops),
    }
}

fn solve(
    cfg: &RunConfig,
    geom: &Geometry,
    ops: &DiscreteOperators,
    params: ModelParams,
    checkpoint: Option<&Checkpoint>,
) -> Result<Vec<Output>> {
    let problem = Problem::new(geom, ops, &params).with_entropy_shift(cfg.entropy_shift);
    let traj = match checkpoint {
        Some(cp) => {
            if cp.geometry != cfg.geometry {
                return Err(Error::Checkpoint(format!(
                    "checkpoint geometry {:?} differs from the configured {:?}",
                    cp.geometry, cfg.geometry
                )));
            }
            if cp.params != params {
                return Err(Error::Checkpoint(
                    "checkpoint model parameters differ from the configured ones".into(),
                ));
            }
            resume(&cp.state(), &problem, &cfg.time)?
        }
        None => {
            let initial = initial_state(&cfg.initial, geom, ops, &params)?;
            run(&initial, &problem, &cfg.time)?
        }
    };
    trajectory_outputs(cfg, &traj, Checkpoint::new(traj.final_state(), geom, &params))
}

fn trajectory_outputs(cfg: &RunConfig, traj: &Trajectory, last: Checkpoint) -> Result<Vec<Output>> {
    let mut csv = Vec::new();
    diagnostics::write_csv(&mut csv, &traj.diagnostics)?;
    let names = &cfg.experiment.outputs;
    Ok(vec![
        Output {
            name: names.trajectory.clone(),
            contents: csv,
        },
        Output {
            name: names.final_state.clone(),
            contents: last.to_json().into_bytes(),
        },
    ])
}

fn json_output(name: &str, value: &serde_json::Value) -> Output {
    let mut contents = serde_json::to_vec_pretty(value).expect("json values serialize");
    contents.push(b'\n');
    Output {
        name: name.to_string(),
        contents,
    }
}

fn sweep_outputs(cfg: &RunConfig, report: &SweepReport) -> Result<Vec<Output>> {
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let names = &cfg.experiment.outputs;
    Ok(vec![
        Output {
            name: names.report.clone(),
            contents: csv,
        },
        json_output(&names.summary, &report.summary_json()),
    ])
}

fn mms(cfg: &RunConfig) -> Result<Vec<Output>> {
    let report = run_mms(&cfg.params, &cfg.time, &cfg.experiment.mms_levels, &cfg.experiment.mms_dts)?;
    let mut csv = Vec::new();
    writeln!(csv, "# generated by bulksurf {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(csv, "study,step,error")?;
    for study in [&report.spatial, &report.temporal] {
        for (h, e) in &study.samples {
            writeln!(csv, "{},{:?},{:?}", study.label, h, e)?;
        }
    }
    let names = &cfg.experiment.outputs;
    Ok(vec![
        Output {
            name: names.report.clone(),
            contents: csv,
        },
        json_output(&names.summary, &serde_json::to_value(&report)?),
    ])
}

fn galerkin(cfg: &RunConfig, geom: &Geometry, ops: &DiscreteOperators) -> Result<Vec<Output>> {
    if geom.kind() != GeometryKind::Interval {
        return Err(Error::Config(vec!["geometry.kind: galerkin runs on the interval only".into()]));
    }
    if cfg.params.kind == SystemKind::Limit {
        return Err(Error::Config(vec!["model.kind: galerkin does not integrate the limit system".into()]));
    }
    let grid_state = initial_state(&cfg.initial, geom, ops, &cfg.params)?;
    let profile = bulk_profile(&cfg.initial, GeometryKind::Interval)?;
    let point = |x: f64| profile([x, 0.0]);
    let boundary = [grid_state.v[0], grid_state.v[1]];
    let sys = project_initial(BulkProfile::Function(&point), boundary, cfg.experiment.modes, &cfg.params)?;
    let (traj, last) = run_galerkin(&sys, &cfg.time, geom)?;
    let final_grid = StatePair::new(last.reconstruct(geom)?, last.boundary.to_vec(), last.t);
    let mut outputs = trajectory_outputs(cfg, &traj, Checkpoint::new(&final_grid, geom, &cfg.params))?;
    outputs.push(json_output(
        &cfg.experiment.outputs.summary,
        &json!({
            "modes": last.modes(),
            "t": last.t,
            "coefficients": last.coefficients,
            "boundary": last.boundary,
            "mass": last.mass(),
        }),
    ));
    Ok(outputs)
}
