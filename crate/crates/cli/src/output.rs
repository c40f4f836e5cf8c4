//! Artifact files. Everything except `timing.*` is bit-reproducible for a
//! fixed config, seed and noiseless model.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use pulsetomo::tomography::matrix_to_text;
use serde::Serialize;
use serde_json::json;

use crate::runs::{CostRow, GradcheckReport, Reconstruction, ScalingStudy};
use crate::CliError;

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        writer.serialize(row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Io(io),
        other => CliError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.into()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `summary.json`, `run_log.jsonl`, `pulse.txt`, `rho.txt`, `pauli.txt` and
/// `timing.json`.
pub fn write_reconstruction(dir: &Path, run: &Reconstruction) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("summary.json"), &run.summary)?;

    let mut log = BufWriter::new(File::create(dir.join("run_log.jsonl"))?);
    let header = json!({
        "name": run.summary.name,
        "config_hash": run.summary.config_hash,
        "seed": run.summary.seed,
    });
    writeln!(log, "{header}")?;
    for record in &run.record.iterations {
        writeln!(log, "{}", serde_json::to_string(record).map_err(|e| CliError::Io(e.into()))?)?;
    }
    log.flush()?;

    fs::write(dir.join("pulse.txt"), run.pulse.to_text())?;
    fs::write(dir.join("rho.txt"), matrix_to_text(run.rho.matrix()))?;
    fs::write(dir.join("pauli.txt"), run.coefficients.to_text())?;
    write_json(&dir.join("timing.json"), &json!({ "wall_seconds": run.wall_seconds }))
}

#[derive(Serialize)]
struct ScalingLine<'a> {
    config_hash: &'a str,
    seed: u64,
    qubits: usize,
    min_slices: String,
    reachable: bool,
    fitness: f64,
}

#[derive(Serialize)]
struct TimingLine {
    qubits: usize,
    wall_seconds: f64,
}

#[derive(Serialize)]
struct CellLine<'a> {
    config_hash: &'a str,
    seed: u64,
    qubits: usize,
    slices: usize,
    restart: usize,
    fitness: f64,
    iterations: usize,
}

/// `scaling.csv`, `scaling_cells.csv` and `timing.csv`.
pub fn write_scaling(dir: &Path, hash: &str, seed: u64, study: &ScalingStudy) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_csv(
        &dir.join("scaling.csv"),
        study.rows.iter().map(|r| ScalingLine {
            config_hash: hash,
            seed,
            qubits: r.qubits,
            min_slices: r.min_slices.map(|m| m.to_string()).unwrap_or_default(),
            reachable: r.min_slices.is_some(),
            fitness: r.fitness,
        }),
    )?;
    write_csv(
        &dir.join("scaling_cells.csv"),
        study.cells.iter().map(|c| CellLine {
            config_hash: hash,
            seed,
            qubits: c.qubits,
            slices: c.slices,
            restart: c.restart,
            fitness: c.fitness,
            iterations: c.iterations,
        }),
    )?;
    write_csv(
        &dir.join("timing.csv"),
        study.rows.iter().map(|r| TimingLine {
            qubits: r.qubits,
            wall_seconds: r.wall_seconds,
        }),
    )
}

#[derive(Serialize)]
struct GradcheckLine<'a> {
    config_hash: &'a str,
    seed: u64,
    estimator: &'a str,
    parameter: f64,
    mean_error: f64,
    max_error: f64,
}

/// `gradcheck.csv`: relative errors against the oracle, and the commutator
/// identity residual.
pub fn write_gradcheck(dir: &Path, hash: &str, seed: u64, report: &GradcheckReport) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let line = |estimator, parameter, mean_error, max_error| GradcheckLine {
        config_hash: hash,
        seed,
        estimator,
        parameter,
        mean_error,
        max_error,
    };
    let mut lines = Vec::new();
    for s in &report.method1 {
        lines.push(line("method1_tau", s.parameter, s.mean(), s.max()));
    }
    for s in &report.method2 {
        lines.push(line("method2_delta", s.parameter, s.mean(), s.max()));
    }
    lines.push(line("commutator", 0.0, report.commutator_residual, report.commutator_residual));
    write_csv(&dir.join("gradcheck.csv"), lines)
}

#[derive(Serialize)]
struct CostLine<'a> {
    config_hash: &'a str,
    seed: u64,
    qubits: usize,
    slices: usize,
    full_qst: u64,
    method1_per_iteration: u64,
    method2_per_iteration: u64,
    method1_total: u64,
    method2_total: u64,
    verified: String,
}

/// `cost.csv`.
pub fn write_cost(dir: &Path, hash: &str, seed: u64, rows: &[CostRow]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_csv(
        &dir.join("cost.csv"),
        rows.iter().map(|r| CostLine {
            config_hash: hash,
            seed,
            qubits: r.qubits,
            slices: r.slices,
            full_qst: r.full_qst,
            method1_per_iteration: r.method1_per_iteration,
            method2_per_iteration: r.method2_per_iteration,
            method1_total: r.method1_total,
            method2_total: r.method2_total,
            verified: r.verified.map(|v| v.to_string()).unwrap_or_default(),
        }),
    )
}
