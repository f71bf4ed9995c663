//! Frequency sweeps, benchmarks and their output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fmpbem::pipeline::{benchmark, solve_frequency, Method, Problem};
use fmpbem::postproc::{evaluate_field, insertion_loss, ObservationGrid};
use fmpbem::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::scene::{parse_axis, Scene};

/// Command-line overrides applied on top of the scene file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Convergence state of one sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Converged,
    NotConverged,
    Failed,
}

impl RowStatus {
    fn as_str(self) -> &'static str {
        match self {
            RowStatus::Converged => "converged",
            RowStatus::NotConverged => "not_converged",
            RowStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub frequency_hz: f64,
    pub il_db: f64,
    pub iterations: usize,
    pub residual: f64,
    pub wall_time_s: f64,
    pub status: RowStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Result of a sweep: rows in frequency order and the first hard failure, if any.
#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub directory: PathBuf,
    pub failure: Option<CliError>,
}

/// Formats a float with 17 significant digits.
pub fn full(x: f64) -> String {
    format!("{x:.16e}")
}

fn output_dir(scene: &Scene, ov: &Overrides) -> PathBuf {
    ov.output.clone().unwrap_or_else(|| scene.output.directory.clone())
}

struct Prepared {
    problem: Problem,
    method: Method,
    il_grid: Option<ObservationGrid>,
    field_grid: Option<ObservationGrid>,
}

fn prepare(scene: &Scene, ov: &Overrides) -> Result<Prepared, CliError> {
    let method = match ov.method {
        Some(m) => m,
        None => scene.method()?,
    };
    let problem = scene.problem()?;
    let il_grid = scene.output.il_grid.as_ref().map(|g| g.grid("insertion loss")).transpose()?;
    let field_grid = scene.output.field_grid.as_ref().map(|g| g.grid("field")).transpose()?;
    Ok(Prepared { problem, method, il_grid, field_grid })
}

fn incident_at(problem: &Problem, k: f64, points: &[fmpbem::Vec3]) -> Result<Vec<Complex64>, CliError> {
    let fields = problem.incident_fields();
    points
        .par_iter()
        .map(|x| {
            let mut s = Complex64::new(0.0, 0.0);
            for f in &fields {
                s += f.pressure_and_gradient(k, x)?.0;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>, fmpbem::Error>>()
        .map_err(CliError::from)
}

type FieldDump = Vec<(fmpbem::Vec3, Complex64)>;

fn solve_one(prep: &Prepared, f: f64) -> Result<(SweepRow, Option<FieldDump>), CliError> {
    let start = Instant::now();
    let sol = solve_frequency(&prep.problem, prep.method, f)?;
    let fields = prep.problem.incident_fields();
    let hs = prep.problem.half_space.as_ref();
    let needs_mesh = prep.il_grid.is_some() || prep.field_grid.is_some();
    let mesh = if needs_mesh { Some(prep.problem.mesh()?) } else { None };
    let il_db = match (&prep.il_grid, &mesh) {
        (Some(g), Some(mesh)) => {
            let p = evaluate_field(mesh, &sol.report.solution, &sol.ctx, &fields, hs, &g.points)?;
            let p_inc = incident_at(&prep.problem, sol.ctx.k, &g.points)?;
            insertion_loss(&p_inc, &p)?
        }
        _ => f64::NAN,
    };
    let dump = match (&prep.field_grid, &mesh) {
        (Some(g), Some(mesh)) => {
            let p = evaluate_field(mesh, &sol.report.solution, &sol.ctx, &fields, hs, &g.points)?;
            Some(g.points.iter().copied().zip(p).collect())
        }
        _ => None,
    };
    let status = if sol.report.converged { RowStatus::Converged } else { RowStatus::NotConverged };
    if !sol.report.converged {
        log::warn!("{f} Hz: GMRES stopped after {} iterations at residual {:.3e}", sol.report.iterations, sol.report.final_residual());
    }
    let row = SweepRow {
        frequency_hz: f,
        il_db,
        iterations: sol.report.iterations,
        residual: sol.report.final_residual(),
        wall_time_s: start.elapsed().as_secs_f64(),
        status,
        error: None,
    };
    log::info!("{f} Hz: IL {il_db:.3} dB, {} iterations, {:.2} s", row.iterations, row.wall_time_s);
    Ok((row, dump))
}

fn write_field(dir: &Path, f: f64, dump: &FieldDump) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(dir.join(format!("field_{f}.csv")))?);
    writeln!(w, "x,y,z,re_p,im_p,abs_p")?;
    for (x, p) in dump {
        writeln!(w, "{},{},{},{},{},{}", full(x.x), full(x.y), full(x.z), full(p.re), full(p.im), full(p.norm()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_il(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "frequency_hz,il_db,iterations,residual,wall_time_s,status")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            full(r.frequency_hz),
            full(r.il_db),
            r.iterations,
            full(r.residual),
            full(r.wall_time_s),
            r.status.as_str()
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the frequency sweep and writes `il.csv`, `field_<f>.csv` and `manifest.json`.
///
/// A frequency whose solve fails outright is recorded as a `failed` row; the
/// remaining frequencies still run and the first failure is returned.
pub fn run_sweep(scene: &Scene, scene_path: &Path, ov: &Overrides) -> Result<SweepOutcome, CliError> {
    let prep = prepare(scene, ov)?;
    let dir = output_dir(scene, ov);
    fs::create_dir_all(&dir)?;
    let freqs = scene.sweep.frequencies();
    let started = Instant::now();
    let mut rows = Vec::with_capacity(freqs.len());
    let mut failure = None;
    for chunk in freqs.chunks(scene.sweep.parallel) {
        let results: Vec<_> = chunk.par_iter().map(|&f| (f, solve_one(&prep, f))).collect();
        for (f, res) in results {
            match res {
                Ok((row, dump)) => {
                    if let Some(d) = dump {
                        write_field(&dir, f, &d)?;
                    }
                    rows.push(row);
                }
                Err(e) => {
                    log::error!("{f} Hz: {e}");
                    rows.push(SweepRow {
                        frequency_hz: f,
                        il_db: f64::NAN,
                        iterations: 0,
                        residual: f64::NAN,
                        wall_time_s: 0.0,
                        status: RowStatus::Failed,
                        error: Some(e.to_string()),
                    });
                    failure.get_or_insert(e);
                }
            }
        }
        write_il(&dir.join("il.csv"), &rows)?;
    }
    let mut resolved = scene.clone();
    resolved.method = prep.method.to_string();
    resolved.output.directory = dir.clone();
    let manifest = json!({
        "command": "run",
        "version": env!("CARGO_PKG_VERSION"),
        "scene_file": scene_path,
        "threads": ov.threads.unwrap_or_else(rayon::current_num_threads),
        "scene": resolved,
        "n_cells": prep.problem.lattice.n_cells(),
        "n_dof": prep.problem.n_dof(),
        "frequencies_hz": freqs,
        "rows": rows,
        "total_wall_time_s": started.elapsed().as_secs_f64(),
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(SweepOutcome { rows, directory: dir, failure })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRecord {
    pub method: String,
    pub size: usize,
    pub n_dof: usize,
    pub assembly_s: f64,
    pub matvec_s: f64,
    pub memory_bytes: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Assembles and times each backend over a range of lattice sizes, writing `benchmark.csv`.
///
/// Sizes a backend cannot handle (for example over the memory cap) are recorded as `NaN`.
pub fn run_benchmark(scene: &Scene, scene_path: &Path, ov: &Overrides, sizes: Option<Vec<usize>>) -> Result<Vec<BenchRecord>, CliError> {
    let methods: Vec<Method> = match ov.method {
        Some(m) => vec![m],
        None => scene.benchmark.methods.iter().map(|m| m.parse::<Method>()).collect::<Result<_, _>>()?,
    };
    let sizes = sizes.unwrap_or_else(|| scene.benchmark.sizes.clone());
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::Usage("benchmark sizes must be positive".into()));
    }
    let axis = parse_axis(&scene.benchmark.axis)?;
    let f = scene.sweep.f_min;
    for &s in &sizes {
        let mut counts = scene.lattice.counts;
        counts[axis] = s;
        scene.problem_with_counts(counts)?;
    }
    let dir = output_dir(scene, ov);
    fs::create_dir_all(&dir)?;
    let mut records = Vec::new();
    for &m in &methods {
        for &s in &sizes {
            let mut counts = scene.lattice.counts;
            counts[axis] = s;
            let problem = scene.problem_with_counts(counts)?;
            let rec = match benchmark(&problem, m, f, scene.benchmark.repetitions) {
                Ok(r) => BenchRecord {
                    method: m.to_string(),
                    size: s,
                    n_dof: r.n_dof,
                    assembly_s: r.assembly_s,
                    matvec_s: r.matvec_s,
                    memory_bytes: r.memory_bytes as f64,
                    error: None,
                },
                Err(e @ (fmpbem::Error::MemoryCap { .. } | fmpbem::Error::InvalidConfig(_))) => {
                    log::warn!("{m} at size {s}: {e}");
                    BenchRecord {
                        method: m.to_string(),
                        size: s,
                        n_dof: problem.n_dof(),
                        assembly_s: f64::NAN,
                        matvec_s: f64::NAN,
                        memory_bytes: f64::NAN,
                        error: Some(e.to_string()),
                    }
                }
                Err(e) => return Err(e.into()),
            };
            log::info!("{m} size {s}: assembly {:.3} s, matvec {:.3e} s", rec.assembly_s, rec.matvec_s);
            records.push(rec);
        }
    }
    let mut w = BufWriter::new(File::create(dir.join("benchmark.csv"))?);
    writeln!(w, "method,size,n_dof,assembly_s,matvec_s,memory_bytes")?;
    for r in &records {
        let mem = if r.memory_bytes.is_finite() { format!("{}", r.memory_bytes as u64) } else { "NaN".into() };
        writeln!(w, "{},{},{},{},{},{}", r.method, r.size, r.n_dof, full(r.assembly_s), full(r.matvec_s), mem)?;
    }
    w.flush()?;
    let manifest = json!({
        "command": "benchmark",
        "version": env!("CARGO_PKG_VERSION"),
        "scene_file": scene_path,
        "threads": ov.threads.unwrap_or_else(rayon::current_num_threads),
        "scene": scene,
        "methods": methods.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "sizes": sizes,
        "axis": scene.benchmark.axis,
        "frequency_hz": f,
        "records": records,
    });
    fs::write(dir.join("benchmark_manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(records)
}
