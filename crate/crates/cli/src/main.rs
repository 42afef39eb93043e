//! Command-line front end: parameterize, repair, measure, register, generate
//! meshes, and run convergence studies.
//!
//! Exit codes: 0 success/converged, 1 input or usage error, 2 solver did not
//! converge (artifacts are still written). Every non-zero exit prints exactly
//! one diagnostic line to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use confmap_core::hbtr::{hbtr_solve, SolveResult, TrustRegionConfig};
use confmap_core::init::{initial_map, InitConfig};
use confmap_core::mesh::{gen_ellipsoid, load_mesh, write_obj, write_off, TriMesh};
use confmap_core::metrics::{convergence_study, full_report};
use confmap_core::postprocess::mvc_fix;
use confmap_core::registration::{hbtr_register_with_fixed, load_landmark_csv, RegConfig};
use confmap_core::sphere::{from_cartesian, CartesianField};

#[derive(Parser)]
#[command(
    name = "confmap",
    about = "Spherical conformal parameterization of closed genus-0 triangle meshes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolveOpts {
    /// Convergence tolerance on the rotation-minimized step error.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Maximum number of accepted iterations.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

impl SolveOpts {
    fn config(&self) -> Result<TrustRegionConfig, String> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(format!("--tol must be positive and finite, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return Err("--max-iter must be at least 1".into());
        }
        Ok(TrustRegionConfig {
            tolerance: self.tol,
            max_iterations: self.max_iter,
            ..Default::default()
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the spherical conformal parameterization of a mesh.
    Param {
        /// Input mesh (OFF or OBJ).
        mesh: PathBuf,
        #[command(flatten)]
        solve: SolveOpts,
        /// Remove folded triangles afterwards with mean value coordinates.
        #[arg(long)]
        fix_folds: bool,
        /// Output sphere mesh (default: `<input>_sphere.obj`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output JSON report (default: `<input>_report.json`).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Optional iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Include per-vertex arrays in the report.
        #[arg(long)]
        per_vertex: bool,
    },
    /// Register a moving mesh to a fixed mesh through their sphere maps.
    Register {
        /// Fixed mesh (OFF or OBJ).
        fixed: PathBuf,
        /// Moving mesh (OFF or OBJ).
        moving: PathBuf,
        /// Landmark CSV: rows `moving_idx,fixed_idx` or `moving_idx,px,py,pz`.
        #[arg(long)]
        landmarks: PathBuf,
        /// Registration weight.
        #[arg(long, default_value_t = 5.0)]
        lambda: f64,
        #[command(flatten)]
        solve: SolveOpts,
        /// Output registered sphere mesh (default: `<moving>_registered.obj`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output pulled-back surface (default: `<moving>_pullback.obj`).
        #[arg(long)]
        pullback: Option<PathBuf>,
        /// Output JSON report (default: `<moving>_registration.json`).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Optional iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate an ellipsoid mesh by icosphere subdivision.
    Gen {
        /// Semiaxis lengths, comma separated.
        #[arg(long, value_parser = parse_triple)]
        semiaxes: [f64; 3],
        /// Subdivision level (vertices: 10 * 4^level + 2).
        #[arg(long)]
        level: u32,
        /// Output path (default: ellipsoid.off; format by extension).
        #[arg(long, default_value = "ellipsoid.off")]
        out: PathBuf,
    },
    /// Remove folded triangles from an existing sphere map.
    Repair {
        /// Source mesh (OFF or OBJ).
        mesh: PathBuf,
        /// Its spherical image (OFF or OBJ, unit vertices).
        sphere: PathBuf,
        /// Output repaired sphere mesh (default: `<sphere>_repaired.obj`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Repair rounds before giving up.
        #[arg(long, default_value_t = 10)]
        max_rounds: usize,
    },
    /// Distortion report for an existing mesh/sphere pair.
    Metrics {
        /// Source mesh (OFF or OBJ).
        mesh: PathBuf,
        /// Its spherical image (OFF or OBJ, unit vertices).
        sphere: PathBuf,
        /// Output JSON report (default: stdout).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Include per-vertex arrays in the report.
        #[arg(long)]
        per_vertex: bool,
    },
    /// Convergence study over a family of ellipsoid refinements.
    Convergence {
        /// Semiaxis lengths, comma separated.
        #[arg(long, value_parser = parse_triple)]
        semiaxes: [f64; 3],
        /// Subdivision levels, comma separated, ascending.
        #[arg(long, value_parser = parse_levels)]
        levels: std::vec::Vec<u32>,
        #[command(flatten)]
        solve: SolveOpts,
        /// Output CSV (default: convergence.csv).
        #[arg(long, default_value = "convergence.csv")]
        out: PathBuf,
    },
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad number: {t}")))
        .collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {s}"));
    }
    if parts.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err("semiaxes must be positive".into());
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn parse_levels(s: &str) -> Result<Vec<u32>, String> {
    let levels: Vec<u32> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad level: {t}")))
        .collect::<Result<_, _>>()?;
    if levels.is_empty() {
        return Err("need at least one level".into());
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err("levels must be strictly ascending".into());
    }
    Ok(levels)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_mesh_by_ext(
    positions: &[nalgebra::Vector3<f64>],
    faces: &[[usize; 3]],
    path: &Path,
) -> confmap_core::Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("off") | Some("OFF") => write_off(positions, faces, path),
        _ => write_obj(positions, faces, path),
    }
}

fn run_solve(mesh: &TriMesh, opts: &SolveOpts) -> Result<SolveResult, String> {
    let config = opts.config()?;
    let init = initial_map(mesh, &InitConfig::default()).map_err(|e| e.to_string())?;
    hbtr_solve(mesh, &init.field, &config).map_err(|e| e.to_string())
}

fn solve_summary(result: &SolveResult, report: serde_json::Value) -> serde_json::Value {
    let mut v = serde_json::json!({
        "converged": result.converged,
        "iterations": result.iterations,
        "delta": result.final_delta,
        "grad_inf": result.final_grad_inf,
    });
    for (k, val) in report.as_object().unwrap() {
        v[k] = val.clone();
    }
    v
}

fn real_main() -> Result<u8, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Param {
            mesh: mesh_path,
            solve,
            fix_folds,
            out,
            report,
            trace,
            per_vertex,
        } => {
            let mesh = load_mesh(&mesh_path).map_err(|e| e.to_string())?;
            let mut result = run_solve(&mesh, &solve)?;
            if fix_folds && result.fold_count > 0 {
                let repaired = mvc_fix(&mesh, &result.map, 10).map_err(|e| e.to_string())?;
                result.map = repaired.map;
                result.field = from_cartesian(&result.map);
                result.fold_count = repaired.report.fold_count();
                result.distortion = full_report(&mesh, &result.map).map_err(|e| e.to_string())?;
            }
            let out = out.unwrap_or_else(|| with_suffix(&mesh_path, "_sphere.obj"));
            write_mesh_by_ext(&result.map.points, mesh.faces(), &out)
                .map_err(|e| e.to_string())?;
            let report_path = report.unwrap_or_else(|| with_suffix(&mesh_path, "_report.json"));
            let json = solve_summary(&result, result.distortion.to_json(per_vertex));
            std::fs::write(&report_path, format!("{:#}\n", json)).map_err(|e| e.to_string())?;
            if let Some(trace_path) = trace {
                let mut buf = Vec::new();
                result.trace.write_csv(&mut buf).map_err(|e| e.to_string())?;
                std::fs::write(&trace_path, buf).map_err(|e| e.to_string())?;
            }
            if result.converged {
                Ok(0)
            } else {
                eprintln!(
                    "did not converge after {} iterations (delta {:.3e} > {:.3e}); artifacts written",
                    result.iterations, result.final_delta, solve.tol
                );
                Ok(2)
            }
        }
        Command::Register {
            fixed,
            moving,
            landmarks,
            lambda,
            solve,
            out,
            pullback,
            report,
            trace,
        } => {
            let fixed_mesh = load_mesh(&fixed).map_err(|e| e.to_string())?;
            let moving_mesh = load_mesh(&moving).map_err(|e| e.to_string())?;
            let specs = load_landmark_csv(&landmarks).map_err(|e| e.to_string())?;
            let fixed_solve = run_solve(&fixed_mesh, &solve)?;
            if !(lambda.is_finite() && lambda >= 0.0) {
                return Err(format!("--lambda must be finite and nonnegative, got {lambda}"));
            }
            let config = RegConfig {
                lambda,
                trust_region: solve.config()?,
                init: InitConfig::default(),
            };
            let reg =
                hbtr_register_with_fixed(&fixed_mesh, &fixed_solve, &moving_mesh, &specs, &config)
                    .map_err(|e| e.to_string())?;

            let out = out.unwrap_or_else(|| with_suffix(&moving, "_registered.obj"));
            write_mesh_by_ext(&reg.solve.map.points, moving_mesh.faces(), &out)
                .map_err(|e| e.to_string())?;
            let pullback_path = pullback.unwrap_or_else(|| with_suffix(&moving, "_pullback.obj"));
            let positions: Vec<nalgebra::Vector3<f64>> =
                reg.pullback.entries.iter().map(|e| e.position).collect();
            write_mesh_by_ext(&positions, moving_mesh.faces(), &pullback_path)
                .map_err(|e| e.to_string())?;

            let report_path =
                report.unwrap_or_else(|| with_suffix(&moving, "_registration.json"));
            let json = serde_json::json!({
                "converged": reg.solve.converged,
                "iterations": reg.solve.iterations,
                "lambda": reg.lambda,
                "energy": reg.solve.final_energy,
                "registration_loss": reg.registration_loss,
                "folds": reg.solve.fold_count,
                "pullback_fallbacks": reg.pullback.fallbacks,
                "fixed_energy": fixed_solve.final_energy,
            });
            std::fs::write(&report_path, format!("{:#}\n", json)).map_err(|e| e.to_string())?;
            if let Some(trace_path) = trace {
                let mut buf = Vec::new();
                reg.solve
                    .trace
                    .write_csv(&mut buf)
                    .map_err(|e| e.to_string())?;
                std::fs::write(&trace_path, buf).map_err(|e| e.to_string())?;
            }
            if reg.solve.converged && fixed_solve.converged {
                Ok(0)
            } else {
                eprintln!(
                    "registration did not converge (fixed: {}, moving: {}); artifacts written",
                    fixed_solve.converged, reg.solve.converged
                );
                Ok(2)
            }
        }
        Command::Gen {
            semiaxes,
            level,
            out,
        } => {
            let mesh = gen_ellipsoid(semiaxes, level).map_err(|e| e.to_string())?;
            write_mesh_by_ext(mesh.positions(), mesh.faces(), &out).map_err(|e| e.to_string())?;
            println!(
                "{}: {} vertices, {} faces, h = {:.6}",
                out.display(),
                mesh.n_vertices(),
                mesh.n_faces(),
                mesh.mesh_size_h()
            );
            Ok(0)
        }
        Command::Repair {
            mesh: mesh_path,
            sphere,
            out,
            max_rounds,
        } => {
            let mesh = load_mesh(&mesh_path).map_err(|e| e.to_string())?;
            let sphere_mesh = load_mesh(&sphere).map_err(|e| e.to_string())?;
            if sphere_mesh.n_vertices() != mesh.n_vertices() {
                return Err(format!(
                    "vertex count mismatch: {} vs {}",
                    mesh.n_vertices(),
                    sphere_mesh.n_vertices()
                ));
            }
            let f = CartesianField {
                points: sphere_mesh
                    .positions()
                    .iter()
                    .map(|p| p.normalize())
                    .collect(),
            };
            let before = confmap_core::postprocess::detect_foldings(&mesh, &f).fold_count();
            let repaired = mvc_fix(&mesh, &f, max_rounds).map_err(|e| e.to_string())?;
            let out = out.unwrap_or_else(|| with_suffix(&sphere, "_repaired.obj"));
            write_mesh_by_ext(&repaired.map.points, mesh.faces(), &out)
                .map_err(|e| e.to_string())?;
            println!(
                "folds: {} -> {} ({} rounds, {} vertices re-embedded)",
                before,
                repaired.report.fold_count(),
                repaired.rounds,
                repaired.touched.len()
            );
            if repaired.report.is_clean() {
                Ok(0)
            } else {
                eprintln!(
                    "{} folds remain after {} rounds; repaired mesh written",
                    repaired.report.fold_count(),
                    repaired.rounds
                );
                Ok(2)
            }
        }
        Command::Metrics {
            mesh: mesh_path,
            sphere,
            report,
            per_vertex,
        } => {
            let mesh = load_mesh(&mesh_path).map_err(|e| e.to_string())?;
            let sphere_mesh = load_mesh(&sphere).map_err(|e| e.to_string())?;
            if sphere_mesh.n_vertices() != mesh.n_vertices() {
                return Err(format!(
                    "vertex count mismatch: {} vs {}",
                    mesh.n_vertices(),
                    sphere_mesh.n_vertices()
                ));
            }
            let f = CartesianField {
                points: sphere_mesh
                    .positions()
                    .iter()
                    .map(|p| p.normalize())
                    .collect(),
            };
            let rep = full_report(&mesh, &f).map_err(|e| e.to_string())?;
            let json = format!("{:#}\n", rep.to_json(per_vertex));
            match report {
                Some(path) => std::fs::write(&path, json).map_err(|e| e.to_string())?,
                None => print!("{json}"),
            }
            Ok(0)
        }
        Command::Convergence {
            semiaxes,
            levels,
            solve,
            out,
        } => {
            let table = convergence_study(semiaxes, &levels, &solve.config()?);
            let mut buf = Vec::new();
            table.write_csv(&mut buf).map_err(|e| e.to_string())?;
            std::fs::write(&out, buf).map_err(|e| e.to_string())?;
            let failed: Vec<u32> = table
                .rows
                .iter()
                .filter(|r| r.error.is_some() || !r.converged)
                .map(|r| r.level)
                .collect();
            if failed.is_empty() {
                Ok(0)
            } else {
                eprintln!("levels {failed:?} failed or did not converge; table written");
                Ok(2)
            }
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
