//! Browser demo bindings: generate ellipsoids, run the spherical conformal
//! parameterization, and report distortion, all over JSON strings so the
//! static page needs no framework.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use confmap_core::hbtr::{hbtr_solve, SolveResult, TrustRegionConfig};
use confmap_core::init::{initial_map, InitConfig};
use confmap_core::mesh::{gen_ellipsoid, parse_mesh_text, TriMesh};
use confmap_core::postprocess::mvc_fix;
use confmap_core::sphere::from_cartesian;

#[derive(Serialize)]
struct MeshPayload {
    positions: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    h: f64,
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    energy: f64,
    grad_inf: f64,
    delta: f64,
}

#[derive(Serialize)]
struct SolvePayload {
    mesh: MeshPayload,
    sphere: Vec<[f64; 3]>,
    converged: bool,
    iterations: usize,
    energy: f64,
    grad_inf: f64,
    delta: f64,
    folds: usize,
    angle_mean_deg: f64,
    angle_sd_deg: f64,
    angle_p50_deg: f64,
    angle_p75_deg: f64,
    mu_mean: f64,
    per_vertex_angle_deg: Vec<f64>,
    trace: Vec<TraceRow>,
}

fn mesh_payload(mesh: &TriMesh) -> MeshPayload {
    MeshPayload {
        positions: mesh.positions().iter().map(|p| [p.x, p.y, p.z]).collect(),
        faces: mesh.faces().to_vec(),
        h: mesh.mesh_size_h(),
    }
}

fn solve_payload(mesh: &TriMesh, result: &SolveResult) -> SolvePayload {
    SolvePayload {
        mesh: mesh_payload(mesh),
        sphere: result.map.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        converged: result.converged,
        iterations: result.iterations,
        energy: result.final_energy,
        grad_inf: result.final_grad_inf,
        delta: result.final_delta,
        folds: result.fold_count,
        angle_mean_deg: result.distortion.angle_mean_deg,
        angle_sd_deg: result.distortion.angle_sd_deg,
        angle_p50_deg: result.distortion.angle_p50_deg,
        angle_p75_deg: result.distortion.angle_p75_deg,
        mu_mean: result.distortion.mu_mean,
        per_vertex_angle_deg: result.distortion.per_vertex_angle_deg.clone(),
        trace: result
            .trace
            .records
            .iter()
            .filter(|r| r.accepted)
            .map(|r| TraceRow {
                iter: r.iter,
                energy: r.energy,
                grad_inf: r.grad_inf,
                delta: r.delta,
            })
            .collect(),
    }
}

fn solve_mesh(mesh: &TriMesh, tol: f64, max_iter: usize, fix_folds: bool) -> Result<String, JsError> {
    let init = initial_map(mesh, &InitConfig::default()).map_err(to_js)?;
    let config = TrustRegionConfig {
        tolerance: tol,
        max_iterations: max_iter,
        ..Default::default()
    };
    let mut result = hbtr_solve(mesh, &init.field, &config).map_err(to_js)?;
    if fix_folds && result.fold_count > 0 {
        let repaired = mvc_fix(mesh, &result.map, 10).map_err(to_js)?;
        result.map = repaired.map;
        result.field = from_cartesian(&result.map);
        result.fold_count = repaired.report.fold_count();
        result.distortion = confmap_core::metrics::full_report(mesh, &result.map).map_err(to_js)?;
    }
    serde_json::to_string(&solve_payload(mesh, &result)).map_err(|e| JsError::new(&e.to_string()))
}

fn to_js(e: confmap_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Ellipsoid mesh by icosphere subdivision, as JSON.
#[wasm_bindgen]
pub fn generate_ellipsoid(a: f64, b: f64, c: f64, level: u32) -> Result<String, JsError> {
    if [a, b, c].iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(JsError::new("semiaxes must be positive"));
    }
    if level > 4 {
        return Err(JsError::new("level capped at 4 for the demo"));
    }
    let mesh = gen_ellipsoid([a, b, c], level).map_err(to_js)?;
    serde_json::to_string(&mesh_payload(&mesh)).map_err(|e| JsError::new(&e.to_string()))
}

/// Generates and parameterizes an ellipsoid; returns the mesh, the sphere
/// map, convergence statistics and the iteration trace as JSON.
#[wasm_bindgen]
pub fn parameterize_ellipsoid(
    a: f64,
    b: f64,
    c: f64,
    level: u32,
    tol: f64,
    max_iter: usize,
) -> Result<String, JsError> {
    if [a, b, c].iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(JsError::new("semiaxes must be positive"));
    }
    if level > 4 {
        return Err(JsError::new("level capped at 4 for the demo"));
    }
    let mesh = gen_ellipsoid([a, b, c], level).map_err(to_js)?;
    solve_mesh(&mesh, tol, max_iter, false)
}

/// Parameterizes a user-provided OFF or OBJ mesh (closed, genus 0).
#[wasm_bindgen]
pub fn parameterize_mesh(
    text: &str,
    tol: f64,
    max_iter: usize,
    fix_folds: bool,
) -> Result<String, JsError> {
    let mesh = parse_mesh_text(text, "uploaded mesh").map_err(to_js)?;
    if mesh.n_vertices() > 20_000 {
        return Err(JsError::new("demo is limited to 20000 vertices"));
    }
    solve_mesh(&mesh, tol, max_iter, fix_folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_contains_expected_fields() {
        let mesh = gen_ellipsoid([1.1, 1.0, 0.9], 1).unwrap();
        let json = solve_mesh(&mesh, 1e-9, 500, false).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["converged"], serde_json::json!(true));
        assert_eq!(v["sphere"].as_array().unwrap().len(), 42);
        assert_eq!(v["mesh"]["faces"].as_array().unwrap().len(), 80);
        assert_eq!(v["per_vertex_angle_deg"].as_array().unwrap().len(), 42);
        assert!(!v["trace"].as_array().unwrap().is_empty());
    }

    #[test]
    fn mesh_text_round_trip() {
        let mesh = gen_ellipsoid([1.0, 1.0, 1.0], 0).unwrap();
        let mut obj = String::new();
        for p in mesh.positions() {
            obj.push_str(&format!("v {} {} {}\n", p.x, p.y, p.z));
        }
        for f in mesh.faces() {
            obj.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        let json = parameterize_mesh(&obj, 1e-9, 100, false).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["folds"], serde_json::json!(0));
    }
}
