//! Conformality diagnostics: per-corner angle distortion, per-face Beltrami
//! coefficients, aggregated reports, and the discrete-convergence study.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hbtr::{hbtr_solve, TrustRegionConfig};
use crate::init::{initial_map, InitConfig};
use crate::mesh::{corner_angles, corner_angles_of, gauss_curvature, gen_ellipsoid, TriMesh};
use crate::postprocess::detect_foldings;
use crate::sphere::CartesianField;

/// Distortion summary for a mesh/map pair. Angles are reported in degrees;
/// everything internal stays in radians.
#[derive(Debug, Clone, Serialize)]
pub struct DistortionReport {
    pub energy: f64,
    pub angle_mean_deg: f64,
    pub angle_sd_deg: f64,
    pub angle_p50_deg: f64,
    pub angle_p75_deg: f64,
    pub mu_mean: f64,
    pub folds: usize,
    /// |alpha - alpha(f)| per corner, face-major, degrees.
    #[serde(skip)]
    pub per_corner_deg: Vec<[f64; 3]>,
    /// |mu| per face.
    #[serde(skip)]
    pub per_face_mu: Vec<f64>,
    /// Mean corner distortion per vertex, degrees.
    #[serde(skip)]
    pub per_vertex_angle_deg: Vec<f64>,
    /// Mean |mu| over the faces incident to each vertex.
    #[serde(skip)]
    pub per_vertex_mu: Vec<f64>,
    /// Angle defect per vertex, radians.
    #[serde(skip)]
    pub gauss_curvature: Vec<f64>,
}

impl DistortionReport {
    /// JSON with the fixed summary fields; per-vertex arrays included on
    /// request.
    pub fn to_json(&self, per_vertex: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "energy": self.energy,
            "angle_mean_deg": self.angle_mean_deg,
            "angle_sd_deg": self.angle_sd_deg,
            "angle_p50_deg": self.angle_p50_deg,
            "angle_p75_deg": self.angle_p75_deg,
            "mu_mean": self.mu_mean,
            "folds": self.folds,
        });
        if per_vertex {
            v["per_vertex_angle_deg"] =
                serde_json::json!(self.per_vertex_angle_deg);
            v["per_vertex_mu"] = serde_json::json!(self.per_vertex_mu);
            v["gauss_curvature"] = serde_json::json!(self.gauss_curvature);
        }
        v
    }
}

/// Nearest-rank percentile of an unsorted sample.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Per-corner absolute angle distortion |alpha - alpha(f)| in degrees.
pub fn angle_distortion(mesh: &TriMesh, f: &CartesianField) -> Result<Vec<[f64; 3]>> {
    let source = corner_angles(mesh)?;
    let image = corner_angles_of(&f.points, mesh.faces())?;
    let to_deg = 180.0 / std::f64::consts::PI;
    Ok(source
        .angles
        .iter()
        .zip(&image.angles)
        .map(|(sa, ia)| {
            [
                (sa[0] - ia[0]).abs() * to_deg,
                (sa[1] - ia[1]).abs() * to_deg,
                (sa[2] - ia[2]).abs() * to_deg,
            ]
        })
        .collect())
}

/// Per-face Beltrami coefficient magnitude of the source-to-image map, both
/// triangles flattened isometrically (the image triangle by its chord
/// lengths). Zero exactly when the face map is a similarity.
pub fn beltrami_coefficients(mesh: &TriMesh, f: &CartesianField) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(mesh.n_faces());
    for (fi, &[i, j, k]) in mesh.faces().iter().enumerate() {
        let s = flatten(
            &mesh.positions()[i],
            &mesh.positions()[j],
            &mesh.positions()[k],
            fi,
        )?;
        let t = flatten(&f.points[i], &f.points[j], &f.points[k], fi)?;
        out.push(beltrami_of_frames(&s, &t));
    }
    Ok(out)
}

/// Isometric planar coordinates of a 3D triangle, first edge on the x-axis.
fn flatten(
    a: &nalgebra::Vector3<f64>,
    b: &nalgebra::Vector3<f64>,
    c: &nalgebra::Vector3<f64>,
    face: usize,
) -> Result<[nalgebra::Vector2<f64>; 3]> {
    let e1 = b - a;
    let e2 = c - a;
    let l1 = e1.norm();
    let area2 = e1.cross(&e2).norm();
    if l1.is_nan() || l1 <= 0.0 || area2.is_nan() || area2 <= 0.0 {
        return Err(Error::DegenerateImageTriangle {
            face,
            area: 0.5 * area2,
        });
    }
    let x2 = e1.dot(&e2) / l1;
    let y2 = area2 / l1;
    Ok([
        nalgebra::Vector2::new(0.0, 0.0),
        nalgebra::Vector2::new(l1, 0.0),
        nalgebra::Vector2::new(x2, y2),
    ])
}

fn beltrami_of_frames(
    s: &[nalgebra::Vector2<f64>; 3],
    t: &[nalgebra::Vector2<f64>; 3],
) -> f64 {
    // Jacobian of the affine map s -> t.
    let sm = nalgebra::Matrix2::from_columns(&[s[1] - s[0], s[2] - s[0]]);
    let tm = nalgebra::Matrix2::from_columns(&[t[1] - t[0], t[2] - t[0]]);
    let jac = tm * sm.try_inverse().expect("nondegenerate source triangle");
    let (a, b, c, d) = (jac[(0, 0)], jac[(0, 1)], jac[(1, 0)], jac[(1, 1)]);
    // f_z and f_zbar of the linear map.
    let fz_re = 0.5 * (a + d);
    let fz_im = 0.5 * (c - b);
    let fzb_re = 0.5 * (a - d);
    let fzb_im = 0.5 * (c + b);
    let fz = (fz_re * fz_re + fz_im * fz_im).sqrt();
    let fzb = (fzb_re * fzb_re + fzb_im * fzb_im).sqrt();
    if fz == 0.0 {
        1.0
    } else {
        fzb / fz
    }
}

/// Combines energy, angle statistics, Beltrami statistics, per-vertex
/// aggregates, Gauss curvature and fold count.
pub fn full_report(mesh: &TriMesh, f: &CartesianField) -> Result<DistortionReport> {
    let per_corner_deg = angle_distortion(mesh, f)?;
    let per_face_mu = beltrami_coefficients(mesh, f)?;
    let folds = detect_foldings(mesh, f).fold_count();
    let curvature = gauss_curvature(mesh)?;

    let l = crate::mesh::cotangent_laplacian(mesh.positions(), mesh)?;
    let field = crate::sphere::from_cartesian(f);
    let energy = crate::energy::build_energy_state(mesh, &l, &field)?.energy;

    let mut flat: Vec<f64> = per_corner_deg.iter().flatten().copied().collect();
    let mean = flat.iter().sum::<f64>() / flat.len() as f64;
    let var = flat.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / flat.len() as f64;
    flat.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p50 = percentile(&flat, 50.0);
    let p75 = percentile(&flat, 75.0);

    let n = mesh.n_vertices();
    let mut per_vertex_angle = vec![0.0; n];
    let mut per_vertex_mu = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for (fi, &[i, j, k]) in mesh.faces().iter().enumerate() {
        for (c, &v) in [i, j, k].iter().enumerate() {
            per_vertex_angle[v] += per_corner_deg[fi][c];
            per_vertex_mu[v] += per_face_mu[fi];
            counts[v] += 1;
        }
    }
    for v in 0..n {
        let c = counts[v].max(1) as f64;
        per_vertex_angle[v] /= c;
        per_vertex_mu[v] /= c;
    }

    let mu_mean = per_face_mu.iter().sum::<f64>() / per_face_mu.len() as f64;
    Ok(DistortionReport {
        energy,
        angle_mean_deg: mean,
        angle_sd_deg: var.sqrt(),
        angle_p50_deg: p50,
        angle_p75_deg: p75,
        mu_mean,
        folds,
        per_corner_deg,
        per_face_mu,
        per_vertex_angle_deg: per_vertex_angle,
        per_vertex_mu,
        gauss_curvature: curvature,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub level: u32,
    pub n_vertices: usize,
    pub h: f64,
    pub energy: f64,
    pub angle_mean_deg: f64,
    pub angle_sd_deg: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            w,
            "level,n_vertices,h,energy,angle_mean_deg,angle_sd_deg,converged,error"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
                r.level,
                r.n_vertices,
                r.h,
                r.energy,
                r.angle_mean_deg,
                r.angle_sd_deg,
                r.converged,
                r.error.as_deref().unwrap_or("")
            )?;
        }
        Ok(())
    }
}

/// Runs generate/initialize/solve per subdivision level and tabulates the
/// energy and angle-distortion statistics against the mesh size.
pub fn convergence_study(
    semiaxes: [f64; 3],
    levels: &[u32],
    config: &TrustRegionConfig,
) -> ConvergenceTable {
    let mut table = ConvergenceTable::default();
    for &level in levels {
        let row = (|| -> Result<ConvergenceRow> {
            let mesh = gen_ellipsoid(semiaxes, level)?;
            let init = initial_map(&mesh, &InitConfig::default())?;
            let result = hbtr_solve(&mesh, &init.field, config)?;
            Ok(ConvergenceRow {
                level,
                n_vertices: mesh.n_vertices(),
                h: mesh.mesh_size_h(),
                energy: result.final_energy,
                angle_mean_deg: result.distortion.angle_mean_deg,
                angle_sd_deg: result.distortion.angle_sd_deg,
                converged: result.converged,
                error: None,
            })
        })();
        table.rows.push(row.unwrap_or_else(|e| ConvergenceRow {
            level,
            n_vertices: 0,
            h: f64::NAN,
            energy: f64::NAN,
            angle_mean_deg: f64::NAN,
            angle_sd_deg: f64::NAN,
            converged: false,
            error: Some(e.to_string()),
        }));
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_octahedron, unit_tetrahedron};
    use nalgebra::{Vector2, Vector3};

    fn identity_map(mesh: &TriMesh) -> CartesianField {
        CartesianField {
            points: mesh.positions().iter().map(|p| p.normalize()).collect(),
        }
    }

    #[test]
    fn identity_has_zero_distortion() {
        let mesh = unit_tetrahedron();
        let f = identity_map(&mesh);
        let report = full_report(&mesh, &f).unwrap();
        assert!(report.energy.abs() < 1e-12);
        assert_eq!(report.folds, 0);
        assert!(report.angle_mean_deg.abs() < 1e-10);
        assert!(report.mu_mean < 1e-10);
        for tri in &report.per_corner_deg {
            for &d in tri {
                assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn angle_distortion_matches_two_pass_recomputation() {
        let mesh = unit_octahedron();
        let mut f = identity_map(&mesh);
        let mut s = 5u64;
        for p in &mut f.points {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let t = ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.4;
            *p = (*p + t * Vector3::new(-p.z, p.x, p.y)).normalize();
        }
        let dist = angle_distortion(&mesh, &f).unwrap();
        // Recompute both angle sets from scratch with the law of cosines.
        for (fi, &[i, j, k]) in mesh.faces().iter().enumerate() {
            let tri = [i, j, k];
            for c in 0..3 {
                let angle = |pos: &dyn Fn(usize) -> Vector3<f64>| {
                    let p = pos(tri[c]);
                    let q = pos(tri[(c + 1) % 3]);
                    let r = pos(tri[(c + 2) % 3]);
                    let (a, b, cc) = ((q - r).norm(), (r - p).norm(), (p - q).norm());
                    ((b * b + cc * cc - a * a) / (2.0 * b * cc)).acos()
                };
                let sa = angle(&|v| mesh.positions()[v]);
                let ia = angle(&|v| f.points[v]);
                let expect = (sa - ia).abs() * 180.0 / std::f64::consts::PI;
                assert!((dist[fi][c] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn beltrami_zero_for_similarity_and_third_for_unit_stretch() {
        // Similarity: rotation + uniform scale.
        let s = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.3, 0.8),
        ];
        let rot = nalgebra::Rotation2::new(0.7);
        let t: Vec<Vector2<f64>> = s.iter().map(|p| rot * (2.5 * p)).collect();
        let mu = beltrami_of_frames(&s, &[t[0], t[1], t[2]]);
        assert!(mu < 1e-12);

        // (x, y) -> (2x, y) has |mu| = 1/3.
        let t: Vec<Vector2<f64>> = s.iter().map(|p| Vector2::new(2.0 * p.x, p.y)).collect();
        let mu = beltrami_of_frames(&s, &[t[0], t[1], t[2]]);
        assert!((mu - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn beltrami_matches_least_squares_oracle() {
        let s = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.3, 0.0),
            Vector2::new(0.2, 0.9),
        ];
        let aff = |p: &Vector2<f64>| {
            Vector2::new(1.7 * p.x - 0.4 * p.y + 3.0, 0.6 * p.x + 1.1 * p.y - 2.0)
        };
        let t = [aff(&s[0]), aff(&s[1]), aff(&s[2])];
        let mu = beltrami_of_frames(&s, &t);
        // Oracle: solve the 2x2 map explicitly and evaluate mu.
        let (a, b, c, d) = (1.7, -0.4, 0.6, 1.1);
        let fz = nalgebra::Complex::new(0.5 * (a + d), 0.5 * (c - b));
        let fzb = nalgebra::Complex::new(0.5 * (a - d), 0.5 * (c + b));
        assert!((mu - (fzb.norm() / fz.norm())).abs() < 1e-10);
    }

    #[test]
    fn beltrami_on_mesh_is_zero_for_identity() {
        let mesh = unit_octahedron();
        let mus = beltrami_coefficients(&mesh, &identity_map(&mesh)).unwrap();
        for mu in mus {
            assert!(mu < 1e-12);
        }
    }

    #[test]
    fn report_aggregates_are_consistent() {
        let mesh = unit_octahedron();
        let mut f = identity_map(&mesh);
        let mut s = 23u64;
        for p in &mut f.points {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let t = ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.3;
            *p = (*p + t * Vector3::new(p.y, -p.x, p.z)).normalize();
        }
        let report = full_report(&mesh, &f).unwrap();
        assert!(report.angle_p50_deg <= report.angle_p75_deg);
        // SD consistency: sd^2 = E[d^2] - (E[d])^2.
        let flat: Vec<f64> = report.per_corner_deg.iter().flatten().copied().collect();
        let mean = flat.iter().sum::<f64>() / flat.len() as f64;
        let esq = flat.iter().map(|d| d * d).sum::<f64>() / flat.len() as f64;
        let var = esq - mean * mean;
        assert!(
            (report.angle_sd_deg.powi(2) - var).abs() <= 1e-9 * var.max(1e-12),
            "sd inconsistency"
        );
        // Per-vertex means match an independent aggregation.
        for v in 0..mesh.n_vertices() {
            let mut acc = 0.0;
            let mut cnt = 0;
            for (fi, face) in mesh.faces().iter().enumerate() {
                for (c, &w) in face.iter().enumerate() {
                    if w == v {
                        acc += report.per_corner_deg[fi][c];
                        cnt += 1;
                    }
                }
            }
            assert!((report.per_vertex_angle_deg[v] - acc / cnt as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn single_level_study_has_one_row() {
        let table = convergence_study(
            [1.0, 1.0, 1.0],
            &[0],
            &TrustRegionConfig::default(),
        );
        assert_eq!(table.rows.len(), 1);
        assert!(table.rows[0].error.is_none());
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().count() == 2);
    }
}
