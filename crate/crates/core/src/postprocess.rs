//! Folding detection and removal.
//!
//! A spherical image triangle is folded when its orientation is reversed
//! relative to the outward sphere normal, i.e. det[f_i | f_j | f_k] <= 0.
//! Folds are repaired by re-embedding the involved vertices in a
//! stereographic chart with mean value coordinates: the weights are strictly
//! positive, so the interior solve is a convex combination and cannot fold
//! again inside the chart.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{mean_value_laplacian, TriMesh};
use crate::sphere::CartesianField;

/// Folded faces plus the vertex split they induce: `involved` collects every
/// vertex of a folded face, `fixed` is the complement.
#[derive(Debug, Clone)]
pub struct FoldReport {
    pub folded_faces: Vec<usize>,
    pub involved: Vec<usize>,
    pub fixed: Vec<usize>,
}

impl FoldReport {
    pub fn fold_count(&self) -> usize {
        self.folded_faces.len()
    }

    pub fn is_clean(&self) -> bool {
        self.folded_faces.is_empty()
    }
}

/// Orientation test per face: folded iff det[f_i | f_j | f_k] <= 0.
pub fn detect_foldings(mesh: &TriMesh, f: &CartesianField) -> FoldReport {
    let mut folded_faces = Vec::new();
    let mut involved_set = BTreeSet::new();
    for (fi, &[i, j, k]) in mesh.faces().iter().enumerate() {
        let det = Matrix3::from_columns(&[f.points[i], f.points[j], f.points[k]]).determinant();
        if det <= 0.0 {
            folded_faces.push(fi);
            involved_set.extend([i, j, k]);
        }
    }
    let involved: Vec<usize> = involved_set.iter().copied().collect();
    let fixed = (0..mesh.n_vertices())
        .filter(|v| !involved_set.contains(v))
        .collect();
    FoldReport {
        folded_faces,
        involved,
        fixed,
    }
}

fn pole_frame(north: &Vector3<f64>) -> Matrix3<f64> {
    let d = north.normalize();
    let helper = if d.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = (helper - d * helper.dot(&d)).normalize();
    let e2 = d.cross(&e1);
    Matrix3::from_columns(&[e1, e2, d])
}

/// Stereographic projection from `north`: rotate `north` onto (0,0,1), then
/// (x, y, z) -> (x, y) / (1 - z).
pub fn stereographic(f: &CartesianField, north: &Vector3<f64>) -> Result<Vec<Vector2<f64>>> {
    let frame = pole_frame(north);
    let mut out = Vec::with_capacity(f.len());
    for (vi, p) in f.points.iter().enumerate() {
        let q = frame.transpose() * p;
        let denom = 1.0 - q.z;
        if denom < 1e-9 {
            return Err(Error::PoleTooClose {
                vertex: vi,
                dist: denom,
            });
        }
        out.push(Vector2::new(q.x / denom, q.y / denom));
    }
    Ok(out)
}

/// Inverse stereographic projection, rotating (0,0,1) back to `north`.
pub fn inverse_stereographic(h: &[Vector2<f64>], north: &Vector3<f64>) -> CartesianField {
    let frame = pole_frame(north);
    let points = h
        .iter()
        .map(|p| {
            let s = p.norm_squared();
            let q = Vector3::new(2.0 * p.x, 2.0 * p.y, s - 1.0) / (s + 1.0);
            frame * q
        })
        .collect();
    CartesianField { points }
}

/// Result of the repair loop.
#[derive(Debug)]
pub struct RepairOutcome {
    pub map: CartesianField,
    /// Folds remaining after the loop (empty on success).
    pub report: FoldReport,
    /// Union of all vertices that were re-embedded across rounds.
    pub touched: Vec<usize>,
    pub rounds: usize,
}

/// Mean value coordinate repair: while folded faces exist, project the map
/// stereographically from the center of the unfolded face farthest from the
/// folded set and solve the interior system
/// `[L_mv]_II h_I = -[L_mv]_IO h_O` for the involved vertices.
pub fn mvc_fix(mesh: &TriMesh, f: &CartesianField, max_rounds: usize) -> Result<RepairOutcome> {
    let mut map = f.clone();
    let mut report = detect_foldings(mesh, &map);
    if report.is_clean() {
        return Ok(RepairOutcome {
            map,
            report,
            touched: Vec::new(),
            rounds: 0,
        });
    }
    let l_mv = mean_value_laplacian(mesh.positions(), mesh)?;
    let mut touched = BTreeSet::new();
    let mut rounds = 0;
    while !report.is_clean() && rounds < max_rounds {
        if report.involved.len() == mesh.n_vertices() {
            return Err(Error::FoldRepairUnrecoverable);
        }
        rounds += 1;
        touched.extend(report.involved.iter().copied());

        // Anchor: center of the unfolded face farthest (chordally) from the
        // folded vertices; keeps the involved set away from the chart pole.
        let folded_pts: Vec<Vector3<f64>> = report
            .involved
            .iter()
            .map(|&v| map.points[v])
            .collect();
        let folded_set: std::collections::HashSet<usize> =
            report.folded_faces.iter().copied().collect();
        let mut anchors: Vec<(f64, Vector3<f64>)> = mesh
            .faces()
            .iter()
            .enumerate()
            .filter(|(fi, _)| !folded_set.contains(fi))
            .map(|(_, &[i, j, k])| {
                let center = ((map.points[i] + map.points[j] + map.points[k]) / 3.0).normalize();
                let dist = folded_pts
                    .iter()
                    .map(|p| (p - center).norm())
                    .fold(f64::INFINITY, f64::min);
                (dist, center)
            })
            .collect();
        if anchors.is_empty() {
            return Err(Error::FoldRepairUnrecoverable);
        }
        anchors.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

        // Farthest anchor first; fall through to the next if a vertex sits
        // on the projection pole.
        let mut projected = None;
        for (_, north) in anchors.iter().take(16) {
            match stereographic(&map, north) {
                Ok(plane) => {
                    projected = Some((plane, *north));
                    break;
                }
                Err(Error::PoleTooClose { .. }) => continue,
                Err(other) => return Err(other),
            }
        }
        let (plane, north) = projected.ok_or(Error::FoldRepairUnrecoverable)?;
        let interior = &report.involved;
        let index_of: std::collections::HashMap<usize, usize> = interior
            .iter()
            .enumerate()
            .map(|(slot, &v)| (v, slot))
            .collect();
        let k = interior.len();
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut rhs_x = DVector::<f64>::zeros(k);
        let mut rhs_y = DVector::<f64>::zeros(k);
        for (slot, &v) in interior.iter().enumerate() {
            for (j, w) in l_mv.row_entries(v) {
                match index_of.get(&j) {
                    Some(&sj) => a[(slot, sj)] += w,
                    None => {
                        rhs_x[slot] -= w * plane[j].x;
                        rhs_y[slot] -= w * plane[j].y;
                    }
                }
            }
        }
        let lu = a.lu();
        let sol_x = lu.solve(&rhs_x).ok_or(Error::SingularSystem {
            index: 0,
            pivot: 0.0,
        })?;
        let sol_y = lu.solve(&rhs_y).ok_or(Error::SingularSystem {
            index: 0,
            pivot: 0.0,
        })?;
        let mut plane = plane;
        for (slot, &v) in interior.iter().enumerate() {
            plane[v] = Vector2::new(sol_x[slot], sol_y[slot]);
        }
        // Lift everything back; untouched vertices round-trip through the
        // exact inverse formulas.
        map = inverse_stereographic(&plane, &north);
        report = detect_foldings(mesh, &map);
    }
    Ok(RepairOutcome {
        map,
        report,
        touched: touched.into_iter().collect(),
        rounds,
    })
}
