//! Initial spherical map: puncture one triangle, solve a planar harmonic
//! system with the punctured triangle pinned, lift through the inverse
//! stereographic projection, and rescale the plane until the spherical
//! centroid is balanced.

use nalgebra::{Vector2, Vector3};

use crate::error::Result;
use crate::mesh::{corner_angles, cotangent_laplacian, TriMesh};
use crate::postprocess::detect_foldings;
use crate::sparse::LdltFactor;
use crate::sphere::{
    from_cartesian, rotate_away_from_poles, CartesianField, SphericalField, EPS_POLE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorRule {
    /// Pick the face whose smallest interior angle is largest.
    MaxMinAngle,
}

#[derive(Debug, Clone)]
pub struct InitConfig {
    pub centering_max_iter: usize,
    /// Target norm of the spherical centroid.
    pub centering_tol: f64,
    pub anchor_rule: AnchorRule,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            centering_max_iter: 30,
            centering_tol: 0.1,
            anchor_rule: AnchorRule::MaxMinAngle,
        }
    }
}

/// Initial map plus diagnostics.
#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub field: SphericalField,
    pub fold_count: usize,
    /// Whether the centroid reached the requested tolerance.
    pub centered: bool,
    pub centroid_norm: f64,
}

fn lift(plane: &[Vector2<f64>], scale: f64, shift: Vector2<f64>) -> CartesianField {
    let points = plane
        .iter()
        .map(|h| {
            let (hx, hy) = (scale * h.x + shift.x, scale * h.y + shift.y);
            let s = hx * hx + hy * hy;
            Vector3::new(2.0 * hx, 2.0 * hy, s - 1.0) / (s + 1.0)
        })
        .collect();
    CartesianField { points }
}

fn centroid(f: &CartesianField) -> Vector3<f64> {
    f.points.iter().sum::<Vector3<f64>>() / f.len() as f64
}

/// One corrective harmonic solve for the polar cap around the puncture: the
/// raw punctured map is accurate far from the anchor but badly distorted
/// near it, so the northern vertices are re-solved in a south-pole
/// stereographic chart with the southern hemisphere pinned.
fn cap_correction(
    mesh: &TriMesh,
    l: &crate::sparse::SymSparseOperator,
    f: &CartesianField,
    north: bool,
) -> Option<CartesianField> {
    let n = mesh.n_vertices();
    let keep = |z: f64| if north { z > 0.0 } else { z < 0.0 };
    let solve: Vec<usize> = (0..n).filter(|&v| keep(f.points[v].z)).collect();
    if solve.is_empty() || solve.len() == n {
        return None;
    }
    let flip = if north { 1.0 } else { -1.0 };
    let in_solve: Vec<bool> = {
        let mut m = vec![false; n];
        for &v in &solve {
            m[v] = true;
        }
        m
    };
    // Chart from the pole opposite the solved cap, so the solved vertices
    // sit near the chart origin.
    let chart = |p: &Vector3<f64>| -> Option<Vector2<f64>> {
        let denom = 1.0 + flip * p.z;
        (denom > 1e-9).then(|| Vector2::new(p.x / denom, p.y / denom))
    };
    let mut slot_of = vec![usize::MAX; n];
    for (slot, &v) in solve.iter().enumerate() {
        slot_of[v] = slot;
    }
    let mut rows = Vec::with_capacity(solve.len());
    let mut vals = Vec::new();
    let mut rhs_x = vec![0.0; solve.len()];
    let mut rhs_y = vec![0.0; solve.len()];
    for (slot, &v) in solve.iter().enumerate() {
        let mut cols = Vec::new();
        for (j, w) in l.row_entries(v) {
            if in_solve[j] {
                cols.push(slot_of[j]);
                vals.push(w);
            } else {
                let h = chart(&f.points[j])?;
                rhs_x[slot] -= w * h.x;
                rhs_y[slot] -= w * h.y;
            }
        }
        rows.push(cols);
    }
    let pattern = crate::sparse::SparsityPattern::new(solve.len(), rows);
    let mut l_ii = crate::sparse::SymSparseOperator::zeros(pattern);
    l_ii.values_mut().copy_from_slice(&vals);
    let factor = LdltFactor::new(&l_ii).ok()?;
    let sol_x = factor.solve_refined(&l_ii, &rhs_x);
    let sol_y = factor.solve_refined(&l_ii, &rhs_y);
    let mut points = f.points.clone();
    for (slot, &v) in solve.iter().enumerate() {
        let (hx, hy) = (sol_x[slot], sol_y[slot]);
        let s2 = hx * hx + hy * hy;
        points[v] = Vector3::new(2.0 * hx, 2.0 * hy, flip * (1.0 - s2)) / (1.0 + s2);
    }
    Some(CartesianField { points })
}

/// Computes a bijective, roughly conformal starting field for the solver.
pub fn initial_map(mesh: &TriMesh, config: &InitConfig) -> Result<InitOutcome> {
    assert!(config.centering_max_iter >= 1);
    assert!(config.centering_tol > 0.0 && config.centering_tol < 1.0);
    let n = mesh.n_vertices();

    let angles = corner_angles(mesh)?;
    let anchor = match config.anchor_rule {
        AnchorRule::MaxMinAngle => (0..mesh.n_faces())
            .max_by(|&a, &b| {
                let ma = angles.angles[a].iter().fold(f64::INFINITY, |m, &x| m.min(x));
                let mb = angles.angles[b].iter().fold(f64::INFINITY, |m, &x| m.min(x));
                ma.partial_cmp(&mb).unwrap()
            })
            .expect("meshes have faces"),
    };
    let pinned = mesh.faces()[anchor];

    // Harmonic extension with the anchor vertices pinned to an equilateral
    // reference triangle of unit circumradius.
    let reference = [
        Vector2::new(1.0, 0.0),
        Vector2::new(-0.5, 0.75f64.sqrt()),
        Vector2::new(-0.5, -0.75f64.sqrt()),
    ];
    let l = cotangent_laplacian(mesh.positions(), mesh)?;
    let mut slot_of = vec![usize::MAX; n];
    let interior: Vec<usize> = (0..n).filter(|v| !pinned.contains(v)).collect();
    for (slot, &v) in interior.iter().enumerate() {
        slot_of[v] = slot;
    }
    let mut rows = Vec::with_capacity(interior.len());
    let mut vals = Vec::new();
    let mut rhs_x = vec![0.0; interior.len()];
    let mut rhs_y = vec![0.0; interior.len()];
    for (slot, &v) in interior.iter().enumerate() {
        let mut cols = Vec::new();
        for (j, w) in l.row_entries(v) {
            if let Some(c) = pinned.iter().position(|&p| p == j) {
                rhs_x[slot] -= w * reference[c].x;
                rhs_y[slot] -= w * reference[c].y;
            } else {
                cols.push(slot_of[j]);
                vals.push(w);
            }
        }
        rows.push(cols);
    }
    let pattern = crate::sparse::SparsityPattern::new(interior.len(), rows);
    let mut l_ii = crate::sparse::SymSparseOperator::zeros(pattern);
    l_ii.values_mut().copy_from_slice(&vals);
    let factor = LdltFactor::new(&l_ii)?;
    let sol_x = factor.solve_refined(&l_ii, &rhs_x);
    let sol_y = factor.solve_refined(&l_ii, &rhs_y);

    let mut plane = vec![Vector2::zeros(); n];
    for (c, &v) in pinned.iter().enumerate() {
        plane[v] = reference[c];
    }
    for (slot, &v) in interior.iter().enumerate() {
        plane[v] = Vector2::new(sol_x[slot], sol_y[slot]);
    }

    // Orientation: if the majority of lifted faces are reversed, mirror the
    // chart once.
    let probe = lift(&plane, 1.0, Vector2::zeros());
    if detect_foldings(mesh, &probe).fold_count() * 2 > mesh.n_faces() {
        for h in &mut plane {
            h.y = -h.y;
        }
    }

    // Chart scale and translation are the Mobius degrees of freedom that
    // move the spherical centroid. Stage one: the centroid's z component
    // increases monotonically with the scale, so bisect it toward zero.
    let mut lo = 1e-6;
    let mut hi = 1e6;
    for _ in 0..12 {
        if centroid(&lift(&plane, lo, Vector2::zeros())).z < 0.0 {
            break;
        }
        lo *= 0.1;
    }
    for _ in 0..12 {
        if centroid(&lift(&plane, hi, Vector2::zeros())).z > 0.0 {
            break;
        }
        hi *= 10.0;
    }
    for _ in 0..60 {
        let s = (lo * hi).sqrt();
        if centroid(&lift(&plane, s, Vector2::zeros())).z < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
    }
    let scale_star = (lo * hi).sqrt();

    // Stage two: damped Gauss-Newton on (log scale, shift) drives the full
    // centroid toward zero; the scale bisection above seeds it.
    let mut params = nalgebra::Vector3::new(scale_star.ln(), 0.0, 0.0);
    let lift_params = |p: &nalgebra::Vector3<f64>| {
        lift(&plane, p.x.exp(), Vector2::new(p.y, p.z))
    };
    let mut best_params = params;
    let mut best_norm = centroid(&lift_params(&params)).norm();
    for _ in 0..config.centering_max_iter {
        let c = centroid(&lift_params(&params));
        if c.norm() <= config.centering_tol && c.norm() >= best_norm {
            break;
        }
        let h = 1e-6;
        let mut jac = nalgebra::Matrix3::<f64>::zeros();
        for k in 0..3 {
            let mut probe = params;
            probe[k] += h;
            let cp = centroid(&lift_params(&probe));
            for r in 0..3 {
                jac[(r, k)] = (cp[r] - c[r]) / h;
            }
        }
        let step = match jac.lu().solve(&(-c)) {
            Some(s) => s,
            None => break,
        };
        // Backtrack until the centroid norm improves.
        let mut damping = 1.0;
        let mut moved = false;
        for _ in 0..8 {
            let cand = params + damping * step;
            let norm = centroid(&lift_params(&cand)).norm();
            if norm < best_norm {
                best_norm = norm;
                best_params = cand;
                params = cand;
                moved = true;
                break;
            }
            damping *= 0.5;
        }
        if !moved {
            break;
        }
        if best_norm <= 0.01 * config.centering_tol {
            break;
        }
    }
    let f = lift_params(&best_params);
    let mut centered = best_norm <= config.centering_tol;

    // Polish each hemisphere with one corrective harmonic solve (the raw
    // punctured map is poor near the anchor, and the far hemisphere inherits
    // that error); each pass is kept only when it lowers the energy.
    let energy_of = |cf: &CartesianField| -> Result<f64> {
        let field = from_cartesian(cf);
        Ok(crate::energy::build_energy_state(mesh, &l, &field)?.energy)
    };
    let mut f = f;
    for north in [true, false] {
        if let Some(corrected) = cap_correction(mesh, &l, &f, north) {
            if let (Ok(e0), Ok(e1)) = (energy_of(&f), energy_of(&corrected)) {
                if e1 < e0 {
                    f = corrected;
                    centered = centroid(&f).norm() <= config.centering_tol;
                }
            }
        }
    }

    let centroid_norm = centroid(&f).norm();
    let field = from_cartesian(&f);
    let safe = rotate_away_from_poles(&field, EPS_POLE)?;
    let fold_count = {
        let (final_f, _) = crate::sphere::to_cartesian(&safe.field);
        detect_foldings(mesh, &final_f).fold_count()
    };
    Ok(InitOutcome {
        field: safe.field,
        fold_count,
        centered,
        centroid_norm,
    })
}
