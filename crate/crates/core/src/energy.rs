//! Discrete conformal energy on the sphere, its analytic gradient in
//! spherical coordinates, and the sparse Hessian.
//!
//! The energy of a map f is the Dirichlet energy minus the image area,
//! E = 1/2 <(L - L(f)) f, f>, where L is the source cotangent Laplacian and
//! L(f) the Laplacian of the image triangles. Writing D = L - L(f) and
//! p = D x, q = D y, r = D z, the gradient in (theta, phi) is
//! [-y.p + x.q ; u.p + v.q - w.r]. The Hessian decomposes into per-triangle
//! terms (scaled by inverse image areas) plus per-edge terms weighted by the
//! cotangent-weight differences; both live on the pattern of 1_{2x2} (x) L.

use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::{face_cotangents, TriMesh};
use crate::sparse::{SparsityPattern, SymSparseOperator};
use crate::sphere::{to_cartesian, CartesianField, SphericalField, TrigCache};

/// Cached per-iterate quantities shared by the energy, gradient and Hessian.
#[derive(Debug, Clone)]
pub struct EnergyState {
    pub cache: TrigCache,
    pub f: CartesianField,
    /// Image triangle areas.
    pub face_areas: Vec<f64>,
    /// Image cotangents; `face_cots[f][c]` is the cotangent of the image
    /// angle at corner `c`, the angle opposite edge (c+1, c+2).
    pub face_cots: Vec<[f64; 3]>,
    /// Target Laplacian L(f).
    pub l_f: SymSparseOperator,
    /// D(f) = L - L(f), same pattern as L.
    pub d_f: SymSparseOperator,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub energy: f64,
}

pub fn build_energy_state(
    mesh: &TriMesh,
    l: &SymSparseOperator,
    field: &SphericalField,
) -> Result<EnergyState> {
    assert_eq!(field.len(), mesh.n_vertices());
    let (f, cache) = to_cartesian(field);
    let (face_areas, face_cots) = face_cotangents(&f.points, mesh.faces(), |face, area| {
        Error::DegenerateImageTriangle { face, area }
    })?;

    let mut l_f = SymSparseOperator::zeros(mesh.laplacian_pattern().clone());
    for (fi, &[i, j, k]) in mesh.faces().iter().enumerate() {
        let corners = [i, j, k];
        for c in 0..3 {
            let w = 0.5 * face_cots[fi][c];
            let (u, v) = (corners[(c + 1) % 3], corners[(c + 2) % 3]);
            l_f.add_at(u, v, -w);
            l_f.add_at(v, u, -w);
            l_f.add_at(u, u, w);
            l_f.add_at(v, v, w);
        }
    }
    let d_f = l.sub(&l_f);
    let p = d_f.mul_vec_alloc(&cache.x);
    let q = d_f.mul_vec_alloc(&cache.y);
    let r = d_f.mul_vec_alloc(&cache.z);
    // The three dots cancel heavily near the optimum; compensated summation
    // keeps the evaluation noise well below the solver's acceptance ties.
    let energy = 0.5
        * (kahan_dot(&cache.x, &p) + kahan_dot(&cache.y, &q) + kahan_dot(&cache.z, &r));
    Ok(EnergyState {
        cache,
        f,
        face_areas,
        face_cots,
        l_f,
        d_f,
        p,
        q,
        r,
        energy,
    })
}

fn kahan_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (x, y) in a.iter().zip(b) {
        let term = x * y - comp;
        let next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    sum
}

/// Image area as the sum of cross-product triangle areas. Coincides with
/// 1/2 <L(f) f, f>.
pub fn image_area(state: &EnergyState) -> f64 {
    state.face_areas.iter().sum()
}

/// Analytic gradient of the energy in (theta, phi), theta block first.
pub fn energy_gradient(state: &EnergyState) -> Vec<f64> {
    let n = state.f.len();
    let c = &state.cache;
    let mut g = vec![0.0; 2 * n];
    for i in 0..n {
        g[i] = -c.y[i] * state.p[i] + c.x[i] * state.q[i];
        g[n + i] = c.u[i] * state.p[i] + c.v[i] * state.q[i] - c.w[i] * state.r[i];
    }
    g
}

/// Per-face Jacobian-projected edge differences and image-area partials.
/// Corner c of a face owns the edge opposite to it: `edges[c]` is
/// f_{c+1} - f_{c+2}, `a[c][e]` and `b[c][e]` are the theta- and phi-
/// directional projections of `edges[e]` at corner c's vertex, and
/// `d_theta[c]`, `d_phi[c]` are the partials of the image area.
#[derive(Debug, Clone)]
pub struct FaceDifferentials {
    pub edges: [Vector3<f64>; 3],
    pub a: [[f64; 3]; 3],
    pub b: [[f64; 3]; 3],
    pub d_area_f: [Vector3<f64>; 3],
    pub d_theta: [f64; 3],
    pub d_phi: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct TrigDifferentials {
    pub faces: Vec<FaceDifferentials>,
}

pub fn trig_differentials(mesh: &TriMesh, state: &EnergyState) -> TrigDifferentials {
    let c = &state.cache;
    let mut faces = Vec::with_capacity(mesh.n_faces());
    for (fi, &[i, j, k]) in mesh.faces().iter().enumerate() {
        let corners = [i, j, k];
        let pt = |v: usize| state.f.points[v];
        let edges = [
            pt(corners[1]) - pt(corners[2]),
            pt(corners[2]) - pt(corners[0]),
            pt(corners[0]) - pt(corners[1]),
        ];
        let mut a = [[0.0; 3]; 3];
        let mut b = [[0.0; 3]; 3];
        for s in 0..3 {
            let v = corners[s];
            for e in 0..3 {
                a[s][e] = -c.y[v] * edges[e].x + c.x[v] * edges[e].y;
                b[s][e] = c.u[v] * edges[e].x + c.v[v] * edges[e].y - c.w[v] * edges[e].z;
            }
        }
        let cot = state.face_cots[fi];
        let mut d_area_f = [Vector3::zeros(); 3];
        let mut d_theta = [0.0; 3];
        let mut d_phi = [0.0; 3];
        for s in 0..3 {
            let (nx, pv) = ((s + 1) % 3, (s + 2) % 3);
            d_area_f[s] = 0.5 * (cot[pv] * edges[pv] - cot[nx] * edges[nx]);
            d_theta[s] = 0.5 * (cot[pv] * a[s][pv] - cot[nx] * a[s][nx]);
            d_phi[s] = 0.5 * (cot[pv] * b[s][pv] - cot[nx] * b[s][nx]);
        }
        faces.push(FaceDifferentials {
            edges,
            a,
            b,
            d_area_f,
            d_theta,
            d_phi,
        });
    }
    TrigDifferentials { faces }
}

/// Pattern of the Hessian: 1_{2x2} (x) pattern(L), theta block first.
pub fn hessian_pattern(mesh: &TriMesh) -> Arc<SparsityPattern> {
    mesh.hessian_pattern_cell()
        .get_or_init(|| {
            let n = mesh.n_vertices();
            let lp = mesh.laplacian_pattern();
            let mut rows = Vec::with_capacity(2 * n);
            for i in 0..n {
                let mut cols: Vec<usize> = lp.row(i).to_vec();
                cols.extend(lp.row(i).iter().map(|&j| n + j));
                rows.push(cols);
            }
            for i in 0..n {
                let mut cols: Vec<usize> = lp.row(i).to_vec();
                cols.extend(lp.row(i).iter().map(|&j| n + j));
                rows.push(cols);
            }
            SparsityPattern::new(2 * n, rows)
        })
        .clone()
}

/// Assembles the 2n x 2n Hessian of the energy in (theta, phi).
pub fn energy_hessian(
    mesh: &TriMesh,
    state: &EnergyState,
    diffs: &TrigDifferentials,
) -> SymSparseOperator {
    let n = mesh.n_vertices();
    let mut h = SymSparseOperator::zeros(hessian_pattern(mesh));
    let c = &state.cache;

    // Per-triangle terms, one uniform formula for every ordered corner pair;
    // the diagonal is the s = t case.
    for (fi, face) in mesh.faces().iter().enumerate() {
        let d = &diffs.faces[fi];
        let inv4a = 1.0 / (4.0 * state.face_areas[fi]);
        for s in 0..3 {
            let vs = face[s];
            for t in 0..3 {
                let vt = face[t];
                let htt = inv4a
                    * (4.0 * d.d_theta[s] * d.d_theta[t] + 2.0 * d.a[s][t] * d.a[t][s]
                        - d.a[s][s] * d.a[t][t]);
                let hpp = inv4a
                    * (4.0 * d.d_phi[s] * d.d_phi[t] + 2.0 * d.b[s][t] * d.b[t][s]
                        - d.b[s][s] * d.b[t][t]);
                let hpt = inv4a
                    * (4.0 * d.d_phi[s] * d.d_theta[t] + 2.0 * d.b[s][t] * d.a[t][s]
                        - d.b[s][s] * d.a[t][t]);
                h.add_at(vs, vt, htt);
                h.add_at(n + vs, n + vt, hpp);
                h.add_at(n + vs, vt, hpt);
                h.add_at(vt, n + vs, hpt);
            }
        }
    }

    // Per-edge terms from the cotangent-weight differences. Off-diagonals of
    // D are -w~_ij; diagonal contributions accumulate over the row.
    for i in 0..n {
        for (j, dij) in state.d_f.row_entries(i) {
            if j == i {
                continue;
            }
            let wt = -dij;
            let ttt = wt * (c.x[i] * c.x[j] + c.y[i] * c.y[j]);
            h.add_at(i, j, -ttt);
            h.add_at(i, i, ttt);

            let tpp_off = wt * (c.u[i] * c.u[j] + c.v[i] * c.v[j] + c.w[i] * c.w[j]);
            let tpp_diag = wt * (c.x[i] * c.x[j] + c.y[i] * c.y[j] + c.z[i] * c.z[j]);
            h.add_at(n + i, n + j, -tpp_off);
            h.add_at(n + i, n + i, tpp_diag);

            let tpt = wt * (c.v[i] * c.x[j] - c.u[i] * c.y[j]);
            h.add_at(n + i, j, -tpt);
            h.add_at(n + i, i, tpt);
            h.add_at(j, n + i, -tpt);
            h.add_at(i, n + i, tpt);
        }
    }

    // Remove the last bits of accumulation-order asymmetry.
    h.symmetrize();
    h
}

/// The Hessian of the energy with respect to the Cartesian coordinates,
/// a 3n x 3n symmetric Laplacian-like operator with nullity 3 (it annihilates
/// the three block-constant vectors). Exposed for verification.
pub fn cartesian_hessian(
    mesh: &TriMesh,
    state: &EnergyState,
    diffs: &TrigDifferentials,
) -> SymSparseOperator {
    let n = mesh.n_vertices();
    let lp = mesh.laplacian_pattern();
    let mut rows = Vec::with_capacity(3 * n);
    for block in 0..3 {
        let _ = block;
        for i in 0..n {
            let mut cols = Vec::with_capacity(3 * lp.row(i).len());
            for b in 0..3 {
                cols.extend(lp.row(i).iter().map(|&j| b * n + j));
            }
            rows.push(cols);
        }
    }
    let pattern = SparsityPattern::new(3 * n, rows);
    let mut h = SymSparseOperator::zeros(pattern);

    for (fi, face) in mesh.faces().iter().enumerate() {
        let d = &diffs.faces[fi];
        let inv4a = 1.0 / (4.0 * state.face_areas[fi]);
        for s in 0..3 {
            let vs = face[s];
            for t in 0..3 {
                let vt = face[t];
                for ca in 0..3 {
                    for cb in 0..3 {
                        let val = inv4a
                            * (4.0 * d.d_area_f[s][ca] * d.d_area_f[t][cb]
                                + 2.0 * d.edges[t][ca] * d.edges[s][cb]
                                - d.edges[s][ca] * d.edges[t][cb]);
                        h.add_at(ca * n + vs, cb * n + vt, val);
                    }
                }
            }
        }
    }
    for i in 0..n {
        for (j, dij) in state.d_f.row_entries(i) {
            for block in 0..3 {
                h.add_at(block * n + i, block * n + j, dij);
            }
        }
    }
    h.symmetrize();
    h
}
