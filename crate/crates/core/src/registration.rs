//! Landmark-driven spherical conformal registration.
//!
//! A moving surface is registered to a fixed one by minimizing the conformal
//! energy plus a weighted landmark loss, the mean squared chordal distance
//! between selected mapped vertices and target points on the fixed sphere.
//! The trust-region machinery is shared with the plain solve: the landmark
//! loss contributes an analytic gradient and 2x2 diagonal Hessian blocks,
//! and each accepted step is followed by the landmark-optimal rotation
//! (which leaves the conformal energy unchanged). The composed registration
//! map is pulled back to the fixed surface through barycentric coordinates.

use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::energy::EnergyState;
use crate::error::{Error, Result};
use crate::hbtr::{hbtr_solve, run_trust_region, Augmentation, SolveResult, TrustRegionConfig};
use crate::init::{initial_map, InitConfig};
use crate::mesh::TriMesh;
use crate::sparse::SymSparseOperator;
use crate::sphere::{optimal_rotation, to_cartesian, CartesianField, SphericalField};

/// Landmark correspondences: moving-vertex indices with target points on the
/// unit sphere.
#[derive(Debug, Clone)]
pub struct LandmarkSet {
    pub moving: Vec<usize>,
    pub targets: Vec<Vector3<f64>>,
}

/// A raw landmark row: either a vertex-to-vertex correspondence (resolved
/// through the fixed sphere) or a direct target point.
#[derive(Debug, Clone)]
pub enum LandmarkSpec {
    VertexPair { moving: usize, fixed: usize },
    Point { moving: usize, target: Vector3<f64> },
}

impl LandmarkSet {
    /// Resolves raw specs against the fixed sphere map and validates.
    pub fn resolve(
        specs: &[LandmarkSpec],
        fixed_sphere: &CartesianField,
        n_moving: usize,
    ) -> Result<LandmarkSet> {
        let mut moving = Vec::with_capacity(specs.len());
        let mut targets = Vec::with_capacity(specs.len());
        for spec in specs {
            let (mv, target) = match spec {
                LandmarkSpec::VertexPair { moving, fixed } => {
                    if *fixed >= fixed_sphere.len() {
                        return Err(Error::Landmark(format!(
                            "fixed index {fixed} out of range {}",
                            fixed_sphere.len()
                        )));
                    }
                    (*moving, fixed_sphere.points[*fixed])
                }
                LandmarkSpec::Point { moving, target } => (*moving, *target),
            };
            if mv >= n_moving {
                return Err(Error::Landmark(format!(
                    "moving index {mv} out of range {n_moving}"
                )));
            }
            let norm = target.norm();
            if (norm - 1.0).abs() > 1e-3 {
                return Err(Error::Landmark(format!(
                    "target point for vertex {mv} is not on the unit sphere (norm {norm:.6})"
                )));
            }
            moving.push(mv);
            targets.push(target / norm);
        }
        let mut seen = moving.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != moving.len() {
            return Err(Error::Landmark("duplicate moving indices".into()));
        }
        if moving.len() < 3 {
            return Err(Error::Landmark(format!(
                "need at least 3 landmarks, got {}",
                moving.len()
            )));
        }
        Ok(LandmarkSet { moving, targets })
    }

    pub fn len(&self) -> usize {
        self.moving.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moving.is_empty()
    }
}

/// Parses the landmark CSV: `moving_idx,fixed_idx` or
/// `moving_idx,px,py,pz`, 0-based, `#` comments and a header line allowed.
pub fn parse_landmark_csv(text: &str) -> Result<Vec<LandmarkSpec>> {
    let mut specs = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_usize = |s: &str| -> Option<usize> { s.parse().ok() };
        let parse_f64 = |s: &str| -> Option<f64> { s.parse().ok() };
        match fields.len() {
            2 => {
                match (parse_usize(fields[0]), parse_usize(fields[1])) {
                    (Some(m), Some(f)) => specs.push(LandmarkSpec::VertexPair {
                        moving: m,
                        fixed: f,
                    }),
                    _ if ln == 0 => continue, // header
                    _ => {
                        return Err(Error::Landmark(format!("bad row {}: {line}", ln + 1)));
                    }
                }
            }
            4 => match (
                parse_usize(fields[0]),
                parse_f64(fields[1]),
                parse_f64(fields[2]),
                parse_f64(fields[3]),
            ) {
                (Some(m), Some(x), Some(y), Some(z)) => specs.push(LandmarkSpec::Point {
                    moving: m,
                    target: Vector3::new(x, y, z),
                }),
                _ if ln == 0 => continue,
                _ => return Err(Error::Landmark(format!("bad row {}: {line}", ln + 1))),
            },
            _ if ln == 0 => continue,
            _ => return Err(Error::Landmark(format!("bad row {}: {line}", ln + 1))),
        }
    }
    Ok(specs)
}

pub fn load_landmark_csv(path: impl AsRef<Path>) -> Result<Vec<LandmarkSpec>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_landmark_csv(&text)
}

#[derive(Debug, Clone)]
pub struct RegConfig {
    pub lambda: f64,
    pub trust_region: TrustRegionConfig,
    pub init: InitConfig,
}

impl Default for RegConfig {
    fn default() -> Self {
        RegConfig {
            lambda: 5.0,
            trust_region: TrustRegionConfig::default(),
            init: InitConfig::default(),
        }
    }
}

/// Mean squared chordal distance between mapped landmarks and their targets.
pub fn registration_loss(f: &CartesianField, lm: &LandmarkSet) -> f64 {
    if lm.is_empty() {
        return 0.0;
    }
    let acc: f64 = lm
        .moving
        .iter()
        .zip(&lm.targets)
        .map(|(&v, t)| (f.points[v] - t).norm_squared())
        .sum();
    acc / (2.0 * lm.len() as f64)
}

/// Per-landmark gradient entries in (theta, phi) at the landmark's vertex.
pub type LandmarkGradients = Vec<(usize, [f64; 2])>;
/// Per-landmark 2x2 Hessian blocks at the landmark's vertex.
pub type LandmarkHessians = Vec<(usize, Matrix2<f64>)>;

/// Additive gradient and Hessian of lambda times the landmark loss in
/// (theta, phi). The Hessian contributions are exact (Gauss-Newton part plus
/// the residual-weighted curvature of the sphere chart) and touch only the
/// per-landmark 2x2 diagonal blocks.
pub fn reg_gradient_hessian(
    state: &EnergyState,
    lm: &LandmarkSet,
    lambda: f64,
) -> (LandmarkGradients, LandmarkHessians) {
    let mut grads = Vec::with_capacity(lm.len());
    let mut hessians = Vec::with_capacity(lm.len());
    if lambda == 0.0 || lm.is_empty() {
        return (grads, hessians);
    }
    let scale = lambda / lm.len() as f64;
    let c = &state.cache;
    for (&v, target) in lm.moving.iter().zip(&lm.targets) {
        let r = state.f.points[v] - target;
        // Jacobian of the chart at vertex v: columns d f / d theta, d f / d phi.
        let jt = Vector3::new(-c.y[v], c.x[v], 0.0);
        let jp = Vector3::new(c.u[v], c.v[v], -c.w[v]);
        let g = [scale * jt.dot(&r), scale * jp.dot(&r)];
        // Exact second derivatives of the chart contracted with the residual.
        let rx = r.x;
        let ry = r.y;
        let rz = r.z;
        let curv_tt = -(rx * c.x[v] + ry * c.y[v]);
        let curv_tp = -rx * c.v[v] + ry * c.u[v];
        let curv_pp = -(rx * c.x[v] + ry * c.y[v] + rz * c.z[v]);
        let h = Matrix2::new(
            jt.dot(&jt) + curv_tt,
            jt.dot(&jp) + curv_tp,
            jt.dot(&jp) + curv_tp,
            jp.dot(&jp) + curv_pp,
        ) * scale;
        grads.push((v, g));
        hessians.push((v, h));
    }
    (grads, hessians)
}

/// Applies the landmark-optimal rotation to the whole field; the landmark
/// loss cannot increase. Skipped (with the identity returned) when the
/// landmark geometry is degenerate.
pub fn landmark_rotation(f: &CartesianField, lm: &LandmarkSet) -> (CartesianField, bool) {
    let a: Vec<Vector3<f64>> = lm.moving.iter().map(|&v| f.points[v]).collect();
    let alignment = optimal_rotation(&a, &lm.targets);
    if alignment.degenerate {
        return (f.clone(), false);
    }
    (f.rotated(&alignment.rotation), true)
}

struct RegAugment {
    lm: LandmarkSet,
    lambda: f64,
    /// Accumulated frame rotation (row convention) applied by pole safety;
    /// undone at the end so the result lives in the fixed sphere's frame.
    frame: Matrix3<f64>,
}

impl Augmentation for RegAugment {
    fn extra_energy(&self, f: &CartesianField) -> f64 {
        self.lambda * registration_loss(f, &self.lm)
    }

    fn augment(&self, state: &EnergyState, g: &mut [f64], h: &mut SymSparseOperator) {
        let n = state.f.len();
        let (grads, hessians) = reg_gradient_hessian(state, &self.lm, self.lambda);
        for (v, gv) in grads {
            g[v] += gv[0];
            g[n + v] += gv[1];
        }
        for (v, hv) in hessians {
            h.add_at(v, v, hv[(0, 0)]);
            h.add_at(v, n + v, hv[(0, 1)]);
            h.add_at(n + v, v, hv[(1, 0)]);
            h.add_at(n + v, n + v, hv[(1, 1)]);
        }
    }

    fn augment_gradient(&self, state: &EnergyState, g: &mut [f64]) {
        let n = state.f.len();
        let (grads, _) = reg_gradient_hessian(state, &self.lm, self.lambda);
        for (v, gv) in grads {
            g[v] += gv[0];
            g[n + v] += gv[1];
        }
    }

    fn after_accept(&mut self, field: SphericalField) -> SphericalField {
        if self.lambda == 0.0 {
            return field;
        }
        let (f, _) = to_cartesian(&field);
        let (rotated, applied) = landmark_rotation(&f, &self.lm);
        if applied {
            crate::sphere::from_cartesian(&rotated)
        } else {
            field
        }
    }

    fn rotate_frame(&mut self, r: &Matrix3<f64>) {
        // Targets follow the frame so the loss is invariant.
        for t in &mut self.lm.targets {
            *t = r.transpose() * *t;
        }
        self.frame *= r;
    }
}

/// Barycentric location of each registered vertex on the fixed sphere plus
/// the pulled-back position on the fixed surface.
#[derive(Debug, Clone)]
pub struct PullbackEntry {
    pub face: usize,
    pub weights: [f64; 3],
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct PullbackResult {
    pub entries: Vec<PullbackEntry>,
    /// Vertices that fell outside every face test and used the nearest face.
    pub fallbacks: usize,
}

/// Locates each point of `moving_sphere` in the fixed sphere triangulation
/// and interpolates the fixed surface positions.
pub fn barycentric_pullback(
    fixed: &TriMesh,
    fixed_sphere: &CartesianField,
    moving_sphere: &CartesianField,
) -> PullbackResult {
    let mut entries = Vec::with_capacity(moving_sphere.len());
    let mut fallbacks = 0;
    for q in &moving_sphere.points {
        let mut best_face = 0;
        let mut best_sign = f64::NEG_INFINITY;
        for (fi, &[a, b, c]) in fixed.faces().iter().enumerate() {
            let (pa, pb, pc) = (
                fixed_sphere.points[a],
                fixed_sphere.points[b],
                fixed_sphere.points[c],
            );
            let s1 = Matrix3::from_columns(&[pa, pb, *q]).determinant();
            let s2 = Matrix3::from_columns(&[pb, pc, *q]).determinant();
            let s3 = Matrix3::from_columns(&[pc, pa, *q]).determinant();
            let min_sign = s1.min(s2).min(s3);
            if min_sign > best_sign {
                best_sign = min_sign;
                best_face = fi;
            }
        }
        if best_sign < -1e-9 {
            fallbacks += 1;
        }
        let [a, b, c] = fixed.faces()[best_face];
        let m = Matrix3::from_columns(&[
            fixed_sphere.points[a],
            fixed_sphere.points[b],
            fixed_sphere.points[c],
        ]);
        let w = m.lu().solve(q).unwrap_or_else(|| Vector3::new(1.0, 1.0, 1.0) / 3.0);
        let sum = w.x + w.y + w.z;
        let weights = if sum.abs() > 1e-300 {
            [w.x / sum, w.y / sum, w.z / sum]
        } else {
            [1.0 / 3.0; 3]
        };
        let position = weights[0] * fixed.positions()[a]
            + weights[1] * fixed.positions()[b]
            + weights[2] * fixed.positions()[c];
        entries.push(PullbackEntry {
            face: best_face,
            weights,
            position,
        });
    }
    PullbackResult {
        entries,
        fallbacks,
    }
}

/// Full registration outcome.
#[derive(Debug)]
pub struct RegistrationResult {
    pub solve: SolveResult,
    pub pullback: PullbackResult,
    pub registration_loss: f64,
    pub lambda: f64,
}

/// Registers `moving` to `fixed`: parameterizes the fixed surface, resolves
/// the landmarks on its sphere, minimizes the combined objective from the
/// moving surface's initial map, and pulls the result back to the fixed
/// surface.
pub fn hbtr_register(
    fixed: &TriMesh,
    moving: &TriMesh,
    specs: &[LandmarkSpec],
    config: &RegConfig,
) -> Result<(RegistrationResult, SolveResult)> {
    let fixed_init = initial_map(fixed, &config.init)?;
    let fixed_solve = hbtr_solve(fixed, &fixed_init.field, &config.trust_region)?;
    let result = hbtr_register_with_fixed(fixed, &fixed_solve, moving, specs, config)?;
    Ok((result, fixed_solve))
}

/// Registration against an already-parameterized fixed surface; several
/// moving surfaces can share one fixed solve.
pub fn hbtr_register_with_fixed(
    fixed: &TriMesh,
    fixed_solve: &SolveResult,
    moving: &TriMesh,
    specs: &[LandmarkSpec],
    config: &RegConfig,
) -> Result<RegistrationResult> {
    if !(config.lambda.is_finite() && config.lambda >= 0.0) {
        return Err(Error::Landmark(format!(
            "lambda must be finite and nonnegative, got {}",
            config.lambda
        )));
    }
    let lm = LandmarkSet::resolve(specs, &fixed_solve.map, moving.n_vertices())?;

    let init = initial_map(moving, &config.init)?;
    let start = if config.lambda > 0.0 {
        let (f, _) = to_cartesian(&init.field);
        let (rotated, _) = landmark_rotation(&f, &lm);
        crate::sphere::from_cartesian(&rotated)
    } else {
        init.field
    };

    let mut aug = RegAugment {
        lm,
        lambda: config.lambda,
        frame: Matrix3::identity(),
    };
    let mut solve = run_trust_region(moving, &start, &config.trust_region, &mut aug)?;

    // Undo any accumulated pole-safety frame rotation so the map lives on
    // the fixed sphere.
    if (aug.frame - Matrix3::identity()).norm() > 0.0 {
        let back = aug.frame.transpose();
        solve.map = solve.map.rotated(&back);
        solve.field = crate::sphere::from_cartesian(&solve.map);
        for t in &mut aug.lm.targets {
            *t = back.transpose() * *t;
        }
    }

    let loss = registration_loss(&solve.map, &aug.lm);
    let pullback = barycentric_pullback(fixed, &fixed_solve.map, &solve.map);
    Ok(RegistrationResult {
        solve,
        pullback,
        registration_loss: loss,
        lambda: config.lambda,
    })
}
