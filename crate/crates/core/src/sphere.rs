//! Spherical-coordinate representation of the map, trigonometric caches, and
//! SO(3) alignment utilities.
//!
//! A point on the unit sphere is stored as azimuth `theta` and colatitude
//! `phi` with x = cos(theta) sin(phi), y = sin(theta) sin(phi), z = cos(phi).
//! The coordinate chart degenerates at the poles (sin(phi) = 0), so fields
//! are kept pole-safe by a global rotation, which leaves the conformal
//! energy invariant.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Minimum allowed |sin(phi)| after pole-safety normalization.
pub const EPS_POLE: f64 = 1e-3;

/// Per-vertex azimuth/colatitude pair; the optimization variables.
#[derive(Debug, Clone)]
pub struct SphericalField {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl SphericalField {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Field shifted by a step vector laid out as [theta block; phi block].
    pub fn stepped(&self, d: &[f64]) -> SphericalField {
        let n = self.len();
        assert_eq!(d.len(), 2 * n);
        SphericalField {
            theta: self.theta.iter().enumerate().map(|(i, t)| t + d[i]).collect(),
            phi: self.phi.iter().enumerate().map(|(i, p)| p + d[n + i]).collect(),
        }
    }

    pub fn min_abs_sin_phi(&self) -> f64 {
        self.phi
            .iter()
            .map(|p| p.sin().abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// The six per-vertex trigonometric products that the gradient and Hessian
/// formulas are written in.
#[derive(Debug, Clone)]
pub struct TrigCache {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

/// Per-vertex unit vectors: the image of the mesh on the sphere.
#[derive(Debug, Clone)]
pub struct CartesianField {
    pub points: Vec<Vector3<f64>>,
}

impl CartesianField {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rotated(&self, r: &Matrix3<f64>) -> CartesianField {
        // Row-vector convention: p <- p R, i.e. R^T p for column vectors.
        CartesianField {
            points: self.points.iter().map(|p| r.transpose() * p).collect(),
        }
    }
}

pub fn to_cartesian(field: &SphericalField) -> (CartesianField, TrigCache) {
    let n = field.len();
    let mut cache = TrigCache {
        x: vec![0.0; n],
        y: vec![0.0; n],
        z: vec![0.0; n],
        u: vec![0.0; n],
        v: vec![0.0; n],
        w: vec![0.0; n],
    };
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let (st, ct) = field.theta[i].sin_cos();
        let (sp, cp) = field.phi[i].sin_cos();
        cache.x[i] = ct * sp;
        cache.y[i] = st * sp;
        cache.z[i] = cp;
        cache.u[i] = ct * cp;
        cache.v[i] = st * cp;
        cache.w[i] = sp;
        points.push(Vector3::new(cache.x[i], cache.y[i], cache.z[i]));
    }
    (CartesianField { points }, cache)
}

/// Inverse of [`to_cartesian`]: phi = arccos(z) in [0, pi], theta = atan2
/// wrapped to [0, 2 pi). Theta is arbitrary (0) at the poles.
pub fn from_cartesian(f: &CartesianField) -> SphericalField {
    let mut theta = Vec::with_capacity(f.len());
    let mut phi = Vec::with_capacity(f.len());
    for p in &f.points {
        let mut t = p.y.atan2(p.x);
        if t < 0.0 {
            t += 2.0 * std::f64::consts::PI;
        }
        theta.push(t);
        phi.push(p.z.clamp(-1.0, 1.0).acos());
    }
    SphericalField { theta, phi }
}

/// Result of an orthogonal Procrustes alignment.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// Proper rotation, det = +1, applied on the right of row vectors.
    pub rotation: Matrix3<f64>,
    /// Set when the cross-covariance is rank-deficient and the minimizer is
    /// not unique; the returned rotation is still a valid minimizer.
    pub degenerate: bool,
}

/// Rotation minimizing ||B - A R||_F over SO(3) for row-stacked point sets,
/// via SVD of the cross-covariance with determinant correction.
pub fn optimal_rotation(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Alignment {
    assert_eq!(a.len(), b.len());
    assert!(a.len() >= 3, "need at least three point pairs");
    let mut m = Matrix3::<f64>::zeros();
    for (pa, pb) in a.iter().zip(b) {
        m += pa * pb.transpose();
    }
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u");
    let vt = svd.v_t.expect("svd with v_t");
    let sigma = svd.singular_values;

    let max_sigma = sigma.iter().fold(0.0f64, |m, s| m.max(*s));
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let smallest = order[2];
    let degenerate = sigma[order[1]] <= 1e-12 * max_sigma.max(f64::MIN_POSITIVE);

    let d = (u * vt).determinant();
    let mut u = u;
    if d < 0.0 {
        // Flip the singular direction that costs least.
        for r in 0..3 {
            u[(r, smallest)] = -u[(r, smallest)];
        }
    }
    // Row convention: b ~ a R with R = (U V^T)^T ... derive: trace argument
    // maximizes tr(R^T M) with M = sum a b^T, so R = U V^T acts as
    // b_i^T ~ R^T a_i^T, i.e. row form b_i ~ a_i R with this same R.
    let rotation = u * vt;
    Alignment {
        rotation,
        degenerate,
    }
}

/// Rotation-minimized squared Frobenius distance between two sphere
/// configurations; the solver's stopping quantity.
pub fn alignment_error(f_prev: &CartesianField, f_next: &CartesianField) -> f64 {
    assert_eq!(f_prev.len(), f_next.len());
    let al = optimal_rotation(&f_prev.points, &f_next.points);
    let r = al.rotation;
    let mut acc = 0.0;
    for (p, q) in f_prev.points.iter().zip(&f_next.points) {
        let moved = r.transpose() * p;
        acc += (q - moved).norm_squared();
    }
    acc
}

/// Rotation matrix whose third column is `axis`; rotating a field by it makes
/// `axis` the new pole direction.
fn rotation_with_pole(axis: &Vector3<f64>) -> Matrix3<f64> {
    let d = axis.normalize();
    let helper = if d.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = (helper - d * helper.dot(&d)).normalize();
    let e2 = d.cross(&e1);
    Matrix3::from_columns(&[e1, e2, d])
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn unit_from_bits(state: &mut u64) -> Vector3<f64> {
    loop {
        let fx = |s: &mut u64| (splitmix64(s) >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
        let v = Vector3::new(fx(state), fx(state), fx(state));
        let n = v.norm();
        if n > 1e-3 && n < 1.0 {
            return v / n;
        }
    }
}

/// Outcome of pole-safety normalization.
#[derive(Debug, Clone)]
pub struct PoleSafe {
    pub field: SphericalField,
    /// The rotation that was applied to the Cartesian points, if any.
    pub rotation: Option<Matrix3<f64>>,
}

/// Ensures min |sin phi| >= `eps_pole` by a global rotation if necessary.
/// The rotation candidates are a fixed direction sweep followed by 50 seeded
/// pseudo-random directions; the search is deterministic.
pub fn rotate_away_from_poles(field: &SphericalField, eps_pole: f64) -> Result<PoleSafe> {
    if field.min_abs_sin_phi() >= eps_pole {
        return Ok(PoleSafe {
            field: field.clone(),
            rotation: None,
        });
    }
    let (f, _) = to_cartesian(field);
    let margin = |axis: &Vector3<f64>| {
        f.points
            .iter()
            .map(|p| p.cross(axis).norm())
            .fold(f64::INFINITY, f64::min)
    };

    let mut candidates: Vec<Vector3<f64>> = Vec::with_capacity(114);
    // Fibonacci sweep covers the sphere roughly uniformly.
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    for k in 0..64 {
        let z = 1.0 - 2.0 * (k as f64 + 0.5) / 64.0;
        let r = (1.0 - z * z).sqrt();
        let t = golden * k as f64;
        candidates.push(Vector3::new(r * t.cos(), r * t.sin(), z));
    }
    let mut rng_state = 0x5eed_c0de_u64;
    for _ in 0..50 {
        candidates.push(unit_from_bits(&mut rng_state));
    }

    let mut best_axis = candidates[0];
    let mut best = -1.0;
    for axis in &candidates {
        let m = margin(axis);
        if m > best {
            best = m;
            best_axis = *axis;
        }
    }
    if best < eps_pole {
        return Err(Error::PoleRotationFailed {
            best,
            required: eps_pole,
        });
    }
    let r = rotation_with_pole(&best_axis);
    // Row convention f <- f R with R's columns the new frame axes, so the new
    // z coordinate is the projection onto the chosen axis.
    let rotated = CartesianField {
        points: f.points.iter().map(|p| r.transpose() * p).collect(),
    };
    Ok(PoleSafe {
        field: from_cartesian(&rotated),
        rotation: Some(r),
    })
}
