//! Hessian-based trust-region minimization of the conformal energy.
//!
//! Each iteration assembles the gradient and sparse Hessian, solves the
//! pinned Newton system (one theta variable fixed to factor out the
//! rotational null space), and minimizes the quadratic model exactly over
//! the disk of radius Delta inside span{newton, gradient}. Steps are
//! accepted only if the energy strictly decreases; the stopping quantity is
//! the rotation-minimized squared distance between consecutive accepted
//! sphere configurations.

use std::io::Write;

use nalgebra::{Matrix2, Vector2};

use crate::energy::{
    build_energy_state, energy_gradient, energy_hessian, trig_differentials, EnergyState,
};
use crate::error::{Error, Result};
use crate::mesh::{cotangent_laplacian, TriMesh};
use crate::metrics::{full_report, DistortionReport};
use crate::postprocess::detect_foldings;
use crate::sparse::{LdltFactor, SymSparseOperator};
use crate::sphere::{
    alignment_error, rotate_away_from_poles, to_cartesian, CartesianField, SphericalField,
    EPS_POLE,
};

/// Gradients at or below this infinity norm are treated as a critical point.
const ZERO_GRADIENT: f64 = 1e-13;
/// Consecutive trust-region rejections tolerated before declaring stagnation.
const MAX_REJECTIONS: usize = 20;
/// A stagnated iteration (energy ties at every retry radius) counts as
/// converged only if the gradient has already collapsed to this level.
const NULL_STEP_GRAD_BAR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct TrustRegionConfig {
    /// Tolerance on the rotation-minimized step error.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub radius_init: f64,
    pub radius_max: f64,
    /// Reduction ratio below which the radius shrinks.
    pub rho_low: f64,
    /// Reduction ratio above which the radius may grow.
    pub rho_high: f64,
    pub shrink: f64,
    pub grow: f64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        TrustRegionConfig {
            tolerance: 1e-9,
            max_iterations: 500,
            radius_init: 1.0,
            radius_max: 100.0,
            rho_low: 0.25,
            rho_high: 0.75,
            shrink: 0.25,
            grow: 2.0,
        }
    }
}

impl TrustRegionConfig {
    fn validate(&self) {
        assert!(self.tolerance > 0.0);
        assert!(0.0 < self.rho_low && self.rho_low < self.rho_high && self.rho_high < 1.0);
        assert!(self.shrink > 0.0 && self.shrink < 1.0);
        assert!(self.grow > 1.0);
        assert!(self.radius_init > 0.0 && self.radius_init <= self.radius_max);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepType {
    /// Unconstrained minimizer of the model inside the radius.
    Interior,
    /// Minimizer on the trust-region boundary.
    Boundary,
}

impl StepType {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepType::Interior => "interior",
            StepType::Boundary => "boundary",
        }
    }
}

/// One accepted step (or the final rejected attempt on stagnation).
/// `energy` and `delta` describe the iterate reached by the step;
/// `grad_inf` is the gradient at the iterate the step started from, and
/// `radius` is the trust-region radius after the update.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub energy: f64,
    pub grad_inf: f64,
    pub delta: f64,
    pub radius: f64,
    pub step_type: StepType,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
}

impl SolveTrace {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "iter,energy,grad_inf,delta,radius,step_type,accepted")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
                r.iter, r.energy, r.grad_inf, r.delta, r.radius, r.step_type.as_str(), r.accepted
            )?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SolveResult {
    pub field: SphericalField,
    pub map: CartesianField,
    pub trace: SolveTrace,
    pub converged: bool,
    pub fold_count: usize,
    pub iterations: usize,
    pub final_energy: f64,
    pub final_grad_inf: f64,
    pub final_delta: f64,
    pub distortion: DistortionReport,
}

/// Solves the pinned Newton system: the theta row and column `pin` are
/// removed, the reduced system is factored by sparse LDL^T with fill-reducing
/// ordering, and a zero is reinserted at the pinned slot.
pub fn newton_direction(h: &SymSparseOperator, g: &[f64], pin: usize) -> Result<Vec<f64>> {
    let m = h.n_rows();
    assert_eq!(g.len(), m);
    assert!(pin < m / 2, "pin must index a theta variable");
    let reduced = h.delete_row_col(pin);
    let rhs: Vec<f64> = g
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != pin)
        .map(|(_, &v)| -v)
        .collect();
    let factor = LdltFactor::new(&reduced)?;
    let sol = factor.solve_refined(&reduced, &rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "newton direction",
        });
    }
    let mut s = Vec::with_capacity(m);
    s.extend_from_slice(&sol[..pin]);
    s.push(0.0);
    s.extend_from_slice(&sol[pin..]);
    Ok(s)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Quadratic model m(d) = g.d + d.H d / 2 evaluated in the full space.
pub fn model_value(h: &SymSparseOperator, g: &[f64], d: &[f64]) -> f64 {
    let hd = h.mul_vec_alloc(d);
    dot(g, d) + 0.5 * dot(d, &hd)
}

/// Exact minimizer of the quadratic model over the radius-`delta` disk of a
/// 2D subspace, in the coordinates of an orthonormal basis.
fn solve_reduced(ht: &Matrix2<f64>, gt: &Vector2<f64>, delta: f64) -> (Vector2<f64>, StepType) {
    // Symmetric 2x2 eigendecomposition.
    let (a, b, c) = (ht[(0, 0)], ht[(0, 1)], ht[(1, 1)]);
    let tr = a + c;
    let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    let l1 = 0.5 * (tr - disc);
    let l2 = 0.5 * (tr + disc);
    let v1 = if b.abs() > 1e-300 {
        let cand = Vector2::new(b, l1 - a);
        let alt = Vector2::new(l1 - c, b);
        if cand.norm() >= alt.norm() { cand } else { alt }.normalize()
    } else if a <= c {
        Vector2::new(1.0, 0.0)
    } else {
        Vector2::new(0.0, 1.0)
    };
    let v2 = Vector2::new(-v1.y, v1.x);
    let ge = Vector2::new(v1.dot(gt), v2.dot(gt));
    let lam = [l1, l2];

    // Interior Newton point when the reduced Hessian is positive definite.
    if l1 > 0.0 {
        let cand = Vector2::new(-ge.x / l1, -ge.y / l2);
        if cand.norm() <= delta {
            let d = v1 * cand.x + v2 * cand.y;
            return (d, StepType::Interior);
        }
    }

    // Boundary: (H + mu I) d = -g with ||d|| = delta, mu >= max(0, -l1).
    let phi = |mu: f64| -> f64 {
        let d1 = ge.x / (lam[0] + mu);
        let d2 = ge.y / (lam[1] + mu);
        (d1 * d1 + d2 * d2).sqrt()
    };
    let mu_floor = (-l1).max(0.0);
    let scale = l1.abs().max(l2.abs()).max(ge.norm() / delta).max(1e-300);
    let eps = 1e-14 * scale;

    // Hard case: gradient has no component along the most negative
    // eigendirection and the regular solution underflows the radius.
    if ge.x.abs() <= 1e-14 * ge.norm().max(1e-300) && l1 <= 0.0 {
        let d2 = if (lam[1] + mu_floor).abs() > eps {
            -ge.y / (lam[1] + mu_floor)
        } else {
            0.0
        };
        if d2.abs() <= delta {
            let tau = (delta * delta - d2 * d2).max(0.0).sqrt();
            let de = Vector2::new(tau, d2);
            return (v1 * de.x + v2 * de.y, StepType::Boundary);
        }
    }

    let mut lo = mu_floor + eps;
    // Ensure phi(lo) >= delta (the step shrinks as mu grows); if even at the
    // floor the step is inside, the boundary optimum sits at the floor.
    if phi(lo) < delta {
        let de = Vector2::new(-ge.x / (lam[0] + lo), -ge.y / (lam[1] + lo));
        let d = de.norm();
        let de = if d > 0.0 { de * (delta / d) } else { Vector2::new(delta, 0.0) };
        return (v1 * de.x + v2 * de.y, StepType::Boundary);
    }
    let mut hi = lo.max(1e-12);
    while phi(hi) >= delta {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) >= delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    let de = Vector2::new(-ge.x / (lam[0] + mu), -ge.y / (lam[1] + mu));
    let d = de.norm();
    let de = if d > 0.0 { de * (delta / d) } else { de };
    (v1 * de.x + v2 * de.y, StepType::Boundary)
}

/// Trust-region step over span{s, g}: orthonormalizes the basis (dropping a
/// dependent direction), solves the reduced problem exactly, and returns the
/// best of that point, the Cauchy point, and the radius-clipped Newton point
/// under the model.
pub fn tr_subspace_step(
    h: &SymSparseOperator,
    g: &[f64],
    s: &[f64],
    delta: f64,
) -> (Vec<f64>, StepType) {
    let m = g.len();
    let gn = norm(g);
    if gn == 0.0 {
        return (vec![0.0; m], StepType::Interior);
    }
    let sn = norm(s);

    // Basis from {s, -g}.
    let mut q1 = vec![0.0; m];
    let mut q2: Option<Vec<f64>> = None;
    if sn > 0.0 {
        for i in 0..m {
            q1[i] = s[i] / sn;
        }
        let mut w: Vec<f64> = g.iter().map(|v| -v).collect();
        let proj = dot(&w, &q1);
        for i in 0..m {
            w[i] -= proj * q1[i];
        }
        let wn = norm(&w);
        if wn > 1e-12 * gn {
            for v in &mut w {
                *v /= wn;
            }
            q2 = Some(w);
        }
    } else {
        for i in 0..m {
            q1[i] = -g[i] / gn;
        }
    }

    let hq1 = h.mul_vec_alloc(&q1);
    let (ht, gt) = match &q2 {
        Some(q2v) => {
            let hq2 = h.mul_vec_alloc(q2v);
            (
                Matrix2::new(
                    dot(&q1, &hq1),
                    dot(&q1, &hq2),
                    dot(q2v, &hq1),
                    dot(q2v, &hq2),
                ),
                Vector2::new(dot(g, &q1), dot(g, q2v)),
            )
        }
        None => (
            Matrix2::new(dot(&q1, &hq1), 0.0, 0.0, 1.0),
            Vector2::new(dot(g, &q1), 0.0),
        ),
    };
    let ht = Matrix2::new(
        ht[(0, 0)],
        0.5 * (ht[(0, 1)] + ht[(1, 0)]),
        0.5 * (ht[(0, 1)] + ht[(1, 0)]),
        ht[(1, 1)],
    );
    let (de, step_type) = solve_reduced(&ht, &gt, delta);
    let mut d = vec![0.0; m];
    for i in 0..m {
        d[i] = de.x * q1[i];
    }
    if let Some(q2v) = &q2 {
        for i in 0..m {
            d[i] += de.y * q2v[i];
        }
    }

    // Candidate safety net: never do worse than the Cauchy point or the
    // clipped Newton point.
    let hg = h.mul_vec_alloc(g);
    let ghg = dot(g, &hg);
    let alpha = if ghg > 0.0 {
        (gn * gn / ghg).min(delta / gn)
    } else {
        delta / gn
    };
    let cauchy: Vec<f64> = g.iter().map(|v| -alpha * v).collect();
    let mut best = d;
    let mut best_val = model_value(h, g, &best);
    let mut best_type = step_type;
    let m_c = model_value(h, g, &cauchy);
    if m_c < best_val {
        best_val = m_c;
        best = cauchy;
        best_type = if alpha * gn >= delta * (1.0 - 1e-12) {
            StepType::Boundary
        } else {
            StepType::Interior
        };
    }
    if sn > 0.0 {
        let clip = (delta / sn).min(1.0);
        let clipped: Vec<f64> = s.iter().map(|v| clip * v).collect();
        let m_n = model_value(h, g, &clipped);
        if m_n < best_val {
            best = clipped;
            best_type = if clip < 1.0 {
                StepType::Boundary
            } else {
                StepType::Interior
            };
        }
    }
    (best, best_type)
}

/// Radius schedule: shrink below `rho_low`, grow above `rho_high` when the
/// step reached the boundary, otherwise keep.
pub fn radius_update(
    rho: f64,
    radius: f64,
    hit_boundary: bool,
    config: &TrustRegionConfig,
) -> f64 {
    if rho < config.rho_low {
        config.shrink * radius
    } else if rho > config.rho_high && hit_boundary {
        (config.grow * radius).min(config.radius_max)
    } else {
        radius
    }
}

/// Hook that augments the plain conformal objective; used by registration.
pub(crate) trait Augmentation {
    /// Extra objective value at the given state.
    fn extra_energy(&self, f: &CartesianField) -> f64;
    /// Adds the extra gradient and Hessian contributions in place.
    fn augment(&self, state: &EnergyState, g: &mut [f64], h: &mut SymSparseOperator);
    /// Gradient-only variant for the polish phase.
    fn augment_gradient(&self, state: &EnergyState, g: &mut [f64]);
    /// Called on the accepted iterate; may rotate the field (returning the
    /// replacement) to reduce the extra objective.
    fn after_accept(&mut self, field: SphericalField) -> SphericalField;
    /// Keeps the augmentation consistent with a global frame rotation of the
    /// field (row convention f <- f R).
    fn rotate_frame(&mut self, r: &nalgebra::Matrix3<f64>);
}

pub(crate) struct NoAugmentation;

impl Augmentation for NoAugmentation {
    fn extra_energy(&self, _f: &CartesianField) -> f64 {
        0.0
    }
    fn augment(&self, _state: &EnergyState, _g: &mut [f64], _h: &mut SymSparseOperator) {}
    fn augment_gradient(&self, _state: &EnergyState, _g: &mut [f64]) {}
    fn after_accept(&mut self, field: SphericalField) -> SphericalField {
        field
    }
    fn rotate_frame(&mut self, _r: &nalgebra::Matrix3<f64>) {}
}

pub(crate) fn run_trust_region(
    mesh: &TriMesh,
    init: &SphericalField,
    config: &TrustRegionConfig,
    aug: &mut dyn Augmentation,
) -> Result<SolveResult> {
    config.validate();
    let l = cotangent_laplacian(mesh.positions(), mesh)?;
    let n = mesh.n_vertices();

    let mut field = {
        let safe = rotate_away_from_poles(init, EPS_POLE)?;
        if let Some(r) = &safe.rotation {
            aug.rotate_frame(r);
        }
        safe.field
    };
    let mut state = build_energy_state(mesh, &l, &field)?;
    let mut energy = state.energy + aug.extra_energy(&state.f);
    let mut radius = config.radius_init;
    let mut delta = f64::INFINITY;
    let mut trace = SolveTrace::default();
    let mut converged = false;
    let mut accepted_iters = 0usize;

    for _outer in 0..config.max_iterations {
        let mut g = energy_gradient(&state);
        if !energy.is_finite() {
            return Err(Error::NonFinite { what: "energy" });
        }
        let grad_bar = NULL_STEP_GRAD_BAR * energy.abs().max(1.0);
        let diffs = trig_differentials(mesh, &state);
        let mut h = energy_hessian(mesh, &state, &diffs);
        aug.augment(&state, &mut g, &mut h);
        let grad_inf = inf_norm(&g);
        if !grad_inf.is_finite() {
            return Err(Error::NonFinite { what: "gradient" });
        }
        if grad_inf <= ZERO_GRADIENT {
            delta = 0.0;
            converged = true;
            trace.records.push(IterationRecord {
                iter: accepted_iters,
                energy,
                grad_inf,
                delta,
                radius,
                step_type: StepType::Interior,
                accepted: true,
            });
            break;
        }
        // The step error alone can dip below tolerance on a micro-step after
        // a radius collapse; convergence additionally requires the gradient
        // of the reached iterate to have collapsed.
        if delta <= config.tolerance && grad_inf <= grad_bar {
            converged = true;
            break;
        }

        // Pin the theta of the vertex farthest from the poles; a near-pole
        // theta column is nearly null and would poison the factorization.
        let pin = (0..n)
            .max_by(|&a, &b| {
                state.cache.w[a]
                    .abs()
                    .partial_cmp(&state.cache.w[b].abs())
                    .unwrap()
            })
            .unwrap();
        let newton = newton_direction(&h, &g, pin).unwrap_or_else(|_| vec![0.0; 2 * n]);

        let mut rejections = 0;
        let mut accepted = false;
        let mut null_step_delta = None;
        while rejections < MAX_REJECTIONS {
            let (d, step_type) = tr_subspace_step(&h, &g, &newton, radius);
            let model = model_value(&h, &g, &d);
            let trial_field = field.stepped(&d);
            let trial = build_energy_state(mesh, &l, &trial_field);
            let trial_energy = trial
                .as_ref()
                .map(|st| st.energy + aug.extra_energy(&st.f))
                .unwrap_or(f64::INFINITY);
            if trial_energy < energy {
                let trial_state = trial.unwrap();
                let rho = if model < 0.0 {
                    (energy - trial_energy) / (-model)
                } else {
                    1.0
                };
                delta = alignment_error(&state.f, &trial_state.f);
                radius = radius_update(rho, radius, step_type == StepType::Boundary, config);
                accepted_iters += 1;

                // Objective-specific post-step (landmark rotation), then the
                // pole-safety rotation; both leave the conformal energy
                // unchanged and only the former may lower the total.
                let mut new_field = aug.after_accept(trial_field);
                let safe = rotate_away_from_poles(&new_field, EPS_POLE)?;
                if let Some(r) = &safe.rotation {
                    aug.rotate_frame(r);
                }
                new_field = safe.field;
                state = build_energy_state(mesh, &l, &new_field)?;
                field = new_field;
                energy = state.energy + aug.extra_energy(&state.f);

                trace.records.push(IterationRecord {
                    iter: accepted_iters,
                    energy,
                    grad_inf,
                    delta,
                    radius,
                    step_type,
                    accepted: true,
                });
                accepted = true;
                break;
            } else {
                // Energy ties at shrinking radii mean the iterate cannot
                // move within f64 resolution; the rotation-minimized size of
                // the attempted step tells whether that is convergence.
                if let Ok(st) = &trial {
                    null_step_delta = Some(alignment_error(&state.f, &st.f));
                }
                rejections += 1;
                radius *= config.shrink;
                if rejections >= MAX_REJECTIONS {
                    trace.records.push(IterationRecord {
                        iter: accepted_iters,
                        energy,
                        grad_inf,
                        delta,
                        radius,
                        step_type,
                        accepted: false,
                    });
                }
            }
        }
        if !accepted {
            if let Some(nd) = null_step_delta {
                if nd <= config.tolerance && grad_inf <= grad_bar {
                    delta = nd;
                    converged = true;
                }
            }
            break; // stagnation: return the best (current) iterate
        }
    }

    // Local polish. Near the optimum the energy comparison is limited by the
    // evaluation noise of a heavily cancelling sum, while the gradient is
    // computed without cancellation against large terms; backtracked Newton
    // steps accepted on gradient decrease push it to its floor.
    if converged {
        for _ in 0..8 {
            let mut g = energy_gradient(&state);
            aug.augment_gradient(&state, &mut g);
            let ginf = inf_norm(&g);
            if ginf <= 1e-12 * energy.abs().max(1.0) {
                break;
            }
            let diffs = trig_differentials(mesh, &state);
            let mut h = energy_hessian(mesh, &state, &diffs);
            let mut g_full = energy_gradient(&state);
            aug.augment(&state, &mut g_full, &mut h);
            let pin = (0..n)
                .max_by(|&a, &b| {
                    state.cache.w[a]
                        .abs()
                        .partial_cmp(&state.cache.w[b].abs())
                        .unwrap()
                })
                .unwrap();
            let Ok(step) = newton_direction(&h, &g_full, pin) else {
                break;
            };
            // Backtrack to the largest fraction that reduces the gradient;
            // near-null curvature directions make the full step overshoot.
            let mut taken = None;
            let mut frac = 1.0;
            for _ in 0..12 {
                let scaled: Vec<f64> = step.iter().map(|v| frac * v).collect();
                let trial_field = field.stepped(&scaled);
                if let Ok(trial_state) = build_energy_state(mesh, &l, &trial_field) {
                    let trial_energy =
                        trial_state.energy + aug.extra_energy(&trial_state.f);
                    let mut g_new = energy_gradient(&trial_state);
                    aug.augment_gradient(&trial_state, &mut g_new);
                    let drifted =
                        (trial_energy - energy) > 1e-9 * energy.abs().max(1.0);
                    if inf_norm(&g_new) < ginf && !drifted {
                        taken = Some(trial_field);
                        break;
                    }
                }
                frac *= 0.5;
            }
            let Some(trial_field) = taken else {
                break;
            };
            let new_field = aug.after_accept(trial_field);
            let safe = rotate_away_from_poles(&new_field, EPS_POLE)?;
            if let Some(r) = &safe.rotation {
                aug.rotate_frame(r);
            }
            field = safe.field;
            state = build_energy_state(mesh, &l, &field)?;
            energy = state.energy + aug.extra_energy(&state.f);
        }
    }

    let (map, _) = to_cartesian(&field);
    let fold_count = detect_foldings(mesh, &map).fold_count();
    let distortion = full_report(mesh, &map)?;
    let final_grad_inf = {
        let g = energy_gradient(&state);
        inf_norm(&g)
    };
    Ok(SolveResult {
        field,
        map,
        converged,
        fold_count,
        iterations: accepted_iters,
        final_energy: state.energy,
        final_grad_inf,
        final_delta: delta,
        distortion,
        trace,
    })
}

/// Runs the trust-region solver on the plain conformal energy.
pub fn hbtr_solve(
    mesh: &TriMesh,
    init: &SphericalField,
    config: &TrustRegionConfig,
) -> Result<SolveResult> {
    run_trust_region(mesh, init, config, &mut NoAugmentation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::hessian_pattern;
    use crate::init::{initial_map, InitConfig};
    use crate::mesh::gen_ellipsoid;
    use crate::sphere::from_cartesian;

    fn perturbed_identity(mesh: &TriMesh, magnitude: f64, seed: u64) -> SphericalField {
        let points = mesh.positions().iter().map(|p| p.normalize()).collect();
        let mut field = from_cartesian(&CartesianField { points });
        let mut s = seed;
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for i in 0..field.len() {
            field.theta[i] += magnitude * next();
            field.phi[i] =
                (field.phi[i] + magnitude * next()).clamp(0.05, std::f64::consts::PI - 0.05);
        }
        field
    }

    #[test]
    fn newton_direction_zero_gradient() {
        let mesh = gen_ellipsoid([1.0, 1.0, 1.0], 1).unwrap();
        let field = perturbed_identity(&mesh, 0.05, 3);
        let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
        let state = build_energy_state(&mesh, &l, &field).unwrap();
        let diffs = trig_differentials(&mesh, &state);
        let h = energy_hessian(&mesh, &state, &diffs);
        let g = vec![0.0; h.n_rows()];
        let s = newton_direction(&h, &g, 0).unwrap();
        assert!(s.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn newton_direction_small_residual_and_pinned_zero() {
        let mesh = gen_ellipsoid([1.0, 1.0, 1.0], 1).unwrap();
        let field = perturbed_identity(&mesh, 0.08, 11);
        let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
        let state = build_energy_state(&mesh, &l, &field).unwrap();
        let diffs = trig_differentials(&mesh, &state);
        let h = energy_hessian(&mesh, &state, &diffs);
        let g = energy_gradient(&state);
        let pin = 7;
        let s = newton_direction(&h, &g, pin).unwrap();
        assert_eq!(s[pin], 0.0);
        let hs = h.mul_vec_alloc(&s);
        let resid = hs
            .iter()
            .zip(&g)
            .map(|(a, b)| (a + b).abs())
            .fold(0.0f64, f64::max);
        assert!(
            resid <= 1e-8 * inf_norm(&g),
            "residual {resid} vs g {}",
            inf_norm(&g)
        );
        assert_eq!(s.len(), 2 * mesh.n_vertices());
        let _ = hessian_pattern(&mesh);
    }

    #[test]
    fn reduced_subproblem_textbook_cases() {
        // Identity Hessian, gradient e1, radius 2: unconstrained Newton.
        let (d, ty) = solve_reduced(
            &Matrix2::identity(),
            &Vector2::new(1.0, 0.0),
            2.0,
        );
        assert!((d - Vector2::new(-1.0, 0.0)).norm() < 1e-12);
        assert_eq!(ty, StepType::Interior);

        // Same but radius 0.5: clipped to the boundary.
        let (d, ty) = solve_reduced(&Matrix2::identity(), &Vector2::new(1.0, 0.0), 0.5);
        assert!((d - Vector2::new(-0.5, 0.0)).norm() < 1e-10);
        assert_eq!(ty, StepType::Boundary);

        // Indefinite diag(-1, 1): negative curvature pushes to the boundary.
        let ht = Matrix2::new(-1.0, 0.0, 0.0, 1.0);
        let (d, ty) = solve_reduced(&ht, &Vector2::new(1.0, 0.0), 1.0);
        assert_eq!(ty, StepType::Boundary);
        // Dense sweep over the boundary angle as oracle.
        let model = |v: &Vector2<f64>| Vector2::new(1.0, 0.0).dot(v) + 0.5 * (ht * v).dot(v);
        let mut best = f64::INFINITY;
        for k in 0..200000 {
            let psi = 2.0 * std::f64::consts::PI * k as f64 / 200000.0;
            let v = Vector2::new(psi.cos(), psi.sin());
            best = best.min(model(&v));
        }
        assert!((d - Vector2::new(-1.0, 0.0)).norm() < 1e-6);
        assert!(model(&d) <= best + 1e-9);
    }

    #[test]
    fn subspace_step_dominates_cauchy_and_clipped_newton() {
        let mesh = gen_ellipsoid([1.3, 1.0, 0.8], 1).unwrap();
        let field = perturbed_identity(&mesh, 0.15, 17);
        let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
        let state = build_energy_state(&mesh, &l, &field).unwrap();
        let diffs = trig_differentials(&mesh, &state);
        let h = energy_hessian(&mesh, &state, &diffs);
        let g = energy_gradient(&state);
        let s = newton_direction(&h, &g, 0).unwrap();
        for delta in [0.01, 0.3, 10.0] {
            let (d, _) = tr_subspace_step(&h, &g, &s, delta);
            assert!(norm(&d) <= delta * (1.0 + 1e-9));
            let m_d = model_value(&h, &g, &d);
            let gn = norm(&g);
            let hg = h.mul_vec_alloc(&g);
            let ghg = dot(&g, &hg);
            let alpha = if ghg > 0.0 {
                (gn * gn / ghg).min(delta / gn)
            } else {
                delta / gn
            };
            let cauchy: Vec<f64> = g.iter().map(|v| -alpha * v).collect();
            let clip = (delta / norm(&s)).min(1.0);
            let clipped: Vec<f64> = s.iter().map(|v| clip * v).collect();
            assert!(m_d <= model_value(&h, &g, &cauchy) + 1e-12);
            assert!(m_d <= model_value(&h, &g, &clipped) + 1e-12);
            assert!(m_d <= 0.0);
        }
    }

    #[test]
    fn subspace_step_descends_without_newton_direction() {
        // The gradient-only fallback used when the factorization breaks down.
        let mesh = gen_ellipsoid([1.2, 1.0, 0.9], 1).unwrap();
        let field = perturbed_identity(&mesh, 0.1, 5);
        let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
        let state = build_energy_state(&mesh, &l, &field).unwrap();
        let diffs = trig_differentials(&mesh, &state);
        let h = energy_hessian(&mesh, &state, &diffs);
        let g = energy_gradient(&state);
        let zeros = vec![0.0; g.len()];
        let (d, _) = tr_subspace_step(&h, &g, &zeros, 0.5);
        assert!(norm(&d) <= 0.5 * (1.0 + 1e-12));
        assert!(model_value(&h, &g, &d) < 0.0);
        assert!(dot(&d, &g) < 0.0, "fallback step must descend along -g");
    }

    #[test]
    fn radius_update_contract() {
        let config = TrustRegionConfig::default();
        assert_eq!(radius_update(0.1, 1.0, false, &config), 0.25);
        assert_eq!(radius_update(0.9, 1.0, true, &config), 2.0);
        assert_eq!(radius_update(0.5, 1.0, true, &config), 1.0);
        assert_eq!(radius_update(0.9, 1.0, false, &config), 1.0);
        assert_eq!(radius_update(0.9, 80.0, true, &config), 100.0);
    }

    #[test]
    fn icosphere_identity_converges_immediately() {
        let mesh = gen_ellipsoid([1.0, 1.0, 1.0], 2).unwrap();
        let points = mesh.positions().iter().map(|p| p.normalize()).collect();
        let init = from_cartesian(&CartesianField { points });
        let result = hbtr_solve(&mesh, &init, &TrustRegionConfig::default()).unwrap();
        assert!(result.converged);
        assert!(result.final_energy < 1e-10);
        assert!(result.iterations <= 5);
        assert_eq!(result.fold_count, 0);
    }

    #[test]
    fn ellipsoid_solve_converges_with_decreasing_energy() {
        let mesh = gen_ellipsoid([1.1, 1.0, 0.9], 2).unwrap();
        let init = initial_map(&mesh, &InitConfig::default()).unwrap();
        let result = hbtr_solve(&mesh, &init.field, &TrustRegionConfig::default()).unwrap();
        assert!(result.converged, "delta {}", result.final_delta);
        assert!(result.final_delta <= 1e-9);
        assert_eq!(result.fold_count, 0);
        assert!(result.final_grad_inf <= 1e-8);
        let energies: Vec<f64> = result
            .trace
            .records
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.energy)
            .collect();
        for w in energies.windows(2) {
            assert!(w[1] < w[0], "energy not strictly decreasing: {w:?}");
        }
    }

    #[test]
    fn outcome_invariant_under_initial_rotation() {
        let mesh = gen_ellipsoid([1.2, 1.0, 0.85], 1).unwrap();
        let init = initial_map(&mesh, &InitConfig::default()).unwrap();
        let result_a = hbtr_solve(&mesh, &init.field, &TrustRegionConfig::default()).unwrap();

        let (f, _) = to_cartesian(&init.field);
        let axis = nalgebra::Vector3::new(0.42, -0.3, 0.85).normalize();
        let rot = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            0.83,
        )
        .into_inner();
        let rotated = from_cartesian(&f.rotated(&rot));
        let result_b = hbtr_solve(&mesh, &rotated, &TrustRegionConfig::default()).unwrap();
        assert!(
            (result_a.final_energy - result_b.final_energy).abs() < 1e-8,
            "{} vs {}",
            result_a.final_energy,
            result_b.final_energy
        );
    }

    #[test]
    fn trace_csv_has_expected_header() {
        let mesh = gen_ellipsoid([1.1, 1.0, 0.9], 1).unwrap();
        let init = initial_map(&mesh, &InitConfig::default()).unwrap();
        let result = hbtr_solve(&mesh, &init.field, &TrustRegionConfig::default()).unwrap();
        let mut buf = Vec::new();
        result.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,energy,grad_inf,delta,radius,step_type,accepted"));
        assert!(text.lines().count() > 1);
    }
}
