//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible under `--nocapture`). Tolerances are fixed here,
//! not tuned at runtime.
//!
//! Run with: cargo test --release -p confmap-core --test acceptance -- --nocapture

use std::time::Instant;

use confmap_core::energy::{
    build_energy_state, cartesian_hessian, energy_gradient, energy_hessian, hessian_pattern,
    trig_differentials,
};
use confmap_core::hbtr::{hbtr_solve, TrustRegionConfig};
use confmap_core::init::{initial_map, InitConfig};
use confmap_core::mesh::{
    cotangent_laplacian, gen_ellipsoid, unit_octahedron, unit_tetrahedron, TriMesh,
};
use confmap_core::postprocess::{detect_foldings, mvc_fix};
use confmap_core::registration::{
    hbtr_register_with_fixed, LandmarkSpec, RegConfig,
};
use confmap_core::sphere::{from_cartesian, to_cartesian, CartesianField, SphericalField};
use nalgebra::Vector3;

fn criterion(n: usize, desc: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("criterion {n:2} PASS  {desc}"),
        Err(msg) => {
            println!("criterion {n:2} FAIL  {desc}: {msg}");
            panic!("criterion {n} failed: {msg}");
        }
    }
}

macro_rules! check {
    ($cond:expr, $($arg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($arg)+)),
        }
    };
}

struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}

/// Pole-safe pseudo-random field: seeded angular jitter of the normalized
/// mesh positions.
fn random_field(mesh: &TriMesh, magnitude: f64, seed: u64) -> SphericalField {
    let points = mesh.positions().iter().map(|p| p.normalize()).collect();
    let mut field = from_cartesian(&CartesianField { points });
    let mut rng = Lcg(seed);
    for i in 0..field.len() {
        field.theta[i] += magnitude * rng.next_f64();
        field.phi[i] = (field.phi[i] + magnitude * rng.next_f64())
            .clamp(0.05, std::f64::consts::PI - 0.05);
    }
    field
}

fn jittered_mesh(seed: u64, level: u32) -> TriMesh {
    let mut rng = Lcg(seed);
    let semi = [
        1.0 + 0.3 * rng.next_f64(),
        1.0 + 0.3 * rng.next_f64(),
        1.0 + 0.3 * rng.next_f64(),
    ];
    let base = gen_ellipsoid(semi, level).unwrap();
    let positions = base
        .positions()
        .iter()
        .map(|p| p * (1.0 + 0.08 * rng.next_f64()))
        .collect();
    TriMesh::from_parts(positions, base.faces().to_vec()).unwrap()
}

#[test]
fn criterion_01_analytic_derivatives_match_finite_differences() {
    criterion(1, "analytic gradient and Hessian vs finite differences", || {
        let start = Instant::now();
        let mesh = gen_ellipsoid([1.0, 1.0, 1.0], 1).unwrap();
        check!(mesh.n_vertices() == 42, "expected 42 vertices");
        let field = random_field(&mesh, 0.12, 20240601);
        let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
        let state = build_energy_state(&mesh, &l, &field).unwrap();
        let g = energy_gradient(&state);
        let n = mesh.n_vertices();
        let h = 1e-5;

        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for idx in 0..2 * n {
            let mut d = vec![0.0; 2 * n];
            d[idx] = h;
            let ep = build_energy_state(&mesh, &l, &field.stepped(&d))
                .unwrap()
                .energy;
            d[idx] = -h;
            let em = build_energy_state(&mesh, &l, &field.stepped(&d))
                .unwrap()
                .energy;
            let fd = (ep - em) / (2.0 * h);
            worst = worst.max((g[idx] - fd).abs());
            scale = scale.max(fd.abs());
        }
        check!(
            worst / scale < 1e-6,
            "gradient relative error {} >= 1e-6",
            worst / scale
        );

        let diffs = trig_differentials(&mesh, &state);
        let hess = energy_hessian(&mesh, &state, &diffs);
        let mut fd_cols = vec![vec![0.0; 2 * n]; 2 * n];
        for col in 0..2 * n {
            let mut d = vec![0.0; 2 * n];
            d[col] = h;
            let gp = energy_gradient(&build_energy_state(&mesh, &l, &field.stepped(&d)).unwrap());
            d[col] = -h;
            let gm = energy_gradient(&build_energy_state(&mesh, &l, &field.stepped(&d)).unwrap());
            for row in 0..2 * n {
                fd_cols[col][row] = (gp[row] - gm[row]) / (2.0 * h);
            }
        }
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..2 * n {
            for (j, v) in hess.row_entries(i) {
                worst = worst.max((v - fd_cols[j][i]).abs());
                scale = scale.max(fd_cols[j][i].abs());
            }
        }
        check!(
            worst / scale < 1e-5,
            "hessian relative error {} >= 1e-5",
            worst / scale
        );
        let elapsed = start.elapsed();
        check!(
            elapsed.as_secs_f64() < 5.0,
            "took {elapsed:?}, budget 5 s"
        );
        Ok(())
    });
}

#[test]
fn criterion_02_null_space_theorems() {
    criterion(2, "Hessian null spaces (spherical and Cartesian)", || {
        for seed in 0..10u64 {
            let mesh = gen_ellipsoid([1.0, 1.0, 1.0], 1).unwrap();
            let field = random_field(&mesh, 0.15, 7000 + seed);
            let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
            let state = build_energy_state(&mesh, &l, &field).unwrap();
            let diffs = trig_differentials(&mesh, &state);
            let hess = energy_hessian(&mesh, &state, &diffs);
            let n = mesh.n_vertices();
            let mut null = vec![0.0; 2 * n];
            null[..n].fill(1.0);
            let hn = hess.mul_vec_alloc(&null);
            let resid = hn.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            check!(
                resid < 1e-10 * hess.max_abs(),
                "seed {seed}: theta-shift residual {resid:.3e} vs scale {:.3e}",
                hess.max_abs()
            );
            let cart = cartesian_hessian(&mesh, &state, &diffs);
            for block in 0..3 {
                let mut v = vec![0.0; 3 * n];
                v[block * n..(block + 1) * n].fill(1.0);
                let hv = cart.mul_vec_alloc(&v);
                let resid = hv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                check!(
                    resid < 1e-10 * cart.max_abs(),
                    "seed {seed}: cartesian block {block} residual {resid:.3e}"
                );
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_03_hessian_sparsity() {
    criterion(3, "Hessian pattern inside 1_2x2 (x) pattern(L)", || {
        for seed in 0..5u64 {
            let mesh = jittered_mesh(31000 + seed, 1 + (seed % 2) as u32);
            let field = random_field(&mesh, 0.1, 900 + seed);
            let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
            let state = build_energy_state(&mesh, &l, &field).unwrap();
            let diffs = trig_differentials(&mesh, &state);
            // Assembly itself would panic on any write outside the pattern;
            // additionally verify the pattern maps onto edges of L.
            let hess = energy_hessian(&mesh, &state, &diffs);
            let n = mesh.n_vertices();
            let lp = mesh.laplacian_pattern();
            for i in 0..2 * n {
                for (j, _) in hess.row_entries(i) {
                    check!(
                        lp.contains(i % n, j % n),
                        "seed {seed}: structural entry ({i}, {j}) outside the Laplacian pattern"
                    );
                }
            }
            let hp = hessian_pattern(&mesh);
            check!(
                hp.nnz() == 4 * lp.nnz(),
                "seed {seed}: pattern size {} != 4 x {}",
                hp.nnz(),
                lp.nnz()
            );
        }
        Ok(())
    });
}

#[test]
fn criterion_04_area_identity() {
    criterion(4, "image area: cross products vs quadratic form", || {
        for seed in 0..10u64 {
            let mesh = if seed % 2 == 0 {
                gen_ellipsoid([1.0, 1.0, 1.0], 1).unwrap()
            } else {
                unit_octahedron()
            };
            let field = random_field(&mesh, 0.2, 40 + seed);
            let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
            let state = build_energy_state(&mesh, &l, &field).unwrap();
            let direct = confmap_core::energy::image_area(&state);
            let quad = 0.5
                * (state.l_f.quadratic_form(&state.cache.x)
                    + state.l_f.quadratic_form(&state.cache.y)
                    + state.l_f.quadratic_form(&state.cache.z));
            check!(
                (direct - quad).abs() <= 1e-10 * direct.abs(),
                "seed {seed}: {direct} vs {quad}"
            );
        }
        Ok(())
    });
}

#[test]
fn criterion_05_zero_energy_fixed_points() {
    criterion(5, "identity maps have zero energy and gradient", || {
        let meshes = [
            unit_tetrahedron(),
            unit_octahedron(),
            gen_ellipsoid([1.0, 1.0, 1.0], 2).unwrap(),
        ];
        for (i, mesh) in meshes.iter().enumerate() {
            let points = mesh.positions().iter().map(|p| p.normalize()).collect();
            let field = from_cartesian(&CartesianField { points });
            let l = cotangent_laplacian(mesh.positions(), mesh).unwrap();
            let state = build_energy_state(mesh, &l, &field).unwrap();
            check!(
                state.energy.abs() < 1e-12,
                "mesh {i}: energy {:.3e}",
                state.energy
            );
            let g = energy_gradient(&state);
            let ginf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            check!(ginf < 1e-10, "mesh {i}: gradient {ginf:.3e}");
        }
        Ok(())
    });
}

fn solve_ellipsoid(semi: [f64; 3], level: u32) -> (TriMesh, confmap_core::hbtr::SolveResult) {
    let mesh = gen_ellipsoid(semi, level).unwrap();
    let init = initial_map(&mesh, &InitConfig::default()).unwrap();
    let result = hbtr_solve(&mesh, &init.field, &TrustRegionConfig::default()).unwrap();
    (mesh, result)
}

#[test]
fn criterion_06_end_to_end_convergence() {
    criterion(6, "ellipsoid (1.1,1,0.9) levels 2-4 converge cleanly", || {
        for level in 2..=4u32 {
            let start = Instant::now();
            let (_, result) = solve_ellipsoid([1.1, 1.0, 0.9], level);
            let elapsed = start.elapsed();
            check!(result.converged, "level {level} did not converge");
            check!(
                result.final_delta <= 1e-9,
                "level {level}: delta {:.3e}",
                result.final_delta
            );
            check!(
                result.iterations <= 500,
                "level {level}: {} iterations",
                result.iterations
            );
            check!(result.fold_count == 0, "level {level}: folds");
            check!(
                result.final_grad_inf <= 1e-8,
                "level {level}: grad {:.3e}",
                result.final_grad_inf
            );
            let energies: Vec<f64> = result
                .trace
                .records
                .iter()
                .filter(|r| r.accepted)
                .map(|r| r.energy)
                .collect();
            for w in energies.windows(2) {
                check!(w[1] < w[0], "level {level}: non-decreasing energies");
            }
            check!(
                elapsed.as_secs_f64() < 60.0,
                "level {level} took {elapsed:?}, budget 60 s"
            );
        }
        Ok(())
    });
}

#[test]
fn criterion_07_discrete_scheme_ratio_law() {
    criterion(7, "energy quarters and distortion halves per refinement", || {
        for semi in [[1.1, 1.0, 0.9], [2.0, 1.0, 0.3]] {
            let mut energies = Vec::new();
            let mut means = Vec::new();
            for level in 2..=4u32 {
                let (_, result) = solve_ellipsoid(semi, level);
                check!(result.converged, "{semi:?} level {level} did not converge");
                energies.push(result.final_energy);
                means.push(result.distortion.angle_mean_deg);
            }
            for k in 0..2 {
                let e_ratio = energies[k] / energies[k + 1];
                let m_ratio = means[k] / means[k + 1];
                check!(
                    (3.0..=5.0).contains(&e_ratio),
                    "{semi:?}: energy ratio {e_ratio:.3} outside [3, 5]"
                );
                check!(
                    (1.6..=2.4).contains(&m_ratio),
                    "{semi:?}: distortion ratio {m_ratio:.3} outside [1.6, 2.4]"
                );
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_08_superlinear_tail() {
    criterion(8, "last error ratios decay superlinearly", || {
        for semi in [[1.1, 1.0, 0.9], [2.0, 1.0, 0.3]] {
            for level in 2..=3u32 {
                let (_, result) = solve_ellipsoid(semi, level);
                check!(result.converged, "{semi:?} level {level} did not converge");
                let deltas: Vec<f64> = result
                    .trace
                    .records
                    .iter()
                    .filter(|r| r.accepted && r.delta.is_finite() && r.delta > 0.0)
                    .map(|r| r.delta)
                    .collect();
                check!(deltas.len() >= 3, "{semi:?} level {level}: too few steps");
                let tail = &deltas[deltas.len() - 3..];
                for k in 0..2 {
                    let bound = 1e3 * tail[k].powf(1.5);
                    check!(
                        tail[k + 1] <= bound,
                        "{semi:?} level {level}: delta {:.3e} -> {:.3e} exceeds 1e3 * d^1.5 = {bound:.3e}",
                        tail[k],
                        tail[k + 1]
                    );
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_09_folding_repair() {
    criterion(9, "mean value repair removes injected folds", || {
        // Converged icosphere map, three displaced vertices: repair clears
        // the folds and leaves every vertex outside the involved set alone.
        let mesh = gen_ellipsoid([1.0, 1.0, 1.0], 2).unwrap();
        let points: Vec<Vector3<f64>> =
            mesh.positions().iter().map(|p| p.normalize()).collect();
        let init = from_cartesian(&CartesianField { points });
        let solved = hbtr_solve(&mesh, &init, &TrustRegionConfig::default()).unwrap();
        check!(solved.fold_count == 0, "baseline has folds");

        let mut injected = solved.map.clone();
        for &v in &[11usize, 60, 130] {
            let nb = mesh.neighbors(v)[0];
            injected.points[v] =
                (injected.points[nb] * 1.2 - injected.points[v] * 0.2).normalize();
        }
        let folds_before = detect_foldings(&mesh, &injected);
        check!(!folds_before.is_clean(), "injection produced no folds");
        let out = mvc_fix(&mesh, &injected, 10).unwrap();
        check!(
            out.report.is_clean(),
            "{} folds remain",
            out.report.fold_count()
        );
        let touched: std::collections::HashSet<usize> =
            out.touched.iter().copied().collect();
        for v in 0..mesh.n_vertices() {
            if !touched.contains(&v) {
                let moved = (out.map.points[v] - injected.points[v]).norm();
                check!(moved < 1e-12, "untouched vertex {v} moved {moved:.3e}");
            }
        }

        // Energy clause on a map with nonzero converged energy: repairing a
        // minimal sliver injection restores the energy to within 5% of the
        // converged value. (Any synthetic fold costs orders of magnitude more
        // than the converged energy itself, so the slight-change property is
        // meaningful relative to the converged baseline, as in the repairs
        // of naturally folded solves.)
        let mesh = gen_ellipsoid([1.1, 1.0, 0.9], 3).unwrap();
        let init = initial_map(&mesh, &InitConfig::default()).unwrap();
        let solved = hbtr_solve(&mesh, &init.field, &TrustRegionConfig::default()).unwrap();
        check!(solved.fold_count == 0, "ellipsoid baseline has folds");
        let mut injected = solved.map.clone();
        for &v in &[40usize, 300, 601] {
            let fi = mesh.vertex_faces(v)[0];
            let others: Vec<usize> = mesh.faces()[fi]
                .iter()
                .copied()
                .filter(|&w| w != v)
                .collect();
            let mid = ((injected.points[others[0]] + injected.points[others[1]]) / 2.0)
                .normalize();
            injected.points[v] = (mid + 0.02 * (mid - injected.points[v])).normalize();
        }
        check!(
            !detect_foldings(&mesh, &injected).is_clean(),
            "sliver injection produced no folds"
        );
        let out = mvc_fix(&mesh, &injected, 10).unwrap();
        check!(
            out.report.is_clean(),
            "{} folds remain after sliver repair",
            out.report.fold_count()
        );
        let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
        let energy_after = build_energy_state(&mesh, &l, &from_cartesian(&out.map))
            .unwrap()
            .energy;
        let rel = (energy_after - solved.final_energy).abs() / solved.final_energy;
        check!(
            rel < 0.05,
            "repaired energy {energy_after:.4e} deviates {:.2}% from converged {:.4e}",
            100.0 * rel,
            solved.final_energy
        );
        Ok(())
    });
}

#[test]
fn criterion_10_registration() {
    criterion(10, "landmark registration behaviors", || {
        // Self-registration with 12 sampled landmarks.
        let mesh = gen_ellipsoid([1.1, 1.0, 0.9], 3).unwrap();
        let n = mesh.n_vertices();
        let specs: Vec<LandmarkSpec> = (0..12)
            .map(|k| LandmarkSpec::VertexPair {
                moving: k * n / 12,
                fixed: k * n / 12,
            })
            .collect();
        let init = initial_map(&mesh, &InitConfig::default()).unwrap();
        let fixed_solve = hbtr_solve(&mesh, &init.field, &TrustRegionConfig::default()).unwrap();
        let reg = hbtr_register_with_fixed(
            &mesh,
            &fixed_solve,
            &mesh,
            &specs,
            &RegConfig::default(),
        )
        .unwrap();
        check!(
            reg.registration_loss < 1e-6,
            "self-registration loss {:.3e}",
            reg.registration_loss
        );
        let h = mesh.mesh_size_h();
        for (entry, p) in reg.pullback.entries.iter().zip(mesh.positions()) {
            let disp = (entry.position - p).norm();
            check!(
                disp < 1e-3 * h,
                "pullback displacement {disp:.3e} vs bound {:.3e}",
                1e-3 * h
            );
        }

        // Lambda sweep on a synthetic pair: registration loss cannot rise,
        // conformal energy cannot fall as lambda grows.
        let fixed = gen_ellipsoid([1.1, 1.0, 0.9], 2).unwrap();
        let moving = gen_ellipsoid([1.25, 1.0, 0.8], 2).unwrap();
        let nf = fixed.n_vertices();
        let specs: Vec<LandmarkSpec> = (0..12)
            .map(|k| LandmarkSpec::VertexPair {
                moving: k * nf / 12,
                fixed: k * nf / 12,
            })
            .collect();
        let f_init = initial_map(&fixed, &InitConfig::default()).unwrap();
        let f_solve = hbtr_solve(&fixed, &f_init.field, &TrustRegionConfig::default()).unwrap();
        let mut losses = Vec::new();
        let mut energies = Vec::new();
        for lambda in [1.0, 5.0, 10.0] {
            let config = RegConfig {
                lambda,
                ..Default::default()
            };
            let reg =
                hbtr_register_with_fixed(&fixed, &f_solve, &moving, &specs, &config).unwrap();
            losses.push(reg.registration_loss);
            energies.push(reg.solve.final_energy);
        }
        for w in losses.windows(2) {
            check!(
                w[1] <= w[0] + 1e-12,
                "registration loss rose along the sweep: {losses:?}"
            );
        }
        for w in energies.windows(2) {
            check!(
                w[1] >= w[0] - 1e-12,
                "conformal energy fell along the sweep: {energies:?}"
            );
        }

        // Lambda = 0 reproduces the unregistered solve.
        let config = RegConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let reg0 =
            hbtr_register_with_fixed(&fixed, &f_solve, &moving, &specs, &config).unwrap();
        let m_init = initial_map(&moving, &InitConfig::default()).unwrap();
        let plain = hbtr_solve(&moving, &m_init.field, &TrustRegionConfig::default()).unwrap();
        check!(
            (reg0.solve.final_energy - plain.final_energy).abs() <= 1e-8,
            "lambda = 0 energy {:.12e} vs plain {:.12e}",
            reg0.solve.final_energy,
            plain.final_energy
        );
        Ok(())
    });
}

#[test]
fn ellipsoid_generator_counts_and_mesh_size() {
    // Supporting check used by the criteria above: the generator's counts
    // and the measured mesh size of the reference ellipsoid.
    let mesh = gen_ellipsoid([1.1, 1.0, 0.9], 3).unwrap();
    assert_eq!(mesh.n_vertices(), 642);
    assert_eq!(mesh.n_faces(), 1280);
    let h = mesh.mesh_size_h();
    assert!(
        (h - 0.1796).abs() / 0.1796 < 0.10,
        "mesh size {h} more than 10% from 0.1796"
    );
    let (map, _) = to_cartesian(&random_field(&mesh, 0.0, 1));
    assert_eq!(detect_foldings(&mesh, &map).fold_count(), 0);
}
