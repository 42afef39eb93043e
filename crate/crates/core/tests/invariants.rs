//! Property tests for the coordinate maps, alignment, and operators.

use confmap_core::energy::build_energy_state;
use confmap_core::mesh::{cotangent_laplacian, gen_ellipsoid, mean_value_laplacian, TriMesh};
use confmap_core::sphere::{
    alignment_error, from_cartesian, optimal_rotation, to_cartesian, CartesianField,
    SphericalField,
};
use nalgebra::Vector3;
use proptest::prelude::*;

fn unit_vector() -> impl Strategy<Value = Vector3<f64>> {
    (
        -1.0f64..1.0,
        0.0f64..(2.0 * std::f64::consts::PI),
    )
        .prop_map(|(z, t)| {
            let r = (1.0 - z * z).sqrt();
            Vector3::new(r * t.cos(), r * t.sin(), z)
        })
}

fn rotation() -> impl Strategy<Value = nalgebra::Matrix3<f64>> {
    (unit_vector(), 0.0f64..std::f64::consts::PI).prop_map(|(axis, angle)| {
        nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
            .into_inner()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cartesian_round_trip(points in proptest::collection::vec(unit_vector(), 4..40)) {
        let f = CartesianField { points };
        let field = from_cartesian(&f);
        let (back, _) = to_cartesian(&field);
        for (p, q) in f.points.iter().zip(&back.points) {
            prop_assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn spherical_round_trip_away_from_poles(
        theta in proptest::collection::vec(0.0f64..(2.0 * std::f64::consts::PI), 8),
        phi in proptest::collection::vec(0.05f64..(std::f64::consts::PI - 0.05), 8),
    ) {
        let field = SphericalField { theta, phi };
        let (f, _) = to_cartesian(&field);
        let back = from_cartesian(&f);
        for i in 0..8 {
            prop_assert!((back.phi[i] - field.phi[i]).abs() < 1e-12);
            let dt = (back.theta[i] - field.theta[i]).rem_euclid(2.0 * std::f64::consts::PI);
            prop_assert!(dt < 1e-11 || (2.0 * std::f64::consts::PI - dt) < 1e-11);
        }
    }

    #[test]
    fn alignment_error_rotation_invariance(
        points in proptest::collection::vec(unit_vector(), 6..30),
        r in rotation(),
    ) {
        let f = CartesianField { points };
        let g = f.rotated(&r);
        let n = f.len() as f64;
        prop_assert!(alignment_error(&f, &g) < 1e-12 * n);
        let al = optimal_rotation(&f.points, &g.points);
        prop_assert!((al.rotation.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn energy_invariant_under_theta_shift(shift in -10.0f64..10.0, seed in 0u64..1000) {
        let mesh = gen_ellipsoid([1.2, 1.0, 0.85], 1).unwrap();
        let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
        let mut state_seed = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = || {
            state_seed = state_seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state_seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let points = mesh.positions().iter().map(|p| p.normalize()).collect();
        let mut field = from_cartesian(&CartesianField { points });
        for i in 0..field.len() {
            field.theta[i] += 0.2 * next();
            field.phi[i] = (field.phi[i] + 0.2 * next()).clamp(0.1, std::f64::consts::PI - 0.1);
        }
        let e0 = build_energy_state(&mesh, &l, &field).unwrap().energy;
        let mut shifted = field.clone();
        for t in &mut shifted.theta {
            *t += shift;
        }
        let e1 = build_energy_state(&mesh, &l, &shifted).unwrap().energy;
        prop_assert!((e0 - e1).abs() < 1e-11 * e0.abs().max(1.0), "{e0} vs {e1}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn laplacians_on_jittered_ellipsoids(
        a in 0.7f64..1.5,
        b in 0.7f64..1.5,
        c in 0.7f64..1.5,
        jitter_seed in 0u64..10_000,
    ) {
        let base = gen_ellipsoid([a, b, c], 1).unwrap();
        let mut state = jitter_seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let positions: Vec<Vector3<f64>> = base
            .positions()
            .iter()
            .map(|p| p * (1.0 + 0.1 * next()))
            .collect();
        let mesh = TriMesh::from_parts(positions, base.faces().to_vec()).unwrap();

        let l = cotangent_laplacian(mesh.positions(), &mesh).unwrap();
        let bound = 1e-12 * l.max_abs();
        for s in l.row_sums() {
            prop_assert!(s.abs() < bound);
        }
        prop_assert!(l.max_asymmetry() < bound);

        let mv = mean_value_laplacian(mesh.positions(), &mesh).unwrap();
        for i in 0..mesh.n_vertices() {
            for (j, v) in mv.row_entries(i) {
                if i != j {
                    prop_assert!(v < 0.0);
                }
            }
        }
        let bound = 1e-12 * mv.max_abs();
        for s in mv.row_sums() {
            prop_assert!(s.abs() < bound);
        }
    }
}
