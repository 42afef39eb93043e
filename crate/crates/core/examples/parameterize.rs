//! Minimal library usage: generate an ellipsoid, map it to the sphere, and
//! print the convergence summary.

use confmap_core::hbtr::{hbtr_solve, TrustRegionConfig};
use confmap_core::init::{initial_map, InitConfig};
use confmap_core::mesh::gen_ellipsoid;

fn main() -> confmap_core::Result<()> {
    let mesh = gen_ellipsoid([2.0, 1.0, 0.3], 3)?;
    let init = initial_map(&mesh, &InitConfig::default())?;
    let result = hbtr_solve(&mesh, &init.field, &TrustRegionConfig::default())?;
    println!(
        "{} vertices: converged = {} after {} iterations",
        mesh.n_vertices(),
        result.converged,
        result.iterations
    );
    println!(
        "energy {:.4e}, |grad| {:.2e}, step error {:.2e}, folds {}",
        result.final_energy,
        result.final_grad_inf,
        result.final_delta,
        result.fold_count
    );
    println!(
        "angle distortion: mean {:.4} deg, p50 {:.4} deg, p75 {:.4} deg",
        result.distortion.angle_mean_deg,
        result.distortion.angle_p50_deg,
        result.distortion.angle_p75_deg
    );
    Ok(())
}
