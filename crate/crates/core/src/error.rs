//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("non-manifold edge [{v0}, {v1}] with {count} incident faces")]
    NonManifoldEdge { v0: usize, v1: usize, count: usize },

    #[error("boundary edge [{v0}, {v1}]: surface is not closed")]
    BoundaryEdge { v0: usize, v1: usize },

    #[error("genus check failed: Euler characteristic {chi}, expected 2")]
    GenusCheck { chi: i64 },

    #[error("vertex {0} is not referenced by any face")]
    UnreferencedVertex(usize),

    #[error("face {face} is degenerate (area {area:.3e})")]
    DegenerateTriangle { face: usize, area: f64 },

    #[error("image of face {face} is degenerate (area {area:.3e})")]
    DegenerateImageTriangle { face: usize, area: f64 },

    #[error("corner angle at vertex {vertex} of face {face} is too close to pi")]
    AngleNearPi { face: usize, vertex: usize },

    #[error("linear system is numerically singular (pivot {pivot:.3e} at index {index})")]
    SingularSystem { index: usize, pivot: f64 },

    #[error("pole safety rotation failed: best margin {best:.3e} below {required:.3e}")]
    PoleRotationFailed { best: f64, required: f64 },

    #[error("stereographic pole is within {dist:.3e} of vertex {vertex}")]
    PoleTooClose { vertex: usize, dist: f64 },

    #[error("every vertex touches a folded face; no unfolded anchor exists")]
    FoldRepairUnrecoverable,

    #[error("non-finite {what} encountered during optimization")]
    NonFinite { what: &'static str },

    #[error("landmarks: {0}")]
    Landmark(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
