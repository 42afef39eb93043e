//! Closed genus-0 triangle meshes: loading, validation, adjacency, cotangent
//! and mean value Laplacians, angle defects, and synthetic ellipsoid meshes.
//!
//! Vertex indices are 0-based internally and 1-based in OBJ files. Meshes are
//! immutable once constructed; every accepted mesh is closed, manifold, of
//! Euler characteristic 2, consistently oriented with positive signed volume,
//! and free of degenerate faces.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::sparse::{SparsityPattern, SymSparseOperator};

/// Source triangles whose area falls below this fraction of the mean area are
/// rejected: cotangent weights blow up on them.
pub const DEGENERATE_AREA_REL: f64 = 1e-14;

/// An undirected mesh edge with its two incident faces.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    /// Endpoint with the smaller index.
    pub a: usize,
    /// Endpoint with the larger index.
    pub b: usize,
    pub faces: [usize; 2],
}

/// Immutable closed genus-0 triangulation with precomputed adjacency.
#[derive(Debug)]
pub struct TriMesh {
    positions: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    edge_lookup: HashMap<(usize, usize), usize>,
    neighbors: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
    laplacian_pattern: Arc<SparsityPattern>,
    hessian_pattern: OnceLock<Arc<SparsityPattern>>,
}

/// Interior angles per face, indexed by corner: `angles[f][c]` is the angle
/// at corner `c` of face `f`, i.e. the angle opposite edge (`c+1`, `c+2`).
#[derive(Debug, Clone)]
pub struct CornerAngles {
    pub angles: Vec<[f64; 3]>,
}

impl TriMesh {
    /// Builds and validates a mesh from raw positions and faces. Faces are
    /// reoriented for global consistency and flipped as a whole if the signed
    /// volume comes out negative.
    pub fn from_parts(positions: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = positions.len();
        for (fi, f) in faces.iter().enumerate() {
            if f[0] == f[1] || f[1] == f[2] || f[2] == f[0] {
                return Err(Error::DegenerateTriangle {
                    face: fi,
                    area: 0.0,
                });
            }
            for &v in f {
                if v >= n {
                    return Err(Error::Parse {
                        path: String::new(),
                        detail: format!("face {fi} references vertex {v} out of {n}"),
                    });
                }
            }
        }

        let mut faces = faces;

        // Edge -> incident faces, ignoring orientation.
        let mut incident: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for c in 0..3 {
                let (u, v) = (f[c], f[(c + 1) % 3]);
                let key = (u.min(v), u.max(v));
                incident.entry(key).or_default().push(fi);
            }
        }
        for (&(a, b), fs) in &incident {
            if fs.len() > 2 {
                return Err(Error::NonManifoldEdge {
                    v0: a,
                    v1: b,
                    count: fs.len(),
                });
            }
            if fs.len() < 2 {
                return Err(Error::BoundaryEdge { v0: a, v1: b });
            }
        }

        let chi = n as i64 - incident.len() as i64 + faces.len() as i64;
        if chi != 2 {
            return Err(Error::GenusCheck { chi });
        }

        let mut referenced = vec![false; n];
        for f in &faces {
            for &v in f {
                referenced[v] = true;
            }
        }
        if let Some(v) = referenced.iter().position(|&r| !r) {
            return Err(Error::UnreferencedVertex(v));
        }

        orient_consistently(&mut faces, &incident);
        if signed_volume(&positions, &faces) < 0.0 {
            for f in faces.iter_mut() {
                f.swap(1, 2);
            }
        }

        // Rebuild directed adjacency from the final orientation.
        let mut edge_lookup = HashMap::new();
        let mut edges: Vec<Edge> = Vec::with_capacity(incident.len());
        for (fi, f) in faces.iter().enumerate() {
            for c in 0..3 {
                let (u, v) = (f[c], f[(c + 1) % 3]);
                let key = (u.min(v), u.max(v));
                match edge_lookup.get(&key) {
                    None => {
                        edge_lookup.insert(key, edges.len());
                        edges.push(Edge {
                            a: key.0,
                            b: key.1,
                            faces: [fi, usize::MAX],
                        });
                    }
                    Some(&ei) => edges[ei].faces[1] = fi,
                }
            }
        }

        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &edges {
            neighbors[e.a].push(e.b);
            neighbors[e.b].push(e.a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        let mut vertex_faces: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }

        let laplacian_pattern =
            SparsityPattern::from_edges(n, edges.iter().map(|e| (e.a, e.b)));

        let mesh = TriMesh {
            positions,
            faces,
            edges,
            edge_lookup,
            neighbors,
            vertex_faces,
            laplacian_pattern,
            hessian_pattern: OnceLock::new(),
        };

        // Degeneracy check against the mean area.
        let areas: Vec<f64> = (0..mesh.faces.len())
            .map(|fi| mesh.face_area(fi))
            .collect();
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        for (fi, &a) in areas.iter().enumerate() {
            if a < DEGENERATE_AREA_REL * mean {
                return Err(Error::DegenerateTriangle { face: fi, area: a });
            }
        }

        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<&Edge> {
        self.edge_lookup
            .get(&(u.min(v), u.max(v)))
            .map(|&ei| &self.edges[ei])
    }

    /// Indices of the vertices adjacent to `i`, sorted.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Faces incident to vertex `i`; the wheel of adjacent-edge pairs.
    pub fn vertex_faces(&self, i: usize) -> &[usize] {
        &self.vertex_faces[i]
    }

    pub fn laplacian_pattern(&self) -> &Arc<SparsityPattern> {
        &self.laplacian_pattern
    }

    pub(crate) fn hessian_pattern_cell(&self) -> &OnceLock<Arc<SparsityPattern>> {
        &self.hessian_pattern
    }

    pub fn face_area(&self, fi: usize) -> f64 {
        let [i, j, k] = self.faces[fi];
        triangle_area(&self.positions[i], &self.positions[j], &self.positions[k])
    }

    /// Maximum triangle diameter, which for triangles is the longest edge.
    pub fn mesh_size_h(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| (self.positions[e.a] - self.positions[e.b]).norm())
            .fold(0.0, f64::max)
    }
}

fn orient_consistently(faces: &mut [[usize; 3]], incident: &HashMap<(usize, usize), Vec<usize>>) {
    // Face adjacency walk; a neighbor traversing a shared edge in the same
    // direction has opposite orientation and gets flipped.
    let m = faces.len();
    let mut seen = vec![false; m];
    let mut stack = Vec::new();
    for root in 0..m {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        stack.push(root);
        while let Some(fi) = stack.pop() {
            let f = faces[fi];
            for c in 0..3 {
                let (u, v) = (f[c], f[(c + 1) % 3]);
                let key = (u.min(v), u.max(v));
                for &other in &incident[&key] {
                    if other == fi || seen[other] {
                        continue;
                    }
                    let same_direction = (0..3).any(|d| {
                        faces[other][d] == u && faces[other][(d + 1) % 3] == v
                    });
                    if same_direction {
                        faces[other].swap(1, 2);
                    }
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
    }
}

pub fn signed_volume(positions: &[Vector3<f64>], faces: &[[usize; 3]]) -> f64 {
    faces
        .iter()
        .map(|&[i, j, k]| positions[i].dot(&positions[j].cross(&positions[k])) / 6.0)
        .sum()
}

pub fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Interior angles of every face via arccos of clamped unit dot products.
pub fn corner_angles(mesh: &TriMesh) -> Result<CornerAngles> {
    corner_angles_of(mesh.positions(), mesh.faces())
}

/// Same as [`corner_angles`] for an arbitrary position set over the mesh
/// connectivity (used for image meshes on the sphere).
pub fn corner_angles_of(positions: &[Vector3<f64>], faces: &[[usize; 3]]) -> Result<CornerAngles> {
    let mut angles = Vec::with_capacity(faces.len());
    for (fi, &[i, j, k]) in faces.iter().enumerate() {
        let area = triangle_area(&positions[i], &positions[j], &positions[k]);
        if area.is_nan() || area <= 0.0 {
            return Err(Error::DegenerateTriangle { face: fi, area });
        }
        let corners = [i, j, k];
        let mut tri = [0.0; 3];
        for c in 0..3 {
            let p = positions[corners[c]];
            let e1 = (positions[corners[(c + 1) % 3]] - p).normalize();
            let e2 = (positions[corners[(c + 2) % 3]] - p).normalize();
            tri[c] = e1.dot(&e2).clamp(-1.0, 1.0).acos();
        }
        angles.push(tri);
    }
    Ok(CornerAngles { angles })
}

/// Per-face triangle areas and corner cotangents for arbitrary positions over
/// the mesh connectivity. `cots[f][c]` is the cotangent of the angle at
/// corner `c`, the angle opposite edge (`c+1`, `c+2`). Degenerate triangles
/// (area below `DEGENERATE_AREA_REL` of the mean) are reported through
/// `degenerate_err`.
pub fn face_cotangents(
    positions: &[Vector3<f64>],
    faces: &[[usize; 3]],
    degenerate_err: impl Fn(usize, f64) -> Error,
) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
    let mut areas = Vec::with_capacity(faces.len());
    for &[i, j, k] in faces {
        areas.push(triangle_area(&positions[i], &positions[j], &positions[k]));
    }
    let mean = areas.iter().sum::<f64>() / areas.len().max(1) as f64;
    let mut cots = Vec::with_capacity(faces.len());
    for (fi, &[i, j, k]) in faces.iter().enumerate() {
        let area = areas[fi];
        if area < DEGENERATE_AREA_REL * mean || !area.is_finite() {
            return Err(degenerate_err(fi, area));
        }
        let corners = [i, j, k];
        let mut tri = [0.0; 3];
        for c in 0..3 {
            let p = positions[corners[c]];
            let e1 = positions[corners[(c + 1) % 3]] - p;
            let e2 = positions[corners[(c + 2) % 3]] - p;
            tri[c] = e1.dot(&e2) / (2.0 * area);
        }
        cots.push(tri);
    }
    Ok((areas, cots))
}

/// Cotangent Laplacian over the mesh connectivity for the given positions:
/// off-diagonal (i, j) is -w_ij with w_ij the half-sum of the two cotangents
/// opposite the edge, diagonal is the row-negated sum, so rows sum to zero.
pub fn cotangent_laplacian(
    positions: &[Vector3<f64>],
    mesh: &TriMesh,
) -> Result<SymSparseOperator> {
    let (_, cots) = face_cotangents(positions, mesh.faces(), |face, area| {
        Error::DegenerateTriangle { face, area }
    })?;
    let mut l = SymSparseOperator::zeros(mesh.laplacian_pattern().clone());
    for (fi, &[i, j, k]) in mesh.faces().iter().enumerate() {
        let corners = [i, j, k];
        for c in 0..3 {
            let w = 0.5 * cots[fi][c];
            let (u, v) = (corners[(c + 1) % 3], corners[(c + 2) % 3]);
            l.add_at(u, v, -w);
            l.add_at(v, u, -w);
            l.add_at(u, u, w);
            l.add_at(v, v, w);
        }
    }
    Ok(l)
}

/// Mean value Laplacian: structurally symmetric over the same pattern as the
/// cotangent Laplacian, but with asymmetric, strictly positive weights
/// w_ij = (tan(a/2) + tan(a'/2)) / |v_i - v_j| where a and a' are the angles
/// at v_i in the two faces incident to the edge.
pub fn mean_value_laplacian(
    positions: &[Vector3<f64>],
    mesh: &TriMesh,
) -> Result<SymSparseOperator> {
    let angles = corner_angles_of(positions, mesh.faces())?;
    let mut l = SymSparseOperator::zeros(mesh.laplacian_pattern().clone());
    let mut half_tans: HashMap<(usize, usize), f64> = HashMap::new();
    // tan(angle/2) at vertex `corner` accumulated onto both edges incident to
    // that corner, keyed by the directed pair (corner, other endpoint).
    for (fi, &[i, j, k]) in mesh.faces().iter().enumerate() {
        let corners = [i, j, k];
        for c in 0..3 {
            let alpha = angles.angles[fi][c];
            if alpha >= std::f64::consts::PI - 1e-12 {
                return Err(Error::AngleNearPi {
                    face: fi,
                    vertex: corners[c],
                });
            }
            let t = (0.5 * alpha).tan();
            for other in [corners[(c + 1) % 3], corners[(c + 2) % 3]] {
                *half_tans.entry((corners[c], other)).or_insert(0.0) += t;
            }
        }
    }
    for e in mesh.edges() {
        let len = (positions[e.a] - positions[e.b]).norm();
        let w_ab = half_tans[&(e.a, e.b)] / len;
        let w_ba = half_tans[&(e.b, e.a)] / len;
        l.add_at(e.a, e.b, -w_ab);
        l.add_at(e.a, e.a, w_ab);
        l.add_at(e.b, e.a, -w_ba);
        l.add_at(e.b, e.b, w_ba);
    }
    Ok(l)
}

/// Discrete Gauss curvature as the angle defect 2*pi minus the sum of
/// interior angles at each vertex. Sums to 4*pi over a closed genus-0 mesh.
pub fn gauss_curvature(mesh: &TriMesh) -> Result<Vec<f64>> {
    let angles = corner_angles(mesh)?;
    let mut defect = vec![2.0 * std::f64::consts::PI; mesh.n_vertices()];
    for (fi, &[i, j, k]) in mesh.faces().iter().enumerate() {
        let corners = [i, j, k];
        for c in 0..3 {
            defect[corners[c]] -= angles.angles[fi][c];
        }
    }
    Ok(defect)
}

/// Icosphere-based ellipsoid: the icosahedron subdivided `level` times by
/// edge midpoints with projection back to the unit sphere, then scaled
/// componentwise by the semiaxes. Vertex count is 10 * 4^level + 2.
pub fn gen_ellipsoid(semiaxes: [f64; 3], level: u32) -> Result<TriMesh> {
    assert!(
        semiaxes.iter().all(|&s| s > 0.0),
        "semiaxes must be positive"
    );
    let (mut positions, mut faces) = icosahedron();
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for &[i, j, k] in &faces {
            let mut mid = |u: usize, v: usize| -> usize {
                let key = (u.min(v), u.max(v));
                *midpoint.entry(key).or_insert_with(|| {
                    let p = (positions[u] + positions[v]).normalize();
                    positions.push(p);
                    positions.len() - 1
                })
            };
            let (ij, jk, ki) = (mid(i, j), mid(j, k), mid(k, i));
            new_faces.push([i, ij, ki]);
            new_faces.push([ij, j, jk]);
            new_faces.push([ki, jk, k]);
            new_faces.push([ij, jk, ki]);
        }
        faces = new_faces;
    }
    let scale = Vector3::new(semiaxes[0], semiaxes[1], semiaxes[2]);
    for p in &mut positions {
        *p = p.component_mul(&scale);
    }
    TriMesh::from_parts(positions, faces)
}

fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let positions = raw
        .iter()
        .map(|p| Vector3::new(p[0], p[1], p[2]).normalize())
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (positions, faces)
}

/// Loads an OFF or OBJ triangle mesh (chosen by extension, falling back to
/// content sniffing) and validates it.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let name = path.display().to_string();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let (positions, faces) = match ext.as_deref() {
        Some("off") => parse_off(&text, &name)?,
        Some("obj") => parse_obj(&text, &name)?,
        _ => {
            if text.trim_start().starts_with("OFF") {
                parse_off(&text, &name)?
            } else {
                parse_obj(&text, &name)?
            }
        }
    };
    TriMesh::from_parts(positions, faces)
}

/// Parses mesh text directly (OFF when the header says so, OBJ otherwise)
/// and validates it.
pub fn parse_mesh_text(text: &str, name: &str) -> Result<TriMesh> {
    let (positions, faces) = if text.trim_start().starts_with("OFF") {
        parse_off(text, name)?
    } else {
        parse_obj(text, name)?
    };
    TriMesh::from_parts(positions, faces)
}

type RawMesh = (Vec<Vector3<f64>>, Vec<[usize; 3]>);

fn parse_off(text: &str, path: &str) -> Result<RawMesh> {
    let err = |detail: String| Error::Parse {
        path: path.to_string(),
        detail,
    };
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| err("empty file".into()))?;
    let counts_line;
    if header == "OFF" {
        counts_line = lines.next().ok_or_else(|| err("missing counts".into()))?;
    } else if let Some(rest) = header.strip_prefix("OFF") {
        counts_line = rest.trim();
    } else {
        return Err(err("missing OFF header".into()));
    }
    let counts: Vec<usize> = counts_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(format!("bad counts: {counts_line}"))))
        .collect::<Result<_>>()?;
    if counts.len() < 2 {
        return Err(err(format!("bad counts: {counts_line}")));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| err("truncated vertex list".into()))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .take(3)
            .map(|t| t.parse().map_err(|_| err(format!("bad vertex: {line}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 3 {
            return Err(err(format!("bad vertex: {line}")));
        }
        positions.push(Vector3::new(vals[0], vals[1], vals[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = lines.next().ok_or_else(|| err("truncated face list".into()))?;
        let vals: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(format!("bad face: {line}"))))
            .collect::<Result<_>>()?;
        if vals.is_empty() || vals[0] != 3 || vals.len() < 4 {
            return Err(err(format!("only triangles are supported: {line}")));
        }
        faces.push([vals[1], vals[2], vals[3]]);
    }
    Ok((positions, faces))
}

fn parse_obj(text: &str, path: &str) -> Result<RawMesh> {
    let err = |detail: String| Error::Parse {
        path: path.to_string(),
        detail,
    };
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let vals: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse().map_err(|_| err(format!("bad vertex: {line}"))))
                    .collect::<Result<_>>()?;
                if vals.len() != 3 {
                    return Err(err(format!("bad vertex: {line}")));
                }
                positions.push(Vector3::new(vals[0], vals[1], vals[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let v: i64 = first
                            .parse()
                            .map_err(|_| err(format!("bad face index: {line}")))?;
                        if v < 1 {
                            return Err(err(format!("face index must be positive: {line}")));
                        }
                        Ok(v as usize - 1)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(err(format!("only triangles are supported: {line}")));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    if positions.is_empty() {
        return Err(err("no vertices found".into()));
    }
    Ok((positions, faces))
}

pub fn write_obj(
    positions: &[Vector3<f64>],
    faces: &[[usize; 3]],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::with_capacity(positions.len() * 40);
    for p in positions {
        out.push_str(&format!("v {:.17} {:.17} {:.17}\n", p.x, p.y, p.z));
    }
    for f in faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_off(
    positions: &[Vector3<f64>],
    faces: &[[usize; 3]],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::with_capacity(positions.len() * 40);
    out.push_str("OFF\n");
    out.push_str(&format!(
        "{} {} {}\n",
        positions.len(),
        faces.len(),
        0
    ));
    for p in positions {
        out.push_str(&format!("{:.17} {:.17} {:.17}\n", p.x, p.y, p.z));
    }
    for f in faces {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// A regular tetrahedron inscribed in the unit sphere; the smallest closed
/// triangulation, used throughout the tests.
pub fn unit_tetrahedron() -> TriMesh {
    let s = 1.0 / 3.0f64.sqrt();
    let positions = vec![
        Vector3::new(s, s, s),
        Vector3::new(s, -s, -s),
        Vector3::new(-s, s, -s),
        Vector3::new(-s, -s, s),
    ];
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriMesh::from_parts(positions, faces).expect("tetrahedron is valid")
}

/// The octahedron with vertices at +-e_i.
pub fn unit_octahedron() -> TriMesh {
    let positions = vec![
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, 0.0, -1.0),
    ];
    let faces = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    TriMesh::from_parts(positions, faces).expect("octahedron is valid")
}
