//! Ghost-vertex tetrisation of triangle meshes and frame matrices.
//!
//! Each construction adds ghost vertices off the surface so that every
//! triangle becomes the base of at least one non-degenerate tetrahedron.
//! The ghost rules are stored, not the ghost positions, so the same
//! tetrahedra can be re-instantiated on any deformed copy of the mesh.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{Matrix4, Matrix4x3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{classify, edge_incidence, vertex_face_counts, EdgeClass, TriangleMesh};
use crate::Vec3;

/// Threshold on the norm of a sum of unit normals.
pub const NORMAL_SUM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TetrisationMethod {
    #[serde(rename = "face")]
    FaceNormal,
    #[serde(rename = "edge")]
    EdgeNormal,
    #[serde(rename = "vertex")]
    VertexNormal,
}

impl TetrisationMethod {
    pub const ALL: [TetrisationMethod; 3] = [
        TetrisationMethod::FaceNormal,
        TetrisationMethod::EdgeNormal,
        TetrisationMethod::VertexNormal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TetrisationMethod::FaceNormal => "face",
            TetrisationMethod::EdgeNormal => "edge",
            TetrisationMethod::VertexNormal => "vertex",
        }
    }
}

impl fmt::Display for TetrisationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TetrisationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "face" | "face-normal" => Ok(TetrisationMethod::FaceNormal),
            "edge" | "edge-normal" => Ok(TetrisationMethod::EdgeNormal),
            "vertex" | "vertex-normal" => Ok(TetrisationMethod::VertexNormal),
            other => Err(Error::InvalidInput(format!(
                "unknown tetrisation method {other:?}"
            ))),
        }
    }
}

/// Scale-aware thresholds derived from a mesh's bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Minimum cross-product norm of a triangle.
    pub area_eps: f64,
    /// Minimum `|det P|` of a rest frame matrix.
    pub det_eps: f64,
}

impl Tolerances {
    pub fn for_mesh(mesh: &TriangleMesh) -> Self {
        Self::for_diagonal(mesh.bbox_diagonal())
    }

    pub fn for_diagonal(diag: f64) -> Self {
        Self {
            area_eps: 1e-12 * diag * diag,
            det_eps: 1e-12 * diag * diag * diag,
        }
    }
}

/// Unit normal and area of a triangle.
pub fn triangle_normal_area(p1: &Vec3, p2: &Vec3, p3: &Vec3, area_eps: f64) -> Result<(Vec3, f64)> {
    let cross = (p2 - p1).cross(&(p3 - p1));
    let norm = cross.norm();
    if !(norm > area_eps) {
        return Err(Error::DegenerateTriangle { face: None });
    }
    Ok((cross / norm, norm / 2.0))
}

/// How a ghost vertex is computed from base vertex positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GhostSource {
    /// Offset from the centroid of `corners` along the unnormalized normal.
    Face { face: usize, corners: [usize; 3] },
    /// Offset from the midpoint of the shared edge `edge = (v1, v2)` along
    /// the mean normal of `F1 = (v1, v2, apexes[0])` and `F2 = (v1, apexes[1], v2)`.
    Edge {
        edge: [usize; 2],
        apexes: [usize; 2],
    },
    /// Offset from `vertex` along the mean normal of its incident faces.
    Vertex { vertex: usize, fan: Vec<[usize; 3]> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostRule {
    pub source: GhostSource,
    /// Index of the ghost in the extended vertex list.
    pub ghost_index: usize,
}

impl GhostRule {
    pub fn kind(&self) -> TetrisationMethod {
        match self.source {
            GhostSource::Face { .. } => TetrisationMethod::FaceNormal,
            GhostSource::Edge { .. } => TetrisationMethod::EdgeNormal,
            GhostSource::Vertex { .. } => TetrisationMethod::VertexNormal,
        }
    }

    /// Evaluates the ghost position for the given base positions. Triangles
    /// that collapsed in deformed geometry contribute a zero normal.
    pub fn evaluate(&self, rule_index: usize, base: &[Vec3]) -> Result<Vec3> {
        match &self.source {
            GhostSource::Face {
                corners: [a, b, c], ..
            } => {
                let (p1, p2, p3) = (base[*a], base[*b], base[*c]);
                let cross = (p2 - p1).cross(&(p3 - p1));
                let norm = cross.norm();
                let centroid = (p1 + p2 + p3) / 3.0;
                if norm > 0.0 {
                    Ok(centroid + cross / norm.sqrt())
                } else {
                    Ok(centroid)
                }
            }
            GhostSource::Edge {
                edge: [v1, v2],
                apexes: [v3, v4],
            } => {
                let (p1, p2) = (base[*v1], base[*v2]);
                let sum = unit_normal(&p1, &p2, &base[*v3]) + unit_normal(&p1, &base[*v4], &p2);
                let norm = sum.norm();
                if norm < NORMAL_SUM_EPS {
                    return Err(Error::FoldDegenerate {
                        rule: rule_index,
                        norm,
                    });
                }
                Ok((p1 + p2) / 2.0 + (p1 - p2).norm() * sum / norm)
            }
            GhostSource::Vertex { vertex, fan } => {
                let mut sum = Vec3::zeros();
                let mut area = 0.0;
                for &[a, b, c] in fan {
                    let cross = (base[b] - base[a]).cross(&(base[c] - base[a]));
                    let n = cross.norm();
                    if n > 0.0 {
                        sum += cross / n;
                        area += n / 2.0;
                    }
                }
                let norm = sum.norm();
                if norm < NORMAL_SUM_EPS {
                    return Err(Error::FoldDegenerate {
                        rule: rule_index,
                        norm,
                    });
                }
                Ok(base[*vertex] + area.sqrt() * sum / norm)
            }
        }
    }
}

fn unit_normal(p1: &Vec3, p2: &Vec3, p3: &Vec3) -> Vec3 {
    let cross = (p2 - p1).cross(&(p3 - p1));
    let n = cross.norm();
    if n > 0.0 {
        cross / n
    } else {
        Vec3::zeros()
    }
}

/// Ghost rules plus tetrahedra over the extended vertex list (base vertices
/// first, then ghosts in rule order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TetStructure {
    pub base_vertex_count: usize,
    pub ghost_rules: Vec<GhostRule>,
    pub tets: Vec<[usize; 4]>,
    pub method: TetrisationMethod,
}

impl TetStructure {
    pub fn extended_vertex_count(&self) -> usize {
        self.base_vertex_count + self.ghost_rules.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    /// Plain-text dump for inspection: a header, one `v x y z` line per
    /// extended vertex (ghosts marked with a trailing `g`) and one
    /// `t a b c d` line per tetrahedron (0-based).
    pub fn dump(&self, positions: &[Vec3]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# tetrisation {} base {} ghosts {} tets {}",
            self.method,
            self.base_vertex_count,
            self.ghost_rules.len(),
            self.tets.len()
        );
        for (i, p) in positions.iter().enumerate() {
            let tag = if i >= self.base_vertex_count {
                " g"
            } else {
                ""
            };
            let _ = writeln!(out, "v {} {} {}{tag}", p.x, p.y, p.z);
        }
        for t in &self.tets {
            let _ = writeln!(out, "t {} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        out
    }
}

/// Builds the tetrahedral structure for `mesh`.
pub fn tetrise(mesh: &TriangleMesh, method: TetrisationMethod) -> Result<TetStructure> {
    let tol = Tolerances::for_mesh(mesh);
    for (fi, f) in mesh.faces.iter().enumerate() {
        let [a, b, c] = *f;
        triangle_normal_area(
            &mesh.vertices[a],
            &mesh.vertices[b],
            &mesh.vertices[c],
            tol.area_eps,
        )
        .map_err(|_| Error::DegenerateTriangle { face: Some(fi) })?;
    }

    let base = mesh.vertices.len();
    let mut rules = Vec::new();
    let mut tets = Vec::new();
    match method {
        TetrisationMethod::FaceNormal => {
            for (fi, &[a, b, c]) in mesh.faces.iter().enumerate() {
                let g = base + rules.len();
                rules.push(GhostRule {
                    source: GhostSource::Face {
                        face: fi,
                        corners: [a, b, c],
                    },
                    ghost_index: g,
                });
                tets.push([g, a, b, c]);
            }
        }
        TetrisationMethod::EdgeNormal => {
            let mut has_shared = vec![false; mesh.faces.len()];
            for (&(lo, hi), uses) in &edge_incidence(&mesh.faces) {
                match classify(uses) {
                    EdgeClass::Boundary => continue,
                    EdgeClass::NonManifold => return Err(Error::AssumptionViolated(format!(
                        "edge ({lo}, {hi}) is not shared by exactly two oppositely oriented faces"
                    ))),
                    EdgeClass::Shared => {}
                }
                let (f1, f2) = if uses[0].forward {
                    (uses[0].face, uses[1].face)
                } else {
                    (uses[1].face, uses[0].face)
                };
                has_shared[f1] = true;
                has_shared[f2] = true;
                let v3 = third_vertex(&mesh.faces[f1], lo, hi);
                let v4 = third_vertex(&mesh.faces[f2], lo, hi);
                let g = base + rules.len();
                rules.push(GhostRule {
                    source: GhostSource::Edge {
                        edge: [lo, hi],
                        apexes: [v3, v4],
                    },
                    ghost_index: g,
                });
                tets.push([g, lo, hi, v3]);
                tets.push([g, lo, v4, hi]);
            }
            if let Some(fi) = has_shared.iter().position(|s| !s) {
                return Err(Error::AssumptionViolated(format!(
                    "face {fi} has no shared edge (lone triangle)"
                )));
            }
        }
        TetrisationMethod::VertexNormal => {
            check_manifold(mesh)?;
            let counts = vertex_face_counts(mesh);
            let mut incident: Vec<Vec<usize>> = vec![Vec::new(); base];
            for (fi, f) in mesh.faces.iter().enumerate() {
                for &v in f {
                    incident[v].push(fi);
                }
            }
            for (fi, f) in mesh.faces.iter().enumerate() {
                if f.iter().all(|&v| counts[v] < 2) {
                    return Err(Error::AssumptionViolated(format!(
                        "face {fi} has no shared vertex"
                    )));
                }
            }
            for v in 0..base {
                if counts[v] < 2 {
                    continue;
                }
                let fan: Vec<[usize; 3]> = incident[v].iter().map(|&fi| mesh.faces[fi]).collect();
                let g = base + rules.len();
                for &[a, b, c] in &fan {
                    tets.push([g, a, b, c]);
                }
                rules.push(GhostRule {
                    source: GhostSource::Vertex { vertex: v, fan },
                    ghost_index: g,
                });
            }
        }
    }

    let structure = TetStructure {
        base_vertex_count: base,
        ghost_rules: rules,
        tets,
        method,
    };
    // Ghost placement can still fold on the rest shape; surface that here.
    instantiate_ghosts(&structure, &mesh.vertices)?;
    Ok(structure)
}

fn third_vertex(face: &[usize; 3], a: usize, b: usize) -> usize {
    *face
        .iter()
        .find(|&&v| v != a && v != b)
        .expect("face contains the edge")
}

/// Every edge two-manifold and every vertex's incident faces forming one fan.
fn check_manifold(mesh: &TriangleMesh) -> Result<()> {
    for (&(lo, hi), uses) in &edge_incidence(&mesh.faces) {
        if classify(uses) == EdgeClass::NonManifold {
            return Err(Error::AssumptionViolated(format!(
                "mesh is not manifold at edge ({lo}, {hi})"
            )));
        }
    }
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); mesh.vertices.len()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        for &v in f {
            incident[v].push(fi);
        }
    }
    for (v, faces) in incident.iter().enumerate() {
        if faces.len() < 2 {
            continue;
        }
        // Flood fill across faces sharing an edge through v.
        let mut seen = vec![false; faces.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            let fi = &mesh.faces[faces[i]];
            for (j, &other) in faces.iter().enumerate() {
                if seen[j] {
                    continue;
                }
                let fo = &mesh.faces[other];
                let shares_edge = fi.iter().any(|&w| w != v && fo.contains(&w));
                if shares_edge {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::AssumptionViolated(format!(
                "mesh is not manifold at vertex {v}"
            )));
        }
    }
    Ok(())
}

/// Base positions followed by ghost positions evaluated on them.
pub fn instantiate_ghosts(structure: &TetStructure, base_positions: &[Vec3]) -> Result<Vec<Vec3>> {
    if base_positions.len() != structure.base_vertex_count {
        return Err(Error::InvalidInput(format!(
            "expected {} base positions, got {}",
            structure.base_vertex_count,
            base_positions.len()
        )));
    }
    let ghosts = structure
        .ghost_rules
        .par_iter()
        .enumerate()
        .map(|(i, rule)| rule.evaluate(i, base_positions))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(structure.extended_vertex_count());
    out.extend_from_slice(base_positions);
    out.extend(ghosts);
    Ok(out)
}

/// Homogeneous 4×4 frame per tetrahedron; columns are the vertex positions
/// with a trailing 1, in tuple order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrixSet {
    pub matrices: Vec<Matrix4<f64>>,
}

pub fn frame_matrix(positions: &[Vec3], tet: &[usize; 4]) -> Matrix4<f64> {
    let col = |v: usize| Vector4::new(positions[v].x, positions[v].y, positions[v].z, 1.0);
    Matrix4::from_columns(&[col(tet[0]), col(tet[1]), col(tet[2]), col(tet[3])])
}

pub fn frame_matrices(positions: &[Vec3], structure: &TetStructure) -> FrameMatrixSet {
    FrameMatrixSet {
        matrices: structure
            .tets
            .par_iter()
            .map(|t| frame_matrix(positions, t))
            .collect(),
    }
}

/// Inverted rest frames `G_i = P_i⁻¹` and their linear blocks (first three
/// columns), which map a tet's 3×4 position block to its linear transform.
#[derive(Debug, Clone, PartialEq)]
pub struct RestFactorization {
    pub inverses: Vec<Matrix4<f64>>,
    pub linear_blocks: Vec<Matrix4x3<f64>>,
}

pub fn rest_factorization(frames: &FrameMatrixSet, det_eps: f64) -> Result<RestFactorization> {
    let inverses = frames
        .matrices
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let det = p.determinant();
            if !(det.abs() > det_eps) {
                return Err(Error::DegenerateTet {
                    tet: i,
                    det: det.abs(),
                });
            }
            p.try_inverse().ok_or(Error::DegenerateTet {
                tet: i,
                det: det.abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let linear_blocks = inverses
        .iter()
        .map(|g| g.fixed_columns::<3>(0).into_owned())
        .collect();
    Ok(RestFactorization {
        inverses,
        linear_blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_stats;
    use crate::shapes;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    fn mesh(vertices: &[[f64; 3]], faces: &[[usize; 3]]) -> TriangleMesh {
        TriangleMesh::new(
            vertices
                .iter()
                .map(|v| Vec3::new(v[0], v[1], v[2]))
                .collect(),
            faces.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn normal_area_examples() {
        let (n, a) = triangle_normal_area(&Vec3::zeros(), &Vec3::x(), &Vec3::y(), 1e-12).unwrap();
        assert_eq!((n, a), (Vec3::z(), 0.5));
        let (n, a) = triangle_normal_area(
            &Vec3::zeros(),
            &(2.0 * Vec3::x()),
            &(2.0 * Vec3::y()),
            1e-12,
        )
        .unwrap();
        assert_eq!((n, a), (Vec3::z(), 2.0));
        let err = triangle_normal_area(&Vec3::zeros(), &Vec3::x(), &(2.0 * Vec3::x()), 1e-12);
        assert!(matches!(err, Err(Error::DegenerateTriangle { .. })));
    }

    #[test]
    fn face_normal_ghost_by_hand() {
        let m = mesh(
            &[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            &[[0, 1, 2]],
        );
        let s = tetrise(&m, TetrisationMethod::FaceNormal).unwrap();
        let ext = instantiate_ghosts(&s, &m.vertices).unwrap();
        // cross = (0,0,4), |cross| = 4: centroid + (0,0,4)/2.
        assert_relative_eq!(
            ext[3],
            Vec3::new(2.0 / 3.0, 2.0 / 3.0, 2.0),
            epsilon = 1e-15
        );
        assert_eq!(s.tets, vec![[3, 0, 1, 2]]);
    }

    #[test]
    fn edge_normal_ghost_by_hand() {
        let m = mesh(
            &[
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, -1.0, 0.0],
            ],
            &[[0, 1, 2], [0, 3, 1]],
        );
        let s = tetrise(&m, TetrisationMethod::EdgeNormal).unwrap();
        let ext = instantiate_ghosts(&s, &m.vertices).unwrap();
        assert_eq!(s.ghost_rules.len(), 1);
        assert_relative_eq!(ext[4], Vec3::new(0.5, 0.0, 1.0), epsilon = 1e-15);
        assert_eq!(s.tets, vec![[4, 0, 1, 2], [4, 0, 3, 1]]);
    }

    #[test]
    fn vertex_normal_on_regular_tetrahedron() {
        let m = shapes::regular_tetrahedron();
        let s = tetrise(&m, TetrisationMethod::VertexNormal).unwrap();
        assert_eq!(s.ghost_rules.len(), 4);
        assert_eq!(s.tets.len(), 12);
        // Ghost sits on the ray through the vertex at distance sqrt(3 · area).
        let ext = instantiate_ghosts(&s, &m.vertices).unwrap();
        let area = (8f64).sqrt().powi(2) * 3f64.sqrt() / 4.0;
        let expected = m.vertices[0] + (3.0 * area).sqrt() * m.vertices[0].normalize();
        assert_relative_eq!(ext[4], expected, epsilon = 1e-12);
    }

    fn count_law_fixtures() -> Vec<TriangleMesh> {
        let bar = shapes::box_bar(3.0, 1.0, 0.5, 6, 2, 1);
        vec![
            TriangleMesh::new(bar.vertices, bar.faces).unwrap(),
            shapes::icosphere(2, 1.0),
            shapes::grid_sheet(5, 4, 0.3),
            shapes::regular_tetrahedron(),
        ]
    }

    #[test]
    fn count_laws() {
        for m in count_law_fixtures() {
            let stats = mesh_stats(&m);
            let f = m.faces.len();
            let non_shared = m.vertices.len() - stats.shared_vertex_count;

            let face = tetrise(&m, TetrisationMethod::FaceNormal).unwrap();
            assert_eq!(face.tets.len(), f);
            assert_eq!(face.extended_vertex_count(), m.vertices.len() + f);

            let edge = tetrise(&m, TetrisationMethod::EdgeNormal).unwrap();
            assert_eq!(edge.tets.len(), 2 * stats.shared_edge_count);
            assert_eq!(edge.ghost_rules.len(), stats.shared_edge_count);

            let vertex = tetrise(&m, TetrisationMethod::VertexNormal).unwrap();
            assert_eq!(vertex.tets.len(), 3 * f - non_shared);
            assert_eq!(vertex.ghost_rules.len(), stats.shared_vertex_count);
        }
    }

    #[test]
    fn structure_invariants_hold() {
        for m in count_law_fixtures() {
            let tol = Tolerances::for_mesh(&m);
            for method in TetrisationMethod::ALL {
                let s = tetrise(&m, method).unwrap();
                for (k, r) in s.ghost_rules.iter().enumerate() {
                    assert_eq!(r.ghost_index, s.base_vertex_count + k);
                    assert_eq!(r.kind(), method);
                }
                // Every face is a cyclic sub-triple of the last three slots of some tet.
                for f in &m.faces {
                    let found = s.tets.iter().any(|t| {
                        (0..3).any(|r| [t[1 + r], t[1 + (r + 1) % 3], t[1 + (r + 2) % 3]] == *f)
                    });
                    assert!(found, "{method}: face {f:?} not covered");
                }
                let ext = instantiate_ghosts(&s, &m.vertices).unwrap();
                let frames = frame_matrices(&ext, &s);
                for p in &frames.matrices {
                    assert_eq!(p.row(3).iter().copied().collect::<Vec<_>>(), vec![1.0; 4]);
                    assert!(p.determinant().abs() > tol.det_eps);
                }
                let rf = rest_factorization(&frames, tol.det_eps).unwrap();
                for (p, g) in frames.matrices.iter().zip(&rf.inverses) {
                    assert!(((p * g) - Matrix4::identity()).abs().max() < 1e-10);
                }
                for gh in &rf.linear_blocks {
                    let ones = gh.row_sum();
                    assert!(ones.abs().max() < 1e-12, "{ones}");
                }
            }
        }
    }

    #[test]
    fn instantiation_is_rigid_equivariant() {
        let bar = shapes::box_bar(3.0, 1.0, 0.5, 6, 2, 1);
        let m = TriangleMesh::new(bar.vertices, bar.faces).unwrap();
        let diag = m.bbox_diagonal();
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let shift = Vec3::new(4.0, -2.0, 0.5);
        for method in TetrisationMethod::ALL {
            let s = tetrise(&m, method).unwrap();
            let rest = instantiate_ghosts(&s, &m.vertices).unwrap();
            assert_eq!(instantiate_ghosts(&s, &m.vertices).unwrap(), rest);

            let moved: Vec<Vec3> = m.vertices.iter().map(|p| rot * p + shift).collect();
            let ext = instantiate_ghosts(&s, &moved).unwrap();
            let err = ext
                .iter()
                .zip(&rest)
                .map(|(a, b)| (a - (rot * b + shift)).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-9 * diag, "{method}: {err}");

            let translated: Vec<Vec3> = m.vertices.iter().map(|p| p + shift).collect();
            let ext = instantiate_ghosts(&s, &translated).unwrap();
            let err = ext
                .iter()
                .zip(&rest)
                .map(|(a, b)| (a - (b + shift)).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-9 * diag, "{method}: {err}");
        }
    }

    #[test]
    fn unit_tet_frame() {
        let s = TetStructure {
            base_vertex_count: 4,
            ghost_rules: vec![],
            tets: vec![[0, 1, 2, 3]],
            method: TetrisationMethod::FaceNormal,
        };
        let pos = [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let f = frame_matrices(&pos, &s);
        let p = f.matrices[0];
        assert_eq!(p.column(0).into_owned(), Vector4::new(0.0, 0.0, 0.0, 1.0));
        assert_eq!(p.column(1).into_owned(), Vector4::new(1.0, 0.0, 0.0, 1.0));
        assert_eq!(p.column(3).into_owned(), Vector4::new(0.0, 0.0, 1.0, 1.0));
        assert_relative_eq!(p.determinant().abs(), 1.0, epsilon = 1e-15);
        let rf = rest_factorization(&f, 1e-12).unwrap();
        assert!(((p * rf.inverses[0]) - Matrix4::identity()).abs().max() < 1e-12);

        let flat = [
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let f = frame_matrices(&flat, &s);
        assert_eq!(f.matrices[0].determinant(), 0.0);
        assert!(matches!(
            rest_factorization(&f, 1e-12),
            Err(Error::DegenerateTet { tet: 0, .. })
        ));
    }

    #[test]
    fn assumption_violations() {
        // Single triangle: every edge is boundary, so it is a lone triangle.
        let tri = mesh(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            &[[0, 1, 2]],
        );
        assert!(matches!(
            tetrise(&tri, TetrisationMethod::EdgeNormal),
            Err(Error::AssumptionViolated(_))
        ));
        assert!(matches!(
            tetrise(&tri, TetrisationMethod::VertexNormal),
            Err(Error::AssumptionViolated(_))
        ));

        // Same orientation on the shared edge.
        let bad = mesh(
            &[
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, -1.0, 0.0],
            ],
            &[[0, 1, 2], [0, 1, 3]],
        );
        assert!(matches!(
            tetrise(&bad, TetrisationMethod::EdgeNormal),
            Err(Error::AssumptionViolated(_))
        ));
        assert!(matches!(
            tetrise(&bad, TetrisationMethod::VertexNormal),
            Err(Error::AssumptionViolated(_))
        ));

        // Two fans glued at one vertex (bowtie).
        let bowtie = mesh(
            &[
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [-1.0, 0.0, 0.0],
                [-1.0, -1.0, 0.0],
            ],
            &[[0, 1, 2], [0, 3, 4]],
        );
        assert!(matches!(
            tetrise(&bowtie, TetrisationMethod::VertexNormal),
            Err(Error::AssumptionViolated(_))
        ));

        let flat = mesh(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            &[[0, 1, 2]],
        );
        assert!(matches!(
            tetrise(&flat, TetrisationMethod::FaceNormal),
            Err(Error::DegenerateTriangle { face: Some(0) })
        ));
    }

    #[test]
    fn folded_pair_is_fold_degenerate() {
        let m = mesh(
            &[
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, -1.0, 0.0],
            ],
            &[[0, 1, 2], [0, 3, 1]],
        );
        let s = tetrise(&m, TetrisationMethod::EdgeNormal).unwrap();
        // Fold the second triangle flat onto the first: normals cancel.
        let mut folded = m.vertices.clone();
        folded[3] = Vec3::new(0.0, 1.0, 0.0);
        assert!(matches!(
            instantiate_ghosts(&s, &folded),
            Err(Error::FoldDegenerate { rule: 0, .. })
        ));
    }

    #[test]
    fn dump_lists_vertices_and_tets() {
        let m = shapes::regular_tetrahedron();
        let s = tetrise(&m, TetrisationMethod::FaceNormal).unwrap();
        let ext = instantiate_ghosts(&s, &m.vertices).unwrap();
        let text = s.dump(&ext);
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 8);
        assert_eq!(text.lines().filter(|l| l.starts_with("t ")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.ends_with(" g")).count(), 4);
    }

    #[test]
    fn method_parsing() {
        assert_eq!(
            "vertex".parse::<TetrisationMethod>().unwrap(),
            TetrisationMethod::VertexNormal
        );
        assert_eq!(
            "Face".parse::<TetrisationMethod>().unwrap(),
            TetrisationMethod::FaceNormal
        );
        assert!("volume".parse::<TetrisationMethod>().is_err());
    }
}
