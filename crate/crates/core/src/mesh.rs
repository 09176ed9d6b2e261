//! Triangle mesh model, Wavefront OBJ I/O and combinatorial validation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Vertex positions plus oriented triangles (0-based vertex indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, checking index range, distinct corners and that every
    /// vertex is used by some face.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        let mut used = vec![false; n];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::InvalidMesh(format!(
                        "face {fi} references vertex {v}, mesh has {n} vertices"
                    )));
                }
                used[v] = true;
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} repeats a vertex: {f:?}"
                )));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!(
                "vertex {v} is not referenced by any face"
            )));
        }
        Ok(Self { vertices, faces })
    }

    /// Drops vertices no face refers to, keeping the relative order of the
    /// survivors. Returns the number of removed vertices.
    pub fn prune_unreferenced(&mut self) -> usize {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &v in f {
                used[v] = true;
            }
        }
        let removed = used.iter().filter(|u| !**u).count();
        if removed == 0 {
            return 0;
        }
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut kept = Vec::with_capacity(self.vertices.len() - removed);
        for (i, p) in self.vertices.iter().enumerate() {
            if used[i] {
                remap[i] = kept.len();
                kept.push(*p);
            }
        }
        self.vertices = kept;
        for f in &mut self.faces {
            for v in f.iter_mut() {
                *v = remap[*v];
            }
        }
        removed
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        bounding_box(&self.vertices)
    }

    /// Length of the bounding box diagonal.
    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Mean vertex position.
    pub fn barycentre(&self) -> Vec3 {
        barycentre(&self.vertices)
    }

    /// Same connectivity, new positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
        })
    }
}

pub(crate) fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    if points.is_empty() {
        (Vec3::zeros(), Vec3::zeros())
    } else {
        (lo, hi)
    }
}

pub(crate) fn barycentre(points: &[Vec3]) -> Vec3 {
    if points.is_empty() {
        return Vec3::zeros();
    }
    points.iter().sum::<Vec3>() / points.len() as f64
}

/// Reads a Wavefront OBJ file. Only `v` and `f` records are interpreted.
pub fn load_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut mesh = parse_obj(BufReader::new(file))?;
    let removed = mesh.prune_unreferenced();
    if removed > 0 {
        log::warn!("{}: pruned {removed} unreferenced vertices", path.display());
    }
    TriangleMesh::new(mesh.vertices, mesh.faces)
}

/// Parses OBJ text. Polygons are fan-triangulated from their first corner;
/// texture and normal sub-indices are ignored. Unreferenced vertices are
/// kept; see [`TriangleMesh::prune_unreferenced`].
pub fn parse_obj<R: Read>(reader: BufReader<R>) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    // (line, raw 0-based index) for each face corner, resolved once all
    // vertices are known.
    let mut raw_faces: Vec<(usize, [i64; 3])> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.split('#').next().unwrap_or("");
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coords = [0.0; 3];
                for c in coords.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: "vertex record needs three coordinates".into(),
                    })?;
                    *c = tok.parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno,
                        message: format!("bad coordinate {tok:?}: {e}"),
                    })?;
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad face index {tok:?}"),
                    })?;
                    let resolved = match idx {
                        0 => {
                            return Err(Error::Parse {
                                line: lineno,
                                message: "face index 0 is not valid in OBJ".into(),
                            })
                        }
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    corners.push(resolved);
                }
                if corners.len() < 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("face has {} corners, need at least 3", corners.len()),
                    });
                }
                for k in 1..corners.len() - 1 {
                    raw_faces.push((lineno, [corners[0], corners[k], corners[k + 1]]));
                }
            }
            _ => {}
        }
    }

    let count = vertices.len();
    let mut faces = Vec::with_capacity(raw_faces.len());
    for (line, raw) in raw_faces {
        let mut face = [0usize; 3];
        for (slot, &r) in face.iter_mut().zip(&raw) {
            if r < 0 || r as usize >= count {
                return Err(Error::Index {
                    line,
                    index: r + 1,
                    count,
                });
            }
            *slot = r as usize;
        }
        if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
            return Err(Error::Parse {
                line,
                message: format!("face repeats a vertex: {raw:?}"),
            });
        }
        faces.push(face);
    }
    Ok(TriangleMesh { vertices, faces })
}

/// Writes `v` then `f` records with shortest round-trip float formatting.
pub fn write_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    write_obj_to(mesh, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_obj_to<W: Write>(mesh: &TriangleMesh, out: &mut W) -> std::io::Result<()> {
    for p in &mesh.vertices {
        writeln!(out, "v {} {} {}", p.x, p.y, p.z)?;
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IssueKind {
    VertexCountMismatch {
        expected: usize,
        found: usize,
    },
    FaceCountMismatch {
        expected: usize,
        found: usize,
    },
    /// Face `face` differs from the rest shape's face at the same position.
    FaceMismatch {
        face: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrespondenceIssue {
    /// 1-based target index (0 is the rest shape).
    pub shape: usize,
    pub kind: IssueKind,
}

impl fmt::Display for CorrespondenceIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            IssueKind::VertexCountMismatch { expected, found } => {
                write!(
                    f,
                    "shape {}: {found} vertices, rest has {expected}",
                    self.shape
                )
            }
            IssueKind::FaceCountMismatch { expected, found } => {
                write!(
                    f,
                    "shape {}: {found} faces, rest has {expected}",
                    self.shape
                )
            }
            IssueKind::FaceMismatch { face } => {
                write!(f, "shape {}: face {face} differs from rest", self.shape)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub shape_count: usize,
    pub vertex_count: usize,
    pub face_count: usize,
    pub issues: Vec<CorrespondenceIssue>,
}

impl CorrespondenceReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Reports every target whose vertex count or face list differs from the
/// rest shape. Nothing is thrown; an empty issue list means blendable.
pub fn validate_correspondence(
    rest: &TriangleMesh,
    targets: &[TriangleMesh],
) -> CorrespondenceReport {
    let mut issues = Vec::new();
    for (j, t) in targets.iter().enumerate() {
        let shape = j + 1;
        if t.vertices.len() != rest.vertices.len() {
            issues.push(CorrespondenceIssue {
                shape,
                kind: IssueKind::VertexCountMismatch {
                    expected: rest.vertices.len(),
                    found: t.vertices.len(),
                },
            });
        }
        if t.faces.len() != rest.faces.len() {
            issues.push(CorrespondenceIssue {
                shape,
                kind: IssueKind::FaceCountMismatch {
                    expected: rest.faces.len(),
                    found: t.faces.len(),
                },
            });
        }
        for (fi, (a, b)) in rest.faces.iter().zip(&t.faces).enumerate() {
            if a != b {
                issues.push(CorrespondenceIssue {
                    shape,
                    kind: IssueKind::FaceMismatch { face: fi },
                });
            }
        }
    }
    CorrespondenceReport {
        shape_count: targets.len() + 1,
        vertex_count: rest.vertices.len(),
        face_count: rest.faces.len(),
        issues,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshStats {
    /// Unoriented edges in exactly two faces with opposite orientations.
    pub shared_edge_count: usize,
    pub boundary_edge_count: usize,
    /// Vertices adjacent to at least two faces.
    pub shared_vertex_count: usize,
    pub nonmanifold_edge_count: usize,
}

/// Faces incident to an unoriented edge `(lo, hi)`; `forward` is true when
/// the face traverses the edge as `lo -> hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct EdgeUse {
    pub face: usize,
    pub forward: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EdgeClass {
    Shared,
    Boundary,
    NonManifold,
}

pub(crate) fn classify(uses: &[EdgeUse]) -> EdgeClass {
    match uses {
        [_] => EdgeClass::Boundary,
        [a, b] if a.forward != b.forward => EdgeClass::Shared,
        _ => EdgeClass::NonManifold,
    }
}

/// Edge incidence keyed by sorted vertex pair; sorted map so iteration order
/// is canonical.
pub(crate) fn edge_incidence(faces: &[[usize; 3]]) -> BTreeMap<(usize, usize), Vec<EdgeUse>> {
    let mut map: BTreeMap<(usize, usize), Vec<EdgeUse>> = BTreeMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            map.entry(key).or_default().push(EdgeUse {
                face: fi,
                forward: a < b,
            });
        }
    }
    map
}

pub(crate) fn vertex_face_counts(mesh: &TriangleMesh) -> Vec<usize> {
    let mut counts = vec![0usize; mesh.vertices.len()];
    for f in &mesh.faces {
        for &v in f {
            counts[v] += 1;
        }
    }
    counts
}

pub fn mesh_stats(mesh: &TriangleMesh) -> MeshStats {
    let mut stats = MeshStats {
        shared_edge_count: 0,
        boundary_edge_count: 0,
        shared_vertex_count: 0,
        nonmanifold_edge_count: 0,
    };
    for uses in edge_incidence(&mesh.faces).values() {
        match classify(uses) {
            EdgeClass::Shared => stats.shared_edge_count += 1,
            EdgeClass::Boundary => stats.boundary_edge_count += 1,
            EdgeClass::NonManifold => stats.nonmanifold_edge_count += 1,
        }
    }
    stats.shared_vertex_count = vertex_face_counts(mesh).iter().filter(|&&c| c >= 2).count();
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<TriangleMesh> {
        parse_obj(BufReader::new(Cursor::new(text.as_bytes().to_vec())))
    }

    fn tetra() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn parses_single_triangle() {
        let m = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn fan_triangulates_quads() {
        let m = parse("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn ignores_sub_indices_and_other_records() {
        let text = "# comment\nmtllib x.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\n\
                    usemtl m\ns off\nf 1/1/1 2/2/1 3//1 # trailing\n";
        let m = parse(text).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn negative_indices_are_relative() {
        let m = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn out_of_range_index_is_index_error() {
        let err = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Index {
                    line: 4,
                    index: 5,
                    count: 3
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn malformed_records_report_line() {
        let err = parse("v 0 0 0\nv 1 zero 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("v 0 0 0\nv 1 0 0\nf 1 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 0 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn load_prunes_unreferenced_vertices_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        std::fs::write(
            &path,
            "v 9 9 9\nv 0 0 0\nv 1 0 0\nv 5 5 5\nv 0 1 0\nf 2 3 5\n",
        )
        .unwrap();
        let m = load_obj(&path).unwrap();
        assert_eq!(m.vertices, vec![Vec3::zeros(), Vec3::x(), Vec3::y()]);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.obj");
        let mut m = tetra();
        m.vertices[1] = Vec3::new(0.1 + 0.2, -1.0 / 3.0, 1e-300);
        m.vertices[2] = Vec3::new(std::f64::consts::PI, 6.02214076e23, -0.0);
        write_obj(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 4);
        assert!(!text.contains('\r'));
        let back = load_obj(&path).unwrap();
        assert_eq!(back.faces, m.faces);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
    }

    #[test]
    fn single_triangle_writes_three_v_and_one_f() {
        let m = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let mut buf = Vec::new();
        write_obj_to(&m, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"
        );
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = write_obj(&tetra(), "/nonexistent-dir/sub/out.obj").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn correspondence_checks() {
        let rest = tetra();
        let mut moved = rest.clone();
        moved.vertices[0].x += 0.5;
        assert!(validate_correspondence(&rest, &[moved.clone()]).is_ok());
        assert!(validate_correspondence(&rest, &[rest.clone()]).is_ok());

        let mut swapped = rest.clone();
        swapped.faces[2] = [
            swapped.faces[2][1],
            swapped.faces[2][0],
            swapped.faces[2][2],
        ];
        let report = validate_correspondence(&rest, &[moved.clone(), swapped]);
        assert_eq!(
            report.issues,
            vec![CorrespondenceIssue {
                shape: 2,
                kind: IssueKind::FaceMismatch { face: 2 }
            }]
        );

        let mut extra = rest.clone();
        extra.vertices.push(Vec3::new(3.0, 3.0, 3.0));
        let report = validate_correspondence(&rest, &[extra]);
        assert_eq!(
            report.issues,
            vec![CorrespondenceIssue {
                shape: 1,
                kind: IssueKind::VertexCountMismatch {
                    expected: 4,
                    found: 5
                }
            }]
        );
    }

    /// Brute force: enumerate all vertex pairs and count the faces holding
    /// each one in either direction.
    fn brute_stats(mesh: &TriangleMesh) -> MeshStats {
        let n = mesh.vertices.len();
        let mut s = MeshStats {
            shared_edge_count: 0,
            boundary_edge_count: 0,
            shared_vertex_count: 0,
            nonmanifold_edge_count: 0,
        };
        let has =
            |f: &[usize; 3], a: usize, b: usize| (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b);
        for a in 0..n {
            for b in a + 1..n {
                let fwd = mesh.faces.iter().filter(|f| has(f, a, b)).count();
                let bwd = mesh.faces.iter().filter(|f| has(f, b, a)).count();
                match (fwd, bwd) {
                    (0, 0) => {}
                    (1, 0) | (0, 1) => s.boundary_edge_count += 1,
                    (1, 1) => s.shared_edge_count += 1,
                    _ => s.nonmanifold_edge_count += 1,
                }
            }
            if mesh.faces.iter().filter(|f| f.contains(&a)).count() >= 2 {
                s.shared_vertex_count += 1;
            }
        }
        s
    }

    #[test]
    fn stats_closed_tetrahedron() {
        let m = tetra();
        let s = mesh_stats(&m);
        assert_eq!(s, brute_stats(&m));
        assert_eq!(
            (
                s.shared_edge_count,
                s.boundary_edge_count,
                s.shared_vertex_count
            ),
            (6, 0, 4)
        );
    }

    #[test]
    fn stats_single_triangle_and_same_orientation_pair() {
        let tri = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let s = mesh_stats(&tri);
        assert_eq!(
            (
                s.shared_edge_count,
                s.boundary_edge_count,
                s.nonmanifold_edge_count
            ),
            (0, 3, 0)
        );
        assert_eq!(s.shared_vertex_count, 0);

        // Both faces traverse 1 -> 2.
        let pair = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nf 1 2 3\nf 1 2 4\n").unwrap();
        let s = mesh_stats(&pair);
        assert_eq!(s.nonmanifold_edge_count, 1);
        assert_eq!(s, brute_stats(&pair));
    }

    #[test]
    fn stats_match_brute_force_on_generated_meshes() {
        for m in [
            crate::shapes::grid_sheet(4, 3, 1.0),
            crate::shapes::icosphere(1, 1.0),
        ] {
            let s = mesh_stats(&m);
            assert_eq!(s, brute_stats(&m));
            assert_eq!(
                s.shared_edge_count + s.boundary_edge_count + s.nonmanifold_edge_count,
                edge_incidence(&m.faces).len()
            );
        }
        let sphere = crate::shapes::icosphere(2, 1.0);
        let s = mesh_stats(&sphere);
        assert_eq!(s.boundary_edge_count, 0);
        assert_eq!(2 * s.shared_edge_count, 3 * sphere.faces.len());
    }
}
