//! Procedural meshes and deformations for fixtures and benchmarks.

use std::collections::HashMap;

use nalgebra::{Matrix3, Rotation3};

use crate::mesh::TriangleMesh;
use crate::Vec3;

/// Closed box surface spanning `[0, length]` in x and centred on the x axis,
/// subdivided into `nx × ny × nz` cells. Vertices are numbered x-major, so
/// low indices sit at the `x = 0` end. Faces are oriented outward.
pub fn box_bar(
    length: f64,
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
    nz: usize,
) -> TriangleMesh {
    assert!(nx > 0 && ny > 0 && nz > 0);
    let dims = [nx, ny, nz];
    let on_surface = |c: [usize; 3]| (0..3).any(|a| c[a] == 0 || c[a] == dims[a]);

    let mut index = HashMap::new();
    let mut vertices = Vec::new();
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                let c = [i, j, k];
                if on_surface(c) {
                    index.insert(c, vertices.len());
                    vertices.push(Vec3::new(
                        length * i as f64 / nx as f64,
                        width * (j as f64 / ny as f64 - 0.5),
                        height * (k as f64 / nz as f64 - 0.5),
                    ));
                }
            }
        }
    }

    let mut faces = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for &at_max in &[false, true] {
            for a in 0..dims[u] {
                for b in 0..dims[v] {
                    let corner = |du: usize, dv: usize| {
                        let mut c = [0; 3];
                        c[axis] = if at_max { dims[axis] } else { 0 };
                        c[u] = a + du;
                        c[v] = b + dv;
                        index[&c]
                    };
                    let (p00, p10, p11, p01) =
                        (corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1));
                    // u × v = +axis, so the natural winding faces the max side.
                    if at_max {
                        faces.push([p00, p10, p11]);
                        faces.push([p00, p11, p01]);
                    } else {
                        faces.push([p00, p11, p10]);
                        faces.push([p00, p01, p11]);
                    }
                }
            }
        }
    }
    TriangleMesh { vertices, faces }
}

/// Subdivided icosahedron projected onto a sphere; `20 · 4^subdivisions` faces.
pub fn icosphere(subdivisions: usize, radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
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
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for p in &mut vertices {
        *p *= radius;
    }
    TriangleMesh { vertices, faces }
}

/// Flat open sheet in the xy plane with `nx × ny` quads, normals along +z.
pub fn grid_sheet(nx: usize, ny: usize, spacing: f64) -> TriangleMesh {
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh { vertices, faces }
}

/// Closed regular tetrahedron surface, outward oriented.
pub fn regular_tetrahedron() -> TriangleMesh {
    TriangleMesh {
        vertices: vec![
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ],
        faces: vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    }
}

/// Applies `f` to every vertex, keeping connectivity.
pub fn deform(mesh: &TriangleMesh, f: impl Fn(&Vec3) -> Vec3) -> TriangleMesh {
    TriangleMesh {
        vertices: mesh.vertices.iter().map(f).collect(),
        faces: mesh.faces.clone(),
    }
}

/// Rotates cross-sections about the x axis by an angle growing linearly from
/// 0 at `x = x0` to `total_angle` at `x = x1`.
pub fn twist_about_x(mesh: &TriangleMesh, total_angle: f64, x0: f64, x1: f64) -> TriangleMesh {
    deform(mesh, |p| {
        let t = ((p.x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        Rotation3::from_axis_angle(&Vec3::x_axis(), total_angle * t) * p
    })
}

/// Bends a bar lying along `[0, length]` in x into a circular arc of the
/// given total angle in the xz plane (positive angles curl towards +z).
pub fn bend_about_y(mesh: &TriangleMesh, total_angle: f64, length: f64) -> TriangleMesh {
    if total_angle == 0.0 {
        return mesh.clone();
    }
    let radius = length / total_angle;
    deform(mesh, |p| {
        let phi = p.x / radius;
        let r = radius - p.z;
        Vec3::new(r * phi.sin(), p.y, radius - r * phi.cos())
    })
}

/// `p ↦ linear · p + translation`.
pub fn affine(mesh: &TriangleMesh, linear: &Matrix3<f64>, translation: &Vec3) -> TriangleMesh {
    deform(mesh, |p| linear * p + translation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_stats;

    #[test]
    fn box_bar_is_closed_and_outward() {
        let bar = box_bar(10.0, 1.0, 1.0, 20, 3, 3);
        assert_eq!(bar.faces.len(), 516);
        let m = TriangleMesh::new(bar.vertices.clone(), bar.faces.clone()).unwrap();
        let s = mesh_stats(&m);
        assert_eq!((s.boundary_edge_count, s.nonmanifold_edge_count), (0, 0));
        // Euler characteristic of a sphere.
        let v = m.vertices.len() as i64;
        let e = s.shared_edge_count as i64;
        assert_eq!(v - e + m.faces.len() as i64, 2);
        // Divergence theorem: signed volume equals the box volume.
        let vol: f64 = m
            .faces
            .iter()
            .map(|f| m.vertices[f[0]].dot(&m.vertices[f[1]].cross(&m.vertices[f[2]])) / 6.0)
            .sum();
        assert!((vol - 10.0).abs() < 1e-9, "volume {vol}");
        assert_eq!(m.vertices[0].x, 0.0);
    }

    #[test]
    fn icosphere_counts() {
        let s = icosphere(4, 1.0);
        assert_eq!(s.faces.len(), 5120);
        assert_eq!(s.vertices.len(), 2562);
        let stats = mesh_stats(&s);
        assert_eq!(stats.boundary_edge_count, 0);
        assert_eq!(stats.nonmanifold_edge_count, 0);
    }

    #[test]
    fn bend_keeps_origin_section() {
        let bar = box_bar(4.0, 1.0, 1.0, 8, 2, 2);
        let bent = bend_about_y(&bar, std::f64::consts::FRAC_PI_2, 4.0);
        for (a, b) in bar.vertices.iter().zip(&bent.vertices) {
            if a.x == 0.0 {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
