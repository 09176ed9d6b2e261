//! Dense 3×3 transform algebra.
//!
//! Rotations are handled in axis-angle form (`ω = θ·n̂`), shears through the
//! eigendecomposition of a symmetric positive-definite matrix. The
//! "continuous" rotation logarithm picks, per tetrahedron, the `2π` branch
//! nearest to its parent in a spanning forest of the tet adjacency graph,
//! so that blended angles may exceed `π` consistently across a mesh.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `M = R·S` with `R ∈ SO(3)` and `S` symmetric positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPair {
    pub rotation: Matrix3<f64>,
    pub shear: Matrix3<f64>,
}

impl PolarPair {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            shear: Matrix3::identity(),
        }
    }

    pub fn product(&self) -> Matrix3<f64> {
        self.rotation * self.shear
    }
}

/// Logarithms of a polar pair: axis-angle rotation vector and symmetric
/// shear logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformLog {
    pub rot_log: Vector3<f64>,
    pub shear_log: Matrix3<f64>,
}

impl TransformLog {
    pub fn zero() -> Self {
        Self {
            rot_log: Vector3::zeros(),
            shear_log: Matrix3::zeros(),
        }
    }

    /// `exp(ω^)·exp(L)`.
    pub fn to_matrix(&self) -> Matrix3<f64> {
        rot_exp(&self.rot_log) * sym_exp(&self.shear_log)
    }
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Axial vector of the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    ) * 0.5
}

pub fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

fn spectral_map(eig: &SymmetricEigen<f64, nalgebra::U3>, f: impl Fn(f64) -> f64) -> Matrix3<f64> {
    let q = &eig.eigenvectors;
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(f));
    symmetrize(&(q * d * q.transpose()))
}

/// Polar decomposition of an orientation-preserving matrix.
///
/// `S = (MᵀM)^{1/2}` from the symmetric eigendecomposition of `MᵀM`;
/// `R = M·S⁻¹`, polished back onto SO(3) with Newton steps, after which `S`
/// is recomputed as the symmetric part of `RᵀM`.
pub fn polar_decompose(m: &Matrix3<f64>, det_eps: f64) -> Result<PolarPair> {
    let det = m.determinant();
    if !(det > det_eps) {
        return Err(Error::NotOrientationPreserving {
            shape: None,
            tet: None,
            det,
        });
    }
    let eig = SymmetricEigen::new(m.transpose() * m);
    let s_inv = spectral_map(&eig, |l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt());
    let mut r = m * s_inv;
    for _ in 0..3 {
        match r.try_inverse() {
            Some(inv) => r = (r + inv.transpose()) * 0.5,
            None => break,
        }
    }
    let shear = symmetrize(&(r.transpose() * m));
    Ok(PolarPair { rotation: r, shear })
}

/// Polar factors for any matrix: `R ∈ O(3)` and `S` positive semidefinite,
/// via SVD. `R` has determinant −1 when `M` contains a reflection.
pub fn polar_decompose_any(m: &Matrix3<f64>) -> PolarPair {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let rotation = u * vt;
    let shear = symmetrize(&(vt.transpose() * Matrix3::from_diagonal(&svd.singular_values) * vt));
    PolarPair { rotation, shear }
}

/// Shear factor `(MᵀM)^{1/2}` of any matrix.
pub fn shear_factor(m: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(m.transpose() * m);
    spectral_map(&eig, |l| l.max(0.0).sqrt())
}

/// Rodrigues' formula.
pub fn rot_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < 1e-8 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(w);
    Matrix3::identity() + k * a + k * k * b
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).abs().max() <= tol && r.determinant() > 0.0
}

/// Principal rotation logarithm, `|ω| ∈ [0, π]`.
///
/// At exactly `θ = π` the axis sign is fixed so that its first nonzero
/// component is positive.
pub fn rot_log_principal(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    if !is_rotation(r, 1e-6) {
        return Err(Error::NotRotation);
    }
    Ok(principal_log(r))
}

pub(crate) fn principal_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let v = vee(r); // sin θ · n
    let s = v.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);
    if s < 1e-8 && c > 0.0 {
        // θ/sin θ ≈ 1 + θ²/6
        return v * (1.0 + s * s / 6.0);
    }
    if c > -0.9 {
        return v * (theta / s);
    }
    // Near π the skew part carries little information; read the axis from
    // the symmetric part, (R + Rᵀ)/2 − cos θ·I = (1 − cos θ)·n nᵀ.
    let b = symmetrize(r) - Matrix3::identity() * c;
    let k = (0..3)
        .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
        .unwrap_or(0);
    let mut n = b.column(k).into_owned().normalize();
    if s > 1e-10 {
        if n.dot(&v) < 0.0 {
            n = -n;
        }
    } else {
        n = canonical_axis_sign(n);
    }
    n * theta
}

fn canonical_axis_sign(n: Vector3<f64>) -> Vector3<f64> {
    match n.iter().find(|c| c.abs() > 1e-12) {
        Some(&c) if c < 0.0 => -n,
        _ => n,
    }
}

fn check_symmetric(m: &Matrix3<f64>) -> Result<()> {
    let scale = m.abs().max().max(1.0);
    if (m - m.transpose()).abs().max() > 1e-9 * scale {
        return Err(Error::NotSpd);
    }
    Ok(())
}

/// Logarithm of a symmetric positive-definite matrix.
pub fn sym_log(s: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    check_symmetric(s)?;
    let eig = SymmetricEigen::new(symmetrize(s));
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-12)) {
        return Err(Error::NotSpd);
    }
    Ok(spectral_map(&eig, f64::ln))
}

/// Exponential of a symmetric matrix (the input is symmetrized first).
pub fn sym_exp(l: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(symmetrize(l));
    spectral_map(&eig, f64::exp)
}

/// Tetrahedron adjacency ("share at least two vertices") and a BFS spanning
/// forest rooted at the lowest-index tet of each component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TetAdjacency {
    pub neighbours: Vec<Vec<usize>>,
    pub parent: Vec<Option<usize>>,
    /// BFS visiting order; every tet appears after its parent.
    pub order: Vec<usize>,
}

impl TetAdjacency {
    pub fn from_tets(tets: &[[usize; 4]], vertex_count: usize) -> Self {
        let mut by_vertex: Vec<Vec<usize>> = vec![Vec::new(); vertex_count];
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                by_vertex[v].push(t);
            }
        }
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); tets.len()];
        let mut shared = vec![0u8; tets.len()];
        let mut touched = Vec::new();
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                for &o in &by_vertex[v] {
                    if o != t {
                        if shared[o] == 0 {
                            touched.push(o);
                        }
                        shared[o] += 1;
                    }
                }
            }
            touched.sort_unstable();
            for &o in &touched {
                if shared[o] >= 2 {
                    neighbours[t].push(o);
                }
                shared[o] = 0;
            }
            touched.clear();
        }

        let mut parent = vec![None; tets.len()];
        let mut visited = vec![false; tets.len()];
        let mut order = Vec::with_capacity(tets.len());
        let mut queue = VecDeque::new();
        for root in 0..tets.len() {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            queue.push_back(root);
            while let Some(t) = queue.pop_front() {
                order.push(t);
                for &o in &neighbours[t] {
                    if !visited[o] {
                        visited[o] = true;
                        parent[o] = Some(t);
                        queue.push_back(o);
                    }
                }
            }
        }
        Self {
            neighbours,
            parent,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

/// Branch multiples searched around the principal angle.
const BRANCH_RANGE: std::ops::RangeInclusive<i32> = -3..=3;

/// Representative of `principal`'s rotation closest to `reference`, among
/// `(θ + 2πk)·n̂` for `k ∈ [−3, 3]`. Ties go to the shorter vector.
pub fn nearest_branch(principal: &Vector3<f64>, reference: &Vector3<f64>) -> Vector3<f64> {
    let theta = principal.norm();
    let mut best = *principal;
    let mut best_d = (principal - reference).norm_squared();
    let mut consider = |c: Vector3<f64>| {
        let d = (c - reference).norm_squared();
        let tie = (d - best_d).abs() <= 1e-12 * best_d.max(1.0);
        if (d < best_d && !tie) || (tie && c.norm() < best.norm()) {
            best = c;
            best_d = d;
        }
    };
    if theta < 1e-9 {
        let r = reference.norm();
        if r > 1e-9 {
            let u = reference / r;
            for k in BRANCH_RANGE {
                consider(principal + u * (TAU * k as f64));
            }
        }
        return best;
    }
    let n = principal / theta;
    let axes: &[Vector3<f64>] = if theta > PI - 1e-9 { &[n, -n] } else { &[n] };
    for axis in axes {
        for k in BRANCH_RANGE {
            consider(axis * (theta + TAU * k as f64));
        }
    }
    best
}

/// Branch-tracked rotation logs over the spanning forest of `adjacency`.
pub fn continuous_rot_log(
    adjacency: &TetAdjacency,
    rotations: &[Matrix3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    if rotations.len() != adjacency.len() {
        return Err(Error::InvalidInput(format!(
            "{} rotations for {} tetrahedra",
            rotations.len(),
            adjacency.len()
        )));
    }
    let principal = rotations
        .iter()
        .map(rot_log_principal)
        .collect::<Result<Vec<_>>>()?;
    Ok(branch_adjust(adjacency, &principal))
}

pub(crate) fn branch_adjust(
    adjacency: &TetAdjacency,
    principal: &[Vector3<f64>],
) -> Vec<Vector3<f64>> {
    let mut out = principal.to_vec();
    for &t in &adjacency.order {
        if let Some(p) = adjacency.parent[t] {
            out[t] = nearest_branch(&principal[t], &out[p]);
        }
    }
    out
}

/// `exp(Σ wₖ log Rₖ) · (Σ wₖ Sₖ + (1 − Σ wₖ) I)` with principal logs.
/// The result can lose orientation for extrapolating weights.
pub fn blend_local_p(weights: &[f64], decomps: &[PolarPair]) -> Matrix3<f64> {
    let mut rot = Vector3::zeros();
    let mut shear = Matrix3::zeros();
    let mut total = 0.0;
    for (w, d) in weights.iter().zip(decomps) {
        rot += principal_log(&d.rotation) * *w;
        shear += d.shear * *w;
        total += w;
    }
    rot_exp(&rot) * (shear + Matrix3::identity() * (1.0 - total))
}

/// `exp(Σ wₖ ωₖ) · exp(Σ wₖ Lₖ)`; determinant is positive for all weights.
pub fn blend_local_c(weights: &[f64], logs: &[TransformLog]) -> Matrix3<f64> {
    let mut rot = Vector3::zeros();
    let mut shear = Matrix3::zeros();
    for (w, l) in weights.iter().zip(logs) {
        rot += l.rot_log * *w;
        shear += l.shear_log * *w;
    }
    rot_exp(&rot) * sym_exp(&shear)
}
