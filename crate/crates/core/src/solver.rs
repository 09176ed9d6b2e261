//! Stitching: least-squares fit of vertex positions to per-tet targets.
//!
//! With `X` the 3×N̄ matrix of extended vertex positions and `Sᵢ` the
//! selection of tet `i`'s four vertices, the linear part of tet `i` is
//! `Âᵢ = X·Sᵢ·Ĝᵢ`. Minimizing `E_T = Σ Wᵢ‖Âᵢ − Cᵢ‖²` leads to
//!
//! ```text
//! gram · Xᵀ = Σ Wᵢ Sᵢ Ĝᵢ Cᵢᵀ,      gram = Σ Wᵢ (SᵢĜᵢ)(SᵢĜᵢ)ᵀ
//! ```
//!
//! `gram` annihilates the all-ones vector (translations), so one vertex is
//! pinned at the origin, the reduced system is Cholesky-factorized once, and
//! solutions are translated afterwards to a prescribed barycentre.

use std::fmt;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{Matrix3, Matrix4x3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{polar_decompose, polar_decompose_any, shear_factor};
use crate::error::{Error, Result};
use crate::tetrisation::{RestFactorization, TetStructure};
use crate::Vec3;

/// Determinant below which a local transform counts as a reflection.
pub const ORIENTATION_EPS: f64 = 1e-12;

/// Gram matrix of the stitching problem and its reusable factorization.
pub struct SolverContext {
    gram: SparseColMat<usize, f64>,
    factor: Llt<usize, f64>,
    pinned_vertex: usize,
    tet_weights: Vec<f64>,
    vertex_count: usize,
}

impl fmt::Debug for SolverContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolverContext")
            .field("vertex_count", &self.vertex_count)
            .field("nnz", &self.gram.compute_nnz())
            .field("pinned_vertex", &self.pinned_vertex)
            .finish_non_exhaustive()
    }
}

impl SolverContext {
    pub fn pinned_vertex(&self) -> usize {
        self.pinned_vertex
    }

    pub fn tet_weights(&self) -> &[f64] {
        &self.tet_weights
    }

    pub fn extended_vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn gram(&self) -> &SparseColMat<usize, f64> {
        &self.gram
    }

    /// `gram · X` for an N̄×3 position block.
    pub fn gram_times(&self, x: &[Vec3]) -> Vec<Vec3> {
        let g = self.gram.as_ref();
        let (col_ptr, row_idx, val) = (g.symbolic().col_ptr(), g.symbolic().row_idx(), g.val());
        let mut out = vec![Vec3::zeros(); self.vertex_count];
        for (j, xj) in x.iter().enumerate() {
            for k in col_ptr[j]..col_ptr[j + 1] {
                out[row_idx[k]] += xj * val[k];
            }
        }
        out
    }

    /// Dense copy of the Gram matrix, for inspection of small systems.
    pub fn gram_dense(&self) -> nalgebra::DMatrix<f64> {
        let g = self.gram.as_ref();
        let (col_ptr, row_idx, val) = (g.symbolic().col_ptr(), g.symbolic().row_idx(), g.val());
        let mut d = nalgebra::DMatrix::zeros(self.vertex_count, self.vertex_count);
        for j in 0..self.vertex_count {
            for k in col_ptr[j]..col_ptr[j + 1] {
                d[(row_idx[k], j)] += val[k];
            }
        }
        d
    }

    /// Largest absolute row sum of the Gram matrix.
    pub fn gram_inf_norm(&self) -> f64 {
        let g = self.gram.as_ref();
        let (col_ptr, row_idx, val) = (g.symbolic().col_ptr(), g.symbolic().row_idx(), g.val());
        let mut rows = vec![0.0f64; self.vertex_count];
        for j in 0..self.vertex_count {
            for k in col_ptr[j]..col_ptr[j + 1] {
                rows[row_idx[k]] += val[k].abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }
}

/// Blended per-tet targets and where to place the output.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub targets: Vec<Matrix3<f64>>,
    /// Mean position of the original (non-ghost) vertices in the output.
    pub barycentre_target: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Extended vertex positions (ghosts included).
    pub positions: Vec<Vec3>,
    pub final_energy: f64,
    pub iterations: usize,
    /// `E_S` after every global step (empty for `E_T`).
    pub energy_trace: Vec<f64>,
    pub converged: bool,
    /// Relative residual `‖gram·X − B‖ / ‖B‖` of the last linear solve.
    pub residual: f64,
    /// Local transforms met with a non-positive determinant during `E_S`
    /// iterations (handled with an `O(3)` polar factor).
    pub reflection_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsOptions {
    pub max_iterations: usize,
    /// Relative change of `E_S` below which iteration stops.
    pub tol: f64,
}

impl Default for EsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tol: 1e-6,
        }
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} tet weights for {n} tetrahedra",
            weights.len()
        )));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "tet weight {i} is {}",
            weights[i]
        )));
    }
    Ok(())
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Assembles and factorizes the Gram matrix; `tet_weights` default to 1.
pub fn assemble_context(
    rest: &RestFactorization,
    structure: &TetStructure,
    tet_weights: Option<&[f64]>,
) -> Result<SolverContext> {
    let n_tets = structure.tets.len();
    let weights = match tet_weights {
        Some(w) => {
            check_weights(w, n_tets)?;
            w.to_vec()
        }
        None => vec![1.0; n_tets],
    };
    if rest.linear_blocks.len() != n_tets {
        return Err(Error::InvalidInput(
            "rest factorization does not match the structure".into(),
        ));
    }
    let n = structure.extended_vertex_count();
    if n < 2 {
        return Err(Error::SingularSystem("fewer than two vertices".into()));
    }

    // Connectivity over vertices through positively weighted tets.
    let mut parent: Vec<usize> = (0..n).collect();
    for (tet, &w) in structure.tets.iter().zip(&weights) {
        if w > 0.0 {
            let r0 = find(&mut parent, tet[0]);
            for &v in &tet[1..] {
                let r = find(&mut parent, v);
                parent[r] = r0;
            }
        }
    }
    let mut roots: Vec<usize> = (0..n).map(|v| find(&mut parent, v)).collect();
    roots.sort_unstable();
    roots.dedup();
    if roots.len() > 1 {
        return Err(Error::SingularSystem(format!(
            "tetrahedra form {} disconnected components",
            roots.len()
        )));
    }

    let pinned = 0usize;
    let reduce = |v: usize| if v > pinned { v - 1 } else { v };
    let mut full = Vec::with_capacity(16 * n_tets);
    let mut reduced = Vec::with_capacity(16 * n_tets);
    for ((tet, g), &w) in structure.tets.iter().zip(&rest.linear_blocks).zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let k = g * g.transpose() * w;
        for a in 0..4 {
            for b in 0..4 {
                let (va, vb) = (tet[a], tet[b]);
                full.push(Triplet::new(va, vb, k[(a, b)]));
                if va != pinned && vb != pinned {
                    reduced.push(Triplet::new(reduce(va), reduce(vb), k[(a, b)]));
                }
            }
        }
    }
    let gram = SparseColMat::try_new_from_triplets(n, n, &full)
        .map_err(|e| Error::SingularSystem(format!("assembly failed: {e:?}")))?;
    let reduced = SparseColMat::try_new_from_triplets(n - 1, n - 1, &reduced)
        .map_err(|e| Error::SingularSystem(format!("assembly failed: {e:?}")))?;
    let factor = reduced
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::SingularSystem(format!("Cholesky factorization failed: {e:?}")))?;
    Ok(SolverContext {
        gram,
        factor,
        pinned_vertex: pinned,
        tet_weights: weights,
        vertex_count: n,
    })
}

/// `P Ĝ` evaluated through edge vectors: the rows of `Ĝ` sum to zero, so
/// `Σ pₐ ĝₐ = Σ_{a>0} (pₐ − p₀) ĝₐ`, which keeps a global offset out of the
/// rounding.
fn linear_part(positions: &[Vec3], tet: &[usize; 4], g: &Matrix4x3<f64>) -> Matrix3<f64> {
    let p0 = positions[tet[0]];
    let mut a = Matrix3::zeros();
    for k in 1..4 {
        a += (positions[tet[k]] - p0) * g.row(k);
    }
    a
}

/// `Âᵢ` for every tetrahedron.
pub fn local_transforms(
    positions: &[Vec3],
    rest: &RestFactorization,
    structure: &TetStructure,
) -> Vec<Matrix3<f64>> {
    structure
        .tets
        .par_iter()
        .zip(&rest.linear_blocks)
        .map(|(tet, g)| linear_part(positions, tet, g))
        .collect()
}

fn weight_at(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

/// `Σ Wᵢ ‖Âᵢ − Cᵢ‖²_F`; weights default to 1.
pub fn energy_et(
    positions: &[Vec3],
    rest: &RestFactorization,
    structure: &TetStructure,
    targets: &TargetSet,
    tet_weights: Option<&[f64]>,
) -> f64 {
    let terms: Vec<f64> = local_transforms(positions, rest, structure)
        .par_iter()
        .zip(&targets.targets)
        .map(|(a, c)| (a - c).norm_squared())
        .collect();
    terms
        .iter()
        .enumerate()
        .map(|(i, t)| weight_at(tet_weights, i) * t)
        .sum()
}

/// `Σ Wᵢ ‖S(Âᵢ) − S(Cᵢ)‖²_F` with `S` the polar shear factor.
pub fn energy_es(
    positions: &[Vec3],
    rest: &RestFactorization,
    structure: &TetStructure,
    targets: &TargetSet,
    tet_weights: Option<&[f64]>,
) -> f64 {
    let shears: Vec<Matrix3<f64>> = targets.targets.par_iter().map(shear_factor).collect();
    es_with_shears(positions, rest, structure, &shears, tet_weights)
}

fn es_with_shears(
    positions: &[Vec3],
    rest: &RestFactorization,
    structure: &TetStructure,
    target_shears: &[Matrix3<f64>],
    tet_weights: Option<&[f64]>,
) -> f64 {
    let terms: Vec<f64> = local_transforms(positions, rest, structure)
        .par_iter()
        .zip(target_shears)
        .map(|(a, s)| (shear_factor(a) - s).norm_squared())
        .collect();
    terms
        .iter()
        .enumerate()
        .map(|(i, t)| weight_at(tet_weights, i) * t)
        .sum()
}

fn check_inputs(
    ctx: &SolverContext,
    rest: &RestFactorization,
    structure: &TetStructure,
    targets: &TargetSet,
) -> Result<()> {
    let n = structure.tets.len();
    if targets.targets.len() != n || rest.linear_blocks.len() != n || ctx.tet_weights.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} targets / {} rest blocks / {} weights for {n} tetrahedra",
            targets.targets.len(),
            rest.linear_blocks.len(),
            ctx.tet_weights.len()
        )));
    }
    if ctx.vertex_count != structure.extended_vertex_count() {
        return Err(Error::InvalidInput(
            "solver context built for a different structure".into(),
        ));
    }
    Ok(())
}

/// Minimizer of `E_T` with the original-vertex barycentre fixed; returns the
/// positions and the relative residual of the normal equations.
fn solve_positions(
    ctx: &SolverContext,
    rest: &RestFactorization,
    structure: &TetStructure,
    targets: &[Matrix3<f64>],
    barycentre: &Vec3,
) -> (Vec<Vec3>, f64) {
    let n = ctx.vertex_count;
    let contributions: Vec<_> = rest
        .linear_blocks
        .par_iter()
        .zip(targets)
        .zip(&ctx.tet_weights)
        .map(|((g, c), &w)| g * c.transpose() * w)
        .collect();
    let mut rhs = vec![Vec3::zeros(); n];
    for (tet, m) in structure.tets.iter().zip(&contributions) {
        for a in 0..4 {
            rhs[tet[a]] += m.row(a).transpose();
        }
    }

    let pinned = ctx.pinned_vertex;
    let mut b = Mat::<f64>::zeros(n - 1, 3);
    for (v, r) in rhs.iter().enumerate() {
        if v == pinned {
            continue;
        }
        let row = if v > pinned { v - 1 } else { v };
        for k in 0..3 {
            b[(row, k)] = r[k];
        }
    }
    ctx.factor.solve_in_place(b.as_mut());
    let mut positions = vec![Vec3::zeros(); n];
    for (v, p) in positions.iter_mut().enumerate() {
        if v != pinned {
            let row = if v > pinned { v - 1 } else { v };
            *p = Vec3::new(b[(row, 0)], b[(row, 1)], b[(row, 2)]);
        }
    }

    let gx = ctx.gram_times(&positions);
    let num: f64 = gx
        .iter()
        .zip(&rhs)
        .map(|(a, r)| (a - r).norm_squared())
        .sum::<f64>()
        .sqrt();
    let den: f64 = rhs.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
    let residual = if den > 0.0 { num / den } else { num };

    let base = structure.base_vertex_count;
    let shift = barycentre - crate::mesh::barycentre(&positions[..base]);
    for p in &mut positions {
        *p += shift;
    }
    (positions, residual)
}

/// Minimizes `E_T` through the precomputed factorization.
pub fn solve_et(
    ctx: &SolverContext,
    rest: &RestFactorization,
    structure: &TetStructure,
    targets: &TargetSet,
) -> Result<SolveReport> {
    check_inputs(ctx, rest, structure, targets)?;
    let (positions, residual) = solve_positions(
        ctx,
        rest,
        structure,
        &targets.targets,
        &targets.barycentre_target,
    );
    let final_energy = energy_et(&positions, rest, structure, targets, Some(&ctx.tet_weights));
    Ok(SolveReport {
        positions,
        final_energy,
        iterations: 1,
        energy_trace: Vec::new(),
        converged: true,
        residual,
        reflection_events: 0,
    })
}

/// Minimizes `E_S` by alternating polar decompositions of the current local
/// transforms with `E_T` solves against `Rᵢ·S(Cᵢ)`, starting from the `E_T`
/// minimizer for `Cᵢ`.
///
/// A global step that would raise `E_S` is shortened by backtracking towards
/// the current iterate; if no shortened step helps, iteration stops.
pub fn solve_es(
    ctx: &SolverContext,
    rest: &RestFactorization,
    structure: &TetStructure,
    targets: &TargetSet,
    opts: &EsOptions,
) -> Result<SolveReport> {
    check_inputs(ctx, rest, structure, targets)?;
    let weights = Some(ctx.tet_weights.as_slice());
    let target_shears: Vec<Matrix3<f64>> = targets.targets.par_iter().map(shear_factor).collect();
    let energy = |x: &[Vec3]| es_with_shears(x, rest, structure, &target_shears, weights);

    let (mut positions, mut residual) = solve_positions(
        ctx,
        rest,
        structure,
        &targets.targets,
        &targets.barycentre_target,
    );
    let mut current = energy(&positions);
    // Energy changes this small are rounding noise in `‖S(Â) − S(C)‖²`.
    let roundoff_floor = 1e-24 * ctx.tet_weights.iter().sum::<f64>().max(1.0);
    let mut trace = vec![current];
    let mut iterations = 0;
    let mut converged = false;
    let mut reflection_events = 0;

    while iterations < opts.max_iterations {
        let local = local_transforms(&positions, rest, structure);
        let rotations: Vec<(Matrix3<f64>, bool)> = local
            .par_iter()
            .map(|a| match polar_decompose(a, ORIENTATION_EPS) {
                Ok(p) => (p.rotation, false),
                Err(_) => (polar_decompose_any(a).rotation, true),
            })
            .collect();
        reflection_events += rotations.iter().filter(|(_, flipped)| *flipped).count();
        let step_targets: Vec<Matrix3<f64>> = rotations
            .iter()
            .zip(&target_shears)
            .map(|((r, _), s)| r * s)
            .collect();
        let (candidate, res) = solve_positions(
            ctx,
            rest,
            structure,
            &step_targets,
            &targets.barycentre_target,
        );
        let mut next_energy = energy(&candidate);
        let mut next = candidate;

        if next_energy > current + roundoff_floor {
            let mut accepted = None;
            let mut alpha = 0.5;
            while alpha >= 1.0 / 64.0 {
                let trial: Vec<Vec3> = positions
                    .iter()
                    .zip(&next)
                    .map(|(p, q)| p + (q - p) * alpha)
                    .collect();
                let e = energy(&trial);
                if e <= current {
                    accepted = Some((trial, e));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((trial, e)) => {
                    next = trial;
                    next_energy = e;
                }
                None => {
                    log::debug!("E_S step rejected at iteration {}", iterations + 1);
                    converged = (next_energy - current) / current.max(1e-30) < opts.tol;
                    break;
                }
            }
        }

        iterations += 1;
        let delta = (current - next_energy).abs();
        positions = next;
        residual = res;
        current = next_energy;
        trace.push(current);
        if delta / trace[trace.len() - 2].max(1e-30) < opts.tol || delta <= roundoff_floor {
            converged = true;
            break;
        }
    }

    Ok(SolveReport {
        positions,
        final_energy: current,
        iterations,
        energy_trace: trace,
        converged,
        residual,
        reflection_events,
    })
}
