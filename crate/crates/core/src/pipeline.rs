//! Precompute and runtime halves of the blending pipeline.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    blend_local_c, blend_local_p, branch_adjust, polar_decompose, principal_log, sym_log,
    PolarPair, TetAdjacency, TransformLog,
};
use crate::error::{Error, Result};
use crate::mesh::{validate_correspondence, TriangleMesh};
use crate::solver::{
    assemble_context, local_transforms, solve_es, solve_et, EsOptions, SolveReport, SolverContext,
    TargetSet, ORIENTATION_EPS,
};
use crate::tetrisation::{
    frame_matrices, instantiate_ghosts, rest_factorization, tetrise, RestFactorization,
    TetStructure, TetrisationMethod, Tolerances,
};
use crate::Vec3;

/// Magic string at the head of a model cache file.
pub const CACHE_MAGIC: &str = "TBLD1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Energy {
    /// Translation invariant: `Σ ‖Âᵢ − Cᵢ‖²`.
    #[default]
    #[serde(rename = "ET")]
    Et,
    /// Rotation invariant: `Σ ‖S(Âᵢ) − S(Cᵢ)‖²`.
    #[serde(rename = "ES")]
    Es,
}

impl Energy {
    pub const ALL: [Energy; 2] = [Energy::Et, Energy::Es];

    pub fn as_str(self) -> &'static str {
        match self {
            Energy::Et => "ET",
            Energy::Es => "ES",
        }
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Energy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ET" | "E_T" => Ok(Energy::Et),
            "ES" | "E_S" => Ok(Energy::Es),
            _ => Err(Error::InvalidInput(format!(
                "unknown energy {s:?} (expected ET or ES)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum BlendFunction {
    /// Blend rotation and shear logarithms; never inverts a tet.
    #[default]
    C,
    /// Blend rotation logarithms and shear matrices linearly.
    P,
}

impl BlendFunction {
    pub const ALL: [BlendFunction; 2] = [BlendFunction::C, BlendFunction::P];

    pub fn as_str(self) -> &'static str {
        match self {
            BlendFunction::C => "C",
            BlendFunction::P => "P",
        }
    }
}

impl fmt::Display for BlendFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlendFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C" => Ok(BlendFunction::C),
            "P" => Ok(BlendFunction::P),
            _ => Err(Error::InvalidInput(format!(
                "unknown blend function {s:?} (expected C or P)"
            ))),
        }
    }
}

/// Per-shape, per-tet transform data extracted at precompute time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTransformSet {
    /// `logs[j][i]`: branch-adjusted rotation log and shear log of shape `j`, tet `i`.
    pub logs: Vec<Vec<TransformLog>>,
    /// `polar[j][i]`: polar factors of shape `j`, tet `i`.
    pub polar: Vec<Vec<PolarPair>>,
    /// Mean of the original vertices of each target shape.
    pub barycentres: Vec<Vec3>,
}

impl LocalTransformSet {
    pub fn shape_count(&self) -> usize {
        self.logs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendRequest {
    pub weights: Vec<f64>,
    #[serde(default)]
    pub energy: Energy,
    #[serde(default)]
    pub blend_fn: BlendFunction,
    #[serde(default)]
    pub es_options: EsOptions,
}

impl BlendRequest {
    pub fn new(weights: Vec<f64>, energy: Energy, blend_fn: BlendFunction) -> Self {
        Self {
            weights,
            energy,
            blend_fn,
            es_options: EsOptions::default(),
        }
    }
}

/// Everything needed to answer blend requests for one rest mesh and a fixed
/// set of target shapes. Immutable once built.
#[derive(Debug)]
pub struct BlendModel {
    rest: TriangleMesh,
    structure: TetStructure,
    rest_positions: Vec<Vec3>,
    rest_factorization: RestFactorization,
    context: SolverContext,
    transforms: LocalTransformSet,
    tet_weights: Option<Vec<f64>>,
    target_digest: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    magic: String,
    rest: TriangleMesh,
    structure: TetStructure,
    tet_weights: Option<Vec<f64>>,
    target_digest: u64,
    transforms: LocalTransformSet,
}

/// FNV-1a over the exact bits of positions and indices.
pub fn mesh_digest(meshes: &[TriangleMesh]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
        }
    };
    for m in meshes {
        eat(m.vertices.len() as u64);
        for p in &m.vertices {
            p.iter().for_each(|c| eat(c.to_bits()));
        }
        eat(m.faces.len() as u64);
        for f in &m.faces {
            f.iter().for_each(|&v| eat(v as u64));
        }
    }
    h
}

impl BlendModel {
    pub fn rest(&self) -> &TriangleMesh {
        &self.rest
    }

    pub fn structure(&self) -> &TetStructure {
        &self.structure
    }

    pub fn method(&self) -> TetrisationMethod {
        self.structure.method
    }

    /// Rest positions of the extended (ghost-augmented) vertex set.
    pub fn rest_positions(&self) -> &[Vec3] {
        &self.rest_positions
    }

    pub fn rest_factorization(&self) -> &RestFactorization {
        &self.rest_factorization
    }

    pub fn context(&self) -> &SolverContext {
        &self.context
    }

    pub fn transforms(&self) -> &LocalTransformSet {
        &self.transforms
    }

    pub fn tet_weights(&self) -> Option<&[f64]> {
        self.tet_weights.as_deref()
    }

    pub fn shape_count(&self) -> usize {
        self.transforms.shape_count()
    }

    pub fn tet_count(&self) -> usize {
        self.structure.tets.len()
    }

    /// [`mesh_digest`] of the targets the model was built from.
    pub fn target_digest(&self) -> u64 {
        self.target_digest
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CacheFile {
            magic: CACHE_MAGIC.to_string(),
            rest: self.rest.clone(),
            structure: self.structure.clone(),
            tet_weights: self.tet_weights.clone(),
            target_digest: self.target_digest,
            transforms: self.transforms.clone(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Cache(e.to_string()))
    }

    /// Rebuilds a model from [`BlendModel::to_json`] output; the rest frames
    /// and the factorization are recomputed.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CacheFile =
            serde_json::from_str(text).map_err(|e| Error::Cache(e.to_string()))?;
        if file.magic != CACHE_MAGIC {
            return Err(Error::Cache(format!("bad magic {:?}", file.magic)));
        }
        let rest = TriangleMesh::new(file.rest.vertices, file.rest.faces)?;
        let n = file.structure.tets.len();
        if file.structure.base_vertex_count != rest.vertex_count()
            || file.transforms.polar.len() != file.transforms.shape_count()
            || file.transforms.barycentres.len() != file.transforms.shape_count()
            || file.transforms.logs.iter().any(|l| l.len() != n)
            || file.transforms.polar.iter().any(|p| p.len() != n)
        {
            return Err(Error::Cache("inconsistent counts".into()));
        }
        if file
            .structure
            .tets
            .iter()
            .flatten()
            .any(|&v| v >= file.structure.extended_vertex_count())
        {
            return Err(Error::Cache("tet index out of range".into()));
        }
        let (rest_positions, rest_factorization) = rest_frames(&rest, &file.structure)?;
        let context = assemble_context(
            &rest_factorization,
            &file.structure,
            file.tet_weights.as_deref(),
        )?;
        Ok(Self {
            rest,
            structure: file.structure,
            rest_positions,
            rest_factorization,
            context,
            transforms: file.transforms,
            tet_weights: file.tet_weights,
            target_digest: file.target_digest,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

fn rest_frames(
    rest: &TriangleMesh,
    structure: &TetStructure,
) -> Result<(Vec<Vec3>, RestFactorization)> {
    let positions = instantiate_ghosts(structure, &rest.vertices)?;
    let factorization = rest_factorization(
        &frame_matrices(&positions, structure),
        Tolerances::for_mesh(rest).det_eps,
    )?;
    Ok((positions, factorization))
}

/// Tetrises `rest`, factorizes the stitching system and extracts the logged
/// local transforms of every target.
pub fn precompute(
    rest: &TriangleMesh,
    targets: &[TriangleMesh],
    method: TetrisationMethod,
    tet_weights: Option<&[f64]>,
) -> Result<BlendModel> {
    let report = validate_correspondence(rest, targets);
    if !report.is_ok() {
        return Err(Error::Correspondence(report));
    }
    let structure = tetrise(rest, method)?;
    let (rest_positions, rest_factorization) = rest_frames(rest, &structure)?;
    let adjacency = TetAdjacency::from_tets(&structure.tets, structure.extended_vertex_count());

    let mut logs = Vec::with_capacity(targets.len());
    let mut polar = Vec::with_capacity(targets.len());
    let mut barycentres = Vec::with_capacity(targets.len());
    for (j, target) in targets.iter().enumerate() {
        let positions = instantiate_ghosts(&structure, &target.vertices)?;
        let local = local_transforms(&positions, &rest_factorization, &structure);
        let pairs = local
            .par_iter()
            .enumerate()
            .map(|(i, a)| {
                polar_decompose(a, ORIENTATION_EPS).map_err(|_| Error::NotOrientationPreserving {
                    shape: Some(j + 1),
                    tet: Some(i),
                    det: a.determinant(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let shear_logs = pairs
            .par_iter()
            .map(|p| sym_log(&p.shear))
            .collect::<Result<Vec<_>>>()?;
        let principal: Vec<_> = pairs
            .par_iter()
            .map(|p| principal_log(&p.rotation))
            .collect();
        let rot_logs = branch_adjust(&adjacency, &principal);
        logs.push(
            rot_logs
                .into_iter()
                .zip(shear_logs)
                .map(|(rot_log, shear_log)| TransformLog { rot_log, shear_log })
                .collect(),
        );
        polar.push(pairs);
        barycentres.push(target.barycentre());
    }

    let context = assemble_context(&rest_factorization, &structure, tet_weights)?;
    Ok(BlendModel {
        rest: rest.clone(),
        structure,
        rest_positions,
        rest_factorization,
        context,
        transforms: LocalTransformSet {
            logs,
            polar,
            barycentres,
        },
        tet_weights: tet_weights.map(<[f64]>::to_vec),
        target_digest: mesh_digest(targets),
    })
}

fn check_weights(model: &BlendModel, weights: &[f64]) -> Result<()> {
    if weights.len() != model.shape_count() {
        return Err(Error::WeightCount {
            expected: model.shape_count(),
            got: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
        return Err(Error::InvalidInput(format!("weight {w} is not finite")));
    }
    Ok(())
}

/// Blended target matrix `Cᵢ` for every tet.
pub fn blend_targets(
    model: &BlendModel,
    weights: &[f64],
    blend_fn: BlendFunction,
) -> Result<Vec<Matrix3<f64>>> {
    check_weights(model, weights)?;
    let t = &model.transforms;
    Ok((0..model.tet_count())
        .into_par_iter()
        .map(|i| match blend_fn {
            BlendFunction::C => {
                let column: Vec<TransformLog> = t.logs.iter().map(|shape| shape[i]).collect();
                blend_local_c(weights, &column)
            }
            BlendFunction::P => {
                let column: Vec<PolarPair> = t.polar.iter().map(|shape| shape[i]).collect();
                blend_local_p(weights, &column)
            }
        })
        .collect())
}

/// `Σ wⱼ bⱼ + (1 − Σ wⱼ) b₀`.
pub fn barycentre_target(model: &BlendModel, weights: &[f64]) -> Vec3 {
    let total: f64 = weights.iter().sum();
    let mut b = model.rest.barycentre() * (1.0 - total);
    for (w, bj) in weights.iter().zip(&model.transforms.barycentres) {
        b += bj * *w;
    }
    b
}

/// Produces the blended mesh (original vertices only, rest connectivity).
pub fn blend(model: &BlendModel, request: &BlendRequest) -> Result<(TriangleMesh, SolveReport)> {
    let targets = TargetSet {
        targets: blend_targets(model, &request.weights, request.blend_fn)?,
        barycentre_target: barycentre_target(model, &request.weights),
    };
    if let Some(i) = targets.targets.iter().position(|c| !c.iter().all(|x| x.is_finite())) {
        return Err(Error::NumericalFailure(format!("blended transform of tet {i} is not finite")));
    }
    let report = match request.energy {
        Energy::Et => solve_et(
            &model.context,
            &model.rest_factorization,
            &model.structure,
            &targets,
        )?,
        Energy::Es => solve_es(
            &model.context,
            &model.rest_factorization,
            &model.structure,
            &targets,
            &request.es_options,
        )?,
    };
    let base = model.structure.base_vertex_count;
    if !report.positions.iter().all(|p| p.iter().all(|x| x.is_finite())) {
        return Err(Error::NumericalFailure("solution is not finite".into()));
    }
    let mesh = model
        .rest
        .with_vertices(report.positions[..base].to_vec())?;
    Ok((mesh, report))
}

/// Weight vectors visited by a morph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightPath {
    Segment {
        from: Vec<f64>,
        to: Vec<f64>,
    },
    /// Polyline through the given weight vectors, equal parameter per leg.
    Points(Vec<Vec<f64>>),
}

impl WeightPath {
    /// Weights at `t ∈ [0, 1]`.
    pub fn sample(&self, t: f64) -> Vec<f64> {
        let lerp =
            |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(x, y)| x + (y - x) * s).collect();
        match self {
            WeightPath::Segment { from, to } => lerp(from, to, t),
            WeightPath::Points(points) => {
                if points.len() == 1 {
                    return points[0].clone();
                }
                let legs = (points.len() - 1) as f64;
                let x = (t * legs).clamp(0.0, legs);
                let k = (x.floor() as usize).min(points.len() - 2);
                lerp(&points[k], &points[k + 1], x - k as f64)
            }
        }
    }

    fn points(&self) -> Vec<&Vec<f64>> {
        match self {
            WeightPath::Segment { from, to } => vec![from, to],
            WeightPath::Points(p) => p.iter().collect(),
        }
    }
}

/// Frames of a morph along `path`, endpoints inclusive.
pub fn morph_sequence(
    model: &BlendModel,
    frames: usize,
    path: &WeightPath,
    energy: Energy,
    blend_fn: BlendFunction,
    es_options: EsOptions,
) -> Result<Vec<TriangleMesh>> {
    if frames < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 frames, got {frames}"
        )));
    }
    let points = path.points();
    if points.is_empty() {
        return Err(Error::InvalidInput("empty weight path".into()));
    }
    for p in points {
        check_weights(model, p)?;
    }
    (0..frames)
        .map(|k| {
            let t = k as f64 / (frames - 1) as f64;
            let request = BlendRequest {
                weights: path.sample(t),
                energy,
                blend_fn,
                es_options,
            };
            blend(model, &request).map(|(mesh, _)| mesh)
        })
        .collect()
}
