//! The single blend model a process works with, plus display metadata.

use std::path::{Path, PathBuf};

use serde::Serialize;
use tetriblend_core::pipeline::mesh_digest;
use tetriblend_core::{load_obj, precompute, BlendModel, Error, Result, TetrisationMethod, TriangleMesh};

pub struct Session {
    pub model: BlendModel,
    /// Rest first, then targets in order.
    pub shapes: Vec<TriangleMesh>,
    pub shape_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionInfo {
    pub m: usize,
    pub vertex_count: usize,
    pub face_count: usize,
    pub tet_count: usize,
    pub method: TetrisationMethod,
    pub shape_names: Vec<String>,
}

pub fn shape_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Whitespace- or comma-separated non-negative numbers, one per tet.
pub fn load_tet_weights(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| Error::InvalidInput(format!("tet weight {t:?}: {e}"))))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SessionSpec {
    pub rest: PathBuf,
    pub targets: Vec<PathBuf>,
    pub method: TetrisationMethod,
    pub tet_weights: Option<PathBuf>,
    /// Model cache file; reused when it matches the inputs, written otherwise.
    pub cache: Option<PathBuf>,
}

impl Session {
    pub fn from_meshes(
        rest: TriangleMesh,
        targets: Vec<TriangleMesh>,
        names: Vec<String>,
        method: TetrisationMethod,
        tet_weights: Option<&[f64]>,
    ) -> Result<Self> {
        let model = precompute(&rest, &targets, method, tet_weights)?;
        Ok(Self::assemble(model, rest, targets, names))
    }

    fn assemble(model: BlendModel, rest: TriangleMesh, targets: Vec<TriangleMesh>, names: Vec<String>) -> Self {
        let mut shapes = vec![rest];
        shapes.extend(targets);
        Self { model, shapes, shape_names: names }
    }

    pub fn load(spec: &SessionSpec) -> Result<Self> {
        let rest = load_obj(&spec.rest)?;
        let targets = spec.targets.iter().map(load_obj).collect::<Result<Vec<_>>>()?;
        let names = std::iter::once(&spec.rest).chain(&spec.targets).map(|p| shape_name(p)).collect();
        let tet_weights = spec.tet_weights.as_deref().map(load_tet_weights).transpose()?;

        if let Some(cache) = spec.cache.as_deref().filter(|p| p.exists()) {
            match BlendModel::load(cache) {
                Ok(model) if cache_matches(&model, &rest, &targets, spec.method, tet_weights.as_deref()) => {
                    log::info!("using model cache {}", cache.display());
                    return Ok(Self::assemble(model, rest, targets, names));
                }
                Ok(_) => log::warn!("model cache {} does not match the inputs; rebuilding", cache.display()),
                Err(e) => log::warn!("ignoring model cache {}: {e}", cache.display()),
            }
        }
        let session = Self::from_meshes(rest, targets, names, spec.method, tet_weights.as_deref())?;
        if let Some(cache) = &spec.cache {
            session.model.save(cache)?;
        }
        Ok(session)
    }

    pub fn info(&self) -> SessionInfo {
        SessionInfo {
            m: self.model.shape_count(),
            vertex_count: self.model.rest().vertex_count(),
            face_count: self.model.rest().face_count(),
            tet_count: self.model.tet_count(),
            method: self.model.method(),
            shape_names: self.shape_names.clone(),
        }
    }
}

fn cache_matches(
    model: &BlendModel,
    rest: &TriangleMesh,
    targets: &[TriangleMesh],
    method: TetrisationMethod,
    tet_weights: Option<&[f64]>,
) -> bool {
    model.rest() == rest
        && model.method() == method
        && model.shape_count() == targets.len()
        && model.tet_weights() == tet_weights
        && model.target_digest() == mesh_digest(targets)
}
