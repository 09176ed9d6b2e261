use std::path::PathBuf;

use crate::mesh::CorrespondenceReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("face at line {line} references vertex {index}, but only {count} vertices exist")]
    Index {
        line: usize,
        index: i64,
        count: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle{}", face.map(|f| format!(" (face {f})")).unwrap_or_default())]
    DegenerateTriangle { face: Option<usize> },

    #[error("tetrisation assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("normal sum vanishes for ghost rule {rule} (norm {norm:e})")]
    FoldDegenerate { rule: usize, norm: f64 },

    #[error("degenerate tetrahedron {tet} (|det| = {det:e})")]
    DegenerateTet { tet: usize, det: f64 },

    #[error("transform is not orientation preserving{} (det = {det:e})", location(*shape, *tet))]
    NotOrientationPreserving {
        shape: Option<usize>,
        tet: Option<usize>,
        det: f64,
    },

    #[error("matrix is not a rotation")]
    NotRotation,

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("sparse system is singular: {0}")]
    SingularSystem(String),

    #[error("shapes do not correspond: {} issue(s), first: {}", .0.issues.len(),
        .0.issues.first().map(|i| i.to_string()).unwrap_or_default())]
    Correspondence(CorrespondenceReport),

    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("model cache: {0}")]
    Cache(String),
}

fn location(shape: Option<usize>, tet: Option<usize>) -> String {
    match (shape, tet) {
        (Some(s), Some(t)) => format!(" (shape {s}, tet {t})"),
        (None, Some(t)) => format!(" (tet {t})"),
        (Some(s), None) => format!(" (shape {s})"),
        (None, None) => String::new(),
    }
}
