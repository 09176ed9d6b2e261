//! Tetrisation of triangle meshes and as-rigid-as-possible shape blending.
//!
//! The pipeline has two halves:
//!
//! * **precompute**: a rest mesh is fattened into a tetrahedral structure by
//!   adding ghost vertices ([`tetrisation`]), the rest frames are inverted,
//!   and every target shape is turned into per-tetrahedron local transforms
//!   that are polar-decomposed and logged ([`algebra`]). The sparse Gram
//!   matrix of the stitching problem is factorized once ([`solver`]).
//! * **runtime**: user weights blend the logged transforms into one target
//!   matrix per tetrahedron, and the stitching energy (translation invariant
//!   `E_T` or rotation invariant `E_S`) is minimized to produce the output
//!   mesh ([`pipeline`]).

pub mod algebra;
pub mod error;
pub mod mesh;
pub mod pipeline;
pub mod shapes;
pub mod solver;
pub mod tetrisation;

pub use error::{Error, Result};
pub use mesh::{load_obj, mesh_stats, validate_correspondence, write_obj, MeshStats, TriangleMesh};
pub use pipeline::{
    blend, morph_sequence, precompute, BlendFunction, BlendModel, BlendRequest, Energy, WeightPath,
};
pub use solver::{EsOptions, SolveReport};
pub use tetrisation::{tetrise, TetStructure, TetrisationMethod};

/// 3D vector / position type used throughout the crate.
pub type Vec3 = nalgebra::Vector3<f64>;
