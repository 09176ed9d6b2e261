//! Python bindings: meshes, models and blending.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use tetriblend_core::{
    blend, load_obj, morph_sequence, precompute, shapes, tetrise, write_obj, BlendFunction, BlendModel,
    BlendRequest, Energy, Error, EsOptions, TetrisationMethod, TriangleMesh, Vec3, WeightPath,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Parse { .. }
        | Error::Index { .. }
        | Error::InvalidMesh(_)
        | Error::Correspondence(_)
        | Error::WeightCount { .. }
        | Error::InvalidInput(_)
        | Error::Cache(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(text: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    text.parse().map_err(|e: T::Err| PyValueError::new_err(e.to_string()))
}

/// Triangle mesh with `vertices` as `[x, y, z]` lists and `faces` as index triples.
#[pyclass(name = "Mesh", module = "tetriblend", frozen, from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: TriangleMesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> PyResult<Self> {
        let vertices = vertices.into_iter().map(Vec3::from).collect();
        Ok(Self { inner: TriangleMesh::new(vertices, faces).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_obj(path).map_err(to_py)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_obj(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices.iter().map(|v| [v.x, v.y, v.z]).collect()
    }

    #[getter]
    fn faces(&self) -> Vec<[usize; 3]> {
        self.inner.faces.clone()
    }

    fn bbox_diagonal(&self) -> f64 {
        self.inner.bbox_diagonal()
    }

    fn __len__(&self) -> usize {
        self.inner.vertex_count()
    }

    fn __repr__(&self) -> String {
        format!("Mesh({} vertices, {} faces)", self.inner.vertex_count(), self.inner.face_count())
    }
}

/// Precomputed blending model for one rest shape and its targets.
#[pyclass(name = "Model", module = "tetriblend", frozen)]
struct PyModel {
    inner: BlendModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (rest, targets, method = "vertex", tet_weights = None))]
    fn new(rest: &PyMesh, targets: Vec<PyMesh>, method: &str, tet_weights: Option<Vec<f64>>) -> PyResult<Self> {
        let targets: Vec<TriangleMesh> = targets.into_iter().map(|t| t.inner).collect();
        let method: TetrisationMethod = parse(method)?;
        let inner = precompute(&rest.inner, &targets, method, tet_weights.as_deref()).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: BlendModel::load(path).map_err(to_py)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method().as_str()
    }

    #[getter]
    fn shape_count(&self) -> usize {
        self.inner.shape_count()
    }

    #[getter]
    fn tet_count(&self) -> usize {
        self.inner.tet_count()
    }

    /// Returns `(mesh, report)`; the report is a dict of solver diagnostics.
    #[pyo3(signature = (weights, energy = "ET", blend_fn = "C", iters = 100, tol = 1e-6))]
    fn blend<'py>(
        &self,
        py: Python<'py>,
        weights: Vec<f64>,
        energy: &str,
        blend_fn: &str,
        iters: usize,
        tol: f64,
    ) -> PyResult<(PyMesh, Bound<'py, PyDict>)> {
        let request = BlendRequest {
            weights,
            energy: parse(energy)?,
            blend_fn: parse(blend_fn)?,
            es_options: EsOptions { max_iterations: iters, tol },
        };
        let (mesh, report) = py.detach(|| blend(&self.inner, &request)).map_err(to_py)?;
        let dict = PyDict::new(py);
        dict.set_item("energy", report.final_energy)?;
        dict.set_item("iterations", report.iterations)?;
        dict.set_item("converged", report.converged)?;
        dict.set_item("residual", report.residual)?;
        dict.set_item("reflection_events", report.reflection_events)?;
        dict.set_item("energy_trace", report.energy_trace)?;
        Ok((PyMesh { inner: mesh }, dict))
    }

    /// `frames` meshes along the straight weight path `start → end`.
    #[pyo3(signature = (start, end, frames, energy = "ET", blend_fn = "C"))]
    fn morph(
        &self,
        py: Python<'_>,
        start: Vec<f64>,
        end: Vec<f64>,
        frames: usize,
        energy: &str,
        blend_fn: &str,
    ) -> PyResult<Vec<PyMesh>> {
        let (energy, blend_fn): (Energy, BlendFunction) = (parse(energy)?, parse(blend_fn)?);
        let path = WeightPath::Segment { from: start, to: end };
        let meshes = py
            .detach(|| morph_sequence(&self.inner, frames, &path, energy, blend_fn, EsOptions::default()))
            .map_err(to_py)?;
        Ok(meshes.into_iter().map(|inner| PyMesh { inner }).collect())
    }
}

/// Tetrahedra of `mesh` as index quadruples; indices past the vertex count are ghosts.
#[pyfunction]
#[pyo3(signature = (mesh, method = "vertex"))]
fn tetrahedra(mesh: &PyMesh, method: &str) -> PyResult<Vec<[usize; 4]>> {
    Ok(tetrise(&mesh.inner, parse(method)?).map_err(to_py)?.tets)
}

#[pyfunction]
#[pyo3(signature = (length, width, height, nx, ny, nz))]
fn box_bar(length: f64, width: f64, height: f64, nx: usize, ny: usize, nz: usize) -> PyResult<PyMesh> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(PyValueError::new_err("segment counts must be positive"));
    }
    Ok(PyMesh { inner: shapes::box_bar(length, width, height, nx, ny, nz) })
}

/// Twist about the x axis growing linearly from `x0` to `x1`.
#[pyfunction]
fn twist_about_x(mesh: &PyMesh, angle: f64, x0: f64, x1: f64) -> PyMesh {
    PyMesh { inner: shapes::twist_about_x(&mesh.inner, angle, x0, x1) }
}

#[pyfunction]
fn bend_about_y(mesh: &PyMesh, angle: f64, length: f64) -> PyMesh {
    PyMesh { inner: shapes::bend_about_y(&mesh.inner, angle, length) }
}

#[pymodule]
fn tetriblend(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(tetrahedra, m)?)?;
    m.add_function(wrap_pyfunction!(box_bar, m)?)?;
    m.add_function(wrap_pyfunction!(twist_about_x, m)?)?;
    m.add_function(wrap_pyfunction!(bend_about_y, m)?)?;
    Ok(())
}
